use crate::raster::{GridSpec, Raster};

/// 4-connected component labelling of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub grid: GridSpec,
    /// Row-major labels; 0 is "not in any component". Labels are numbered
    /// from 1 in raster-scan order of each component's first pixel.
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the pixel count of label `l`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_pixels(&self) -> usize {
        self.sizes.iter().sum()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller provisional label as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Label maximal 4-connected sets of `target` pixels (two-pass union-find).
/// Nodata and every other class get label 0.
pub fn connected_components(classes: &Raster<u8>, target: u8) -> Components {
    let (w, h) = (classes.width(), classes.height());
    let mut prov = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let v = classes.data[i];
            if v != target || classes.is_nodata(v) {
                continue;
            }
            let up = if r > 0 { prov[i - w] } else { 0 };
            let left = if c > 0 { prov[i - 1] } else { 0 };
            prov[i] = match (up, left) {
                (0, 0) => {
                    let l = parent.len() as u32;
                    parent.push(l);
                    l
                }
                (u, 0) => u,
                (0, l) => l,
                (u, l) => {
                    union(&mut parent, u, l);
                    u.min(l)
                }
            };
        }
    }
    // Final labels in order of first appearance during the scan.
    let mut remap = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        if prov[i] == 0 {
            continue;
        }
        let root = find(&mut parent, prov[i]) as usize;
        if remap[root] == 0 {
            sizes.push(0);
            remap[root] = sizes.len() as u32;
        }
        let l = remap[root];
        labels[i] = l;
        sizes[l as usize - 1] += 1;
    }
    Components {
        grid: classes.grid,
        labels,
        sizes,
    }
}

/// Drop components smaller than `min_pixels`; survivors are renumbered
/// 1.. keeping their relative order.
pub fn filter_min_area(c: &Components, min_pixels: usize) -> Components {
    let mut remap = vec![0u32; c.sizes.len() + 1];
    let mut sizes = Vec::new();
    for (i, &s) in c.sizes.iter().enumerate() {
        if s >= min_pixels {
            sizes.push(s);
            remap[i + 1] = sizes.len() as u32;
        }
    }
    Components {
        grid: c.grid,
        labels: c.labels.iter().map(|&l| remap[l as usize]).collect(),
        sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(rows: &[&str]) -> Raster<u8> {
        let h = rows.len();
        let w = rows[0].len();
        let g = GridSpec::from_origin(0.0, h as f64, 1.0, w, h).unwrap();
        let data = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| if b == b'#' { 1 } else { 0 }))
            .collect();
        Raster::new(g, data, Some(255)).unwrap()
    }

    #[test]
    fn plus_shape_is_one_component() {
        let c = connected_components(&raster(&[".#.", "###", ".#."]), 1);
        assert_eq!(c.sizes, vec![5]);
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let c = connected_components(&raster(&["#.", ".#"]), 1);
        assert_eq!(c.sizes, vec![1, 1]);
        assert_eq!(c.labels, vec![1, 0, 0, 2]);
    }

    #[test]
    fn u_shape_merges_provisional_labels() {
        let c = connected_components(&raster(&["#.#", "#.#", "###"]), 1);
        assert_eq!(c.sizes, vec![7]);
        assert!(c.labels.iter().all(|&l| l <= 1));
    }

    #[test]
    fn min_area_filter() {
        let c = connected_components(&raster(&["###.#", ".....", "##..#", "##..#"]), 1);
        assert_eq!(c.sizes, vec![3, 1, 4, 2]);
        let f = filter_min_area(&c, 4);
        assert_eq!(f.sizes, vec![4]);
        assert_eq!(f.total_pixels(), 4);
        let empty = filter_min_area(&connected_components(&raster(&["..."]), 1), 4);
        assert_eq!(empty.count(), 0);
    }

    #[test]
    fn nodata_is_not_a_component() {
        let mut r = raster(&["##"]);
        r.nodata = Some(1);
        assert_eq!(connected_components(&r, 1).count(), 0);
    }
}
