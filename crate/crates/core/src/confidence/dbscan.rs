use std::collections::{HashMap, VecDeque};

use crate::geom::{buffered_hull, Point, Polygon};

pub const NOISE: i32 = -1;
pub const DBSCAN_EPS_DEG: f64 = 0.1;
pub const DBSCAN_MIN_SAMPLES: usize = 3;
pub const HULL_BUFFER_DEG: f64 = 0.025;
const BUFFER_SEGMENTS: usize = 16;

/// Uniform grid of `eps`-sized buckets for fixed-radius neighbour queries.
struct GridIndex<'a> {
    points: &'a [Point],
    eps: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [Point], eps: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, eps)).or_default().push(i);
        }
        GridIndex { points, eps, buckets }
    }

    fn key(p: &Point, eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// Indices within distance `eps` of point `i`, itself included, ascending.
    fn neighbours(&self, i: usize) -> Vec<usize> {
        let p = self.points[i];
        let (kx, ky) = Self::key(&p, self.eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    out.extend(b.iter().copied().filter(|&j| within(p, self.points[j], self.eps)));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn within(a: Point, b: Point, eps: f64) -> bool {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy <= eps * eps
}

/// Density clustering in planar degree space. A point is core when at least
/// `min_samples` points, itself included, lie within `eps`. Clusters are
/// numbered from 0 in order of their first core point; border points join
/// the first cluster that reaches them; the rest are [`NOISE`].
pub fn dbscan(points: &[Point], eps: f64, min_samples: usize) -> Vec<i32> {
    let index = GridIndex::new(points, eps);
    let mut labels = vec![None::<i32>; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if labels[i].is_some() {
            continue;
        }
        let nb = index.neighbours(i);
        if nb.len() < min_samples {
            labels[i] = Some(NOISE);
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(NOISE) => labels[j] = Some(cluster),
                None => {
                    labels[j] = Some(cluster);
                    let nj = index.neighbours(j);
                    if nj.len() >= min_samples {
                        queue.extend(nj);
                    }
                }
                Some(_) => {}
            }
        }
    }
    labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect()
}

/// Buffered convex hulls of ground-truth centroids for one country.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageHull {
    pub country: String,
    pub hulls: Vec<Polygon>,
}

impl CoverageHull {
    pub fn contains(&self, p: Point) -> bool {
        self.hulls.iter().any(|h| h.contains(p))
    }
}

/// One buffered hull per DBSCAN cluster of `centroids`; noise is dropped.
pub fn coverage_hulls(country: &str, centroids: &[Point], eps: f64, min_samples: usize, buffer: f64) -> CoverageHull {
    let labels = dbscan(centroids, eps, min_samples);
    let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut members = vec![Vec::new(); n_clusters];
    for (p, &l) in centroids.iter().zip(&labels) {
        if l != NOISE {
            members[l as usize].push(*p);
        }
    }
    if n_clusters == 0 {
        tracing::warn!(country, points = centroids.len(), "no DBSCAN clusters; country has no coverage hull");
    }
    CoverageHull {
        country: country.to_string(),
        hulls: members
            .iter()
            .map(|m| buffered_hull(m, buffer, BUFFER_SEGMENTS))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// O(n²) reference with the same visiting order.
    fn brute(points: &[Point], eps: f64, min: usize) -> Vec<i32> {
        let nb = |i: usize| -> Vec<usize> { (0..points.len()).filter(|&j| within(points[i], points[j], eps)).collect() };
        let mut lab = vec![i32::MIN; points.len()];
        let mut c = 0;
        for i in 0..points.len() {
            if lab[i] != i32::MIN {
                continue;
            }
            let n = nb(i);
            if n.len() < min {
                lab[i] = NOISE;
                continue;
            }
            lab[i] = c;
            let mut seeds = n;
            let mut k = 0;
            while k < seeds.len() {
                let j = seeds[k];
                k += 1;
                if lab[j] == NOISE {
                    lab[j] = c;
                }
                if lab[j] != i32::MIN {
                    continue;
                }
                lab[j] = c;
                let nj = nb(j);
                if nj.len() >= min {
                    seeds.extend(nj);
                }
            }
            c += 1;
        }
        lab
    }

    #[test]
    fn three_close_points_cluster() {
        let p = [[10.0, 5.0], [10.03, 5.0], [10.0, 5.04]];
        assert_eq!(dbscan(&p, 0.1, 3), vec![0, 0, 0]);
    }

    #[test]
    fn isolated_points_are_noise() {
        assert_eq!(dbscan(&[[0.0, 0.0], [1.0, 1.0]], 0.1, 3), vec![NOISE, NOISE]);
        assert!(dbscan(&[], 0.1, 3).is_empty());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(200);
        for _ in 0..10 {
            let pts: Vec<Point> = (0..200)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            assert_eq!(dbscan(&pts, 0.1, 3), brute(&pts, 0.1, 3));
        }
    }

    #[test]
    fn collinear_cluster_gives_capsule() {
        let pts = [[0.0, 0.0], [0.05, 0.0], [0.1, 0.0]];
        let h = coverage_hulls("AUT", &pts, 0.1, 3, 0.025);
        assert_eq!(h.hulls.len(), 1);
        let cap = &h.hulls[0];
        // area of a 0.1 x 0.05 rectangle plus a disc of radius 0.025
        let expect = 0.1 * 0.05 + std::f64::consts::PI * 0.025f64.powi(2);
        assert!((cap.area() - expect).abs() / expect < 0.02);
        assert!(h.contains([0.05, 0.02]) && !h.contains([0.05, 0.03]));
    }

    #[test]
    fn members_inside_their_hull() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let centres = [[1.0, 1.0], [3.0, 2.0], [5.0, -1.0]];
        let mut pts = Vec::new();
        for c in centres {
            for _ in 0..40 {
                pts.push([c[0] + rng.gen_range(-0.15..0.15), c[1] + rng.gen_range(-0.15..0.15)]);
            }
        }
        let labels = dbscan(&pts, 0.1, 3);
        let h = coverage_hulls("ZMB", &pts, 0.1, 3, 0.025);
        for (p, &l) in pts.iter().zip(&labels) {
            if l != NOISE {
                assert!(h.hulls[l as usize].contains(*p));
            }
        }
        assert!(coverage_hulls("PRT", &[[0.0, 0.0]], 0.1, 3, 0.025).hulls.is_empty());
    }
}
