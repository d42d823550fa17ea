use serde::{Deserialize, Serialize};

use crate::geom::{segment_hits_open_rect, Polygon};

use super::{GridSpec, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterizeMode {
    /// Mark every pixel whose open square meets the polygon.
    AllTouched,
    /// Mark pixels whose centre lies inside the polygon.
    Center,
}

/// Burn polygons into a 0/1 mask. Polygons only touching a pixel along its
/// edge or at a corner do not mark it in either mode.
pub fn rasterize_polygons(polys: &[Polygon], grid: &GridSpec, mode: RasterizeMode) -> Raster<u8> {
    let mut out = Raster::filled(*grid, 0u8, None);
    for poly in polys {
        burn_centers(poly, grid, &mut out);
        if mode == RasterizeMode::AllTouched {
            burn_edges(poly, grid, &mut out);
        }
    }
    out
}

/// Scanline fill over pixel-centre rows, even-odd across all rings.
fn burn_centers(poly: &Polygon, grid: &GridSpec, out: &mut Raster<u8>) {
    let (lo, hi) = poly.bbox();
    let (r_top, _) = grid.pixel_coords(lo[0], hi[1]);
    let (r_bot, _) = grid.pixel_coords(lo[0], lo[1]);
    let r0 = (r_top - 0.5).ceil().max(0.0) as usize;
    let r1 = ((r_bot - 0.5).floor() + 1.0).clamp(0.0, grid.height as f64) as usize;
    let (pw, ph) = (grid.pixel_width(), grid.pixel_height());
    let mut xs: Vec<f64> = Vec::new();
    for row in r0..r1 {
        let y = grid.max_lat - (row as f64 + 0.5) * ph;
        xs.clear();
        for ring in poly.rings() {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a[1] > y) != (b[1] > y) {
                    xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // centre x_c = min_lon + (c + 0.5) * pw must satisfy pair[0] <= x_c < pair[1]
            let c0 = ((pair[0] - grid.min_lon) / pw - 0.5).ceil().max(0.0);
            let c1 = ((pair[1] - grid.min_lon) / pw - 0.5).ceil().clamp(0.0, grid.width as f64);
            for col in c0 as usize..c1 as usize {
                out.set(row, col, 1);
            }
        }
    }
}

/// Marks pixels whose open square is crossed by a ring edge. Pixels fully
/// inside the polygon are handled by the centre pass.
fn burn_edges(poly: &Polygon, grid: &GridSpec, out: &mut Raster<u8>) {
    for ring in poly.rings() {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ra, ca) = grid.pixel_coords(a[0], a[1]);
            let (rb, cb) = grid.pixel_coords(b[0], b[1]);
            let r0 = ra.min(rb).floor().max(0.0) as usize;
            let r1 = (ra.max(rb).ceil().max(0.0) as usize).min(grid.height);
            let c0 = ca.min(cb).floor().max(0.0) as usize;
            let c1 = (ca.max(cb).ceil().max(0.0) as usize).min(grid.width);
            for row in r0..r1 {
                for col in c0..c1 {
                    if out.get(row, col) == 1 {
                        continue;
                    }
                    // Test in pixel space so every square is the unit square.
                    let pa = [ca - col as f64, ra - row as f64];
                    let pb = [cb - col as f64, rb - row as f64];
                    if segment_hits_open_rect(pa, pb, 0.0, 0.0, 1.0, 1.0) {
                        out.set(row, col, 1);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::from_origin(0.0, 10.0, 1.0, 10, 10).unwrap()
    }

    fn marked(r: &Raster<u8>) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for row in 0..r.height() {
            for col in 0..r.width() {
                if r.get(row, col) == 1 {
                    v.push((row, col));
                }
            }
        }
        v
    }

    #[test]
    fn exact_pixel_marks_only_itself() {
        let g = grid();
        // pixel (row 3, col 4): lon [4,5], lat [6,7]
        let p = Polygon::rect(4.0, 6.0, 5.0, 7.0);
        for mode in [RasterizeMode::AllTouched, RasterizeMode::Center] {
            assert_eq!(marked(&rasterize_polygons(&[p.clone()], &g, mode)), vec![(3, 4)]);
        }
    }

    #[test]
    fn corner_sliver() {
        let g = grid();
        // thin triangle clipping the north-east corner of pixel (3, 4)
        let p = Polygon::new(
            vec![[4.9, 7.0], [5.0, 7.0], [5.0, 6.9], [4.9, 7.0]],
            Vec::new(),
        );
        let all = rasterize_polygons(&[p.clone()], &g, RasterizeMode::AllTouched);
        let ctr = rasterize_polygons(&[p], &g, RasterizeMode::Center);
        assert_eq!(marked(&all), vec![(3, 4)]);
        assert!(marked(&ctr).is_empty());
    }

    #[test]
    fn square_three_by_three_center() {
        let g = grid();
        let p = Polygon::rect(2.0, 2.0, 5.0, 5.0);
        let m = rasterize_polygons(&[p.clone()], &g, RasterizeMode::Center);
        // brute-force point-in-polygon over pixel centres
        let mut expect = Vec::new();
        for row in 0..10 {
            for col in 0..10 {
                let (x, y) = g.pixel_center(row, col);
                if p.contains([x, y]) {
                    expect.push((row, col));
                }
            }
        }
        assert_eq!(expect.len(), 9);
        assert_eq!(marked(&m), expect);
    }

    #[test]
    fn empty_list_is_all_zero() {
        let m = rasterize_polygons(&[], &grid(), RasterizeMode::AllTouched);
        assert!(m.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn offset_square_touches_more_pixels_than_centres() {
        let g = grid();
        let p = Polygon::rect(2.5, 2.5, 4.5, 4.5);
        let all = marked(&rasterize_polygons(&[p.clone()], &g, RasterizeMode::AllTouched));
        let ctr = marked(&rasterize_polygons(&[p], &g, RasterizeMode::Center));
        assert_eq!(ctr.len(), 4);
        assert_eq!(all.len(), 9);
        assert!(ctr.iter().all(|c| all.contains(c)));
    }
}
