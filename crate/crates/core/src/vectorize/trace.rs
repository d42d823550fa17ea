use std::collections::HashMap;

use crate::geom::{signed_area, Polygon, Ring};

use super::components::Components;

/// One component outlined along pixel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPolygon {
    pub label: u32,
    pub pixel_count: usize,
    pub polygon: Polygon,
}

/// Vertex in pixel-corner space: (x = column, y = row), rows growing south.
type Corner = (i64, i64);

#[derive(Clone, Copy)]
struct Edge {
    from: Corner,
    to: Corner,
}

impl Edge {
    /// Direction in a y-up frame.
    fn dir(&self) -> (i64, i64) {
        (self.to.0 - self.from.0, self.from.1 - self.to.1)
    }
}

/// Boundary edges of every component, oriented so the component lies to
/// the left in a north-up frame (exteriors counter-clockwise, holes
/// clockwise). `edges[l - 1]` belongs to label `l`.
fn boundary_edges(c: &Components) -> Vec<Vec<Edge>> {
    let (w, h) = (c.grid.width, c.grid.height);
    let mut edges = vec![Vec::new(); c.count()];
    let label = |r: i64, col: i64| -> u32 {
        if r < 0 || col < 0 || r >= h as i64 || col >= w as i64 {
            0
        } else {
            c.labels[r as usize * w + col as usize]
        }
    };
    for r in 0..h as i64 {
        for col in 0..w as i64 {
            let l = label(r, col);
            if l == 0 {
                continue;
            }
            let out = &mut edges[l as usize - 1];
            // top: west-bound
            if label(r - 1, col) != l {
                out.push(Edge { from: (col + 1, r), to: (col, r) });
            }
            // left: south-bound
            if label(r, col - 1) != l {
                out.push(Edge { from: (col, r), to: (col, r + 1) });
            }
            // bottom: east-bound
            if label(r + 1, col) != l {
                out.push(Edge { from: (col, r + 1), to: (col + 1, r + 1) });
            }
            // right: north-bound
            if label(r, col + 1) != l {
                out.push(Edge { from: (col + 1, r + 1), to: (col + 1, r) });
            }
        }
    }
    edges
}

/// Link one component's edges into closed rings of corner vertices.
///
/// Where the component touches itself diagonally, two edges leave the same
/// corner; taking the right-hand turn keeps every ring free of
/// self-contact, so enclosed background pinched off at a corner becomes a
/// hole touching the exterior at that single point.
fn link_rings(edges: &[Edge]) -> Vec<Vec<Corner>> {
    let mut out_of: HashMap<Corner, Vec<usize>> = HashMap::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        out_of.entry(e.from).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = vec![edges[start].from];
        let mut cur = start;
        loop {
            used[cur] = true;
            let e = edges[cur];
            let cands = &out_of[&e.to];
            let next = if cands.len() == 1 {
                cands[0]
            } else {
                let (dx, dy) = e.dir();
                *cands
                    .iter()
                    .find(|&&k| {
                        let (ex, ey) = edges[k].dir();
                        dx * ey - dy * ex < 0
                    })
                    .expect("pinch corner has a right turn")
            };
            if next == start {
                break;
            }
            debug_assert!(!used[next], "edge revisited while tracing");
            ring.push(e.to);
            cur = next;
        }
        rings.push(simplify(ring));
    }
    rings
}

/// Drop vertices where the ring goes straight on; rotate to start at a
/// corner; close the ring.
fn simplify(ring: Vec<Corner>) -> Vec<Corner> {
    let n = ring.len();
    let turns = |i: usize| {
        let p = ring[(i + n - 1) % n];
        let q = ring[i];
        let s = ring[(i + 1) % n];
        (q.0 - p.0) * (s.1 - q.1) - (q.1 - p.1) * (s.0 - q.0) != 0
    };
    let mut out: Vec<Corner> = (0..n).filter(|&i| turns(i)).map(|i| ring[i]).collect();
    out.push(out[0]);
    out
}

/// Outline every component along pixel edges, in geographic coordinates.
/// Each polygon has exactly one exterior ring; enclosed background becomes
/// holes. The polygon's area in pixel units equals its pixel count.
pub fn trace_polygons(c: &Components) -> Vec<TracedPolygon> {
    let g = &c.grid;
    let (pw, ph) = (g.pixel_width(), g.pixel_height());
    let to_geo = |ring: &[Corner]| -> Ring {
        ring.iter()
            .map(|&(x, r)| [g.min_lon + x as f64 * pw, g.max_lat - r as f64 * ph])
            .collect()
    };
    boundary_edges(c)
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let mut exterior = None;
            let mut holes = Vec::new();
            for ring in link_rings(edges) {
                // y-up orientation: negate rows
                let flipped: Vec<[f64; 2]> = ring.iter().map(|&(x, r)| [x as f64, -(r as f64)]).collect();
                if signed_area(&flipped) > 0.0 {
                    debug_assert!(exterior.is_none(), "component with two exteriors");
                    exterior = Some(to_geo(&ring));
                } else {
                    holes.push(to_geo(&ring));
                }
            }
            TracedPolygon {
                label: i as u32 + 1,
                pixel_count: c.sizes[i],
                polygon: Polygon::new(exterior.expect("component has an exterior"), holes),
            }
        })
        .collect()
}

/// Signed area of a traced ring in pixel units, for tests and checks.
pub fn pixel_area(p: &Polygon, pixel_w: f64, pixel_h: f64) -> f64 {
    p.area() / (pixel_w * pixel_h)
}
