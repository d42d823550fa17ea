//! Planar polygon primitives shared by rasterization, vectorization and the
//! coverage-hull code. Coordinates are `[x, y]` pairs (lon/lat or metres).

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// A closed ring: the first vertex is repeated as the last.
pub type Ring = Vec<Point>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Polygon {
    pub exterior: Ring,
    #[serde(default)]
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Self {
        Polygon { exterior, holes }
    }

    /// Axis-aligned rectangle as a counter-clockwise closed ring.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Polygon {
            exterior: vec![
                [min_x, min_y],
                [max_x, min_y],
                [max_x, max_y],
                [min_x, max_y],
                [min_x, min_y],
            ],
            holes: Vec::new(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Unsigned planar area: exterior minus holes.
    pub fn area(&self) -> f64 {
        signed_area(&self.exterior).abs() - self.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.rings().map(|r| ring_length(r)).sum()
    }

    /// Area-weighted centroid. Falls back to the vertex mean for zero-area input.
    pub fn centroid(&self) -> Point {
        let mut a_sum = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut add = |ring: &Ring, sign: f64| {
            let (a, x, y) = ring_moments(ring);
            let s = sign * a.signum();
            a_sum += s * a;
            cx += s * x;
            cy += s * y;
        };
        add(&self.exterior, 1.0);
        for h in &self.holes {
            add(h, -1.0);
        }
        if a_sum.abs() < f64::MIN_POSITIVE {
            let n = self.exterior.len().saturating_sub(1).max(1) as f64;
            let (sx, sy) = self
                .exterior
                .iter()
                .take(n as usize)
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
            return [sx / n, sy / n];
        }
        [cx / a_sum, cy / a_sum]
    }

    pub fn bbox(&self) -> (Point, Point) {
        bbox(&self.exterior)
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, p: Point) -> bool {
        self.rings().filter(|r| ring_crossings_odd(r, p)).count() % 2 == 1
    }
}

/// Shoelace area; positive for counter-clockwise rings in a y-up frame.
/// Coordinates are taken relative to the first vertex so small rings far
/// from the origin keep their precision.
pub fn signed_area(ring: &[Point]) -> f64 {
    let Some(&[ox, oy]) = ring.first() else {
        return 0.0;
    };
    let mut s = 0.0;
    for w in ring.windows(2) {
        let (x0, y0, x1, y1) = (w[0][0] - ox, w[0][1] - oy, w[1][0] - ox, w[1][1] - oy);
        s += x0 * y1 - x1 * y0;
    }
    s / 2.0
}

pub fn ring_length(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

// (signed area, signed area * cx, signed area * cy)
fn ring_moments(ring: &[Point]) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut x = 0.0;
    let mut y = 0.0;
    // Shift to the first vertex to limit cancellation with geographic offsets.
    let o = ring.first().copied().unwrap_or([0.0, 0.0]);
    for w in ring.windows(2) {
        let (x0, y0) = (w[0][0] - o[0], w[0][1] - o[1]);
        let (x1, y1) = (w[1][0] - o[0], w[1][1] - o[1]);
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        x += (x0 + x1) * cross;
        y += (y0 + y1) * cross;
    }
    a /= 2.0;
    if a == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let cx = x / (6.0 * a) + o[0];
    let cy = y / (6.0 * a) + o[1];
    (a, a * cx, a * cy)
}

pub fn bbox(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY, f64::INFINITY];
    let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        lo[0] = lo[0].min(p[0]);
        lo[1] = lo[1].min(p[1]);
        hi[0] = hi[0].max(p[0]);
        hi[1] = hi[1].max(p[1]);
    }
    (lo, hi)
}

/// Crossing-number test for one ring. Points on a bottom or left edge count
/// as inside, points on a top or right edge as outside.
pub fn ring_crossings_odd(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when the segment `a`-`b` passes through the open rectangle
/// `(x0, x1) x (y0, y1)`. Segments that only run along its edges or touch a
/// corner do not count.
pub fn segment_hits_open_rect(a: Point, b: Point, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d[0], a[0] - x0),
        (d[0], x1 - a[0]),
        (-d[1], a[1] - y0),
        (d[1], y1 - a[1]),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return false;
    }
    // Segment-rectangle intersection is a chord; if any of it is interior,
    // its midpoint is.
    let tm = 0.5 * (t0 + t1);
    let m = [a[0] + tm * d[0], a[1] + tm * d[1]];
    m[0] > x0 && m[0] < x1 && m[1] > y0 && m[1] < y1
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, not closed.
/// Collinear points are dropped; fewer than three distinct points are
/// returned as-is (sorted, deduplicated).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minkowski sum of the convex hull of `points` with a disc of radius
/// `distance`, the disc approximated by `segments` vertices on its rim.
pub fn buffered_hull(points: &[Point], distance: f64, segments: usize) -> Polygon {
    let mut rim = Vec::with_capacity(points.len() * segments);
    for p in convex_hull(points) {
        for k in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            rim.push([p[0] + distance * theta.cos(), p[1] + distance * theta.sin()]);
        }
    }
    let mut ring = convex_hull(&rim);
    if let Some(&first) = ring.first() {
        ring.push(first);
    }
    Polygon::new(ring, Vec::new())
}
