//! Well-known binary for 2-D polygons.

use crate::geom::{Point, Ring};

const WKB_POLYGON: u32 = 3;

/// Little-endian WKB Polygon, exterior first.
pub fn encode_polygon(exterior: &[Point], holes: &[Ring]) -> Vec<u8> {
    let n: usize = exterior.len() + holes.iter().map(Vec::len).sum::<usize>();
    let mut out = Vec::with_capacity(9 + 4 * (1 + holes.len()) + 16 * n);
    out.push(1);
    out.extend_from_slice(&WKB_POLYGON.to_le_bytes());
    out.extend_from_slice(&(1 + holes.len() as u32).to_le_bytes());
    for ring in std::iter::once(exterior).chain(holes.iter().map(Vec::as_slice)) {
        out.extend_from_slice(&(ring.len() as u32).to_le_bytes());
        for p in ring {
            out.extend_from_slice(&p[0].to_le_bytes());
            out.extend_from_slice(&p[1].to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    little: bool,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], String> {
        let end = self.pos + N;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        let mut a: [u8; N] = s.try_into().unwrap();
        if !self.little {
            a.reverse();
        }
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, String> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, String> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

/// Decode a WKB Polygon in either byte order into (exterior, holes).
pub fn decode_polygon(buf: &[u8]) -> Result<(Ring, Vec<Ring>), String> {
    let little = match buf.first() {
        Some(1) => true,
        Some(0) => false,
        Some(b) => return Err(format!("bad byte-order marker {b}")),
        None => return Err("empty geometry".into()),
    };
    let mut c = Cursor { buf, pos: 1, little };
    let ty = c.u32()?;
    if ty != WKB_POLYGON {
        return Err(format!("geometry type {ty} is not Polygon"));
    }
    let nrings = c.u32()? as usize;
    if nrings == 0 {
        return Err("polygon without rings".into());
    }
    let mut rings = Vec::with_capacity(nrings.min(1024));
    for _ in 0..nrings {
        let n = c.u32()? as usize;
        if n > (buf.len() - c.pos) / 16 {
            return Err(format!("ring of {n} points exceeds the buffer"));
        }
        let mut ring = Vec::with_capacity(n);
        for _ in 0..n {
            ring.push([c.f64()?, c.f64()?]);
        }
        rings.push(ring);
    }
    if c.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - c.pos));
    }
    let exterior = rings.remove(0);
    Ok((exterior, rings))
}
