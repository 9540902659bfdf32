//! Binary ball segment format.
//!
//! Layout (little-endian): magic `WLKB`, version `u16`, `N: u64`, `R: u32`,
//! `|S|: u16`, then `N·|S|` adjacency entries as `u64` (boundary is
//! `u64::MAX`), then `N` radii as `u32`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ball::{BallGraph, BOUNDARY};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"WLKB";
const VERSION: u16 = 1;

pub fn write_segment<W: Write>(graph: &BallGraph, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(graph.len() as u64).to_le_bytes())?;
    w.write_all(&graph.radius().to_le_bytes())?;
    w.write_all(&(graph.degree() as u16).to_le_bytes())?;
    for &a in graph.adjacency() {
        let v = if a == BOUNDARY { u64::MAX } else { a as u64 };
        w.write_all(&v.to_le_bytes())?;
    }
    for &r in graph.radii() {
        w.write_all(&r.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_segment<R: Read>(input: R) -> Result<BallGraph> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut b2 = [0u8; 2];
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let radius = u32::from_le_bytes(b4);
    r.read_exact(&mut b2)?;
    let degree = u16::from_le_bytes(b2) as usize;
    if n >= BOUNDARY as u64 {
        return Err(Error::Format(format!(
            "{n} states do not fit 32-bit indices"
        )));
    }
    let n = n as usize;
    let mut adjacency = Vec::with_capacity(n * degree);
    for _ in 0..n * degree {
        r.read_exact(&mut b8)?;
        let v = u64::from_le_bytes(b8);
        adjacency.push(if v == u64::MAX { BOUNDARY } else { v as u32 });
    }
    let mut radii = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b4)?;
        radii.push(u32::from_le_bytes(b4));
    }
    BallGraph::from_parts(radius, degree, adjacency, radii, None)
}

/// Convenience wrappers over files.
pub fn save(graph: &BallGraph, path: &Path) -> Result<()> {
    write_segment(graph, std::fs::File::create(path)?)
}

pub fn load(path: &Path) -> Result<BallGraph> {
    read_segment(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions, GroupSpec};

    #[test]
    fn roundtrip() {
        for name in ["z:2", "lamplighter:2:1", "grigorchuk"] {
            let g: GroupSpec = name.parse().unwrap();
            let b = enumerate_ball(&g, 4, BallOptions::default()).unwrap();
            let mut buf = Vec::new();
            write_segment(b.graph(), &mut buf).unwrap();
            assert_eq!(
                buf.len(),
                4 + 2 + 8 + 4 + 2 + b.len() * b.degree() * 8 + b.len() * 4
            );
            let back = read_segment(buf.as_slice()).unwrap();
            assert_eq!(&back, b.graph());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_segment(&b"NOPE\x01\x00"[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_segment(&b"WLKB\x01\x00"[..]),
            Err(Error::Io(_))
        ));
    }
}
