//! Binary grid snapshots.
//!
//! One UTF-8 header line `GCOERCE1 d=<d> n=<n> h=<h> t=<t>` followed by the
//! full grid in row-major order: little-endian `f64` for level-set values,
//! single bytes 0/1 for indicator sets.

use std::io::{BufRead, Write};

use super::level_set::LevelSetState;
use super::reachable::ReachableSet;
use super::FrontierError;

pub const SNAPSHOT_MAGIC: &str = "GCOERCE1";

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub time: f64,
}

impl SnapshotHeader {
    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    fn line(&self) -> String {
        format!("{SNAPSHOT_MAGIC} d={} n={} h={} t={}\n", self.dim, self.n, self.h, self.time)
    }

    fn parse(line: &str) -> Result<Self, FrontierError> {
        let bad = || FrontierError::Format(format!("bad snapshot header: {line:?}"));
        let mut parts = line.trim_end().split(' ');
        if parts.next() != Some(SNAPSHOT_MAGIC) {
            return Err(bad());
        }
        let mut field = |name: &str| -> Result<&str, FrontierError> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(name))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(bad)
        };
        let dim = field("d")?.parse().map_err(|_| bad())?;
        let n = field("n")?.parse().map_err(|_| bad())?;
        let h = field("h")?.parse().map_err(|_| bad())?;
        let time = field("t")?.parse().map_err(|_| bad())?;
        Ok(SnapshotHeader { dim, n, h, time })
    }
}

pub fn write_values<W: Write>(mut w: W, state: &LevelSetState) -> Result<(), FrontierError> {
    let header = SnapshotHeader {
        dim: state.grid.dim,
        n: state.grid.n,
        h: state.grid.h,
        time: state.time,
    };
    w.write_all(header.line().as_bytes())?;
    let dense = state.to_dense();
    let mut buf = Vec::with_capacity(dense.len() * 8);
    for v in dense {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_indicator<W: Write>(mut w: W, rs: &ReachableSet) -> Result<(), FrontierError> {
    let header = SnapshotHeader {
        dim: rs.grid.dim,
        n: rs.grid.n,
        h: rs.grid.h,
        time: rs.time,
    };
    w.write_all(header.line().as_bytes())?;
    let bytes: Vec<u8> = rs.to_dense().into_iter().map(u8::from).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<SnapshotHeader, FrontierError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    SnapshotHeader::parse(&line)
}

pub fn read_values<R: BufRead>(mut r: R) -> Result<(SnapshotHeader, Vec<f64>), FrontierError> {
    let header = read_header(&mut r)?;
    let mut buf = vec![0u8; header.cells() * 8];
    r.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}

pub fn read_indicator<R: BufRead>(mut r: R) -> Result<(SnapshotHeader, Vec<bool>), FrontierError> {
    let header = read_header(&mut r)?;
    let mut buf = vec![0u8; header.cells()];
    r.read_exact(&mut buf)?;
    if buf.iter().any(|b| *b > 1) {
        return Err(FrontierError::Format("indicator byte other than 0/1".into()));
    }
    Ok((header, buf.into_iter().map(|b| b == 1).collect()))
}
