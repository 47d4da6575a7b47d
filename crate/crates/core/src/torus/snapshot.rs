//! Binary field snapshots.
//!
//! Layout (little-endian): magic `TSF1`, `u32 n`, `u8 rank`, then `n² · 2^rank`
//! f64 samples, row-major within a component, component-major overall
//! (`x, y` for vectors; `xx, xy, yx, yy` for tensors).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{ScalarField, TensorField, TorusGrid, VectorField};

const MAGIC: &[u8; 4] = b"TSF1";

#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Scalar(ScalarField),
    Vector(VectorField),
    Tensor(TensorField),
}

impl Snapshot {
    fn rank(&self) -> u8 {
        match self {
            Snapshot::Scalar(_) => 0,
            Snapshot::Vector(_) => 1,
            Snapshot::Tensor(_) => 2,
        }
    }

    fn components(&self) -> Vec<&ScalarField> {
        match self {
            Snapshot::Scalar(f) => vec![f],
            Snapshot::Vector(v) => vec![&v.x, &v.y],
            Snapshot::Tensor(t) => vec![&t.xx, &t.xy, &t.yx, &t.yy],
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.components()[0].grid()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let comps = self.components();
        let n = self.grid().n();
        let mut out = Vec::with_capacity(9 + comps.len() * n * n * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.push(self.rank());
        for c in comps {
            for v in c.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err("missing TSF1 header".into());
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let rank = bytes[8];
        if rank > 2 {
            return Err(format!("unsupported rank {rank}"));
        }
        let ncomp = 1usize << rank;
        let expected = 9 + ncomp * n * n * 8;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let grid = TorusGrid::new(n).map_err(|e| e.to_string())?;
        let mut comps = bytes[9..]
            .chunks_exact(n * n * 8)
            .map(|chunk| {
                let vals = chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                ScalarField::from_values(&grid, vals).map_err(|e| e.to_string())
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter();
        let mut next = || comps.next().unwrap();
        Ok(match rank {
            0 => Snapshot::Scalar(next()),
            1 => Snapshot::Vector(VectorField {
                x: next(),
                y: next(),
            }),
            _ => Snapshot::Tensor(TensorField {
                xx: next(),
                xy: next(),
                yx: next(),
                yy: next(),
            }),
        })
    }
}

pub fn write_snapshot(path: impl AsRef<Path>, snap: &Snapshot) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&snap.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes).map_err(|reason| Error::Snapshot {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = TorusGrid::new(8).unwrap();
        let v = VectorField::from_fn(&g, |x, y| [x, -y]);
        let bytes = Snapshot::Vector(v.clone()).to_bytes();
        assert_eq!(&bytes[..4], b"TSF1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 8);
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes.len(), 9 + 2 * 64 * 8);
        // second sample of the x component, then first sample of y
        let at = |k: usize| f64::from_le_bytes(bytes[9 + 8 * k..17 + 8 * k].try_into().unwrap());
        assert_eq!(at(1), g.h());
        assert_eq!(at(64 + 8), -g.h());
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap(), Snapshot::Vector(v));
    }

    #[test]
    fn rejects_truncated() {
        let g = TorusGrid::new(8).unwrap();
        let bytes = Snapshot::Scalar(ScalarField::zeros(&g)).to_bytes();
        assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Snapshot::from_bytes(b"XXXX\x08\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn file_roundtrip() {
        let g = TorusGrid::new(8).unwrap();
        let t = Snapshot::Tensor(TensorField::identity(&g));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsf");
        write_snapshot(&p, &t).unwrap();
        assert_eq!(read_snapshot(&p).unwrap(), t);
    }
}
