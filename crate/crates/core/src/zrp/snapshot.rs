//! Trajectory files: a JSON header followed by little-endian occupancy
//! records, one per observation time.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kmc::Snapshot;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const TRAJ_MAGIC: &[u8; 8] = b"ZRPTRJ01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub scale: usize,
    pub seed: u64,
    /// Lattice site index of every occupancy slot.
    pub sites: Vec<usize>,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn new(scale: usize, seed: u64, sites: Vec<usize>, snapshots: Vec<Snapshot>) -> Result<Self> {
        if let Some(s) = snapshots.iter().find(|s| s.occupancy.len() != sites.len()) {
            return Err(Error::Shape {
                expected: vec![sites.len()],
                got: vec![s.occupancy.len()],
            });
        }
        Ok(Trajectory {
            header: TrajectoryHeader {
                scale,
                seed,
                sites,
                snapshots: snapshots.len(),
            },
            snapshots,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(TRAJ_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for s in &self.snapshots {
            w.write_all(&s.time.to_bits().to_le_bytes())?;
            w.write_all(&s.event_count.to_le_bytes())?;
            for &k in &s.occupancy {
                w.write_all(&k.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TRAJ_MAGIC {
            return Err(Error::Format("not a trajectory file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let mut header = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut header)?;
        let header: TrajectoryHeader = serde_json::from_slice(&header)?;
        let mut b8 = [0u8; 8];
        let mut snapshots = Vec::with_capacity(header.snapshots);
        for _ in 0..header.snapshots {
            r.read_exact(&mut b8)?;
            let time = f64::from_bits(u64::from_le_bytes(b8));
            r.read_exact(&mut b8)?;
            let event_count = u64::from_le_bytes(b8);
            let mut occupancy = Vec::with_capacity(header.sites.len());
            for _ in 0..header.sites.len() {
                r.read_exact(&mut b4)?;
                occupancy.push(u32::from_le_bytes(b4));
            }
            snapshots.push(Snapshot {
                time,
                event_count,
                occupancy,
            });
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after trajectory".into()));
        }
        Ok(Trajectory { header, snapshots })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let snaps = vec![
            Snapshot { time: 0.0, event_count: 0, occupancy: vec![1, 0, 4] },
            Snapshot { time: 0.1 + 0.2, event_count: 77, occupancy: vec![0, 2, 3] },
        ];
        let t = Trajectory::new(8, 42, vec![0, 5, 9], snaps).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(Trajectory::read_from(&buf[..]).unwrap(), t);
        buf.push(0);
        assert!(Trajectory::read_from(&buf[..]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        t.save(&path).unwrap();
        assert_eq!(Trajectory::load(&path).unwrap(), t);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = Snapshot { time: 0.0, event_count: 0, occupancy: vec![1] };
        assert!(Trajectory::new(2, 0, vec![0, 1], vec![s]).is_err());
    }
}
