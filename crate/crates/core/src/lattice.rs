//! Finite hypercubic windows of ℤ^d with periodic or free boundary.
//!
//! Sites are stored in row-major order with the first coordinate varying
//! slowest. Bonds are keyed by `(site, axis)` and join `x` to `x + e_axis`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Free,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" | "torus" => Ok(Boundary::Periodic),
            "free" => Ok(Boundary::Free),
            other => Err(Error::Parameter(format!("unknown boundary '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dims: Vec<usize>,
    boundary: Boundary,
    strides: Vec<usize>,
}

impl Lattice {
    pub fn new(dims: &[usize], boundary: Boundary) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Dimension(dims.len()));
        }
        if let Some(&side) = dims.iter().find(|&&n| n < 2) {
            return Err(Error::Parameter(format!(
                "every side length must be at least 2 (got {side})"
            )));
        }
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len() - 1).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(Lattice {
            dims: dims.to_vec(),
            boundary,
            strides,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn num_sites(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of stored bond slots (`num_sites * d`), including slots that
    /// cross a free boundary and therefore do not exist.
    pub fn num_bond_slots(&self) -> usize {
        self.num_sites() * self.dim()
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.coords_into(site, &mut out);
        out
    }

    pub fn coords_into(&self, mut site: usize, out: &mut [usize]) {
        for (k, &stride) in self.strides.iter().enumerate() {
            out[k] = site / stride;
            site %= stride;
        }
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Neighbour `x + e_axis`, or `x - e_axis` when `forward` is false.
    /// Returns `None` when the step leaves a free-boundary window.
    pub fn step(&self, site: usize, axis: usize, forward: bool) -> Option<usize> {
        let n = self.dims[axis];
        let stride = self.strides[axis];
        let c = (site / stride) % n;
        match (forward, self.boundary) {
            (true, _) if c + 1 < n => Some(site + stride),
            (true, Boundary::Periodic) => Some(site + stride - n * stride),
            (false, _) if c > 0 => Some(site - stride),
            (false, Boundary::Periodic) => Some(site + (n - 1) * stride),
            _ => None,
        }
    }

    /// Whether the bond slot `(site, axis)` is a real bond of the window.
    pub fn bond_exists(&self, site: usize, axis: usize) -> bool {
        self.step(site, axis, true).is_some()
    }

    /// Bond slot joining two adjacent sites, independent of their order.
    /// On a periodic side of length 2 two slots join the same pair; the one
    /// based at the smaller index is returned.
    pub fn bond_between(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (x, y) = (x.min(y), x.max(y));
        (0..self.dim()).find_map(|axis| {
            if self.step(x, axis, true) == Some(y) {
                Some((x, axis))
            } else if self.step(y, axis, true) == Some(x) {
                Some((y, axis))
            } else {
                None
            }
        })
    }

    /// Signed per-axis displacement from `x` to `y` using the minimum image
    /// on periodic axes.
    pub fn displacement(&self, x: usize, y: usize) -> Vec<i64> {
        let cx = self.coords(x);
        let cy = self.coords(y);
        cx.iter()
            .zip(&cy)
            .zip(&self.dims)
            .map(|((&a, &b), &n)| {
                let mut d = b as i64 - a as i64;
                if self.boundary == Boundary::Periodic {
                    let n = n as i64;
                    if d > n / 2 {
                        d -= n;
                    } else if d < -(n / 2) {
                        d += n;
                    }
                }
                d
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_low_dimension_and_short_sides() {
        assert!(matches!(
            Lattice::new(&[8], Boundary::Periodic),
            Err(Error::Dimension(1))
        ));
        assert!(Lattice::new(&[8, 1], Boundary::Periodic).is_err());
    }

    #[test]
    fn index_round_trip_and_steps() {
        let lat = Lattice::new(&[3, 4, 5], Boundary::Periodic).unwrap();
        for site in 0..lat.num_sites() {
            assert_eq!(lat.index(&lat.coords(site)), site);
            for axis in 0..3 {
                let fwd = lat.step(site, axis, true).unwrap();
                assert_eq!(lat.step(fwd, axis, false), Some(site));
            }
        }
        let free = Lattice::new(&[3, 3], Boundary::Free).unwrap();
        assert_eq!(free.step(2, 1, true), None);
        assert_eq!(free.step(0, 0, false), None);
        assert_eq!(free.step(0, 0, true), Some(3));
    }

    #[test]
    fn minimum_image_displacement() {
        let lat = Lattice::new(&[10, 10], Boundary::Periodic).unwrap();
        let x = lat.index(&[0, 9]);
        let y = lat.index(&[9, 0]);
        assert_eq!(lat.displacement(x, y), vec![-1, 1]);
    }
}
