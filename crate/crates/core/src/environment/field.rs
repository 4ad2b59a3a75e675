//! I.i.d. bond conductances on a finite window.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice};
use crate::rng::stream_rng;

/// Law of a single bond conductance.
///
/// Every law is sampled from one uniform per bond, so fields drawn with
/// the same seed are coupled across parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BondLaw {
    /// `c` with probability `p`, else 0.
    Bernoulli { p: f64, c: f64 },
    /// Uniform on `[0, c0]`.
    Uniform,
    /// `high` with probability `p_high`, else `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl BondLaw {
    pub fn validate(&self, c0: f64) -> Result<()> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::Parameter(format!("c0 must be positive (got {c0})")));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        match *self {
            BondLaw::Bernoulli { p, c } => {
                if !prob(p) {
                    return Err(Error::Parameter(format!("p must lie in [0,1] (got {p})")));
                }
                if !(c > 0.0 && c <= c0) {
                    return Err(Error::Parameter(format!("c must lie in (0, c0] (got {c})")));
                }
            }
            BondLaw::Uniform => {}
            BondLaw::TwoPoint { low, high, p_high } => {
                if !prob(p_high) {
                    return Err(Error::Parameter(format!(
                        "p_high must lie in [0,1] (got {p_high})"
                    )));
                }
                for v in [low, high] {
                    if !(0.0..=c0).contains(&v) {
                        return Err(Error::Parameter(format!(
                            "conductance {v} outside [0, {c0}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that a bond is open (positive conductance).
    pub fn open_probability(&self) -> f64 {
        match *self {
            BondLaw::Bernoulli { p, .. } => p,
            BondLaw::Uniform => 1.0,
            BondLaw::TwoPoint { low, high, p_high } => {
                (if high > 0.0 { p_high } else { 0.0 }) + (if low > 0.0 { 1.0 - p_high } else { 0.0 })
            }
        }
    }

    fn sample(&self, u: f64, c0: f64) -> f64 {
        match *self {
            BondLaw::Bernoulli { p, c } => {
                if u < p {
                    c
                } else {
                    0.0
                }
            }
            BondLaw::Uniform => c0 * u,
            BondLaw::TwoPoint { low, high, p_high } => {
                if u < p_high {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldHeader {
    dims: Vec<usize>,
    boundary: Boundary,
    c0: f64,
    law: BondLaw,
    seed: u64,
}

/// The quenched environment ω. One value per `(site, axis)` slot; slots
/// that cross a free boundary hold 0 and are not bonds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    lattice: Lattice,
    c0: f64,
    law: BondLaw,
    seed: u64,
    values: Vec<f64>,
}

const FIELD_MAGIC: &[u8; 8] = b"ZRPENV01";

impl ConductanceField {
    pub fn generate(law: BondLaw, c0: f64, lattice: Lattice, seed: u64) -> Result<Self> {
        law.validate(c0)?;
        let mut rng = stream_rng(seed, 0);
        let d = lattice.dim();
        let values = (0..lattice.num_bond_slots())
            .map(|slot| {
                let u: f64 = rng.random();
                if lattice.bond_exists(slot / d, slot % d) {
                    law.sample(u, c0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(ConductanceField {
            lattice,
            c0,
            law,
            seed,
            values,
        })
    }

    /// Builds a field from explicit slot values (used for hand-made test fields).
    pub fn from_values(lattice: Lattice, c0: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_bond_slots() {
            return Err(Error::Parameter(format!(
                "expected {} bond values, got {}",
                lattice.num_bond_slots(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=c0).contains(*v)) {
            return Err(Error::Parameter(format!("conductance {v} outside [0, {c0}]")));
        }
        let mut values = values;
        let d = lattice.dim();
        for (slot, v) in values.iter_mut().enumerate() {
            if !lattice.bond_exists(slot / d, slot % d) {
                *v = 0.0;
            }
        }
        Ok(ConductanceField {
            lattice,
            c0,
            law: BondLaw::Uniform,
            seed: 0,
            values,
        })
    }

    pub fn constant(lattice: Lattice, value: f64) -> Result<Self> {
        let n = lattice.num_bond_slots();
        Self::from_values(lattice, value.max(f64::MIN_POSITIVE), vec![value; n])
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn law(&self) -> BondLaw {
        self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// ω on the bond `(site, site + e_axis)`.
    pub fn bond(&self, site: usize, axis: usize) -> f64 {
        self.values[site * self.lattice.dim() + axis]
    }

    /// ω(x, y) for adjacent sites, zero otherwise.
    pub fn conductance(&self, x: usize, y: usize) -> f64 {
        self.lattice
            .bond_between(x, y)
            .map_or(0.0, |(s, axis)| self.bond(s, axis))
    }

    /// Iterator over existing bonds as `(x, y, axis, ω)` with `y = x + e_axis`.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let d = self.lattice.dim();
        (0..self.lattice.num_bond_slots()).filter_map(move |slot| {
            let (x, axis) = (slot / d, slot % d);
            self.lattice
                .step(x, axis, true)
                .map(|y| (x, y, axis, self.values[slot]))
        })
    }

    /// ω̂_c: 1 on bonds with ω(b) > c. Thresholds above c0 give the empty field.
    pub fn threshold(&self, c: f64) -> Result<BinaryField> {
        if !(c >= 0.0) {
            return Err(Error::Parameter(format!("threshold must be nonnegative (got {c})")));
        }
        let d = self.lattice.dim();
        let open = self
            .values
            .iter()
            .enumerate()
            .map(|(slot, &v)| v > c && self.lattice.bond_exists(slot / d, slot % d))
            .collect();
        Ok(BinaryField {
            lattice: self.lattice.clone(),
            open,
        })
    }

    /// Self-describing binary encoding: magic, JSON header length (u32 LE),
    /// JSON header, then every slot value as f64 LE bits.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&FieldHeader {
            dims: self.lattice.dims().to_vec(),
            boundary: self.lattice.boundary(),
            c0: self.c0,
            law: self.law,
            seed: self.seed,
        })?;
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("not a conductance field file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: FieldHeader = serde_json::from_slice(&header)?;
        let lattice = Lattice::new(&header.dims, header.boundary)?;
        let mut values = Vec::with_capacity(lattice.num_bond_slots());
        let mut buf = [0u8; 8];
        for _ in 0..lattice.num_bond_slots() {
            r.read_exact(&mut buf)?;
            let v = f64::from_bits(u64::from_le_bytes(buf));
            if !(0.0..=header.c0).contains(&v) {
                return Err(Error::Format(format!("conductance {v} outside [0, c0]")));
            }
            values.push(v);
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::Format("trailing bytes after bond values".into()));
        }
        Ok(ConductanceField {
            lattice,
            c0: header.c0,
            law: header.law,
            seed: header.seed,
            values,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// ω̂_c as a per-slot open/closed flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryField {
    lattice: Lattice,
    open: Vec<bool>,
}

impl BinaryField {
    pub fn from_open(lattice: Lattice, open: Vec<bool>) -> Result<Self> {
        if open.len() != lattice.num_bond_slots() {
            return Err(Error::Parameter("bond flag count mismatch".into()));
        }
        let d = lattice.dim();
        let open = open
            .into_iter()
            .enumerate()
            .map(|(slot, o)| o && lattice.bond_exists(slot / d, slot % d))
            .collect();
        Ok(BinaryField { lattice, open })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn is_open(&self, site: usize, axis: usize) -> bool {
        self.open[site * self.lattice.dim() + axis]
    }

    pub fn open_flags(&self) -> &[bool] {
        &self.open
    }

    pub fn num_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn open_bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.lattice.dim();
        self.open.iter().enumerate().filter(|(_, &o)| o).map(move |(slot, _)| {
            let x = slot / d;
            let y = self.lattice.step(x, slot % d, true).expect("open bond exists");
            (x, y)
        })
    }
}
