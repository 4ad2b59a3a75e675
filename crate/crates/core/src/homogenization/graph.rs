//! Weighted site graphs for the particle dynamics and the cluster walk.

use crate::environment::{ClusterLabeling, ConductanceField};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

const ABSENT: u32 = u32::MAX;

/// An unoriented edge between graph nodes `a` and `b = a + e_axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub axis: u8,
    pub weight: f64,
}

/// Sites of a lattice window together with the positive bonds among them,
/// at diffusive scale `N`.
///
/// Adjacency is stored in CSR form. Each entry records the neighbour, the
/// conductance, a running cumulative weight (for direction sampling) and
/// the signed lattice step taken.
#[derive(Debug, Clone)]
pub struct ClusterGraph {
    lattice: Lattice,
    scale: usize,
    sites: Vec<usize>,
    index_of: Vec<u32>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    steps: Vec<i8>,
    exit_rates: Vec<f64>,
}

impl ClusterGraph {
    /// The giant cluster 𝒞(ω) with the bonds ℰ(ω) joining its sites.
    pub fn giant(field: &ConductanceField, labeling: &ClusterLabeling, scale: usize) -> Result<Self> {
        if labeling.giant_size() == 0 {
            return Err(Error::EmptyCluster);
        }
        let sites: Vec<usize> = (0..field.lattice().num_sites())
            .filter(|&s| labeling.in_giant(s))
            .collect();
        Self::from_sites(field, sites, scale)
    }

    /// Every site of the window with every positive bond; finite clusters
    /// and isolated sites included.
    pub fn full(field: &ConductanceField, scale: usize) -> Result<Self> {
        let sites = (0..field.lattice().num_sites()).collect();
        Self::from_sites(field, sites, scale)
    }

    fn from_sites(field: &ConductanceField, sites: Vec<usize>, scale: usize) -> Result<Self> {
        let lattice = field.lattice().clone();
        let mut index_of = vec![ABSENT; lattice.num_sites()];
        for (i, &s) in sites.iter().enumerate() {
            index_of[s] = i as u32;
        }
        let edges = field
            .bonds()
            .filter(|&(x, y, _, w)| w > 0.0 && index_of[x] != ABSENT && index_of[y] != ABSENT)
            .map(|(x, y, axis, w)| Edge {
                a: index_of[x],
                b: index_of[y],
                axis: axis as u8,
                weight: w,
            })
            .collect();
        Self::assemble(lattice, sites, index_of, edges, scale)
    }

    /// Hand-made graph on lattice sites `sites`; `edges` are pairs of
    /// positions in `sites` that must be lattice neighbours. Zero weights
    /// are kept.
    pub fn from_edges(
        lattice: Lattice,
        sites: Vec<usize>,
        edges: &[(usize, usize, f64)],
        scale: usize,
    ) -> Result<Self> {
        let mut index_of = vec![ABSENT; lattice.num_sites()];
        for (i, &s) in sites.iter().enumerate() {
            index_of[s] = i as u32;
        }
        let edges = edges
            .iter()
            .map(|&(i, j, w)| {
                let (base, axis) = lattice.bond_between(sites[i], sites[j]).ok_or_else(|| {
                    Error::Parameter(format!("sites {} and {} are not adjacent", sites[i], sites[j]))
                })?;
                let (a, b) = if base == sites[i] { (i, j) } else { (j, i) };
                Ok(Edge {
                    a: a as u32,
                    b: b as u32,
                    axis: axis as u8,
                    weight: w,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(lattice, sites, index_of, edges, scale)
    }

    fn assemble(
        lattice: Lattice,
        sites: Vec<usize>,
        index_of: Vec<u32>,
        edges: Vec<Edge>,
        scale: usize,
    ) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Parameter("scale N must be positive".into()));
        }
        let n = sites.len();
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.a as usize] += 1;
            degree[e.b as usize] += 1;
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let m = offsets[n];
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; m];
        let mut weights = vec![0.0; m];
        let mut steps = vec![0i8; m];
        for e in &edges {
            let signed = e.axis as i8 + 1;
            for (from, to, step) in [(e.a, e.b, signed), (e.b, e.a, -signed)] {
                let slot = fill[from as usize];
                neighbors[slot] = to;
                weights[slot] = e.weight;
                steps[slot] = step;
                fill[from as usize] += 1;
            }
        }
        let mut cumulative = vec![0.0; m];
        let mut exit_rates = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for slot in offsets[i]..offsets[i + 1] {
                acc += weights[slot];
                cumulative[slot] = acc;
            }
            exit_rates[i] = acc;
        }
        Ok(ClusterGraph {
            lattice,
            scale,
            sites,
            index_of,
            edges,
            offsets,
            neighbors,
            weights,
            cumulative,
            steps,
            exit_rates,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Lattice index of graph node `i`.
    pub fn site(&self, i: usize) -> usize {
        self.sites[i]
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Graph node of a lattice site, if the site belongs to the graph.
    pub fn node_of(&self, site: usize) -> Option<usize> {
        match self.index_of[site] {
            ABSENT => None,
            i => Some(i as usize),
        }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// W(x) = Σ_e ω(x, x+e) over graph neighbours.
    #[inline]
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit_rates[i]
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.exit_rates
    }

    /// Neighbours of node `i` as `(node, weight)`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&j, &w)| (j as usize, w))
    }

    /// Picks the neighbour slot of node `i` whose cumulative weight first
    /// exceeds `target ∈ [0, W(i))`; returns `(node, signed step)` where the
    /// step is ±(axis + 1).
    #[inline]
    pub fn pick_neighbor(&self, i: usize, target: f64) -> (usize, i8) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let mut slot = hi - 1;
        for s in lo..hi {
            if target < self.cumulative[s] {
                slot = s;
                break;
            }
        }
        // Skip zero-weight slots that rounding could land on.
        while self.weights[slot] == 0.0 && slot > lo {
            slot -= 1;
        }
        (self.neighbors[slot] as usize, self.steps[slot])
    }

    /// Macroscopic position x/N of node `i`.
    pub fn position(&self, i: usize) -> Vec<f64> {
        let n = self.scale as f64;
        self.lattice
            .coords(self.sites[i])
            .into_iter()
            .map(|c| c as f64 / n)
            .collect()
    }

    /// Macroscopic positions of all nodes, row-major `len() × d`.
    pub fn positions(&self) -> Vec<f64> {
        let d = self.dim();
        let n = self.scale as f64;
        let mut out = vec![0.0; self.len() * d];
        let mut c = vec![0; d];
        for (i, &s) in self.sites.iter().enumerate() {
            self.lattice.coords_into(s, &mut c);
            for k in 0..d {
                out[i * d + k] = c[k] as f64 / n;
            }
        }
        out
    }

    /// Evaluates a macroscopic function at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let d = self.dim();
        self.positions().chunks(d).map(f).collect()
    }

    /// Whether the graph contains a path that winds around each periodic
    /// axis (per axis). Non-wrapping axes make the periodic corrector
    /// degenerate.
    pub fn wraps(&self) -> Vec<bool> {
        let d = self.dim();
        let dims = self.lattice.dims();
        let mut wraps = vec![false; d];
        let mut unwrapped: Vec<Option<Vec<i64>>> = vec![None; self.len()];
        let mut stack = Vec::new();
        for root in 0..self.len() {
            if unwrapped[root].is_some() {
                continue;
            }
            unwrapped[root] = Some(vec![0; d]);
            stack.push(root);
            while let Some(i) = stack.pop() {
                let pos = unwrapped[i].clone().unwrap();
                for slot in self.offsets[i]..self.offsets[i + 1] {
                    let j = self.neighbors[slot] as usize;
                    let step = self.steps[slot];
                    let axis = (step.unsigned_abs() - 1) as usize;
                    let mut next = pos.clone();
                    next[axis] += step.signum() as i64;
                    match &unwrapped[j] {
                        None => {
                            unwrapped[j] = Some(next);
                            stack.push(j);
                        }
                        Some(existing) => {
                            for k in 0..d {
                                if existing[k] != next[k] && (existing[k] - next[k]) % dims[k] as i64 == 0 {
                                    wraps[k] = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        wraps
    }

    /// (L_N f)(x) = N² Σ_e ω(x, x+e)[f(x+e) − f(x)].
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_generator_into(f, &mut out);
        out
    }

    pub fn apply_generator_into(&self, f: &[f64], out: &mut [f64]) {
        let n2 = (self.scale * self.scale) as f64;
        for i in 0..self.len() {
            let fi = f[i];
            let mut acc = 0.0;
            for slot in self.offsets[i]..self.offsets[i + 1] {
                acc += self.weights[slot] * (f[self.neighbors[slot] as usize] - fi);
            }
            out[i] = n2 * acc;
        }
    }

    /// (f, −L_N g) in L²(ν^N_ω), via the edge sum
    /// N^{2−d} Σ_{edges} ω [f(b) − f(a)][g(b) − g(a)].
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> f64 {
        let sum: f64 = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (e.a as usize, e.b as usize);
                e.weight * (f[b] - f[a]) * (g[b] - g[a])
            })
            .sum();
        sum * self.measure_weight() * (self.scale * self.scale) as f64
    }

    /// Mass N^{-d} of one site under ν^N_ω.
    pub fn measure_weight(&self) -> f64 {
        (self.scale as f64).powi(-(self.dim() as i32))
    }

    /// (f, g) in L²(ν^N_ω).
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.measure_weight()
    }
}
