//! Connected components of the open-bond graph.

use serde::{Deserialize, Serialize};

use super::field::BinaryField;
use crate::lattice::{Boundary, Lattice};

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = x;
        while self.parent[cur] as usize != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component decomposition of V(ω). Sites touching no open bond are
/// unlabelled. Cluster ids are assigned in order of each cluster's
/// smallest site index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    lattice: Lattice,
    labels: Vec<Option<u32>>,
    sizes: Vec<usize>,
    giant: Option<u32>,
}

pub fn label_clusters(field: &BinaryField) -> ClusterLabeling {
    let lattice = field.lattice().clone();
    let n = lattice.num_sites();
    let mut uf = UnionFind::new(n);
    let mut touched = vec![false; n];
    for (x, y) in field.open_bonds() {
        uf.union(x, y);
        touched[x] = true;
        touched[y] = true;
    }
    let mut root_label: Vec<Option<u32>> = vec![None; n];
    let mut labels = vec![None; n];
    let mut sizes: Vec<usize> = Vec::new();
    for site in 0..n {
        if !touched[site] {
            continue;
        }
        let root = uf.find(site);
        let id = *root_label[root].get_or_insert_with(|| {
            sizes.push(0);
            (sizes.len() - 1) as u32
        });
        labels[site] = Some(id);
        sizes[id as usize] += 1;
    }
    // First maximum wins, i.e. the smallest id among ties.
    let giant = sizes
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |best, (id, &s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((id, s)),
        })
        .map(|(id, _)| id as u32);
    ClusterLabeling {
        lattice,
        labels,
        sizes,
        giant,
    }
}

impl ClusterLabeling {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn label(&self, site: usize) -> Option<u32> {
        self.labels[site]
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn giant_id(&self) -> Option<u32> {
        self.giant
    }

    pub fn giant_size(&self) -> usize {
        self.giant.map_or(0, |g| self.sizes[g as usize])
    }

    pub fn in_giant(&self, site: usize) -> bool {
        self.giant.is_some() && self.labels[site] == self.giant
    }

    /// |giant ∩ box| / |box|.
    pub fn giant_fraction(&self) -> f64 {
        self.giant_size() as f64 / self.lattice.num_sites() as f64
    }

    /// Sites of each cluster, indexed by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (site, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                out[*l as usize].push(site);
            }
        }
        out
    }
}

/// Finite-window estimator of m = Q(0 ∈ 𝒞(ω)); 0 when no bond is open.
pub fn estimate_m(labeling: &ClusterLabeling) -> f64 {
    labeling.giant_fraction()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterStats {
    /// ℓ∞ diameter per reported cluster, in cluster-id order.
    pub diameters: Vec<usize>,
    pub max: usize,
    /// `histogram[k]` = number of clusters of diameter k.
    pub histogram: Vec<usize>,
}

/// ℓ∞ diameter of every cluster (optionally skipping the giant one).
///
/// On periodic axes the extent is the shortest arc covering the cluster's
/// coordinates, which is exact for clusters that do not wrap the window.
pub fn cluster_diameter_stats(labeling: &ClusterLabeling, exclude_giant: bool) -> DiameterStats {
    let lattice = labeling.lattice();
    let d = lattice.dim();
    let periodic = lattice.boundary() == Boundary::Periodic;
    let mut diameters = Vec::new();
    let mut coords = vec![0; d];
    for (id, sites) in labeling.members().into_iter().enumerate() {
        if exclude_giant && labeling.giant_id() == Some(id as u32) {
            continue;
        }
        let mut per_axis: Vec<Vec<usize>> = vec![Vec::with_capacity(sites.len()); d];
        for &s in &sites {
            lattice.coords_into(s, &mut coords);
            for k in 0..d {
                per_axis[k].push(coords[k]);
            }
        }
        let diam = per_axis
            .iter_mut()
            .zip(lattice.dims())
            .map(|(cs, &n)| {
                cs.sort_unstable();
                cs.dedup();
                let span = cs[cs.len() - 1] - cs[0];
                if !periodic {
                    return span;
                }
                let wrap_gap = n - span;
                let max_gap = cs.windows(2).map(|w| w[1] - w[0]).chain([wrap_gap]).max().unwrap();
                n - max_gap
            })
            .max()
            .unwrap_or(0);
        diameters.push(diam);
    }
    let max = diameters.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0; if diameters.is_empty() { 0 } else { max + 1 }];
    for &dm in &diameters {
        histogram[dm] += 1;
    }
    DiameterStats {
        diameters,
        max,
        histogram,
    }
}

/// Fit of the maximal finite-cluster diameter against ln(1 + L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrowthFit {
    /// Least-squares slope and intercept of `max_diam ≈ a + b ln(1+L)`.
    pub slope: f64,
    pub intercept: f64,
    /// Smallest γ with `max_diam ≤ γ ln(1+L)` at every point.
    pub gamma: f64,
}

pub fn fit_log_growth(points: &[(usize, usize)]) -> LogGrowthFit {
    let xs: Vec<f64> = points.iter().map(|&(l, _)| (1.0 + l as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, d)| d as f64).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let gamma = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y / x)
        .fold(0.0, f64::max);
    LogGrowthFit {
        slope,
        intercept: my - slope * mx,
        gamma,
    }
}
