/// Complete binary sum tree over per-site rates.
///
/// Every internal node is recomputed as `left + right` whenever a leaf
/// below it changes, so a tree rebuilt from its leaves is bit-identical to
/// one maintained incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    len: usize,
    cap: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn from_leaves(leaves: &[f64]) -> Self {
        let cap = leaves.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * cap];
        nodes[cap..cap + leaves.len()].copy_from_slice(leaves);
        for i in (1..cap).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree {
            len: leaves.len(),
            cap,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.cap..self.cap + self.len]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.cap + i;
        self.nodes[k] = value;
        k /= 2;
        while k >= 1 {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            k /= 2;
        }
    }

    /// Leaf index `i` with prefix(i) ≤ target < prefix(i) + leaf(i), for
    /// `target ∈ [0, total)`. Never returns a zero-rate leaf while the
    /// total is positive.
    #[inline]
    pub fn find(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (target < left && left > 0.0) || right <= 0.0 {
                k *= 2;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        k - self.cap
    }
}
