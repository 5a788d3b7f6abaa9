//! Priority bookkeeping: the sum-tree index, PER sampling with importance
//! weights, and PSMM removal selection.
//!
//! Sampling probability is proportional to the stored leaf priority
//! (proportional PER, `p = (|delta| + eps)^alpha`). Removal selection is the
//! mirror image: items are drawn without replacement with probability
//! proportional to `priority^(-alpha_remove)`, so low-importance entries are
//! the ones most likely to go.

use rand::{Rng, RngExt};

use crate::{Error, Result};

/// Hyperparameters for prioritized sampling and removal.
#[derive(Debug, Clone, Copy)]
pub struct PriorityParams {
    /// PER prioritization strength (exponent on `|delta| + eps`).
    pub alpha: f64,
    /// Importance-sampling correction exponent, in `[0, 1]`. Constant; no
    /// annealing schedule.
    pub beta: f64,
    /// Floor added to `|delta|` so every item keeps nonzero sampling mass.
    pub epsilon_priority: f64,
    /// PSMM inverse-priority strength.
    pub alpha_remove: f64,
}

impl Default for PriorityParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            epsilon_priority: 0.01,
            alpha_remove: 1.0,
        }
    }
}

impl PriorityParams {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon_priority.is_finite() || self.epsilon_priority <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon_priority must be positive, got {}",
                self.epsilon_priority
            )));
        }
        if self.alpha < 0.0 || self.alpha_remove < 0.0 {
            return Err(Error::InvalidConfig(
                "priority exponents must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Raw importance of a TD error: `|delta| + epsilon_priority`.
///
/// The `alpha` exponent is applied when the value is stored as a tree leaf,
/// not here.
pub fn priority_from_td(delta: f64, params: &PriorityParams) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::NonFiniteTdError);
    }
    Ok(delta.abs() + params.epsilon_priority)
}

/// Complete binary tree over non-negative priorities with O(log n) update,
/// total, and prefix-sum lookup.
///
/// Leaf capacity is rounded up to a power of two; unoccupied leaves hold 0.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaf_capacity: usize,
    base: usize,
    /// 1-based heap layout: node 1 is the root, leaves at `base..2*base`.
    nodes: Vec<f64>,
    nonzero_leaves: usize,
}

impl SumTree {
    pub fn new(leaf_capacity: usize) -> Self {
        assert!(leaf_capacity > 0, "sum tree needs at least one leaf");
        let base = leaf_capacity.next_power_of_two();
        Self {
            leaf_capacity,
            base,
            nodes: vec![0.0; 2 * base],
            nonzero_leaves: 0,
        }
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    /// Sum of all leaf priorities.
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Number of leaves currently holding a positive priority.
    pub fn occupied(&self) -> usize {
        self.nonzero_leaves
    }

    pub fn leaf(&self, index: usize) -> f64 {
        assert!(index < self.leaf_capacity);
        self.nodes[self.base + index]
    }

    /// Set leaf `index` to `value` and refresh all ancestors.
    pub fn update(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.leaf_capacity {
            return Err(Error::LeafOutOfRange {
                index,
                capacity: self.leaf_capacity,
            });
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidPriority(value));
        }
        let mut node = self.base + index;
        let old = self.nodes[node];
        if old == 0.0 && value > 0.0 {
            self.nonzero_leaves += 1;
        } else if old > 0.0 && value == 0.0 {
            self.nonzero_leaves -= 1;
        }
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
        Ok(())
    }

    /// Leaf `j` such that the sum of leaves before `j` is <= `u` and `u`
    /// falls inside leaf `j`'s mass. Zero-priority leaves are never returned.
    pub fn prefix_find(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if !(u.is_finite() && u >= 0.0 && u < total) {
            return Err(Error::PrefixOutOfRange { value: u, total });
        }
        Ok(self.descend(u))
    }

    /// Prefix walk without range validation; `u` is clamped into the left
    /// subtree whenever rounding would push it past an empty right child.
    fn descend(&self, mut u: f64) -> usize {
        let mut node = 1;
        while node < self.base {
            let left = 2 * node;
            if u < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                node = left;
            } else {
                u -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.base
    }

    /// Largest relative child-sum discrepancy over all internal nodes.
    pub fn consistency_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for node in 1..self.base {
            let sum = self.nodes[2 * node] + self.nodes[2 * node + 1];
            let denom = self.nodes[node].abs().max(1.0);
            worst = worst.max((self.nodes[node] - sum).abs() / denom);
        }
        worst
    }
}

/// Companion to [`SumTree`]: same complete-tree layout, but internal nodes
/// hold the max of their children, giving O(log n) current-max queries.
#[derive(Debug, Clone)]
pub struct MaxTree {
    leaf_capacity: usize,
    base: usize,
    nodes: Vec<f64>,
}

impl MaxTree {
    pub fn new(leaf_capacity: usize) -> Self {
        assert!(leaf_capacity > 0, "max tree needs at least one leaf");
        let base = leaf_capacity.next_power_of_two();
        Self {
            leaf_capacity,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    /// Max over all leaves; 0 when every leaf is 0.
    pub fn max(&self) -> f64 {
        self.nodes[1]
    }

    pub fn update(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.leaf_capacity {
            return Err(Error::LeafOutOfRange {
                index,
                capacity: self.leaf_capacity,
            });
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidPriority(value));
        }
        let mut node = self.base + index;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node].max(self.nodes[2 * node + 1]);
        }
        Ok(())
    }
}

/// Stratified prefix sampling over the tree plus normalized importance
/// weights.
///
/// `[0, total)` is split into `batch` equal segments with one uniform draw
/// per segment. `weight_i = (N * P(i))^(-beta)` with `N` the occupied-leaf
/// count and `P(i) = leaf_i / total`, normalized so the batch maximum is 1.
pub fn per_sample<R: Rng>(
    tree: &SumTree,
    batch: usize,
    beta: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    assert!(batch >= 1, "batch must be at least 1");
    let total = tree.total();
    if total <= 0.0 || tree.occupied() == 0 {
        return Err(Error::EmptyPriorityMass);
    }
    let segment = total / batch as f64;
    let indices: Vec<usize> = (0..batch)
        .map(|k| {
            let u = segment * k as f64 + rng.random_range(0.0..segment);
            // Guard against rounding carrying the last segment to `total`.
            tree.descend(u.min(total * (1.0 - 1e-15)))
        })
        .collect();
    let weights = per_weights(tree, &indices, beta);
    Ok((indices, weights))
}

/// Importance weights for already-chosen leaves, batch-normalized to max 1.
pub fn per_weights(tree: &SumTree, indices: &[usize], beta: f64) -> Vec<f64> {
    let total = tree.total();
    let n = tree.occupied() as f64;
    let raw: Vec<f64> = indices
        .iter()
        .map(|&i| (n * tree.leaf(i) / total).powf(-beta))
        .collect();
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    raw.iter().map(|w| w / max).collect()
}

/// Select `k` distinct indices for removal, drawn sequentially without
/// replacement with probability proportional to `priority^(-alpha_remove)`.
///
/// All priorities must be positive.
pub fn psmm_select_removals<R: Rng>(
    priorities: &[f64],
    k: usize,
    alpha_remove: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > priorities.len() {
        return Err(Error::RemovalCount {
            k,
            len: priorities.len(),
        });
    }
    let mut weights = Vec::with_capacity(priorities.len());
    for (i, &p) in priorities.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::NonPositivePriority(i));
        }
        weights.push(p.powf(-alpha_remove));
    }
    let mut remaining: f64 = weights.iter().sum();
    let mut removed = vec![false; priorities.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = rng.random_range(0.0..remaining);
        let mut chosen = None;
        for (i, &w) in weights.iter().enumerate() {
            if removed[i] {
                continue;
            }
            if u < w {
                chosen = Some(i);
                break;
            }
            u -= w;
        }
        // Rounding can exhaust `u` just past the last live item; take it.
        let i = chosen.unwrap_or_else(|| {
            weights
                .iter()
                .enumerate()
                .rev()
                .find(|(i, _)| !removed[*i])
                .map(|(i, _)| i)
                .expect("at least one live item remains")
        });
        removed[i] = true;
        remaining -= weights[i];
        out.push(i);
    }
    Ok(out)
}
