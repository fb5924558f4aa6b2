//! Rating accumulation, local-trust normalization and the EigenTrust global
//! trust iteration.
//!
//! Ratings are kept as signed totals `s[i][j]` (satisfied minus unsatisfied
//! transactions that `i` reported about `j`). Each row is normalized into a
//! local trust distribution over the nodes `i` has positive experience with,
//! and the global trust vector is the fixed point of
//! `t = (1 - a) * C^T t + a * p`, where `p` is the pre-trust distribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in the marketplace.
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("self-rating: node {0} cannot rate itself")]
    SelfRating(NodeId),
    #[error("unknown node {id} (node count {n})")]
    UnknownNode { id: NodeId, n: usize },
}

/// Signed rating totals between every ordered pair of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingLedger {
    n: usize,
    totals: Vec<i64>,
}

impl RatingLedger {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            totals: vec![0; n * n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Adds `+1` to `s[rater][target]` when satisfied, `-1` otherwise.
    pub fn record_rating(
        &mut self,
        rater: NodeId,
        target: NodeId,
        satisfied: bool,
    ) -> Result<(), TrustError> {
        self.check(rater)?;
        self.check(target)?;
        if rater == target {
            return Err(TrustError::SelfRating(rater));
        }
        self.totals[rater * self.n + target] += if satisfied { 1 } else { -1 };
        Ok(())
    }

    /// Current signed total `s[rater][target]`.
    pub fn get(&self, rater: NodeId, target: NodeId) -> i64 {
        self.totals[rater * self.n + target]
    }

    /// Overwrites a total directly. Used to build fixtures.
    pub fn set(&mut self, rater: NodeId, target: NodeId, value: i64) -> Result<(), TrustError> {
        self.check(rater)?;
        self.check(target)?;
        if rater == target {
            return Err(TrustError::SelfRating(rater));
        }
        self.totals[rater * self.n + target] = value;
        Ok(())
    }

    pub fn row(&self, rater: NodeId) -> &[i64] {
        &self.totals[rater * self.n..(rater + 1) * self.n]
    }

    fn check(&self, id: NodeId) -> Result<(), TrustError> {
        if id < self.n {
            Ok(())
        } else {
            Err(TrustError::UnknownNode { id, n: self.n })
        }
    }
}

/// Dense row-major square matrix of normalized local trust values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrustMatrix {
    n: usize,
    values: Vec<f64>,
}

impl LocalTrustMatrix {
    /// Builds a matrix from row vectors. Rows are taken as given; callers are
    /// responsible for them being stochastic.
    ///
    /// Panics if the rows do not form a square matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "local trust matrix must be square");
            values.extend_from_slice(row);
        }
        Self { n, values }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: NodeId) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.values[i * self.n + j]
    }

    /// Computes `C^T t`.
    pub fn transpose_mul(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &weight) in t.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            for (o, &c) in out.iter_mut().zip(self.row(i)) {
                *o += weight * c;
            }
        }
        out
    }
}

/// Pre-trust distribution: uniform over the flagged nodes, or uniform over all
/// nodes when none are flagged.
pub fn pretrust_vector(pretrusted: &[bool]) -> Vec<f64> {
    let count = pretrusted.iter().filter(|&&p| p).count();
    if count == 0 {
        let n = pretrusted.len();
        return vec![1.0 / n as f64; n];
    }
    let share = 1.0 / count as f64;
    pretrusted
        .iter()
        .map(|&p| if p { share } else { 0.0 })
        .collect()
}

/// Normalizes every ledger row into `c_ij = max(s_ij, 0) / sum_j max(s_ij, 0)`.
///
/// A row with no positive entries falls back to the pre-trust vector `p`, so
/// every row of the result sums to one.
pub fn local_trust_matrix(ledger: &RatingLedger, pretrust: &[f64]) -> LocalTrustMatrix {
    let n = ledger.node_count();
    debug_assert_eq!(pretrust.len(), n);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut values[i * n..(i + 1) * n];
        let mut total = 0i64;
        for (j, (&s, c)) in ledger.row(i).iter().zip(row.iter_mut()).enumerate() {
            if j != i && s > 0 {
                *c = s as f64;
                total += s;
            }
        }
        if total > 0 {
            let total = total as f64;
            row.iter_mut().for_each(|c| *c /= total);
        } else {
            row.copy_from_slice(pretrust);
        }
    }
    LocalTrustMatrix { n, values }
}

/// Parameters of the damped power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    /// Weight `a` of the pre-trust vector in each step.
    pub damping: f64,
    /// L1 distance between successive iterates that counts as converged.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for IterationParams {
    fn default() -> Self {
        Self {
            damping: 0.1,
            eps: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrust {
    pub scores: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates `t <- (1 - a) C^T t + a p` from `t = p` until the L1 step falls
/// below `eps` or `max_iter` steps have run.
///
/// Non-convergence is not an error: the last iterate is returned with
/// `converged == false`.
pub fn compute_global_trust(
    c: &LocalTrustMatrix,
    pretrust: &[f64],
    params: &IterationParams,
) -> GlobalTrust {
    let a = params.damping;
    let mut t = pretrust.to_vec();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let mut next = c.transpose_mul(&t);
        for (x, &p) in next.iter_mut().zip(pretrust) {
            *x = (1.0 - a) * *x + a * p;
        }
        let delta = l1_distance(&next, &t);
        t = next;
        iterations += 1;
        if delta < params.eps {
            converged = true;
            break;
        }
    }
    // Counter floating drift so the vector stays a distribution.
    let total: f64 = t.iter().sum();
    if total > 0.0 {
        t.iter_mut().for_each(|x| *x = (*x / total).max(0.0));
    }
    GlobalTrust {
        scores: t,
        converged,
        iterations,
    }
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
