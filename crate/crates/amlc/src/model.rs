//! Closed-form pieces of the committee learners: hinge losses, per-task and
//! committee confidences, the Bernoulli query probability, the multiplicative
//! relationship-matrix update, and the final model combination.

use serde::{Deserialize, Serialize};

use crate::sparse::SparseVector;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// The label as a signed unit: `+1.0` or `-1.0`.
    pub fn value(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Pos => write!(f, "+1"),
            Label::Neg => write!(f, "-1"),
        }
    }
}

/// Sign prediction from a confidence value. Zero maps to `+1` so that the
/// very first round on all-zero weights is deterministic.
pub fn predict_sign(p: f64) -> Label {
    if p >= 0.0 {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Hyperparameters shared by every learner.
///
/// `b` trades confidence against query rate (larger b queries more), `c` is
/// the relationship-matrix learning rate, and `b2` plays the role of `b` for
/// the peer-confidence gate in the PEER family (defaults to `b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub b: f64,
    pub c: f64,
    pub b2: f64,
}

impl HyperParams {
    pub fn new(b: f64, c: f64) -> Self {
        assert!(b > 0.0, "b must be positive");
        assert!(c > 0.0, "C must be positive");
        Self { b, c, b2: b }
    }

    pub fn with_b2(mut self, b2: f64) -> Self {
        assert!(b2 > 0.0, "b2 must be positive");
        self.b2 = b2;
        self
    }
}

/// Hinge loss `max(0, 1 - y * <x, w>)`.
///
/// With `w` the current task's own row this is the task loss; with another
/// task's row it is the peer loss that drives relationship updates.
pub fn hinge_loss(w: &SparseVector, x: &SparseVector, y: Label) -> f64 {
    (1.0 - y.value() * x.dot(w)).max(0.0)
}

/// Confidence of every task's classifier on `x`: element `m` is `<x, w_m>`.
pub fn per_task_confidences(w: &WeightMatrix, x: &SparseVector) -> Vec<f64> {
    w.rows.iter().map(|row| x.dot(row)).collect()
}

/// Committee confidence: the row-weighted sum of per-task confidences.
pub fn committee_confidence(confidences: &[f64], tau_row: &[f64]) -> f64 {
    debug_assert_eq!(confidences.len(), tau_row.len());
    confidences
        .iter()
        .zip(tau_row)
        .map(|(p, t)| p * t)
        .sum()
}

/// Probability of querying the oracle given confidence `p`: `b / (b + |p|)`.
/// Always in `(0, 1]`, and exactly 1 at zero confidence.
pub fn query_probability(b: f64, p: f64) -> f64 {
    debug_assert!(b > 0.0);
    b / (b + p.abs())
}

/// Result of a multiplicative row update.
pub struct TauRowUpdate {
    pub row: Vec<f64>,
    /// True when the multiplied row summed below 1e-300 and was reset to
    /// uniform instead of renormalized.
    pub underflow_reset: bool,
}

/// Multiplicative-weights update of one committee row.
///
/// Each entry is scaled by `exp(-c * loss_m / lambda)` with
/// `lambda = sum(losses)`, then the row is renormalized to sum to 1. When
/// every loss is zero all factors would be 1, so the row is returned
/// unchanged.
pub fn tau_row_update(tau_row: &[f64], losses: &[f64], c: f64) -> TauRowUpdate {
    debug_assert_eq!(tau_row.len(), losses.len());
    debug_assert!(losses.iter().all(|&l| l >= 0.0));
    let lambda: f64 = losses.iter().sum();
    if lambda == 0.0 {
        return TauRowUpdate {
            row: tau_row.to_vec(),
            underflow_reset: false,
        };
    }
    let mut row: Vec<f64> = tau_row
        .iter()
        .zip(losses)
        .map(|(&t, &l)| t * (-c * l / lambda).exp())
        .collect();
    let sum: f64 = row.iter().sum();
    if sum < 1e-300 {
        let uniform = 1.0 / row.len() as f64;
        return TauRowUpdate {
            row: vec![uniform; tau_row.len()],
            underflow_reset: true,
        };
    }
    for v in &mut row {
        *v /= sum;
    }
    TauRowUpdate {
        row,
        underflow_reset: false,
    }
}

/// Row-stochastic task-relationship matrix. Entry `(k, m)` is task `m`'s
/// voting weight in task `k`'s committee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipMatrix {
    rows: Vec<Vec<f64>>,
}

impl RelationshipMatrix {
    /// Uniform committee weights `1/K` everywhere.
    pub fn uniform(tasks: usize) -> Self {
        assert!(tasks > 0);
        let w = 1.0 / tasks as f64;
        Self {
            rows: vec![vec![w; tasks]; tasks],
        }
    }

    /// Peer-only committees: zero diagonal, `1/(K-1)` elsewhere. Rows sum to
    /// one over the peers. Requires at least two tasks.
    pub fn peer_uniform(tasks: usize) -> Self {
        assert!(tasks >= 2);
        let w = 1.0 / (tasks - 1) as f64;
        let rows = (0..tasks)
            .map(|k| {
                (0..tasks)
                    .map(|m| if m == k { 0.0 } else { w })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn entry(&self, k: usize, m: usize) -> f64 {
        self.rows[k][m]
    }

    /// Applies [`tau_row_update`] to row `k`. Returns true if the row was
    /// reset to uniform by the underflow guard.
    pub fn update_row(&mut self, k: usize, losses: &[f64], c: f64) -> bool {
        let updated = tau_row_update(&self.rows[k], losses, c);
        self.rows[k] = updated.row;
        updated.underflow_reset
    }

    /// Applies [`tau_row_update`] to row `k` restricted to entries `m != k`,
    /// leaving the diagonal untouched. `peer_losses` has length `K - 1`,
    /// covering tasks in ascending order with `k` skipped.
    pub fn update_row_peers(&mut self, k: usize, peer_losses: &[f64], c: f64) -> bool {
        let tasks = self.tasks();
        debug_assert_eq!(peer_losses.len(), tasks - 1);
        let current: Vec<f64> = (0..tasks)
            .filter(|&m| m != k)
            .map(|m| self.rows[k][m])
            .collect();
        let updated = tau_row_update(&current, peer_losses, c);
        let mut it = updated.row.into_iter();
        for m in 0..tasks {
            if m != k {
                self.rows[k][m] = it.next().expect("peer row length");
            }
        }
        updated.underflow_reset
    }
}

/// One sparse weight row per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: Vec<SparseVector>,
}

impl WeightMatrix {
    pub fn zeros(tasks: usize) -> Self {
        Self {
            rows: vec![SparseVector::new(); tasks],
        }
    }

    pub fn from_rows(rows: Vec<SparseVector>) -> Self {
        Self { rows }
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &SparseVector {
        &self.rows[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut SparseVector {
        &mut self.rows[k]
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }
}

/// Combines committees and weights into the test-time model: row `k` of the
/// result is the sparse linear combination `sum_m tau_km * w_m`.
pub fn combine_model(tau: &RelationshipMatrix, w: &WeightMatrix) -> WeightMatrix {
    assert_eq!(tau.tasks(), w.tasks());
    let rows = (0..tau.tasks())
        .map(|k| {
            let mut acc = SparseVector::new();
            for (m, row) in w.rows().iter().enumerate() {
                acc.axpy(tau.entry(k, m), row);
            }
            acc
        })
        .collect();
    WeightMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn hinge_loss_cases() {
        let x = sv(&[(0, 1.0)]);
        // zero weights: margin 0, loss 1
        assert_eq!(hinge_loss(&SparseVector::new(), &x, Label::Pos), 1.0);
        // margin beyond 1: loss 0
        assert_eq!(hinge_loss(&sv(&[(0, 2.0)]), &x, Label::Pos), 0.0);
        // y = -1 against confidence 0.5: loss 1.5
        assert_eq!(hinge_loss(&sv(&[(0, 0.5)]), &x, Label::Neg), 1.5);
    }

    #[test]
    fn per_task_confidences_cases() {
        let zero = WeightMatrix::zeros(3);
        let x = sv(&[(0, 2.0)]);
        assert_eq!(per_task_confidences(&zero, &x), vec![0.0, 0.0, 0.0]);

        let w = WeightMatrix::from_rows(vec![sv(&[(0, 1.0)]), sv(&[(0, -1.0)])]);
        assert_eq!(per_task_confidences(&w, &x), vec![2.0, -2.0]);
    }

    #[test]
    fn committee_confidence_cases() {
        assert_eq!(committee_confidence(&[2.0, -1.0], &[0.5, 0.5]), 0.5);
        // degenerate committee (all weight on one task) equals that task exactly
        assert_eq!(committee_confidence(&[3.25, -7.0], &[1.0, 0.0]), 3.25);
    }

    #[test]
    fn predict_sign_cases() {
        assert_eq!(predict_sign(0.5), Label::Pos);
        assert_eq!(predict_sign(-0.5), Label::Neg);
        assert_eq!(predict_sign(0.0), Label::Pos);
        assert_eq!(predict_sign(-0.0), Label::Pos);
    }

    #[test]
    fn query_probability_cases() {
        assert_eq!(query_probability(1.0, 0.0), 1.0);
        assert_eq!(query_probability(1.0, 1.0), 0.5);
        assert_eq!(query_probability(1.0, -1.0), 0.5);
        assert!((query_probability(2.0, 3.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn tau_update_zero_losses_leaves_row_unchanged() {
        let row = [0.3, 0.7];
        let up = tau_row_update(&row, &[0.0, 0.0], 1.0);
        assert_eq!(up.row, vec![0.3, 0.7]);
        assert!(!up.underflow_reset);
    }

    #[test]
    fn tau_update_hand_computed_pair() {
        // lambda = 2, factors (1, e^-1): (0.5, 0.5e^-1) normalized
        let up = tau_row_update(&[0.5, 0.5], &[0.0, 2.0], 1.0);
        assert!((up.row[0] - 0.731059).abs() < 1e-6);
        assert!((up.row[1] - 0.268941).abs() < 1e-6);
        let sum: f64 = up.row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_update_monotone_trust_on_example() {
        // loss(task 0) < loss(task 1) must strictly raise the 0:1 weight ratio,
        // by exactly exp(c * (l1 - l0) / lambda).
        let before = [0.5, 0.5];
        let up = tau_row_update(&before, &[0.0, 2.0], 1.0);
        let ratio_before = before[0] / before[1];
        let ratio_after = up.row[0] / up.row[1];
        assert!(ratio_after > ratio_before);
        assert!((ratio_after / ratio_before - 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn tau_update_underflow_resets_to_uniform() {
        // The zero-loss entry holds only 1e-305 and the other factor
        // underflows to 0, so the multiplied row sums below 1e-300.
        let up = tau_row_update(&[1e-305, 1.0 - 1e-305], &[0.0, 1.0], 1e5);
        assert!(up.underflow_reset);
        assert_eq!(up.row, vec![0.5, 0.5]);
    }

    #[test]
    fn combine_model_identity_cases() {
        let w = WeightMatrix::from_rows(vec![sv(&[(0, 1.0), (3, -2.0)])]);
        let combined = combine_model(&RelationshipMatrix::uniform(1), &w);
        assert_eq!(combined.row(0), w.row(0));

        let w2 = WeightMatrix::from_rows(vec![sv(&[(0, 1.0)]), sv(&[(1, 4.0)])]);
        let eye = RelationshipMatrix {
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(combine_model(&eye, &w2), w2);
    }

    #[test]
    fn peer_uniform_rows_sum_over_peers() {
        let tau = RelationshipMatrix::peer_uniform(4);
        for k in 0..4 {
            assert_eq!(tau.entry(k, k), 0.0);
            let sum: f64 = tau.row(k).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn update_row_peers_skips_diagonal() {
        let mut tau = RelationshipMatrix::peer_uniform(3);
        tau.update_row_peers(1, &[0.0, 2.0], 1.0);
        assert_eq!(tau.entry(1, 1), 0.0);
        assert!((tau.entry(1, 0) - 0.731059).abs() < 1e-6);
        assert!((tau.entry(1, 2) - 0.268941).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn tau_update_preserves_row_stochasticity(
            raw in prop::collection::vec(1e-6f64..1.0, 2..8),
            losses_raw in prop::collection::vec(0.0f64..5.0, 8),
            c in 0.01f64..5.0,
        ) {
            let k = raw.len();
            let sum: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let losses = &losses_raw[..k];
            let up = tau_row_update(&row, losses, c);
            let total: f64 = up.row.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(up.row.iter().all(|&v| v >= 0.0));
            // zero-loss tasks never lose absolute weight
            for m in 0..k {
                if losses[m] == 0.0 {
                    prop_assert!(up.row[m] >= row[m] - 1e-15);
                }
            }
        }

        #[test]
        fn combine_model_matches_dense_product(
            tau_raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 3),
            entries in prop::collection::vec((0u32..12, -3.0f64..3.0), 0..20),
        ) {
            let rows: Vec<Vec<f64>> = tau_raw
                .iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.iter().map(|v| v / s).collect()
                })
                .collect();
            let tau = RelationshipMatrix { rows: rows.clone() };
            let mut w_rows = vec![SparseVector::new(); 3];
            for (j, (i, v)) in entries.iter().enumerate() {
                w_rows[j % 3].axpy(*v, &SparseVector::from_pairs([(*i, 1.0)]));
            }
            let w = WeightMatrix::from_rows(w_rows.clone());
            let combined = combine_model(&tau, &w);
            for k in 0..3 {
                let mut dense = vec![0.0; 12];
                for (m, row) in w_rows.iter().enumerate() {
                    for (i, v) in row.iter() {
                        dense[i as usize] += rows[k][m] * v;
                    }
                }
                for i in 0..12u32 {
                    prop_assert!((combined.row(k).get(i) - dense[i as usize]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn one_hot_committee_equals_single_confidence(
            confidences in prop::collection::vec(-5.0f64..5.0, 1..6),
            pick in 0usize..6,
        ) {
            let k = confidences.len();
            let pick = pick % k;
            let mut row = vec![0.0; k];
            row[pick] = 1.0;
            prop_assert_eq!(committee_confidence(&confidences, &row), confidences[pick]);
        }
    }
}
