//! The five online learners behind one step contract.
//!
//! Each learner consumes a labeled stream one example at a time, predicts,
//! decides whether to query the oracle for the true label, and updates its
//! state only as its policy allows:
//!
//! - `amlc`: committee prediction over all tasks, multiplicative
//!   relationship updates, and direct data sharing to trusted peers.
//! - `peer`: consults its peers for a pseudo-label when the task itself is
//!   unconfident, escalating to the oracle only when the peers are too.
//! - `peer-share`: `peer` plus data sharing on oracle rounds.
//! - `independent`: selective sampling from the task's own confidence only.
//! - `random`: queries with probability 1/2 regardless of confidence.
//!
//! Draw discipline: `amlc`, `independent` and `random` consume exactly one
//! uniform draw per step; the peer family consumes one, or two when the
//! first gate fires. A fixed seed therefore reproduces the full outcome
//! sequence bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    committee_confidence, per_task_confidences, predict_sign, query_probability, HyperParams,
    Label, RelationshipMatrix, WeightMatrix,
};
use crate::rng::draw_bernoulli;
use crate::sparse::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Amlc,
    Peer,
    PeerShare,
    Independent,
    Random,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::Random,
        LearnerKind::Independent,
        LearnerKind::Peer,
        LearnerKind::PeerShare,
        LearnerKind::Amlc,
    ];

    /// Learners whose behavior depends on the relationship learning rate C.
    pub fn uses_relationship_matrix(self) -> bool {
        matches!(
            self,
            LearnerKind::Amlc | LearnerKind::Peer | LearnerKind::PeerShare
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Amlc => "amlc",
            LearnerKind::Peer => "peer",
            LearnerKind::PeerShare => "peer-share",
            LearnerKind::Independent => "independent",
            LearnerKind::Random => "random",
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "amlc" => Ok(LearnerKind::Amlc),
            "peer" => Ok(LearnerKind::Peer),
            "peer-share" | "peer_share" => Ok(LearnerKind::PeerShare),
            "independent" => Ok(LearnerKind::Independent),
            "random" => Ok(LearnerKind::Random),
            other => Err(format!(
                "unknown learner '{other}' (expected amlc, peer, peer-share, independent or random)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("{kind} requires at least {required} tasks, dataset has {tasks}")]
    NotEnoughTasks {
        kind: LearnerKind,
        required: usize,
        tasks: usize,
    },
}

/// Answers a label request for the example currently under consideration.
/// `None` means the query budget is spent and no label can be had.
pub trait LabelOracle {
    fn query(&mut self) -> Option<Label>;
}

/// Oracle over one example's label, debiting a shared budget counter.
/// `None` budget means unlimited.
pub struct BudgetedOracle<'a> {
    label: Label,
    remaining: &'a mut Option<u64>,
}

impl<'a> BudgetedOracle<'a> {
    pub fn new(label: Label, remaining: &'a mut Option<u64>) -> Self {
        Self { label, remaining }
    }
}

impl LabelOracle for BudgetedOracle<'_> {
    fn query(&mut self) -> Option<Label> {
        match self.remaining {
            Some(0) => None,
            Some(n) => {
                *n -= 1;
                Some(self.label)
            }
            None => Some(self.label),
        }
    }
}

/// What one step did. `mistake` is only defined when the oracle was queried;
/// otherwise the true label was never seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub prediction: Label,
    pub queried_oracle: bool,
    pub queried_peer: bool,
    pub mistake: Option<bool>,
    /// Peers that received this example as a shared update (ascending, never
    /// contains the current task).
    pub shared_to: Vec<usize>,
    /// Tasks whose weight vector changed this step (ascending).
    pub updated_tasks: Vec<usize>,
}

impl StepOutcome {
    fn no_query(prediction: Label) -> Self {
        Self {
            prediction,
            queried_oracle: false,
            queried_peer: false,
            mistake: None,
            shared_to: Vec::new(),
            updated_tasks: Vec::new(),
        }
    }
}

/// A step either completes, or aborts because it decided to query an
/// exhausted oracle. The aborted step changes no state; the outcome it
/// carries records the prediction that was made before the denial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Completed(StepOutcome),
    OracleExhausted(StepOutcome),
}

impl StepResult {
    pub fn outcome(&self) -> &StepOutcome {
        match self {
            StepResult::Completed(o) | StepResult::OracleExhausted(o) => o,
        }
    }
}

/// Monotone run counters, kept in lockstep with the emitted outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub oracle_queries: u64,
    pub peer_queries: u64,
    /// Mistakes on queried rounds, per task.
    pub mistakes: Vec<u64>,
    /// Times the relationship-row underflow guard fired.
    pub tau_resets: u64,
}

impl Counters {
    fn new(tasks: usize) -> Self {
        Self {
            oracle_queries: 0,
            peer_queries: 0,
            mistakes: vec![0; tasks],
            tau_resets: 0,
        }
    }

    pub fn total_mistakes(&self) -> u64 {
        self.mistakes.iter().sum()
    }
}

/// One learner's full mutable state for a single sequential run.
pub struct Learner<R> {
    kind: LearnerKind,
    weights: WeightMatrix,
    tau: Option<RelationshipMatrix>,
    hyper: HyperParams,
    rng: R,
    counters: Counters,
    share_against_true_label: bool,
}

impl<R: Rng> Learner<R> {
    pub fn new(
        kind: LearnerKind,
        tasks: usize,
        hyper: HyperParams,
        rng: R,
    ) -> Result<Self, LearnerError> {
        if tasks == 0 {
            return Err(LearnerError::NotEnoughTasks {
                kind,
                required: 1,
                tasks,
            });
        }
        if matches!(kind, LearnerKind::Peer | LearnerKind::PeerShare) && tasks < 2 {
            return Err(LearnerError::NotEnoughTasks {
                kind,
                required: 2,
                tasks,
            });
        }
        let tau = match kind {
            LearnerKind::Amlc => Some(RelationshipMatrix::uniform(tasks)),
            LearnerKind::Peer | LearnerKind::PeerShare => {
                Some(RelationshipMatrix::peer_uniform(tasks))
            }
            LearnerKind::Independent | LearnerKind::Random => None,
        };
        Ok(Self {
            kind,
            weights: WeightMatrix::zeros(tasks),
            tau,
            hyper,
            rng,
            counters: Counters::new(tasks),
            share_against_true_label: false,
        })
    }

    /// AMLC only: share to peers that disagree with the true label instead of
    /// the committee prediction.
    pub fn share_against_true_label(mut self, on: bool) -> Self {
        self.share_against_true_label = on;
        self
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn tasks(&self) -> usize {
        self.weights.tasks()
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn tau(&self) -> Option<&RelationshipMatrix> {
        self.tau.as_ref()
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Feed one example. `task` is the 0-based task the example belongs to.
    pub fn step(
        &mut self,
        x: &SparseVector,
        task: usize,
        oracle: &mut dyn LabelOracle,
    ) -> StepResult {
        debug_assert!(task < self.tasks());
        match self.kind {
            LearnerKind::Amlc => self.amlc_step(x, task, oracle),
            LearnerKind::Peer => self.peer_step(x, task, oracle, false),
            LearnerKind::PeerShare => self.peer_step(x, task, oracle, true),
            LearnerKind::Independent => self.perceptron_step(x, task, oracle, None),
            LearnerKind::Random => self.perceptron_step(x, task, oracle, Some(0.5)),
        }
    }

    /// The model used at test time: the committee-combined weights for
    /// `amlc`, the raw per-task weights for everything else.
    pub fn finalize(self) -> WeightMatrix {
        match self.kind {
            LearnerKind::Amlc => {
                crate::model::combine_model(self.tau.as_ref().expect("amlc tau"), &self.weights)
            }
            _ => self.weights,
        }
    }

    fn amlc_step(
        &mut self,
        x: &SparseVector,
        task: usize,
        oracle: &mut dyn LabelOracle,
    ) -> StepResult {
        let tau = self.tau.as_mut().expect("amlc tau");
        let confidences = per_task_confidences(&self.weights, x);
        let p = committee_confidence(&confidences, tau.row(task));
        let prediction = predict_sign(p);
        if !draw_bernoulli(&mut self.rng, query_probability(self.hyper.b, p)) {
            return StepResult::Completed(StepOutcome::no_query(prediction));
        }
        let Some(y) = oracle.query() else {
            return StepResult::OracleExhausted(StepOutcome::no_query(prediction));
        };
        let mistake = y != prediction;
        if mistake {
            self.weights.row_mut(task).axpy(y.value(), x);
        }
        // Committee losses come from the confidences cached above, i.e. the
        // pre-update weights.
        let losses: Vec<f64> = confidences
            .iter()
            .map(|&p_m| (1.0 - y.value() * p_m).max(0.0))
            .collect();
        if tau.update_row(task, &losses, self.hyper.c) {
            self.counters.tau_resets += 1;
        }
        // Sharing checks trust against the row just updated.
        let target = if self.share_against_true_label {
            y
        } else {
            prediction
        };
        let mut shared_to = Vec::new();
        let mut updated_tasks = Vec::new();
        for m in 0..self.tasks() {
            if m == task {
                if mistake {
                    updated_tasks.push(m);
                }
                continue;
            }
            let disagrees = predict_sign(confidences[m]) != target;
            if disagrees && tau.entry(task, m) >= tau.entry(task, task) {
                self.weights.row_mut(m).axpy(y.value(), x);
                shared_to.push(m);
                updated_tasks.push(m);
            }
        }
        self.counters.oracle_queries += 1;
        if mistake {
            self.counters.mistakes[task] += 1;
        }
        StepResult::Completed(StepOutcome {
            prediction,
            queried_oracle: true,
            queried_peer: false,
            mistake: Some(mistake),
            shared_to,
            updated_tasks,
        })
    }

    /// `independent` (confidence-gated) and `random` (fixed-probability)
    /// single-task perceptron step.
    fn perceptron_step(
        &mut self,
        x: &SparseVector,
        task: usize,
        oracle: &mut dyn LabelOracle,
        fixed_query_probability: Option<f64>,
    ) -> StepResult {
        let p = x.dot(self.weights.row(task));
        let prediction = predict_sign(p);
        let q = fixed_query_probability.unwrap_or_else(|| query_probability(self.hyper.b, p));
        if !draw_bernoulli(&mut self.rng, q) {
            return StepResult::Completed(StepOutcome::no_query(prediction));
        }
        let Some(y) = oracle.query() else {
            return StepResult::OracleExhausted(StepOutcome::no_query(prediction));
        };
        let mistake = y != prediction;
        let mut updated_tasks = Vec::new();
        if mistake {
            self.weights.row_mut(task).axpy(y.value(), x);
            updated_tasks.push(task);
        }
        self.counters.oracle_queries += 1;
        if mistake {
            self.counters.mistakes[task] += 1;
        }
        StepResult::Completed(StepOutcome {
            prediction,
            queried_oracle: true,
            queried_peer: false,
            mistake: Some(mistake),
            shared_to: Vec::new(),
            updated_tasks,
        })
    }

    fn peer_step(
        &mut self,
        x: &SparseVector,
        task: usize,
        oracle: &mut dyn LabelOracle,
        share: bool,
    ) -> StepResult {
        let tasks = self.tasks();
        let own = x.dot(self.weights.row(task));
        let prediction = predict_sign(own);
        if !draw_bernoulli(&mut self.rng, query_probability(self.hyper.b, own)) {
            // Confident in itself: nothing is updated and nothing transfers.
            return StepResult::Completed(StepOutcome::no_query(prediction));
        }
        let tau = self.tau.as_mut().expect("peer tau");
        // Peer committee: the diagonal entry of a peer row is pinned to zero,
        // so the weighted sum already ranges over m != task only.
        let confidences = per_task_confidences(&self.weights, x);
        let peer_confidence = committee_confidence(&confidences, tau.row(task));
        if !draw_bernoulli(
            &mut self.rng,
            query_probability(self.hyper.b2, peer_confidence),
        ) {
            // Peers are confident enough: adopt their pseudo-label, no oracle.
            let pseudo = predict_sign(peer_confidence);
            let mut updated_tasks = Vec::new();
            if pseudo != prediction {
                self.weights.row_mut(task).axpy(pseudo.value(), x);
                updated_tasks.push(task);
            }
            self.counters.peer_queries += 1;
            return StepResult::Completed(StepOutcome {
                prediction,
                queried_oracle: false,
                queried_peer: true,
                mistake: None,
                shared_to: Vec::new(),
                updated_tasks,
            });
        }
        let Some(y) = oracle.query() else {
            return StepResult::OracleExhausted(StepOutcome::no_query(prediction));
        };
        let mistake = y != prediction;
        if mistake {
            self.weights.row_mut(task).axpy(y.value(), x);
        }
        let peer_losses: Vec<f64> = (0..tasks)
            .filter(|&m| m != task)
            .map(|m| (1.0 - y.value() * confidences[m]).max(0.0))
            .collect();
        if tau.update_row_peers(task, &peer_losses, self.hyper.c) {
            self.counters.tau_resets += 1;
        }
        let mut shared_to = Vec::new();
        let mut updated_tasks = Vec::new();
        if share {
            // Share the labeled example to every peer that mispredicts it and
            // holds at least the uniform peer weight.
            let threshold = 1.0 / (tasks - 1) as f64;
            for m in 0..tasks {
                if m == task {
                    continue;
                }
                if predict_sign(confidences[m]) != y && tau.entry(task, m) >= threshold {
                    self.weights.row_mut(m).axpy(y.value(), x);
                    shared_to.push(m);
                }
            }
        }
        for m in 0..tasks {
            if (m == task && mistake) || shared_to.contains(&m) {
                updated_tasks.push(m);
            }
        }
        self.counters.oracle_queries += 1;
        if mistake {
            self.counters.mistakes[task] += 1;
        }
        StepResult::Completed(StepOutcome {
            prediction,
            queried_oracle: true,
            queried_peer: false,
            mistake: Some(mistake),
            shared_to,
            updated_tasks,
        })
    }
}
