//! Core MDP representations and exact finite-chain analysis.
//!
//! Finite models are stored as explicit kernel/cost tables ([`FiniteMdp`]);
//! countable models are generator-based ([`CountableModel`]) with a designated
//! finite interior set and a finite family of exterior policies. The chain
//! analysis here — stationary distributions, policy gains, expected hitting
//! quantities — is the workhorse behind both the excursion statistics and the
//! cycle-ratio evaluations.

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

/// Identifier of a state. Countable models encode their states as integers
/// via a model-supplied bijection onto a subset of the naturals; finite
/// models use indices `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub u64);

impl StateId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Index into the finite action list of a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// Tolerance on kernel row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("distribution does not sum to 1 (sum = {sum})")]
    BadSum { sum: f64 },
    #[error("distribution carries a non-positive or non-finite probability {prob} at state {state:?}")]
    BadProbability { state: StateId, prob: f64 },
    #[error("distribution repeats state {state:?}")]
    DuplicateSupport { state: StateId },
    #[error("state {state:?} is out of range (model has {n_states} states)")]
    StateOutOfRange { state: StateId, n_states: usize },
    #[error("state {state:?} has no actions")]
    NoActions { state: StateId },
    #[error("auxiliary cost vectors have inconsistent lengths ({found} vs {expected})")]
    AuxLengthMismatch { expected: usize, found: usize },
    #[error("policy chooses action {action:?} at state {state:?}, which has {available} actions")]
    BadPolicyAction {
        state: StateId,
        action: ActionId,
        available: usize,
    },
    #[error("policy vector has length {found}, model has {expected} states")]
    BadPolicyLength { expected: usize, found: usize },
    #[error("interior set is empty or repeats a state")]
    BadInterior,
    #[error("invalid model parameter: {0}")]
    BadParameter(String),
}

/// A finitely supported probability distribution over states.
///
/// Entries are strictly positive, state ids are distinct, and the total mass
/// is 1 within [`ROW_SUM_TOL`]. Exact zeros passed to the constructor are
/// dropped rather than rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    support: Vec<(StateId, f64)>,
}

impl Distribution {
    pub fn new(entries: Vec<(StateId, f64)>) -> Result<Self, ModelError> {
        let mut support: Vec<(StateId, f64)> = Vec::with_capacity(entries.len());
        let mut sum = 0.0;
        for (state, prob) in entries {
            if prob == 0.0 {
                continue;
            }
            if !prob.is_finite() || prob <= 0.0 {
                return Err(ModelError::BadProbability { state, prob });
            }
            if support.iter().any(|&(s, _)| s == state) {
                return Err(ModelError::DuplicateSupport { state });
            }
            sum += prob;
            support.push((state, prob));
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ModelError::BadSum { sum });
        }
        Ok(Self { support })
    }

    /// Point mass at `state`.
    pub fn point(state: StateId) -> Self {
        Self {
            support: vec![(state, 1.0)],
        }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn prob(&self, state: StateId) -> f64 {
        self.support
            .iter()
            .find(|&&(s, _)| s == state)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Inverse-CDF sample in support order; `u` must lie in [0, 1).
    pub fn sample(&self, u: f64) -> StateId {
        let mut acc = 0.0;
        for &(state, p) in &self.support {
            acc += p;
            if u < acc {
                return state;
            }
        }
        // Mass can fall short of u by at most ROW_SUM_TOL.
        self.support.last().expect("empty distribution").0
    }
}

/// A finite MDP as explicit tables: per-state action lists with a transition
/// distribution, a running cost, and `K ≥ 0` auxiliary costs per action.
#[derive(Clone, Debug)]
pub struct FiniteMdp {
    kernel: Vec<Vec<Distribution>>,
    cost: Vec<Vec<f64>>,
    aux: Vec<Vec<Vec<f64>>>,
    labels: Vec<Vec<String>>,
    aux_len: usize,
}

impl FiniteMdp {
    pub fn new(
        kernel: Vec<Vec<Distribution>>,
        cost: Vec<Vec<f64>>,
        aux: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ModelError> {
        let labels = kernel
            .iter()
            .map(|acts| (0..acts.len()).map(|a| a.to_string()).collect())
            .collect();
        Self::with_labels(kernel, cost, aux, labels)
    }

    pub fn with_labels(
        kernel: Vec<Vec<Distribution>>,
        cost: Vec<Vec<f64>>,
        aux: Vec<Vec<Vec<f64>>>,
        labels: Vec<Vec<String>>,
    ) -> Result<Self, ModelError> {
        let n = kernel.len();
        if cost.len() != n || aux.len() != n || labels.len() != n {
            return Err(ModelError::BadParameter(
                "kernel, cost, aux and label tables must have one entry per state".into(),
            ));
        }
        let mut aux_len: Option<usize> = None;
        for (s, actions) in kernel.iter().enumerate() {
            let state = StateId(s as u64);
            if actions.is_empty() {
                return Err(ModelError::NoActions { state });
            }
            if cost[s].len() != actions.len()
                || aux[s].len() != actions.len()
                || labels[s].len() != actions.len()
            {
                return Err(ModelError::BadParameter(format!(
                    "state {s} has inconsistent action table lengths"
                )));
            }
            for dist in actions {
                for &(target, _) in dist.support() {
                    if target.idx() >= n {
                        return Err(ModelError::StateOutOfRange {
                            state: target,
                            n_states: n,
                        });
                    }
                }
            }
            for k in &aux[s] {
                match aux_len {
                    None => aux_len = Some(k.len()),
                    Some(expected) if expected != k.len() => {
                        return Err(ModelError::AuxLengthMismatch {
                            expected,
                            found: k.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            kernel,
            cost,
            aux,
            labels,
            aux_len: aux_len.unwrap_or(0),
        })
    }

    pub fn n_states(&self) -> usize {
        self.kernel.len()
    }

    pub fn action_count(&self, state: usize) -> usize {
        self.kernel[state].len()
    }

    pub fn transition(&self, state: usize, action: ActionId) -> &Distribution {
        &self.kernel[state][action.0]
    }

    pub fn cost(&self, state: usize, action: ActionId) -> f64 {
        self.cost[state][action.0]
    }

    pub fn aux_cost(&self, state: usize, action: ActionId) -> &[f64] {
        &self.aux[state][action.0]
    }

    pub fn aux_len(&self) -> usize {
        self.aux_len
    }

    pub fn action_label(&self, state: usize, action: ActionId) -> &str {
        &self.labels[state][action.0]
    }

    /// Replace the cost table, keeping kernel and aux layers.
    pub fn with_cost_table(&self, cost: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::with_labels(
            self.kernel.clone(),
            cost,
            self.aux.clone(),
            self.labels.clone(),
        )
    }
}

/// A deterministic stationary policy on a finite MDP: one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    pub choice: Vec<ActionId>,
}

impl StationaryPolicy {
    pub fn new(choice: Vec<ActionId>) -> Self {
        Self { choice }
    }

    pub fn validate(&self, mdp: &FiniteMdp) -> Result<(), ModelError> {
        if self.choice.len() != mdp.n_states() {
            return Err(ModelError::BadPolicyLength {
                expected: mdp.n_states(),
                found: self.choice.len(),
            });
        }
        for (s, &a) in self.choice.iter().enumerate() {
            if a.0 >= mdp.action_count(s) {
                return Err(ModelError::BadPolicyAction {
                    state: StateId(s as u64),
                    action: a,
                    available: mdp.action_count(s),
                });
            }
        }
        Ok(())
    }
}

/// A stationary policy on a countable model: one action per interior state
/// (aligned with the model's interior order) plus the index of the exterior
/// policy driving the process outside the interior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePolicy {
    pub interior: Vec<ActionId>,
    pub exterior_policy: usize,
}

/// Generator-based countable-state MDP with a designated finite interior set
/// and a finite family of stationary exterior behaviors.
///
/// States are encoded as integers; kernels have finite support; costs and
/// kernels are pure functions of `(state, action)`.
pub trait CountableModel: Send + Sync {
    fn action_count(&self, state: StateId) -> usize;
    fn transition(&self, state: StateId, action: ActionId) -> Distribution;
    fn cost(&self, state: StateId, action: ActionId) -> f64;

    fn aux_len(&self) -> usize {
        0
    }

    fn aux_cost(&self, _state: StateId, _action: ActionId) -> Vec<f64> {
        Vec::new()
    }

    /// The interior set `Z`, duplicate-free; its order fixes the index space
    /// used by entrance distributions and the embedding.
    fn interior(&self) -> &[StateId];

    fn exterior_policy_count(&self) -> usize;

    /// Action taken at an exterior state under exterior policy `policy`.
    fn exterior_choice(&self, policy: usize, state: StateId) -> ActionId;

    fn is_interior(&self, state: StateId) -> bool {
        self.interior().contains(&state)
    }

    /// Human-readable action label used in reports (e.g. a service rate).
    fn action_label(&self, _state: StateId, action: ActionId) -> String {
        action.0.to_string()
    }
}

/// A policy-induced Markov chain on `0..n`.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    rows: Vec<Distribution>,
}

impl MarkovChain {
    pub fn new(rows: Vec<Distribution>) -> Result<Self, ModelError> {
        let n = rows.len();
        for row in &rows {
            for &(target, _) in row.support() {
                if target.idx() >= n {
                    return Err(ModelError::StateOutOfRange {
                        state: target,
                        n_states: n,
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state: usize) -> &Distribution {
        &self.rows[state]
    }
}

/// The chain obtained by fixing a stationary policy on a finite MDP.
pub fn induced_chain(mdp: &FiniteMdp, policy: &StationaryPolicy) -> Result<MarkovChain, ModelError> {
    policy.validate(mdp)?;
    let rows = (0..mdp.n_states())
        .map(|s| mdp.transition(s, policy.choice[s]).clone())
        .collect();
    MarkovChain::new(rows)
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain has {classes} disjoint recurrent classes; a single class is required")]
    MultiChain { classes: usize },
    #[error("target set is not reached with probability 1 from state {state:?}")]
    NotAbsorbed { state: StateId },
    #[error(transparent)]
    Numeric(#[from] LinalgError),
}

/// Strongly connected components of the positive-probability graph that are
/// closed (no transition leaves them) — i.e. the recurrent classes.
pub(crate) fn recurrent_classes(chain: &MarkovChain) -> Vec<Vec<usize>> {
    let mut graph = DiGraph::<(), ()>::with_capacity(chain.n(), chain.n() * 2);
    for _ in 0..chain.n() {
        graph.add_node(());
    }
    for s in 0..chain.n() {
        for &(t, _) in chain.row(s).support() {
            graph.add_edge((s as u32).into(), (t.idx() as u32).into(), ());
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let mut classes = Vec::new();
    for scc in sccs {
        let members: Vec<usize> = scc.iter().map(|ix| ix.index()).collect();
        let closed = members.iter().all(|&s| {
            chain
                .row(s)
                .support()
                .iter()
                .all(|&(t, _)| members.contains(&t.idx()))
        });
        if closed {
            let mut sorted = members;
            sorted.sort_unstable();
            classes.push(sorted);
        }
    }
    classes.sort();
    classes
}

/// Stationary distribution of the policy-induced chain.
///
/// Requires a single recurrent class; transient states get probability 0.
pub fn stationary_distribution(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
) -> Result<Vec<f64>, ChainError> {
    let chain = induced_chain(mdp, policy).map_err(|e| ChainError::Numeric(bad_model(e)))?;
    chain_stationary(&chain)
}

pub(crate) fn chain_stationary(chain: &MarkovChain) -> Result<Vec<f64>, ChainError> {
    let classes = recurrent_classes(chain);
    if classes.len() != 1 {
        return Err(ChainError::MultiChain {
            classes: classes.len(),
        });
    }
    let class = &classes[0];
    let m = class.len();
    let pos: std::collections::HashMap<usize, usize> =
        class.iter().enumerate().map(|(k, &s)| (s, k)).collect();

    let pi_class = if m <= linalg::DENSE_LIMIT {
        // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1.
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        for (k, &s) in class.iter().enumerate() {
            for &(t, p) in chain.row(s).support() {
                let j = pos[&t.idx()];
                a[(j, k)] += p;
            }
            a[(k, k)] -= 1.0;
        }
        for k in 0..m {
            a[(m - 1, k)] = 1.0;
        }
        let mut b = nalgebra::DMatrix::<f64>::zeros(m, 1);
        b[(m - 1, 0)] = 1.0;
        let x = linalg::dense_solve(a, b)?;
        (0..m).map(|k| x[(k, 0)]).collect::<Vec<f64>>()
    } else {
        power_stationary(chain, class, &pos)
    };

    let mut pi = vec![0.0; chain.n()];
    for (k, &s) in class.iter().enumerate() {
        pi[s] = pi_class[k].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= total;
    }
    Ok(pi)
}

/// Damped power iteration on the recurrent class; the ½(I + P) blend keeps
/// periodic chains from oscillating without moving the fixed point.
fn power_stationary(
    chain: &MarkovChain,
    class: &[usize],
    pos: &std::collections::HashMap<usize, usize>,
) -> Vec<f64> {
    let m = class.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..1_000_000 {
        for v in next.iter_mut() {
            *v = 0.0;
        }
        for (k, &s) in class.iter().enumerate() {
            next[k] += 0.5 * pi[k];
            for &(t, p) in chain.row(s).support() {
                next[pos[&t.idx()]] += 0.5 * p * pi[k];
            }
        }
        let diff = pi
            .iter()
            .zip(&next)
            .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-14 {
            break;
        }
    }
    pi
}

/// Long-run average cost of a stationary policy on a unichain finite MDP:
/// the stationary expectation of the running cost.
pub fn average_cost_of_policy(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
) -> Result<f64, ChainError> {
    let pi = stationary_distribution(mdp, policy)?;
    Ok(pi
        .iter()
        .enumerate()
        .map(|(s, &p)| p * mdp.cost(s, policy.choice[s]))
        .sum())
}

/// Expected cost accumulated until the chain first hits `target`, from every
/// non-target state: the minimal non-negative solution of `h = c + Q h` with
/// `h ≡ 0` on the target set. With `c ≡ 1` this is the expected hitting time.
///
/// Fails with [`ChainError::NotAbsorbed`] if some state can reach a closed
/// class disjoint from the target, i.e. the hitting probability is below 1.
pub fn expected_hitting(
    chain: &MarkovChain,
    target: &[usize],
    step_cost: &[f64],
) -> Result<Vec<f64>, ChainError> {
    let n = chain.n();
    assert_eq!(step_cost.len(), n, "step cost must cover every state");
    let mut in_target = vec![false; n];
    for &t in target {
        in_target[t] = true;
    }

    // A closed class disjoint from the target traps the chain forever; any
    // state that can reach one has hitting probability < 1.
    let classes = recurrent_classes(chain);
    let mut trapped = vec![false; n];
    for class in &classes {
        if class.iter().all(|&s| !in_target[s]) {
            for &s in class {
                trapped[s] = true;
            }
        }
    }
    // Propagate trap reachability backwards.
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if trapped[s] || in_target[s] {
                continue;
            }
            if chain.row(s).support().iter().any(|&(t, _)| trapped[t.idx()]) {
                trapped[s] = true;
                changed = true;
            }
        }
    }
    if let Some(s) = (0..n).find(|&s| trapped[s] && !in_target[s]) {
        return Err(ChainError::NotAbsorbed {
            state: StateId(s as u64),
        });
    }

    let free: Vec<usize> = (0..n).filter(|&s| !in_target[s]).collect();
    let pos: std::collections::HashMap<usize, usize> =
        free.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let rows: Vec<Vec<(usize, f64)>> = free
        .iter()
        .map(|&s| {
            chain
                .row(s)
                .support()
                .iter()
                .filter(|&&(t, _)| !in_target[t.idx()])
                .map(|&(t, p)| (pos[&t.idx()], p))
                .collect()
        })
        .collect();
    let rhs = vec![free.iter().map(|&s| step_cost[s]).collect::<Vec<f64>>()];
    let sol = linalg::transient_solve(&rows, &rhs)?;
    let mut h = vec![0.0; n];
    for (k, &s) in free.iter().enumerate() {
        h[s] = sol[0][k];
    }
    Ok(h)
}

/// Materialize a countable model whose kernel never leaves `0..n_states` into
/// an explicit finite MDP, keeping each state's full action list.
pub fn materialize_finite(
    model: &dyn CountableModel,
    n_states: u64,
) -> Result<FiniteMdp, ModelError> {
    let n = n_states as usize;
    let mut kernel = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    let mut aux = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n_states {
        let state = StateId(s);
        let k = model.action_count(state);
        if k == 0 {
            return Err(ModelError::NoActions { state });
        }
        let mut dists = Vec::with_capacity(k);
        let mut costs = Vec::with_capacity(k);
        let mut auxs = Vec::with_capacity(k);
        let mut labs = Vec::with_capacity(k);
        for a in 0..k {
            let action = ActionId(a);
            let dist = model.transition(state, action);
            for &(t, _) in dist.support() {
                if t.0 >= n_states {
                    return Err(ModelError::StateOutOfRange {
                        state: t,
                        n_states: n,
                    });
                }
            }
            dists.push(dist);
            costs.push(model.cost(state, action));
            auxs.push(model.aux_cost(state, action));
            labs.push(model.action_label(state, action));
        }
        kernel.push(dists);
        cost.push(costs);
        aux.push(auxs);
        labels.push(labs);
    }
    FiniteMdp::with_labels(kernel, cost, aux, labels)
}

fn bad_model(e: ModelError) -> LinalgError {
    // Model-shape problems surface before any numerics; fold them into the
    // singular bucket so ChainError stays small.
    let _ = e;
    LinalgError::Singular
}
