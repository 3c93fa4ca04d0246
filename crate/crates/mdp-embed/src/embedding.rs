//! Construction of the embedded finite MDP.
//!
//! Given a countable model with interior `Z = {z_1, …, z_n}` and excursion
//! summaries for every exit channel, the embedded model has `2n` states:
//! `s_1, …, s_n` mirroring the interior (indices `0..n`) and `ω_1, …, ω_n`
//! (indices `n..2n`) summarizing excursions that left through the matching
//! boundary state. Interior rows keep the source kernel on `Z` and send the
//! exit mass to their own ω state; an ω row under action `α` enters `s_j`
//! with probability `λ q_j` and stays put with probability `1 − λ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::excursion::ExcursionSummary;
use crate::mdp::{
    ActionId, CountableModel, Distribution, FiniteMdp, ModelError, SourcePolicy, StateId,
    StationaryPolicy,
};

/// Componentwise tolerance for identifying equal ω-actions.
pub const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no excursion summary for boundary {boundary:?}, action {action:?}, exterior policy {exterior_policy}")]
    MissingSummary {
        boundary: StateId,
        action: ActionId,
        exterior_policy: usize,
    },
    #[error("summary for boundary {boundary:?} has an entrance vector of length {found}, interior has {expected} states")]
    EntranceLength {
        boundary: StateId,
        expected: usize,
        found: usize,
    },
    #[error("summary aux layers ({found}) do not match the model's {expected}")]
    AuxLayers { expected: usize, found: usize },
    #[error("ω state {omega} has no action matching interior action {action:?} under exterior policy {exterior_policy}")]
    NoMatchingOmegaAction {
        omega: usize,
        action: ActionId,
        exterior_policy: usize,
    },
    #[error("chosen ω actions admit no common exterior policy: {details}")]
    InconsistentExterior { details: String },
    #[error("policy indexes interior state {index}, embedding has {n}")]
    PolicyLength { index: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where an ω-action came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Derived from excursions under (interior action at the boundary,
    /// exterior policy).
    Policy {
        interior_action: ActionId,
        exterior_policy: usize,
    },
    /// Filler for an ω state that cannot be reached: exits are impossible
    /// from its boundary state under every action.
    Inert,
}

/// One action available at an ω state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaAction {
    pub lambda: f64,
    /// Entrance distribution over interior states (conditional on entering).
    pub entrance: Vec<f64>,
    /// Running cost of the ω state under this action.
    pub cost: f64,
    pub aux: Vec<f64>,
    /// All channels that produced this action (merged on deduplication).
    pub provenance: Vec<Provenance>,
}

impl OmegaAction {
    fn same_transitions(&self, other: &Self) -> bool {
        if (self.lambda - other.lambda).abs() > DEDUP_TOL {
            return false;
        }
        self.entrance
            .iter()
            .zip(&other.entrance)
            .all(|(a, b)| (self.lambda * a - other.lambda * b).abs() <= DEDUP_TOL)
    }

    fn same_aux(&self, other: &Self) -> bool {
        self.aux.len() == other.aux.len()
            && self
                .aux
                .iter()
                .zip(&other.aux)
                .all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
    }
}

/// The embedded finite MDP together with its provenance annex.
#[derive(Clone, Debug)]
pub struct EmbeddedMdp {
    /// 2n-state finite MDP: `0..n` mirror the interior, `n..2n` are ω states.
    pub base: FiniteMdp,
    /// The bijection from s-indices to source interior states.
    pub interior: Vec<StateId>,
    /// Per ω state, the available actions in base-action order.
    pub omega_actions: Vec<Vec<OmegaAction>>,
}

impl EmbeddedMdp {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn omega_index(&self, i: usize) -> usize {
        self.interior.len() + i
    }

    pub fn source_state(&self, s_index: usize) -> StateId {
        self.interior[s_index]
    }

    /// True when every ω state carries only the inert filler action, i.e.
    /// the source kernel never leaves the interior.
    pub fn omega_unreachable(&self) -> bool {
        self.omega_actions
            .iter()
            .all(|acts| acts.iter().all(|a| a.provenance == vec![Provenance::Inert]))
    }

    /// Rebuild the model with a different ω-action table, keeping the
    /// interior rows.
    pub fn replace_omega_actions(
        &self,
        omega_actions: Vec<Vec<OmegaAction>>,
    ) -> Result<Self, EmbeddingError> {
        let n = self.n_interior();
        assert_eq!(omega_actions.len(), n, "one action list per ω state");
        let aux_len = self.base.aux_len();
        let mut kernel = Vec::with_capacity(2 * n);
        let mut cost = Vec::with_capacity(2 * n);
        let mut aux = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(2 * n);
        for s in 0..n {
            let k = self.base.action_count(s);
            kernel.push(
                (0..k)
                    .map(|a| self.base.transition(s, ActionId(a)).clone())
                    .collect(),
            );
            cost.push((0..k).map(|a| self.base.cost(s, ActionId(a))).collect());
            aux.push(
                (0..k)
                    .map(|a| self.base.aux_cost(s, ActionId(a)).to_vec())
                    .collect(),
            );
            labels.push(
                (0..k)
                    .map(|a| self.base.action_label(s, ActionId(a)).to_string())
                    .collect(),
            );
        }
        for (i, actions) in omega_actions.iter().enumerate() {
            let (rows, costs, auxs, labs) = omega_rows(n, i, actions, aux_len)?;
            kernel.push(rows);
            cost.push(costs);
            aux.push(auxs);
            labels.push(labs);
        }
        let base = FiniteMdp::with_labels(kernel, cost, aux, labels)?;
        Ok(Self {
            base,
            interior: self.interior.clone(),
            omega_actions,
        })
    }
}

type StateTables = (Vec<Distribution>, Vec<f64>, Vec<Vec<f64>>, Vec<String>);

fn omega_rows(
    n: usize,
    i: usize,
    actions: &[OmegaAction],
    aux_len: usize,
) -> Result<StateTables, EmbeddingError> {
    let mut rows = Vec::with_capacity(actions.len());
    let mut costs = Vec::with_capacity(actions.len());
    let mut auxs = Vec::with_capacity(actions.len());
    let mut labs = Vec::with_capacity(actions.len());
    for (k, action) in actions.iter().enumerate() {
        if action.aux.len() != aux_len {
            return Err(EmbeddingError::AuxLayers {
                expected: aux_len,
                found: action.aux.len(),
            });
        }
        let mut entries: Vec<(StateId, f64)> = action
            .entrance
            .iter()
            .enumerate()
            .filter(|&(_, q)| *q > 0.0)
            .map(|(j, &q)| (StateId(j as u64), action.lambda * q))
            .collect();
        if action.lambda < 1.0 {
            entries.push((StateId((n + i) as u64), 1.0 - action.lambda));
        }
        rows.push(Distribution::new(entries).map_err(EmbeddingError::Model)?);
        costs.push(action.cost);
        auxs.push(action.aux.clone());
        labs.push(k.to_string());
    }
    Ok((rows, costs, auxs, labs))
}

/// Build the embedded MDP from a countable model and excursion summaries
/// covering every exit channel with positive exit mass. Auxiliary cost
/// layers are dropped; see [`extend_constrained`] to keep them.
pub fn build_embedding(
    model: &dyn CountableModel,
    summaries: &[ExcursionSummary],
) -> Result<EmbeddedMdp, EmbeddingError> {
    build_inner(model, summaries, false)
}

/// Build the embedded MDP carrying the model's `K` auxiliary cost layers:
/// interior states keep their source aux costs, and each ω-action carries
/// `λ ·` (auxiliary excursion cost) per layer.
pub fn extend_constrained(
    model: &dyn CountableModel,
    summaries: &[ExcursionSummary],
) -> Result<EmbeddedMdp, EmbeddingError> {
    build_inner(model, summaries, true)
}

fn build_inner(
    model: &dyn CountableModel,
    summaries: &[ExcursionSummary],
    with_aux: bool,
) -> Result<EmbeddedMdp, EmbeddingError> {
    let interior = model.interior().to_vec();
    let n = interior.len();
    let aux_len = if with_aux { model.aux_len() } else { 0 };
    let pos: std::collections::BTreeMap<StateId, usize> = interior
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, k))
        .collect();

    let mut by_channel: std::collections::BTreeMap<(StateId, ActionId, usize), &ExcursionSummary> =
        std::collections::BTreeMap::new();
    for s in summaries {
        if s.entrance.len() != n {
            return Err(EmbeddingError::EntranceLength {
                boundary: s.boundary_state,
                expected: n,
                found: s.entrance.len(),
            });
        }
        by_channel.insert((s.boundary_state, s.interior_action, s.exterior_policy), s);
    }

    let mut kernel: Vec<Vec<Distribution>> = Vec::with_capacity(2 * n);
    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(2 * n);
    let mut aux: Vec<Vec<Vec<f64>>> = Vec::with_capacity(2 * n);
    let mut labels: Vec<Vec<String>> = Vec::with_capacity(2 * n);
    let mut omega_actions: Vec<Vec<OmegaAction>> = vec![Vec::new(); n];

    for (i, &z) in interior.iter().enumerate() {
        let k = model.action_count(z);
        let mut dists = Vec::with_capacity(k);
        let mut costs = Vec::with_capacity(k);
        let mut auxs = Vec::with_capacity(k);
        let mut labs = Vec::with_capacity(k);
        for a in 0..k {
            let action = ActionId(a);
            let row = model.transition(z, action);
            let mut entries: Vec<(StateId, f64)> = Vec::new();
            let mut exit = 0.0;
            for &(t, p) in row.support() {
                match pos.get(&t) {
                    Some(&j) => entries.push((StateId(j as u64), p)),
                    None => exit += p,
                }
            }
            if exit > 0.0 {
                entries.push((StateId((n + i) as u64), exit));
                // Coverage: every exiting channel needs a summary per
                // exterior policy.
                for ext in 0..model.exterior_policy_count() {
                    let summary = by_channel.get(&(z, action, ext)).ok_or(
                        EmbeddingError::MissingSummary {
                            boundary: z,
                            action,
                            exterior_policy: ext,
                        },
                    )?;
                    let candidate = OmegaAction {
                        lambda: summary.lambda,
                        entrance: summary.entrance.clone(),
                        cost: summary.omega_cost,
                        aux: if with_aux {
                            if summary.aux_omega_costs.len() != aux_len {
                                return Err(EmbeddingError::AuxLayers {
                                    expected: aux_len,
                                    found: summary.aux_omega_costs.len(),
                                });
                            }
                            summary.aux_omega_costs.clone()
                        } else {
                            Vec::new()
                        },
                        provenance: vec![Provenance::Policy {
                            interior_action: action,
                            exterior_policy: ext,
                        }],
                    };
                    merge_action(&mut omega_actions[i], candidate);
                }
            }
            dists.push(Distribution::new(entries).map_err(EmbeddingError::Model)?);
            costs.push(model.cost(z, action));
            auxs.push(if with_aux {
                model.aux_cost(z, action)
            } else {
                Vec::new()
            });
            labs.push(model.action_label(z, action));
        }
        kernel.push(dists);
        cost.push(costs);
        aux.push(auxs);
        labels.push(labs);
    }

    for (i, actions) in omega_actions.iter_mut().enumerate() {
        if actions.is_empty() {
            // No exit is possible from this boundary state; the ω state is
            // unreachable and any action is sound.
            let mut entrance = vec![0.0; n];
            entrance[i] = 1.0;
            actions.push(OmegaAction {
                lambda: 1.0,
                entrance,
                cost: 0.0,
                aux: vec![0.0; aux_len],
                provenance: vec![Provenance::Inert],
            });
        }
    }

    for (i, actions) in omega_actions.iter().enumerate() {
        let (rows, costs, auxs, labs) = omega_rows(n, i, actions, aux_len)?;
        kernel.push(rows);
        cost.push(costs);
        aux.push(auxs);
        labels.push(labs);
    }

    let base = FiniteMdp::with_labels(kernel, cost, aux, labels)?;
    Ok(EmbeddedMdp {
        base,
        interior,
        omega_actions,
    })
}

/// Insert `candidate` unless an identical action (transitions, cost, aux all
/// within [`DEDUP_TOL`]) is already present, in which case provenance merges.
fn merge_action(actions: &mut Vec<OmegaAction>, candidate: OmegaAction) {
    for existing in actions.iter_mut() {
        if existing.same_transitions(&candidate)
            && existing.same_aux(&candidate)
            && (existing.cost - candidate.cost).abs() <= DEDUP_TOL
        {
            for p in candidate.provenance {
                if !existing.provenance.contains(&p) {
                    existing.provenance.push(p);
                }
            }
            return;
        }
    }
    actions.push(candidate);
}

/// Drop ω-actions that are dominated: among actions with identical
/// transition vectors `(λq_1, …, λq_n)` and identical aux vectors, only the
/// cheapest survives. The optimal gain is unchanged.
pub fn eliminate_dominated(emdp: &EmbeddedMdp) -> EmbeddedMdp {
    let mut new_actions: Vec<Vec<OmegaAction>> = Vec::with_capacity(emdp.omega_actions.len());
    for actions in &emdp.omega_actions {
        let mut kept: Vec<OmegaAction> = Vec::new();
        for action in actions {
            match kept
                .iter_mut()
                .find(|k| k.same_transitions(action) && k.same_aux(action))
            {
                Some(existing) => {
                    if action.cost < existing.cost {
                        existing.cost = action.cost;
                        // The cheaper action's pedigree goes first.
                        let mut prov = action.provenance.clone();
                        for p in existing.provenance.drain(..) {
                            if !prov.contains(&p) {
                                prov.push(p);
                            }
                        }
                        existing.provenance = prov;
                    } else {
                        for p in &action.provenance {
                            if !existing.provenance.contains(p) {
                                existing.provenance.push(p.clone());
                            }
                        }
                    }
                }
                None => kept.push(action.clone()),
            }
        }
        new_actions.push(kept);
    }
    emdp.replace_omega_actions(new_actions)
        .expect("kept actions were already valid")
}

/// Scale every ω-action's `λ` and cost by `1 + rel` (λ capped at 1),
/// producing a deliberately inexact embedding for sensitivity studies.
pub fn perturb_omega_actions(emdp: &EmbeddedMdp, rel: f64) -> EmbeddedMdp {
    let perturbed = emdp
        .omega_actions
        .iter()
        .map(|actions| {
            actions
                .iter()
                .map(|a| OmegaAction {
                    lambda: (a.lambda * (1.0 + rel)).min(1.0),
                    cost: a.cost * (1.0 + rel),
                    ..a.clone()
                })
                .collect()
        })
        .collect();
    emdp.replace_omega_actions(perturbed)
        .expect("perturbed actions stay valid")
}

/// Interior-set suggestion: all states among the first `scan_limit` whose
/// cheapest action cost is below `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZSuggestion {
    pub states: Vec<StateId>,
    /// Set when the scan is inconclusive: no state qualified, or the last
    /// scanned state still qualifies so the set may continue past the scan.
    pub boundary_warning: bool,
}

pub fn suggest_interior(
    model: &dyn CountableModel,
    gamma: f64,
    scan_limit: u64,
) -> ZSuggestion {
    let mut states = Vec::new();
    let mut last_qualifies = false;
    for s in 0..scan_limit {
        let state = StateId(s);
        let k = model.action_count(state);
        let min_cost = (0..k)
            .map(|a| model.cost(state, ActionId(a)))
            .fold(f64::INFINITY, f64::min);
        last_qualifies = min_cost < gamma;
        if last_qualifies {
            states.push(state);
        }
    }
    let boundary_warning = states.is_empty() || last_qualifies;
    ZSuggestion {
        states,
        boundary_warning,
    }
}

/// The embedded-model policy corresponding to a source policy: same interior
/// choices, and at each reachable ω state the action derived from (the
/// boundary's interior choice, the source's exterior policy).
pub fn embedded_counterpart(
    emdp: &EmbeddedMdp,
    policy: &SourcePolicy,
) -> Result<StationaryPolicy, EmbeddingError> {
    let n = emdp.n_interior();
    if policy.interior.len() != n {
        return Err(EmbeddingError::PolicyLength {
            index: policy.interior.len(),
            n,
        });
    }
    let mut choice = Vec::with_capacity(2 * n);
    choice.extend_from_slice(&policy.interior);
    for i in 0..n {
        let a = policy.interior[i];
        let wanted = Provenance::Policy {
            interior_action: a,
            exterior_policy: policy.exterior_policy,
        };
        let found = emdp.omega_actions[i]
            .iter()
            .position(|act| act.provenance.contains(&wanted));
        match found {
            Some(k) => choice.push(ActionId(k)),
            None => {
                // If the chosen interior action cannot exit, ω_i is
                // unreachable under this policy and any action works.
                let exit = emdp
                    .base
                    .transition(i, a)
                    .prob(StateId(emdp.omega_index(i) as u64));
                if exit == 0.0 {
                    choice.push(ActionId(0));
                } else {
                    return Err(EmbeddingError::NoMatchingOmegaAction {
                        omega: i,
                        action: a,
                        exterior_policy: policy.exterior_policy,
                    });
                }
            }
        }
    }
    Ok(StationaryPolicy::new(choice))
}

/// A source policy recovered from an embedded-model policy.
#[derive(Clone, Debug)]
pub struct LiftedPolicy {
    pub policy: SourcePolicy,
    /// Non-fatal pairing issues, e.g. an ω choice whose provenance does not
    /// name the interior action chosen at the matching s state.
    pub warnings: Vec<String>,
}

/// Translate an embedded-model policy back into source-model vocabulary:
/// interior choices transfer through the embedding map, and the exterior
/// policy is read off the chosen ω-actions' provenance.
pub fn lift_policy(
    emdp: &EmbeddedMdp,
    policy: &StationaryPolicy,
) -> Result<LiftedPolicy, EmbeddingError> {
    let n = emdp.n_interior();
    if policy.choice.len() != 2 * n {
        return Err(EmbeddingError::PolicyLength {
            index: policy.choice.len(),
            n,
        });
    }
    let interior: Vec<ActionId> = policy.choice[..n].to_vec();
    let mut warnings = Vec::new();
    let mut candidates: Option<std::collections::BTreeSet<usize>> = None;
    for i in 0..n {
        let exit = emdp
            .base
            .transition(i, interior[i])
            .prob(StateId(emdp.omega_index(i) as u64));
        if exit == 0.0 {
            continue; // ω_i never visited under this policy
        }
        let chosen = &emdp.omega_actions[i][policy.choice[n + i].0];
        let strict: std::collections::BTreeSet<usize> = chosen
            .provenance
            .iter()
            .filter_map(|p| match p {
                Provenance::Policy {
                    interior_action,
                    exterior_policy,
                } if *interior_action == interior[i] => Some(*exterior_policy),
                _ => None,
            })
            .collect();
        let set = if strict.is_empty() {
            let loose: std::collections::BTreeSet<usize> = chosen
                .provenance
                .iter()
                .filter_map(|p| match p {
                    Provenance::Policy {
                        exterior_policy, ..
                    } => Some(*exterior_policy),
                    Provenance::Inert => None,
                })
                .collect();
            warnings.push(format!(
                "ω state {i}: chosen action was derived from a different interior action than the one chosen at its s state"
            ));
            loose
        } else {
            strict
        };
        if set.is_empty() {
            return Err(EmbeddingError::InconsistentExterior {
                details: format!("ω state {i} only carries the inert action but is reachable"),
            });
        }
        candidates = Some(match candidates {
            None => set,
            Some(prev) => prev.intersection(&set).copied().collect(),
        });
    }
    let exterior_policy = match candidates {
        None => 0, // exterior never visited
        Some(set) => *set.iter().next().ok_or_else(|| {
            EmbeddingError::InconsistentExterior {
                details: "chosen ω actions come from disjoint exterior policies".into(),
            }
        })?,
    };
    Ok(LiftedPolicy {
        policy: SourcePolicy {
            interior,
            exterior_policy,
        },
        warnings,
    })
}
