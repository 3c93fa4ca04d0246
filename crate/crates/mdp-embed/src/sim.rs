//! Regenerative simulation of the countable model.
//!
//! Long-run average costs are estimated as ratio-of-means over regeneration
//! cycles at a chosen interior state, with the cycle-based CLT supplying a
//! 95% confidence half-width. Each cycle draws from its own ChaCha8 stream
//! (stream index = cycle index), so estimates are bit-identical for a fixed
//! seed no matter how cycles are scheduled, and per-cycle statistics are
//! reduced by pairwise summation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::embedding::EmbeddedMdp;
use crate::linalg::pairwise_sum;
use crate::mdp::{ActionId, CountableModel, SourcePolicy, StateId, StationaryPolicy};
use crate::rng;
use crate::solver::{evaluate_cycle_ratio, SolverError};

/// Default per-cycle step cap; exceeding it signals suspected non-recurrence.
pub const DEFAULT_CYCLE_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("a regeneration cycle exceeded {cap} steps; the model looks non-recurrent")]
    CycleTooLong { cap: u64 },
    #[error("state {state:?} is not in the interior set")]
    NotInterior { state: StateId },
    #[error("policy shape does not match the model: {0}")]
    Policy(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Renewal-reward estimate of the long-run average cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// 95% confidence half-width from the regenerative CLT.
    pub half_width: f64,
    pub cycles: u64,
    pub steps: u64,
    pub seed: u64,
}

struct PolicyMap<'a> {
    model: &'a dyn CountableModel,
    interior_choice: std::collections::BTreeMap<StateId, ActionId>,
    exterior_policy: usize,
}

impl<'a> PolicyMap<'a> {
    fn new(model: &'a dyn CountableModel, policy: &SourcePolicy) -> Result<Self, SimError> {
        let interior = model.interior();
        if policy.interior.len() != interior.len() {
            return Err(SimError::Policy(format!(
                "{} interior choices for {} interior states",
                policy.interior.len(),
                interior.len()
            )));
        }
        if policy.exterior_policy >= model.exterior_policy_count() {
            return Err(SimError::Policy(format!(
                "exterior policy {} of {}",
                policy.exterior_policy,
                model.exterior_policy_count()
            )));
        }
        let mut interior_choice = std::collections::BTreeMap::new();
        for (&z, &a) in interior.iter().zip(&policy.interior) {
            if a.0 >= model.action_count(z) {
                return Err(SimError::Policy(format!(
                    "action {} at interior state {} with {} actions",
                    a.0,
                    z.0,
                    model.action_count(z)
                )));
            }
            interior_choice.insert(z, a);
        }
        Ok(Self {
            model,
            interior_choice,
            exterior_policy: policy.exterior_policy,
        })
    }

    fn choose(&self, state: StateId) -> ActionId {
        match self.interior_choice.get(&state) {
            Some(&a) => a,
            None => self.model.exterior_choice(self.exterior_policy, state),
        }
    }
}

/// Per-excursion record collected while a cycle runs.
struct ExcursionLog {
    channel: usize,
    entrance: usize,
    steps: u64,
    cost: f64,
}

/// One regeneration cycle from `z` back to `z`; fills `excursions` with any
/// exterior segments encountered on the way.
fn run_cycle(
    map: &PolicyMap<'_>,
    z: StateId,
    rng: &mut rand_chacha::ChaCha8Rng,
    cap: u64,
    interior_pos: &std::collections::BTreeMap<StateId, usize>,
    excursions: Option<&mut Vec<ExcursionLog>>,
) -> Result<(f64, u64), SimError> {
    let mut state = z;
    let mut cost = 0.0;
    let mut steps = 0u64;
    let mut live_excursion: Option<(usize, u64, f64)> = None;
    let mut logs = excursions;
    loop {
        let a = map.choose(state);
        let c = map.model.cost(state, a);
        cost += c;
        if let Some((_, ref mut esteps, ref mut ecost)) = live_excursion {
            *esteps += 1;
            *ecost += c;
        }
        steps += 1;
        if steps > cap {
            return Err(SimError::CycleTooLong { cap });
        }
        let next = map.model.transition(state, a).sample(rng::unit(rng));
        match (interior_pos.get(&state), interior_pos.get(&next)) {
            (Some(&i), None) => {
                // Stepping out: the excursion is attributed to the boundary
                // state we left from; its own cost is not part of it.
                debug_assert!(live_excursion.is_none());
                if logs.is_some() {
                    live_excursion = Some((i, 0, 0.0));
                }
            }
            (None, Some(&j)) => {
                if let (Some((channel, esteps, ecost)), Some(out)) =
                    (live_excursion.take(), logs.as_mut())
                {
                    out.push(ExcursionLog {
                        channel,
                        entrance: j,
                        steps: esteps,
                        cost: ecost,
                    });
                }
            }
            _ => {}
        }
        state = next;
        if state == z {
            return Ok((cost, steps));
        }
    }
}

/// Ratio-of-means estimator over `n_cycles` regenerations at `z`.
pub fn simulate_average_cost(
    model: &dyn CountableModel,
    policy: &SourcePolicy,
    z: StateId,
    n_cycles: u64,
    seed: u64,
) -> Result<SimEstimate, SimError> {
    simulate_average_cost_capped(model, policy, z, n_cycles, seed, DEFAULT_CYCLE_STEP_CAP)
}

pub fn simulate_average_cost_capped(
    model: &dyn CountableModel,
    policy: &SourcePolicy,
    z: StateId,
    n_cycles: u64,
    seed: u64,
    cap: u64,
) -> Result<SimEstimate, SimError> {
    if !model.is_interior(z) {
        return Err(SimError::NotInterior { state: z });
    }
    let map = PolicyMap::new(model, policy)?;
    let interior_pos = interior_positions(model);
    let mut costs = Vec::with_capacity(n_cycles as usize);
    let mut lens = Vec::with_capacity(n_cycles as usize);
    for i in 0..n_cycles {
        let mut r = rng::stream(seed, i);
        let (c, l) = run_cycle(&map, z, &mut r, cap, &interior_pos, None)?;
        costs.push(c);
        lens.push(l as f64);
    }
    Ok(ratio_estimate(&costs, &lens, seed))
}

fn interior_positions(
    model: &dyn CountableModel,
) -> std::collections::BTreeMap<StateId, usize> {
    model
        .interior()
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect()
}

fn ratio_estimate(costs: &[f64], lens: &[f64], seed: u64) -> SimEstimate {
    let n = costs.len() as f64;
    let total_cost = pairwise_sum(costs);
    let total_len = pairwise_sum(lens);
    let mean = total_cost / total_len;
    let half_width = if costs.len() < 2 {
        0.0
    } else {
        let centered: Vec<f64> = costs
            .iter()
            .zip(lens)
            .map(|(c, l)| c - mean * l)
            .collect();
        let m = pairwise_sum(&centered) / n;
        let sq: Vec<f64> = centered.iter().map(|x| (x - m) * (x - m)).collect();
        let var = pairwise_sum(&sq) / (n - 1.0);
        1.96 * (var / n).sqrt() / (total_len / n)
    };
    SimEstimate {
        mean,
        half_width,
        cycles: costs.len() as u64,
        steps: total_len as u64,
        seed,
    }
}

/// Comparison of one exit channel's simulated excursions against the ω
/// action the embedded policy uses there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitChannelComparison {
    pub boundary: StateId,
    pub excursions: u64,
    pub empirical_entrance: Vec<f64>,
    pub expected_entrance: Vec<f64>,
    /// Pearson statistic of the empirical entrance counts against the exact
    /// entrance distribution.
    pub chi_square: f64,
    pub dof: usize,
    /// 95% critical value for `dof` degrees of freedom (0 when dof = 0).
    pub critical_95: f64,
    pub mean_excursion_cost: f64,
    pub expected_excursion_cost: f64,
    pub cost_se: f64,
    pub mean_excursion_len: f64,
    pub expected_excursion_len: f64,
    pub len_se: f64,
}

/// Side-by-side check of the embedding against the source model under a
/// matched policy pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingComparison {
    pub per_exit: Vec<ExitChannelComparison>,
    pub sim: SimEstimate,
    /// Cycle-ratio gain of the embedded counterpart at the matching state.
    pub embedded_gain: f64,
    pub gain_within_ci: bool,
}

/// Simulate the source model under `source_policy` and compare against the
/// embedded model under its counterpart `embedded_policy`:
/// (a) empirical entrance distributions per exit channel vs the exact ω
/// entrance law, (b) mean excursion cost and length vs the ω sojourn values,
/// (c) the simulated average cost vs the embedded cycle-ratio gain.
pub fn compare_embedded(
    model: &dyn CountableModel,
    emdp: &EmbeddedMdp,
    source_policy: &SourcePolicy,
    embedded_policy: &StationaryPolicy,
    z: StateId,
    n_cycles: u64,
    seed: u64,
) -> Result<EmbeddingComparison, SimError> {
    if !model.is_interior(z) {
        return Err(SimError::NotInterior { state: z });
    }
    let n = emdp.n_interior();
    if embedded_policy.choice.len() != 2 * n
        || embedded_policy.choice[..n] != source_policy.interior[..]
    {
        return Err(SimError::Policy(
            "embedded policy does not mirror the source policy's interior choices".into(),
        ));
    }
    let map = PolicyMap::new(model, source_policy)?;
    let interior_pos = interior_positions(model);

    let mut costs = Vec::with_capacity(n_cycles as usize);
    let mut lens = Vec::with_capacity(n_cycles as usize);
    let mut logs: Vec<ExcursionLog> = Vec::new();
    for i in 0..n_cycles {
        let mut r = rng::stream(seed, i);
        let (c, l) = run_cycle(&map, z, &mut r, DEFAULT_CYCLE_STEP_CAP, &interior_pos, Some(&mut logs))?;
        costs.push(c);
        lens.push(l as f64);
    }
    let sim = ratio_estimate(&costs, &lens, seed);

    // Group excursions by exit channel.
    let mut per_exit = Vec::new();
    for channel in 0..n {
        let entries: Vec<&ExcursionLog> =
            logs.iter().filter(|e| e.channel == channel).collect();
        if entries.is_empty() {
            continue;
        }
        let action = &emdp.omega_actions[channel][embedded_policy.choice[n + channel].0];
        let m = entries.len() as f64;
        let mut entrance_counts = vec![0u64; n];
        for e in &entries {
            entrance_counts[e.entrance] += 1;
        }
        let empirical: Vec<f64> = entrance_counts.iter().map(|&c| c as f64 / m).collect();
        let mut chi_square = 0.0;
        let mut support = 0usize;
        for (j, &q) in action.entrance.iter().enumerate() {
            if q > 0.0 {
                support += 1;
                let expected = m * q;
                let o = entrance_counts[j] as f64;
                chi_square += (o - expected) * (o - expected) / expected;
            } else if entrance_counts[j] > 0 {
                chi_square = f64::INFINITY;
            }
        }
        let dof = support.saturating_sub(1);
        let critical_95 = if dof == 0 {
            0.0
        } else {
            ChiSquared::new(dof as f64)
                .expect("positive dof")
                .inverse_cdf(0.95)
        };
        let costs_e: Vec<f64> = entries.iter().map(|e| e.cost).collect();
        let lens_e: Vec<f64> = entries.iter().map(|e| e.steps as f64).collect();
        let mean_of = |xs: &[f64]| pairwise_sum(xs) / m;
        let se_of = |xs: &[f64], mu: f64| {
            if entries.len() < 2 {
                return 0.0;
            }
            let sq: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
            (pairwise_sum(&sq) / (m - 1.0)).sqrt() / m.sqrt()
        };
        let mean_cost = mean_of(&costs_e);
        let mean_len = mean_of(&lens_e);
        per_exit.push(ExitChannelComparison {
            boundary: emdp.interior[channel],
            excursions: entries.len() as u64,
            empirical_entrance: empirical,
            expected_entrance: action.entrance.clone(),
            chi_square,
            dof,
            critical_95,
            mean_excursion_cost: mean_cost,
            expected_excursion_cost: action.cost / action.lambda,
            cost_se: se_of(&costs_e, mean_cost),
            mean_excursion_len: mean_len,
            expected_excursion_len: 1.0 / action.lambda,
            len_se: se_of(&lens_e, mean_len),
        });
    }

    let zi = emdp
        .interior
        .iter()
        .position(|&s| s == z)
        .ok_or(SimError::NotInterior { state: z })?;
    let embedded_gain = evaluate_cycle_ratio(&emdp.base, embedded_policy, StateId(zi as u64))?;
    let gain_within_ci = (sim.mean - embedded_gain).abs() <= sim.half_width;
    Ok(EmbeddingComparison {
        per_exit,
        sim,
        embedded_gain,
        gain_within_ci,
    })
}
