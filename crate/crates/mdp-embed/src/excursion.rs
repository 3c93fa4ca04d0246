//! Exterior excursion statistics.
//!
//! An excursion starts when the process steps out of the interior set from a
//! boundary state `z` under an interior action `a`, evolves under an exterior
//! policy, and ends at the first re-entry into the interior. The summary of
//! such excursions parameterizes one candidate action of the ω state attached
//! to `z`:
//!
//! * the entrance distribution `q` over interior states,
//! * the conditional expected return time `E[τ | exit]`,
//! * the expected excursion cost (and one value per auxiliary cost layer),
//! * the geometric sojourn parameter `λ = 1 / (E[τ | exit] − 1)`, chosen so
//!   the ω state's mean holding time reproduces the mean excursion length,
//! * the ω running cost `λ · (excursion cost)`, which accrued over the mean
//!   sojourn reproduces the excursion cost.
//!
//! Three backends compute the same summary: truncated linear solves
//! ([`analyze_excursion`]), closed forms for skip-free birth–death exteriors
//! ([`skipfree_closed_form`]), and Monte Carlo ([`monte_carlo_excursion`]).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::{self, pairwise_sum, LinalgError};
use crate::mdp::{ActionId, CountableModel, StateId};
use crate::rng;

/// Default per-excursion step cap for the Monte Carlo backend.
pub const DEFAULT_EXCURSION_STEP_CAP: u64 = 10_000_000;

/// Absorption shortfall treated as evidence of a non-returning exterior.
const ABSORPTION_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExcursionError {
    #[error("no exit is possible from state {state:?} under action {action:?}")]
    NoExit { state: StateId, action: ActionId },
    #[error("state {state:?} is not in the interior set")]
    NotInterior { state: StateId },
    #[error(
        "return to the interior is not certain (absorbed mass {absorbed:.6} at truncation {level})"
    )]
    NotAbsorbed { absorbed: f64, level: u64 },
    #[error("excursion quantities did not stabilize up to truncation level {level}")]
    TruncationDiverged { level: u64 },
    #[error("an excursion exceeded {cap} steps; the exterior looks non-recurrent")]
    ExcursionTooLong { cap: u64 },
    #[error("arrival rate {arrival} is not below service rate {service}; the exterior is unstable")]
    Unstable { arrival: f64, service: f64 },
    #[error("conditional return time {value} is below 2; excursions must take at least two steps")]
    BadReturnTime { value: f64 },
    #[error("entrance distribution sums to {sum}, expected 1")]
    BadEntrance { sum: f64 },
    #[error(transparent)]
    Numeric(#[from] LinalgError),
}

/// Excursion statistics for one exit channel `(boundary state, interior
/// action, exterior policy)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExcursionSummary {
    pub boundary_state: StateId,
    pub interior_action: ActionId,
    pub exterior_policy: usize,
    /// Probability of leaving the interior in one step from the channel.
    pub exit_mass: f64,
    /// Entrance distribution over the interior (in interior order),
    /// conditioned on having exited through this channel.
    pub entrance: Vec<f64>,
    /// `E[τ | exit]`: expected steps from leaving the boundary state until
    /// re-entry, counting both the exit step and the entering step. At least 2.
    pub mean_return_time: f64,
    /// Expected cost accrued at exterior states during one excursion.
    pub excursion_cost: f64,
    pub aux_excursion_costs: Vec<f64>,
    /// Geometric sojourn parameter of the ω state, `1/(mean_return_time − 1)`.
    pub lambda: f64,
    /// Running cost of the ω state, `lambda · excursion_cost`.
    pub omega_cost: f64,
    pub aux_omega_costs: Vec<f64>,
}

impl ExcursionSummary {
    /// Build a summary from raw excursion statistics, deriving `lambda` and
    /// the ω costs from the defining identities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        boundary_state: StateId,
        interior_action: ActionId,
        exterior_policy: usize,
        exit_mass: f64,
        entrance: Vec<f64>,
        mean_return_time: f64,
        excursion_cost: f64,
        aux_excursion_costs: Vec<f64>,
    ) -> Result<Self, ExcursionError> {
        let sum: f64 = entrance.iter().sum();
        if exit_mass > 0.0 && (sum - 1.0).abs() > 1e-10 {
            return Err(ExcursionError::BadEntrance { sum });
        }
        if mean_return_time < 2.0 - 1e-9 {
            return Err(ExcursionError::BadReturnTime {
                value: mean_return_time,
            });
        }
        // Exit takes one step and return at least one more, so the mean
        // exterior sojourn is mean_return_time − 1 ≥ 1 and λ ≤ 1.
        let lambda = (1.0 / (mean_return_time - 1.0)).min(1.0);
        let omega_cost = lambda * excursion_cost;
        let aux_omega_costs = aux_excursion_costs.iter().map(|d| lambda * d).collect();
        Ok(Self {
            boundary_state,
            interior_action,
            exterior_policy,
            exit_mass,
            entrance,
            mean_return_time,
            excursion_cost,
            aux_excursion_costs,
            lambda,
            omega_cost,
            aux_omega_costs,
        })
    }
}

/// Probability of leaving the interior in one step from `(z, a)`.
pub fn exit_mass(model: &dyn CountableModel, z: StateId, a: ActionId) -> f64 {
    model
        .transition(z, a)
        .support()
        .iter()
        .filter(|&&(t, _)| !model.is_interior(t))
        .map(|&(_, p)| p)
        .sum()
}

/// Truncation schedule for the exterior solves: levels `L, 2L, 4L, …`
/// starting at `|Z| + 32` (or `start_level`), stopping once successive
/// answers agree within `tol` relative.
#[derive(Clone, Copy, Debug)]
pub struct TruncationControl {
    pub start_level: Option<u64>,
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for TruncationControl {
    fn default() -> Self {
        Self {
            start_level: None,
            tol: 1e-9,
            max_doublings: 10,
        }
    }
}

/// Output of one truncated exterior solve, mixed over the exit channel.
struct TruncatedStats {
    entrance: Vec<f64>,
    absorbed: f64,
    mean_exterior_time: f64,
    cost: f64,
    aux: Vec<f64>,
}

/// Excursion statistics of channel `(z, a, exterior policy)` via truncated
/// first-passage solves on the exterior.
///
/// The exterior is explored breadth-first from the exit states, truncated at
/// a growing state-index level; transitions beyond the level are treated as
/// killed. Absorption into the interior must certify to mass 1; quantities
/// must stabilize between successive levels.
pub fn analyze_excursion(
    model: &dyn CountableModel,
    z: StateId,
    a: ActionId,
    exterior_policy: usize,
    trunc: &TruncationControl,
) -> Result<ExcursionSummary, ExcursionError> {
    let interior = model.interior();
    if !model.is_interior(z) {
        return Err(ExcursionError::NotInterior { state: z });
    }

    let row = model.transition(z, a);
    let exits: Vec<(StateId, f64)> = row
        .support()
        .iter()
        .filter(|&&(t, _)| !model.is_interior(t))
        .copied()
        .collect();
    let mass: f64 = exits.iter().map(|&(_, p)| p).sum();
    if mass <= 0.0 {
        return Err(ExcursionError::NoExit { state: z, action: a });
    }
    let weights: Vec<(StateId, f64)> = exits.iter().map(|&(s, p)| (s, p / mass)).collect();

    let max_interior = interior.iter().map(|s| s.0).max().unwrap_or(0);
    let max_exit = weights.iter().map(|&(s, _)| s.0).max().unwrap_or(0);
    let mut level = trunc
        .start_level
        .unwrap_or(interior.len() as u64 + 32)
        .max(max_interior + 2)
        .max(max_exit + 2);

    let mut previous: Option<TruncatedStats> = None;
    for _ in 0..=trunc.max_doublings {
        let stats = solve_truncated(model, exterior_policy, &weights, level)?;
        if let Some(prev) = &previous {
            if stabilized(prev, &stats, trunc.tol) {
                if stats.absorbed < 1.0 - ABSORPTION_SLACK {
                    return Err(ExcursionError::NotAbsorbed {
                        absorbed: stats.absorbed,
                        level,
                    });
                }
                let entrance: Vec<f64> =
                    stats.entrance.iter().map(|q| q / stats.absorbed).collect();
                return ExcursionSummary::from_parts(
                    z,
                    a,
                    exterior_policy,
                    mass,
                    entrance,
                    1.0 + stats.mean_exterior_time,
                    stats.cost,
                    stats.aux,
                );
            }
            // Entrance already stable but mass clearly short of 1: the
            // remaining mass escapes to infinity, growing the level will not
            // bring it back.
            if entrance_stabilized(prev, &stats, trunc.tol)
                && stats.absorbed < 1.0 - ABSORPTION_SLACK
            {
                return Err(ExcursionError::NotAbsorbed {
                    absorbed: stats.absorbed,
                    level,
                });
            }
        }
        previous = Some(stats);
        level *= 2;
    }
    Err(ExcursionError::TruncationDiverged { level: level / 2 })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn entrance_stabilized(prev: &TruncatedStats, cur: &TruncatedStats, tol: f64) -> bool {
    prev.entrance
        .iter()
        .zip(&cur.entrance)
        .all(|(p, c)| rel_close(*p, *c, tol))
        && rel_close(prev.absorbed, cur.absorbed, tol)
}

fn stabilized(prev: &TruncatedStats, cur: &TruncatedStats, tol: f64) -> bool {
    entrance_stabilized(prev, cur, tol)
        && rel_close(prev.mean_exterior_time, cur.mean_exterior_time, tol)
        && rel_close(prev.cost, cur.cost, tol)
        && prev
            .aux
            .iter()
            .zip(&cur.aux)
            .all(|(p, c)| rel_close(*p, *c, tol))
}

/// One truncated solve: collect exterior states with index ≤ `level`
/// reachable from the exit states, then solve the absorbing first-passage
/// system for entrance probabilities, expected time, and costs in one LU.
fn solve_truncated(
    model: &dyn CountableModel,
    exterior_policy: usize,
    weights: &[(StateId, f64)],
    level: u64,
) -> Result<TruncatedStats, ExcursionError> {
    let interior = model.interior();
    let interior_pos: BTreeMap<StateId, usize> = interior
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, k))
        .collect();

    // Breadth-first closure of the exterior within the level.
    let mut index: BTreeMap<StateId, usize> = BTreeMap::new();
    let mut states: Vec<StateId> = Vec::new();
    let mut queue: std::collections::VecDeque<StateId> = std::collections::VecDeque::new();
    for &(s, _) in weights {
        if s.0 <= level && !index.contains_key(&s) {
            index.insert(s, states.len());
            states.push(s);
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        let a = model.exterior_choice(exterior_policy, s);
        for &(t, _) in model.transition(s, a).support() {
            if model.is_interior(t) || t.0 > level || index.contains_key(&t) {
                continue;
            }
            index.insert(t, states.len());
            states.push(t);
            queue.push_back(t);
        }
    }

    let n = states.len();
    let n_int = interior.len();
    let k_aux = model.aux_len();
    // Columns: entrance probabilities per interior state, then time, cost,
    // and the auxiliary costs. All share the matrix (I − Q).
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut rhs: Vec<Vec<f64>> = vec![vec![0.0; n]; n_int + 2 + k_aux];
    for (i, &s) in states.iter().enumerate() {
        let a = model.exterior_choice(exterior_policy, s);
        let mut row = Vec::new();
        for &(t, p) in model.transition(s, a).support() {
            if let Some(&j) = interior_pos.get(&t) {
                rhs[j][i] += p;
            } else if t.0 <= level {
                row.push((index[&t], p));
            }
            // Mass beyond the level is killed.
        }
        rows.push(row);
        rhs[n_int][i] = 1.0;
        rhs[n_int + 1][i] = model.cost(s, a);
        let aux = model.aux_cost(s, a);
        for (k, d) in aux.iter().enumerate() {
            rhs[n_int + 2 + k][i] = *d;
        }
    }
    let sol = linalg::transient_solve(&rows, &rhs)?;

    let mix = |col: &[f64]| -> f64 {
        weights
            .iter()
            .map(|&(s, w)| w * index.get(&s).map_or(0.0, |&i| col[i]))
            .sum()
    };
    let entrance: Vec<f64> = (0..n_int).map(|j| mix(&sol[j])).collect();
    let absorbed: f64 = entrance.iter().sum();
    Ok(TruncatedStats {
        entrance,
        absorbed,
        mean_exterior_time: mix(&sol[n_int]),
        cost: mix(&sol[n_int + 1]),
        aux: (0..k_aux).map(|k| mix(&sol[n_int + 2 + k])).collect(),
    })
}

/// Excursion summaries for every channel with positive exit mass, via the
/// truncated-solve backend.
pub fn analyze_all_excursions(
    model: &dyn CountableModel,
    trunc: &TruncationControl,
) -> Result<Vec<ExcursionSummary>, ExcursionError> {
    let mut out = Vec::new();
    for &z in model.interior() {
        for a in 0..model.action_count(z) {
            let a = ActionId(a);
            if exit_mass(model, z, a) <= 0.0 {
                continue;
            }
            for ext in 0..model.exterior_policy_count() {
                out.push(analyze_excursion(model, z, a, ext, trunc)?);
            }
        }
    }
    Ok(out)
}

/// An affine cost `intercept + slope · x` of the state level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearCost {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearCost {
    pub fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }
}

/// Traffic intensity `ρ = arrival(1 − service) / (service(1 − arrival))` of
/// the single-server queue in which every state serves at `service`.
pub fn utilization(arrival: f64, service: f64) -> f64 {
    arrival * (1.0 - service) / (service * (1.0 - arrival))
}

/// Expected return time to the empty state of the uncontrolled queue,
/// `1/π₀ = 1/(1 − ρ)`.
pub fn kac_return_time(arrival: f64, service: f64) -> Result<f64, ExcursionError> {
    if arrival >= service {
        return Err(ExcursionError::Unstable { arrival, service });
    }
    Ok(1.0 / (1.0 - utilization(arrival, service)))
}

/// Closed-form excursion summary for the skip-free queue exterior.
///
/// The exterior `{first_exterior, first_exterior+1, …}` behaves as a
/// birth–death walk with up probability `p = arrival(1 − service)` and down
/// probability `q = service(1 − arrival)`. Exits always land at
/// `first_exterior` and re-enter at `first_exterior − 1`, so the entrance
/// distribution is a point mass, the per-level descent time is `1/(q − p)`,
/// and the expected excursion cost of an affine state cost is a quadratic
/// polynomial in the level. The interior is assumed to be
/// `{0, …, first_exterior − 1}` in ascending order; `exit_mass` is reported
/// for the boundary action equal to `service`.
pub fn skipfree_closed_form(
    arrival: f64,
    service: f64,
    cost: LinearCost,
    aux: &[LinearCost],
    first_exterior: u64,
) -> Result<ExcursionSummary, ExcursionError> {
    if arrival >= service {
        return Err(ExcursionError::Unstable { arrival, service });
    }
    if first_exterior == 0 {
        return Err(ExcursionError::NotInterior { state: StateId(0) });
    }
    let p = arrival * (1.0 - service);
    let q = service * (1.0 - arrival);
    let drift = q - p;
    let boundary = first_exterior - 1;

    let mut entrance = vec![0.0; first_exterior as usize];
    entrance[boundary as usize] = 1.0;

    // Expected total of an affine per-step cost until descending to the
    // boundary, started at the first exterior level: the quadratic
    // h(x) = A x² + B x + C with h(boundary) = 0 solves the one-step
    // equations of the walk.
    let quad_cost = |c: LinearCost| -> f64 {
        let a2 = c.slope / (2.0 * drift);
        let a1 = (a2 * (p + q) + c.intercept) / drift;
        let a0 = -(a2 * (boundary as f64).powi(2) + a1 * boundary as f64);
        let x = first_exterior as f64;
        a2 * x * x + a1 * x + a0
    };

    ExcursionSummary::from_parts(
        StateId(boundary),
        ActionId(0),
        0,
        arrival * (1.0 - service),
        entrance,
        1.0 + 1.0 / drift,
        quad_cost(cost),
        aux.iter().map(|&c| quad_cost(c)).collect(),
    )
}

/// Monte Carlo estimate of an excursion summary, with 95% half-widths.
#[derive(Clone, Debug)]
pub struct ExcursionEstimate {
    pub summary: ExcursionSummary,
    pub half_width: ExcursionHalfWidths,
    pub excursions: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ExcursionHalfWidths {
    pub entrance: Vec<f64>,
    pub mean_return_time: f64,
    pub excursion_cost: f64,
    pub aux_excursion_costs: Vec<f64>,
    pub lambda: f64,
    pub omega_cost: f64,
    pub aux_omega_costs: Vec<f64>,
}

/// Simulate `n_excursions` exterior excursions of channel `(z, a, ext)` and
/// summarize them; deterministic for a fixed seed (one ChaCha8 stream per
/// excursion).
pub fn monte_carlo_excursion(
    model: &dyn CountableModel,
    z: StateId,
    a: ActionId,
    exterior_policy: usize,
    n_excursions: u64,
    seed: u64,
) -> Result<ExcursionEstimate, ExcursionError> {
    monte_carlo_excursion_capped(
        model,
        z,
        a,
        exterior_policy,
        n_excursions,
        seed,
        DEFAULT_EXCURSION_STEP_CAP,
    )
}

pub fn monte_carlo_excursion_capped(
    model: &dyn CountableModel,
    z: StateId,
    a: ActionId,
    exterior_policy: usize,
    n_excursions: u64,
    seed: u64,
    step_cap: u64,
) -> Result<ExcursionEstimate, ExcursionError> {
    if !model.is_interior(z) {
        return Err(ExcursionError::NotInterior { state: z });
    }
    let row = model.transition(z, a);
    let exits: Vec<(StateId, f64)> = row
        .support()
        .iter()
        .filter(|&&(t, _)| !model.is_interior(t))
        .copied()
        .collect();
    let mass: f64 = exits.iter().map(|&(_, p)| p).sum();
    if mass <= 0.0 || n_excursions == 0 {
        return Err(ExcursionError::NoExit { state: z, action: a });
    }
    let interior = model.interior();
    let interior_pos: BTreeMap<StateId, usize> = interior
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, k))
        .collect();

    let n = n_excursions as usize;
    let k_aux = model.aux_len();
    let mut times: Vec<f64> = Vec::with_capacity(n);
    let mut costs: Vec<f64> = Vec::with_capacity(n);
    let mut auxes: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k_aux];
    let mut entrance_counts = vec![0u64; interior.len()];

    for i in 0..n_excursions {
        let mut r = rng::stream(seed, i);
        // First exterior state, conditioned on exiting.
        let u = rng::unit(&mut r) * mass;
        let mut acc = 0.0;
        let mut state = exits.last().expect("nonempty exit support").0;
        for &(s, p) in &exits {
            acc += p;
            if u < acc {
                state = s;
                break;
            }
        }
        let mut steps = 0u64;
        let mut cost = 0.0;
        let mut aux = vec![0.0; k_aux];
        loop {
            let act = model.exterior_choice(exterior_policy, state);
            cost += model.cost(state, act);
            for (k, d) in model.aux_cost(state, act).iter().enumerate() {
                aux[k] += d;
            }
            steps += 1;
            if steps > step_cap {
                return Err(ExcursionError::ExcursionTooLong { cap: step_cap });
            }
            let next = model.transition(state, act).sample(rng::unit(&mut r));
            if let Some(&j) = interior_pos.get(&next) {
                entrance_counts[j] += 1;
                break;
            }
            state = next;
        }
        times.push(steps as f64);
        costs.push(cost);
        for (k, d) in aux.iter().enumerate() {
            auxes[k].push(*d);
        }
    }

    let nf = n as f64;
    let mean = |xs: &[f64]| pairwise_sum(xs) / nf;
    let sd = |xs: &[f64], m: f64| {
        if n < 2 {
            return 0.0;
        }
        let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        (pairwise_sum(&sq) / (nf - 1.0)).sqrt()
    };
    let hw = |xs: &[f64], m: f64| 1.96 * sd(xs, m) / nf.sqrt();

    let t_mean = mean(&times);
    let c_mean = mean(&costs);
    let aux_means: Vec<f64> = auxes.iter().map(|xs| mean(xs)).collect();
    let entrance: Vec<f64> = entrance_counts
        .iter()
        .map(|&c| c as f64 / nf)
        .collect();

    let summary = ExcursionSummary::from_parts(
        z,
        a,
        exterior_policy,
        mass,
        entrance.clone(),
        1.0 + t_mean,
        c_mean,
        aux_means.clone(),
    )?;

    // Half-widths: plain CLT bands for the raw means, a delta-method band
    // for λ = 1/mean(T), and regenerative ratio bands for the ω costs
    // (cost per unit exterior time over the same excursions).
    let t_hw = hw(&times, t_mean);
    let ratio_hw = |xs: &[f64], ratio: f64| {
        let centered: Vec<f64> = xs
            .iter()
            .zip(&times)
            .map(|(x, t)| x - ratio * t)
            .collect();
        let m = mean(&centered);
        1.96 * sd(&centered, m) / (nf.sqrt() * t_mean)
    };
    let half_width = ExcursionHalfWidths {
        entrance: entrance
            .iter()
            .map(|&q| 1.96 * (q * (1.0 - q) / nf).sqrt())
            .collect(),
        mean_return_time: t_hw,
        excursion_cost: hw(&costs, c_mean),
        aux_excursion_costs: auxes
            .iter()
            .zip(&aux_means)
            .map(|(xs, &m)| hw(xs, m))
            .collect(),
        lambda: t_hw / (t_mean * t_mean),
        omega_cost: ratio_hw(&costs, summary.omega_cost),
        aux_omega_costs: auxes
            .iter()
            .zip(&summary.aux_omega_costs)
            .map(|(xs, &r)| ratio_hw(xs, r))
            .collect(),
    };
    Ok(ExcursionEstimate {
        summary,
        half_width,
        excursions: n_excursions,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Distribution;
    use crate::models::{QueueModel, TableAction, TableModel};

    const TOP_RATE: ActionId = ActionId(5); // service 0.6 in the demo grid

    #[test]
    fn exit_mass_cases() {
        let q = QueueModel::demo();
        // Interior-supported rows exit with mass 0.
        assert_eq!(exit_mass(&q, StateId(0), ActionId(0)), 0.0);
        // Top of the interior with rate 0.6: 0.3 · 0.4 = 0.12.
        assert!((exit_mass(&q, StateId(3), TOP_RATE) - 0.12).abs() < 1e-15);

        // Deterministic jump out of the interior.
        let t = TableModel::new(
            vec![
                vec![TableAction {
                    transitions: Distribution::point(StateId(1)),
                    cost: 0.0,
                    aux: vec![],
                }],
                vec![TableAction {
                    transitions: Distribution::point(StateId(0)),
                    cost: 0.0,
                    aux: vec![],
                }],
            ],
            vec![StateId(0)],
            vec![vec![ActionId(0); 2]],
        )
        .unwrap();
        assert_eq!(exit_mass(&t, StateId(0), ActionId(0)), 1.0);
    }

    #[test]
    fn queue_excursion_matches_hand_solve() {
        // From the demo queue: exits from state 3 land at 4; the walk above
        // has up 0.12 / down 0.42, so the descent time is 10/3, the
        // conditional return time 1 + 10/3 = 13/3, λ = 0.3; the cost-to-
        // return with c(x) = x from 4 solves to 44/3, so the ω cost is 4.4.
        let q = QueueModel::demo();
        let s = analyze_excursion(&q, StateId(3), TOP_RATE, 0, &TruncationControl::default())
            .unwrap();
        assert_eq!(s.entrance.len(), 4);
        assert!((s.entrance[3] - 1.0).abs() < 1e-10);
        assert!((s.mean_return_time - 13.0 / 3.0).abs() < 1e-9);
        assert!((s.lambda - 0.3).abs() < 1e-9);
        assert!((s.excursion_cost - 44.0 / 3.0).abs() < 1e-8);
        assert!((s.omega_cost - 4.4).abs() < 1e-8);
        assert!((s.exit_mass - 0.12).abs() < 1e-15);
    }

    #[test]
    fn queue_excursion_is_action_independent_given_exit() {
        let q = QueueModel::demo();
        let a = analyze_excursion(&q, StateId(3), ActionId(0), 0, &TruncationControl::default())
            .unwrap();
        let b = analyze_excursion(&q, StateId(3), TOP_RATE, 0, &TruncationControl::default())
            .unwrap();
        assert!((a.mean_return_time - b.mean_return_time).abs() < 1e-10);
        assert!((a.omega_cost - b.omega_cost).abs() < 1e-10);
        assert!(a.exit_mass > b.exit_mass);
    }

    #[test]
    fn occupancy_aux_gives_unit_omega_cost() {
        let q = QueueModel::demo().with_exterior_occupancy_aux();
        let s = analyze_excursion(&q, StateId(3), TOP_RATE, 0, &TruncationControl::default())
            .unwrap();
        // Mean exterior sojourn 10/3 at 1 per step, scaled by λ = 0.3.
        assert!((s.aux_excursion_costs[0] - 10.0 / 3.0).abs() < 1e-8);
        assert!((s.aux_omega_costs[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn summary_invariants_hold() {
        let q = QueueModel::demo();
        let s = analyze_excursion(&q, StateId(3), ActionId(2), 0, &TruncationControl::default())
            .unwrap();
        assert!((s.entrance.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(s.lambda > 0.0 && s.lambda <= 1.0);
        assert!((1.0 + 1.0 / s.lambda - s.mean_return_time).abs() < 1e-12);
        assert!((s.omega_cost / s.lambda - s.excursion_cost).abs() < 1e-9);
        assert!(s.mean_return_time >= 2.0);
    }

    #[test]
    fn closed_form_matches_reference_values() {
        assert!((utilization(0.3, 0.6) - 2.0 / 7.0).abs() < 1e-15);
        assert!((kac_return_time(0.3, 0.6).unwrap() - 1.4).abs() < 1e-12);
        let s = skipfree_closed_form(0.3, 0.6, LinearCost::new(0.0, 1.0), &[], 4).unwrap();
        assert!((s.lambda - 0.3).abs() < 1e-12);
        assert!((s.mean_return_time - 13.0 / 3.0).abs() < 1e-12);
        assert!((s.excursion_cost - 44.0 / 3.0).abs() < 1e-12);
        assert!((s.omega_cost - 4.4).abs() < 1e-12);
        assert!((s.entrance[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_agrees_with_truncated_solve() {
        let q = QueueModel::demo();
        let solved =
            analyze_excursion(&q, StateId(3), TOP_RATE, 0, &TruncationControl::default()).unwrap();
        let closed = skipfree_closed_form(0.3, 0.6, LinearCost::new(0.0, 1.0), &[], 4).unwrap();
        assert!((solved.lambda - closed.lambda).abs() < 1e-8);
        assert!((solved.mean_return_time - closed.mean_return_time).abs() < 1e-8);
        assert!((solved.excursion_cost - closed.excursion_cost).abs() < 1e-8);
        assert!((solved.omega_cost - closed.omega_cost).abs() < 1e-8);
        for (a, b) in solved.entrance.iter().zip(&closed.entrance) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_rejects_unstable_exterior() {
        assert!(matches!(
            skipfree_closed_form(0.6, 0.3, LinearCost::new(0.0, 1.0), &[], 4),
            Err(ExcursionError::Unstable { .. })
        ));
    }

    #[test]
    fn truncation_is_stable_in_start_level() {
        let q = QueueModel::demo();
        let base =
            analyze_excursion(&q, StateId(3), TOP_RATE, 0, &TruncationControl::default()).unwrap();
        let wide = analyze_excursion(
            &q,
            StateId(3),
            TOP_RATE,
            0,
            &TruncationControl {
                start_level: Some(400),
                ..TruncationControl::default()
            },
        )
        .unwrap();
        assert!((base.mean_return_time - wide.mean_return_time).abs() < 1e-9);
        assert!((base.omega_cost - wide.omega_cost).abs() < 1e-9);
    }

    #[test]
    fn transient_exterior_is_not_absorbed() {
        // Exterior service 0.2 < arrival 0.3: the walk above drifts up.
        let q = QueueModel::new(
            0.3,
            vec![0.6],
            0.2,
            4,
            None,
            std::sync::Arc::new(|x, a| x + a),
            std::sync::Arc::new(|x, _| x),
        )
        .unwrap();
        let err =
            analyze_excursion(&q, StateId(3), ActionId(0), 0, &TruncationControl::default())
                .unwrap_err();
        assert!(matches!(err, ExcursionError::NotAbsorbed { .. }), "{err}");
    }

    #[test]
    fn null_recurrent_exterior_diverges() {
        // Exterior service equal to the arrival rate: zero drift, finite
        // return probability but infinite expected return time.
        let q = QueueModel::new(
            0.3,
            vec![0.6],
            0.3,
            4,
            None,
            std::sync::Arc::new(|x, a| x + a),
            std::sync::Arc::new(|x, _| x),
        )
        .unwrap();
        let err = analyze_excursion(
            &q,
            StateId(3),
            ActionId(0),
            0,
            &TruncationControl {
                start_level: None,
                tol: 1e-9,
                max_doublings: 4,
            },
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                ExcursionError::TruncationDiverged { .. } | ExcursionError::NotAbsorbed { .. }
            ),
            "{err}"
        );
    }

    #[test]
    fn monte_carlo_one_step_return_is_exact() {
        // Exterior state 1 returns to 0 deterministically at cost 7.
        let t = TableModel::new(
            vec![
                vec![TableAction {
                    transitions: Distribution::point(StateId(1)),
                    cost: 0.0,
                    aux: vec![],
                }],
                vec![TableAction {
                    transitions: Distribution::point(StateId(0)),
                    cost: 7.0,
                    aux: vec![],
                }],
            ],
            vec![StateId(0)],
            vec![vec![ActionId(0); 2]],
        )
        .unwrap();
        let e = monte_carlo_excursion(&t, StateId(0), ActionId(0), 0, 500, 9).unwrap();
        assert_eq!(e.summary.excursion_cost, 7.0);
        assert_eq!(e.half_width.excursion_cost, 0.0);
        assert_eq!(e.summary.mean_return_time, 2.0);
        assert_eq!(e.summary.lambda, 1.0);
    }

    #[test]
    fn monte_carlo_brackets_the_closed_form() {
        let q = QueueModel::demo();
        let e = monte_carlo_excursion(&q, StateId(3), TOP_RATE, 0, 200_000, 2024).unwrap();
        let se = e.half_width.mean_return_time / 1.96;
        assert!(
            (e.summary.mean_return_time - 13.0 / 3.0).abs() < 3.0 * se,
            "mc {} vs exact {} (se {se})",
            e.summary.mean_return_time,
            13.0 / 3.0
        );
        let se_c = e.half_width.omega_cost / 1.96;
        assert!((e.summary.omega_cost - 4.4).abs() < 4.0 * se_c);
        // Empirical entrance frequencies always sum to exactly 1.
        assert_eq!(e.summary.entrance.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let q = QueueModel::demo();
        let a = monte_carlo_excursion(&q, StateId(3), TOP_RATE, 0, 5_000, 7).unwrap();
        let b = monte_carlo_excursion(&q, StateId(3), TOP_RATE, 0, 5_000, 7).unwrap();
        assert_eq!(a.summary.mean_return_time, b.summary.mean_return_time);
        assert_eq!(a.summary.excursion_cost, b.summary.excursion_cost);
        assert_eq!(a.summary.entrance, b.summary.entrance);
    }

    #[test]
    fn monte_carlo_step_cap_fires() {
        let q = QueueModel::new(
            0.3,
            vec![0.6],
            0.3,
            4,
            None,
            std::sync::Arc::new(|x, a| x + a),
            std::sync::Arc::new(|x, _| x),
        )
        .unwrap();
        let err = monte_carlo_excursion_capped(&q, StateId(3), ActionId(0), 0, 10_000, 5, 200)
            .unwrap_err();
        assert!(matches!(err, ExcursionError::ExcursionTooLong { cap: 200 }));
    }
}
