//! Average-cost optimization and evaluation for finite MDPs.
//!
//! * [`relative_value_iteration`] — damped Bellman iteration for the optimal
//!   gain and bias;
//! * [`policy_iteration`] — Howard iteration with exact Poisson-equation
//!   evaluations;
//! * [`evaluate_cycle_ratio`] — policy gain as expected cycle cost over
//!   expected cycle length at a recurrent reference state;
//! * [`solve_constrained`] — the occupation-measure linear program with
//!   auxiliary cost bounds.
//!
//! All instances are assumed unichain; multichain structure surfaces as an
//! error rather than a wrong answer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::mdp::{
    self, expected_hitting, induced_chain, ActionId, ChainError, FiniteMdp, MarkovChain,
    ModelError, StateId, StationaryPolicy,
};
use crate::simplex::{self, LpProblem, LpSolution};

/// Reference state whose bias is pinned to zero.
const REF_STATE: usize = 0;
/// Damping factor blending the kernel with the identity inside RVI; the gain
/// and the greedy policy are invariant under it, the bias doubles.
const DAMPING: f64 = 0.5;
/// Only strictly better actions (beyond this margin) trigger a policy switch.
const IMPROVE_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: u64, residual: f64 },
    #[error("state {state:?} is not recurrent under the given policy")]
    NotRecurrent { state: StateId },
    #[error("constrained program is infeasible: {certificate}")]
    Infeasible {
        certificate: InfeasibilityCertificate,
    },
    #[error("{found} constraint bounds supplied, model has {expected} aux layers")]
    BoundsMismatch { expected: usize, found: usize },
    #[error("occupation LP failed: {0}")]
    Lp(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of an average-cost solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    /// Optimal long-run average cost per step.
    pub gain: f64,
    /// Relative values with `bias[0] = 0`.
    pub bias: Vec<f64>,
    pub policy: StationaryPolicy,
    pub iterations: u64,
    /// Max optimality-equation residual of (gain, bias).
    pub residual: f64,
}

fn bellman_min(
    mdp: &FiniteMdp,
    values: &[f64],
    damping: f64,
) -> (Vec<f64>, Vec<ActionId>) {
    let n = mdp.n_states();
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for s in 0..n {
        let mut best = f64::INFINITY;
        let mut best_a = ActionId(0);
        for a in 0..mdp.action_count(s) {
            let action = ActionId(a);
            let mut q = mdp.cost(s, action) + damping * values[s];
            for &(t, p) in mdp.transition(s, action).support() {
                q += (1.0 - damping) * p * values[t.idx()];
            }
            if q < best - 1e-15 {
                best = q;
                best_a = action;
            }
        }
        out.push(best);
        arg.push(best_a);
    }
    (out, arg)
}

/// Residual of the undamped optimality equation at `(gain, bias)`.
fn optimality_residual(mdp: &FiniteMdp, gain: f64, bias: &[f64]) -> f64 {
    let (w, _) = bellman_min(mdp, bias, 0.0);
    (0..mdp.n_states()).fold(0.0f64, |r, s| r.max((w[s] - gain - bias[s]).abs()))
}

/// Relative value iteration on the damped kernel, iterated until the
/// undamped optimality-equation residual drops to `tol`.
pub fn relative_value_iteration(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: u64,
) -> Result<SolveResult, SolverError> {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut last_residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (w, _) = bellman_min(mdp, &v, DAMPING);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let d = w[s] - v[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let offset = w[REF_STATE];
        for s in 0..n {
            v[s] = w[s] - offset;
        }
        if hi - lo <= tol {
            let gain = 0.5 * (hi + lo);
            // The damped fixed point carries twice the undamped bias.
            let bias: Vec<f64> = v.iter().map(|x| x * (1.0 - DAMPING)).collect();
            last_residual = optimality_residual(mdp, gain, &bias);
            if last_residual <= tol {
                let (_, greedy) = bellman_min(mdp, &bias, 0.0);
                return Ok(SolveResult {
                    gain,
                    bias,
                    policy: StationaryPolicy::new(greedy),
                    iterations: it,
                    residual: last_residual,
                });
            }
        }
    }
    Err(SolverError::NoConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}

/// Exact evaluation of a stationary policy: solve the Poisson equation
/// `g + h = c_σ + P_σ h` with `h(0) = 0`. Returns `(gain, bias)`.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
) -> Result<(f64, Vec<f64>), SolverError> {
    let chain = induced_chain(mdp, policy)?;
    let classes = mdp::recurrent_classes(&chain);
    if classes.len() != 1 {
        return Err(SolverError::Chain(ChainError::MultiChain {
            classes: classes.len(),
        }));
    }
    let n = mdp.n_states();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = nalgebra::DMatrix::<f64>::zeros(n + 1, 1);
    for s in 0..n {
        a[(s, s)] += 1.0;
        for &(t, p) in chain.row(s).support() {
            a[(s, t.idx())] -= p;
        }
        a[(s, n)] = 1.0;
        b[(s, 0)] = mdp.cost(s, policy.choice[s]);
    }
    a[(n, REF_STATE)] = 1.0;
    let x = linalg::dense_solve(a, b).map_err(ChainError::Numeric)?;
    let gain = x[(n, 0)];
    let bias = (0..n).map(|s| x[(s, 0)]).collect();
    Ok((gain, bias))
}

/// Howard policy iteration from an initial policy.
pub fn policy_iteration(
    mdp: &FiniteMdp,
    initial: &StationaryPolicy,
) -> Result<SolveResult, SolverError> {
    initial.validate(mdp)?;
    let mut policy = initial.clone();
    let max_passes = 10_000u64;
    for pass in 1..=max_passes {
        let (gain, bias) = evaluate_policy(mdp, &policy)?;
        let mut improved = false;
        for s in 0..mdp.n_states() {
            let q = |a: ActionId| {
                mdp.cost(s, a)
                    + mdp
                        .transition(s, a)
                        .support()
                        .iter()
                        .map(|&(t, p)| p * bias[t.idx()])
                        .sum::<f64>()
            };
            let current = q(policy.choice[s]);
            let mut best = current;
            let mut best_a = policy.choice[s];
            for a in 0..mdp.action_count(s) {
                let qa = q(ActionId(a));
                if qa < best - IMPROVE_TOL {
                    best = qa;
                    best_a = ActionId(a);
                }
            }
            if best_a != policy.choice[s] {
                policy.choice[s] = best_a;
                improved = true;
            }
        }
        if !improved {
            let residual = optimality_residual(mdp, gain, &bias);
            return Ok(SolveResult {
                gain,
                bias,
                policy,
                iterations: pass,
                residual,
            });
        }
    }
    Err(SolverError::NoConvergence {
        iterations: max_passes,
        residual: f64::NAN,
    })
}

/// Policy gain evaluated as (expected cycle cost)/(expected cycle length)
/// over regeneration cycles at `z`, via two expected-hitting solves.
pub fn evaluate_cycle_ratio(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
    z: StateId,
) -> Result<f64, SolverError> {
    let chain = induced_chain(mdp, policy)?;
    let classes = mdp::recurrent_classes(&chain);
    let class = classes
        .iter()
        .find(|c| c.contains(&z.idx()))
        .ok_or(SolverError::NotRecurrent { state: z })?;

    // Restrict to the closed class containing z; transitions cannot leave it.
    let pos: std::collections::HashMap<usize, usize> =
        class.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let rows: Vec<crate::mdp::Distribution> = class
        .iter()
        .map(|&s| {
            crate::mdp::Distribution::new(
                chain
                    .row(s)
                    .support()
                    .iter()
                    .map(|&(t, p)| (StateId(pos[&t.idx()] as u64), p))
                    .collect(),
            )
            .expect("restricted row is stochastic")
        })
        .collect();
    let sub = MarkovChain::new(rows).map_err(SolverError::Model)?;
    let zi = pos[&z.idx()];
    let ones = vec![1.0; class.len()];
    let costs: Vec<f64> = class
        .iter()
        .map(|&s| mdp.cost(s, policy.choice[s]))
        .collect();
    let h_time = expected_hitting(&sub, &[zi], &ones)?;
    let h_cost = expected_hitting(&sub, &[zi], &costs)?;
    let mut cycle_len = 1.0;
    let mut cycle_cost = costs[zi];
    for &(t, p) in sub.row(zi).support() {
        cycle_len += p * h_time[t.idx()];
        cycle_cost += p * h_cost[t.idx()];
    }
    Ok(cycle_cost / cycle_len)
}

/// Occupation-measure solution of the constrained program.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OccupationSolution {
    /// Stationary state-action frequencies, `occupation[state][action]`.
    pub occupation: Vec<Vec<f64>>,
    pub gain: f64,
    /// Achieved value of each auxiliary cost layer.
    pub aux_values: Vec<f64>,
    /// Induced stationary policy as action probabilities per state.
    pub policy: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    /// Positive optimum of the phase-1 program.
    pub gap: f64,
    /// Farkas vector over (normalization, flow-balance, constraint) rows.
    pub dual: Vec<f64>,
    /// Best achievable value of each auxiliary layer alone (unconstrained).
    pub min_achievable: Vec<Option<f64>>,
    pub bounds: Vec<f64>,
}

impl std::fmt::Display for InfeasibilityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "phase-1 gap {:.3e}", self.gap)?;
        for (k, (min, bound)) in self.min_achievable.iter().zip(&self.bounds).enumerate() {
            match min {
                Some(m) => write!(f, "; layer {k}: best achievable {m:.6} vs bound {bound}")?,
                None => write!(f, "; layer {k}: bound {bound}")?,
            }
        }
        Ok(())
    }
}

/// Minimize the average cost subject to `K` auxiliary average-cost bounds,
/// as a linear program over state-action occupation measures. Infeasible
/// bounds return a certificate, never a silent answer.
pub fn solve_constrained(
    mdp: &FiniteMdp,
    bounds: &[f64],
) -> Result<OccupationSolution, SolverError> {
    if bounds.len() != mdp.aux_len() {
        return Err(SolverError::BoundsMismatch {
            expected: mdp.aux_len(),
            found: bounds.len(),
        });
    }
    let n = mdp.n_states();
    let offsets: Vec<usize> = {
        let mut acc = 0;
        (0..n)
            .map(|s| {
                let o = acc;
                acc += mdp.action_count(s);
                o
            })
            .collect()
    };
    let n_vars = offsets[n - 1] + mdp.action_count(n - 1);

    let mut objective = vec![0.0; n_vars];
    for s in 0..n {
        for a in 0..mdp.action_count(s) {
            objective[offsets[s] + a] = mdp.cost(s, ActionId(a));
        }
    }

    let mut eq: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    eq.push((vec![1.0; n_vars], 1.0));
    // Flow balance per state; the rows sum to zero, so the last one is
    // redundant and dropped.
    for state in 0..n - 1 {
        let mut row = vec![0.0; n_vars];
        for a in 0..mdp.action_count(state) {
            row[offsets[state] + a] += 1.0;
        }
        for s in 0..n {
            for a in 0..mdp.action_count(s) {
                let p = mdp.transition(s, ActionId(a)).prob(StateId(state as u64));
                if p > 0.0 {
                    row[offsets[s] + a] -= p;
                }
            }
        }
        eq.push((row, 0.0));
    }

    let mut le: Vec<(Vec<f64>, f64)> = Vec::with_capacity(bounds.len());
    for (k, &bound) in bounds.iter().enumerate() {
        if bound.is_infinite() {
            continue; // an infinite bound never binds
        }
        let mut row = vec![0.0; n_vars];
        for s in 0..n {
            for a in 0..mdp.action_count(s) {
                row[offsets[s] + a] = mdp.aux_cost(s, ActionId(a))[k];
            }
        }
        le.push((row, bound));
    }

    let lp = LpProblem { objective, eq, le };
    match simplex::solve(&lp).map_err(|e| SolverError::Lp(e.to_string()))? {
        LpSolution::Optimal { x, value } => {
            let mut occupation = Vec::with_capacity(n);
            let mut policy = Vec::with_capacity(n);
            for s in 0..n {
                let k = mdp.action_count(s);
                let rho: Vec<f64> = (0..k).map(|a| x[offsets[s] + a]).collect();
                let total: f64 = rho.iter().sum();
                let probs = if total > 1e-12 {
                    rho.iter().map(|r| r / total).collect()
                } else {
                    // Transient under the optimum; pin the first action.
                    let mut p = vec![0.0; k];
                    p[0] = 1.0;
                    p
                };
                occupation.push(rho);
                policy.push(probs);
            }
            let aux_values: Vec<f64> = (0..mdp.aux_len())
                .map(|k| {
                    (0..n)
                        .flat_map(|s| {
                            (0..mdp.action_count(s)).map(move |a| (s, a))
                        })
                        .map(|(s, a)| {
                            occupation[s][a] * mdp.aux_cost(s, ActionId(a))[k]
                        })
                        .sum()
                })
                .collect();
            Ok(OccupationSolution {
                occupation,
                gain: value,
                aux_values,
                policy,
            })
        }
        LpSolution::Infeasible { dual, gap } => {
            let min_achievable = (0..mdp.aux_len())
                .map(|k| {
                    let costs: Vec<Vec<f64>> = (0..n)
                        .map(|s| {
                            (0..mdp.action_count(s))
                                .map(|a| mdp.aux_cost(s, ActionId(a))[k])
                                .collect()
                        })
                        .collect();
                    mdp.with_cost_table(costs)
                        .ok()
                        .and_then(|m| relative_value_iteration(&m, 1e-9, 100_000).ok())
                        .map(|r| r.gain)
                })
                .collect();
            Err(SolverError::Infeasible {
                certificate: InfeasibilityCertificate {
                    gap,
                    dual,
                    min_achievable,
                    bounds: bounds.to_vec(),
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{average_cost_of_policy, Distribution};
    use crate::rng;

    fn dist(entries: &[(u64, f64)]) -> Distribution {
        Distribution::new(entries.iter().map(|&(s, p)| (StateId(s), p)).collect()).unwrap()
    }

    fn two_state_cycle() -> FiniteMdp {
        FiniteMdp::new(
            vec![vec![dist(&[(1, 1.0)])], vec![dist(&[(0, 1.0)])]],
            vec![vec![0.0], vec![2.0]],
            vec![vec![vec![]], vec![vec![]]],
        )
        .unwrap()
    }

    /// Random unichain instance: every row mixes 10% of a jump to state 0,
    /// so state 0 is reachable under every policy.
    pub(crate) fn random_unichain(seed: u64, max_states: usize, max_actions: usize) -> FiniteMdp {
        let mut r = rng::stream(seed, 0);
        let n = 2 + (rng::unit(&mut r) * (max_states - 1) as f64) as usize;
        let mut kernel = Vec::with_capacity(n);
        let mut cost = Vec::with_capacity(n);
        for _ in 0..n {
            let k = 1 + (rng::unit(&mut r) * max_actions as f64) as usize;
            let mut dists = Vec::with_capacity(k);
            let mut costs = Vec::with_capacity(k);
            for _ in 0..k {
                let mut w: Vec<f64> = (0..n).map(|_| rng::unit(&mut r)).collect();
                let total: f64 = w.iter().sum();
                for (j, v) in w.iter_mut().enumerate() {
                    *v = 0.9 * (*v / total) + if j == 0 { 0.1 } else { 0.0 };
                }
                let head: f64 = w[..n - 1].iter().sum();
                w[n - 1] = 1.0 - head;
                dists.push(dist(
                    &w.iter()
                        .enumerate()
                        .filter(|&(_, &p)| p > 0.0)
                        .map(|(j, &p)| (j as u64, p))
                        .collect::<Vec<_>>(),
                ));
                costs.push(rng::unit(&mut r) * 10.0 - 3.0);
            }
            kernel.push(dists);
            cost.push(costs);
        }
        let aux = kernel
            .iter()
            .map(|acts| vec![vec![]; acts.len()])
            .collect();
        FiniteMdp::new(kernel, cost, aux).unwrap()
    }

    #[test]
    fn rvi_picks_the_cheap_action() {
        let mdp = FiniteMdp::new(
            vec![vec![dist(&[(0, 1.0)]), dist(&[(0, 1.0)])]],
            vec![vec![5.0, 3.0]],
            vec![vec![vec![], vec![]]],
        )
        .unwrap();
        let r = relative_value_iteration(&mdp, 1e-9, 100_000).unwrap();
        assert!((r.gain - 3.0).abs() < 1e-9);
        assert_eq!(r.policy.choice[0], ActionId(1));
    }

    #[test]
    fn rvi_on_deterministic_cycle() {
        let r = relative_value_iteration(&two_state_cycle(), 1e-9, 100_000).unwrap();
        assert!((r.gain - 1.0).abs() < 1e-9);
        assert!(r.residual <= 1e-9);
    }

    #[test]
    fn pi_stops_immediately_at_a_fixed_point() {
        let mdp = two_state_cycle();
        let r = policy_iteration(&mdp, &StationaryPolicy::new(vec![ActionId(0); 2])).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pi_matches_stationary_evaluation_on_single_action() {
        let mdp = random_unichain(11, 8, 1);
        let policy = StationaryPolicy::new(vec![ActionId(0); mdp.n_states()]);
        let r = policy_iteration(&mdp, &policy).unwrap();
        let g = average_cost_of_policy(&mdp, &policy).unwrap();
        assert!((r.gain - g).abs() < 1e-10);
    }

    #[test]
    fn pi_and_rvi_agree_on_a_seeded_instance() {
        let mdp = random_unichain(6, 6, 3);
        let rvi = relative_value_iteration(&mdp, 1e-10, 200_000).unwrap();
        let pi = policy_iteration(
            &mdp,
            &StationaryPolicy::new(vec![ActionId(0); mdp.n_states()]),
        )
        .unwrap();
        assert!(
            (rvi.gain - pi.gain).abs() < 1e-8,
            "rvi {} vs pi {}",
            rvi.gain,
            pi.gain
        );
    }

    #[test]
    fn cycle_ratio_examples() {
        // Self-loop with cost 5.
        let loop1 = FiniteMdp::new(
            vec![vec![dist(&[(0, 1.0)])]],
            vec![vec![5.0]],
            vec![vec![vec![]]],
        )
        .unwrap();
        let p1 = StationaryPolicy::new(vec![ActionId(0)]);
        assert!((evaluate_cycle_ratio(&loop1, &p1, StateId(0)).unwrap() - 5.0).abs() < 1e-12);

        // Two-state cycle.
        let p2 = StationaryPolicy::new(vec![ActionId(0); 2]);
        assert!(
            (evaluate_cycle_ratio(&two_state_cycle(), &p2, StateId(0)).unwrap() - 1.0).abs()
                < 1e-12
        );

        // Three-state chain with costs (4, 0, 1): gain 1.5 from its π.
        let chain3 = FiniteMdp::new(
            vec![
                vec![dist(&[(1, 1.0)])],
                vec![dist(&[(2, 1.0)])],
                vec![dist(&[(0, 0.5), (2, 0.5)])],
            ],
            vec![vec![4.0], vec![0.0], vec![1.0]],
            vec![vec![vec![]]; 3],
        )
        .unwrap();
        let p3 = StationaryPolicy::new(vec![ActionId(0); 3]);
        assert!(
            (evaluate_cycle_ratio(&chain3, &p3, StateId(0)).unwrap() - 1.5).abs() < 1e-12
        );
    }

    #[test]
    fn cycle_ratio_rejects_transient_reference() {
        // State 0 drains into the 1-2 cycle and never returns.
        let mdp = FiniteMdp::new(
            vec![
                vec![dist(&[(1, 1.0)])],
                vec![dist(&[(2, 1.0)])],
                vec![dist(&[(1, 1.0)])],
            ],
            vec![vec![0.0]; 3],
            vec![vec![vec![]]; 3],
        )
        .unwrap();
        let p = StationaryPolicy::new(vec![ActionId(0); 3]);
        assert!(matches!(
            evaluate_cycle_ratio(&mdp, &p, StateId(0)),
            Err(SolverError::NotRecurrent { .. })
        ));
    }

    #[test]
    fn cycle_ratio_equals_stationary_gain_everywhere() {
        for seed in 0..10u64 {
            let mdp = random_unichain(100 + seed, 10, 4);
            let policy = StationaryPolicy::new(vec![ActionId(0); mdp.n_states()]);
            let g = average_cost_of_policy(&mdp, &policy).unwrap();
            let chain = induced_chain(&mdp, &policy).unwrap();
            for class in mdp::recurrent_classes(&chain) {
                for &z in &class {
                    let r = evaluate_cycle_ratio(&mdp, &policy, StateId(z as u64)).unwrap();
                    assert!((r - g).abs() < 1e-9, "seed {seed} z {z}: {r} vs {g}");
                }
            }
        }
    }

    #[test]
    fn constrained_with_slack_bound_matches_unconstrained() {
        let mdp = FiniteMdp::new(
            vec![vec![
                dist(&[(0, 1.0)]),
                dist(&[(0, 1.0)]),
            ]],
            vec![vec![0.0, 1.0]],
            vec![vec![vec![1.0], vec![0.0]]],
        )
        .unwrap();
        let sol = solve_constrained(&mdp, &[1e9]).unwrap();
        assert!(sol.gain.abs() < 1e-9);
        assert!((sol.policy[0][0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constrained_binding_bound_mixes_actions() {
        // One state, two self-loop actions: (cost 0, aux 1) and (cost 1,
        // aux 0). Bound aux ≤ 0.3 forces the mix ρ = (0.3, 0.7): gain 0.7.
        let mdp = FiniteMdp::new(
            vec![vec![dist(&[(0, 1.0)]), dist(&[(0, 1.0)])]],
            vec![vec![0.0, 1.0]],
            vec![vec![vec![1.0], vec![0.0]]],
        )
        .unwrap();
        let sol = solve_constrained(&mdp, &[0.3]).unwrap();
        assert!((sol.gain - 0.7).abs() < 1e-9);
        assert!((sol.occupation[0][0] - 0.3).abs() < 1e-9);
        assert!((sol.aux_values[0] - 0.3).abs() < 1e-9);
        assert!((sol.policy[0][0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn infeasible_bound_yields_certificate() {
        let mdp = FiniteMdp::new(
            vec![vec![dist(&[(0, 1.0)]), dist(&[(0, 1.0)])]],
            vec![vec![0.0, 1.0]],
            vec![vec![vec![1.0], vec![0.5]]],
        )
        .unwrap();
        // Aux is at least 0.5 under any mix; bound 0.1 is impossible.
        match solve_constrained(&mdp, &[0.1]) {
            Err(SolverError::Infeasible { certificate }) => {
                assert!(certificate.gap > 1e-9);
                let min = certificate.min_achievable[0].unwrap();
                assert!((min - 0.5).abs() < 1e-6);
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn occupation_satisfies_flow_balance() {
        let mdp = random_unichain(21, 6, 3);
        let aux: Vec<Vec<Vec<f64>>> = (0..mdp.n_states())
            .map(|s| (0..mdp.action_count(s)).map(|_| vec![0.0]).collect())
            .collect();
        let kernel: Vec<Vec<Distribution>> = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.action_count(s))
                    .map(|a| mdp.transition(s, ActionId(a)).clone())
                    .collect()
            })
            .collect();
        let cost: Vec<Vec<f64>> = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.action_count(s))
                    .map(|a| mdp.cost(s, ActionId(a)))
                    .collect()
            })
            .collect();
        let with_aux = FiniteMdp::new(kernel, cost, aux).unwrap();
        let sol = solve_constrained(&with_aux, &[1.0]).unwrap();
        for t in 0..with_aux.n_states() {
            let outflow: f64 = sol.occupation[t].iter().sum();
            let inflow: f64 = (0..with_aux.n_states())
                .flat_map(|s| (0..with_aux.action_count(s)).map(move |a| (s, a)))
                .map(|(s, a)| {
                    sol.occupation[s][a]
                        * with_aux.transition(s, ActionId(a)).prob(StateId(t as u64))
                })
                .sum();
            assert!((outflow - inflow).abs() < 1e-9);
        }
        // The LP optimum matches the unconstrained solver.
        let rvi = relative_value_iteration(&with_aux, 1e-9, 100_000).unwrap();
        assert!((sol.gain - rvi.gain).abs() < 1e-8);
    }
}
