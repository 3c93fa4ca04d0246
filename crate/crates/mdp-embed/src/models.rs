//! Runtime model families implementing [`CountableModel`].
//!
//! * [`QueueModel`] — single-server discrete-time queue with Bernoulli
//!   arrivals and a controllable service-completion probability; service is
//!   forced to a fixed rate outside the interior.
//! * [`ReservoirModel`] — water-level random walk with i.i.d. inflow and a
//!   controllable release, forced to the maximal release outside the
//!   interior.
//! * [`TableModel`] — fully explicit finite-support tables, used for
//!   hand-written models and capacity-bounded variants.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::mdp::{ActionId, CountableModel, Distribution, ModelError, StateId};

/// Cost as a function of (state encoded as f64, action value as f64).
pub type CostFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

fn check_prob(name: &str, p: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(ModelError::BadParameter(format!(
            "{name} = {p} is not a probability"
        )));
    }
    Ok(())
}

/// Controlled single-server queue.
///
/// In one slot a job arrives with probability `arrival` and, independently,
/// the job in service completes with probability equal to the chosen service
/// rate. An arriving job can enter service (and complete) within its arrival
/// slot, so the upward transition probability is `arrival · (1 − rate)` at
/// every queue length. Interior states `0..boundary` choose a rate from
/// `service_grid`; from `boundary` on the rate is forced to
/// `exterior_service`. An optional `capacity` blocks arrivals that would push
/// the queue past it, making the model effectively finite.
pub struct QueueModel {
    arrival: f64,
    service_grid: Vec<f64>,
    exterior_service: f64,
    boundary: u64,
    capacity: Option<u64>,
    interior: Vec<StateId>,
    cost_interior: CostFn,
    cost_exterior: CostFn,
    aux: Vec<(CostFn, CostFn)>,
}

impl QueueModel {
    pub fn new(
        arrival: f64,
        service_grid: Vec<f64>,
        exterior_service: f64,
        boundary: u64,
        capacity: Option<u64>,
        cost_interior: CostFn,
        cost_exterior: CostFn,
    ) -> Result<Self, ModelError> {
        check_prob("arrival", arrival)?;
        check_prob("exterior_service", exterior_service)?;
        if service_grid.is_empty() {
            return Err(ModelError::BadParameter("service_grid is empty".into()));
        }
        for &s in &service_grid {
            check_prob("service rate", s)?;
        }
        if boundary == 0 {
            return Err(ModelError::BadInterior);
        }
        if let Some(cap) = capacity {
            if cap + 1 < boundary {
                return Err(ModelError::BadParameter(format!(
                    "capacity {cap} lies inside the interior 0..{boundary}"
                )));
            }
        }
        Ok(Self {
            arrival,
            service_grid,
            exterior_service,
            boundary,
            capacity,
            interior: (0..boundary).map(StateId).collect(),
            cost_interior,
            cost_exterior,
            aux: Vec::new(),
        })
    }

    /// The worked demo: arrivals 0.3, rates {0.1, …, 0.6}, forced exterior
    /// rate 0.6, interior {0..3}, cost `x + a` inside and `x` outside.
    pub fn demo() -> Self {
        Self::new(
            0.3,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            0.6,
            4,
            None,
            Arc::new(|x, a| x + a),
            Arc::new(|x, _| x),
        )
        .expect("demo parameters are valid")
    }

    /// The demo truncated at `capacity`; arrivals at a full queue are lost.
    pub fn demo_with_capacity(capacity: u64) -> Self {
        Self::new(
            0.3,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            0.6,
            4,
            Some(capacity),
            Arc::new(|x, a| x + a),
            Arc::new(|x, _| x),
        )
        .expect("demo parameters are valid")
    }

    /// Add an auxiliary cost layer given as (interior, exterior) functions.
    pub fn with_aux(mut self, interior: CostFn, exterior: CostFn) -> Self {
        self.aux.push((interior, exterior));
        self
    }

    /// Auxiliary layer charging 1 per step spent outside the interior.
    pub fn with_exterior_occupancy_aux(self) -> Self {
        self.with_aux(Arc::new(|_, _| 0.0), Arc::new(|_, _| 1.0))
    }

    pub fn arrival(&self) -> f64 {
        self.arrival
    }

    pub fn service_grid(&self) -> &[f64] {
        &self.service_grid
    }

    pub fn exterior_service(&self) -> f64 {
        self.exterior_service
    }

    pub fn boundary(&self) -> u64 {
        self.boundary
    }

    pub fn capacity(&self) -> Option<u64> {
        self.capacity
    }

    fn rate(&self, state: StateId, action: ActionId) -> f64 {
        if state.0 < self.boundary {
            self.service_grid[action.0]
        } else {
            self.exterior_service
        }
    }

    fn row(&self, state: StateId, rate: f64) -> Distribution {
        let x = state.0;
        let up_blocked = self.capacity.is_some_and(|cap| x >= cap);
        let up = if up_blocked {
            0.0
        } else {
            self.arrival * (1.0 - rate)
        };
        let down = if x > 0 { rate * (1.0 - self.arrival) } else { 0.0 };
        let stay = 1.0 - up - down;
        let mut entries = Vec::with_capacity(3);
        if x > 0 {
            entries.push((StateId(x - 1), down));
        }
        entries.push((StateId(x), stay));
        if !up_blocked {
            entries.push((StateId(x + 1), up));
        }
        Distribution::new(entries).expect("queue row is stochastic")
    }
}

impl CountableModel for QueueModel {
    fn action_count(&self, state: StateId) -> usize {
        if state.0 < self.boundary {
            self.service_grid.len()
        } else {
            1
        }
    }

    fn transition(&self, state: StateId, action: ActionId) -> Distribution {
        self.row(state, self.rate(state, action))
    }

    fn cost(&self, state: StateId, action: ActionId) -> f64 {
        let rate = self.rate(state, action);
        if state.0 < self.boundary {
            (self.cost_interior)(state.0 as f64, rate)
        } else {
            (self.cost_exterior)(state.0 as f64, rate)
        }
    }

    fn aux_len(&self) -> usize {
        self.aux.len()
    }

    fn aux_cost(&self, state: StateId, action: ActionId) -> Vec<f64> {
        let rate = self.rate(state, action);
        self.aux
            .iter()
            .map(|(inside, outside)| {
                if state.0 < self.boundary {
                    inside(state.0 as f64, rate)
                } else {
                    outside(state.0 as f64, rate)
                }
            })
            .collect()
    }

    fn interior(&self) -> &[StateId] {
        &self.interior
    }

    fn exterior_policy_count(&self) -> usize {
        1
    }

    fn exterior_choice(&self, _policy: usize, _state: StateId) -> ActionId {
        ActionId(0)
    }

    fn is_interior(&self, state: StateId) -> bool {
        state.0 < self.boundary
    }

    fn action_label(&self, state: StateId, action: ActionId) -> String {
        format!("{}", self.rate(state, action))
    }
}

/// Reservoir level control with i.i.d. integer inflow.
///
/// The level moves as `L' = max(L + D − r, 0)` where `D` has the given
/// probability mass over `0..inflow_pmf.len()` and the release `r` is chosen
/// from `release_grid` inside the interior and forced to `exterior_release`
/// outside.
pub struct ReservoirModel {
    inflow_pmf: Vec<f64>,
    release_grid: Vec<u64>,
    exterior_release: u64,
    boundary: u64,
    interior: Vec<StateId>,
    cost_interior: CostFn,
    cost_exterior: CostFn,
    aux: Vec<(CostFn, CostFn)>,
}

impl ReservoirModel {
    pub fn new(
        inflow_pmf: Vec<f64>,
        release_grid: Vec<u64>,
        exterior_release: u64,
        boundary: u64,
        cost_interior: CostFn,
        cost_exterior: CostFn,
    ) -> Result<Self, ModelError> {
        if inflow_pmf.is_empty() {
            return Err(ModelError::BadParameter("inflow_pmf is empty".into()));
        }
        let sum: f64 = inflow_pmf.iter().sum();
        for &p in &inflow_pmf {
            check_prob("inflow probability", p)?;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::BadParameter(format!(
                "inflow_pmf sums to {sum}, expected 1"
            )));
        }
        if release_grid.is_empty() {
            return Err(ModelError::BadParameter("release_grid is empty".into()));
        }
        if boundary == 0 {
            return Err(ModelError::BadInterior);
        }
        Ok(Self {
            inflow_pmf,
            release_grid,
            exterior_release,
            boundary,
            interior: (0..boundary).map(StateId).collect(),
            cost_interior,
            cost_exterior,
            aux: Vec::new(),
        })
    }

    /// Shipped demo: inflow pmf (0.2, 0.3, 0.3, 0.2), releases {0, 1, 2}
    /// forced to 2 outside the interior {0..7}, cost
    /// `0.25·x − a·(1 + 0.05·x)` everywhere (generation revenue grows with
    /// head, holding cost grows with level).
    pub fn demo() -> Self {
        let cost: CostFn = Arc::new(|x, a| 0.25 * x - a * (1.0 + 0.05 * x));
        Self::new(
            vec![0.2, 0.3, 0.3, 0.2],
            vec![0, 1, 2],
            2,
            8,
            cost.clone(),
            cost,
        )
        .expect("demo parameters are valid")
    }

    pub fn with_aux(mut self, interior: CostFn, exterior: CostFn) -> Self {
        self.aux.push((interior, exterior));
        self
    }

    fn release(&self, state: StateId, action: ActionId) -> u64 {
        if state.0 < self.boundary {
            self.release_grid[action.0]
        } else {
            self.exterior_release
        }
    }

    fn row(&self, state: StateId, release: u64) -> Distribution {
        let mut mass: BTreeMap<u64, f64> = BTreeMap::new();
        for (d, &p) in self.inflow_pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let next = (state.0 + d as u64).saturating_sub(release);
            *mass.entry(next).or_insert(0.0) += p;
        }
        Distribution::new(mass.into_iter().map(|(s, p)| (StateId(s), p)).collect())
            .expect("reservoir row is stochastic")
    }
}

impl CountableModel for ReservoirModel {
    fn action_count(&self, state: StateId) -> usize {
        if state.0 < self.boundary {
            self.release_grid.len()
        } else {
            1
        }
    }

    fn transition(&self, state: StateId, action: ActionId) -> Distribution {
        self.row(state, self.release(state, action))
    }

    fn cost(&self, state: StateId, action: ActionId) -> f64 {
        let r = self.release(state, action) as f64;
        if state.0 < self.boundary {
            (self.cost_interior)(state.0 as f64, r)
        } else {
            (self.cost_exterior)(state.0 as f64, r)
        }
    }

    fn aux_len(&self) -> usize {
        self.aux.len()
    }

    fn aux_cost(&self, state: StateId, action: ActionId) -> Vec<f64> {
        let r = self.release(state, action) as f64;
        self.aux
            .iter()
            .map(|(inside, outside)| {
                if state.0 < self.boundary {
                    inside(state.0 as f64, r)
                } else {
                    outside(state.0 as f64, r)
                }
            })
            .collect()
    }

    fn interior(&self) -> &[StateId] {
        &self.interior
    }

    fn exterior_policy_count(&self) -> usize {
        1
    }

    fn exterior_choice(&self, _policy: usize, _state: StateId) -> ActionId {
        ActionId(0)
    }

    fn is_interior(&self, state: StateId) -> bool {
        state.0 < self.boundary
    }

    fn action_label(&self, state: StateId, action: ActionId) -> String {
        format!("{}", self.release(state, action))
    }
}

/// One action of an explicit-table state.
#[derive(Clone, Debug)]
pub struct TableAction {
    pub transitions: Distribution,
    pub cost: f64,
    pub aux: Vec<f64>,
}

/// Fully explicit finite model with designated interior and explicit
/// exterior policies (one action index per state each).
pub struct TableModel {
    rows: Vec<Vec<TableAction>>,
    interior: Vec<StateId>,
    exterior_policies: Vec<Vec<ActionId>>,
    aux_len: usize,
}

impl TableModel {
    pub fn new(
        rows: Vec<Vec<TableAction>>,
        interior: Vec<StateId>,
        exterior_policies: Vec<Vec<ActionId>>,
    ) -> Result<Self, ModelError> {
        let n = rows.len();
        if interior.is_empty() {
            return Err(ModelError::BadInterior);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &z in &interior {
            if z.idx() >= n {
                return Err(ModelError::StateOutOfRange {
                    state: z,
                    n_states: n,
                });
            }
            if !seen.insert(z) {
                return Err(ModelError::BadInterior);
            }
        }
        let mut aux_len: Option<usize> = None;
        for (s, actions) in rows.iter().enumerate() {
            let state = StateId(s as u64);
            if actions.is_empty() {
                return Err(ModelError::NoActions { state });
            }
            for action in actions {
                for &(t, _) in action.transitions.support() {
                    if t.idx() >= n {
                        return Err(ModelError::StateOutOfRange {
                            state: t,
                            n_states: n,
                        });
                    }
                }
                match aux_len {
                    None => aux_len = Some(action.aux.len()),
                    Some(expected) if expected != action.aux.len() => {
                        return Err(ModelError::AuxLengthMismatch {
                            expected,
                            found: action.aux.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        // Every exterior policy must pick a valid action at every exterior
        // state; interior entries are ignored.
        for policy in &exterior_policies {
            if policy.len() != n {
                return Err(ModelError::BadPolicyLength {
                    expected: n,
                    found: policy.len(),
                });
            }
            for (s, &a) in policy.iter().enumerate() {
                let state = StateId(s as u64);
                if !seen.contains(&state) && a.0 >= rows[s].len() {
                    return Err(ModelError::BadPolicyAction {
                        state,
                        action: a,
                        available: rows[s].len(),
                    });
                }
            }
        }
        if exterior_policies.is_empty() && seen.len() < n {
            return Err(ModelError::BadParameter(
                "model has exterior states but no exterior policy".into(),
            ));
        }
        let policies = if exterior_policies.is_empty() {
            vec![vec![ActionId(0); n]]
        } else {
            exterior_policies
        };
        Ok(Self {
            rows,
            interior,
            exterior_policies: policies,
            aux_len: aux_len.unwrap_or(0),
        })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }
}

impl CountableModel for TableModel {
    fn action_count(&self, state: StateId) -> usize {
        self.rows[state.idx()].len()
    }

    fn transition(&self, state: StateId, action: ActionId) -> Distribution {
        self.rows[state.idx()][action.0].transitions.clone()
    }

    fn cost(&self, state: StateId, action: ActionId) -> f64 {
        self.rows[state.idx()][action.0].cost
    }

    fn aux_len(&self) -> usize {
        self.aux_len
    }

    fn aux_cost(&self, state: StateId, action: ActionId) -> Vec<f64> {
        self.rows[state.idx()][action.0].aux.clone()
    }

    fn interior(&self) -> &[StateId] {
        &self.interior
    }

    fn exterior_policy_count(&self) -> usize {
        self.exterior_policies.len()
    }

    fn exterior_choice(&self, policy: usize, state: StateId) -> ActionId {
        self.exterior_policies[policy][state.idx()]
    }
}
