//! Declarative model specifications.
//!
//! A [`ModelSpec`] is the file-level description of a countable model: a
//! kernel family with parameters, cost expressions over `(x, a)`, the
//! interior set, optional auxiliary cost layers, and optional constraint
//! bounds. [`ModelSpec::build`] validates the spec and produces the runtime
//! model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CostExpr, ParseError};
use crate::mdp::{ActionId, CountableModel, Distribution, ModelError, StateId};
use crate::models::{QueueModel, ReservoirModel, TableAction, TableModel};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("field '{field}': {message}")]
    Validation { field: String, message: String },
    #[error("field '{field}': {source}")]
    Expr {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(field: &str, message: impl Into<String>) -> SpecError {
    SpecError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Kernel family and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// Single-server queue with Bernoulli arrivals and controlled service.
    ControlledQueue {
        arrival: f64,
        service_grid: Vec<f64>,
        exterior_service: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacity: Option<u64>,
    },
    /// Water-level walk with i.i.d. inflow and controlled release.
    ReservoirRandomWalk {
        inflow_pmf: Vec<f64>,
        release_grid: Vec<u64>,
        exterior_release: u64,
    },
    /// Fully explicit finite tables.
    ExplicitTable {
        states: Vec<TableStateSpec>,
        /// One action index per state for each exterior policy; interior
        /// entries are ignored.
        #[serde(default)]
        exterior_policies: Vec<Vec<usize>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStateSpec {
    pub actions: Vec<TableActionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableActionSpec {
    pub transitions: Vec<(u64, f64)>,
    pub cost: f64,
    #[serde(default)]
    pub aux: Vec<f64>,
}

/// An auxiliary cost layer given as expressions over `(x, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxCostSpec {
    pub cost: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exterior_cost: Option<String>,
}

/// Declarative description of a countable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub kernel: KernelSpec,
    /// Running cost expression; required for parametric families, absent for
    /// explicit tables (their costs live in the table).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<String>,
    /// Cost outside the interior; defaults to `cost`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exterior_cost: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux_costs: Vec<AuxCostSpec>,
    pub interior: Vec<u64>,
    /// Default bounds for the auxiliary layers (one per layer), if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<f64>,
}

impl ModelSpec {
    /// The worked queue demo: arrivals 0.3, service grid 0.1–0.6, forced
    /// exterior rate 0.6, interior {0..3}, cost `x + a` inside, `x` outside.
    pub fn queue_demo() -> Self {
        Self {
            name: "queue".into(),
            kernel: KernelSpec::ControlledQueue {
                arrival: 0.3,
                service_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
                exterior_service: 0.6,
                capacity: None,
            },
            cost: Some("x + a".into()),
            exterior_cost: Some("x".into()),
            aux_costs: Vec::new(),
            interior: vec![0, 1, 2, 3],
            constraints: Vec::new(),
        }
    }

    /// The reservoir demo: i.i.d. inflow over {0..3}, releases {0, 1, 2}
    /// forced to 2 outside the interior {0..7}.
    pub fn reservoir_demo() -> Self {
        Self {
            name: "reservoir".into(),
            kernel: KernelSpec::ReservoirRandomWalk {
                inflow_pmf: vec![0.2, 0.3, 0.3, 0.2],
                release_grid: vec![0, 1, 2],
                exterior_release: 2,
            },
            cost: Some("0.25*x - a*(1 + 0.05*x)".into()),
            exterior_cost: None,
            aux_costs: Vec::new(),
            interior: (0..8).collect(),
            constraints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.interior.is_empty() {
            return Err(invalid("interior", "must contain at least one state"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in &self.interior {
            if !seen.insert(s) {
                return Err(invalid("interior", format!("state {s} repeats")));
            }
        }
        if !self.constraints.is_empty() && self.constraints.len() != self.aux_costs.len() {
            return Err(invalid(
                "constraints",
                format!(
                    "{} bounds for {} aux layers",
                    self.constraints.len(),
                    self.aux_costs.len()
                ),
            ));
        }
        match &self.kernel {
            KernelSpec::ControlledQueue {
                arrival,
                service_grid,
                exterior_service,
                capacity,
            } => {
                check_unit("kernel.arrival", *arrival)?;
                check_unit("kernel.exterior_service", *exterior_service)?;
                if service_grid.is_empty() {
                    return Err(invalid("kernel.service_grid", "must be nonempty"));
                }
                for &s in service_grid {
                    check_unit("kernel.service_grid", s)?;
                }
                self.check_contiguous_interior()?;
                if let Some(cap) = capacity {
                    if *cap + 1 < self.interior.len() as u64 {
                        return Err(invalid(
                            "kernel.capacity",
                            "lies strictly inside the interior",
                        ));
                    }
                }
                self.require_cost()?;
            }
            KernelSpec::ReservoirRandomWalk {
                inflow_pmf,
                release_grid,
                ..
            } => {
                if inflow_pmf.is_empty() {
                    return Err(invalid("kernel.inflow_pmf", "must be nonempty"));
                }
                let sum: f64 = inflow_pmf.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(invalid(
                        "kernel.inflow_pmf",
                        format!("sums to {sum}, expected 1"),
                    ));
                }
                for &p in inflow_pmf {
                    check_unit("kernel.inflow_pmf", p)?;
                }
                if release_grid.is_empty() {
                    return Err(invalid("kernel.release_grid", "must be nonempty"));
                }
                self.check_contiguous_interior()?;
                self.require_cost()?;
            }
            KernelSpec::ExplicitTable {
                states,
                exterior_policies,
            } => {
                if self.cost.is_some() {
                    return Err(invalid(
                        "cost",
                        "explicit-table kernels carry costs in the table",
                    ));
                }
                if !self.aux_costs.is_empty() {
                    return Err(invalid(
                        "aux_costs",
                        "explicit-table kernels carry aux costs in the table",
                    ));
                }
                let n = states.len() as u64;
                if n == 0 {
                    return Err(invalid("kernel.states", "must be nonempty"));
                }
                for (s, state) in states.iter().enumerate() {
                    if state.actions.is_empty() {
                        return Err(invalid(
                            "kernel.states",
                            format!("state {s} has no actions"),
                        ));
                    }
                    for (a, action) in state.actions.iter().enumerate() {
                        let total: f64 = action.transitions.iter().map(|&(_, p)| p).sum();
                        if (total - 1.0).abs() > 1e-12 {
                            return Err(invalid(
                                "kernel.states",
                                format!("state {s} action {a}: row sums to {total}"),
                            ));
                        }
                        for &(t, p) in &action.transitions {
                            if t >= n {
                                return Err(invalid(
                                    "kernel.states",
                                    format!("state {s} action {a}: target {t} out of range"),
                                ));
                            }
                            check_unit("kernel.states", p)?;
                        }
                    }
                }
                for &s in &self.interior {
                    if s >= n {
                        return Err(invalid(
                            "interior",
                            format!("state {s} exceeds the table ({n} states)"),
                        ));
                    }
                }
                let interior: std::collections::BTreeSet<u64> =
                    self.interior.iter().copied().collect();
                if interior.len() < states.len() && exterior_policies.is_empty() {
                    return Err(invalid(
                        "kernel.exterior_policies",
                        "required when the table has exterior states",
                    ));
                }
                for (k, policy) in exterior_policies.iter().enumerate() {
                    if policy.len() != states.len() {
                        return Err(invalid(
                            "kernel.exterior_policies",
                            format!("policy {k} covers {} of {} states", policy.len(), states.len()),
                        ));
                    }
                }
            }
        }
        for (k, aux) in self.aux_costs.iter().enumerate() {
            parse_expr(&format!("aux_costs[{k}].cost"), &aux.cost)?;
            if let Some(e) = &aux.exterior_cost {
                parse_expr(&format!("aux_costs[{k}].exterior_cost"), e)?;
            }
        }
        if let Some(e) = &self.cost {
            parse_expr("cost", e)?;
        }
        if let Some(e) = &self.exterior_cost {
            parse_expr("exterior_cost", e)?;
        }
        Ok(())
    }

    /// Parametric families index states by level; the interior must be the
    /// contiguous range 0..n in ascending order.
    fn check_contiguous_interior(&self) -> Result<(), SpecError> {
        for (k, &s) in self.interior.iter().enumerate() {
            if s != k as u64 {
                return Err(invalid(
                    "interior",
                    "parametric families require the contiguous interior 0..n",
                ));
            }
        }
        Ok(())
    }

    fn require_cost(&self) -> Result<&str, SpecError> {
        self.cost
            .as_deref()
            .ok_or_else(|| invalid("cost", "required for parametric kernel families"))
    }

    /// Validate and construct the runtime model.
    pub fn build(&self) -> Result<Box<dyn CountableModel>, SpecError> {
        self.validate()?;
        match &self.kernel {
            KernelSpec::ControlledQueue {
                arrival,
                service_grid,
                exterior_service,
                capacity,
            } => {
                let (cost_in, cost_out) = self.cost_fns()?;
                let mut model = QueueModel::new(
                    *arrival,
                    service_grid.clone(),
                    *exterior_service,
                    self.interior.len() as u64,
                    *capacity,
                    cost_in,
                    cost_out,
                )?;
                for aux in &self.aux_costs {
                    let (inside, outside) = aux_fns(aux)?;
                    model = model.with_aux(inside, outside);
                }
                Ok(Box::new(model))
            }
            KernelSpec::ReservoirRandomWalk {
                inflow_pmf,
                release_grid,
                exterior_release,
            } => {
                let (cost_in, cost_out) = self.cost_fns()?;
                let mut model = ReservoirModel::new(
                    inflow_pmf.clone(),
                    release_grid.clone(),
                    *exterior_release,
                    self.interior.len() as u64,
                    cost_in,
                    cost_out,
                )?;
                for aux in &self.aux_costs {
                    let (inside, outside) = aux_fns(aux)?;
                    model = model.with_aux(inside, outside);
                }
                Ok(Box::new(model))
            }
            KernelSpec::ExplicitTable {
                states,
                exterior_policies,
            } => {
                let rows: Vec<Vec<TableAction>> = states
                    .iter()
                    .map(|state| {
                        state
                            .actions
                            .iter()
                            .map(|a| {
                                Ok(TableAction {
                                    transitions: Distribution::new(
                                        a.transitions
                                            .iter()
                                            .map(|&(t, p)| (StateId(t), p))
                                            .collect(),
                                    )?,
                                    cost: a.cost,
                                    aux: a.aux.clone(),
                                })
                            })
                            .collect::<Result<Vec<_>, ModelError>>()
                    })
                    .collect::<Result<Vec<_>, ModelError>>()?;
                let policies: Vec<Vec<ActionId>> = exterior_policies
                    .iter()
                    .map(|p| p.iter().map(|&a| ActionId(a)).collect())
                    .collect();
                let model = TableModel::new(
                    rows,
                    self.interior.iter().map(|&s| StateId(s)).collect(),
                    policies,
                )?;
                Ok(Box::new(model))
            }
        }
    }

    fn cost_fns(
        &self,
    ) -> Result<(crate::models::CostFn, crate::models::CostFn), SpecError> {
        let cost = parse_expr("cost", self.require_cost()?)?;
        let exterior = match &self.exterior_cost {
            Some(e) => parse_expr("exterior_cost", e)?,
            None => cost.clone(),
        };
        Ok((expr_fn(cost), expr_fn(exterior)))
    }
}

fn check_unit(field: &str, p: f64) -> Result<(), SpecError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(invalid(field, format!("{p} is not a probability")));
    }
    Ok(())
}

fn parse_expr(field: &str, source: &str) -> Result<CostExpr, SpecError> {
    CostExpr::parse(source).map_err(|source| SpecError::Expr {
        field: field.to_string(),
        source,
    })
}

fn expr_fn(expr: CostExpr) -> crate::models::CostFn {
    Arc::new(move |x, a| expr.eval(x, a))
}

fn aux_fns(aux: &AuxCostSpec) -> Result<(crate::models::CostFn, crate::models::CostFn), SpecError> {
    let inside = parse_expr("aux_costs.cost", &aux.cost)?;
    let outside = match &aux.exterior_cost {
        Some(e) => parse_expr("aux_costs.exterior_cost", e)?,
        None => inside.clone(),
    };
    Ok((expr_fn(inside), expr_fn(outside)))
}
