//! Exact finite-state embeddings for countable-state average-cost MDPs.
//!
//! A countable-state Markov decision process with a designated finite
//! *interior* set `Z` can be collapsed into a finite MDP with `2|Z|` states:
//! one copy of each interior state plus one `ω` state per interior state that
//! summarizes the excursions the process makes outside `Z`. The collapse is
//! exact: the finite model has the same optimal long-run average cost as the
//! countable one, and its optimal policy agrees with the countable optimum on
//! `Z`.
//!
//! The crate provides the full pipeline:
//!
//! * [`mdp`] — finite and countable MDP representations, policies, stationary
//!   distributions and expected-hitting solves;
//! * [`excursion`] — exterior excursion statistics (entrance distribution,
//!   conditional return time, excursion costs, the calibrated geometric
//!   parameter `λ`) via truncated linear solves, closed forms for skip-free
//!   queues, and Monte Carlo;
//! * [`embedding`] — construction of the embedded MDP, dominated-action
//!   elimination, the constrained-cost extension, and interior-set suggestion;
//! * [`solver`] — relative value iteration, policy iteration, cycle-ratio
//!   policy evaluation, and the constrained occupation-measure LP;
//! * [`sim`] — regenerative simulation of the countable model with
//!   renewal-reward confidence intervals, and embedded-vs-source comparison
//!   reports;
//! * [`spec`] / [`formats`] — declarative model specifications, model files,
//!   and newline-delimited result records used by the `mdpembed` binary.
//!
//! Every major capability has a runnable example under `examples/`; start
//! with `cargo run --example embed_queue`.

pub mod cli;
pub mod embedding;
pub mod excursion;
pub mod expr;
pub mod formats;
pub mod mdp;
pub mod models;
pub mod sim;
pub mod solver;
pub mod spec;

mod linalg;
mod rng;
mod simplex;

pub use embedding::{
    build_embedding, eliminate_dominated, embedded_counterpart, extend_constrained, lift_policy,
    perturb_omega_actions, suggest_interior, EmbeddedMdp, EmbeddingError, LiftedPolicy,
    OmegaAction, Provenance, ZSuggestion,
};
pub use excursion::{
    analyze_all_excursions, analyze_excursion, exit_mass, kac_return_time, monte_carlo_excursion,
    skipfree_closed_form, utilization, ExcursionError, ExcursionEstimate, ExcursionHalfWidths,
    ExcursionSummary, LinearCost, TruncationControl,
};
pub use mdp::{
    average_cost_of_policy, expected_hitting, induced_chain, materialize_finite,
    stationary_distribution, ActionId, ChainError, CountableModel, Distribution, FiniteMdp,
    MarkovChain, ModelError, SourcePolicy, StateId, StationaryPolicy,
};
pub use sim::{
    compare_embedded, simulate_average_cost, EmbeddingComparison, ExitChannelComparison, SimError,
    SimEstimate,
};
pub use solver::{
    evaluate_cycle_ratio, evaluate_policy, policy_iteration, relative_value_iteration,
    solve_constrained, InfeasibilityCertificate, OccupationSolution, SolveResult, SolverError,
};
pub use spec::{KernelSpec, ModelSpec, SpecError};
