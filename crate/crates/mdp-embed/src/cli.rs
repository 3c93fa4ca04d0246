//! Command implementations behind the `mdpembed` binary.
//!
//! Subcommands: `embed`, `solve`, `eval`, `simulate`, `verify`, `demo`.
//! Exit codes: 0 success, 2 validation problems (specs, files, flags),
//! 3 numerical failures (non-recurrence, non-convergence, infeasibility),
//! 4 verification failure. The default seed comes from `MDPEMBED_SEED`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::embedding::{
    eliminate_dominated, extend_constrained, lift_policy, EmbeddedMdp, EmbeddingError,
};
use crate::excursion::{
    analyze_all_excursions, exit_mass, monte_carlo_excursion, skipfree_closed_form,
    ExcursionError, ExcursionSummary, LinearCost, TruncationControl,
};
use crate::formats::{
    append_records, load_finite_policy, load_model_file, load_source_policy, load_spec,
    save_model_file, save_spec, FileError, ModelFile, ResultRecord,
};
use crate::mdp::{
    average_cost_of_policy, ActionId, ChainError, CountableModel, ModelError, StateId,
    StationaryPolicy,
};
use crate::sim::{compare_embedded, simulate_average_cost, SimError};
use crate::solver::{
    evaluate_cycle_ratio, evaluate_policy, policy_iteration, relative_value_iteration,
    solve_constrained, SolveResult, SolverError,
};
use crate::spec::{KernelSpec, ModelSpec, SpecError};

#[derive(Parser, Debug)]
#[command(
    name = "mdpembed",
    about = "Exact finite-state embeddings for countable average-cost MDPs",
    version
)]
pub struct Cli {
    /// Seed for every stochastic routine.
    #[arg(long, global = true, env = "MDPEMBED_SEED", default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analyze excursions and write the embedded model file.
    Embed(EmbedArgs),
    /// Solve a model file for the optimal average cost.
    Solve(SolveArgs),
    /// Evaluate a policy: stationary and cycle-ratio gains side by side.
    Eval(EvalArgs),
    /// Simulate a source model under a policy by regenerative cycles.
    Simulate(SimulateArgs),
    /// Full check: embed, solve, lift the policy, simulate, compare.
    Verify(VerifyArgs),
    /// Write a shipped demo spec.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Truncated first-passage solves.
    Solve,
    /// Closed forms for the skip-free queue.
    ClosedForm,
    /// Monte Carlo excursions.
    Mc,
}

impl Backend {
    fn name(self) -> &'static str {
        match self {
            Backend::Solve => "solve",
            Backend::ClosedForm => "closed-form",
            Backend::Mc => "mc",
        }
    }
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Model spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output embedded-model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Solve)]
    pub backend: Backend,
    /// Stabilization tolerance for the truncated solves.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Initial truncation level (defaults to |Z| + 32).
    #[arg(long)]
    pub trunc_start: Option<u64>,
    /// Excursions per channel for the Monte Carlo backend.
    #[arg(long, default_value_t = 200_000)]
    pub cycles: u64,
    /// Drop dominated ω-actions after construction.
    #[arg(long, default_value_t = false)]
    pub eliminate_dominated: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Model file (finite or embedded).
    #[arg(long)]
    pub model: PathBuf,
    /// Results file to append to.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "rvi")]
    pub method: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Auxiliary-cost bounds as `k=V` (1-based layer index).
    #[arg(long = "constraint")]
    pub constraints: Vec<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Policy file `{"choice": [...]}`; defaults to the solver's optimum.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Reference state for the cycle-ratio evaluation.
    #[arg(long, default_value_t = 0)]
    pub z: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready per-state table (state, label, stationary probability, bias).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Source model spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Policy file `{"interior": [...], "exterior_policy": k}`.
    #[arg(long)]
    pub policy: PathBuf,
    /// Regeneration state (defaults to the first interior state).
    #[arg(long)]
    pub z: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub cycles: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready convergence table (cycles, mean, half width).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Solve)]
    pub backend: Backend,
    #[arg(long, default_value_t = 100_000)]
    pub cycles: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub trunc_start: Option<u64>,
    #[arg(long)]
    pub z: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// Demo name: `queue` or `reservoir`.
    pub name: String,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::VerificationFailed(_) => 4,
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<ExcursionError> for CliError {
    fn from(e: ExcursionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Embed(args) => cmd_embed(&args, cli.seed),
        Command::Solve(args) => cmd_solve(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Simulate(args) => cmd_simulate(&args, cli.seed),
        Command::Verify(args) => cmd_verify(&args, cli.seed),
        Command::Demo(args) => cmd_demo(&args),
    }
}

fn summaries_for(
    spec: &ModelSpec,
    model: &dyn CountableModel,
    backend: Backend,
    tol: f64,
    trunc_start: Option<u64>,
    cycles: u64,
    seed: u64,
) -> Result<Vec<ExcursionSummary>, CliError> {
    let trunc = TruncationControl {
        start_level: trunc_start,
        tol,
        ..TruncationControl::default()
    };
    match backend {
        Backend::Solve => Ok(analyze_all_excursions(model, &trunc)?),
        Backend::ClosedForm => closed_form_summaries(spec, model),
        Backend::Mc => {
            let mut out = Vec::new();
            for &z in model.interior() {
                for a in 0..model.action_count(z) {
                    let a = ActionId(a);
                    if exit_mass(model, z, a) <= 0.0 {
                        continue;
                    }
                    for ext in 0..model.exterior_policy_count() {
                        let est = monte_carlo_excursion(model, z, a, ext, cycles, seed)?;
                        out.push(est.summary);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Fit `cost(x) = intercept + slope·x` on the exterior by probing four
/// levels; rejects costs that are not affine out there.
fn probe_affine(
    label: &str,
    first: u64,
    eval: impl Fn(u64) -> f64,
) -> Result<LinearCost, CliError> {
    let c0 = eval(first);
    let c1 = eval(first + 1);
    let slope = c1 - c0;
    let intercept = c0 - slope * first as f64;
    for probe in [first + 2, first + 3] {
        let expected = intercept + slope * probe as f64;
        let actual = eval(probe);
        if (actual - expected).abs() > 1e-9 * (1.0 + actual.abs()) {
            return Err(CliError::Validation(format!(
                "closed-form backend requires {label} to be affine in x on the exterior"
            )));
        }
    }
    Ok(LinearCost::new(intercept, slope))
}

fn closed_form_summaries(
    spec: &ModelSpec,
    model: &dyn CountableModel,
) -> Result<Vec<ExcursionSummary>, CliError> {
    let KernelSpec::ControlledQueue {
        arrival,
        service_grid,
        exterior_service,
        capacity,
    } = &spec.kernel
    else {
        return Err(CliError::Validation(
            "closed-form backend supports only the controlled-queue family".into(),
        ));
    };
    if capacity.is_some() {
        return Err(CliError::Validation(
            "closed-form backend requires an unbounded exterior (no capacity)".into(),
        ));
    }
    let first = model.interior().len() as u64;
    let ext_action = |x: u64| model.exterior_choice(0, StateId(x));
    let cost = probe_affine("cost", first, |x| model.cost(StateId(x), ext_action(x)))?;
    let aux: Vec<LinearCost> = (0..model.aux_len())
        .map(|k| {
            probe_affine(&format!("aux layer {k}"), first, |x| {
                model.aux_cost(StateId(x), ext_action(x))[k]
            })
        })
        .collect::<Result<_, _>>()?;

    let template = skipfree_closed_form(*arrival, *exterior_service, cost, &aux, first)?;
    let boundary = StateId(first - 1);
    let mut out = Vec::new();
    for (a, _) in service_grid.iter().enumerate() {
        let a = ActionId(a);
        let mass = exit_mass(model, boundary, a);
        if mass <= 0.0 {
            continue;
        }
        let mut summary = template.clone();
        summary.interior_action = a;
        summary.exit_mass = mass;
        out.push(summary);
    }
    Ok(out)
}

fn embed_records(
    emdp: &EmbeddedMdp,
    summaries: &[ExcursionSummary],
    model_name: &str,
    backend: Backend,
) -> ResultRecord {
    ResultRecord::Embed {
        model: model_name.to_string(),
        backend: backend.name().to_string(),
        states: emdp.base.n_states(),
        interior: emdp.interior.iter().map(|s| s.0).collect(),
        omega_unreachable: emdp.omega_unreachable(),
        channels: summaries
            .iter()
            .map(|s| {
                (
                    s.boundary_state.0,
                    s.interior_action.0,
                    s.exterior_policy,
                    s.lambda,
                    s.omega_cost,
                )
            })
            .collect(),
    }
}

fn cmd_embed(args: &EmbedArgs, seed: u64) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let model = spec.build()?;
    let summaries = summaries_for(
        &spec,
        model.as_ref(),
        args.backend,
        args.tol,
        args.trunc_start,
        args.cycles,
        seed,
    )?;
    let mut emdp = extend_constrained(model.as_ref(), &summaries)?;
    if args.eliminate_dominated {
        emdp = eliminate_dominated(&emdp);
    }
    let file = ModelFile::from_embedded(&emdp, &spec.name);
    save_model_file(&args.out, &file)?;
    println!(
        "embedded '{}' via {}: {} states ({} interior), ω {}",
        spec.name,
        args.backend.name(),
        emdp.base.n_states(),
        emdp.n_interior(),
        if emdp.omega_unreachable() {
            "unreachable"
        } else {
            "reachable"
        }
    );
    for (i, actions) in emdp.omega_actions.iter().enumerate() {
        for (k, action) in actions.iter().enumerate() {
            println!(
                "  ω{i} action {k}: λ = {:.6}, cost = {:.6}",
                action.lambda, action.cost
            );
        }
    }
    Ok(())
}

fn parse_constraints(raw: &[String], aux_len: usize) -> Result<Option<Vec<f64>>, CliError> {
    if raw.is_empty() {
        return Ok(None);
    }
    let mut bounds = vec![f64::INFINITY; aux_len];
    for item in raw {
        let (k, v) = item.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("constraint '{item}' is not of the form k=V"))
        })?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("constraint index '{k}' is not a number")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("constraint bound '{v}' is not a number")))?;
        if k == 0 || k > aux_len {
            return Err(CliError::Validation(format!(
                "constraint layer {k} out of range (model has {aux_len} aux layers)"
            )));
        }
        bounds[k - 1] = v;
    }
    Ok(Some(bounds))
}

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let file = load_model_file(&args.model)?;
    let mdp = file.to_finite()?;
    let constraints = parse_constraints(&args.constraints, mdp.aux_len())?;
    let mut records = Vec::new();
    match constraints {
        Some(bounds) => {
            let sol = solve_constrained(&mdp, &bounds)?;
            println!(
                "constrained gain {:.9} (aux values {:?})",
                sol.gain, sol.aux_values
            );
            records.push(ResultRecord::Constrained {
                model: file.name.clone(),
                gain: sol.gain,
                aux_values: sol.aux_values.clone(),
                bounds,
                policy: sol.policy.clone(),
            });
        }
        None => {
            let result = solve_unconstrained(&mdp, &args.method, args.tol)?;
            println!(
                "gain {:.9} (residual {:.3e}, {} iterations)",
                result.gain, result.residual, result.iterations
            );
            for (s, a) in result.policy.choice.iter().enumerate() {
                println!("  state {s}: action {} [{}]", a.0, mdp.action_label(s, *a));
            }
            records.push(ResultRecord::Solve {
                model: file.name.clone(),
                method: args.method.clone(),
                gain: result.gain,
                residual: result.residual,
                iterations: result.iterations,
                policy: result.policy.choice.iter().map(|a| a.0).collect(),
                bias: result.bias.clone(),
            });
        }
    }
    if let Some(out) = &args.out {
        append_records(out, &records)?;
    }
    Ok(())
}

fn solve_unconstrained(
    mdp: &crate::mdp::FiniteMdp,
    method: &str,
    tol: f64,
) -> Result<SolveResult, CliError> {
    match method {
        "rvi" => Ok(relative_value_iteration(mdp, tol, 100_000)?),
        "pi" => Ok(policy_iteration(
            mdp,
            &StationaryPolicy::new(vec![ActionId(0); mdp.n_states()]),
        )?),
        other => Err(CliError::Validation(format!(
            "unknown method '{other}' (expected rvi or pi)"
        ))),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let file = load_model_file(&args.model)?;
    let mdp = file.to_finite()?;
    let policy = match &args.policy {
        Some(path) => {
            let p = load_finite_policy(path)?;
            p.validate(&mdp)?;
            p
        }
        None => solve_unconstrained(&mdp, "rvi", 1e-9)?.policy,
    };
    let stationary_gain = average_cost_of_policy(&mdp, &policy)?;
    let cycle_gain = evaluate_cycle_ratio(&mdp, &policy, StateId(args.z))?;
    println!("stationary evaluation: {stationary_gain:.9}");
    println!("cycle ratio at {}:      {cycle_gain:.9}", args.z);
    if let Some(out) = &args.out {
        append_records(
            out,
            &[ResultRecord::Eval {
                model: file.name.clone(),
                reference: args.z,
                stationary_gain,
                cycle_ratio_gain: cycle_gain,
                policy: policy.choice.iter().map(|a| a.0).collect(),
            }],
        )?;
    }
    if let Some(csv) = &args.csv {
        let pi = crate::mdp::stationary_distribution(&mdp, &policy)?;
        let (_, bias) = evaluate_policy(&mdp, &policy)?;
        let mut text = String::from("state,action,stationary_probability,bias\n");
        for s in 0..mdp.n_states() {
            text.push_str(&format!(
                "{s},{},{},{}\n",
                mdp.action_label(s, policy.choice[s]),
                pi[s],
                bias[s]
            ));
        }
        std::fs::write(csv, text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", csv.display())))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let model = spec.build()?;
    let policy = load_source_policy(&args.policy)?;
    let z = StateId(args.z.unwrap_or(model.interior()[0].0));
    let est = simulate_average_cost(model.as_ref(), &policy, z, args.cycles, seed)?;
    println!(
        "simulated mean {:.9} ± {:.9} ({} cycles, {} steps, seed {})",
        est.mean, est.half_width, est.cycles, est.steps, est.seed
    );
    if let Some(out) = &args.out {
        append_records(
            out,
            &[ResultRecord::Simulate {
                model: spec.name.clone(),
                z: z.0,
                estimate: est,
            }],
        )?;
    }
    if let Some(csv) = &args.csv {
        let mut text = String::from("cycles,mean,half_width\n");
        let mut m = (args.cycles / 128).max(1);
        while m < args.cycles {
            let partial = simulate_average_cost(model.as_ref(), &policy, z, m, seed)?;
            text.push_str(&format!("{m},{},{}\n", partial.mean, partial.half_width));
            m *= 2;
        }
        text.push_str(&format!("{},{},{}\n", args.cycles, est.mean, est.half_width));
        std::fs::write(csv, text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", csv.display())))?;
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, seed: u64) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let model = spec.build()?;
    let summaries = summaries_for(
        &spec,
        model.as_ref(),
        args.backend,
        args.tol,
        args.trunc_start,
        200_000,
        seed,
    )?;
    let emdp = extend_constrained(model.as_ref(), &summaries)?;
    let solved = policy_iteration(
        &emdp.base,
        &StationaryPolicy::new(vec![ActionId(0); emdp.base.n_states()]),
    )?;
    let lifted = lift_policy(&emdp, &solved.policy)?;
    let z = StateId(args.z.unwrap_or(model.interior()[0].0));
    let report = compare_embedded(
        model.as_ref(),
        &emdp,
        &lifted.policy,
        &solved.policy,
        z,
        args.cycles,
        seed,
    )?;

    let mut records = vec![
        embed_records(&emdp, &summaries, &spec.name, args.backend),
        ResultRecord::Solve {
            model: spec.name.clone(),
            method: "pi".into(),
            gain: solved.gain,
            residual: solved.residual,
            iterations: solved.iterations,
            policy: solved.policy.choice.iter().map(|a| a.0).collect(),
            bias: solved.bias.clone(),
        },
    ];
    for exit in &report.per_exit {
        records.push(ResultRecord::EntranceFit {
            boundary: exit.boundary.0,
            excursions: exit.excursions,
            chi_square: if exit.chi_square.is_finite() {
                exit.chi_square
            } else {
                1e300
            },
            dof: exit.dof,
            critical_95: exit.critical_95,
            empirical: exit.empirical_entrance.clone(),
            expected: exit.expected_entrance.clone(),
            mean_cost: exit.mean_excursion_cost,
            expected_cost: exit.expected_excursion_cost,
            mean_length: exit.mean_excursion_len,
            expected_length: exit.expected_excursion_len,
        });
    }
    let pass = report.gain_within_ci;
    records.push(ResultRecord::Verify {
        model: spec.name.clone(),
        backend: args.backend.name().to_string(),
        seed,
        cycles: args.cycles,
        embedded_gain: report.embedded_gain,
        simulated: report.sim,
        within_ci: pass,
        lift_warnings: lifted.warnings.clone(),
        pass,
    });
    if let Some(out) = &args.out {
        append_records(out, &records)?;
    }

    println!(
        "embedded optimal gain {:.9}; simulated {:.9} ± {:.9} over {} cycles",
        report.embedded_gain, report.sim.mean, report.sim.half_width, report.sim.cycles
    );
    for exit in &report.per_exit {
        println!(
            "  exit channel {}: {} excursions, χ² = {:.4} (dof {}, 95% critical {:.4}), mean cost {:.6} vs {:.6}",
            exit.boundary.0,
            exit.excursions,
            exit.chi_square,
            exit.dof,
            exit.critical_95,
            exit.mean_excursion_cost,
            exit.expected_excursion_cost
        );
    }
    for w in &lifted.warnings {
        println!("  warning: {w}");
    }
    if pass {
        println!("PASS: solver gain lies inside the simulation CI");
        Ok(())
    } else {
        println!("FAIL: solver gain lies outside the simulation CI");
        Err(CliError::VerificationFailed(format!(
            "|{:.9} - {:.9}| > {:.9}",
            report.embedded_gain, report.sim.mean, report.sim.half_width
        )))
    }
}

fn cmd_demo(args: &DemoArgs) -> Result<(), CliError> {
    let spec = match args.name.as_str() {
        "queue" => ModelSpec::queue_demo(),
        "reservoir" => ModelSpec::reservoir_demo(),
        other => {
            return Err(CliError::Validation(format!(
                "unknown demo '{other}' (expected queue or reservoir)"
            )))
        }
    };
    match &args.out {
        Some(path) => {
            save_spec(path, &spec)?;
            println!("wrote {}", path.display());
        }
        None => {
            let text = serde_json::to_string_pretty(&spec)
                .expect("demo specs serialize");
            println!("{text}");
        }
    }
    Ok(())
}

/// Entry point shared by the binary.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
