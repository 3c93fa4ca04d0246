//! Verify the embedding against the original countable model by simulation.
//!
//! Solve the embedded queue, lift the optimal policy back to the source
//! model, and run regenerative cycles there: the simulated average cost must
//! bracket the solver's gain, the empirical entrance distribution must match
//! the ω action's entrance law, and mean excursion cost/length must match
//! the ω sojourn values.
//!
//! Run with: `cargo run --release --example simulate_source`

use mdp_embed::models::QueueModel;
use mdp_embed::{
    analyze_all_excursions, build_embedding, compare_embedded, lift_policy, policy_iteration,
    ActionId, StateId, StationaryPolicy, TruncationControl,
};

fn main() {
    let model = QueueModel::demo();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    let emdp = build_embedding(&model, &summaries).unwrap();
    let solved = policy_iteration(
        &emdp.base,
        &StationaryPolicy::new(vec![ActionId(0); emdp.base.n_states()]),
    )
    .unwrap();
    println!("embedded optimal gain: {:.9}", solved.gain);

    let lifted = lift_policy(&emdp, &solved.policy).unwrap();
    println!(
        "lifted source policy: interior rates {:?}, exterior policy {}",
        lifted
            .policy
            .interior
            .iter()
            .map(|a| model.service_grid()[a.0])
            .collect::<Vec<_>>(),
        lifted.policy.exterior_policy
    );

    let report = compare_embedded(
        &model,
        &emdp,
        &lifted.policy,
        &solved.policy,
        StateId(0),
        200_000,
        7,
    )
    .unwrap();
    println!(
        "simulated: {:.9} ± {:.9} over {} cycles ({} steps)",
        report.sim.mean, report.sim.half_width, report.sim.cycles, report.sim.steps
    );
    println!(
        "cycle-ratio gain of the embedded counterpart: {:.9}",
        report.embedded_gain
    );
    println!(
        "gain inside the 95% CI: {}",
        if report.gain_within_ci { "yes" } else { "NO" }
    );

    for exit in &report.per_exit {
        println!(
            "\nexit channel {} ({} excursions):",
            exit.boundary.0, exit.excursions
        );
        println!(
            "  entrance: empirical {:?} vs exact {:?}",
            exit.empirical_entrance, exit.expected_entrance
        );
        println!(
            "  χ² = {:.4} (dof {}, 95% critical {:.4})",
            exit.chi_square, exit.dof, exit.critical_95
        );
        println!(
            "  mean excursion cost {:.6} vs ω sojourn cost {:.6} (se {:.6})",
            exit.mean_excursion_cost, exit.expected_excursion_cost, exit.cost_se
        );
        println!(
            "  mean excursion length {:.6} vs 1/λ = {:.6} (se {:.6})",
            exit.mean_excursion_len, exit.expected_excursion_len, exit.len_se
        );
    }
}
