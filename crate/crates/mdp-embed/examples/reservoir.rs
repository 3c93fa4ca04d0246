//! The reservoir demo: a model with a non-degenerate entrance distribution.
//!
//! Water level moves as `L' = max(L + inflow − release, 0)` with i.i.d.
//! inflow over {0..3} and releases {0, 1, 2}, forced to 2 above level 7.
//! Unlike the skip-free queue, excursions can re-enter the interior at
//! several states, so ω actions carry genuine entrance distributions and
//! different boundary actions produce different ω actions.
//!
//! Run with: `cargo run --release --example reservoir`

use mdp_embed::models::ReservoirModel;
use mdp_embed::{
    analyze_all_excursions, build_embedding, compare_embedded, lift_policy, policy_iteration,
    ActionId, StateId, StationaryPolicy, TruncationControl,
};

fn main() {
    let model = ReservoirModel::demo();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    println!("== excursion channels ==");
    for s in &summaries {
        println!(
            "exit from level {} under release {}: q = {:?}, E[τ|exit] = {:.6}, λ = {:.6}, ω-cost = {:.6}",
            s.boundary_state.0,
            s.interior_action.0,
            s.entrance
                .iter()
                .map(|q| (q * 1e6).round() / 1e6)
                .collect::<Vec<_>>(),
            s.mean_return_time,
            s.lambda,
            s.omega_cost
        );
    }

    let emdp = build_embedding(&model, &summaries).unwrap();
    println!(
        "\nembedded model: {} states, ω action counts {:?}",
        emdp.base.n_states(),
        emdp.omega_actions.iter().map(Vec::len).collect::<Vec<_>>()
    );

    let solved = policy_iteration(
        &emdp.base,
        &StationaryPolicy::new(vec![ActionId(0); emdp.base.n_states()]),
    )
    .unwrap();
    println!("optimal gain: {:.9}", solved.gain);
    for i in 0..emdp.n_interior() {
        println!(
            "  level {}: release {}",
            i,
            emdp.base.action_label(i, solved.policy.choice[i])
        );
    }

    let lifted = lift_policy(&emdp, &solved.policy).unwrap();
    let report = compare_embedded(
        &model,
        &emdp,
        &lifted.policy,
        &solved.policy,
        StateId(0),
        100_000,
        31,
    )
    .unwrap();
    println!(
        "\nsimulated source: {:.9} ± {:.9} ({} cycles) — gain within CI: {}",
        report.sim.mean,
        report.sim.half_width,
        report.sim.cycles,
        report.gain_within_ci
    );
    for exit in &report.per_exit {
        println!(
            "exit channel {}: {} excursions, empirical entrance {:?} vs exact {:?}, χ² = {:.3} (95% critical {:.3})",
            exit.boundary.0,
            exit.excursions,
            exit.empirical_entrance
                .iter()
                .map(|q| (q * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            exit.expected_entrance
                .iter()
                .map(|q| (q * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            exit.chi_square,
            exit.critical_95
        );
    }
}
