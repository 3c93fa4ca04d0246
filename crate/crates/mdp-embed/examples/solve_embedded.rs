//! Solve the embedded queue for its optimal average cost.
//!
//! Relative value iteration and policy iteration must land on the same gain;
//! the cycle-ratio evaluation of the optimal policy at any recurrent state
//! reproduces it.
//!
//! Run with: `cargo run --example solve_embedded`

use mdp_embed::models::QueueModel;
use mdp_embed::{
    analyze_all_excursions, build_embedding, evaluate_cycle_ratio, policy_iteration,
    relative_value_iteration, ActionId, StateId, StationaryPolicy, TruncationControl,
};

fn main() {
    let model = QueueModel::demo();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    let emdp = build_embedding(&model, &summaries).unwrap();

    let rvi = relative_value_iteration(&emdp.base, 1e-9, 100_000).unwrap();
    let pi = policy_iteration(
        &emdp.base,
        &StationaryPolicy::new(vec![ActionId(0); emdp.base.n_states()]),
    )
    .unwrap();

    println!(
        "relative value iteration: gain {:.12} ({} sweeps, residual {:.2e})",
        rvi.gain, rvi.iterations, rvi.residual
    );
    println!(
        "policy iteration:         gain {:.12} ({} passes, residual {:.2e})",
        pi.gain, pi.iterations, pi.residual
    );
    println!("|Δgain| = {:.2e}\n", (rvi.gain - pi.gain).abs());

    println!("optimal policy (interior states):");
    for i in 0..emdp.n_interior() {
        println!(
            "  queue length {}: serve at rate {}",
            emdp.source_state(i).0,
            emdp.base.action_label(i, pi.policy.choice[i])
        );
    }

    for z in 0..emdp.n_interior() {
        let ratio = evaluate_cycle_ratio(&emdp.base, &pi.policy, StateId(z as u64)).unwrap();
        println!(
            "cycle-ratio gain at s{z}: {ratio:.12} (Δ = {:.2e})",
            (ratio - pi.gain).abs()
        );
    }
}
