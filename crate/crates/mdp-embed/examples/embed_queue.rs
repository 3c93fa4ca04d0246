//! Build the finite embedding of the controlled-queue demo.
//!
//! The queue has arrivals at rate 0.3, service rates 0.1–0.6 on the interior
//! {0..3}, and a forced rate 0.6 outside. Excursion analysis summarizes
//! everything above level 3 into a single ω state, giving an 8-state model
//! that is exactly equivalent to the infinite one.
//!
//! Run with: `cargo run --example embed_queue`

use mdp_embed::models::QueueModel;
use mdp_embed::{
    analyze_all_excursions, build_embedding, ActionId, StateId, TruncationControl,
};

fn main() {
    let model = QueueModel::demo();

    println!("== excursion summaries (truncated solves) ==");
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    for s in &summaries {
        println!(
            "exit from {} under rate {}: exit mass {:.4}, E[τ|exit] = {:.6}, λ = {:.6}, ω-cost = {:.6}",
            s.boundary_state.0,
            model.service_grid()[s.interior_action.0],
            s.exit_mass,
            s.mean_return_time,
            s.lambda,
            s.omega_cost
        );
    }

    let emdp = build_embedding(&model, &summaries).unwrap();
    println!("\n== embedded model: {} states ==", emdp.base.n_states());
    println!("(states 0..4 mirror the interior, 4..8 are the ω states)\n");
    for s in 0..emdp.base.n_states() {
        for a in 0..emdp.base.action_count(s) {
            let action = ActionId(a);
            let row: Vec<String> = (0..emdp.base.n_states())
                .map(|t| {
                    let p = emdp.base.transition(s, action).prob(StateId(t as u64));
                    if p == 0.0 {
                        "     .".into()
                    } else {
                        format!("{p:6.3}")
                    }
                })
                .collect();
            println!(
                "state {s} action {:>3}: [{}]  cost {:.4}",
                emdp.base.action_label(s, action),
                row.join(" "),
                emdp.base.cost(s, action)
            );
        }
    }

    println!("\n== ω-action provenance ==");
    for (i, actions) in emdp.omega_actions.iter().enumerate() {
        for (k, action) in actions.iter().enumerate() {
            println!(
                "ω{i} action {k}: λ = {:.6}, cost = {:.6}, from {:?}",
                action.lambda, action.cost, action.provenance
            );
        }
    }
}
