//! Constrained control: bound the time spent outside the interior.
//!
//! The queue gets an auxiliary cost layer charging 1 per step above level 3
//! (exterior occupancy). The constrained occupation-measure LP minimizes the
//! average running cost subject to a bound on that occupancy; tight bounds
//! force faster service (a randomized policy in general), impossible bounds
//! produce an infeasibility certificate.
//!
//! Run with: `cargo run --example constrained_queue`

use mdp_embed::models::QueueModel;
use mdp_embed::{
    analyze_all_excursions, extend_constrained, relative_value_iteration, solve_constrained,
    SolverError, TruncationControl,
};

fn main() {
    let model = QueueModel::demo().with_exterior_occupancy_aux();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    let emdp = extend_constrained(&model, &summaries).unwrap();
    println!(
        "embedded model with {} aux layer(s); ω3 occupancy cost = {:.6}",
        emdp.base.aux_len(),
        emdp.omega_actions[3][0].aux[0]
    );

    let unconstrained = relative_value_iteration(&emdp.base, 1e-9, 100_000).unwrap();
    println!("\nunconstrained gain: {:.9}", unconstrained.gain);

    for bound in [1e9, 0.008, 0.004] {
        match solve_constrained(&emdp.base, &[bound]) {
            Ok(sol) => {
                println!(
                    "\nbound {bound:>10}: gain {:.9}, occupancy achieved {:.9}",
                    sol.gain, sol.aux_values[0]
                );
                for (s, probs) in sol.policy.iter().enumerate() {
                    let split: Vec<String> = probs
                        .iter()
                        .enumerate()
                        .filter(|&(_, p)| *p > 1e-9)
                        .map(|(a, p)| {
                            format!(
                                "{} w.p. {:.4}",
                                emdp.base.action_label(s, mdp_embed::ActionId(a)),
                                p
                            )
                        })
                        .collect();
                    if !split.is_empty() && s < emdp.n_interior() {
                        println!("  state {s}: {}", split.join(", "));
                    }
                }
            }
            Err(SolverError::Infeasible { certificate }) => {
                println!("\nbound {bound:>10}: INFEASIBLE — {certificate}");
            }
            Err(other) => panic!("{other}"),
        }
    }
}
