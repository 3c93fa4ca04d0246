//! Choosing the interior set from the cost structure.
//!
//! When the running cost eventually exceeds a known bound γ on the optimal
//! gain, the sublevel set {x : min_a c(x, a) < γ} is a sound interior: any
//! policy beating γ has a recurrent state inside it.
//!
//! Run with: `cargo run --example suggest_interior`

use std::sync::Arc;

use mdp_embed::models::QueueModel;
use mdp_embed::suggest_interior;

fn main() {
    // Scan a queue whose service grid is available everywhere (the interior
    // has not been committed yet, so use a wide boundary).
    let model = QueueModel::new(
        0.3,
        vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        0.6,
        256,
        None,
        Arc::new(|x, a| x + a),
        Arc::new(|x, _| x),
    )
    .unwrap();

    for gamma in [1.5, 4.05, 10.0] {
        let suggestion = suggest_interior(&model, gamma, 200);
        println!(
            "γ = {gamma:>5}: Z = {:?}{}",
            suggestion.states.iter().map(|s| s.0).collect::<Vec<_>>(),
            if suggestion.boundary_warning {
                "  (warning: scan boundary still qualifies)"
            } else {
                ""
            }
        );
    }

    // A γ below every cost yields an empty, unusable suggestion.
    let empty = suggest_interior(&model, 0.05, 200);
    println!(
        "γ =  0.05: Z = {:?}, warning = {}",
        empty.states, empty.boundary_warning
    );
}
