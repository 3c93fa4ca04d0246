//! Three independent routes to the same excursion statistics.
//!
//! For the skip-free queue the exterior excursion quantities have closed
//! forms; the truncated first-passage solver and a seeded Monte Carlo run
//! must reproduce them.
//!
//! Run with: `cargo run --release --example closed_form_vs_solve`

use mdp_embed::models::QueueModel;
use mdp_embed::{
    analyze_excursion, kac_return_time, monte_carlo_excursion, skipfree_closed_form, utilization,
    ActionId, LinearCost, StateId, TruncationControl,
};

fn main() {
    let arrival = 0.3;
    let service = 0.6;
    println!("traffic intensity ρ = {:.9} (= 2/7)", utilization(arrival, service));
    println!(
        "return time to empty (uncontrolled queue, Kac): {:.9} (= 7/5)",
        kac_return_time(arrival, service).unwrap()
    );

    let model = QueueModel::demo();
    let top = ActionId(5); // rate 0.6 at the boundary state 3

    let closed =
        skipfree_closed_form(arrival, service, LinearCost::new(0.0, 1.0), &[], 4).unwrap();
    let solved = analyze_excursion(&model, StateId(3), top, 0, &TruncationControl::default())
        .unwrap();
    let mc = monte_carlo_excursion(&model, StateId(3), top, 0, 1_000_000, 2024).unwrap();

    println!("\n{:<22} {:>14} {:>14} {:>14} {:>12}", "quantity", "closed form", "trunc. solve", "monte carlo", "mc ± (95%)");
    let rows = [
        (
            "E[τ | exit]",
            closed.mean_return_time,
            solved.mean_return_time,
            mc.summary.mean_return_time,
            mc.half_width.mean_return_time,
        ),
        (
            "excursion cost",
            closed.excursion_cost,
            solved.excursion_cost,
            mc.summary.excursion_cost,
            mc.half_width.excursion_cost,
        ),
        ("λ", closed.lambda, solved.lambda, mc.summary.lambda, mc.half_width.lambda),
        (
            "ω-cost",
            closed.omega_cost,
            solved.omega_cost,
            mc.summary.omega_cost,
            mc.half_width.omega_cost,
        ),
    ];
    for (name, cf, ts, m, hw) in rows {
        println!("{name:<22} {cf:>14.9} {ts:>14.9} {m:>14.9} {hw:>12.2e}");
    }
    println!(
        "\nclosed form vs solve: max |Δ| = {:.2e}",
        [
            (closed.mean_return_time - solved.mean_return_time).abs(),
            (closed.excursion_cost - solved.excursion_cost).abs(),
            (closed.lambda - solved.lambda).abs(),
            (closed.omega_cost - solved.omega_cost).abs(),
        ]
        .into_iter()
        .fold(0.0f64, f64::max)
    );
}
