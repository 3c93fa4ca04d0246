//! Cross-module pipeline invariants on the shipped models.

use mdp_embed::models::{QueueModel, ReservoirModel};
use mdp_embed::{
    analyze_all_excursions, build_embedding, compare_embedded, eliminate_dominated,
    embedded_counterpart, lift_policy, materialize_finite, policy_iteration, ActionId, StateId,
    StationaryPolicy, TruncationControl,
};

fn zero_policy(n: usize) -> StationaryPolicy {
    StationaryPolicy::new(vec![ActionId(0); n])
}

/// A source whose kernel never leaves the interior embeds into a model whose
/// interior rows equal the source rows exactly, whose ω states are all
/// unreachable, and whose optimal gain matches the direct solve bit for bit.
#[test]
fn exterior_free_round_trip_is_exact() {
    let model = QueueModel::new(
        0.3,
        vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        0.6,
        7,
        Some(6),
        std::sync::Arc::new(|x, a| x + a),
        std::sync::Arc::new(|x, _| x),
    )
    .unwrap();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    assert!(summaries.is_empty(), "no channel has positive exit mass");
    let emdp = build_embedding(&model, &summaries).unwrap();
    assert!(emdp.omega_unreachable());
    assert_eq!(emdp.base.n_states(), 14);

    let direct = materialize_finite(&model, 7).unwrap();
    for s in 0..7 {
        for a in 0..direct.action_count(s) {
            let a = ActionId(a);
            for t in 0..7u64 {
                assert_eq!(
                    emdp.base.transition(s, a).prob(StateId(t)),
                    direct.transition(s, a).prob(StateId(t))
                );
            }
            assert_eq!(emdp.base.cost(s, a), direct.cost(s, a));
        }
    }

    let g_direct = policy_iteration(&direct, &zero_policy(7)).unwrap().gain;
    let g_embedded = policy_iteration(&emdp.base, &zero_policy(14)).unwrap().gain;
    assert_eq!(g_direct, g_embedded);
}

/// Dominated-action elimination keeps the reservoir's optimal gain, where ω
/// states carry several genuinely distinct actions.
#[test]
fn reservoir_elimination_preserves_gain() {
    let model = ReservoirModel::demo();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    let emdp = build_embedding(&model, &summaries).unwrap();
    assert!(emdp.omega_actions.iter().any(|a| a.len() > 1));

    let g = policy_iteration(&emdp.base, &zero_policy(16)).unwrap().gain;
    let cleaned = eliminate_dominated(&emdp);
    // Distinct transition vectors: nothing to eliminate here.
    assert_eq!(
        emdp.omega_actions.iter().map(Vec::len).collect::<Vec<_>>(),
        cleaned
            .omega_actions
            .iter()
            .map(Vec::len)
            .collect::<Vec<_>>()
    );
    let g_cleaned = policy_iteration(&cleaned.base, &zero_policy(16)).unwrap().gain;
    assert!((g - g_cleaned).abs() <= 1e-10);
}

/// Policy transfer works when ω states offer several actions: the embedded
/// counterpart picks the matching provenance and lifting inverts it.
#[test]
fn reservoir_policy_transfer_roundtrip() {
    let model = ReservoirModel::demo();
    let summaries = analyze_all_excursions(&model, &TruncationControl::default()).unwrap();
    let emdp = build_embedding(&model, &summaries).unwrap();

    // Release 1 at the top level exits slower than release 2 would, so the
    // counterpart must pick ω7's matching action, not just any of the three.
    let mut interior = vec![ActionId(2); 8];
    interior[7] = ActionId(1);
    let source = mdp_embed::SourcePolicy {
        interior,
        exterior_policy: 0,
    };
    let sigma0 = embedded_counterpart(&emdp, &source).unwrap();
    assert!(emdp.omega_actions[7].len() > 1);
    let chosen = &emdp.omega_actions[7][sigma0.choice[8 + 7].0];
    assert!(chosen.provenance.contains(&mdp_embed::Provenance::Policy {
        interior_action: ActionId(1),
        exterior_policy: 0,
    }));
    let lifted = lift_policy(&emdp, &sigma0).unwrap();
    assert_eq!(lifted.policy, source);
    assert!(lifted.warnings.is_empty());

    // The transferred pair passes the simulation comparison.
    let report =
        compare_embedded(&model, &emdp, &source, &sigma0, StateId(0), 40_000, 3).unwrap();
    assert!(report.gain_within_ci);
    for exit in &report.per_exit {
        assert!(
            exit.chi_square <= exit.critical_95 || exit.excursions < 20,
            "channel {} χ² {} vs {}",
            exit.boundary.0,
            exit.chi_square,
            exit.critical_95
        );
    }
}

/// An exterior-free model makes the embedded comparison degenerate: there
/// are no excursions and the simulated gain matches the solver exactly in
/// distribution.
#[test]
fn exterior_free_comparison_is_trivial() {
    let model = QueueModel::new(
        0.3,
        vec![0.5],
        0.6,
        5,
        Some(4),
        std::sync::Arc::new(|x, a| x + a),
        std::sync::Arc::new(|x, _| x),
    )
    .unwrap();
    let emdp = build_embedding(&model, &[]).unwrap();
    let source = mdp_embed::SourcePolicy {
        interior: vec![ActionId(0); 5],
        exterior_policy: 0,
    };
    let sigma0 = embedded_counterpart(&emdp, &source).unwrap();
    let report =
        compare_embedded(&model, &emdp, &source, &sigma0, StateId(0), 20_000, 5).unwrap();
    assert!(report.per_exit.is_empty());
    assert!(report.gain_within_ci);
}
