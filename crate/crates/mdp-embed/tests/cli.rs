//! End-to-end checks of the `mdpembed` binary: pipelines, file round-trips,
//! and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use mdp_embed::formats::{load_model_file, read_records, ResultRecord};
use mdp_embed::spec::{KernelSpec, ModelSpec, TableActionSpec, TableStateSpec};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mdpembed")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin())
        .args(args)
        .env_remove("MDPEMBED_SEED")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_queue_spec(dir: &Path) -> PathBuf {
    let path = dir.join("queue.json");
    mdp_embed::formats::save_spec(&path, &ModelSpec::queue_demo()).unwrap();
    path
}

#[test]
fn demo_then_embed_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("queue.json");
    let (code, _, _) = run(&["demo", "queue", "--out", spec.to_str().unwrap()]);
    assert_eq!(code, 0);

    let embedded = dir.path().join("queue.embedded.json");
    let (code, stdout, _) = run(&[
        "embed",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        embedded.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("8 states"));
    assert!(stdout.contains("cost = 4.4"), "{stdout}");

    let file = load_model_file(&embedded).unwrap();
    let emdp = file.to_embedded().unwrap();
    assert_eq!(emdp.base.n_states(), 8);
    assert!((emdp.omega_actions[3][0].cost - 4.4).abs() < 1e-8);

    let results = dir.path().join("results.ndjson");
    let (code, stdout, _) = run(&[
        "solve",
        "--model",
        embedded.to_str().unwrap(),
        "--method",
        "pi",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("gain"));
    let records = read_records(&results).unwrap();
    assert!(matches!(records[0], ResultRecord::Solve { .. }));
}

#[test]
fn eval_on_two_state_cycle_prints_matching_gains() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-written finite model: the deterministic 2-cycle with costs 0, 2.
    let spec = ModelSpec {
        name: "two-cycle".into(),
        kernel: KernelSpec::ExplicitTable {
            states: vec![
                TableStateSpec {
                    actions: vec![TableActionSpec {
                        transitions: vec![(1, 1.0)],
                        cost: 0.0,
                        aux: vec![],
                    }],
                },
                TableStateSpec {
                    actions: vec![TableActionSpec {
                        transitions: vec![(0, 1.0)],
                        cost: 2.0,
                        aux: vec![],
                    }],
                },
            ],
            exterior_policies: vec![],
        },
        cost: None,
        exterior_cost: None,
        aux_costs: vec![],
        interior: vec![0, 1],
        constraints: vec![],
    };
    let spec_path = dir.path().join("cycle.json");
    mdp_embed::formats::save_spec(&spec_path, &spec).unwrap();
    let embedded = dir.path().join("cycle.embedded.json");
    let (code, stdout, _) = run(&[
        "embed",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        embedded.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("ω unreachable"), "{stdout}");

    let results = dir.path().join("results.ndjson");
    let (code, stdout, _) = run(&[
        "eval",
        "--model",
        embedded.to_str().unwrap(),
        "--z",
        "0",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    let records = read_records(&results).unwrap();
    match &records[0] {
        ResultRecord::Eval {
            stationary_gain,
            cycle_ratio_gain,
            ..
        } => {
            assert!((stationary_gain - 1.0).abs() < 1e-12);
            assert!((cycle_ratio_gain - 1.0).abs() < 1e-12);
        }
        other => panic!("unexpected record {other:?}"),
    }
}

#[test]
fn simulate_honors_seed_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_queue_spec(dir.path());
    let policy = dir.path().join("policy.json");
    std::fs::write(&policy, r#"{"interior": [5, 5, 5, 5], "exterior_policy": 0}"#).unwrap();
    let out1 = dir.path().join("r1.ndjson");
    let out2 = dir.path().join("r2.ndjson");
    for out in [&out1, &out2] {
        let (code, stdout, stderr) = run(&[
            "simulate",
            "--spec",
            spec.to_str().unwrap(),
            "--policy",
            policy.to_str().unwrap(),
            "--cycles",
            "3000",
            "--seed",
            "77",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stdout {stdout} stderr {stderr}");
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
    match &read_records(&out1).unwrap()[0] {
        ResultRecord::Simulate { estimate, .. } => {
            assert_eq!(estimate.cycles, 3000);
            assert_eq!(estimate.seed, 77);
        }
        other => panic!("unexpected record {other:?}"),
    }
}

#[test]
fn csv_exports_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_queue_spec(dir.path());
    let embedded = dir.path().join("queue.embedded.json");
    run(&[
        "embed",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        embedded.to_str().unwrap(),
    ]);
    let csv = dir.path().join("eval.csv");
    let (code, _, _) = run(&[
        "eval",
        "--model",
        embedded.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("state,action,stationary_probability,bias\n"));
    assert_eq!(text.lines().count(), 9); // header + 8 states

    let policy = dir.path().join("policy.json");
    std::fs::write(&policy, r#"{"interior": [5, 5, 5, 5], "exterior_policy": 0}"#).unwrap();
    let sim_csv = dir.path().join("sim.csv");
    let (code, _, _) = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--cycles",
        "2000",
        "--seed",
        "5",
        "--csv",
        sim_csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&sim_csv).unwrap();
    assert!(text.starts_with("cycles,mean,half_width\n"));
    assert!(text.lines().count() > 3);
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Spec with an empty interior.
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name":"bad","kernel":{"family":"controlled-queue","arrival":0.3,"service_grid":[0.5],"exterior_service":0.6},"cost":"x","interior":[]}"#,
    )
    .unwrap();
    let (code, _, stderr) = run(&[
        "embed",
        "--spec",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("interior"), "{stderr}");

    // Missing file.
    let (code, _, _) = run(&[
        "solve",
        "--model",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    // Unknown demo.
    let (code, _, _) = run(&["demo", "nope"]);
    assert_eq!(code, 2);
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Unstable exterior: service 0.2 below arrival 0.3.
    let spec = ModelSpec {
        kernel: KernelSpec::ControlledQueue {
            arrival: 0.3,
            service_grid: vec![0.6],
            exterior_service: 0.2,
            capacity: None,
        },
        ..ModelSpec::queue_demo()
    };
    let path = dir.path().join("unstable.json");
    mdp_embed::formats::save_spec(&path, &spec).unwrap();
    let (code, _, stderr) = run(&[
        "embed",
        "--spec",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("not certain"), "{stderr}");

    // Infeasible constraint on the occupancy-aux queue.
    let mut aux_spec = ModelSpec::queue_demo();
    aux_spec.aux_costs = vec![mdp_embed::spec::AuxCostSpec {
        cost: "step(x - 4)".into(),
        exterior_cost: None,
    }];
    let aux_path = dir.path().join("aux.json");
    mdp_embed::formats::save_spec(&aux_path, &aux_spec).unwrap();
    let embedded = dir.path().join("aux.embedded.json");
    let (code, _, _) = run(&[
        "embed",
        "--spec",
        aux_path.to_str().unwrap(),
        "--out",
        embedded.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, _, stderr) = run(&[
        "solve",
        "--model",
        embedded.to_str().unwrap(),
        "--constraint",
        "1=0.0",
    ]);
    assert_eq!(code, 3);
    assert!(stderr.contains("infeasible"), "{stderr}");
}

#[test]
fn verify_passes_on_both_demos() {
    let dir = tempfile::tempdir().unwrap();
    for (name, spec) in [
        ("queue", ModelSpec::queue_demo()),
        ("reservoir", ModelSpec::reservoir_demo()),
    ] {
        let path = dir.path().join(format!("{name}.json"));
        mdp_embed::formats::save_spec(&path, &spec).unwrap();
        let out = dir.path().join(format!("{name}.ndjson"));
        let (code, stdout, stderr) = run(&[
            "verify",
            "--spec",
            path.to_str().unwrap(),
            "--cycles",
            "10000",
            "--seed",
            "13",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{name}: stdout {stdout} stderr {stderr}");
        assert!(stdout.contains("PASS"), "{stdout}");
        let records = read_records(&out).unwrap();
        assert!(records
            .iter()
            .any(|r| matches!(r, ResultRecord::Verify { pass: true, .. })));
    }
}

#[test]
fn shipped_demo_files_match_the_builders() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("models");
    let queue = mdp_embed::formats::load_spec(&root.join("queue.json")).unwrap();
    assert_eq!(queue, ModelSpec::queue_demo());
    let reservoir = mdp_embed::formats::load_spec(&root.join("reservoir.json")).unwrap();
    assert_eq!(reservoir, ModelSpec::reservoir_demo());
}

#[test]
fn closed_form_and_mc_backends_agree_with_solve() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_queue_spec(dir.path());
    let mut gains = Vec::new();
    for backend in ["solve", "closed-form", "mc"] {
        let embedded = dir.path().join(format!("queue.{backend}.json"));
        let (code, _, stderr) = run(&[
            "embed",
            "--spec",
            spec.to_str().unwrap(),
            "--backend",
            backend,
            "--cycles",
            "100000",
            "--seed",
            "21",
            "--out",
            embedded.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{backend}: {stderr}");
        let results = dir.path().join(format!("{backend}.ndjson"));
        let (code, _, _) = run(&[
            "solve",
            "--model",
            embedded.to_str().unwrap(),
            "--method",
            "pi",
            "--out",
            results.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        match &read_records(&results).unwrap()[0] {
            ResultRecord::Solve { gain, .. } => gains.push(*gain),
            other => panic!("unexpected record {other:?}"),
        }
    }
    assert!((gains[0] - gains[1]).abs() < 1e-8, "solve vs closed-form");
    assert!((gains[0] - gains[2]).abs() < 0.01, "solve vs mc");
}
