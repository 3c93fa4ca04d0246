//! On-disk formats: model files, policies, and result records.
//!
//! Three file kinds, all JSON-based:
//!
//! * **Spec files** — a [`crate::spec::ModelSpec`] serialized as pretty JSON.
//! * **Model files** — an explicit finite MDP ([`ModelFile`]), either plain
//!   (`"kind": "finite"`) or an embedded model (`"kind": "embedded"`) whose
//!   `embedding` annex records the interior map, every ω-action with its
//!   `λ`, entrance law, costs and provenance, and the ω-unreachable flag.
//!   On load the ω kernel rows are rebuilt from the annex and must agree
//!   with the serialized rows.
//! * **Results files** — append-only newline-delimited [`ResultRecord`]s.
//!   Records carry no timestamps, so identical inputs and seeds produce
//!   byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddedMdp, EmbeddingError, OmegaAction};
use crate::mdp::{ActionId, FiniteMdp, ModelError, StateId};
use crate::sim::SimEstimate;
use crate::spec::ModelSpec;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("model file is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn io_err(path: &Path, source: std::io::Error) -> FileError {
    FileError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path, source: serde_json::Error) -> FileError {
    FileError::Json {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Finite,
    Embedded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionEntry {
    pub label: String,
    pub transitions: Vec<(u64, f64)>,
    pub cost: f64,
    #[serde(default)]
    pub aux: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateEntry {
    pub actions: Vec<ActionEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingAnnex {
    /// Source states mirrored by the first `n` model states.
    pub interior: Vec<u64>,
    pub omega_actions: Vec<Vec<OmegaAction>>,
    pub omega_unreachable: bool,
}

/// Explicit finite model, optionally with its embedding annex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub name: String,
    pub aux_len: usize,
    pub states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingAnnex>,
}

impl ModelFile {
    pub fn from_finite(mdp: &FiniteMdp, name: &str) -> Self {
        Self {
            kind: ModelKind::Finite,
            name: name.to_string(),
            aux_len: mdp.aux_len(),
            states: dump_states(mdp),
            embedding: None,
        }
    }

    pub fn from_embedded(emdp: &EmbeddedMdp, name: &str) -> Self {
        Self {
            kind: ModelKind::Embedded,
            name: name.to_string(),
            aux_len: emdp.base.aux_len(),
            states: dump_states(&emdp.base),
            embedding: Some(EmbeddingAnnex {
                interior: emdp.interior.iter().map(|s| s.0).collect(),
                omega_actions: emdp.omega_actions.clone(),
                omega_unreachable: emdp.omega_unreachable(),
            }),
        }
    }

    pub fn to_finite(&self) -> Result<FiniteMdp, FileError> {
        let mut kernel = Vec::with_capacity(self.states.len());
        let mut cost = Vec::with_capacity(self.states.len());
        let mut aux = Vec::with_capacity(self.states.len());
        let mut labels = Vec::with_capacity(self.states.len());
        for state in &self.states {
            let mut dists = Vec::with_capacity(state.actions.len());
            let mut costs = Vec::with_capacity(state.actions.len());
            let mut auxs = Vec::with_capacity(state.actions.len());
            let mut labs = Vec::with_capacity(state.actions.len());
            for action in &state.actions {
                dists.push(crate::mdp::Distribution::new(
                    action
                        .transitions
                        .iter()
                        .map(|&(t, p)| (StateId(t), p))
                        .collect(),
                )?);
                costs.push(action.cost);
                auxs.push(action.aux.clone());
                labs.push(action.label.clone());
            }
            kernel.push(dists);
            cost.push(costs);
            aux.push(auxs);
            labels.push(labs);
        }
        Ok(FiniteMdp::with_labels(kernel, cost, aux, labels)?)
    }

    /// Rebuild the embedded model; the ω rows recomputed from the annex must
    /// match the serialized rows.
    pub fn to_embedded(&self) -> Result<EmbeddedMdp, FileError> {
        let annex = self
            .embedding
            .as_ref()
            .ok_or_else(|| FileError::Inconsistent("missing embedding annex".into()))?;
        let base = self.to_finite()?;
        let n = annex.interior.len();
        if base.n_states() != 2 * n {
            return Err(FileError::Inconsistent(format!(
                "{} states for an interior of {n}",
                base.n_states()
            )));
        }
        if annex.omega_actions.len() != n {
            return Err(FileError::Inconsistent(
                "one ω-action list per interior state required".into(),
            ));
        }
        let emdp = EmbeddedMdp {
            base,
            interior: annex.interior.iter().map(|&s| StateId(s)).collect(),
            omega_actions: annex.omega_actions.clone(),
        };
        let rebuilt = emdp.replace_omega_actions(annex.omega_actions.clone())?;
        for i in 0..n {
            let w = emdp.omega_index(i);
            if emdp.base.action_count(w) != rebuilt.base.action_count(w) {
                return Err(FileError::Inconsistent(format!(
                    "ω state {i}: action count differs from annex"
                )));
            }
            for a in 0..emdp.base.action_count(w) {
                let stored = emdp.base.transition(w, ActionId(a));
                let derived = rebuilt.base.transition(w, ActionId(a));
                for s in 0..emdp.base.n_states() {
                    let sid = StateId(s as u64);
                    if (stored.prob(sid) - derived.prob(sid)).abs() > 1e-12 {
                        return Err(FileError::Inconsistent(format!(
                            "ω state {i} action {a}: kernel row disagrees with annex"
                        )));
                    }
                }
                if (emdp.base.cost(w, ActionId(a)) - annex.omega_actions[i][a].cost).abs() > 1e-12
                {
                    return Err(FileError::Inconsistent(format!(
                        "ω state {i} action {a}: cost disagrees with annex"
                    )));
                }
            }
        }
        Ok(emdp)
    }
}

fn dump_states(mdp: &FiniteMdp) -> Vec<StateEntry> {
    (0..mdp.n_states())
        .map(|s| StateEntry {
            actions: (0..mdp.action_count(s))
                .map(|a| {
                    let action = ActionId(a);
                    ActionEntry {
                        label: mdp.action_label(s, action).to_string(),
                        transitions: mdp
                            .transition(s, action)
                            .support()
                            .iter()
                            .map(|&(t, p)| (t.0, p))
                            .collect(),
                        cost: mdp.cost(s, action),
                        aux: mdp.aux_cost(s, action).to_vec(),
                    }
                })
                .collect(),
        })
        .collect()
}

/// One line of a results file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum ResultRecord {
    Embed {
        model: String,
        backend: String,
        states: usize,
        interior: Vec<u64>,
        omega_unreachable: bool,
        /// (boundary, interior action, exterior policy, λ, ω cost) per summary.
        channels: Vec<(u64, usize, usize, f64, f64)>,
    },
    Solve {
        model: String,
        method: String,
        gain: f64,
        residual: f64,
        iterations: u64,
        policy: Vec<usize>,
        bias: Vec<f64>,
    },
    Constrained {
        model: String,
        gain: f64,
        aux_values: Vec<f64>,
        bounds: Vec<f64>,
        /// Action probabilities per state.
        policy: Vec<Vec<f64>>,
    },
    Eval {
        model: String,
        reference: u64,
        stationary_gain: f64,
        cycle_ratio_gain: f64,
        policy: Vec<usize>,
    },
    Simulate {
        model: String,
        z: u64,
        estimate: SimEstimate,
    },
    EntranceFit {
        boundary: u64,
        excursions: u64,
        chi_square: f64,
        dof: usize,
        critical_95: f64,
        empirical: Vec<f64>,
        expected: Vec<f64>,
        mean_cost: f64,
        expected_cost: f64,
        mean_length: f64,
        expected_length: f64,
    },
    Verify {
        model: String,
        backend: String,
        seed: u64,
        cycles: u64,
        embedded_gain: f64,
        simulated: SimEstimate,
        within_ci: bool,
        lift_warnings: Vec<String>,
        pass: bool,
    },
}

/// Append records to a results file, one JSON object per line.
pub fn append_records(path: &Path, records: &[ResultRecord]) -> Result<(), FileError> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| json_err(path, e))?;
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| json_err(path, e)))
        .collect()
}

pub fn save_spec(path: &Path, spec: &ModelSpec) -> Result<(), FileError> {
    let text = serde_json::to_string_pretty(spec).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn load_spec(path: &Path) -> Result<ModelSpec, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

pub fn save_model_file(path: &Path, model: &ModelFile) -> Result<(), FileError> {
    let text = serde_json::to_string_pretty(model).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn load_model_file(path: &Path) -> Result<ModelFile, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// Policy file for finite models: `{"choice": [action indices]}`.
pub fn load_finite_policy(path: &Path) -> Result<crate::mdp::StationaryPolicy, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// Policy file for countable models:
/// `{"interior": [action indices], "exterior_policy": k}`.
pub fn load_source_policy(path: &Path) -> Result<crate::mdp::SourcePolicy, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::build_embedding;
    use crate::excursion::{analyze_all_excursions, TruncationControl};
    use crate::models::QueueModel;

    #[test]
    fn embedded_model_file_round_trips() {
        let q = QueueModel::demo();
        let summaries = analyze_all_excursions(&q, &TruncationControl::default()).unwrap();
        let emdp = build_embedding(&q, &summaries).unwrap();
        let file = ModelFile::from_embedded(&emdp, "queue");
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        let rebuilt = back.to_embedded().unwrap();
        assert_eq!(rebuilt.base.n_states(), 8);
        assert_eq!(rebuilt.omega_actions, emdp.omega_actions);
        for s in 0..8 {
            for a in 0..emdp.base.action_count(s) {
                assert_eq!(
                    emdp.base.transition(s, ActionId(a)).support(),
                    rebuilt.base.transition(s, ActionId(a)).support()
                );
            }
        }
    }

    #[test]
    fn tampered_annex_is_rejected() {
        let q = QueueModel::demo();
        let summaries = analyze_all_excursions(&q, &TruncationControl::default()).unwrap();
        let emdp = build_embedding(&q, &summaries).unwrap();
        let mut file = ModelFile::from_embedded(&emdp, "queue");
        file.embedding.as_mut().unwrap().omega_actions[3][0].lambda = 0.99;
        assert!(matches!(
            file.to_embedded(),
            Err(FileError::Inconsistent(_))
        ));
    }

    #[test]
    fn records_round_trip_by_line() {
        let dir = std::env::temp_dir().join(format!("mdp_embed_fmt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("results.ndjson");
        let _ = std::fs::remove_file(&path);
        let records = vec![
            ResultRecord::Solve {
                model: "m".into(),
                method: "pi".into(),
                gain: 1.25,
                residual: 1e-12,
                iterations: 3,
                policy: vec![0, 1],
                bias: vec![0.0, 0.5],
            },
            ResultRecord::Simulate {
                model: "m".into(),
                z: 0,
                estimate: SimEstimate {
                    mean: 1.24,
                    half_width: 0.01,
                    cycles: 100,
                    steps: 500,
                    seed: 7,
                },
            },
        ];
        append_records(&path, &records).unwrap();
        append_records(&path, &records[..1]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 3);
        std::fs::remove_file(&path).unwrap();
    }
}
