//! Report structures the CLI emits, plus provenance helpers.
//!
//! Reports are deterministic: they embed the fully resolved run
//! configuration and SHA-256 hashes of every input file, and never a
//! timestamp, so re-running a command with identical inputs produces
//! byte-identical output.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expert_id::{LayerExpertReport, NeuronScores};
use crate::interventions::EvalReport;
use crate::shift::ShiftDiagnostics;
use crate::tensor_store::write_atomic;

/// Hex SHA-256 of a file's contents, streamed.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

/// Serialize a report as pretty JSON with a trailing newline, atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One input file with its content hash.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of(path: &Path) -> Result<InputHash> {
        Ok(InputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(path)?,
        })
    }
}

/// Output of `decompose`: the head's spectrum and factor quality.
#[derive(Clone, Debug, Serialize)]
pub struct DecomposeReport {
    pub config: ResolvedConfig,
    pub checkpoint: InputHash,
    pub tensor: String,
    pub rows: usize,
    pub cols: usize,
    pub sigma: Vec<f64>,
    pub reconstruction_loss: f64,
    pub u_orthonormality_defect: f64,
    pub v_orthonormality_defect: f64,
}

/// Output of `shift`: the resolved plan plus edit diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftReport {
    pub config: ResolvedConfig,
    pub checkpoint: InputHash,
    pub dump: InputHash,
    pub tensor: String,
    pub variant: String,
    pub diagnostics: ShiftDiagnostics,
    pub sigma_before: Vec<f64>,
    pub sigma_after: Vec<f64>,
    /// True when the plan left the spectrum untouched and the output file
    /// is a byte copy of the input.
    pub identity: bool,
    pub warnings: Vec<String>,
    pub output: String,
}

/// Output of `scan-experts`: per-neuron scores, the layer-level verdict,
/// and the threshold survey.
#[derive(Clone, Debug, Serialize)]
pub struct ExpertScanReport {
    pub config: ResolvedConfig,
    pub dump: InputHash,
    pub samples: usize,
    pub neurons: usize,
    pub pooling: String,
    pub threshold: f64,
    pub ap: NeuronScores,
    pub auroc: NeuronScores,
    pub survey_thresholds: Vec<f64>,
    /// Percentage (0–100) of neurons exceeding each survey threshold.
    pub survey_expert_percent: Vec<f64>,
    pub layer: LayerExpertReport,
}

/// Output of `evaluate`: one or more scored rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateReport {
    #[serde(default)]
    pub config: ResolvedConfig,
    pub checkpoint: InputHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted: Option<InputHash>,
    pub prompts: usize,
    pub corpus_sequences: usize,
    pub gen_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
    pub rows: Vec<EvalReport>,
}

/// CSV table of per-neuron scores, one row per neuron.
pub fn neuron_csv(ap: &NeuronScores, auroc: &NeuronScores) -> String {
    let mut out = String::from("neuron,ap,auroc,expert_ap,expert_auroc\n");
    for i in 0..ap.values.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i, ap.values[i], auroc.values[i], ap.expert[i], auroc.expert[i]
        ));
    }
    out
}

/// CSV table of evaluation rows, mirroring the usual
/// toxicity/perplexity/TPH presentation. TPH is empty for exact no-ops.
pub fn eval_csv(rows: &[EvalReport]) -> String {
    let mut out =
        String::from("label,toxicity,perplexity,toxicity_drop,perplexity_increase,tph\n");
    for row in rows {
        let tph = row
            .tph
            .map(|t| format!("{t:.4}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{}\n",
            row.label, row.toxicity, row.perplexity, row.toxicity_drop,
            row.perplexity_increase, tph
        ));
    }
    out
}

/// The resolved configuration echoed into reports for provenance.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResolvedConfig(pub BTreeMap<String, String>);

impl ResolvedConfig {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_hex(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let empty = dir.path().join("empty");
        std::fs::write(&empty, b"").unwrap();
        assert_eq!(
            sha256_hex(&empty).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn json_reports_end_with_newline_and_rewrite_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let value = serde_json::json!({"b": 1, "a": [1, 2]});
        write_json(&path, &value).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(first.last(), Some(&b'\n'));
        write_json(&path, &value).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn eval_csv_leaves_tph_empty_for_no_ops() {
        let rows = vec![crate::interventions::EvalReport {
            label: "original".into(),
            base_toxicity: 0.5,
            toxicity: 0.5,
            base_perplexity: 2.0,
            perplexity: 2.0,
            toxicity_drop: 0.0,
            perplexity_increase: 0.0,
            tph: None,
            notes: vec![],
        }];
        let csv = eval_csv(&rows);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with(','), "{line}");
        assert!(csv.starts_with("label,toxicity"));
    }
}
