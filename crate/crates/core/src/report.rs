//! JSON documents written by the pipeline: the counterfactual report for a
//! quota-off / quota-on pair, the two-rule comparison, and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::counterfactual::{
    cesp_complier_estimate, cour_des_comptes_delta, decompose, respecting_improvements, type_share_shift,
    DecompositionRow, DecompositionTable, Destination, PairRun, TransitionCount,
};
use crate::error::{Error, Result};
use crate::population::{Population, Track};
use crate::quota::QuotaRule;
use crate::{SCHEMA_VERSION, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Threshold-based reconstruction of the complier count.
    pub cesp_estimate: usize,
    /// Compliers counted from the paired simulation.
    pub true_compliers: usize,
    /// Spearman correlation between admitted-minus-applicant scholarship
    /// share and quota rate, on the quota-on run.
    pub delta_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensiveMargin {
    pub gains: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monotonicity {
    pub checked: usize,
    pub rank_violations: usize,
    pub extensive_losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualReport {
    pub schema_version: u32,
    pub rule: QuotaRule,
    pub track: String,
    pub n_scholarship: usize,
    pub compliers: usize,
    pub compliance: f64,
    pub ate: Option<f64>,
    pub itt: f64,
    pub intra_type: f64,
    pub inter_type: f64,
    pub transitions: Vec<TransitionCount>,
    pub decomposition: Vec<DecompositionRow>,
    /// Percentage-point change in scholarship holders' type shares.
    pub type_shifts: BTreeMap<Destination, f64>,
    pub extensive_margin: ExtensiveMargin,
    /// Non-scholarship applicants whose assignment changed.
    pub displaced_non_scholarship: usize,
    pub monotonicity: Monotonicity,
    pub diagnostics: Diagnostics,
}

impl CounterfactualReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn track_label(track: Option<Track>) -> String {
    track.map_or_else(|| "all".to_string(), |t| t.to_string())
}

/// Assemble the report for one pair, optionally restricted to one track.
pub fn analyze(
    pop: &Population,
    pair: &PairRun,
    track: Option<Track>,
) -> Result<(CounterfactualReport, DecompositionTable)> {
    let in_track = |t: Track| track.is_none_or(|want| want == t);
    let records: Vec<_> = pair.compliers.iter().filter(|r| in_track(r.track)).cloned().collect();
    let n_scholarship = pop.applicants.iter().filter(|a| a.scholarship && in_track(a.track)).count();
    let table = decompose(&records, &pair.prestige, n_scholarship)?;

    let scoped = Population {
        applicants: pop.applicants.iter().filter(|a| in_track(a.track)).cloned().collect(),
        programs: Vec::new(),
    };
    let mono = respecting_improvements(&scoped, &pair.off, &pair.on);
    let deltas = cour_des_comptes_delta(pop, &pair.on, &pair.lists_on.rates);

    let report = CounterfactualReport {
        schema_version: SCHEMA_VERSION,
        rule: pair.rule,
        track: track_label(track),
        n_scholarship,
        compliers: table.n_compliers,
        compliance: table.compliance,
        ate: table.ate,
        itt: table.itt,
        intra_type: table.intra_type,
        inter_type: table.inter_type,
        transitions: table.transitions.clone(),
        decomposition: table.rows.clone(),
        type_shifts: type_share_shift(pop, &pair.off, &pair.on, true, track),
        extensive_margin: ExtensiveMargin { gains: table.extensive_gains, losses: table.extensive_losses },
        displaced_non_scholarship: pair.displaced.iter().filter(|r| in_track(r.track)).count(),
        monotonicity: Monotonicity {
            checked: mono.checked,
            rank_violations: mono.rank_violations.len(),
            extensive_losses: mono.extensive_losses.len(),
        },
        diagnostics: Diagnostics {
            cesp_estimate: cesp_complier_estimate(pop, &pair.on, &pair.lists_off, &pair.lists_on, track),
            true_compliers: table.n_compliers,
            delta_correlation: deltas.correlation,
        },
    };
    Ok((report, table))
}

/// Two quota rules run against the same population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rule_a: QuotaRule,
    pub rule_b: QuotaRule,
    pub complier_a: usize,
    pub complier_b: usize,
    /// `(complier_a - complier_b) / complier_a`.
    pub reduction: Option<f64>,
    pub report_a: CounterfactualReport,
    pub report_b: CounterfactualReport,
}

impl ComparisonReport {
    pub fn new(report_a: CounterfactualReport, report_b: CounterfactualReport) -> Self {
        let (a, b) = (report_a.compliers, report_b.compliers);
        ComparisonReport {
            schema_version: SCHEMA_VERSION,
            rule_a: report_a.rule,
            rule_b: report_b.rule,
            complier_a: a,
            complier_b: b,
            reduction: (a > 0).then(|| (a as f64 - b as f64) / a as f64),
            report_a,
            report_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; honours `SOURCE_DATE_EPOCH`.
    pub started_at: u64,
    pub finished_at: u64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now_epoch() -> u64 {
    if let Some(fixed) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return fixed;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: Option<u64>, started_at: u64) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash,
            seed,
            started_at,
            finished_at: started_at,
            outputs: Vec::new(),
        }
    }

    /// Record the listed files of `dir` and write `manifest.json` there.
    pub fn finish(mut self, dir: &Path, files: &[&str]) -> Result<()> {
        for name in files {
            let path = dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            self.outputs.push(OutputFile {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        self.finished_at = now_epoch();
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n").map_err(|e| Error::io(&path, e))
    }
}
