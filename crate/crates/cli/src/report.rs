//! CSV tables, JSON documents and run manifests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use seqnet::analytics::{self, RefinedConstants};
use seqnet::config::DetectorKind;
use seqnet::montecarlo::{fmt_f64, Experiment, SummaryRow, SummaryTable, CSV_COLUMNS, CSV_EXTRA_COLUMNS};
use seqnet::{Hypothesis, Scalar};

pub const ANALYTIC_COLUMNS: [&str; 6] = ["exp_neg_b", "exp_neg_kb", "et_center", "sd_delay_gap", "sahu_alpha", "refined_error"];

/// Closed-form references for one summary row; `None` where a quantity
/// does not apply to the row's detector or hypothesis.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AnalyticRow {
    pub exp_neg_b: f64,
    pub exp_neg_kb: f64,
    pub et_center: Option<f64>,
    pub sd_delay_gap: Option<f64>,
    pub sahu_alpha: Option<f64>,
    pub refined_error: Option<f64>,
}

impl AnalyticRow {
    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            fmt_f64(self.exp_neg_b),
            fmt_f64(self.exp_neg_kb),
            opt(self.et_center),
            opt(self.sd_delay_gap),
            opt(self.sahu_alpha),
            opt(self.refined_error),
        ]
    }
}

/// Refined constants for one consensus round count.
pub struct ConsensusRefs {
    pub rounds: u32,
    pub constants: RefinedConstants,
}

pub fn analytic_row(exp: &Experiment, row: &SummaryRow, refs: &[ConsensusRefs]) -> AnalyticRow {
    let k = exp.n_sensors();
    let kf = k as f64;
    let hyp = if row.hyp == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
    // the boundary that a correct decision crosses under this hypothesis
    let boundary = match hyp {
        Hypothesis::H1 => row.b,
        Hypothesis::H0 => row.a,
    };
    let total = exp.models.kld_sum(hyp).as_f64();
    let kind = exp.detectors.iter().find(|d| d.detector.label() == row.detector).map(|d| d.detector);
    let et_center = match kind {
        Some(DetectorKind::Local) => {
            let hood = exp.topology.closed_neighborhood(row.sensor);
            Some(boundary / exp.models.kld_sum_over(&hood, hyp).as_f64())
        }
        Some(DetectorKind::Ca) => Some(kf * boundary / total),
        Some(_) => Some(boundary / total),
        None => None,
    }
    .filter(|v| v.is_finite());
    let sd_delay_gap = match kind {
        Some(DetectorKind::Sd | DetectorKind::SdExplicit) => {
            analytics::sd_delay_constant(&exp.topology.delay_matrix(), &exp.models, row.sensor, hyp).ok()
        }
        _ => None,
    };
    let (mut sahu_alpha, mut refined_error) = (None, None);
    if let (Some(DetectorKind::Ca), Some(q), Some(w)) = (kind, row.q, exp.weights.as_ref()) {
        if hyp == Hypothesis::H0 {
            let sigma = w.sigma2().powi(q as i32);
            sahu_alpha = analytics::homogeneous_kld(&exp.models, Hypothesis::H1)
                .and_then(|d| analytics::sahu_alpha_bound(k, sigma, row.b, d))
                .ok();
        }
        if let Some(c) = refs.iter().find(|r| r.rounds == q && r.constants.sensor == row.sensor) {
            refined_error = Some(match hyp {
                Hypothesis::H0 => c.constants.c_alpha * (-kf * row.b).exp(),
                Hypothesis::H1 => c.constants.c_beta * (-kf * row.a).exp(),
            });
        }
    }
    AnalyticRow {
        exp_neg_b: (-row.b).exp(),
        exp_neg_kb: (-kf * row.b).exp(),
        et_center,
        sd_delay_gap,
        sahu_alpha,
        refined_error,
    }
}

/// Writes the summary table; analytic columns are appended when given.
pub fn write_csv<W: Write>(out: W, table: &SummaryTable, analytic: Option<&[AnalyticRow]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_COLUMNS.iter().chain(&CSV_EXTRA_COLUMNS).copied().collect();
    if analytic.is_some() {
        header.extend(ANALYTIC_COLUMNS);
    }
    w.write_record(&header)?;
    for (i, row) in table.rows.iter().enumerate() {
        let mut fields = row.csv_fields();
        if let Some(a) = analytic {
            fields.extend(a[i].fields());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(table: &SummaryTable, analytic: Option<&[AnalyticRow]>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, table, analytic)?;
    Ok(buf)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

/// `path` with its extension replaced, e.g. `run.csv` → `run.manifest.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub trials: u64,
    pub workers: Option<usize>,
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn digest(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(digest("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("/tmp/run.csv"), ".manifest.json"), PathBuf::from("/tmp/run.manifest.json"));
        assert_eq!(sibling(Path::new("out"), ".json"), PathBuf::from("out.json"));
    }
}
