//! Artifact emission: traces.csv, summary.csv, envelope.csv, and a
//! manifest.json carrying content hashes for byte-level reproducibility.

use crate::error::Result;
use crate::linalg::fmt_real;
use crate::sa::{Envelope, SARun};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Writes traces.csv with columns k,trial,p_error,coord_sup (one row per
/// retained trial and step). Returns the written path.
pub fn write_traces(dir: &Path, run: &SARun) -> Result<PathBuf> {
    let mut out = String::from("k,trial,p_error,coord_sup\n");
    for (trial, tr) in run.traces.iter().enumerate() {
        for (k, (&e, &c)) in tr.p_errors.iter().zip(tr.coord_sup.iter()).enumerate() {
            out.push_str(&format!("{k},{trial},{},{}\n", fmt_real(e), fmt_real(c)));
        }
    }
    let path = dir.join("traces.csv");
    fs::write(&path, out)?;
    Ok(path)
}

/// Writes summary.csv with columns k,mean_sq_error,ci_low,ci_high where the
/// interval is mean +/- 1.96 standard errors (floored at 0).
pub fn write_summary(dir: &Path, run: &SARun) -> Result<PathBuf> {
    let mut out = String::from("k,mean_sq_error,ci_low,ci_high\n");
    for k in 0..run.mean_sq.len() {
        let m = run.mean_sq[k];
        let se = run.se_sq[k];
        let (lo, hi) = if se.is_finite() {
            ((m - 1.96 * se).max(0.0), m + 1.96 * se)
        } else {
            (m, m)
        };
        out.push_str(&format!(
            "{k},{},{},{}\n",
            fmt_real(m),
            fmt_real(lo),
            fmt_real(hi)
        ));
    }
    let path = dir.join("summary.csv");
    fs::write(&path, out)?;
    Ok(path)
}

/// Writes envelope.csv with columns k,bound_exact,bound_closed_form.
pub fn write_envelope(dir: &Path, env: &Envelope) -> Result<PathBuf> {
    let mut out = String::from("k,bound_exact,bound_closed_form\n");
    for k in 0..env.exact.len() {
        out.push_str(&format!(
            "{k},{},{}\n",
            fmt_real(env.exact[k]),
            fmt_real(env.closed[k])
        ));
    }
    let path = dir.join("envelope.csv");
    fs::write(&path, out)?;
    Ok(path)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Writes manifest.json listing the config, seed, code version, and a
/// sha256 content hash for every emitted artifact.
pub fn write_manifest(
    dir: &Path,
    config: &serde_json::Value,
    seed: u64,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut entries = Vec::new();
    for f in files {
        let bytes = fs::read(f)?;
        entries.push(json!({
            "file": f.file_name().and_then(|n| n.to_str()).unwrap_or_default(),
            "sha256": sha256_hex(&bytes),
            "bytes": bytes.len(),
        }));
    }
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
        "outputs": entries,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
