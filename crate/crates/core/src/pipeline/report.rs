//! Deterministic artifact writers: CSV tables, optimizer traces, result
//! JSON, and the provenance hash. Output bytes are a pure function of the
//! data; nothing time- or machine-dependent goes into a table.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{EvalReport, IdentResult};
use crate::cmaes::TraceRow;
use crate::error::{Error, Result};

/// Shortest round-trip decimal rendering; stable across runs and platforms.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub fn config_sha256<T: Serialize>(value: &T) -> Result<String> {
    let body = serde_json::to_string(value)
        .map_err(|e| Error::runtime(format!("serializing config for hashing: {e}")))?;
    let digest = Sha256::digest(body.as_bytes());
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::runtime(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let ctx = |e| Error::io(path.display().to_string(), e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(ctx)?);
    writeln!(f, "{}", header.join(",")).map_err(ctx)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writeln!(f, "{}", row.join(",")).map_err(ctx)?;
    }
    f.flush().map_err(ctx)
}

pub fn trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            vec![
                r.generation.to_string(),
                fmt_f(r.best_cost),
                fmt_f(r.mean_cost),
                fmt_f(r.sigma),
            ]
        })
        .collect();
    write_csv(path, &["generation", "best_cost", "mean_cost", "sigma"], &rows)
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// Recovered-value table plus its relative-error companion, for results that
/// carry ground truth. The first data row echoes the true values.
fn parameter_recovery_tables(results: &[&IdentResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let with_truth: Vec<&&IdentResult> =
        results.iter().filter(|r| r.true_values.is_some()).collect();
    let Some(first) = with_truth.first() else {
        return Ok(Vec::new());
    };
    let names = &first.param_names;
    if with_truth.iter().any(|r| &r.param_names != names) {
        return Err(Error::invalid(
            "parameter-recovery results disagree on parameter names",
        ));
    }

    let mut header: Vec<&str> = vec!["cost"];
    header.extend(names.iter().map(String::as_str));

    let mut rows = Vec::new();
    let truth = first.true_values.as_ref().unwrap();
    let mut true_row = vec!["true_values".to_string()];
    true_row.extend(truth.iter().map(|v| fmt_f(*v)));
    rows.push(true_row);
    for r in &with_truth {
        let mut row = vec![r.cost_kind.to_string()];
        row.extend(r.theta_hat.iter().map(|v| fmt_f(*v)));
        rows.push(row);
    }
    let recovery = dir.join("parameter_recovery.csv");
    write_csv(&recovery, &header, &rows)?;

    let mut err_header: Vec<&str> = vec!["cost"];
    err_header.extend(names.iter().map(String::as_str));
    err_header.push("mean_rel_error");
    let err_rows: Vec<Vec<String>> = with_truth
        .iter()
        .map(|r| {
            let mut row = vec![r.cost_kind.to_string()];
            row.extend(r.rel_errors.as_ref().unwrap().iter().map(|v| fmt_f(*v)));
            row.push(fmt_f(r.mean_rel_error.unwrap()));
            row
        })
        .collect();
    let errors = dir.join("parameter_recovery_rel_errors.csv");
    write_csv(&errors, &err_header, &err_rows)?;
    Ok(vec![recovery, errors])
}

/// Noise-robustness sweep: one row per (noise level, cost function) with
/// per-parameter percentage errors. Rows are sorted by level then cost.
fn noise_sweep_table(results: &[&IdentResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut swept: Vec<&&IdentResult> = results
        .iter()
        .filter(|r| r.rel_errors.is_some() && r.sigma_frac_of_limit > 0.0)
        .collect();
    if swept.is_empty() {
        return Ok(Vec::new());
    }
    swept.sort_by(|a, b| {
        a.sigma_frac_of_limit
            .total_cmp(&b.sigma_frac_of_limit)
            .then_with(|| a.cost_kind.to_string().cmp(&b.cost_kind.to_string()))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    let names = &swept[0].param_names;
    let mut header: Vec<&str> = vec!["sigma_frac", "cost", "seed"];
    header.extend(names.iter().map(String::as_str));
    header.push("mean_pct_error");
    let rows: Vec<Vec<String>> = swept
        .iter()
        .map(|r| {
            let mut row = vec![
                fmt_f(r.sigma_frac_of_limit),
                r.cost_kind.to_string(),
                r.seed.to_string(),
            ];
            row.extend(
                r.rel_errors
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|v| fmt_f(100.0 * v)),
            );
            row.push(fmt_f(100.0 * r.mean_rel_error.unwrap()));
            row
        })
        .collect();
    let path = dir.join("noise_sweep.csv");
    write_csv(&path, &header, &rows)?;
    Ok(vec![path])
}

/// Gap costs before and after identification, for every result.
fn gap_cost_table(results: &[&IdentResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.cost_kind.to_string(),
                r.spec.kind.slug().to_string(),
                r.seed.to_string(),
                fmt_f(r.baseline_cost),
                fmt_f(r.final_cost),
                fmt_f(r.final_cost / r.baseline_cost),
            ]
        })
        .collect();
    let path = dir.join("gap_costs.csv");
    write_csv(
        &path,
        &[
            "scenario",
            "cost",
            "mod",
            "seed",
            "baseline_cost",
            "identified_cost",
            "remaining_fraction",
        ],
        &rows,
    )?;
    Ok(vec![path])
}

fn finetune_eval_table(evals: &[&EvalReport], dir: &Path) -> Result<Vec<PathBuf>> {
    if evals.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<&&EvalReport> = evals.iter().collect();
    sorted.sort_by(|a, b| a.label.cmp(&b.label));
    let rows: Vec<Vec<String>> = sorted
        .iter()
        .map(|e| {
            vec![
                e.label.clone(),
                e.n_trials.to_string(),
                fmt_f(e.mean_tracking_err),
                fmt_f(e.ci95_tracking_err),
                fmt_f(e.mean_return),
                fmt_f(e.ci95_return),
                fmt_f(e.failure_rate),
                fmt_f(e.ci95_failure_rate),
                e.degenerate_ci.to_string(),
            ]
        })
        .collect();
    let path = dir.join("finetune_evaluation.csv");
    write_csv(
        &path,
        &[
            "policy",
            "n_trials",
            "mean_tracking_err",
            "ci95_tracking_err",
            "mean_return",
            "ci95_return",
            "failure_rate",
            "ci95_failure_rate",
            "degenerate_ci",
        ],
        &rows,
    )?;
    Ok(vec![path])
}

/// Renders every table that has data into `<out_dir>/report/tables` and
/// returns the written paths.
pub fn write_report(
    idents: &[IdentResult],
    evals: &[EvalReport],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let tables = out_dir.join("report").join("tables");
    let ident_refs: Vec<&IdentResult> = idents.iter().collect();
    let eval_refs: Vec<&EvalReport> = evals.iter().collect();
    let mut written = Vec::new();
    written.extend(parameter_recovery_tables(&ident_refs, &tables)?);
    written.extend(noise_sweep_table(&ident_refs, &tables)?);
    written.extend(gap_cost_table(&ident_refs, &tables)?);
    written.extend(finetune_eval_table(&eval_refs, &tables)?);
    Ok(written)
}
