//! Comparison tables and plot-ready sweep CSVs from a directory of runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memeguard::trainer::{EvalReport, SweepRow};

const SWEEP_HEADER: &str =
    "seed,alpha,beta,gamma,accuracy,precision,recall,f1,macro_f1,patience_warnings";

struct TableRow {
    run: String,
    report: EvalReport,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    Ok(paths)
}

fn read_eval(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn collect_table(run_dir: &Path) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    let own = run_dir.join("eval.json");
    if own.is_file() {
        let run = run_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| ".".into());
        rows.push(TableRow {
            run,
            report: read_eval(&own)?,
        });
    }
    for path in sorted_entries(run_dir)? {
        let eval = path.join("eval.json");
        if path.is_dir() && eval.is_file() {
            rows.push(TableRow {
                run: path
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                report: read_eval(&eval)?,
            });
        }
    }
    Ok(rows)
}

fn is_sweep_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv")
        && fs::read_to_string(path)
            .map(|t| t.lines().next() == Some(SWEEP_HEADER))
            .unwrap_or(false)
}

fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Sweep rows split into the gamma axis and the alpha/beta axis. A file
/// belongs to the alpha/beta axis when gamma is fixed at 0.6 and alpha varies.
fn collect_sweeps(run_dir: &Path) -> Result<(Vec<SweepRow>, Vec<SweepRow>)> {
    let mut files = Vec::new();
    for path in sorted_entries(run_dir)? {
        if path.is_dir() {
            files.extend(
                sorted_entries(&path)?
                    .into_iter()
                    .filter(|p| is_sweep_csv(p)),
            );
        } else if is_sweep_csv(&path) {
            files.push(path);
        }
    }
    let (mut gamma, mut alpha_beta) = (Vec::new(), Vec::new());
    for file in files {
        let rows = read_sweep(&file)?;
        let fixed_gamma = rows.iter().all(|r| (r.gamma - 0.6).abs() < 1e-9);
        let varied_alpha = rows.iter().any(|r| (r.alpha - rows[0].alpha).abs() > 1e-9);
        if fixed_gamma && varied_alpha {
            alpha_beta.extend(rows);
        } else {
            gamma.extend(rows);
        }
    }
    gamma.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.seed.cmp(&b.seed)));
    alpha_beta.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.seed.cmp(&b.seed)));
    Ok((gamma, alpha_beta))
}

fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("run,accuracy,precision,recall,f1,macro_f1\n");
    for r in rows {
        let c = &r.report.classification;
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.run, c.accuracy, c.precision, c.recall, c.f1, c.macro_f1
        );
    }
    s
}

fn table_md(rows: &[TableRow]) -> String {
    let mut s = String::from(
        "| Run | Accuracy | Precision | Recall | F1 | Macro-F1 |\n|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let c = &r.report.classification;
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.run, c.accuracy, c.precision, c.recall, c.f1, c.macro_f1
        );
    }
    s
}

fn metric_cols(r: &SweepRow) -> String {
    format!(
        "{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
        r.seed, r.accuracy, r.precision, r.recall, r.f1, r.macro_f1, r.patience_warnings
    )
}

const METRIC_HEADER: &str = "seed,accuracy,precision,recall,f1,macro_f1,patience_warnings";

fn gamma_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("gamma,alpha,beta,{METRIC_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.4},{:.4},{:.4},{}",
            r.gamma,
            r.alpha,
            r.beta,
            metric_cols(r)
        );
    }
    s
}

fn alpha_beta_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("alpha,beta,gamma,{METRIC_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.4},{:.4},{:.4},{}",
            r.alpha,
            r.beta,
            r.gamma,
            metric_cols(r)
        );
    }
    s
}

/// Writes `table.csv` and `table.md` (one row per run directory holding an
/// `eval.json`), plus `gamma_sweep.csv` and `alpha_beta_sweep.csv` when sweep
/// CSVs are present. Returns the written paths.
pub fn emit_report(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        bail!("run directory {} does not exist", run_dir.display());
    }
    let table = collect_table(run_dir)?;
    let (gamma, alpha_beta) = collect_sweeps(run_dir)?;
    if table.is_empty() && gamma.is_empty() && alpha_beta.is_empty() {
        bail!(
            "no eval.json reports or sweep CSVs found under {}",
            run_dir.display()
        );
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut outputs = Vec::new();
    if !table.is_empty() {
        outputs.push(("table.csv", table_csv(&table)));
        outputs.push(("table.md", table_md(&table)));
    }
    if !gamma.is_empty() {
        outputs.push(("gamma_sweep.csv", gamma_csv(&gamma)));
    }
    if !alpha_beta.is_empty() {
        outputs.push(("alpha_beta_sweep.csv", alpha_beta_csv(&alpha_beta)));
    }
    let mut written = Vec::new();
    for (name, text) in outputs {
        let path = out_dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
