//! Campaign-level tables: trend tests and orthogonal-pair counts per cell.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ringsens_core::stats::{Decision, PairKind};

use crate::error::Result;
use crate::io::write_with;
use crate::stages::TestReport;

pub const TREND_FILE: &str = "trend.csv";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const SUMMARY_FILE: &str = "summary.md";

/// Everything the report needs from one (transfer, objective) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: String,
    pub controllers: usize,
    pub orthogonal_pairs: usize,
    pub tests: TestReport,
}

pub fn report_files(dir: &Path) -> Vec<PathBuf> {
    [TREND_FILE, PAIRS_FILE, SUMMARY_FILE].iter().map(|f| dir.join(f)).collect()
}

fn kind_name(kind: PairKind) -> &'static str {
    match kind {
        PairKind::SaVsSk => "sa_vs_sk",
        PairKind::LogSaVsLogError => "log_sa_vs_log_error",
        PairKind::LogSkVsLogError => "log_sk_vs_log_error",
    }
}

fn decision(d: Decision) -> &'static str {
    match d {
        Decision::RejectH0 => "reject",
        Decision::AcceptH0 => "accept",
    }
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Writes `trend.csv`, `pairs.csv` and `summary.md` into `dir`.
pub fn write_report(cells: &[CellResult], failed: &[String], dir: &Path) -> Result<()> {
    write_with(&dir.join(TREND_FILE), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "cell",
            "test",
            "n",
            "tau",
            "z_tau",
            "p_tau",
            "decision_tau",
            "r",
            "t_r",
            "p_r",
            "decision_r",
            "alpha",
            "excluded_zero_error",
            "excluded_zero_sensitivity",
        ])?;
        for c in cells {
            let Some(suite) = &c.tests.suite else { continue };
            for (t, skipped) in suite.tests.iter().zip(&suite.excluded_zero_sensitivity) {
                out.write_record([
                    c.cell.clone(),
                    kind_name(t.kind).into(),
                    t.n.to_string(),
                    t.tau.to_string(),
                    t.z_tau.to_string(),
                    t.p_tau.to_string(),
                    decision(t.decision_tau).into(),
                    t.r.to_string(),
                    t.t_r.to_string(),
                    t.p_r.to_string(),
                    decision(t.decision_r).into(),
                    t.alpha.to_string(),
                    suite.excluded_zero_error.to_string(),
                    skipped.to_string(),
                ])?;
            }
        }
        out.flush()
    })?;

    write_with(&dir.join(PAIRS_FILE), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["cell", "controllers", "orthogonal_pairs", "percent"])?;
        for c in cells {
            out.write_record([
                c.cell.clone(),
                c.controllers.to_string(),
                c.orthogonal_pairs.to_string(),
                format!("{:.1}", percent(c.orthogonal_pairs, c.controllers)),
            ])?;
        }
        out.flush()
    })?;

    write_with(&dir.join(SUMMARY_FILE), |w| {
        writeln!(w, "# Campaign summary\n")?;
        writeln!(w, "| cell | controllers | orthogonal pairs | test | n | τ | p(τ) | r | p(r) |")?;
        writeln!(w, "|---|---|---|---|---|---|---|---|---|")?;
        for c in cells {
            let pairs = format!(
                "{} ({:.0}%)",
                c.orthogonal_pairs,
                percent(c.orthogonal_pairs, c.controllers)
            );
            match &c.tests.suite {
                Some(suite) => {
                    for t in &suite.tests {
                        writeln!(
                            w,
                            "| {} | {} | {} | {} | {} | {:.4} | {:.3e} | {:.4} | {:.3e} |",
                            c.cell,
                            c.controllers,
                            pairs,
                            kind_name(t.kind),
                            t.n,
                            t.tau,
                            t.p_tau,
                            t.r,
                            t.p_r
                        )?;
                    }
                }
                None => writeln!(
                    w,
                    "| {} | {} | {} | not run: {} | {} | | | | |",
                    c.cell,
                    c.controllers,
                    pairs,
                    c.tests.not_run.as_deref().unwrap_or("unknown"),
                    c.tests.records
                )?,
            }
        }
        if !failed.is_empty() {
            writeln!(w, "\n## Incomplete cells\n")?;
            for f in failed {
                writeln!(w, "- {f}")?;
            }
        }
        Ok(())
    })
}
