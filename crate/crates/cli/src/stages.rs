//! Pipeline stages for one (transfer, objective) cell. Each stage reads its
//! inputs as values and writes its outputs into a cell directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ringsens_core::sampler::{DephasingOperator, DephasingPool, PoolDraw};
use ringsens_core::seed::sub_seed;
use ringsens_core::sensitivity::{
    build_error_surface, density_map, sensitivity_record, ErrorSurface, PerturbationGrid, SensitivityRecord,
};
use ringsens_core::stats::{classify_orthogonal_pair, run_trend_suite, TrendSuite};
use ringsens_core::synthesis::{select_population, synthesize_population, Bounds, Budget, Controller, ObjectiveSpec, Transfer};
use ringsens_core::Error as CoreError;

use crate::error::{CliError, Result};
use crate::export::{export_heatmap, export_scatter, overlay, Format, Sensitivity};
use crate::io::{create, open, read_json, write_json, write_jsonl, write_with};

pub const POPULATION_FILE: &str = "population.jsonl";
pub const CONTROLLERS_FILE: &str = "controllers.jsonl";
pub const SENSITIVITY_FILE: &str = "sensitivity.jsonl";
pub const SCAN_SUMMARY_FILE: &str = "scan_summary.json";
pub const SURFACE_STATS_FILE: &str = "surface_stats.csv";
pub const HEATMAP_CSV: &str = "heatmap_best.csv";
pub const HEATMAP_SVG: &str = "heatmap_best.svg";
pub const TESTS_FILE: &str = "tests.json";
pub const SCATTER_FILES: [(&str, Sensitivity, Format); 4] = [
    ("scatter_sa.csv", Sensitivity::Analytic, Format::Csv),
    ("scatter_sa.svg", Sensitivity::Analytic, Format::Svg),
    ("scatter_sk.csv", Sensitivity::Kde, Format::Csv),
    ("scatter_sk.svg", Sensitivity::Kde, Format::Svg),
];

/// Writes a pool as JSON lines (header first).
pub fn write_pool(path: &Path, pool: &DephasingPool) -> Result<()> {
    let mut w = create(path)?;
    pool.write_jsonl(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a pool, re-screening every operator.
pub fn read_pool(path: &Path) -> Result<DephasingPool> {
    DephasingPool::read_jsonl(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reads a draw and re-attaches its operators from `pool`.
pub fn read_draw(path: &Path, pool: &DephasingPool) -> Result<PoolDraw> {
    let mut draw: PoolDraw = read_json(path)?;
    draw.resolve(pool)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(draw)
}

pub fn synthesis_seed(seed: u64, transfer: &Transfer, objective: &ObjectiveSpec) -> u64 {
    sub_seed(seed, &format!("synthesis/{}/{}", transfer.label(), objective.name()))
}

pub fn objective_draw_seed(seed: u64, n: usize) -> u64 {
    sub_seed(seed, &format!("objective-draw/N{n}"))
}

pub fn sensitivity_draw_seed(seed: u64, n: usize) -> u64 {
    sub_seed(seed, &format!("sensitivity-draw/N{n}"))
}

/// Stable identifier `N5_1to2/overlap/r17`.
pub fn controller_id(c: &Controller) -> String {
    let s = &c.spec;
    format!(
        "N{}_{}to{}/{}/r{}",
        s.n(),
        s.in_node(),
        s.out_node(),
        c.objective.name(),
        c.provenance.restart
    )
}

pub struct SynthesisRequest<'a> {
    pub transfer: Transfer,
    pub objective: ObjectiveSpec,
    pub budget: Budget,
    pub bounds: Bounds,
    pub seed: u64,
    pub top: usize,
    pub candidates: usize,
    pub draw: Option<&'a PoolDraw>,
}

/// Runs every restart, writes the full population and the selected controllers.
pub fn synthesize_cell(req: &SynthesisRequest, dir: &Path) -> Result<Vec<Controller>> {
    let population = synthesize_population(&req.transfer, &req.objective, &req.budget, &req.bounds, req.seed, req.draw)?;
    if population.iter().all(|c| !c.achieved_objective.is_finite()) {
        return Err(CliError::Numerical(format!(
            "all {} restarts diverged for {} / {}",
            population.len(),
            req.transfer.label(),
            req.objective.name()
        )));
    }
    let selected = select_population(&population, req.top, req.candidates)?;
    write_jsonl(&dir.join(POPULATION_FILE), &population)?;
    write_jsonl(&dir.join(CONTROLLERS_FILE), &selected)?;
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub controller: String,
    pub nominal_error: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub controllers: usize,
    pub records: usize,
    pub orthogonal_pairs: usize,
    pub operators: usize,
    pub grid_points: usize,
    /// Controllers whose log-sensitivity is undefined (zero nominal error).
    pub excluded: Vec<Excluded>,
}

/// Sensitivity records, error-surface statistics and the heatmap of the
/// first (best) controller.
pub fn scan_cell(
    controllers: &[Controller],
    operators: &[DephasingOperator],
    grid: &PerturbationGrid,
    heatmap_bins: usize,
    pair_tolerance: f64,
    dir: &Path,
) -> Result<(Vec<SensitivityRecord>, ScanSummary)> {
    if controllers.is_empty() {
        return Err(CliError::Config("no controllers to scan".into()));
    }
    type Scanned = (Option<(SensitivityRecord, ErrorSurface)>, Option<Excluded>, bool);
    let scanned: Vec<Scanned> = controllers
        .par_iter()
        .map(|c| -> Result<Scanned> {
            let id = controller_id(c);
            let pair = classify_orthogonal_pair(c, pair_tolerance)?.is_orthogonal_pair;
            match sensitivity_record(c, &id, operators, grid) {
                Ok((mut record, surface)) => {
                    record.orthogonal_pair = Some(pair);
                    Ok((Some((record, surface)), None, pair))
                }
                Err(CoreError::Undefined(reason)) => Ok((
                    None,
                    Some(Excluded {
                        controller: id,
                        nominal_error: c.nominal_error,
                        reason,
                    }),
                    pair,
                )),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_>>()?;

    let heat_surface = match &scanned[0].0 {
        Some((_, s)) => s.clone(),
        None => build_error_surface(&controllers[0], operators, grid)?,
    };
    let map = density_map(&heat_surface, heatmap_bins);
    export_heatmap(&heat_surface, &map, Format::Csv, &dir.join(HEATMAP_CSV))?;
    export_heatmap(&heat_surface, &map, Format::Svg, &dir.join(HEATMAP_SVG))?;

    write_with(&dir.join(SURFACE_STATS_FILE), |w| {
        writeln!(w, "controller,delta,mean,std")?;
        for (record, surface) in scanned.iter().filter_map(|s| s.0.as_ref()) {
            for (d, m, sd) in overlay(surface) {
                writeln!(w, "{},{d},{m},{sd}", record.controller)?;
            }
        }
        Ok(())
    })?;

    let pairs = scanned.iter().filter(|s| s.2).count();
    let excluded: Vec<Excluded> = scanned.iter().filter_map(|s| s.1.clone()).collect();
    let records: Vec<SensitivityRecord> = scanned.into_iter().filter_map(|s| s.0.map(|(r, _)| r)).collect();
    let summary = ScanSummary {
        controllers: controllers.len(),
        records: records.len(),
        orthogonal_pairs: pairs,
        operators: operators.len(),
        grid_points: grid.deltas().len(),
        excluded,
    };
    write_jsonl(&dir.join(SENSITIVITY_FILE), &records)?;
    write_json(&dir.join(SCAN_SUMMARY_FILE), &summary)?;
    Ok((records, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub records: usize,
    pub alpha: f64,
    /// Set when the suite could not run, e.g. too few records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_run: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<TrendSuite>,
}

/// Trend tests and scatter exports for one set of sensitivity records.
/// Scatter files are written only when there is at least one record; the
/// written paths are returned after the report.
pub fn test_cell(records: &[SensitivityRecord], alpha: f64, dir: &Path) -> Result<(TestReport, Vec<PathBuf>)> {
    let report = match run_trend_suite(records, alpha) {
        Ok(suite) => TestReport {
            records: records.len(),
            alpha,
            not_run: None,
            suite: Some(suite),
        },
        Err(e @ (CoreError::InsufficientPopulation { .. } | CoreError::Undefined(_))) => TestReport {
            records: records.len(),
            alpha,
            not_run: Some(e.to_string()),
            suite: None,
        },
        Err(e) => return Err(e.into()),
    };
    let mut written = vec![dir.join(TESTS_FILE)];
    write_json(&written[0], &report)?;
    if !records.is_empty() {
        for (name, axis, format) in SCATTER_FILES {
            written.push(dir.join(name));
            export_scatter(records, axis, format, &dir.join(name))?;
        }
    }
    Ok((report, written))
}
