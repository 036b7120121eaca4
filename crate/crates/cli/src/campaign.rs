//! Campaign orchestration with per-stage checkpoints and a run manifest.
//!
//! Every stage reads its inputs from disk and records a fingerprint
//! (config hash, core version, stage name, upstream digests) together with
//! the checksums of its outputs. A stage whose fingerprint and output
//! checksums still match is not recomputed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ringsens_core::sampler::generate_pool;
use ringsens_core::sensitivity::{PerturbationGrid, SensitivityRecord};
use ringsens_core::synthesis::{Controller, ObjectiveSpec};

use crate::config::CampaignConfig;
use crate::error::{CliError, Result};
use crate::io::{read_json, read_jsonl, sha256_bytes, sha256_file, write_json, write_with};
use crate::report::{report_files, write_report, CellResult};
use crate::stages::{
    objective_draw_seed, read_draw, read_pool, scan_cell, sensitivity_draw_seed, synthesis_seed, synthesize_cell,
    test_cell, write_pool, ScanSummary, SynthesisRequest, TestReport, CONTROLLERS_FILE, HEATMAP_CSV, HEATMAP_SVG,
    POPULATION_FILE, SCAN_SUMMARY_FILE, SENSITIVITY_FILE, SURFACE_STATS_FILE, TESTS_FILE,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "ringsens-manifest/1";
pub const CONFIG_FILE: &str = "config.json";
pub const STAGE_DIR: &str = ".stages";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Resumed,
    Failed,
    /// An upstream stage failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub ringsens_core: String,
    pub ringsens_cli: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub started: String,
    pub finished: String,
    pub complete: bool,
    pub stages: Vec<StageEntry>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn failed(&self) -> usize {
        self.stages.iter().filter(|s| s.status == StageStatus::Failed).count()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    name: String,
    fingerprint: String,
    outputs: Vec<FileEntry>,
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn file_entry(root: &Path, path: &Path) -> Result<FileEntry> {
    let bytes = fs::metadata(path).map_err(|e| CliError::io(path, e))?.len();
    Ok(FileEntry {
        path: relative(root, path),
        sha256: sha256_file(path)?,
        bytes,
    })
}

/// Every artifact under `root` except the manifest and stage records, sorted by path.
pub fn inventory(root: &Path) -> Result<Vec<FileEntry>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| CliError::io(root, e.into()))?;
        let rel = relative(root, entry.path());
        if entry.file_type().is_file() && rel != MANIFEST_FILE && !rel.starts_with(&format!("{STAGE_DIR}/")) {
            files.push(file_entry(root, entry.path())?);
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

struct Runner<'a> {
    root: &'a Path,
    config_hash: String,
    entries: Vec<StageEntry>,
    /// Digest of the outputs of every stage that finished.
    digests: BTreeMap<String, String>,
}

impl Runner<'_> {
    fn record_path(&self, name: &str) -> PathBuf {
        self.root.join(STAGE_DIR).join(format!("{}.json", name.replace('/', "__")))
    }

    fn resumable(&self, name: &str, fingerprint: &str) -> Option<StageRecord> {
        let record: StageRecord = read_json(&self.record_path(name)).ok()?;
        if record.fingerprint != fingerprint {
            return None;
        }
        for entry in &record.outputs {
            if sha256_file(&self.root.join(&entry.path)).ok()? != entry.sha256 {
                return None;
            }
        }
        Some(record)
    }

    /// Marks a finished stage as failed, e.g. when its outputs cannot be read back.
    fn demote(&mut self, name: &str, error: String) {
        if let Some(e) = self.entries.iter_mut().rev().find(|e| e.name == name) {
            e.status = StageStatus::Failed;
            e.error = Some(error);
        }
        self.digests.remove(name);
    }

    fn finish(&mut self, name: &str, status: StageStatus, fingerprint: Option<String>, error: Option<String>) {
        self.entries.push(StageEntry {
            name: name.to_string(),
            status,
            fingerprint,
            error,
        });
    }

    /// Runs `f`, which returns the files it wrote, unless an identical
    /// earlier run can be reused. Returns whether the outputs are available.
    fn stage(&mut self, name: &str, upstream: &[String], f: impl FnOnce() -> Result<Vec<PathBuf>>) -> bool {
        let Some(ups) = upstream.iter().map(|u| self.digests.get(u).cloned()).collect::<Option<Vec<_>>>() else {
            self.finish(name, StageStatus::Skipped, None, None);
            return false;
        };
        let fingerprint = sha256_bytes(
            format!(
                "{}\n{}\n{}\n{}",
                self.config_hash,
                ringsens_core::VERSION,
                name,
                ups.join("\n")
            )
            .as_bytes(),
        );
        if let Some(record) = self.resumable(name, &fingerprint) {
            self.digests.insert(name.to_string(), outputs_digest(&record.outputs));
            self.finish(name, StageStatus::Resumed, Some(fingerprint), None);
            return true;
        }
        let _ = fs::remove_file(self.record_path(name));
        let done = f().and_then(|outputs| {
            let entries = outputs
                .iter()
                .map(|p| file_entry(self.root, p))
                .collect::<Result<Vec<_>>>()?;
            let record = StageRecord {
                name: name.to_string(),
                fingerprint: fingerprint.clone(),
                outputs: entries,
            };
            write_json(&self.record_path(name), &record)?;
            Ok(record)
        });
        match done {
            Ok(record) => {
                self.digests.insert(name.to_string(), outputs_digest(&record.outputs));
                self.finish(name, StageStatus::Completed, Some(fingerprint), None);
                true
            }
            Err(e) => {
                self.finish(name, StageStatus::Failed, Some(fingerprint), Some(e.to_string()));
                false
            }
        }
    }
}

fn outputs_digest(outputs: &[FileEntry]) -> String {
    let joined: Vec<String> = outputs.iter().map(|o| format!("{} {}", o.sha256, o.path)).collect();
    sha256_bytes(joined.join("\n").as_bytes())
}

fn pool_paths(root: &Path, n: usize) -> [PathBuf; 3] {
    let dir = root.join("pools");
    [
        dir.join(format!("N{n}.jsonl")),
        dir.join(format!("N{n}_objective_draw.json")),
        dir.join(format!("N{n}_sensitivity_draw.json")),
    ]
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs (or resumes) every stage of `cfg` under `root` and writes the manifest last.
pub fn run_campaign(cfg: &CampaignConfig, root: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = now();
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    write_with(&root.join(CONFIG_FILE), |w| {
        use std::io::Write;
        writeln!(w, "{}", cfg.canonical_json())
    })?;
    let mut run = Runner {
        root,
        config_hash: cfg.hash(),
        entries: Vec::new(),
        digests: BTreeMap::new(),
    };

    for n in cfg.ring_sizes() {
        let [pool_path, objective_path, sensitivity_path] = pool_paths(root, n);
        let outputs = [pool_path.clone(), objective_path.clone(), sensitivity_path.clone()];
        run.stage(&format!("pool/N{n}"), &[], || {
            let pool = generate_pool(&cfg.sampler.for_ring(n))?;
            write_pool(&pool_path, &pool)?;
            write_json(&objective_path, &pool.draw(cfg.sampler.draw, objective_draw_seed(cfg.seed, n))?)?;
            write_json(&sensitivity_path, &pool.draw(cfg.sampler.draw, sensitivity_draw_seed(cfg.seed, n))?)?;
            Ok(outputs.to_vec())
        });
    }

    let grid = PerturbationGrid::uniform(cfg.grid.points)?;
    let mut cells = Vec::new();
    let mut failed = Vec::new();
    let mut tested = Vec::new();
    for transfer in &cfg.transfers {
        let n = transfer.n;
        let pool_stage = format!("pool/N{n}");
        let [pool_path, objective_path, sensitivity_path] = pool_paths(root, n);
        for objective in &cfg.objectives {
            let cell = format!("{}/{}", transfer.label(), objective.name());
            let dir = root.join("cells").join(transfer.label()).join(objective.name());
            let synth = format!("synthesize/{cell}");
            let scan = format!("scan/{cell}");
            let test = format!("test/{cell}");

            let needs_pool = matches!(objective, ObjectiveSpec::Dephasing { .. });
            let synth_up = if needs_pool { vec![pool_stage.clone()] } else { Vec::new() };
            let synth_out = [dir.join(POPULATION_FILE), dir.join(CONTROLLERS_FILE)];
            run.stage(&synth, &synth_up, || {
                let draw = if needs_pool {
                    Some(read_draw(&objective_path, &read_pool(&pool_path)?)?)
                } else {
                    None
                };
                let req = SynthesisRequest {
                    transfer: *transfer,
                    objective: *objective,
                    budget: cfg.budget,
                    bounds: cfg.bounds,
                    seed: synthesis_seed(cfg.seed, transfer, objective),
                    top: cfg.selection.top,
                    candidates: cfg.selection.candidates(),
                    draw: draw.as_ref(),
                };
                synthesize_cell(&req, &dir)?;
                Ok(synth_out.to_vec())
            });

            let scan_out = [
                dir.join(SENSITIVITY_FILE),
                dir.join(SCAN_SUMMARY_FILE),
                dir.join(SURFACE_STATS_FILE),
                dir.join(HEATMAP_CSV),
                dir.join(HEATMAP_SVG),
            ];
            run.stage(&scan, &[synth.clone(), pool_stage.clone()], || {
                let controllers: Vec<Controller> = read_jsonl(&dir.join(CONTROLLERS_FILE))?;
                let draw = read_draw(&sensitivity_path, &read_pool(&pool_path)?)?;
                scan_cell(
                    &controllers,
                    &draw.operators,
                    &grid,
                    cfg.grid.heatmap_bins,
                    cfg.pair_tolerance,
                    &dir,
                )?;
                Ok(scan_out.to_vec())
            });

            let ok = run.stage(&test, std::slice::from_ref(&scan), || {
                let records: Vec<SensitivityRecord> = read_jsonl(&dir.join(SENSITIVITY_FILE))?;
                Ok(test_cell(&records, cfg.alpha, &dir)?.1)
            });
            let loaded = ok.then(|| -> Result<CellResult> {
                let summary: ScanSummary = read_json(&dir.join(SCAN_SUMMARY_FILE))?;
                let tests: TestReport = read_json(&dir.join(TESTS_FILE))?;
                Ok(CellResult {
                    cell: cell.clone(),
                    controllers: summary.controllers,
                    orthogonal_pairs: summary.orthogonal_pairs,
                    tests,
                })
            });
            match loaded {
                Some(Ok(result)) => {
                    cells.push(result);
                    tested.push(test);
                }
                Some(Err(e)) => {
                    run.demote(&test, e.to_string());
                    failed.push(cell);
                }
                None => failed.push(cell),
            }
        }
    }

    let report_dir = root.join("report");
    run.stage("report", &tested, || {
        write_report(&cells, &failed, &report_dir)?;
        Ok(report_files(&report_dir))
    });

    let complete = run
        .entries
        .iter()
        .all(|e| matches!(e.status, StageStatus::Completed | StageStatus::Resumed));
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        config_hash: run.config_hash.clone(),
        seed: cfg.seed,
        versions: Versions {
            ringsens_core: ringsens_core::VERSION.into(),
            ringsens_cli: env!("CARGO_PKG_VERSION").into(),
        },
        started,
        finished: now(),
        complete,
        stages: run.entries,
        files: inventory(root)?,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
