use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ringsens_cli::campaign::run_campaign;
use ringsens_cli::config::CampaignConfig;
use ringsens_cli::error::{CliError, Result};
use ringsens_cli::io::read_jsonl;
use ringsens_cli::report::{write_report, CellResult};
use ringsens_cli::stages::{
    objective_draw_seed, read_pool, scan_cell, sensitivity_draw_seed, synthesis_seed, synthesize_cell, test_cell,
    write_pool, SynthesisRequest,
};
use ringsens_core::sampler::{generate_pool, CpScreen, DephasingPool, SamplerConfig};
use ringsens_core::sensitivity::{PerturbationGrid, SensitivityRecord};
use ringsens_core::stats::{DEFAULT_ALPHA, PAIR_TOL};
use ringsens_core::synthesis::{default_candidates, Budget, Controller, ObjectiveSpec, Transfer};

#[derive(Parser)]
#[command(name = "ringsens", version, about = "Ring controller synthesis and dephasing sensitivity pipeline")]
struct Cli {
    /// Campaign configuration; also supplies defaults to the other subcommands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (also accepted after the subcommand, except `synthesize`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize controllers for one transfer and keep the best.
    Synthesize(SynthesizeArgs),
    /// Generate a CP-screened pool of normalized dephasing operators.
    SampleDephasing(SampleArgs),
    /// Error surfaces and log-sensitivities of a controller set.
    #[command(alias = "sensitivity")]
    Scan(ScanArgs),
    /// Concordance and trend tests on sensitivity records.
    Test(TestArgs),
    /// Tables over one or more record files.
    Report(ReportArgs),
    /// Full pipeline from a configuration file.
    Campaign(CampaignArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long = "out")]
    dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveKind {
    Fidelity,
    Overlap,
    Dephasing,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Ring size.
    #[arg(long = "N", short = 'N')]
    n: usize,
    #[arg(long = "in")]
    in_node: usize,
    /// Target node. The output directory is `--out-dir` here.
    #[arg(long = "out")]
    out_node: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    objective: ObjectiveKind,
    /// Weight of the coherent term in the overlap objective.
    #[arg(long, default_value_t = 0.5)]
    overlap_weight: f64,
    #[arg(long)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    /// Controllers kept.
    #[arg(long)]
    top: usize,
    /// Best-objective pre-filter size (default 1.5 × top).
    #[arg(long)]
    candidates: Option<usize>,
    /// Dephasing pool (dephasing objective only).
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Operators drawn from the pool for the dephasing objective.
    #[arg(long, default_value_t = 1000)]
    draw: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long = "N", short = 'N')]
    n: usize,
    /// Accepted operators wanted.
    #[arg(long)]
    target: usize,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    /// First Sobol index examined.
    #[arg(long, default_value_t = 0)]
    offset: u64,
    #[arg(long, default_value_t = 1e-3)]
    min_acceptance_rate: f64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ScanArgs {
    /// Controllers as JSON lines.
    #[arg(long)]
    controllers: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    /// Operators drawn from the pool.
    #[arg(long)]
    draw: Option<usize>,
    /// Points of the uniform δ grid on [0, 1].
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    heatmap_bins: Option<usize>,
    #[arg(long)]
    pair_tolerance: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct TestArgs {
    /// Sensitivity records as JSON lines.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ReportArgs {
    /// Sensitivity record files, one per cell.
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    out: OutDir,
}

struct Context {
    config: Option<CampaignConfig>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Context {
    fn seed(&self) -> Result<u64> {
        self.seed
            .or(self.config.as_ref().map(|c| c.seed))
            .ok_or_else(|| CliError::Config("--seed is required (or a --config with a seed)".into()))
    }

    fn out<'a>(&'a self, local: &'a Option<PathBuf>) -> Result<&'a Path> {
        local
            .as_deref()
            .or(self.out.as_deref())
            .or(self.config.as_ref().and_then(|c| c.output_dir.as_deref()))
            .ok_or_else(|| CliError::Config("--out is required".into()))
    }

    fn alpha(&self, flag: Option<f64>) -> f64 {
        flag.or(self.config.as_ref().map(|c| c.alpha)).unwrap_or(DEFAULT_ALPHA)
    }
}

fn pool_draw_size(flag: Option<usize>, ctx: &Context, pool: &DephasingPool) -> usize {
    flag.or(ctx.config.as_ref().map(|c| c.sampler.draw))
        .unwrap_or(pool.operators.len())
}

fn synthesize(ctx: &Context, a: SynthesizeArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let out = ctx.out(&a.out_dir)?;
    let transfer = Transfer::new(a.n, a.in_node, a.out_node);
    let objective = match a.objective {
        ObjectiveKind::Fidelity => ObjectiveSpec::Fidelity,
        ObjectiveKind::Overlap => ObjectiveSpec::Overlap { alpha: a.overlap_weight },
        ObjectiveKind::Dephasing => ObjectiveSpec::Dephasing { count: a.draw },
    };
    let draw = match (objective, a.pool.as_deref()) {
        (ObjectiveSpec::Dephasing { count }, Some(path)) => {
            Some(read_pool(path)?.draw(count, objective_draw_seed(seed, a.n))?)
        }
        (ObjectiveSpec::Dephasing { .. }, None) => {
            return Err(CliError::Config("--pool is required for the dephasing objective".into()))
        }
        _ => None,
    };
    let bounds = ctx.config.as_ref().map(|c| c.bounds).unwrap_or_default();
    let req = SynthesisRequest {
        transfer,
        objective,
        budget: Budget::new(a.restarts, a.iterations),
        bounds,
        seed: synthesis_seed(seed, &transfer, &objective),
        top: a.top,
        candidates: a.candidates.unwrap_or_else(|| default_candidates(a.top)),
        draw: draw.as_ref(),
    };
    let selected = synthesize_cell(&req, out)?;
    let best = &selected[0];
    println!(
        "{}: kept {} controllers, best e(T) = {:.3e}",
        transfer.label(),
        selected.len(),
        best.nominal_error
    );
    Ok(())
}

fn sample(ctx: &Context, a: SampleArgs) -> Result<()> {
    let out = ctx.out(&a.out.dir)?;
    let cfg = SamplerConfig {
        n: a.n,
        pool_target: a.target,
        batch_size: a.batch_size,
        sequence_offset: a.offset,
        cp: CpScreen::default(),
        min_acceptance_rate: a.min_acceptance_rate,
    };
    let pool = generate_pool(&cfg)?;
    let path = out.join(format!("N{}.jsonl", a.n));
    write_pool(&path, &pool)?;
    println!(
        "{}: {} operators, acceptance rate {:.4} over {} candidates",
        path.display(),
        pool.operators.len(),
        pool.stats.acceptance_rate(),
        pool.stats.candidates
    );
    Ok(())
}

fn scan(ctx: &Context, a: ScanArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let out = ctx.out(&a.out.dir)?;
    let controllers: Vec<Controller> = read_jsonl(&a.controllers)?;
    let n = controllers
        .first()
        .map(|c| c.spec.n())
        .ok_or_else(|| CliError::Config(format!("{}: no controllers", a.controllers.display())))?;
    let pool = read_pool(&a.pool)?;
    let draw = pool.draw(pool_draw_size(a.draw, ctx, &pool), sensitivity_draw_seed(seed, n))?;
    let grid_cfg = ctx.config.as_ref().map(|c| c.grid);
    let points = a.grid.or(grid_cfg.map(|g| g.points)).unwrap_or(1001);
    let bins = a.heatmap_bins.or(grid_cfg.map(|g| g.heatmap_bins)).unwrap_or(200);
    let tol = a
        .pair_tolerance
        .or(ctx.config.as_ref().map(|c| c.pair_tolerance))
        .unwrap_or(PAIR_TOL);
    let (records, summary) = scan_cell(&controllers, &draw.operators, &PerturbationGrid::uniform(points)?, bins, tol, out)?;
    println!(
        "{} records, {} excluded, {} orthogonal pairs",
        records.len(),
        summary.excluded.len(),
        summary.orthogonal_pairs
    );
    Ok(())
}

fn test(ctx: &Context, a: TestArgs) -> Result<()> {
    let out = ctx.out(&a.out.dir)?;
    let records: Vec<SensitivityRecord> = read_jsonl(&a.records)?;
    let (report, _) = test_cell(&records, ctx.alpha(a.alpha), out)?;
    match &report.suite {
        Some(suite) => {
            for t in &suite.tests {
                println!(
                    "{:?}: n = {}, τ = {:.4} (p = {:.3e}), r = {:.4} (p = {:.3e})",
                    t.kind, t.n, t.tau, t.p_tau, t.r, t.p_r
                );
            }
        }
        None => println!("tests not run: {}", report.not_run.as_deref().unwrap_or("unknown")),
    }
    Ok(())
}

/// `cells/N5_1to2/overlap/sensitivity.jsonl` becomes `N5_1to2/overlap`.
fn cell_name(path: &Path) -> String {
    let dirs: Vec<String> = path
        .parent()
        .map(|p| p.iter().map(|c| c.to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    match dirs.len() {
        0 => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        n => dirs[n.saturating_sub(2)..].join("/"),
    }
}

fn report(ctx: &Context, a: ReportArgs) -> Result<()> {
    let out = ctx.out(&a.out.dir)?;
    let alpha = ctx.alpha(a.alpha);
    let mut cells = Vec::new();
    for path in &a.records {
        let records: Vec<SensitivityRecord> = read_jsonl(path)?;
        let name = cell_name(path);
        let (tests, _) = test_cell(&records, alpha, &out.join(&name))?;
        cells.push(CellResult {
            cell: name,
            controllers: records.len(),
            orthogonal_pairs: records.iter().filter(|r| r.orthogonal_pair == Some(true)).count(),
            tests,
        });
    }
    write_report(&cells, &[], out)?;
    println!("report written to {}", out.display());
    Ok(())
}

fn campaign(ctx: &Context, a: CampaignArgs) -> Result<()> {
    let mut cfg = ctx
        .config
        .clone()
        .ok_or_else(|| CliError::Config("campaign needs --config".into()))?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    let out = ctx.out(&a.out.dir)?.to_path_buf();
    let manifest = run_campaign(&cfg, &out)?;
    for s in &manifest.stages {
        match &s.error {
            Some(e) => println!("{:<40} {:?}: {e}", s.name, s.status),
            None => println!("{:<40} {:?}", s.name, s.status),
        }
    }
    if !manifest.complete {
        return Err(CliError::Partial {
            failed: manifest.failed(),
            manifest: out.join(ringsens_cli::campaign::MANIFEST_FILE),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let ctx = Context {
        config: cli.config.as_deref().map(CampaignConfig::load).transpose()?,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Synthesize(a) => synthesize(&ctx, a),
        Command::SampleDephasing(a) => sample(&ctx, a),
        Command::Scan(a) => scan(&ctx, a),
        Command::Test(a) => test(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Campaign(a) => campaign(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
