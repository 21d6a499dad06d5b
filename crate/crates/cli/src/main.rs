use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qdfolio_core::analytics::{self, MetricsReport};
use qdfolio_core::behavior::SimplexSampler;
use qdfolio_core::engine::{run_qd, QdConfig};
use qdfolio_core::estimation::{self, MarketProxy, ReturnsWindow, DEFAULT_TRADING_DAYS};
use qdfolio_core::io::{self, ArchiveContext, EstimatesFile, RunConfig, RunManifest};
use qdfolio_core::optimizer::{efficient_frontier, fit_gamma, ReferenceRule};
use qdfolio_core::selection::select_portfolio;
use qdfolio_core::types::{sharpe_of, AssetUniverse, Portfolio};
use qdfolio_core::{registry, synth, Error};

mod report;

#[derive(Parser)]
#[command(
    name = "qdfolio",
    version,
    about = "Diverse near-optimal portfolios via CVT-MAP-Elites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate expected returns and covariance from a returns CSV.
    Estimate(EstimateArgs),
    /// Trace the long-only efficient frontier.
    Frontier(FrontierArgs),
    /// Find the risk aversion whose optimal portfolio matches given weights.
    FitGamma(FitGammaArgs),
    /// Run CVT-MAP-Elites and write the archive.
    QdRun(QdRunArgs),
    /// Compute archive metrics.
    Metrics(MetricsArgs),
    /// Re-estimate over trailing windows and re-test near-optimality.
    Sweep(SweepArgs),
    /// Pick a near-optimal portfolio closest to a preferred behavior.
    Select(SelectArgs),
    /// Generate a synthetic universe.
    Synth(SynthArgs),
    /// Aggregate snapshot curves and archive profiles across runs.
    Report(ReportArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Returns CSV (`date,<asset>,...`).
    #[arg(long, required_unless_present = "toy", conflicts_with = "toy")]
    returns: Option<PathBuf>,
    /// Emit the built-in three-asset example instead of estimating.
    #[arg(long)]
    toy: bool,
    /// Covariance estimator.
    #[arg(long, default_value = "ledoit-wolf")]
    method: String,
    /// Expected-return model.
    #[arg(long, default_value = "capm")]
    return_model: String,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value_t = 0.0)]
    rf: f64,
    #[arg(long, default_value_t = DEFAULT_TRADING_DAYS)]
    trading_days: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MarketArgs {
    /// CAPM market proxy: `equal`, `cap` (needs --metadata) or `external`
    /// (needs --market-series).
    #[arg(long, default_value = "equal")]
    market: String,
    /// Metadata CSV (`asset,sector,market_cap`).
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Market return CSV (`date,<series>`) on the same dates as the returns.
    #[arg(long)]
    market_series: Option<PathBuf>,
}

impl MarketArgs {
    fn proxy(&self, win: &ReturnsWindow) -> Result<MarketProxy> {
        match self.market.as_str() {
            "equal" => Ok(MarketProxy::EqualWeighted),
            "cap" => {
                let path = self
                    .metadata
                    .as_ref()
                    .ok_or_else(|| usage("--market cap requires --metadata".into()))?;
                let u = io::read_metadata_csv(path, win.assets())?;
                Ok(estimation::cap_weighted(&u))
            }
            "external" => {
                let path = self
                    .market_series
                    .as_ref()
                    .ok_or_else(|| usage("--market external requires --market-series".into()))?;
                Ok(MarketProxy::External(io::read_market_csv(path, win.dates())?))
            }
            other => Err(usage(format!(
                "unknown market proxy `{other}` (expected equal, cap or external)"
            ))),
        }
    }
}

#[derive(Args)]
struct FrontierArgs {
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitGammaArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Target weights, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    weights: Vec<f64>,
}

#[derive(Args)]
struct QdRunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Metadata CSV; required for the sector-cap behavior space.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// `max-sharpe`, `gamma:<value>` or `weights:<w1>,<w2>,...`.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    niches: Option<usize>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    n_cvt: Option<usize>,
    #[arg(long)]
    p_init: Option<f64>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(short, long)]
    c: Option<f64>,
    #[arg(long)]
    fitness: Option<String>,
    #[arg(long)]
    behavior: Option<String>,
    /// `dirichlet` or `normalized-uniform`.
    #[arg(long)]
    sampler: Option<SimplexSampler>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rf: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<u64>,
    /// Archive JSONL output. Snapshots, partition, metrics and the manifest
    /// are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Risk-free rate for Sharpe ratios; defaults to the run's.
    #[arg(long)]
    rf: Option<f64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    returns: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [424usize, 624, 824, 924])]
    t: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.005, 0.01, 0.025, 0.05, 0.1])]
    c: Vec<f64>,
    #[arg(long, default_value = "ledoit-wolf")]
    method: String,
    #[arg(long, default_value = "capm")]
    return_model: String,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value_t = DEFAULT_TRADING_DAYS)]
    trading_days: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Preferred behavior descriptor, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    bd: Vec<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 105)]
    assets: usize,
    #[arg(long, default_value_t = 11)]
    sectors: usize,
    #[arg(long, default_value_t = 924)]
    days: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_returns: PathBuf,
    #[arg(long)]
    out_metadata: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Snapshot CSVs, one per run.
    #[arg(long, num_args = 1..)]
    snapshots: Vec<PathBuf>,
    /// Curves CSV: `evals,metric,mean,p5,p95,runs`.
    #[arg(long)]
    out: PathBuf,
    /// Archives whose profiles are written to --profiles.
    #[arg(long, num_args = 1..)]
    archives: Vec<PathBuf>,
    #[arg(long, requires = "archives")]
    profiles: Option<PathBuf>,
}

/// Bad arguments that clap cannot detect.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numerical() => 4,
        Some(Error::UnknownStrategy { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Frontier(a) => frontier(a),
        Command::FitGamma(a) => fit_gamma_cmd(a),
        Command::QdRun(a) => qd_run(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep(a),
        Command::Select(a) => select(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Report(a) => report::run(&a.snapshots, &a.out, &a.archives, a.profiles.as_deref()),
    }
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let file = if a.toy {
        let est = estimation::toy_estimates();
        let names = estimation::TOY_ASSETS.iter().map(|s| s.to_string()).collect();
        EstimatesFile::new(names, &est)
    } else {
        let path = a.returns.as_ref().expect("clap enforces --returns");
        let win = io::read_returns_csv(path).with_context(|| format!("reading {}", path.display()))?;
        let market = a.market.proxy(&win)?;
        let settings = registry::estimator_settings(&a.return_model, &a.method, market, a.rf, a.trading_days)?;
        let est = settings.estimate(&win)?;
        let mut file = EstimatesFile::new(win.assets().to_vec(), &est);
        file.returns_model = Some(settings.returns.name().into());
        file.covariance_model = Some(settings.covariance.name().into());
        file
    };
    io::save_json(&a.out, &file)?;
    Ok(())
}

fn frontier(a: FrontierArgs) -> Result<()> {
    let (_, est) = io::load_estimates(&a.estimates)?;
    let points = efficient_frontier(&est, a.points)?;
    io::write_frontier_csv(&a.out, &points)?;
    Ok(())
}

fn fit_gamma_cmd(a: FitGammaArgs) -> Result<()> {
    let (_, est) = io::load_estimates(&a.estimates)?;
    let target = Portfolio::new(a.weights)?;
    let fit = fit_gamma(&est, &target)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}

fn load_universe(metadata: Option<&Path>, assets: &[String]) -> Result<AssetUniverse> {
    Ok(match metadata {
        Some(p) => io::read_metadata_csv(p, assets).with_context(|| format!("reading {}", p.display()))?,
        None => AssetUniverse::trivial(assets.to_vec())?,
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("archive");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn qd_run(a: QdRunArgs) -> Result<()> {
    let started = Instant::now();
    let file_cfg = match &a.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig {
            qd: QdConfig::default(),
            estimates: None,
            metadata: None,
            reference: None,
        },
    };
    let mut cfg = file_cfg.qd;
    macro_rules! override_fields {
        ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { cfg.$f = v; } )* };
    }
    override_fields!(
        niches,
        n_max,
        n_cvt,
        p_init,
        mutation_rate,
        c,
        fitness,
        behavior,
        sampler,
        seed,
        rf,
        threads,
        batch_size,
        snapshot_every
    );
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let est_path = a
        .estimates
        .or(file_cfg.estimates)
        .ok_or_else(|| usage("no estimates given (--estimates or `estimates` in the config)".into()))?;
    let (est_file, est) = io::load_estimates(&est_path).with_context(|| format!("reading {}", est_path.display()))?;
    let universe = load_universe(a.metadata.or(file_cfg.metadata).as_deref(), &est_file.assets)?;
    let rule_text = a
        .reference
        .or(file_cfg.reference)
        .unwrap_or_else(|| "max-sharpe".into());
    let rule = ReferenceRule::parse(&rule_text).map_err(|e| usage(e.to_string()))?;
    let w0 = rule.resolve(&est, cfg.rf)?;

    let output = run_qd(&cfg, &est, &universe, &w0)?;
    let ctx = ArchiveContext {
        config: &cfg,
        reference_rule: &rule.to_string(),
        assets: &est_file.assets,
        est: &est,
        universe: &universe,
    };
    io::write_archive(&a.out, &output.archive, &ctx)?;
    io::write_snapshots_csv(&sibling(&a.out, "snapshots.csv"), &output.snapshots)?;
    io::save_partition(&sibling(&a.out, "partition.json"), output.archive.partition())?;
    let metrics_path = sibling(&a.out, "metrics.json");
    let report = MetricsReport::compute(&output.archive, cfg.rf)?;
    io::save_json(&metrics_path, &report)?;

    let estimates_sha256 = io::estimates_checksum(&est);
    let universe_sha256 = io::universe_checksum(&universe);
    let manifest = RunManifest {
        run_id: io::run_id(&cfg, &estimates_sha256, &universe_sha256),
        archive_sha256: io::file_sha256(&a.out)?,
        archive_path: PathBuf::from(a.out.file_name().context("archive path has no file name")?),
        metrics_path: metrics_path.file_name().map(PathBuf::from),
        config: cfg,
        estimates_sha256,
        universe_sha256,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    io::save_json(&sibling(&a.out, "manifest.json"), &manifest)?;
    eprintln!(
        "{} evaluations, {} of {} niches filled, coverage {:.4}, {:.1}s",
        output.archive.eval_count(),
        output.archive.filled(),
        output.archive.niches(),
        report.coverage_mod,
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let (header, archive) = io::read_archive(&a.archive, None)?;
    let report = MetricsReport::compute(&archive, a.rf.unwrap_or(header.config.rf))?;
    if let Some(p) = &a.out_json {
        io::save_json(p, &report)?;
    }
    if let Some(p) = &a.out_csv {
        io::write_metrics_csv(p, &report)?;
    }
    if a.out_json.is_none() && a.out_csv.is_none() {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (header, archive) = io::read_archive(&a.archive, None)?;
    let win: ReturnsWindow = io::read_returns_csv(&a.returns)?;
    if win.assets() != header.assets.as_slice() {
        bail!(Error::InvalidInput(
            "returns columns do not match the archive's assets".into()
        ));
    }
    let rf = header.config.rf;
    let market = a.market.proxy(&win)?;
    let settings = registry::estimator_settings(&a.return_model, &a.method, market, rf, a.trading_days)?;
    let rule = ReferenceRule::parse(&header.reference_rule)?;
    let result = analytics::robustness_sweep(&archive, &win, &a.t, &a.c, &settings, &rule, rf)?;
    io::write_sweep_csv(&a.out, &result)?;
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let (header, archive) = io::read_archive(&a.archive, None)?;
    let s = select_portfolio(&archive, &a.bd)?;
    let out = serde_json::json!({
        "niche": s.niche,
        "requested_niche": s.requested_niche,
        "direct_hit": s.niche == s.requested_niche,
        "assets": header.assets,
        "weights": s.record.weights,
        "mu": s.record.rr.mu,
        "sigma": s.record.rr.sigma,
        "sharpe": sharpe_of(s.record.rr, header.config.rf).ok(),
        "fitness": s.record.fitness,
        "near_optimal": s.record.near_optimal,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let (win, universe) =
        synth::generate_synthetic_universe(a.assets, a.sectors, a.days, a.seed).map_err(|e| usage(e.to_string()))?;
    io::write_returns_csv(&a.out_returns, &win)?;
    io::write_metadata_csv(&a.out_metadata, &universe)?;
    Ok(())
}
