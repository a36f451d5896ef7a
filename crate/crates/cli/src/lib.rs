//! Command-line front end: ingestion checks, detection reports,
//! simulation and power studies.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynrdpg::em::{fit_homogeneous, fix_lambda};
use dynrdpg::io::{default_labels, read_events_path, write_events, IngestOptions, Ingested};
use dynrdpg::selection::{iterative_partition, Branch, Decision, RegionNode};
use dynrdpg::study::{run_study, StudyConfig, StudyMetrics};
use dynrdpg::{generator, Mode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::RunConfig;
use config::SeparationName;

/// Version of every JSON document this tool writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<dynrdpg::Error> for CliError {
    fn from(e: dynrdpg::Error) -> Self {
        match e {
            dynrdpg::Error::Numerical(m) => CliError::Numerical(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "dynrdpg",
    version,
    about = "Change-window and anomalous-subgroup detection for streaming network data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing); stdout when omitted, where
    /// the command allows it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of edge attributes.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Event CSV with header `t,u,v` or `t,u,v,k`.
    pub input: PathBuf,
    /// Bin width used to fix lambda; defaults to a hundredth of the horizon.
    #[arg(long)]
    pub time_unit: Option<f64>,
    /// Observation horizon; defaults to the last event time plus 0.01%.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Attributed,
    Unattributed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Attributed => Mode::Attributed,
            ModeArg::Unattributed => Mode::Unattributed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an event file and summarize it.
    IngestCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Search for change windows and anomalous subsets.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit the homogeneous model only.
    FitHom {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Generate events from a planted scenario, with a truth sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        separation: Option<SeparationName>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        edges_per_pair: Option<f64>,
    },
    /// Monte Carlo power study over the scenario grid.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::IngestCheck { common, .. }
            | Command::Detect { common, .. }
            | Command::FitHom { common, .. }
            | Command::Simulate { common, .. }
            | Command::Study { common, .. } => common,
        }
    }
}

/// Loads the config file and applies flag overrides.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    let common = command.common();
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = common.mode {
        cfg.mode = m.into();
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    match command {
        Command::IngestCheck { data, .. } | Command::Detect { data, .. } | Command::FitHom { data, .. } => {
            if data.time_unit.is_some() {
                cfg.time_unit = data.time_unit;
            }
            if data.horizon.is_some() {
                cfg.horizon = data.horizon;
            }
        }
        Command::Simulate { separation, n, edges_per_pair, .. } => {
            if let Some(s) = separation {
                cfg.simulate.separation = *s;
            }
            if let Some(n) = n {
                cfg.simulate.n = *n;
            }
            if let Some(e) = edges_per_pair {
                cfg.simulate.edges_per_pair = *e;
                cfg.simulate.lambda = None;
            }
        }
        Command::Study { replicates, .. } => {
            if let Some(r) = replicates {
                cfg.study.replicates = *r;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments already split by clap and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.command)?;
    if let Some(t) = cfg.threads {
        // A second call in one process (as in tests) keeps the first pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let out = cli.command.common().out.clone();
    match &cli.command {
        Command::IngestCheck { data, .. } => ingest_check(&cfg, &data.input, out.as_deref()),
        Command::Detect { data, .. } => {
            let out = out.ok_or_else(|| CliError::Config("detect needs --out".into()))?;
            detect(&cfg, &data.input, &out)
        }
        Command::FitHom { data, .. } => fit_hom(&cfg, &data.input, out.as_deref()),
        Command::Simulate { .. } => {
            let out = out.ok_or_else(|| CliError::Config("simulate needs --out".into()))?;
            simulate(&cfg, &out)
        }
        Command::Study { .. } => {
            let out = out.ok_or_else(|| CliError::Config("study needs --out".into()))?;
            study(&cfg, &out)
        }
    }
}

fn ingest(cfg: &RunConfig, input: &Path) -> Result<Ingested, CliError> {
    let opts = IngestOptions { mode: cfg.mode, k: cfg.k, horizon: cfg.horizon };
    read_events_path(input, &opts).map_err(|e| match e {
        dynrdpg::Error::Numerical(m) => CliError::Numerical(m),
        other => io_error(input, other),
    })
}

fn time_unit(cfg: &RunConfig, horizon: f64) -> f64 {
    cfg.time_unit.unwrap_or(horizon / 100.0)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_error(p, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    seed: u64,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn envelope<T>(cfg: &RunConfig, body: T) -> Envelope<'_, T> {
    Envelope { schema_version: SCHEMA_VERSION, seed: cfg.seed, config: cfg, body }
}

#[derive(Serialize)]
struct DataSummary {
    n: usize,
    events: usize,
    horizon: f64,
    edges_per_pair: f64,
    first_time: Option<f64>,
    last_time: Option<f64>,
    /// Events per attribute 1..=K; empty in unattributed mode.
    attribute_counts: Vec<usize>,
    warnings: Vec<String>,
}

fn summarize(data: &Ingested) -> DataSummary {
    let log = &data.log;
    let mut counts = vec![0; if log.mode() == Mode::Attributed { log.k() } else { 0 }];
    for e in log.events() {
        if let Some(k) = e.attr {
            counts[k - 1] += 1;
        }
    }
    DataSummary {
        n: log.n(),
        events: log.len(),
        horizon: log.horizon(),
        edges_per_pair: log.edges_per_pair(),
        first_time: log.events().first().map(|e| e.t),
        last_time: log.events().last().map(|e| e.t),
        attribute_counts: counts,
        warnings: data.warnings.clone(),
    }
}

pub fn ingest_check(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let data = ingest(cfg, input)?;
    #[derive(Serialize)]
    struct Body {
        data: DataSummary,
    }
    let path = match out {
        Some(dir) => {
            create_dir(dir)?;
            Some(dir.join("summary.json"))
        }
        None => None,
    };
    write_json(&envelope(cfg, Body { data: summarize(&data) }), path.as_deref())
}

pub fn fit_hom(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let data = ingest(cfg, input)?;
    let unit = time_unit(cfg, data.log.horizon());
    let lambda = fix_lambda(&data.log, unit)?;
    let fit = fit_homogeneous(&data.log, lambda, &cfg.em)?;
    #[derive(Serialize)]
    struct Body {
        data: DataSummary,
        time_unit: f64,
        lambda: f64,
        alpha: Vec<f64>,
        latent_mean: Vec<f64>,
        loglik: f64,
    }
    let body = Body {
        data: summarize(&data),
        time_unit: unit,
        lambda,
        alpha: fit.alpha.alpha().to_vec(),
        latent_mean: fit.alpha.latent_mean(),
        loglik: fit.loglik,
    };
    let path = match out {
        Some(dir) => {
            create_dir(dir)?;
            Some(dir.join("fit_hom.json"))
        }
        None => None,
    };
    write_json(&envelope(cfg, body), path.as_deref())
}

#[derive(Serialize)]
struct PartitionEntry {
    node: usize,
    parent: Option<usize>,
    depth: usize,
    branch: Branch,
    /// Window in original time, one interval per spliced piece.
    window: Vec<(f64, f64)>,
    span: (f64, f64),
    members: Vec<String>,
    alpha0: Vec<f64>,
    alpha1: Vec<f64>,
    lambda: f64,
    delta_bic: f64,
    loglik_het: f64,
    loglik_hom: f64,
    iterations: usize,
    converged: bool,
    repeats_parent: bool,
}

#[derive(Serialize)]
struct DetectBody<'a> {
    data: DataSummary,
    time_unit: f64,
    bic_hom: f64,
    bic_het: f64,
    decision: Decision,
    stopped_reason: &'a str,
    partitions: Vec<PartitionEntry>,
    nodes: &'a [RegionNode],
}

/// Writes `report.json` and `membership.csv` into `out`.
pub fn detect(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let data = ingest(cfg, input)?;
    let unit = time_unit(cfg, data.log.horizon());
    let selection = dynrdpg::selection::SelectionConfig { time_unit: Some(unit), ..cfg.selection_config() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let report = iterative_partition(&data.log, &cfg.em, &cfg.init, &selection, &mut rng)?;
    create_dir(out)?;

    let partitions: Vec<PartitionEntry> = report
        .partitions
        .iter()
        .map(|p| {
            let node = &report.nodes[p.node];
            PartitionEntry {
                node: p.node,
                parent: node.parent,
                depth: node.depth,
                branch: node.branch,
                window: p.window.clone(),
                span: p.span(),
                members: p.model.subset.members().iter().map(|&v| data.labels[v].clone()).collect(),
                alpha0: p.model.alpha0.alpha().to_vec(),
                alpha1: p.model.alpha1.alpha().to_vec(),
                lambda: p.model.lambda,
                delta_bic: p.delta_bic,
                loglik_het: p.loglik_het,
                loglik_hom: p.loglik_hom,
                iterations: p.iterations,
                converged: p.converged,
                repeats_parent: p.repeats_parent,
            }
        })
        .collect();

    let path = out.join("membership.csv");
    let mut wtr = csv::Writer::from_writer(create(&path)?);
    let csv_err = |e: csv::Error| io_error(&path, e);
    wtr.write_record(["partition", "node", "vertex", "probability", "member"]).map_err(csv_err)?;
    for (i, p) in report.partitions.iter().enumerate() {
        for (v, prob) in p.membership.iter().enumerate() {
            let member = u8::from(p.model.subset.contains(v));
            wtr.write_record([
                i.to_string(),
                p.node.to_string(),
                data.labels[v].clone(),
                prob.to_string(),
                member.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| io_error(&path, e))?;

    let body = DetectBody {
        data: summarize(&data),
        time_unit: unit,
        bic_hom: report.bic_hom,
        bic_het: report.bic_het,
        decision: report.decision,
        stopped_reason: &report.stopped_reason,
        partitions,
        nodes: &report.nodes,
    };
    write_json(&envelope(cfg, body), Some(&out.join("report.json")))
}

/// Writes `events.csv` and `truth.json` into `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let log = generator::simulate(&scenario)?;
    let labels = default_labels(scenario.n);
    create_dir(out)?;
    let path = out.join("events.csv");
    let mut w = create(&path)?;
    write_events(&mut w, &log, &labels).map_err(|e| io_error(&path, e))?;
    w.flush().map_err(|e| io_error(&path, e))?;

    #[derive(Serialize)]
    struct Truth {
        scenario: String,
        n: usize,
        k: usize,
        mode: Mode,
        horizon: f64,
        lambda: f64,
        alpha0: Vec<f64>,
        alpha1: Vec<f64>,
        window: (f64, f64),
        subset: Vec<String>,
        phi: f64,
        expected_edges_per_pair: f64,
        events: usize,
        edges_per_pair: f64,
    }
    let truth = Truth {
        scenario: scenario.name.clone(),
        n: scenario.n,
        k: scenario.k,
        mode: scenario.mode,
        horizon: scenario.horizon,
        lambda: scenario.lambda,
        alpha0: scenario.alpha0.alpha().to_vec(),
        alpha1: scenario.alpha1.alpha().to_vec(),
        window: (scenario.window.start, scenario.window.end),
        subset: scenario.subset.iter().map(|&v| labels[v].clone()).collect(),
        phi: generator::separation_angle(&scenario.alpha0, &scenario.alpha1),
        expected_edges_per_pair: scenario.expected_edges_per_pair(),
        events: log.len(),
        edges_per_pair: log.edges_per_pair(),
    };
    write_json(&envelope(cfg, truth), Some(&out.join("truth.json")))
}

#[derive(Serialize)]
struct StudyRow<'a> {
    scenario: &'a str,
    n: usize,
    m: usize,
    lambda: f64,
    avg_edges_per_pair: f64,
    power: f64,
    sensitivity: f64,
    specificity: f64,
    cp_error: f64,
    replicates: usize,
    failures: usize,
}

impl<'a> From<&'a StudyMetrics> for StudyRow<'a> {
    fn from(m: &'a StudyMetrics) -> Self {
        StudyRow {
            scenario: &m.scenario,
            n: m.n,
            m: m.m,
            lambda: m.lambda,
            avg_edges_per_pair: m.avg_edges_per_pair,
            power: m.power,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            cp_error: m.cp_error,
            replicates: m.replicates,
            failures: m.failures,
        }
    }
}

/// Writes `study.csv` and `study.json` into `out`.
pub fn study(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scenarios = cfg.study_scenarios()?;
    let study = StudyConfig {
        replicates: cfg.study.replicates,
        seed: cfg.seed,
        time_unit: cfg.time_unit,
        em: cfg.em,
        init: cfg.init,
    };
    let metrics = run_study(&scenarios, &study)?;
    create_dir(out)?;
    let path = out.join("study.csv");
    let mut wtr = csv::Writer::from_writer(create(&path)?);
    for m in &metrics {
        wtr.serialize(StudyRow::from(m)).map_err(|e| io_error(&path, e))?;
    }
    wtr.flush().map_err(|e| io_error(&path, e))?;
    #[derive(Serialize)]
    struct Body<'a> {
        metrics: &'a [StudyMetrics],
    }
    write_json(&envelope(cfg, Body { metrics: &metrics }), Some(&out.join("study.json")))
}
