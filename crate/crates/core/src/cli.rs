//! Command-line harness: `estimate`, `oracle`, `baseline`, `sanity`, `sweep`.
//!
//! Every option can also come from a TOML file given by `--config`. Keys at
//! the top level apply to all commands; keys in a `[estimate]`, `[oracle]`,
//! ... table apply to that command only. A flag on the command line wins
//! over the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::baselines::{histogram_divergence, knn_kl, two_step_divergence};
use crate::data::{load_pair, Sample};
use crate::density::{DensitySpec, Scenario};
use crate::divergence::{augment_uniform, parse_phi_list, posterior_draws, BoxPlot, PhiSpec, PosteriorSummary};
use crate::error::Error;
use crate::oracle::mc_truth;
use crate::partition::Partition;
use crate::sampler::{derive_seed, run_chain, ChainConfig, ChainRng, ProposalKind, Trace};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cobpm", version, about = "Divergence estimation with coupled binary partitions")]
pub struct Cli {
    /// Master seed; every replicate and worker seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with default values for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Posterior summaries of the divergences between two samples.
    Estimate(EstimateArgs),
    /// Monte Carlo ground truth between two known densities.
    Oracle(OracleArgs),
    /// Nearest-neighbour, histogram and two-step reference estimates.
    Baseline(BaselineArgs),
    /// Learned partition and samples for two-dimensional test pairs.
    Sanity(SanityArgs),
    /// Estimates over a grid of sample sizes and estimators.
    Sweep(SweepArgs),
}

/// Where the two samples come from.
#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file of the first sample.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// CSV file of the second sample.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Density of the first sample, e.g. `beta:6,5`.
    #[arg(long)]
    pub p: Option<String>,
    /// Density of the second sample.
    #[arg(long)]
    pub q: Option<String>,
    /// Named pair of densities, e.g. `beta1d`.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Points drawn from each density.
    #[arg(long)]
    pub n: Option<usize>,
    /// Map CSV data into the unit cube with one shared per-axis range.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rescale: Option<bool>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct ChainArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Dirichlet concentration.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Depth penalty.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Probability of proposing a deeper partition.
    #[arg(long)]
    pub p_up: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// `guided` or `uniform`.
    #[arg(long)]
    pub proposal: Option<String>,
    /// Weight each depth by the inverse number of decision sequences.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ordering_penalty: Option<bool>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
    /// Comma list of discrepancies: tv,hellinger,kl,renyi:2.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Credible level of the reported interval.
    #[arg(long)]
    pub level: Option<f64>,
    /// Fraction of uniform points mixed into each sample.
    #[arg(long)]
    pub augment: Option<f64>,
    /// Write per-replica trace files.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trace: Option<bool>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    /// Monte Carlo draws.
    #[arg(long)]
    pub draws: Option<u64>,
    /// Independent random streams; fixes the result together with the seed.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
    /// Comma list from pc1, pc10, hist, twostep.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    /// Histogram bins per axis.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct SanityArgs {
    /// Built-in pair: `mixed` (p11, p12) or `nested` (p21, p22).
    #[arg(long)]
    pub pair: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma list of sample sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma list from cobpm, pc1, pc10, hist, twostep.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
}

/// Global settings after merging flags and the config file.
#[derive(Clone, Debug, Serialize)]
struct Global {
    seed: u64,
    out: PathBuf,
    threads: Option<usize>,
}

const GLOBAL_KEYS: [&str; 3] = ["seed", "out", "threads"];
const COMMANDS: [&str; 5] = ["estimate", "oracle", "baseline", "sanity", "sweep"];

fn keys_of<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn command_keys(name: &str) -> Vec<String> {
    match name {
        "estimate" => keys_of::<EstimateArgs>(),
        "oracle" => keys_of::<OracleArgs>(),
        "baseline" => keys_of::<BaselineArgs>(),
        "sanity" => keys_of::<SanityArgs>(),
        _ => keys_of::<SweepArgs>(),
    }
}

/// Parsed config file split into top-level keys and per-command tables.
#[derive(Default)]
struct ConfigFile {
    top: Map<String, Value>,
    sections: BTreeMap<String, Map<String, Value>>,
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut cfg = ConfigFile::default();
    let all_keys: Vec<String> = COMMANDS
        .iter()
        .flat_map(|c| command_keys(c))
        .chain(GLOBAL_KEYS.iter().map(|k| k.to_string()))
        .collect();
    for (key, value) in table {
        let value = serde_json::to_value(value).map_err(config_err)?;
        match value {
            Value::Object(m) if COMMANDS.contains(&key.as_str()) => {
                cfg.sections.insert(key, m);
            }
            Value::Object(_) => return Err(config_err(format!("unknown config section [{key}]"))),
            v if all_keys.contains(&key) => {
                cfg.top.insert(key, v);
            }
            _ => return Err(config_err(format!("unknown config key `{key}`"))),
        }
    }
    Ok(cfg)
}

/// Overlays the command-line values of `cli` on the file values for `name`.
fn merge<T: Serialize + DeserializeOwned + Default>(name: &str, cli: &T, file: &ConfigFile) -> CliResult<T> {
    let known = command_keys(name);
    let mut merged = Map::new();
    for (k, v) in &file.top {
        if known.contains(k) {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(section) = file.sections.get(name) {
        for (k, v) in section {
            if !known.contains(k) && !GLOBAL_KEYS.contains(&k.as_str()) {
                return Err(config_err(format!("unknown key `{k}` in [{name}]")));
            }
            if known.contains(k) {
                merged.insert(k.clone(), v.clone());
            }
        }
    }
    if let Value::Object(flags) = serde_json::to_value(cli).map_err(config_err)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| config_err(format!("[{name}]: {e}")))
}

fn global(cli: &Cli, name: &str, file: &ConfigFile) -> CliResult<Global> {
    let lookup = |key: &str| -> Option<&Value> {
        file.sections
            .get(name)
            .and_then(|s| s.get(key))
            .or_else(|| file.top.get(key))
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => lookup("seed").map_or(Ok(0), |v| v.as_u64().ok_or_else(|| config_err("seed must be a non-negative integer")))?,
    };
    let out = match &cli.out {
        Some(p) => p.clone(),
        None => lookup("out")
            .map(|v| v.as_str().map(PathBuf::from).ok_or_else(|| config_err("out must be a path")))
            .transpose()?
            .unwrap_or_else(|| PathBuf::from("cobpm-out")),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => lookup("threads")
            .map(|v| v.as_u64().map(|t| t as usize).ok_or_else(|| config_err("threads must be an integer")))
            .transpose()?,
    };
    if threads == Some(0) {
        return Err(config_err("threads must be at least 1"));
    }
    Ok(Global { seed, out, threads })
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| f(t).ok_or_else(|| config_err(format!("invalid {what} `{t}`"))))
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(config_err(format!("empty {what} list")));
    }
    Ok(items)
}

fn phis(spec: Option<&str>) -> CliResult<Vec<PhiSpec>> {
    parse_phi_list(spec.unwrap_or("all")).map_err(config_err)
}

fn chain_config(args: &ChainArgs, dim: usize, seed: u64) -> CliResult<ChainConfig> {
    let mut cfg = ChainConfig::for_dimension(dim);
    cfg.seed = seed;
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in = v;
    } else if args.iterations.is_some() && cfg.burn_in >= cfg.iterations {
        cfg.burn_in = cfg.iterations / 2;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    if let Some(v) = args.delta {
        cfg.hyper.delta = v;
    }
    if let Some(v) = args.sigma {
        cfg.hyper.sigma = v;
    }
    if let Some(v) = args.p_up {
        cfg.hyper.p_up = v;
    }
    if let Some(v) = args.max_depth {
        cfg.hyper.max_depth = v;
    }
    if let Some(v) = &args.proposal {
        cfg.proposal = v.parse::<ProposalKind>().map_err(config_err)?;
    }
    if let Some(v) = args.ordering_penalty {
        cfg.hyper.ordering_penalty = v;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn density(spec: &str) -> CliResult<DensitySpec> {
    spec.parse().map_err(config_err)
}

/// Resolved sample sources.
enum Source {
    Files(Sample, Sample),
    Densities { p: DensitySpec, q: DensitySpec, n: usize },
}

impl Source {
    fn resolve(d: &DataArgs) -> CliResult<Source> {
        match (&d.x, &d.y) {
            (Some(x), Some(y)) => {
                if d.p.is_some() || d.q.is_some() || d.scenario.is_some() {
                    return Err(config_err("give either --x/--y files or densities, not both"));
                }
                for f in [x, y] {
                    if !f.exists() {
                        return Err(config_err(format!("{} does not exist", f.display())));
                    }
                }
                let (xs, ys) = load_pair(x, y, d.rescale.unwrap_or(false)).map_err(config_err)?;
                if xs.dim() != ys.dim() {
                    return Err(config_err(format!("samples have dimensions {} and {}", xs.dim(), ys.dim())));
                }
                if xs.is_empty() || ys.is_empty() {
                    return Err(config_err("both samples need at least one point"));
                }
                Ok(Source::Files(xs, ys))
            }
            (None, None) => {
                let (p, q) = densities(d.p.as_deref(), d.q.as_deref(), d.scenario.as_deref())?;
                let n = d.n.unwrap_or(1000);
                if n < 2 {
                    return Err(config_err("n must be at least 2"));
                }
                Ok(Source::Densities { p, q, n })
            }
            _ => Err(config_err("--x and --y must be given together")),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Source::Files(x, _) => x.dim(),
            Source::Densities { p, .. } => p.dim(),
        }
    }

    fn draw(&self, seed: u64) -> crate::error::Result<(Sample, Sample)> {
        match self {
            Source::Files(x, y) => Ok((x.clone(), y.clone())),
            Source::Densities { p, q, n } => {
                let mut rng = ChainRng::seed_from_u64(seed);
                Ok((
                    p.sample(*n, crate::data::Label::X, &mut rng)?,
                    q.sample(*n, crate::data::Label::Y, &mut rng)?,
                ))
            }
        }
    }

    fn describe(&self) -> Value {
        match self {
            Source::Files(x, y) => json!({"kind": "files", "n_x": x.len(), "n_y": y.len(), "dim": x.dim(),
                "rescaling": x.rescaling()}),
            Source::Densities { p, q, n } => json!({"kind": "densities", "p": p.to_string(), "q": q.to_string(), "n": n}),
        }
    }
}

fn densities(p: Option<&str>, q: Option<&str>, scenario: Option<&str>) -> CliResult<(DensitySpec, DensitySpec)> {
    let base = scenario.map(Scenario::by_name).transpose().map_err(config_err)?;
    let p = match (p, &base) {
        (Some(s), _) => density(s)?,
        (None, Some(b)) => b.first.clone(),
        (None, None) => return Err(config_err("no first sample: give --x, --p or --scenario")),
    };
    let q = match (q, &base) {
        (Some(s), _) => density(s)?,
        (None, Some(b)) => b.second.clone(),
        (None, None) => return Err(config_err("no second sample: give --y, --q or --scenario")),
    };
    if p.dim() != q.dim() {
        return Err(config_err(format!("densities have dimensions {} and {}", p.dim(), q.dim())));
    }
    Ok((p, q))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> crate::error::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> crate::error::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> crate::error::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn manifest(command: &str, g: &Global, settings: &impl Serialize, extra: Value) -> Value {
    json!({
        "tool": "cobpm",
        "version": VERSION,
        "command": command,
        "seed": g.seed,
        "threads": g.threads,
        "settings": settings,
        "details": extra,
    })
}

/// Parses the process arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> std::process::ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cobpm: {e}");
            std::process::ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let file = load_config(cli.config.as_deref())?;
    let name = match &cli.command {
        Command::Estimate(_) => "estimate",
        Command::Oracle(_) => "oracle",
        Command::Baseline(_) => "baseline",
        Command::Sanity(_) => "sanity",
        Command::Sweep(_) => "sweep",
    };
    let g = global(cli, name, &file)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = g.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(Error::Invalid(e.to_string())))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => estimate(&g, &merge(name, a, &file)?),
        Command::Oracle(a) => oracle(&g, &merge(name, a, &file)?),
        Command::Baseline(a) => baseline(&g, &merge(name, a, &file)?),
        Command::Sanity(a) => sanity(&g, &merge(name, a, &file)?),
        Command::Sweep(a) => sweep(&g, &merge(name, a, &file)?),
    })
}

#[derive(Serialize)]
struct BoxRow<'a> {
    phi: &'a str,
    q1: f64,
    median: f64,
    q3: f64,
    whisker_low: f64,
    whisker_high: f64,
    n_outliers: usize,
    n: usize,
}

fn estimate(g: &Global, a: &EstimateArgs) -> CliResult<()> {
    let source = Source::resolve(&a.data)?;
    let phis = phis(a.phi.as_deref())?;
    let base = chain_config(&a.chain, source.dim(), 0)?;
    let replicas = a.replicas.unwrap_or(1);
    let level = a.level.unwrap_or(0.95);
    let augment = a.augment.unwrap_or(0.0);
    if replicas == 0 {
        return Err(config_err("replicas must be at least 1"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(config_err("level must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&augment) {
        return Err(config_err("augment must lie in [0, 1)"));
    }
    let write_trace = a.trace.unwrap_or(true);

    struct Replica {
        seed: u64,
        trace: Trace,
        draws: Vec<Vec<f64>>,
    }
    let runs: Vec<Replica> = (0..replicas)
        .into_par_iter()
        .map(|r| -> crate::error::Result<Replica> {
            let seed = derive_seed(g.seed, r as u64);
            let (mut x, mut y) = source.draw(derive_seed(seed, 0))?;
            if augment > 0.0 {
                let mut rng = ChainRng::seed_from_u64(derive_seed(seed, 2));
                (x, y) = augment_uniform(&x, &y, augment, &mut rng)?;
            }
            let cfg = ChainConfig { seed: derive_seed(seed, 1), ..base.clone() };
            let trace = run_chain(&x, &y, &cfg)?;
            let draws = phis.iter().map(|phi| posterior_draws(&trace, phi)).collect::<crate::error::Result<_>>()?;
            Ok(Replica { seed, trace, draws })
        })
        .collect::<crate::error::Result<_>>()?;

    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); phis.len()];
    let mut depth_hist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut replica_info = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        let dir = g.out.join(format!("replica_{r:03}"));
        let summaries: Vec<PosteriorSummary> = phis
            .iter()
            .zip(&run.draws)
            .map(|(phi, d)| PosteriorSummary::from_draws(&phi.name(), d.clone(), level))
            .collect::<crate::error::Result<_>>()?;
        write_json(&dir.join("summary.json"), &summaries)?;
        if write_trace {
            let mut buf = Vec::new();
            run.trace.write_jsonl(&mut buf)?;
            write_atomic(&dir.join("trace.jsonl"), &buf)?;
        }
        for (k, d) in run.draws.iter().enumerate() {
            pooled[k].extend_from_slice(d);
        }
        for (d, c) in &run.trace.depth_histogram {
            *depth_hist.entry(*d).or_default() += c;
        }
        if run.trace.depth_cap_hits > 0 {
            eprintln!(
                "cobpm: warning: replica {r} reached the depth cap {} times",
                run.trace.depth_cap_hits
            );
        }
        replica_info.push(json!({
            "replica": r,
            "seed": run.seed,
            "acceptance_rate": run.trace.acceptance_rate,
            "mean_depth": run.trace.mean_depth(),
            "depth_cap_hits": run.trace.depth_cap_hits,
            "map_sequence": run.trace.map_partition()?.sequence_string(),
        }));
    }
    let summaries: Vec<PosteriorSummary> = phis
        .iter()
        .zip(pooled)
        .map(|(phi, d)| PosteriorSummary::from_draws(&phi.name(), d, level))
        .collect::<crate::error::Result<_>>()?;
    write_json(&g.out.join("summary.json"), &summaries)?;
    let names: Vec<String> = phis.iter().map(PhiSpec::name).collect();
    let boxes = summaries
        .iter()
        .map(|s| BoxPlot::from_draws(&s.draws))
        .collect::<crate::error::Result<Vec<_>>>()?;
    write_csv(
        &g.out.join("boxplot.csv"),
        &["phi", "q1", "median", "q3", "whisker_low", "whisker_high", "n_outliers", "n"],
        names.iter().zip(&boxes).map(|(phi, b)| BoxRow {
            phi,
            q1: b.q1,
            median: b.median,
            q3: b.q3,
            whisker_low: b.whisker_low,
            whisker_high: b.whisker_high,
            n_outliers: b.n_outliers,
            n: b.n,
        }),
    )?;
    write_csv(&g.out.join("depth_histogram.csv"), &["depth", "count"], depth_hist.iter())?;
    write_json(
        &g.out.join("manifest.json"),
        &manifest(
            "estimate",
            g,
            a,
            json!({"data": source.describe(), "chain": base, "replicas": replica_info}),
        ),
    )?;
    println!("{}", serde_json::to_string_pretty(&summaries).map_err(Error::from)?);
    Ok(())
}

fn oracle(g: &Global, a: &OracleArgs) -> CliResult<()> {
    let (p, q) = densities(a.p.as_deref(), a.q.as_deref(), a.scenario.as_deref())?;
    let phis = phis(a.phi.as_deref())?;
    let draws = a.draws.unwrap_or(10_000_000);
    let workers = a.workers.unwrap_or(16);
    if draws < 2 || workers == 0 {
        return Err(config_err("need at least 2 draws and 1 worker"));
    }
    let results = phis
        .iter()
        .map(|phi| mc_truth(&p, &q, phi, draws, g.seed, workers))
        .collect::<crate::error::Result<Vec<_>>>()?;
    write_json(&g.out.join("oracle.json"), &results)?;
    write_json(
        &g.out.join("manifest.json"),
        &manifest("oracle", g, a, json!({"p": p.to_string(), "q": q.to_string()})),
    )?;
    println!("{}", serde_json::to_string_pretty(&results).map_err(Error::from)?);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
enum Estimator {
    Cobpm,
    Pc1,
    Pc10,
    Hist,
    Twostep,
}

impl Estimator {
    fn parse(s: &str) -> Option<Estimator> {
        Some(match s {
            "cobpm" => Estimator::Cobpm,
            "pc1" => Estimator::Pc1,
            "pc10" => Estimator::Pc10,
            "hist" => Estimator::Hist,
            "twostep" => Estimator::Twostep,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Estimator::Cobpm => "cobpm",
            Estimator::Pc1 => "pc1",
            Estimator::Pc10 => "pc10",
            Estimator::Hist => "hist",
            Estimator::Twostep => "twostep",
        }
    }
}

/// One estimator on one pair of samples: `(phi name, value)` for each
/// supported `phi`. Nearest-neighbour estimators only report KL.
fn run_estimator(
    e: Estimator,
    x: &Sample,
    y: &Sample,
    phis: &[PhiSpec],
    cfg: &ChainConfig,
    bins: usize,
) -> crate::error::Result<Vec<(String, f64)>> {
    let named = |v: Vec<f64>| phis.iter().map(PhiSpec::name).zip(v).collect();
    Ok(match e {
        Estimator::Cobpm => {
            let trace = run_chain(x, y, cfg)?;
            named(
                phis.iter()
                    .map(|phi| PosteriorSummary::from_draws(&phi.name(), posterior_draws(&trace, phi)?, 0.95).map(|s| s.median))
                    .collect::<crate::error::Result<_>>()?,
            )
        }
        Estimator::Pc1 | Estimator::Pc10 => {
            if !phis.iter().any(PhiSpec::is_kl) {
                return Ok(Vec::new());
            }
            let k = if e == Estimator::Pc1 { 1 } else { 10 };
            vec![(PhiSpec::KullbackLeibler.name(), knn_kl(x, y, k)?)]
        }
        Estimator::Hist => named(
            phis.iter()
                .map(|phi| histogram_divergence(x, y, bins, phi, cfg.hyper.delta))
                .collect::<crate::error::Result<_>>()?,
        ),
        Estimator::Twostep => named(two_step_divergence(x, y, cfg, phis)?),
    })
}

#[derive(Serialize)]
struct BaselineRow<'a> {
    replicate: usize,
    estimator: &'a str,
    phi: String,
    estimate: f64,
}

fn baseline(g: &Global, a: &BaselineArgs) -> CliResult<()> {
    let source = Source::resolve(&a.data)?;
    let phis = phis(a.phi.as_deref())?;
    let estimators = parse_list(a.estimators.as_deref().unwrap_or("pc1,pc10,hist,twostep"), "estimator", Estimator::parse)?;
    let bins = a.bins.unwrap_or(8);
    let replicas = a.replicas.unwrap_or(1);
    if bins == 0 || replicas == 0 {
        return Err(config_err("bins and replicas must be at least 1"));
    }
    let base = chain_config(&a.chain, source.dim(), 0)?;
    let rows: Vec<Vec<(usize, Estimator, String, f64)>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> crate::error::Result<_> {
            let seed = derive_seed(g.seed, r as u64);
            let (x, y) = source.draw(derive_seed(seed, 0))?;
            let cfg = ChainConfig { seed: derive_seed(seed, 1), ..base.clone() };
            let mut out = Vec::new();
            for &e in &estimators {
                for (phi, v) in run_estimator(e, &x, &y, &phis, &cfg, bins)? {
                    out.push((r, e, phi, v));
                }
            }
            Ok(out)
        })
        .collect::<crate::error::Result<_>>()?;
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    write_csv(
        &g.out.join("baseline.csv"),
        &["replicate", "estimator", "phi", "estimate"],
        rows.iter().map(|(r, e, phi, v)| BaselineRow {
            replicate: *r,
            estimator: e.name(),
            phi: phi.clone(),
            estimate: *v,
        }),
    )?;
    write_json(
        &g.out.join("manifest.json"),
        &manifest("baseline", g, a, json!({"data": source.describe(), "chain": base})),
    )?;
    for (r, e, phi, v) in &rows {
        println!("{r}\t{}\t{phi}\t{v:.6}", e.name());
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionRow {
    region: usize,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    n_x: usize,
    n_y: usize,
    m1: f64,
    m2: f64,
}

#[derive(Serialize)]
struct PointRow {
    sample: &'static str,
    x: f64,
    y: f64,
}

fn supporting_partition(d: &DensitySpec) -> Option<&Partition> {
    match d {
        DensitySpec::PiecewiseConstant(p) => Some(p.partition()),
        _ => None,
    }
}

fn sanity(g: &Global, a: &SanityArgs) -> CliResult<()> {
    let mut data = a.data.clone();
    if data.x.is_none() && data.p.is_none() && data.q.is_none() && data.scenario.is_none() {
        data.scenario = Some(match a.pair.as_deref().unwrap_or("nested") {
            "nested" => "sanity-nested".into(),
            "mixed" => "sanity-mixed".into(),
            other => return Err(config_err(format!("unknown pair `{other}`; use nested or mixed"))),
        });
    } else if a.pair.is_some() {
        return Err(config_err("--pair cannot be combined with other sample sources"));
    }
    if data.n.is_none() {
        data.n = Some(1000);
    }
    let source = Source::resolve(&data)?;
    if source.dim() != 2 {
        return Err(config_err(format!("sanity runs need two-dimensional data, got {}", source.dim())));
    }
    let cfg = chain_config(&a.chain, 2, derive_seed(g.seed, 1))?;
    let (x, y) = source.draw(derive_seed(g.seed, 0))?;
    let trace = run_chain(&x, &y, &cfg)?;
    let map = trace.map_partition()?;
    let counts = crate::data::count(&x, &y, &map)?;
    let delta = cfg.hyper.delta;
    let rows: Vec<RegionRow> = map
        .regions()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (n1, n2) = (counts.count(0, i), counts.count(1, i));
            let l = map.depth() as f64;
            RegionRow {
                region: i + 1,
                x_lo: r.lower(0),
                x_hi: r.upper(0),
                y_lo: r.lower(1),
                y_hi: r.upper(1),
                n_x: n1,
                n_y: n2,
                m1: (n1 as f64 + delta) / (x.len() as f64 + delta * l),
                m2: (n2 as f64 + delta) / (y.len() as f64 + delta * l),
            }
        })
        .collect();
    write_csv(
        &g.out.join("partition.csv"),
        &["region", "x_lo", "x_hi", "y_lo", "y_hi", "n_x", "n_y", "m1", "m2"],
        rows,
    )?;
    let points = x
        .points()
        .map(|p| PointRow { sample: "x", x: p[0], y: p[1] })
        .chain(y.points().map(|p| PointRow { sample: "y", x: p[0], y: p[1] }));
    write_csv(&g.out.join("samples.csv"), &["sample", "x", "y"], points)?;
    let refines = match &source {
        Source::Densities { p, q, .. } => match (supporting_partition(p), supporting_partition(q)) {
            (Some(a), Some(b)) => Some(map.refines(a) && map.refines(b)),
            _ => None,
        },
        Source::Files(..) => None,
    };
    let report = json!({
        "map_sequence": map.sequence_string(),
        "map_depth": map.depth(),
        "map_log_marginal": trace.map_log_marginal,
        "mean_depth": trace.mean_depth(),
        "acceptance_rate": trace.acceptance_rate,
        "refines_truth": refines,
    });
    write_json(&g.out.join("sanity.json"), &report)?;
    write_json(
        &g.out.join("manifest.json"),
        &manifest("sanity", g, a, json!({"data": source.describe(), "chain": cfg})),
    )?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    size: usize,
    estimator: &'a str,
    phi: &'a str,
    replicate: usize,
    estimate: f64,
}

#[derive(Serialize)]
struct SweepSummaryRow<'a> {
    size: usize,
    estimator: &'a str,
    phi: &'a str,
    mean: f64,
    sd: f64,
    n: usize,
}

fn sweep(g: &Global, a: &SweepArgs) -> CliResult<()> {
    let (p, q) = densities(a.p.as_deref(), a.q.as_deref(), a.scenario.as_deref())?;
    let phis = phis(a.phi.as_deref())?;
    let sizes = parse_list(a.sizes.as_deref().unwrap_or("50,150,450"), "size", |s| {
        s.parse::<usize>().ok().filter(|n| *n >= 2)
    })?;
    let estimators = parse_list(a.estimators.as_deref().unwrap_or("cobpm,pc1,pc10"), "estimator", Estimator::parse)?;
    let replicas = a.replicas.unwrap_or(10);
    let bins = a.bins.unwrap_or(8);
    if replicas == 0 || bins == 0 {
        return Err(config_err("replicas and bins must be at least 1"));
    }
    let base = chain_config(&a.chain, p.dim(), 0)?;
    let tasks: Vec<(usize, usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &n)| (0..replicas).map(move |r| (si, n, r)))
        .collect();
    type Row = (usize, Estimator, String, usize, f64);
    let results: Vec<Vec<Row>> = tasks
        .par_iter()
        .map(|&(si, n, r)| -> crate::error::Result<_> {
            let seed = derive_seed(derive_seed(g.seed, si as u64), r as u64);
            let src = Source::Densities { p: p.clone(), q: q.clone(), n };
            let (x, y) = src.draw(derive_seed(seed, 0))?;
            let cfg = ChainConfig { seed: derive_seed(seed, 1), ..base.clone() };
            let mut out = Vec::new();
            for &e in &estimators {
                for (phi, v) in run_estimator(e, &x, &y, &phis, &cfg, bins)? {
                    out.push((n, e, phi, r, v));
                }
            }
            Ok(out)
        })
        .collect::<crate::error::Result<_>>()?;
    let mut rows: Vec<_> = results.into_iter().flatten().collect();
    let phi_rank = |name: &str| phis.iter().position(|p| p.name() == name).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (a.0, a.1, phi_rank(&a.2), a.3)
            .cmp(&(b.0, b.1, phi_rank(&b.2), b.3))
    });
    write_csv(
        &g.out.join("sweep.csv"),
        &["size", "estimator", "phi", "replicate", "estimate"],
        rows.iter().map(|(n, e, phi, r, v)| SweepRow {
            size: *n,
            estimator: e.name(),
            phi,
            replicate: *r,
            estimate: *v,
        }),
    )?;
    let mut groups: Vec<((usize, Estimator, String), Vec<f64>)> = Vec::new();
    for (n, e, phi, _, v) in &rows {
        match groups.last_mut() {
            Some((key, vals)) if key.0 == *n && key.1 == *e && key.2 == *phi => vals.push(*v),
            _ => groups.push(((*n, *e, phi.clone()), vec![*v])),
        }
    }
    let summary: Vec<SweepSummaryRow> = groups
        .iter()
        .map(|((n, e, phi), vals)| {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepSummaryRow {
                size: *n,
                estimator: e.name(),
                phi,
                mean: m,
                sd,
                n: vals.len(),
            }
        })
        .collect();
    write_csv(
        &g.out.join("sweep_summary.csv"),
        &["size", "estimator", "phi", "mean", "sd", "n"],
        summary.iter(),
    )?;
    write_json(
        &g.out.join("manifest.json"),
        &manifest(
            "sweep",
            g,
            a,
            json!({"p": p.to_string(), "q": q.to_string(), "chain": base, "knn_min_distance": crate::baselines::MIN_DISTANCE}),
        ),
    )?;
    for s in &summary {
        println!("{}\t{}\t{}\t{:.6}\t{:.6}", s.size, s.estimator, s.phi, s.mean, s.sd);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cobpm").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "seed = 5\niterations = 300\n[estimate]\nburn_in = 100\nphi = \"kl\"\nsigma = 3.0\n[oracle]\ndraws = 10\n",
        )
        .unwrap();
        let cli = parse(&["estimate", "--config", path.to_str().unwrap(), "--sigma", "7", "--p", "uniform:1", "--q", "uniform:1"]);
        let file = load_config(cli.config.as_deref()).unwrap();
        let Command::Estimate(a) = &cli.command else { unreachable!() };
        let merged = merge("estimate", a, &file).unwrap();
        assert_eq!(merged.chain.iterations, Some(300));
        assert_eq!(merged.chain.burn_in, Some(100));
        assert_eq!(merged.chain.sigma, Some(7.0));
        assert_eq!(merged.phi.as_deref(), Some("kl"));
        assert_eq!(global(&cli, "estimate", &file).unwrap().seed, 5);
        let cli = parse(&["estimate", "--seed", "9"]);
        assert_eq!(global(&cli, "estimate", &file).unwrap().seed, 9);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "[estimate]\niteratons = 3\n").unwrap();
        let cli = parse(&["estimate", "--config", path.to_str().unwrap()]);
        let file = load_config(cli.config.as_deref()).unwrap();
        let Command::Estimate(a) = &cli.command else { unreachable!() };
        assert!(matches!(merge("estimate", a, &file), Err(CliError::Config(_))));
        fs::write(&path, "colour = 3\n").unwrap();
        assert!(load_config(Some(&path)).is_err());
        fs::write(&path, "[plot]\nx = 1\n").unwrap();
        assert!(load_config(Some(&path)).is_err());
    }

    #[test]
    fn chain_settings_are_validated() {
        let args = ChainArgs { iterations: Some(100), ..Default::default() };
        let cfg = chain_config(&args, 2, 0).unwrap();
        assert_eq!((cfg.iterations, cfg.burn_in), (100, 50));
        let bad = ChainArgs { delta: Some(-1.0), ..Default::default() };
        assert!(chain_config(&bad, 2, 0).is_err());
        let bad = ChainArgs { proposal: Some("greedy".into()), ..Default::default() };
        assert!(chain_config(&bad, 2, 0).is_err());
    }

    #[test]
    fn sources_need_consistent_inputs() {
        let d = DataArgs { x: Some("a.csv".into()), ..Default::default() };
        assert!(Source::resolve(&d).is_err());
        let d = DataArgs { p: Some("uniform:2".into()), q: Some("uniform:3".into()), ..Default::default() };
        assert!(Source::resolve(&d).is_err());
        let d = DataArgs { scenario: Some("beta1d".into()), n: Some(20), ..Default::default() };
        let s = Source::resolve(&d).unwrap();
        let (x, y) = s.draw(1).unwrap();
        assert_eq!((x.len(), y.len(), s.dim()), (20, 20, 1));
    }
}
