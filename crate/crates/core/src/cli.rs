//! Command-line surface: `train`, `eval`, `generate`, `bound`, `diagnose`
//! and `sweep`.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{self, FeatureView};
use crate::graphio::{self, DomainPair, Graph, GraphError};
use crate::model::{self, Variant};
use crate::train::{self, mean_std, TrainConfig, TrainError};

/// Default sweep grid for the three loss weights.
pub const DEFAULT_WEIGHT_GRID: [f64; 6] = [0.005, 0.01, 0.1, 0.5, 1.0, 5.0];
/// Default sweep grid for the kNN neighbor count.
pub const DEFAULT_K_GRID: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::FeatGraph(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gaa", version, about = "Attribute-driven graph domain adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a source/target pair and write metrics plus a checkpoint.
    Train(TrainArgs),
    /// Load a checkpoint and report accuracy on a labeled graph.
    Eval(EvalArgs),
    /// Write synthetic domain pairs to disk.
    Generate(GenerateArgs),
    /// Print the pairwise topology/attribute discrepancy bound as JSON.
    Bound(BoundArgs),
    /// Print average projected feature values for both views of each graph.
    Diagnose(DiagnoseArgs),
    /// Grid search over alpha, beta, tau and k; one CSV row per cell.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Source graph directory (edges.txt, features.csv, labels.txt).
    #[arg(long)]
    pub source: PathBuf,
    /// Target graph directory.
    #[arg(long)]
    pub target: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config mirroring the training config field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Config override, `key=value`; repeatable. `alpha`, `beta`, `tau` address the loss weights.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Repeat with seeds seed, seed+1, ... and summarize.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, default_value = "gaa-out")]
    pub out: PathBuf,
    /// Record wall-clock time in the metrics file (makes it non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled graph directory.
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    AttributeShift,
    Sbm,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: GenerateKind,
    /// Target cluster std; omitted means the grid 0.2, 0.4, ..., 2.0.
    #[arg(long)]
    pub std: Option<f64>,
    /// Source cluster std for attribute-shift pairs.
    #[arg(long, default_value_t = 0.4)]
    pub source_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Erdős–Rényi edge probability for attribute-shift topology.
    #[arg(long, default_value_t = 0.3)]
    pub edge_prob: f64,
    /// SBM intra-community probability (inter is p/10).
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// Number of SBM targets drawn against the one source.
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Divisor for both terms; defaults to the target node count.
    #[arg(long)]
    pub normalize: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Grid override `key=v1,v2,...` for alpha, beta, tau or k; repeatable.
    #[arg(long = "grid", value_name = "KEY=V1,V2")]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value = "gaa-out")]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Generate(a) => cmd_generate(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    }
}

// ── config assembly ──────────────────────────────────────────────────

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `key` (dotted path allowed; bare `alpha`/`beta`/`tau` address the
/// loss weights) in a config object.
pub fn apply_override(cfg: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let path: Vec<&str> = match key {
        "alpha" | "beta" | "tau" => vec!["weights", key],
        _ => key.split('.').collect(),
    };
    let mut node = cfg;
    for (i, part) in path.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("cannot set {key:?}: not an object")))?;
        if i + 1 == path.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj.entry(*part).or_insert_with(|| json!({}));
    }
    Err(CliError::Config(format!("empty override key {key:?}")))
}

/// Config file, then `--seed`/`--variant`, then `--set` overrides. Unknown
/// keys are rejected with their name.
pub fn build_config(args: &ConfigArgs) -> Result<TrainConfig, CliError> {
    let mut base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !v.is_object() {
                return Err(CliError::Config(format!("{}: config must be a JSON object", path.display())));
            }
            v
        }
        None => json!({}),
    };
    // validate the file on its own first so errors point at it
    serde_json::from_value::<TrainConfig>(base.clone()).map_err(|e| CliError::Config(format!("config: {e}")))?;
    if let Some(seed) = args.seed {
        apply_override(&mut base, "seed", json!(seed))?;
    }
    if let Some(v) = &args.variant {
        let variant: Variant = v.parse().map_err(CliError::Config)?;
        apply_override(&mut base, "variant", json!(variant))?;
    }
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
        apply_override(&mut base, k.trim(), parse_scalar(v.trim()))?;
    }
    let cfg: TrainConfig =
        serde_json::from_value(base).map_err(|e| CliError::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_pair(args: &PairArgs) -> Result<DomainPair, CliError> {
    let source = graphio::load_graph_dir(&args.source)?;
    let target = graphio::load_graph_dir(&args.target)?;
    Ok(DomainPair::new(source, target)?)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

// ── commands ─────────────────────────────────────────────────────────

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = build_config(&a.config)?;
    let pair = load_pair(&a.pair)?;
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;

    let runs = a.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Config("--runs must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let results = train::parallel_map(&seeds, |&seed| {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        train::train_gaa(&pair, &cfg)
    });

    let mut accuracies = Vec::new();
    for (seed, result) in seeds.iter().zip(results) {
        let (model, mut metrics) = result?;
        if !a.timing {
            metrics.wall_seconds = None;
        }
        let dir = if runs == 1 { a.out.clone() } else { a.out.join(format!("run_{seed}")) };
        fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        graphio::save_metrics(&metrics, &dir.join("metrics.json")).map_err(runtime)?;
        model::save_checkpoint(&model, &dir.join("model.ckpt")).map_err(runtime)?;
        let last = metrics.per_epoch.last().expect("epochs >= 1");
        match metrics.target_accuracy {
            Some(acc) => {
                accuracies.push(acc);
                writeln!(out, "seed={seed} loss_total={} target_accuracy={acc}", last.loss_total)
            }
            None => writeln!(out, "seed={seed} loss_total={}", last.loss_total),
        }
        .map_err(runtime)?;
    }
    if runs > 1 && !accuracies.is_empty() {
        let (mean, std) = mean_std(&accuracies);
        write_json(
            &a.out.join("summary.json"),
            &json!({ "seeds": seeds, "accuracies": accuracies, "mean": mean, "std": std }),
        )?;
        writeln!(out, "mean_accuracy={mean} std_accuracy={std}").map_err(runtime)?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = model::load_checkpoint(&a.checkpoint).map_err(|e| CliError::Config(e.to_string()))?;
    let graph = graphio::load_graph_dir(&a.graph)?;
    let acc = train::evaluate(&model, &graph)?;
    writeln!(out, "accuracy={acc}").map_err(runtime)
}

/// `0.2, 0.4, ..., 2.0`, built from integers so every value is exact.
pub fn std_grid() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i) / 5.0).collect()
}

fn save_pair(source: &Graph, target: &Graph, dir: &Path) -> Result<(), CliError> {
    graphio::save_graph_dir(source, &dir.join("source"))?;
    graphio::save_graph_dir(target, &dir.join("target"))?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    match a.kind {
        GenerateKind::AttributeShift => {
            let stds = match a.std {
                Some(s) => vec![s],
                None => std_grid(),
            };
            for std in &stds {
                let pair = graphio::attribute_shift_pair(a.source_std, *std, a.seed, a.nodes, a.dim, a.edge_prob)?;
                let dir = if a.std.is_some() { a.out.clone() } else { a.out.join(format!("std_{std:.1}")) };
                save_pair(&pair.source, &pair.target, &dir)?;
                writeln!(out, "{}", dir.display()).map_err(runtime)?;
            }
        }
        GenerateKind::Sbm => {
            if a.pairs == 0 {
                return Err(CliError::Config("--pairs must be >= 1".into()));
            }
            let source = graphio::gen_sbm(a.seed, a.nodes, a.p, a.dim)?;
            for i in 0..a.pairs {
                let target = graphio::gen_sbm(a.seed.wrapping_add(1 + i as u64), a.nodes, a.p, a.dim)?;
                let dir = if a.pairs == 1 { a.out.clone() } else { a.out.join(format!("pair_{i}")) };
                save_pair(&source, &target, &dir)?;
                writeln!(out, "{}", dir.display()).map_err(runtime)?;
            }
        }
    }
    Ok(())
}

fn cmd_bound(a: BoundArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let source = graphio::load_graph_dir(&a.pair.source)?;
    let target = graphio::load_graph_dir(&a.pair.target)?;
    let norm = a.normalize.unwrap_or(target.num_nodes());
    let report = analysis::proposition1_bound(&source, &target, norm).map_err(|e| CliError::Config(e.to_string()))?;
    let text = serde_json::to_string(&report).map_err(runtime)?;
    writeln!(out, "{text}").map_err(runtime)
}

fn cmd_diagnose(a: DiagnoseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let source = graphio::load_graph_dir(&a.pair.source)?;
    let target = graphio::load_graph_dir(&a.pair.target)?;
    writeln!(out, "graph,view,avg_feature_value").map_err(runtime)?;
    for (name, g) in [("source", &source), ("target", &target)] {
        for (view_name, view) in [("topology", FeatureView::Topology), ("attribute", FeatureView::Attribute)] {
            let v = analysis::avg_feature_value(g, view, a.k).map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(out, "{name},{view_name},{v}").map_err(runtime)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub k: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            alpha: DEFAULT_WEIGHT_GRID.to_vec(),
            beta: DEFAULT_WEIGHT_GRID.to_vec(),
            tau: DEFAULT_WEIGHT_GRID.to_vec(),
            k: DEFAULT_K_GRID.to_vec(),
        }
    }
}

impl SweepGrid {
    pub fn parse(specs: &[String]) -> Result<Self, CliError> {
        let mut grid = SweepGrid::default();
        for spec in specs {
            let (key, values) = spec
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("grid {spec:?} is not key=v1,v2,...")))?;
            let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if items.is_empty() {
                return Err(CliError::Config(format!("grid {key:?} has no values")));
            }
            let reals = || -> Result<Vec<f64>, CliError> {
                items
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("grid {key}: bad value {s:?}"))))
                    .collect()
            };
            match key.trim() {
                "alpha" => grid.alpha = reals()?,
                "beta" => grid.beta = reals()?,
                "tau" => grid.tau = reals()?,
                "k" => {
                    grid.k = items
                        .iter()
                        .map(|s| s.parse::<usize>().map_err(|_| CliError::Config(format!("grid k: bad value {s:?}"))))
                        .collect::<Result<_, _>>()?
                }
                other => return Err(CliError::Config(format!("unknown grid key {other:?}"))),
            }
        }
        Ok(grid)
    }

    /// Cells in row order: alpha outermost, k innermost.
    pub fn cells(&self) -> Vec<(f64, f64, f64, usize)> {
        let mut cells = Vec::new();
        for &a in &self.alpha {
            for &b in &self.beta {
                for &t in &self.tau {
                    for &k in &self.k {
                        cells.push((a, b, t, k));
                    }
                }
            }
        }
        cells
    }
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = build_config(&a.config)?;
    let grid = SweepGrid::parse(&a.grid)?;
    if a.runs == 0 {
        return Err(CliError::Config("--runs must be >= 1".into()));
    }
    let pair = load_pair(&a.pair)?;
    if pair.target.labels().is_none() {
        return Err(CliError::Config("sweep needs target labels".into()));
    }
    let cells = grid.cells();
    let mut jobs = Vec::with_capacity(cells.len() * a.runs);
    for (ci, &(alpha, beta, tau, k)) in cells.iter().enumerate() {
        for r in 0..a.runs as u64 {
            let mut c = cfg.clone();
            c.weights.alpha = alpha;
            c.weights.beta = beta;
            c.weights.tau = tau;
            c.k = k;
            c.seed = cfg.seed.wrapping_add(r);
            c.validate()?;
            jobs.push((ci, c));
        }
    }
    let results = train::parallel_map(&jobs, |(_, c)| {
        train::train_gaa(&pair, c).map(|(_, m)| m.target_accuracy.unwrap_or(f64::NAN))
    });
    let mut per_cell = vec![Vec::with_capacity(a.runs); cells.len()];
    for ((ci, _), r) in jobs.iter().zip(results) {
        per_cell[*ci].push(r?);
    }

    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let mut csv = String::from("alpha,beta,tau,k,mean_acc,std_acc\n");
    for (&(alpha, beta, tau, k), accs) in cells.iter().zip(&per_cell) {
        let (mean, std) = mean_std(accs);
        csv.push_str(&format!("{alpha},{beta},{tau},{k},{mean},{std}\n"));
    }
    let path = a.out.join("sweep.csv");
    fs::write(&path, &csv).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    writeln!(out, "{}", path.display()).map_err(runtime)
}
