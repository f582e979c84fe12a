mod config;
mod draft;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use herodraft_core::arena::run_tournament;
use herodraft_core::nn::save_checkpoint;
use herodraft_core::oracle::{generate_matches, MatchDataset, OracleParams, SyntheticOracle};
use herodraft_core::policy_value::PolicyValueNet;
use herodraft_core::selfplay::training_loop;
use herodraft_core::solver::{exact_solve, DEFAULT_LEAF_BUDGET};
use herodraft_core::stats::calibration_chi_squared;
use herodraft_core::winrate::{cross_validate, evaluate_metrics, train_winrate, WinrateHyper, WinratePredictor};
use herodraft_core::{DraftState, WinRate};
use herodraft_service::{AppState, ServiceConfig};
use serde_json::json;
use tracing::info;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "herodraft", version, about = "Multi-round hero drafting: data, training, evaluation and the draft assistant")]
struct Cli {
    /// Log at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic oracle and write a match CSV.
    GenData(GenData),
    /// Train the win-rate network on a match CSV.
    TrainWinrate(TrainWinrate),
    /// Cross-validate the network against the linear baseline.
    EvalWinrate(EvalWinrate),
    /// Self-play training of the policy/value network.
    SelfplayTrain(SelfplayTrain),
    /// Round-robin tournament between the configured strategies.
    Arena(Arena),
    /// Exact minimax value and optimal actions of a position.
    SolveExact(SolveExact),
    /// Interactive terminal draft against the engine.
    Draft(draft::DraftArgs),
    /// Run the HTTP session service.
    Serve(Serve),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    oracle_seed: u64,
    #[arg(long, default_value_t = 100_000)]
    matches: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_heroes: usize,
    #[arg(long, default_value_t = 5)]
    lineup_size: usize,
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, default_value_t = 0.5)]
    synergy: f64,
    #[arg(long, default_value_t = 0.5)]
    counter: f64,
    /// Also save the sampled oracle here.
    #[arg(long)]
    oracle_out: Option<PathBuf>,
    /// Match sampling seed; defaults to the oracle seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct Hyper {
    /// Hidden widths, comma separated; empty for the linear model.
    #[arg(long, value_delimiter = ',', default_value = "256,128")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Hyper {
    fn to_hyper(&self) -> WinrateHyper {
        WinrateHyper {
            hidden: self.hidden.clone(),
            lr: self.lr,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            l2: self.l2,
            seed: self.seed,
            ..WinrateHyper::default()
        }
    }
}

#[derive(Args)]
struct TrainWinrate {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct EvalWinrate {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Ground-truth oracle for the calibration test.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Score a saved checkpoint instead of cross-validating.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct SelfplayTrain {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint and metrics directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    games: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Start from this policy/value checkpoint.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// JueWuBase or JueWuDraft; overrides the config.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct Arena {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 200)]
    games: usize,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-game scores.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveExact {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Position as `a,b,c,d|e,f`; empty for the opening.
    #[arg(long, default_value = "")]
    state: String,
    #[arg(long, default_value_t = DEFAULT_LEAF_BUDGET)]
    budget: u64,
    /// Accepted for uniformity; the solver is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Serve {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 3000)]
    time_cap_ms: u64,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Accepted for uniformity; sessions take their own seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn gen_data(a: GenData) -> Result<()> {
    let oracle = SyntheticOracle::sample(a.oracle_seed, a.n_heroes, OracleParams::new(a.strength, a.synergy, a.counter, a.lineup_size))?;
    let ds = generate_matches(&oracle, a.matches, a.lineup_size, a.seed.unwrap_or(a.oracle_seed))?;
    ds.save_csv(&a.out)?;
    if let Some(p) = &a.oracle_out {
        oracle.save_json(p)?;
    }
    let wins = ds.records.iter().filter(|r| r.win).count();
    println!("wrote {} matches to {} (camp one won {:.3})", ds.len(), a.out.display(), wins as f64 / ds.len().max(1) as f64);
    Ok(())
}

fn save_predictor(pred: &WinratePredictor, path: &Path, meta: BTreeMap<String, serde_json::Value>) -> Result<()> {
    match pred {
        WinratePredictor::Learned(l) => Ok(save_checkpoint(path, &l.net, None, None, meta)?),
        _ => bail!("only learned predictors can be saved"),
    }
}

fn train(a: TrainWinrate) -> Result<()> {
    let ds = MatchDataset::load_csv(&a.data, None)?;
    let hyper = a.hyper.to_hyper();
    let (pred, log) = train_winrate(&ds, &hyper)?;
    for e in &log {
        println!("epoch {:>3}  train {:.5}  validation {:.5}", e.epoch, e.train_loss, e.validation_loss);
    }
    let mut meta = BTreeMap::new();
    meta.insert("hyper".into(), serde_json::to_value(&hyper)?);
    meta.insert("n_heroes".into(), json!(ds.n_heroes));
    save_predictor(&pred, &a.out, meta)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn eval(a: EvalWinrate) -> Result<()> {
    let ds = MatchDataset::load_csv(&a.data, None)?;
    let labels: Vec<bool> = ds.records.iter().map(|r| r.win).collect();
    let mut report = serde_json::Map::new();
    let seed = a.hyper.seed;
    if let Some(m) = &a.model {
        let pred = WinratePredictor::load_learned(m, true)?;
        let r = evaluate_metrics(&pred, &ds, a.folds, seed)?;
        println!("model      accuracy {:.4}  auc {:.4}  f1 {:.4}", r.accuracy, r.auc, r.f1);
        report.insert("model".into(), serde_json::to_value(&r)?);
    } else {
        let hyper = a.hyper.to_hyper();
        let nn = cross_validate(&ds, a.folds, seed, |train| Ok(train_winrate(train, &hyper)?.0))?;
        let lin_hyper = hyper.linear();
        let lin = cross_validate(&ds, a.folds, seed, |train| Ok(train_winrate(train, &lin_hyper)?.0))?;
        println!("network    accuracy {:.4}  auc {:.4}  f1 {:.4}", nn.accuracy, nn.auc, nn.f1);
        println!("linear     accuracy {:.4}  auc {:.4}  f1 {:.4}", lin.accuracy, lin.auc, lin.f1);
        let beats = nn.accuracy > lin.accuracy && nn.auc > lin.auc && nn.f1 > lin.f1;
        println!("network beats linear on all three: {beats}");
        let cal = calibration_chi_squared(&nn.out_of_fold, &labels, a.buckets);
        println!("network calibration  chi2 {:.2}  dof {}  p {:.4}", cal.statistic, cal.dof, cal.p_value);
        report.insert("network".into(), serde_json::to_value(&nn)?);
        report.insert("linear".into(), serde_json::to_value(&lin)?);
        report.insert("network_beats_linear".into(), json!(beats));
        report.insert("network_calibration".into(), serde_json::to_value(cal)?);
    }
    if let Some(o) = &a.oracle {
        let oracle = SyntheticOracle::load_json(o)?;
        let probs: Vec<f64> = ds.records.iter().map(|r| oracle.winrate(&r.camp1, &r.camp2)).collect();
        let cal = calibration_chi_squared(&probs, &labels, a.buckets);
        println!("oracle calibration   chi2 {:.2}  dof {}  p {:.4}", cal.statistic, cal.dof, cal.p_value);
        report.insert("oracle_calibration".into(), serde_json::to_value(cal)?);
    }
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn selfplay(a: SelfplayTrain) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let game = Arc::new(cfg.game()?);
    let predictor: Arc<dyn WinRate> = Arc::new(cfg.predictor(None)?);
    let mut schedule = cfg.selfplay.clone().unwrap_or_default();
    if let Some(g) = a.games {
        schedule.games = g;
    }
    if let Some(w) = a.workers {
        schedule.workers = w;
    }
    if let Some(s) = a.seed {
        schedule.seed = s;
    }
    if let Some(v) = &a.variant {
        schedule.variant = serde_json::from_value(json!(v)).with_context(|| format!("unknown variant {v}"))?;
    }
    schedule.out_dir = Some(a.out.clone());
    std::fs::create_dir_all(&a.out)?;
    let init = a.init.as_deref().map(|p| PolicyValueNet::load(p, &game)).transpose()?;
    let mut metrics = BufWriter::new(File::create(a.out.join("metrics.jsonl"))?);
    let outcome = training_loop(&schedule, predictor, &game, init, Some(&mut metrics))?;
    metrics.flush()?;
    let path = a.out.join("pv_final.jwd");
    let mut meta = BTreeMap::new();
    meta.insert("version".into(), json!(outcome.version));
    meta.insert("variant".into(), json!(schedule.variant.label()));
    outcome.model.save(&path, None, meta)?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "{} games, {} steps, version {}: policy loss {:.4}, value loss {:.4}",
            last.games, last.step, outcome.version, last.policy_loss, last.value_loss
        );
    }
    println!("saved {}", path.display());
    Ok(())
}

fn arena(a: Arena) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let game = Arc::new(cfg.game()?);
    let predictor = cfg.predictor(None)?;
    let stats = cfg.hero_stats()?;
    let strategies = cfg.strategies(&game, stats.as_ref())?;
    if a.games == 0 || a.games % 2 != 0 {
        bail!("--games must be a positive even number");
    }
    info!(strategies = strategies.len(), games = a.games, "tournament");
    let t = run_tournament(&strategies, a.games, &predictor, &game, a.seed)?;
    print!("{}", t.render_table());
    if let Some(p) = &a.out {
        write_json(p, &t)?;
    }
    if let Some(p) = &a.csv {
        t.write_csv(File::create(p)?)?;
    }
    Ok(())
}

fn solve(a: SolveExact) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let game = Arc::new(cfg.game()?);
    let predictor = cfg.predictor(a.oracle.as_deref())?;
    let state = DraftState::parse(game, &a.state)?;
    let sol = exact_solve(&state, &predictor, a.budget)?;
    println!("value {:.6}", sol.value);
    println!("optimal {:?}", sol.optimal);
    println!("{}", serde_json::to_string(&sol)?);
    Ok(())
}

async fn serve(a: Serve) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let state = AppState::new(service_settings(&cfg, a.oracle.as_deref(), a.time_cap_ms)?);
    let listener = tokio::net::TcpListener::bind(a.addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    herodraft_service::serve(listener, state).await?;
    Ok(())
}

pub(crate) fn service_settings(cfg: &RunConfig, oracle: Option<&Path>, time_cap_ms: u64) -> Result<ServiceConfig> {
    let mut s = ServiceConfig::new(cfg.game()?, cfg.predictor(oracle)?);
    s.hero_stats = cfg.hero_stats()?;
    if let Some(e) = &cfg.engine {
        s.engine = e.clone();
    }
    s.base_dir = cfg.base_dir.clone();
    s.time_cap_ms = time_cap_ms;
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainWinrate(a) => train(a),
        Command::EvalWinrate(a) => eval(a),
        Command::SelfplayTrain(a) => selfplay(a),
        Command::Arena(a) => arena(a),
        Command::SolveExact(a) => solve(a),
        Command::Draft(a) => tokio::runtime::Runtime::new()?.block_on(draft::run(a)),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if cli.verbose { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
