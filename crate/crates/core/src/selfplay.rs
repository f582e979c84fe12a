//! Self-play data generation and the training loop: sampler workers play
//! games with the latest published network, a bounded pool buffers samples,
//! a trainer consumes batches, and a model pool publishes snapshots.
//!
//! The loop runs in generations. Each generation plays its games in parallel
//! against one snapshot, then trains. Game seeds derive from the master seed
//! and the game index, so results do not depend on the worker count.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Condvar, Mutex, RwLock};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::arena::{run_pairing, ArenaError};
use crate::game::{DraftState, GameConfig, HeroId, WinRate};
use crate::policy_value::{make_targets, Evaluator, PolicyValueError, PolicyValueNet, PvHyper, PvTrainer, TargetMode, TrainingSample};
use crate::search::{sample_action, RootNoise, SearchError, SearchParams, SearchTree, ValueMode};
use crate::stats::derive_seed;
use crate::strategy::{Strategy, StrategyKind};

#[derive(Debug, Error)]
pub enum SelfPlayError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Model(#[from] PolicyValueError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("self-play variant must be JueWuBase or JueWuDraft")]
    Variant,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One finished self-play game.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub config_hash: u64,
    pub picks: Vec<HeroId>,
    /// Root visit distribution over all heroes at each step.
    pub pi: Vec<Vec<f32>>,
    /// Camp one's predicted win rate per round.
    pub phi: Vec<f64>,
    /// Network version that played both sides.
    pub net_version: u64,
    pub seed: u64,
}

/// Plays a game with both sides searching the same snapshot. The first
/// `explore_steps` picks are sampled from π at τ = 1, the rest are argmax.
pub fn play_selfplay_game(
    evaluator: &dyn Evaluator,
    predictor: &dyn WinRate,
    config: &Arc<GameConfig>,
    params: &SearchParams,
    explore_steps: usize,
    seed: u64,
    net_version: u64,
) -> Result<GameRecord, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DraftState::new(config.clone());
    let mut record = GameRecord {
        config_hash: config.fingerprint(),
        net_version,
        seed,
        ..GameRecord::default()
    };
    while !state.is_terminal() {
        let mut p = params.clone();
        p.seed = rng.random();
        let mut tree = SearchTree::new(state.clone())?;
        let r = tree.search(evaluator, predictor, &p, None)?;
        let pi = r.pi(1.0);
        let hero = if state.t() < explore_steps { sample_action(&pi, 1.0, &mut rng) } else { r.best() };
        record.pi.push(r.pi_dense(1.0, config.n_heroes()));
        record.picks.push(hero);
        state = state.apply(hero)?;
    }
    for d in 0..config.rounds() {
        record.phi.push(state.round_winrate(d, predictor)?);
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    /// Evict the oldest samples; batches are drawn with replacement across steps.
    DropOldest,
    /// Producers wait for room; sampled items are removed.
    Block,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounters {
    pub produced: u64,
    pub consumed: u64,
    pub dropped: u64,
}

struct PoolInner {
    items: VecDeque<(TrainingSample, u64)>,
    counters: PoolCounters,
}

/// Bounded FIFO of training samples with uniform batch sampling.
pub struct SamplePool {
    capacity: usize,
    overflow: Overflow,
    inner: Mutex<PoolInner>,
    room: Condvar,
}

impl SamplePool {
    pub fn new(capacity: usize, overflow: Overflow) -> Self {
        SamplePool {
            capacity: capacity.max(1),
            overflow,
            inner: Mutex::new(PoolInner {
                items: VecDeque::new(),
                counters: PoolCounters::default(),
            }),
            room: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.inner.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counters(&self) -> PoolCounters {
        self.inner.lock().counters
    }

    /// Adds samples produced by network `version`.
    pub fn push(&self, samples: impl IntoIterator<Item = TrainingSample>, version: u64) {
        let mut g = self.inner.lock();
        for s in samples {
            if g.items.len() >= self.capacity {
                match self.overflow {
                    Overflow::DropOldest => {
                        g.items.pop_front();
                        g.counters.dropped += 1;
                    }
                    Overflow::Block => {
                        while g.items.len() >= self.capacity {
                            self.room.wait(&mut g);
                        }
                    }
                }
            }
            g.items.push_back((s, version));
            g.counters.produced += 1;
        }
    }

    /// Up to `k` distinct samples drawn uniformly, with their producing versions.
    pub fn sample_batch<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<(TrainingSample, u64)> {
        let mut g = self.inner.lock();
        let n = g.items.len();
        let k = k.min(n);
        let mut idx = index::sample(rng, n, k).into_vec();
        let out: Vec<(TrainingSample, u64)> = match self.overflow {
            Overflow::DropOldest => idx.iter().map(|&i| g.items[i].clone()).collect(),
            Overflow::Block => {
                idx.sort_unstable_by(|a, b| b.cmp(a));
                let taken: Vec<_> = idx.iter().map(|&i| g.items.remove(i).expect("index in range")).collect();
                self.room.notify_all();
                taken
            }
        };
        g.counters.consumed += out.len() as u64;
        out
    }
}

/// Latest published network; readers see a whole snapshot, old or new.
pub struct ModelPool {
    current: RwLock<Arc<(u64, PolicyValueNet)>>,
    out_dir: Option<PathBuf>,
}

impl ModelPool {
    pub fn new(initial: PolicyValueNet, out_dir: Option<PathBuf>) -> Self {
        ModelPool {
            current: RwLock::new(Arc::new((0, initial))),
            out_dir,
        }
    }

    pub fn latest(&self) -> Arc<(u64, PolicyValueNet)> {
        self.current.read().clone()
    }

    pub fn version(&self) -> u64 {
        self.current.read().0
    }

    /// Publishes `net` as the next version; writes `pv_v{N}.jwd` when an output directory is set.
    pub fn publish(&self, net: PolicyValueNet) -> Result<u64, PolicyValueError> {
        let version = self.version() + 1;
        if let Some(dir) = &self.out_dir {
            let mut meta = BTreeMap::new();
            meta.insert("version".to_string(), serde_json::json!(version));
            net.save(&dir.join(format!("pv_v{version}.jwd")), None, meta)?;
        }
        *self.current.write() = Arc::new((version, net));
        Ok(version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// JueWuDraft (long-term targets and search) or JueWuBase (per-round).
    pub variant: StrategyKind,
    pub workers: usize,
    pub games: usize,
    pub games_per_generation: usize,
    pub pool_capacity: usize,
    pub overflow: Overflow,
    pub train_steps_per_generation: usize,
    /// Publish after this many trainer steps; 0 never publishes.
    pub publish_every: usize,
    /// Trainer waits until the pool holds this many samples.
    pub min_pool: usize,
    pub explore_steps: usize,
    pub search: SearchParams,
    pub hyper: PvHyper,
    /// Probe the current network against RD every this many generations; 0 disables.
    pub probe_every: usize,
    pub probe_games: usize,
    pub probe_iterations: u32,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            variant: StrategyKind::JueWuDraft,
            workers: 1,
            games: 5000,
            games_per_generation: 50,
            pool_capacity: 20_000,
            overflow: Overflow::DropOldest,
            train_steps_per_generation: 20,
            publish_every: 20,
            min_pool: 400,
            explore_steps: 1,
            search: SearchParams {
                iterations: 512,
                noise: Some(RootNoise::default()),
                ..SearchParams::default()
            },
            hyper: PvHyper::default(),
            probe_every: 0,
            probe_games: 40,
            probe_iterations: 128,
            seed: 0,
            out_dir: None,
        }
    }
}

impl Schedule {
    fn modes(&self) -> Result<(ValueMode, TargetMode), SelfPlayError> {
        match self.variant {
            StrategyKind::JueWuDraft => Ok((ValueMode::LongTerm, TargetMode::LongTerm)),
            StrategyKind::JueWuBase => Ok((ValueMode::RoundOnly, TargetMode::PerRound)),
            _ => Err(SelfPlayError::Variant),
        }
    }
}

/// One JSON line per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub generation: usize,
    pub step: usize,
    pub games: usize,
    pub version: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub total_loss: f64,
    pub pool_size: usize,
    pub pool: PoolCounters,
    pub discarded_games: usize,
    /// Mean versions between a consumed sample's producer and the trained net.
    pub mean_sample_lag: f64,
    pub max_sample_lag: u64,
    pub probe_winrates: BTreeMap<String, f64>,
}

pub struct TrainOutcome {
    pub model: PolicyValueNet,
    pub version: u64,
    pub metrics: Vec<MetricsLine>,
    pub pool: PoolCounters,
}

/// Runs self-play training until `schedule.games` games are played.
pub fn training_loop(
    schedule: &Schedule,
    predictor: Arc<dyn WinRate>,
    config: &Arc<GameConfig>,
    initial: Option<PolicyValueNet>,
    mut metrics_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome, SelfPlayError> {
    let (value_mode, target_mode) = schedule.modes()?;
    let model = match initial {
        Some(m) => {
            m.check_config(config)?;
            m
        }
        None => PolicyValueNet::new(config, schedule.hyper.hidden.clone(), derive_seed(schedule.seed, &[0]))?,
    };
    if let Some(dir) = &schedule.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let models = ModelPool::new(model.clone(), schedule.out_dir.clone());
    let pool = SamplePool::new(schedule.pool_capacity, schedule.overflow);
    let mut trainer = PvTrainer::new(model, &schedule.hyper);
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(schedule.workers.max(1))
        .build()
        .map_err(|e| SelfPlayError::Pool(e.to_string()))?;
    let mut search = schedule.search.clone();
    search.value_mode = value_mode;
    search.workers = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(schedule.seed, &[1]));
    let mut metrics = Vec::new();
    let mut games = 0;
    let mut step = 0;
    let mut discarded = 0;
    for generation in 0.. {
        if games >= schedule.games {
            break;
        }
        let n = schedule.games_per_generation.max(1).min(schedule.games - games);
        let snapshot = models.latest();
        let (version, net) = (&snapshot.0, &snapshot.1);
        let records: Vec<Result<GameRecord, SearchError>> = threads.install(|| {
            (games..games + n)
                .into_par_iter()
                .map(|g| {
                    play_selfplay_game(
                        net,
                        predictor.as_ref(),
                        config,
                        &search,
                        schedule.explore_steps,
                        derive_seed(schedule.seed, &[2, g as u64]),
                        *version,
                    )
                })
                .collect()
        });
        games += n;
        for r in records {
            match r.map_err(SelfPlayError::from).and_then(|rec| Ok(make_targets(&rec, config, predictor.as_ref(), target_mode)?)) {
                Ok(samples) => pool.push(samples, *version),
                Err(e) => {
                    warn!(error = %e, "self-play game discarded");
                    discarded += 1;
                }
            }
        }
        let (mut pl, mut vl, mut tl, mut steps_run) = (0.0, 0.0, 0.0, 0usize);
        let (mut lag_sum, mut lag_n, mut lag_max) = (0u64, 0u64, 0u64);
        if pool.len() >= schedule.min_pool.min(schedule.pool_capacity) {
            for _ in 0..schedule.train_steps_per_generation {
                let batch = pool.sample_batch(schedule.hyper.batch_size, &mut rng);
                if batch.is_empty() {
                    break;
                }
                let current = models.version();
                for (_, v) in &batch {
                    let lag = current - v;
                    lag_sum += lag;
                    lag_n += 1;
                    lag_max = lag_max.max(lag);
                }
                let refs: Vec<&TrainingSample> = batch.iter().map(|(s, _)| s).collect();
                let report = trainer.step(&refs)?;
                pl += report.cross_entropy;
                vl += report.squared_error;
                tl += report.total;
                steps_run += 1;
                step += 1;
                if schedule.publish_every > 0 && step % schedule.publish_every == 0 {
                    models.publish(trainer.model.clone())?;
                }
            }
        }
        let mut probe_winrates = BTreeMap::new();
        if schedule.probe_every > 0 && (generation + 1) % schedule.probe_every == 0 {
            let latest = models.latest();
            let probe = Strategy::juewu_draft(
                Arc::new(latest.1.clone()),
                SearchParams {
                    iterations: schedule.probe_iterations,
                    value_mode,
                    ..SearchParams::default()
                },
            )
            .named("current");
            let r = run_pairing(&probe, &Strategy::random(), schedule.probe_games.max(2) & !1, predictor.as_ref(), config, derive_seed(schedule.seed, &[3, generation as u64]))?;
            probe_winrates.insert("RD".to_string(), r.mean);
        }
        let k = steps_run.max(1) as f64;
        let line = MetricsLine {
            generation,
            step,
            games,
            version: models.version(),
            policy_loss: pl / k,
            value_loss: vl / k,
            total_loss: tl / k,
            pool_size: pool.len(),
            pool: pool.counters(),
            discarded_games: discarded,
            mean_sample_lag: if lag_n > 0 { lag_sum as f64 / lag_n as f64 } else { 0.0 },
            max_sample_lag: lag_max,
            probe_winrates,
        };
        info!(generation, step, games, policy_loss = line.policy_loss, value_loss = line.value_loss, "self-play generation");
        if let Some(w) = metrics_sink.as_deref_mut() {
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        metrics.push(line);
    }
    let version = models.version();
    Ok(TrainOutcome {
        model: trainer.model,
        version,
        metrics,
        pool: pool.counters(),
    })
}
