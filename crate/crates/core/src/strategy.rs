//! Drafting strategies behind one interface: random (RD), highest win rate
//! (HWR), round-local UCT (DraftArtist), and net-guided PUCT without or with
//! the long-term value mechanism (JueWuBase, JueWuDraft).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DraftState, GameConfig, GameError, HeroId, WinRate};
use crate::policy_value::{Evaluator, PolicyValueError, PolicyValueNet, UniformEvaluator};
use crate::search::{sample_action, SearchError, SearchParams, SearchResult, SearchTree, ValueMode};
use crate::uct::{uct_search, UctParams};
use crate::winrate::HeroStats;

/// Temperature of HWR's softmax over hero win rates at the sampled first step.
pub const HWR_FIRST_PICK_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Model(#[from] PolicyValueError),
    #[error("{0} needs {1}")]
    Missing(&'static str, &'static str),
    #[error("hero stats cover {got} heroes, config has {want}")]
    StatsSize { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "RD")]
    Random,
    #[serde(rename = "HWR")]
    HighestWinRate,
    DraftArtist,
    JueWuBase,
    JueWuDraft,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Random => "RD",
            StrategyKind::HighestWinRate => "HWR",
            StrategyKind::DraftArtist => "DraftArtist",
            StrategyKind::JueWuBase => "JueWuBase",
            StrategyKind::JueWuDraft => "JueWuDraft",
        }
    }

    pub fn is_tree_search(self) -> bool {
        matches!(self, StrategyKind::DraftArtist | StrategyKind::JueWuBase | StrategyKind::JueWuDraft)
    }
}

/// Where a move is being made; decides exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayMode {
    Arena,
    SelfPlay,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampling {
    /// Take the best action.
    Argmax,
    /// Sample from the search distribution at this temperature.
    Visits { tau: f64 },
    /// Uniform over legal heroes.
    Uniform,
    /// Softmax over hero win rates at this temperature.
    WinRateSoftmax { temperature: f64 },
}

/// First step of an arena or self-play game is sampled; everything else, and
/// every assistant move, is deterministic.
pub fn move_schedule(kind: StrategyKind, step: usize, mode: PlayMode) -> Sampling {
    if mode == PlayMode::Assistant || step > 0 {
        return Sampling::Argmax;
    }
    match kind {
        StrategyKind::Random => Sampling::Uniform,
        StrategyKind::HighestWinRate => Sampling::WinRateSoftmax {
            temperature: HWR_FIRST_PICK_TEMPERATURE,
        },
        _ => Sampling::Visits { tau: 1.0 },
    }
}

/// JSON description of a strategy; checkpoint paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub uct: UctParams,
    #[serde(default)]
    pub search: SearchParams,
    /// Policy/value checkpoint; a uniform evaluator is used when absent.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl StrategySpec {
    pub fn of(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            name: None,
            uct: UctParams::default(),
            search: SearchParams::default(),
            checkpoint: None,
        }
    }

    pub fn build(&self, config: &GameConfig, stats: Option<&HeroStats>, base_dir: &Path) -> Result<Strategy, StrategyError> {
        let mut s = match self.kind {
            StrategyKind::Random => Strategy::random(),
            StrategyKind::HighestWinRate => {
                let stats = stats.ok_or(StrategyError::Missing("HWR", "hero stats"))?;
                if stats.n_heroes() != config.n_heroes() {
                    return Err(StrategyError::StatsSize {
                        got: stats.n_heroes(),
                        want: config.n_heroes(),
                    });
                }
                Strategy::highest_winrate(stats.winrates())
            }
            StrategyKind::DraftArtist => Strategy::draft_artist(self.uct),
            StrategyKind::JueWuBase | StrategyKind::JueWuDraft => {
                let evaluator: Arc<dyn Evaluator> = match &self.checkpoint {
                    Some(p) => Arc::new(PolicyValueNet::load(&base_dir.join(p), config)?),
                    None => Arc::new(UniformEvaluator),
                };
                if self.kind == StrategyKind::JueWuBase {
                    Strategy::juewu_base(evaluator, self.search.clone())
                } else {
                    Strategy::juewu_draft(evaluator, self.search.clone())
                }
            }
        };
        if let Some(n) = &self.name {
            s.name = n.clone();
        }
        Ok(s)
    }
}

#[derive(Clone)]
enum Engine {
    Random,
    Hwr(Arc<Vec<f64>>),
    Uct(UctParams),
    Puct { evaluator: Arc<dyn Evaluator>, params: SearchParams },
}

/// A ready strategy. Cheap to clone; clones share networks but not trees.
#[derive(Clone)]
pub struct Strategy {
    pub name: String,
    pub kind: StrategyKind,
    engine: Engine,
}

impl std::fmt::Debug for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Strategy").field("name", &self.name).field("kind", &self.kind).finish()
    }
}

#[derive(Debug, Clone)]
pub struct Pick {
    pub hero: HeroId,
    pub latency: Duration,
    pub search: Option<SearchResult>,
}

impl Strategy {
    fn with(kind: StrategyKind, engine: Engine) -> Self {
        Strategy {
            name: kind.label().to_string(),
            kind,
            engine,
        }
    }

    pub fn random() -> Self {
        Self::with(StrategyKind::Random, Engine::Random)
    }

    /// `winrates[h]` is hero `h`'s historical win rate.
    pub fn highest_winrate(winrates: Vec<f64>) -> Self {
        Self::with(StrategyKind::HighestWinRate, Engine::Hwr(Arc::new(winrates)))
    }

    pub fn draft_artist(params: UctParams) -> Self {
        Self::with(StrategyKind::DraftArtist, Engine::Uct(params))
    }

    pub fn juewu_base(evaluator: Arc<dyn Evaluator>, mut params: SearchParams) -> Self {
        params.value_mode = ValueMode::RoundOnly;
        Self::with(StrategyKind::JueWuBase, Engine::Puct { evaluator, params })
    }

    pub fn juewu_draft(evaluator: Arc<dyn Evaluator>, mut params: SearchParams) -> Self {
        params.value_mode = ValueMode::LongTerm;
        Self::with(StrategyKind::JueWuDraft, Engine::Puct { evaluator, params })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn search_params(&self) -> Option<&SearchParams> {
        match &self.engine {
            Engine::Puct { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn search_params_mut(&mut self) -> Option<&mut SearchParams> {
        match &mut self.engine {
            Engine::Puct { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn evaluator(&self) -> Option<&Arc<dyn Evaluator>> {
        match &self.engine {
            Engine::Puct { evaluator, .. } => Some(evaluator),
            _ => None,
        }
    }

    /// Chooses a legal hero for the player to move.
    pub fn pick<R: RngCore>(&self, state: &DraftState, predictor: &dyn WinRate, mode: PlayMode, rng: &mut R) -> Result<Pick, StrategyError> {
        self.pick_with(state, predictor, mode, rng, None)
    }

    /// As [`Strategy::pick`], with an optional cancel flag for the search.
    pub fn pick_with<R: RngCore>(
        &self,
        state: &DraftState,
        predictor: &dyn WinRate,
        mode: PlayMode,
        rng: &mut R,
        cancel: Option<&std::sync::atomic::AtomicBool>,
    ) -> Result<Pick, StrategyError> {
        let start = Instant::now();
        let legal = state.legal_actions()?;
        let sampling = move_schedule(self.kind, state.t(), mode);
        let (hero, search) = match &self.engine {
            Engine::Random => (*legal.choose(rng).expect("legal move exists"), None),
            Engine::Hwr(rates) => {
                let hero = match sampling {
                    Sampling::WinRateSoftmax { temperature } => {
                        let max = legal.iter().map(|&h| rates[h as usize]).fold(f64::NEG_INFINITY, f64::max);
                        let pi: Vec<(HeroId, f64)> = legal
                            .iter()
                            .map(|&h| (h, ((rates[h as usize] - max) / temperature).exp()))
                            .collect();
                        sample_action(&pi, 1.0, rng)
                    }
                    _ => {
                        let mut best = legal[0];
                        for &h in &legal[1..] {
                            if rates[h as usize] > rates[best as usize] {
                                best = h;
                            }
                        }
                        best
                    }
                };
                (hero, None)
            }
            Engine::Uct(params) => {
                let r = uct_search(state, predictor, params, rng)?;
                let hero = match sampling {
                    Sampling::Visits { tau } => {
                        let total: u32 = r.actions.iter().map(|a| a.1).sum();
                        let pi: Vec<(HeroId, f64)> = r.actions.iter().map(|a| (a.0, a.1 as f64 / total as f64)).collect();
                        sample_action(&pi, tau, rng)
                    }
                    _ => r.best,
                };
                (hero, None)
            }
            Engine::Puct { evaluator, params } => {
                let mut p = params.clone();
                p.seed = rng.random();
                if mode != PlayMode::SelfPlay {
                    p.noise = None;
                }
                let mut tree = SearchTree::new(state.clone())?;
                let r = tree.search(evaluator.as_ref(), predictor, &p, cancel)?;
                let hero = match sampling {
                    Sampling::Visits { tau } => sample_action(&r.pi(tau), tau, rng),
                    _ => r.best(),
                };
                (hero, Some(r))
            }
        };
        debug_assert!(legal.contains(&hero));
        Ok(Pick {
            hero,
            latency: start.elapsed(),
            search,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::{OracleParams, SyntheticOracle};
    use crate::search::CountingWinRate;

    fn all_strategies() -> Vec<Strategy> {
        let fast = SearchParams {
            iterations: 30,
            ..SearchParams::default()
        };
        vec![
            Strategy::random(),
            Strategy::highest_winrate((0..6).map(|h| h as f64 / 10.0).collect()),
            Strategy::draft_artist(UctParams {
                iterations: 30,
                exploration: 1.0,
            }),
            Strategy::juewu_base(Arc::new(UniformEvaluator), fast.clone()),
            Strategy::juewu_draft(Arc::new(UniformEvaluator), fast),
        ]
    }

    fn walk(s: DraftState, f: &mut dyn FnMut(&DraftState)) {
        if s.is_terminal() {
            return;
        }
        f(&s);
        for a in s.legal_actions().unwrap() {
            walk(s.apply(a).unwrap(), f);
        }
    }

    #[test]
    fn every_strategy_is_legal_everywhere() {
        let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
        let cfg = Arc::new(GameConfig::new(6, 2, 2, order, GameConfig::alternating(2)).unwrap());
        let o = SyntheticOracle::sample(1, 6, OracleParams::new(1.0, 0.5, 0.5, 1)).unwrap();
        let strategies = all_strategies();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut visited = 0;
        walk(DraftState::new(cfg), &mut |s| {
            visited += 1;
            for st in &strategies {
                for mode in [PlayMode::Arena, PlayMode::Assistant] {
                    let p = st.pick(s, &o, mode, &mut rng).unwrap();
                    assert!(s.check_action(p.hero).is_ok(), "{} at {s}", st.name);
                }
            }
        });
        assert!(visited > 100);
    }

    #[test]
    fn rd_is_reproducible() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let s = DraftState::from_picks(cfg, &[0, 1, 2]).unwrap();
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let pick = |seed| Strategy::random().pick(&s, &o, PlayMode::Arena, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().hero;
        assert_eq!(pick(4), pick(4));
    }

    #[test]
    fn hwr_tie_break_and_no_predictor_calls() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = CountingWinRate::new(SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap());
        let mut rates = vec![0.0; 8];
        rates[0] = 0.6;
        rates[1] = 0.6;
        rates[2] = 0.4;
        let hwr = Strategy::highest_winrate(rates);
        let s = DraftState::from_picks(cfg, &[5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(hwr.pick(&s, &o, PlayMode::Arena, &mut rng).unwrap().hero, 0);
        for _ in 0..50 {
            Strategy::random().pick(&s, &o, PlayMode::Arena, &mut rng).unwrap();
        }
        assert_eq!(o.calls(), 0);
    }

    #[test]
    fn schedule() {
        assert_eq!(move_schedule(StrategyKind::JueWuDraft, 0, PlayMode::Arena), Sampling::Visits { tau: 1.0 });
        assert_eq!(move_schedule(StrategyKind::JueWuDraft, 0, PlayMode::SelfPlay), Sampling::Visits { tau: 1.0 });
        assert_eq!(
            move_schedule(StrategyKind::HighestWinRate, 0, PlayMode::Arena),
            Sampling::WinRateSoftmax { temperature: 0.1 }
        );
        assert_eq!(move_schedule(StrategyKind::Random, 0, PlayMode::Arena), Sampling::Uniform);
        for k in [StrategyKind::Random, StrategyKind::HighestWinRate, StrategyKind::DraftArtist, StrategyKind::JueWuBase, StrategyKind::JueWuDraft] {
            assert_eq!(move_schedule(k, 5, PlayMode::Arena), Sampling::Argmax);
            assert_eq!(move_schedule(k, 0, PlayMode::Assistant), Sampling::Argmax);
        }
    }

    #[test]
    fn first_pick_is_stochastic_in_arena() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let st = Strategy::juewu_draft(
            Arc::new(UniformEvaluator),
            SearchParams {
                iterations: 64,
                ..SearchParams::default()
            },
        );
        let s = DraftState::new(cfg);
        let mut seen = std::collections::BTreeSet::new();
        let mut det = std::collections::BTreeSet::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            seen.insert(st.pick(&s, &o, PlayMode::Arena, &mut rng).unwrap().hero);
            det.insert(st.pick(&s, &o, PlayMode::Assistant, &mut rng).unwrap().hero);
        }
        assert!(seen.len() > 1);
        assert_eq!(det.len(), 1);
    }

    #[test]
    fn spec_json() {
        let spec: StrategySpec = serde_json::from_str(r#"{"kind": "JueWuDraft", "search": {"iterations": 100}}"#).unwrap();
        assert_eq!(spec.search.iterations, 100);
        assert_eq!(spec.search.c_vl, 3.0);
        let cfg = GameConfig::small(8, 1).unwrap();
        let st = spec.build(&cfg, None, Path::new(".")).unwrap();
        assert_eq!(st.name, "JueWuDraft");
        let hwr: StrategySpec = serde_json::from_str(r#"{"kind": "HWR"}"#).unwrap();
        assert!(hwr.build(&cfg, None, Path::new(".")).is_err());
        let missing: StrategySpec = serde_json::from_str(r#"{"kind": "JueWuBase", "checkpoint": "nope.jwd"}"#).unwrap();
        assert!(missing.build(&cfg, None, Path::new(".")).is_err());
    }
}
