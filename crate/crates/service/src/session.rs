//! Session state machine. Everything here is synchronous; the HTTP layer
//! runs searches on the blocking pool and applies their results.

use std::collections::HashMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use herodraft_core::api::{EngineMove, Recommendation, Recommendations, SessionView};
use herodraft_core::policy_value::{Evaluator, UniformEvaluator};
use herodraft_core::search::{SearchParams, SearchResult, SearchTree, ValueMode};
use herodraft_core::stats::derive_seed;
use herodraft_core::strategy::{Pick, PlayMode, Strategy};
use herodraft_core::{Camp, DraftState, HeroId, Player, WinRate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actor {
    Human,
    Engine,
}

/// Search settings for recommendations.
#[derive(Clone)]
pub struct Advisor {
    pub evaluator: Arc<dyn Evaluator>,
    pub params: SearchParams,
}

impl Advisor {
    /// Uses the engine's network and search settings when it has them.
    pub fn for_engine(engine: &Strategy, fallback_iterations: u32) -> Advisor {
        match (engine.evaluator(), engine.search_params()) {
            (Some(e), Some(p)) => Advisor {
                evaluator: e.clone(),
                params: p.clone(),
            },
            _ => Advisor {
                evaluator: Arc::new(UniformEvaluator),
                params: SearchParams {
                    iterations: fallback_iterations,
                    value_mode: ValueMode::LongTerm,
                    ..SearchParams::default()
                },
            },
        }
    }
}

pub struct Session {
    pub id: u64,
    state: DraftState,
    human: Option<Player>,
    engine: Strategy,
    advisor: Advisor,
    seed: u64,
    plies: Vec<Actor>,
    last_engine: Option<EngineMove>,
    version: u64,
    cache: HashMap<Vec<HeroId>, Arc<SearchResult>>,
    replies: HashMap<u64, (String, serde_json::Value)>,
}

/// Everything a blocking engine move needs, detached from the session.
pub struct EngineJob {
    pub state: DraftState,
    pub engine: Strategy,
    pub seed: u64,
}

pub struct AdvisorJob {
    pub state: DraftState,
    pub advisor: Advisor,
}

impl Session {
    pub fn new(id: u64, state: DraftState, human: Option<Player>, engine: Strategy, advisor: Advisor, seed: u64) -> Session {
        Session {
            id,
            state,
            human,
            engine,
            advisor,
            seed,
            plies: Vec::new(),
            last_engine: None,
            version: 0,
            cache: HashMap::new(),
            replies: HashMap::new(),
        }
    }

    pub fn state(&self) -> &DraftState {
        &self.state
    }

    pub fn view(&self, predictor: &dyn WinRate) -> SessionView {
        SessionView::build(
            self.id,
            &self.state,
            predictor,
            self.human,
            &self.engine.name,
            self.last_engine.clone(),
            self.plies.len(),
            self.version,
        )
    }

    /// View of a state reached from this session without changing it.
    pub fn hypothetical_view(&self, state: &DraftState, predictor: &dyn WinRate) -> SessionView {
        SessionView::build(self.id, state, predictor, self.human, &self.engine.name, None, self.plies.len(), self.version)
    }

    /// The stored reply to `request_id`, if this exact request already succeeded.
    pub fn replay<T: DeserializeOwned>(&self, request_id: Option<u64>, fingerprint: &str) -> Result<Option<T>, ServiceError> {
        let Some(rid) = request_id else { return Ok(None) };
        match self.replies.get(&rid) {
            None => Ok(None),
            Some((fp, _)) if fp != fingerprint => Err(ServiceError::RequestReused(rid)),
            Some((_, body)) => serde_json::from_value(body.clone())
                .map(Some)
                .map_err(|e| ServiceError::Internal(e.to_string())),
        }
    }

    pub fn remember<T: Serialize>(&mut self, request_id: Option<u64>, fingerprint: &str, reply: &T) {
        if let Some(rid) = request_id {
            let body = serde_json::to_value(reply).expect("reply serializes");
            self.replies.insert(rid, (fingerprint.to_string(), body));
        }
    }

    fn is_human_turn(&self, p: Player) -> bool {
        self.human.is_none_or(|h| h == p)
    }

    /// Applies a human pick.
    pub fn human_pick(&mut self, hero: HeroId) -> Result<(), ServiceError> {
        let mover = self.state.to_move().map_err(|_| ServiceError::Terminal)?;
        if !self.is_human_turn(mover) {
            return Err(ServiceError::WrongTurn(format!("it is the engine's turn ({mover})")));
        }
        self.state = self.state.apply(hero).map_err(|e| ServiceError::Illegal(e.to_string()))?;
        self.plies.push(Actor::Human);
        self.version += 1;
        Ok(())
    }

    pub fn engine_job(&self) -> Result<EngineJob, ServiceError> {
        let mover = self.state.to_move().map_err(|_| ServiceError::Terminal)?;
        if self.is_human_turn(mover) {
            return Err(ServiceError::WrongTurn(format!("it is the human's turn ({mover})")));
        }
        Ok(EngineJob {
            state: self.state.clone(),
            engine: self.engine.clone(),
            seed: derive_seed(self.seed, &[self.state.t() as u64, 0]),
        })
    }

    /// Applies an engine move computed from `job`. Fails if the state moved on meanwhile.
    pub fn apply_engine(&mut self, job: &EngineJob, pick: &Pick) -> Result<EngineMove, ServiceError> {
        if self.state != job.state {
            return Err(ServiceError::WrongTurn("the draft changed during the engine search".into()));
        }
        let player = self.state.to_move().map_err(|_| ServiceError::Terminal)?;
        self.state = self.state.apply(pick.hero).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let mv = EngineMove {
            hero_id: pick.hero,
            player,
            latency_ms: pick.latency.as_secs_f64() * 1e3,
            iterations: pick.search.as_ref().map(|s| s.diagnostics.iterations),
            timed_out: pick.search.as_ref().is_some_and(|s| s.diagnostics.timed_out),
        };
        self.plies.push(Actor::Engine);
        self.last_engine = Some(mv.clone());
        self.version += 1;
        Ok(mv)
    }

    /// Takes back the latest human pick together with the engine replies after it.
    /// With no human pick on the stack, takes back the engine's moves.
    pub fn undo(&mut self) -> Result<(), ServiceError> {
        if self.plies.is_empty() {
            return Err(ServiceError::NothingToUndo);
        }
        let mut keep = self.plies.len();
        while keep > 0 && self.plies[keep - 1] == Actor::Engine {
            keep -= 1;
        }
        if keep > 0 {
            keep -= 1;
        }
        self.plies.truncate(keep);
        let picks = self.state.picks()[..keep].to_vec();
        self.state = DraftState::from_picks(self.state.config_arc().clone(), &picks).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.last_engine = None;
        self.version += 1;
        Ok(())
    }

    pub fn cached(&self, state: &DraftState) -> Option<Arc<SearchResult>> {
        self.cache.get(state.picks()).cloned()
    }

    pub fn store(&mut self, state: &DraftState, result: Arc<SearchResult>) {
        self.cache.insert(state.picks().to_vec(), result);
    }

    pub fn advisor_job(&self, state: DraftState) -> Result<AdvisorJob, ServiceError> {
        if state.is_terminal() {
            return Err(ServiceError::Terminal);
        }
        let mut advisor = self.advisor.clone();
        advisor.params.seed = derive_seed(self.seed, &[state.t() as u64, 1]);
        advisor.params.noise = None;
        Ok(AdvisorJob { state, advisor })
    }
}

pub fn run_engine(job: &EngineJob, predictor: &dyn WinRate, cancel: &AtomicBool) -> Result<Pick, ServiceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    job.engine
        .pick_with(&job.state, predictor, PlayMode::Assistant, &mut rng, Some(cancel))
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

pub fn run_advisor(job: &AdvisorJob, predictor: &dyn WinRate, cancel: &AtomicBool) -> Result<SearchResult, ServiceError> {
    let mut tree = SearchTree::new(job.state.clone()).map_err(|e| ServiceError::Internal(e.to_string()))?;
    tree.search(job.advisor.evaluator.as_ref(), predictor, &job.advisor.params, Some(cancel))
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

/// Completes the series with every pick chosen to maximise the mover's
/// predicted win rate on the partial lineups of the current round.
pub fn greedy_completion(state: &DraftState, predictor: &dyn WinRate) -> DraftState {
    let mut s = state.clone();
    while let Ok(camp) = s.camp_to_move() {
        let c1: Vec<HeroId> = s.current_round(Camp::One).iter().collect();
        let c2: Vec<HeroId> = s.current_round(Camp::Two).iter().collect();
        let legal = s.legal_actions().expect("non-terminal");
        let mut best = (legal[0], f64::NEG_INFINITY);
        for &h in &legal {
            let phi = match camp {
                Camp::One => {
                    let mut a = c1.clone();
                    a.push(h);
                    predictor.winrate(&a, &c2)
                }
                Camp::Two => {
                    let mut b = c2.clone();
                    b.push(h);
                    1.0 - predictor.winrate(&c1, &b)
                }
            };
            if phi > best.1 {
                best = (h, phi);
            }
        }
        s = s.apply(best.0).expect("legal");
    }
    s
}

/// Mean over all rounds of `player`'s predicted win rate in a finished draft.
pub fn series_phi(terminal: &DraftState, player: Player, predictor: &dyn WinRate) -> f64 {
    let config = terminal.config();
    let total: f64 = (0..config.rounds())
        .map(|d| {
            let phi = terminal.round_winrate(d, predictor).expect("terminal draft");
            if config.camp_player(d, Camp::One) == player {
                phi
            } else {
                1.0 - phi
            }
        })
        .sum();
    total / config.rounds() as f64
}

/// Mover's greedy-completion estimate after picking `hero` at `state`.
pub fn phi_if_picked(state: &DraftState, hero: HeroId, predictor: &dyn WinRate) -> Result<f64, ServiceError> {
    let mover = state.to_move().map_err(|_| ServiceError::Terminal)?;
    let next = state.apply(hero).map_err(|e| ServiceError::Illegal(e.to_string()))?;
    Ok(series_phi(&greedy_completion(&next, predictor), mover, predictor))
}

/// Top `top_k` actions by visits, lowest hero id on ties.
pub fn rank(state: &DraftState, result: &SearchResult, predictor: &dyn WinRate, top_k: usize, cached: bool) -> Recommendations {
    let mover = state.to_move().expect("searched states are live");
    let mut actions = result.actions.clone();
    actions.sort_by(|a, b| b.visits.cmp(&a.visits).then(a.hero.cmp(&b.hero)));
    let items = actions
        .iter()
        .take(top_k)
        .map(|a| Recommendation {
            hero_id: a.hero,
            prior: a.prior,
            visits: a.visits,
            q: a.q * mover.sign(),
            phi_estimate: phi_if_picked(state, a.hero, predictor).expect("legal root action"),
        })
        .collect();
    Recommendations {
        t: state.t(),
        to_move: mover,
        iterations: result.diagnostics.iterations,
        elapsed_ms: result.diagnostics.elapsed_ms,
        cached,
        items,
    }
}
