//! JSON wire types of the draft session service. Players and camps
//! serialize as the integers 1 and 2; hero ids are integers.

use serde::{Deserialize, Serialize};

use crate::game::{Camp, DraftState, GameConfig, HeroId, Player, WinRate};
use crate::strategy::StrategySpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    /// Defaults to the server's configuration.
    #[serde(default)]
    pub config: Option<GameConfig>,
    /// Seat the human drafts for; absent means the human enters every pick.
    #[serde(default)]
    pub human_player: Option<Player>,
    /// Defaults to the server's engine.
    #[serde(default)]
    pub engine_spec: Option<StrategySpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub request_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub view: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickRequest {
    pub hero_id: HeroId,
    #[serde(default)]
    pub request_id: Option<u64>,
}

/// Body of `engine-move` and `undo`; may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    #[serde(default)]
    pub request_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub hero_id: HeroId,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub round: usize,
    /// Player drafting for camp one this round.
    pub camp1_player: Player,
    pub camp1: Vec<HeroId>,
    pub camp2: Vec<HeroId>,
    pub complete: bool,
    /// Predicted camp-one win rate, once the round is complete.
    pub phi_camp1: Option<f64>,
    /// The same prediction from player one's side.
    pub phi_player1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineMove {
    pub hero_id: HeroId,
    pub player: Player,
    pub latency_ms: f64,
    pub iterations: Option<u32>,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: u64,
    pub config: GameConfig,
    pub human_player: Option<Player>,
    pub engine: String,
    pub picks: Vec<HeroId>,
    pub t: usize,
    pub round: usize,
    pub step_in_round: usize,
    pub terminal: bool,
    pub to_move: Option<Player>,
    pub camp_to_move: Option<Camp>,
    pub human_turn: bool,
    pub rounds: Vec<RoundView>,
    pub legal_actions: Vec<HeroId>,
    /// Player one's predicted win rate for each completed round.
    pub phi_history: Vec<f64>,
    pub last_engine_move: Option<EngineMove>,
    pub undo_depth: usize,
    /// Bumped by every accepted mutation.
    pub version: u64,
}

impl SessionView {
    /// Builds the board view of `state`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        id: u64,
        state: &DraftState,
        predictor: &dyn WinRate,
        human_player: Option<Player>,
        engine: &str,
        last_engine_move: Option<EngineMove>,
        undo_depth: usize,
        version: u64,
    ) -> SessionView {
        let config = state.config();
        let len = config.picks_per_round();
        let mut rounds = Vec::new();
        let mut phi_history = Vec::new();
        for d in 0..config.rounds() {
            let start = d * len;
            let mut camp1 = Vec::new();
            let mut camp2 = Vec::new();
            for (l, &h) in state.picks().iter().enumerate().skip(start).take(len) {
                match config.round_order()[l - start] {
                    Camp::One => camp1.push(h),
                    Camp::Two => camp2.push(h),
                }
            }
            let complete = state.t() >= start + len;
            let camp1_player = config.camp_player(d, Camp::One);
            let phi_camp1 = complete.then(|| state.round_winrate(d, predictor).expect("round complete"));
            let phi_player1 = phi_camp1.map(|p| if camp1_player == Player::One { p } else { 1.0 - p });
            if let Some(p) = phi_player1 {
                phi_history.push(p);
            }
            rounds.push(RoundView {
                round: d,
                camp1_player,
                camp1,
                camp2,
                complete,
                phi_camp1,
                phi_player1,
            });
        }
        let to_move = state.to_move().ok();
        SessionView {
            id,
            config: config.clone(),
            human_player,
            engine: engine.to_string(),
            picks: state.picks().to_vec(),
            t: state.t(),
            round: state.round(),
            step_in_round: state.step_in_round(),
            terminal: state.is_terminal(),
            to_move,
            camp_to_move: state.camp_to_move().ok(),
            human_turn: to_move.is_some_and(|p| human_player.is_none_or(|h| h == p)),
            rounds,
            legal_actions: state.legal_actions().unwrap_or_default(),
            phi_history,
            last_engine_move,
            undo_depth,
            version,
        }
    }

    /// Player one's mean predicted win rate over completed rounds.
    pub fn series_score(&self) -> Option<f64> {
        (!self.phi_history.is_empty()).then(|| self.phi_history.iter().sum::<f64>() / self.phi_history.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineMoveResponse {
    #[serde(rename = "move")]
    pub engine_move: EngineMove,
    pub view: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub hero_id: HeroId,
    pub prior: f32,
    pub visits: u32,
    /// Search value from the mover's side, in [-D, D].
    pub q: f64,
    /// Estimated mean round win rate for the mover if this hero is picked and
    /// the rest of the series is completed greedily. A heuristic, not a search value.
    pub phi_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendations {
    pub t: usize,
    pub to_move: Player,
    pub iterations: u32,
    pub elapsed_ms: f64,
    pub cached: bool,
    /// Highest visit count first, lowest hero id on ties.
    pub items: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub hero_id: HeroId,
    /// The hypothetical board; the session itself is unchanged.
    pub view: SessionView,
    pub phi_estimate: f64,
    /// Ranked replies from the new position; absent when it is terminal.
    pub recommendations: Option<Recommendations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeroInfo {
    pub id: HeroId,
    pub name: String,
    pub appearances: Option<u64>,
    pub wins: Option<u64>,
    /// Historical win rate, when match statistics are loaded.
    pub winrate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub n_heroes: usize,
    pub heroes: Vec<HeroInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}
