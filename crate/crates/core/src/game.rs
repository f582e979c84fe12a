//! Rules of the multi-round draft: who picks when, which heroes are legal,
//! and how a finished draft is scored.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type HeroId = u16;

/// Largest hero pool a [`GameConfig`] accepts; hero sets are 128-bit masks.
pub const MAX_HEROES: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("picks per round must be even and positive, got {0}")]
    OddRoundLength(usize),
    #[error("at least one round is required")]
    NoRounds,
    #[error("round order has {got} entries, expected {expected}")]
    OrderLength { got: usize, expected: usize },
    #[error("round order must give each camp exactly {per_camp} picks")]
    UnbalancedOrder { per_camp: usize },
    #[error("first-player list has {got} entries, expected one per round ({expected})")]
    FirstPlayerLength { got: usize, expected: usize },
    #[error("hero pool of {n_heroes} can dead-end; at least {required} heroes are required")]
    PoolTooSmall { n_heroes: usize, required: usize },
    #[error("hero pool of {0} exceeds the supported maximum of {MAX_HEROES}")]
    TooManyHeroes(usize),
    #[error("time step {t} outside [0, {len})")]
    StepOutOfRange { t: usize, len: usize },
    #[error("the draft is already complete")]
    Terminal,
    #[error("the draft is not complete")]
    NotTerminal,
    #[error("round {0} is not complete")]
    RoundIncomplete(usize),
    #[error("hero {hero} cannot be picked: {reason}")]
    Illegal { hero: usize, reason: IllegalReason },
    #[error("invalid camp or player id {0} (expected 1 or 2)")]
    BadSide(u8),
    #[error("cannot parse draft: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalReason {
    OutOfRange,
    RepeatInRound,
    OwnHistory,
}

impl fmt::Display for IllegalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IllegalReason::OutOfRange => "hero id out of range",
            IllegalReason::RepeatInRound => "already picked in this round",
            IllegalReason::OwnHistory => "already used by this player in an earlier round",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    /// +1 for player one, -1 for player two. Values are stored from player one's side.
    pub fn sign(self) -> f64 {
        match self {
            Player::One => 1.0,
            Player::Two => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }
}

impl TryFrom<u8> for Player {
    type Error = GameError;
    fn try_from(v: u8) -> Result<Self, GameError> {
        match v {
            1 => Ok(Player::One),
            2 => Ok(Player::Two),
            other => Err(GameError::BadSide(other)),
        }
    }
}

impl From<Player> for u8 {
    fn from(p: Player) -> u8 {
        p.index() as u8 + 1
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "player{}", u8::from(*self))
    }
}

/// Camp one always opens a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Camp {
    One,
    Two,
}

impl Camp {
    pub fn index(self) -> usize {
        match self {
            Camp::One => 0,
            Camp::Two => 1,
        }
    }
}

impl TryFrom<u8> for Camp {
    type Error = GameError;
    fn try_from(v: u8) -> Result<Self, GameError> {
        match v {
            1 => Ok(Camp::One),
            2 => Ok(Camp::Two),
            other => Err(GameError::BadSide(other)),
        }
    }
}

impl From<Camp> for u8 {
    fn from(c: Camp) -> u8 {
        c.index() as u8 + 1
    }
}

/// A set of hero ids below [`MAX_HEROES`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeroSet(u128);

impl HeroSet {
    pub const EMPTY: HeroSet = HeroSet(0);

    pub fn full(n: usize) -> HeroSet {
        if n >= 128 {
            HeroSet(u128::MAX)
        } else {
            HeroSet((1u128 << n) - 1)
        }
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn contains(self, h: HeroId) -> bool {
        (h as usize) < 128 && self.0 & (1u128 << h) != 0
    }

    pub fn insert(&mut self, h: HeroId) {
        self.0 |= 1u128 << h;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: HeroSet) -> HeroSet {
        HeroSet(self.0 | other.0)
    }

    pub fn difference(self, other: HeroSet) -> HeroSet {
        HeroSet(self.0 & !other.0)
    }

    /// Ascending hero ids.
    pub fn iter(self) -> impl Iterator<Item = HeroId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let h = bits.trailing_zeros() as HeroId;
                bits &= bits - 1;
                Some(h)
            }
        })
    }
}

impl FromIterator<HeroId> for HeroSet {
    fn from_iter<I: IntoIterator<Item = HeroId>>(iter: I) -> Self {
        let mut s = HeroSet::EMPTY;
        for h in iter {
            s.insert(h);
        }
        s
    }
}

/// Single-round win-rate function, always from camp one's point of view.
pub trait WinRate: Send + Sync {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64;
}

impl<T: WinRate + ?Sized> WinRate for &T {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        (**self).winrate(camp1, camp2)
    }
}

impl<T: WinRate + ?Sized> WinRate for Arc<T> {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        (**self).winrate(camp1, camp2)
    }
}

/// Maps a win rate in [0, 1] to a zero-centred reward in [-1, 1].
pub fn transform_winrate(phi: f64) -> f64 {
    (phi - 0.5) * 2.0
}

#[derive(Deserialize)]
struct RawConfig {
    n_heroes: usize,
    picks_per_round: usize,
    rounds: usize,
    round_order: Vec<Camp>,
    first_player: Vec<Player>,
}

impl TryFrom<RawConfig> for GameConfig {
    type Error = GameError;
    fn try_from(r: RawConfig) -> Result<Self, GameError> {
        GameConfig::new(r.n_heroes, r.picks_per_round, r.rounds, r.round_order, r.first_player)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct GameConfig {
    n_heroes: usize,
    picks_per_round: usize,
    rounds: usize,
    round_order: Vec<Camp>,
    first_player: Vec<Player>,
}

impl GameConfig {
    pub fn new(
        n_heroes: usize,
        picks_per_round: usize,
        rounds: usize,
        round_order: Vec<Camp>,
        first_player: Vec<Player>,
    ) -> Result<Self, GameError> {
        if picks_per_round == 0 || picks_per_round % 2 != 0 {
            return Err(GameError::OddRoundLength(picks_per_round));
        }
        if rounds == 0 {
            return Err(GameError::NoRounds);
        }
        if round_order.len() != picks_per_round {
            return Err(GameError::OrderLength {
                got: round_order.len(),
                expected: picks_per_round,
            });
        }
        let half = picks_per_round / 2;
        if round_order.iter().filter(|c| **c == Camp::One).count() != half {
            return Err(GameError::UnbalancedOrder { per_camp: half });
        }
        if first_player.len() != rounds {
            return Err(GameError::FirstPlayerLength {
                got: first_player.len(),
                expected: rounds,
            });
        }
        // The last pick of the series must still find a hero that is neither
        // in the player's own history nor taken in the current round.
        let required = half * rounds + half;
        if n_heroes < required {
            return Err(GameError::PoolTooSmall { n_heroes, required });
        }
        if n_heroes > MAX_HEROES {
            return Err(GameError::TooManyHeroes(n_heroes));
        }
        Ok(GameConfig {
            n_heroes,
            picks_per_round,
            rounds,
            round_order,
            first_player,
        })
    }

    /// Ten picks per round in the order 1-2-2-1-1-2-2-1-1-2, players alternating
    /// the first pick from round to round starting with player one.
    pub fn standard(n_heroes: usize, rounds: usize) -> Result<Self, GameError> {
        Self::new(
            n_heroes,
            10,
            rounds,
            Self::order_from_digits(&[1, 2, 2, 1, 1, 2, 2, 1, 1, 2])?,
            Self::alternating(rounds),
        )
    }

    /// Four picks per round in the order 1-2-2-1, alternating first player.
    pub fn small(n_heroes: usize, rounds: usize) -> Result<Self, GameError> {
        Self::new(
            n_heroes,
            4,
            rounds,
            Self::order_from_digits(&[1, 2, 2, 1])?,
            Self::alternating(rounds),
        )
    }

    pub fn order_from_digits(digits: &[u8]) -> Result<Vec<Camp>, GameError> {
        digits.iter().map(|&d| Camp::try_from(d)).collect()
    }

    pub fn alternating(rounds: usize) -> Vec<Player> {
        (0..rounds)
            .map(|d| if d % 2 == 0 { Player::One } else { Player::Two })
            .collect()
    }

    pub fn n_heroes(&self) -> usize {
        self.n_heroes
    }

    pub fn picks_per_round(&self) -> usize {
        self.picks_per_round
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn round_order(&self) -> &[Camp] {
        &self.round_order
    }

    pub fn first_player(&self) -> &[Player] {
        &self.first_player
    }

    /// Total number of picks in a full series.
    pub fn total_steps(&self) -> usize {
        self.picks_per_round * self.rounds
    }

    /// The player occupying `camp` in round `d`.
    pub fn camp_player(&self, d: usize, camp: Camp) -> Player {
        let first = self.first_player[d];
        match camp {
            Camp::One => first,
            Camp::Two => first.other(),
        }
    }

    /// The turn function: which player picks at time step `t`.
    pub fn turn_player(&self, t: usize) -> Result<Player, GameError> {
        if t >= self.total_steps() {
            return Err(GameError::StepOutOfRange {
                t,
                len: self.total_steps(),
            });
        }
        let d = t / self.picks_per_round;
        let l = t % self.picks_per_round;
        Ok(self.camp_player(d, self.round_order[l]))
    }

    /// Stable 64-bit fingerprint used to match checkpoints with configs.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// An in-progress (or finished) series draft. Cloning is cheap and states are
/// never mutated in place.
#[derive(Clone, Debug)]
pub struct DraftState {
    config: Arc<GameConfig>,
    picks: Vec<HeroId>,
    /// Heroes each player used in completed rounds.
    history: [HeroSet; 2],
    /// Heroes each camp has taken in the current round.
    current: [HeroSet; 2],
}

impl PartialEq for DraftState {
    fn eq(&self, other: &Self) -> bool {
        self.picks == other.picks && *self.config == *other.config
    }
}

impl Eq for DraftState {}

impl DraftState {
    pub fn new(config: Arc<GameConfig>) -> Self {
        DraftState {
            config,
            picks: Vec::new(),
            history: [HeroSet::EMPTY; 2],
            current: [HeroSet::EMPTY; 2],
        }
    }

    pub fn from_picks(config: Arc<GameConfig>, picks: &[HeroId]) -> Result<Self, GameError> {
        let mut s = DraftState::new(config);
        for &h in picks {
            s = s.apply(h)?;
        }
        Ok(s)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn config_arc(&self) -> &Arc<GameConfig> {
        &self.config
    }

    pub fn picks(&self) -> &[HeroId] {
        &self.picks
    }

    /// Current time step, i.e. number of heroes picked so far.
    pub fn t(&self) -> usize {
        self.picks.len()
    }

    /// Index of the round the next pick belongs to (equals `rounds` when terminal).
    pub fn round(&self) -> usize {
        self.t() / self.config.picks_per_round
    }

    pub fn step_in_round(&self) -> usize {
        self.t() % self.config.picks_per_round
    }

    pub fn is_terminal(&self) -> bool {
        self.t() >= self.config.total_steps()
    }

    /// True if the last pick completed a round.
    pub fn just_completed_round(&self) -> Option<usize> {
        let t = self.t();
        if t > 0 && t % self.config.picks_per_round == 0 {
            Some(t / self.config.picks_per_round - 1)
        } else {
            None
        }
    }

    pub fn to_move(&self) -> Result<Player, GameError> {
        if self.is_terminal() {
            return Err(GameError::Terminal);
        }
        self.config.turn_player(self.t())
    }

    /// Camp of the next picker in the current round.
    pub fn camp_to_move(&self) -> Result<Camp, GameError> {
        if self.is_terminal() {
            return Err(GameError::Terminal);
        }
        Ok(self.config.round_order[self.step_in_round()])
    }

    pub fn history(&self, player: Player) -> HeroSet {
        self.history[player.index()]
    }

    pub fn current_round(&self, camp: Camp) -> HeroSet {
        self.current[camp.index()]
    }

    pub fn legal_set(&self) -> Result<HeroSet, GameError> {
        let player = self.to_move()?;
        let blocked = self.current[0]
            .union(self.current[1])
            .union(self.history[player.index()]);
        Ok(HeroSet::full(self.config.n_heroes).difference(blocked))
    }

    pub fn legal_actions(&self) -> Result<Vec<HeroId>, GameError> {
        Ok(self.legal_set()?.iter().collect())
    }

    pub fn check_action(&self, hero: HeroId) -> Result<(), GameError> {
        let player = self.to_move()?;
        let reason = if hero as usize >= self.config.n_heroes {
            IllegalReason::OutOfRange
        } else if self.current[0].union(self.current[1]).contains(hero) {
            IllegalReason::RepeatInRound
        } else if self.history[player.index()].contains(hero) {
            IllegalReason::OwnHistory
        } else {
            return Ok(());
        };
        Err(GameError::Illegal {
            hero: hero as usize,
            reason,
        })
    }

    /// Returns the successor state; `self` is unchanged.
    pub fn apply(&self, hero: HeroId) -> Result<DraftState, GameError> {
        self.check_action(hero)?;
        let mut next = self.clone();
        next.push_unchecked(hero);
        Ok(next)
    }

    /// Caller guarantees `hero` is legal.
    pub(crate) fn push_unchecked(&mut self, hero: HeroId) {
        let l = self.step_in_round();
        let d = self.round();
        let camp = self.config.round_order[l];
        self.current[camp.index()].insert(hero);
        self.picks.push(hero);
        if l + 1 == self.config.picks_per_round {
            for c in [Camp::One, Camp::Two] {
                let p = self.config.camp_player(d, c);
                self.history[p.index()] = self.history[p.index()].union(self.current[c.index()]);
            }
            self.current = [HeroSet::EMPTY; 2];
        }
    }

    /// Sorted camp-one and camp-two lineups of a completed round.
    pub fn round_lineups(&self, d: usize) -> Result<(Vec<HeroId>, Vec<HeroId>), GameError> {
        let len = self.config.picks_per_round;
        if d >= self.config.rounds || self.t() < (d + 1) * len {
            return Err(GameError::RoundIncomplete(d));
        }
        let mut c1 = Vec::with_capacity(len / 2);
        let mut c2 = Vec::with_capacity(len / 2);
        for (l, &h) in self.picks[d * len..(d + 1) * len].iter().enumerate() {
            match self.config.round_order[l] {
                Camp::One => c1.push(h),
                Camp::Two => c2.push(h),
            }
        }
        c1.sort_unstable();
        c2.sort_unstable();
        Ok((c1, c2))
    }

    /// Camp-one win rate of completed round `d`.
    pub fn round_winrate(&self, d: usize, predictor: &dyn WinRate) -> Result<f64, GameError> {
        let (c1, c2) = self.round_lineups(d)?;
        Ok(predictor.winrate(&c1, &c2))
    }

    /// Transformed round value from player one's side.
    pub fn round_value(&self, d: usize, predictor: &dyn WinRate) -> Result<f64, GameError> {
        let phi = self.round_winrate(d, predictor)?;
        Ok(self.config.first_player[d].sign() * transform_winrate(phi))
    }

    /// Sum of transformed round values, from player one's side.
    pub fn terminal_reward(&self, predictor: &dyn WinRate) -> Result<f64, GameError> {
        if !self.is_terminal() {
            return Err(GameError::NotTerminal);
        }
        (0..self.config.rounds)
            .map(|d| self.round_value(d, predictor))
            .sum()
    }

    /// Parses the `7,2,5,1|0,3,6,4` text form and replays it.
    pub fn parse(config: Arc<GameConfig>, text: &str) -> Result<DraftState, GameError> {
        let text = text.trim();
        let mut picks = Vec::new();
        if !text.is_empty() {
            let groups: Vec<&str> = text.split('|').collect();
            for (i, group) in groups.iter().enumerate() {
                let ids: Vec<&str> = group.split(',').map(str::trim).collect();
                let full = ids.len() == config.picks_per_round;
                if !full && i + 1 != groups.len() {
                    return Err(GameError::Parse(format!(
                        "round {i} has {} picks, expected {}",
                        ids.len(),
                        config.picks_per_round
                    )));
                }
                for id in ids {
                    let h: HeroId = id
                        .parse()
                        .map_err(|_| GameError::Parse(format!("bad hero id {id:?}")))?;
                    picks.push(h);
                }
            }
        }
        DraftState::from_picks(config, &picks)
    }
}

impl fmt::Display for DraftState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, chunk) in self.picks.chunks(self.config.picks_per_round).enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            for (j, h) in chunk.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{h}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);
    impl WinRate for Fixed {
        fn winrate(&self, _: &[HeroId], _: &[HeroId]) -> f64 {
            self.0
        }
    }

    fn tiny(n: usize, rounds: usize) -> Arc<GameConfig> {
        Arc::new(GameConfig::small(n, rounds).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(GameConfig::standard(95, 3).is_ok());
        assert!(GameConfig::small(8, 1).is_ok());
        assert!(GameConfig::small(6, 2).is_ok());
        assert_eq!(
            GameConfig::small(5, 2).unwrap_err(),
            GameError::PoolTooSmall {
                n_heroes: 5,
                required: 6
            }
        );
        let order = GameConfig::order_from_digits(&[1, 2, 1]).unwrap();
        assert_eq!(
            GameConfig::new(8, 3, 1, order, vec![Player::One]).unwrap_err(),
            GameError::OddRoundLength(3)
        );
        let order = GameConfig::order_from_digits(&[1, 1, 2, 1]).unwrap();
        assert!(matches!(
            GameConfig::new(8, 4, 1, order, vec![Player::One]),
            Err(GameError::UnbalancedOrder { .. })
        ));
    }

    #[test]
    fn config_json_is_validated() {
        let ok = r#"{"n_heroes":8,"picks_per_round":4,"rounds":1,"round_order":[1,2,2,1],"first_player":[1]}"#;
        let cfg: GameConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg, GameConfig::small(8, 1).unwrap());
        let bad = r#"{"n_heroes":3,"picks_per_round":4,"rounds":1,"round_order":[1,2,2,1],"first_player":[1]}"#;
        assert!(serde_json::from_str::<GameConfig>(bad).is_err());
    }

    #[test]
    fn turn_function_standard_order() {
        let cfg = GameConfig::standard(95, 3).unwrap();
        assert_eq!(cfg.turn_player(0).unwrap(), Player::One);
        assert_eq!(cfg.turn_player(1).unwrap(), Player::Two);
        assert_eq!(cfg.turn_player(3).unwrap(), Player::One);
        assert_eq!(cfg.turn_player(10).unwrap(), Player::Two);
        assert!(cfg.turn_player(30).is_err());
        let mut counts = [0usize; 2];
        for t in 0..cfg.total_steps() {
            counts[cfg.turn_player(t).unwrap().index()] += 1;
        }
        assert_eq!(counts, [15, 15]);
    }

    #[test]
    fn legality_rules() {
        let cfg = tiny(8, 2);
        let s = DraftState::new(cfg.clone());
        assert_eq!(s.legal_actions().unwrap(), (0..8).collect::<Vec<_>>());

        let s = DraftState::from_picks(cfg.clone(), &[2, 5]).unwrap();
        let legal = s.legal_actions().unwrap();
        assert!(!legal.contains(&2) && !legal.contains(&5));

        // Round 0: player one (camp 1) takes 3 and 0; round 1 starts with player two.
        let s = DraftState::from_picks(cfg.clone(), &[3, 1, 2, 0]).unwrap();
        assert_eq!(s.to_move().unwrap(), Player::Two);
        // player two used 1 and 2 before, may pick 3
        let legal_p2 = s.legal_actions().unwrap();
        assert!(legal_p2.contains(&3));
        assert!(!legal_p2.contains(&1));
        let s = s.apply(4).unwrap();
        assert_eq!(s.to_move().unwrap(), Player::One);
        let legal_p1 = s.legal_actions().unwrap();
        assert!(!legal_p1.contains(&3), "own history");
        assert!(!legal_p1.contains(&4), "taken this round");
        assert!(legal_p1.contains(&1), "opponent's past hero is fine");
        assert_eq!(
            s.apply(3).unwrap_err(),
            GameError::Illegal {
                hero: 3,
                reason: IllegalReason::OwnHistory
            }
        );
    }

    #[test]
    fn apply_has_value_semantics() {
        let cfg = tiny(8, 1);
        let s0 = DraftState::new(cfg);
        let s1 = s0.apply(4).unwrap();
        assert_eq!(s0.t(), 0);
        assert_eq!(s1.picks(), &[4]);
        assert_eq!(
            s1.apply(4).unwrap_err(),
            GameError::Illegal {
                hero: 4,
                reason: IllegalReason::RepeatInRound
            }
        );
        assert!(matches!(
            s1.apply(8),
            Err(GameError::Illegal {
                reason: IllegalReason::OutOfRange,
                ..
            })
        ));
    }

    #[test]
    fn lineups_split_by_order() {
        let cfg = tiny(8, 2);
        let s = DraftState::from_picks(cfg, &[7, 2, 5, 1]).unwrap();
        assert_eq!(s.round_lineups(0).unwrap(), (vec![1, 7], vec![2, 5]));
        assert_eq!(s.round_lineups(1).unwrap_err(), GameError::RoundIncomplete(1));
    }

    #[test]
    fn terminal_reward_signs() {
        let s = DraftState::from_picks(tiny(8, 1), &[0, 1, 2, 3]).unwrap();
        assert_eq!(s.terminal_reward(&Fixed(0.5)).unwrap(), 0.0);
        assert_eq!(s.terminal_reward(&Fixed(0.75)).unwrap(), 0.5);
        let s = DraftState::from_picks(tiny(8, 2), &[0, 1, 2, 3, 0, 1, 2, 3]).unwrap();
        assert_eq!(s.terminal_reward(&Fixed(0.75)).unwrap(), 0.0);
        let partial = DraftState::from_picks(tiny(8, 2), &[0, 1]).unwrap();
        assert_eq!(partial.terminal_reward(&Fixed(0.75)).unwrap_err(), GameError::NotTerminal);
    }

    #[test]
    fn text_form_roundtrip() {
        let cfg = tiny(8, 2);
        let s = DraftState::parse(cfg.clone(), "7,2,5,1|0,3,6").unwrap();
        assert_eq!(s.to_string(), "7,2,5,1|0,3,6");
        assert_eq!(DraftState::parse(cfg.clone(), "").unwrap().t(), 0);
        assert!(DraftState::parse(cfg.clone(), "7,2|0").is_err());
        assert!(DraftState::parse(cfg, "7,x").is_err());
    }

    /// Exhaustive walk over every legal draft of a config at the pool bound.
    fn walk(s: &DraftState, leaves: &mut usize) {
        if s.is_terminal() {
            *leaves += 1;
            return;
        }
        let legal = s.legal_actions().unwrap();
        assert!(!legal.is_empty(), "dead end at {s}");
        let player = s.to_move().unwrap();
        for &h in &legal {
            assert!(!s.history(player).contains(h));
            walk(&s.apply(h).unwrap(), leaves);
        }
    }

    #[test]
    fn no_dead_ends_at_pool_bound() {
        let mut leaves = 0;
        walk(&DraftState::new(tiny(6, 2)), &mut leaves);
        assert!(leaves > 0);
        let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
        let cfg = GameConfig::new(4, 2, 3, order, GameConfig::alternating(3)).unwrap();
        let mut leaves = 0;
        walk(&DraftState::new(Arc::new(cfg)), &mut leaves);
        assert!(leaves > 0);
    }

    #[test]
    fn reward_antisymmetric_under_relabel() {
        struct Strength;
        impl WinRate for Strength {
            fn winrate(&self, a: &[HeroId], b: &[HeroId]) -> f64 {
                let s: f64 = a.iter().map(|&h| h as f64).sum::<f64>()
                    - b.iter().map(|&h| h as f64).sum::<f64>();
                1.0 / (1.0 + (-s / 4.0).exp())
            }
        }
        let order = GameConfig::order_from_digits(&[1, 2, 2, 1]).unwrap();
        let a = Arc::new(
            GameConfig::new(8, 4, 2, order.clone(), vec![Player::One, Player::Two]).unwrap(),
        );
        let b = Arc::new(GameConfig::new(8, 4, 2, order, vec![Player::Two, Player::One]).unwrap());
        let picks = [0, 5, 6, 1, 2, 7, 4, 3];
        let ra = DraftState::from_picks(a, &picks).unwrap().terminal_reward(&Strength).unwrap();
        let rb = DraftState::from_picks(b, &picks).unwrap().terminal_reward(&Strength).unwrap();
        assert!((ra + rb).abs() < 1e-12);
    }
}
