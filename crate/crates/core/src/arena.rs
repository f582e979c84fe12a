//! Pairwise evaluation: each strategy picks first in half the games, every
//! game is scored by the row strategy's mean predicted round win rate, and
//! results carry 95% normal-approximation intervals.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::game::{Camp, DraftState, GameConfig, Player, WinRate};
use crate::stats::{derive_seed, mean_ci, percentile};
use crate::strategy::{PlayMode, Strategy, StrategyError};

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("a tournament needs at least two strategies")]
    TooFewStrategies,
    #[error("a pairing needs an even, positive number of games")]
    BadGameCount,
    #[error("every game of the pairing failed; first error: {0}")]
    AllFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub picks: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn of(samples: &[Duration]) -> Self {
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        LatencyStats {
            picks: ms.len(),
            mean_ms: if ms.is_empty() { 0.0 } else { ms.iter().sum::<f64>() / ms.len() as f64 },
            p95_ms: if ms.is_empty() { 0.0 } else { percentile(&ms, 0.95) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub row: String,
    pub col: String,
    pub n_games: usize,
    /// Row strategy's score per completed game, in game order.
    pub scores: Vec<f64>,
    pub mean: f64,
    pub ci: f64,
    pub failures: usize,
    pub row_latency: LatencyStats,
    pub col_latency: LatencyStats,
}

impl PairResult {
    /// The same games seen from the column strategy.
    pub fn flipped(&self) -> PairResult {
        let scores: Vec<f64> = self.scores.iter().map(|s| 1.0 - s).collect();
        let (mean, ci) = mean_ci(&scores);
        PairResult {
            row: self.col.clone(),
            col: self.row.clone(),
            n_games: self.n_games,
            scores,
            mean,
            ci,
            failures: self.failures,
            row_latency: self.col_latency.clone(),
            col_latency: self.row_latency.clone(),
        }
    }

    pub fn ci_excludes_half(&self) -> bool {
        (self.mean - 0.5).abs() > self.ci
    }
}

struct GameOutcome {
    score: f64,
    latency: [Vec<Duration>; 2],
}

/// Plays one game with `a` as player one iff `a_first`; returns `a`'s score.
fn play_game(
    a: &Strategy,
    b: &Strategy,
    a_first: bool,
    predictor: &dyn WinRate,
    config: &Arc<GameConfig>,
    seed: u64,
) -> Result<GameOutcome, StrategyError> {
    let a_player = if a_first { Player::One } else { Player::Two };
    // Random streams belong to the player seat, not the strategy.
    let mut rngs = [ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1])), ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]))];
    let mut latency = [Vec::new(), Vec::new()];
    let mut state = DraftState::new(config.clone());
    while !state.is_terminal() {
        let mover = state.to_move()?;
        let (strategy, slot) = if mover == a_player { (a, 0) } else { (b, 1) };
        let pick = strategy.pick(&state, predictor, PlayMode::Arena, &mut rngs[mover.index()])?;
        latency[slot].push(pick.latency);
        state = state.apply(pick.hero)?;
    }
    let rounds = config.rounds();
    let mut total = 0.0;
    for d in 0..rounds {
        let phi = state.round_winrate(d, predictor)?;
        total += if config.camp_player(d, Camp::One) == a_player { phi } else { 1.0 - phi };
    }
    Ok(GameOutcome {
        score: total / rounds as f64,
        latency,
    })
}

/// Plays `n_games`; game `g` seats `a` first iff `g < n/2`, and games `g` and
/// `g + n/2` share a seed so every opening is played from both seats.
pub fn run_pairing(
    a: &Strategy,
    b: &Strategy,
    n_games: usize,
    predictor: &dyn WinRate,
    config: &Arc<GameConfig>,
    seed: u64,
) -> Result<PairResult, ArenaError> {
    if n_games == 0 || n_games % 2 != 0 {
        return Err(ArenaError::BadGameCount);
    }
    let half = n_games / 2;
    let outcomes: Vec<Result<GameOutcome, StrategyError>> = (0..n_games)
        .into_par_iter()
        .map(|g| play_game(a, b, g < half, predictor, config, derive_seed(seed, &[(g % half) as u64])))
        .collect();
    let mut scores = Vec::with_capacity(n_games);
    let mut lat = [Vec::new(), Vec::new()];
    let mut failures = 0;
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(o) => {
                scores.push(o.score);
                let [x, y] = o.latency;
                lat[0].extend(x);
                lat[1].extend(y);
            }
            Err(e) => {
                warn!(error = %e, "arena game failed; excluded");
                failures += 1;
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    if scores.is_empty() {
        return Err(ArenaError::AllFailed(first_error.unwrap_or_default()));
    }
    let (mean, ci) = mean_ci(&scores);
    Ok(PairResult {
        row: a.name.clone(),
        col: b.name.clone(),
        n_games,
        scores,
        mean,
        ci,
        failures,
        row_latency: LatencyStats::of(&lat[0]),
        col_latency: LatencyStats::of(&lat[1]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tournament {
    /// Strategy names, in the order given (weakest first by convention).
    pub names: Vec<String>,
    /// One result per unordered pair `(i, j)`, `i > j`, row = `names[i]`.
    pub pairs: Vec<PairResult>,
    pub latency: Vec<LatencyStats>,
}

impl Tournament {
    /// Row `i` against column `j`, for any `i ≠ j`.
    pub fn result(&self, i: usize, j: usize) -> Option<PairResult> {
        let (ri, rj) = (&self.names[i], &self.names[j]);
        self.pairs.iter().find_map(|p| {
            if &p.row == ri && &p.col == rj {
                Some(p.clone())
            } else if &p.row == rj && &p.col == ri {
                Some(p.flipped())
            } else {
                None
            }
        })
    }

    /// Lower-triangular table: cell `(i, j)` is row `i`'s mean ± CI against column `j`.
    pub fn render_table(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(0).max(13);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "");
        for n in &self.names[..self.names.len() - 1] {
            let _ = write!(out, " | {n:^width$}");
        }
        out.push('\n');
        for (i, n) in self.names.iter().enumerate().skip(1) {
            let _ = write!(out, "{n:width$}");
            for j in 0..self.names.len() - 1 {
                let cell = if j < i {
                    let r = self.result(i, j).expect("pair played");
                    format!("{:.3} ± {:.3}", r.mean, r.ci)
                } else {
                    String::new()
                };
                let _ = write!(out, " | {cell:^width$}");
            }
            out.push('\n');
        }
        out.push('\n');
        for (n, l) in self.names.iter().zip(&self.latency) {
            let _ = writeln!(out, "{n}: {:.2} ms/pick mean, {:.2} ms p95 over {} picks", l.mean_ms, l.p95_ms, l.picks);
        }
        out
    }

    /// Raw per-game scores as CSV: `row,col,game,score`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ArenaError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "game", "score"])?;
        for p in &self.pairs {
            for (g, s) in p.scores.iter().enumerate() {
                wr.write_record([p.row.as_str(), p.col.as_str(), &g.to_string(), &s.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Plays every unordered pair of `strategies`.
pub fn run_tournament(
    strategies: &[Strategy],
    n_games: usize,
    predictor: &dyn WinRate,
    config: &Arc<GameConfig>,
    seed: u64,
) -> Result<Tournament, ArenaError> {
    if strategies.len() < 2 {
        return Err(ArenaError::TooFewStrategies);
    }
    let mut pairs = Vec::new();
    let mut lat: Vec<Vec<LatencyStats>> = vec![Vec::new(); strategies.len()];
    for i in 1..strategies.len() {
        for j in 0..i {
            let r = run_pairing(&strategies[i], &strategies[j], n_games, predictor, config, derive_seed(seed, &[i as u64, j as u64]))?;
            lat[i].push(r.row_latency.clone());
            lat[j].push(r.col_latency.clone());
            pairs.push(r);
        }
    }
    let latency = lat
        .into_iter()
        .map(|ls| {
            let picks: usize = ls.iter().map(|l| l.picks).sum();
            LatencyStats {
                picks,
                mean_ms: ls.iter().map(|l| l.mean_ms * l.picks as f64).sum::<f64>() / picks.max(1) as f64,
                p95_ms: ls.iter().map(|l| l.p95_ms).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(Tournament {
        names: strategies.iter().map(|s| s.name.clone()).collect(),
        pairs,
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleParams, SyntheticOracle};
    use crate::policy_value::UniformEvaluator;
    use crate::search::SearchParams;
    use crate::stats::Z95;

    fn setup() -> (Arc<GameConfig>, SyntheticOracle) {
        let cfg = Arc::new(GameConfig::small(10, 3).unwrap());
        let o = SyntheticOracle::sample(3, 10, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        (cfg, o)
    }

    #[test]
    fn random_vs_random_is_even() {
        let (cfg, o) = setup();
        let r = run_pairing(&Strategy::random(), &Strategy::random().named("RD2"), 1000, &o, &cfg, 1).unwrap();
        assert!((r.mean - 0.5).abs() <= r.ci, "{} ± {}", r.mean, r.ci);
        assert_eq!(r.scores.len(), 1000);
    }

    #[test]
    fn identical_strategies_score_exactly_half() {
        let (cfg, o) = setup();
        let hwr = Strategy::highest_winrate((0..10).map(|h| (h % 4) as f64).collect());
        for s in [Strategy::random(), hwr] {
            let r = run_pairing(&s, &s.clone().named("twin"), 40, &o, &cfg, 7).unwrap();
            assert!((r.mean - 0.5).abs() < 1e-12, "{}", r.mean);
        }
    }

    #[test]
    fn flipping_reflects_the_mean() {
        let (cfg, o) = setup();
        let a = Strategy::highest_winrate(o.base_strength.clone());
        let r = run_pairing(&a, &Strategy::random(), 40, &o, &cfg, 2).unwrap();
        let f = r.flipped();
        assert!((r.mean + f.mean - 1.0).abs() < 1e-12);
        assert!((r.ci - f.ci).abs() < 1e-12);
        assert!(r.mean > 0.5);
    }

    #[test]
    fn ci_formula_on_fixture() {
        let xs = [0.2, 0.4, 0.6, 0.8];
        let (m, ci) = mean_ci(&xs);
        let sd = ((0.09 + 0.01 + 0.01 + 0.09) / 3.0f64).sqrt();
        assert!((m - 0.5).abs() < 1e-12);
        assert!((ci - Z95 * sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn tournament_shape_and_reproducibility() {
        let (cfg, o) = setup();
        let fast = SearchParams {
            iterations: 20,
            ..SearchParams::default()
        };
        let specs = vec![
            Strategy::random(),
            Strategy::highest_winrate(o.base_strength.clone()),
            Strategy::juewu_draft(Arc::new(UniformEvaluator), fast),
        ];
        let t = run_tournament(&specs, 10, &o, &cfg, 5).unwrap();
        assert_eq!(t.pairs.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let s = t.result(i, j).unwrap().mean + t.result(j, i).unwrap().mean;
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        let again = run_tournament(&specs, 10, &o, &cfg, 5).unwrap();
        assert_eq!(
            t.pairs.iter().map(|p| p.scores.clone()).collect::<Vec<_>>(),
            again.pairs.iter().map(|p| p.scores.clone()).collect::<Vec<_>>()
        );
        let table = t.render_table();
        assert_eq!(table.lines().filter(|l| l.contains('±')).count(), 2);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 31);
        assert!(run_tournament(&specs[..1], 10, &o, &cfg, 5).is_err());
        assert!(run_pairing(&specs[0], &specs[1], 3, &o, &cfg, 5).is_err());
    }
}
