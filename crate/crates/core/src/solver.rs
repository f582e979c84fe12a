//! Exhaustive minimax over the draft tree, memoized on the order-insensitive
//! part of the state. Used as the correctness oracle for the searchers.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::game::{Camp, DraftState, GameError, HeroId, Player, WinRate};

pub const DEFAULT_LEAF_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("exact solve exceeded the budget of {0} win-rate evaluations")]
    BudgetExceeded(u64),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactSolution {
    /// Game value from player one's side, including rounds already completed.
    pub value: f64,
    /// Full-game value after each legal action, same frame as `value`.
    pub action_values: Vec<(HeroId, f64)>,
    /// Actions attaining the minimax value for the player to move.
    pub optimal: Vec<HeroId>,
    pub leaf_evaluations: u64,
    pub memo_entries: usize,
}

impl ExactSolution {
    /// How much worse `action` is than optimal for the player to move (≥ 0).
    pub fn regret(&self, action: HeroId, mover: Player) -> Option<f64> {
        let v = self.action_values.iter().find(|(a, _)| *a == action)?.1;
        Some(mover.sign() * (self.value - v))
    }
}

#[derive(Hash, PartialEq, Eq)]
struct Key {
    t: u16,
    history: [u128; 2],
    current: [u128; 2],
}

impl Key {
    fn of(s: &DraftState) -> Key {
        Key {
            t: s.t() as u16,
            history: [s.history(Player::One).bits(), s.history(Player::Two).bits()],
            current: [s.current_round(Camp::One).bits(), s.current_round(Camp::Two).bits()],
        }
    }
}

struct Solver<'a> {
    predictor: &'a dyn WinRate,
    budget: u64,
    evals: u64,
    memo: HashMap<Key, f64>,
}

impl Solver<'_> {
    /// Sum of round values still to be decided from `s`, player-one frame.
    fn value_to_go(&mut self, s: &DraftState) -> Result<f64, SolveError> {
        if s.is_terminal() {
            return Ok(0.0);
        }
        let key = Key::of(s);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let best = self.best_over_actions(s)?.0;
        self.memo.insert(key, best);
        Ok(best)
    }

    fn action_value(&mut self, s: &DraftState, a: HeroId) -> Result<f64, SolveError> {
        let child = s.apply(a)?;
        let mut v = 0.0;
        if let Some(d) = child.just_completed_round() {
            self.evals += 1;
            if self.evals > self.budget {
                return Err(SolveError::BudgetExceeded(self.budget));
            }
            v += child.round_value(d, self.predictor)?;
        }
        Ok(v + self.value_to_go(&child)?)
    }

    fn best_over_actions(&mut self, s: &DraftState) -> Result<(f64, Vec<(HeroId, f64)>), SolveError> {
        let sign = s.to_move()?.sign();
        let mut values = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for a in s.legal_actions()? {
            let v = self.action_value(s, a)?;
            best = best.max(sign * v);
            values.push((a, v));
        }
        Ok((sign * best, values))
    }
}

/// Minimax value of `state` (player one maximizes) and the optimal actions of
/// the player to move. Fails if more than `leaf_budget` win-rate calls are needed.
pub fn exact_solve(
    state: &DraftState,
    predictor: &dyn WinRate,
    leaf_budget: u64,
) -> Result<ExactSolution, SolveError> {
    let mut solver = Solver {
        predictor,
        budget: leaf_budget,
        evals: 0,
        memo: HashMap::new(),
    };
    let mut done = 0.0;
    let completed = state.t() / state.config().picks_per_round();
    for d in 0..completed {
        done += state.round_value(d, predictor)?;
    }
    if state.is_terminal() {
        return Ok(ExactSolution {
            value: done,
            action_values: Vec::new(),
            optimal: Vec::new(),
            leaf_evaluations: 0,
            memo_entries: 0,
        });
    }
    let sign = state.to_move()?.sign();
    let (to_go, values) = solver.best_over_actions(state)?;
    let tol = 1e-12 * to_go.abs().max(1.0);
    let optimal = values
        .iter()
        .filter(|(_, v)| sign * (to_go - v) <= tol)
        .map(|(a, _)| *a)
        .collect();
    Ok(ExactSolution {
        value: done + to_go,
        action_values: values.into_iter().map(|(a, v)| (a, done + v)).collect(),
        optimal,
        leaf_evaluations: solver.evals,
        memo_entries: solver.memo.len(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game::GameConfig;
    use crate::oracle::{OracleParams, SyntheticOracle};

    /// Plain minimax without memoization, walking every pick sequence.
    fn brute(s: &DraftState, p: &dyn WinRate) -> f64 {
        if s.is_terminal() {
            return s.terminal_reward(p).unwrap();
        }
        let sign = s.to_move().unwrap().sign();
        s.legal_actions()
            .unwrap()
            .into_iter()
            .map(|a| sign * brute(&s.apply(a).unwrap(), p))
            .fold(f64::NEG_INFINITY, f64::max)
            * sign
    }

    fn two_pick_config(n: usize) -> Arc<GameConfig> {
        let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
        Arc::new(GameConfig::new(n, 2, 1, order, vec![Player::One]).unwrap())
    }

    #[test]
    fn four_hero_fixture() {
        let o = SyntheticOracle::from_strengths(vec![1.0, 0.0, 0.0, -1.0], 1.0).unwrap();
        let s = DraftState::new(two_pick_config(4));
        let sol = exact_solve(&s, &o, DEFAULT_LEAF_BUDGET).unwrap();
        assert_eq!(sol.optimal, vec![0]);
        let expected = 2.0 * (1.0 / (1.0 + (-1.0f64).exp()) - 0.5);
        assert!((sol.value - expected).abs() < 1e-12);
        assert!((sol.value - 0.4621).abs() < 1e-4);
        assert!((sol.value - brute(&s, &o)).abs() < 1e-12);
        let reply = exact_solve(&s.apply(0).unwrap(), &o, DEFAULT_LEAF_BUDGET).unwrap();
        assert_eq!(reply.optimal, vec![1, 2]);
    }

    #[test]
    fn one_step_left_is_argmax() {
        let o = SyntheticOracle::sample(4, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let s = DraftState::from_picks(cfg, &[0, 1, 2]).unwrap();
        let sol = exact_solve(&s, &o, DEFAULT_LEAF_BUDGET).unwrap();
        let best = s
            .legal_actions()
            .unwrap()
            .into_iter()
            .map(|a| s.apply(a).unwrap().terminal_reward(&o).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(sol.value, best);
        for a in &sol.optimal {
            assert_eq!(s.apply(*a).unwrap().terminal_reward(&o).unwrap(), best);
        }
    }

    #[test]
    fn zero_oracle_value_is_zero() {
        let o = SyntheticOracle::sample(4, 6, OracleParams::new(0.0, 0.0, 0.0, 2)).unwrap();
        let cfg = Arc::new(GameConfig::small(6, 2).unwrap());
        let sol = exact_solve(&DraftState::new(cfg), &o, DEFAULT_LEAF_BUDGET).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.optimal.len(), 6);
    }

    #[test]
    fn memoized_matches_brute_force_multi_round() {
        for seed in 0..3 {
            let o = SyntheticOracle::sample(seed, 6, OracleParams::new(1.0, 0.7, 0.7, 2)).unwrap();
            let cfg = Arc::new(GameConfig::small(6, 2).unwrap());
            let s = DraftState::from_picks(cfg, &[0, 3]).unwrap();
            let sol = exact_solve(&s, &o, DEFAULT_LEAF_BUDGET).unwrap();
            assert!((sol.value - brute(&s, &o)).abs() < 1e-12);
        }
    }

    #[test]
    fn strongest_hero_first_without_interactions() {
        for seed in 0..10 {
            let o = SyntheticOracle::sample(seed, 8, OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
            let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
            let sol = exact_solve(&DraftState::new(cfg), &o, DEFAULT_LEAF_BUDGET).unwrap();
            let strongest = (0..8)
                .max_by(|&a, &b| o.base_strength[a].total_cmp(&o.base_strength[b]))
                .unwrap() as HeroId;
            assert!(sol.optimal.contains(&strongest), "seed {seed}");
        }
    }

    #[test]
    fn antisymmetric_under_relabel() {
        let o = SyntheticOracle::sample(8, 6, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let order = GameConfig::order_from_digits(&[1, 2, 2, 1]).unwrap();
        let a = GameConfig::new(6, 4, 2, order.clone(), vec![Player::One, Player::Two]).unwrap();
        let b = GameConfig::new(6, 4, 2, order, vec![Player::Two, Player::One]).unwrap();
        let va = exact_solve(&DraftState::new(Arc::new(a)), &o, DEFAULT_LEAF_BUDGET).unwrap().value;
        let vb = exact_solve(&DraftState::new(Arc::new(b)), &o, DEFAULT_LEAF_BUDGET).unwrap().value;
        assert!((va + vb).abs() < 1e-12);
    }

    #[test]
    fn budget_guard() {
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        assert!(matches!(
            exact_solve(&DraftState::new(cfg), &o, 10),
            Err(SolveError::BudgetExceeded(10))
        ));
    }
}
