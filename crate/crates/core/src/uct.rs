//! Plain UCT over the current round only: uniform expansion, random legal
//! rollouts to the end of the round, reward = that round's z.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::{DraftState, GameError, HeroId, WinRate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UctParams {
    pub iterations: u32,
    /// UCB1 constant `c` in `c·√(ln C_parent / C)`.
    pub exploration: f64,
}

impl Default for UctParams {
    fn default() -> Self {
        UctParams {
            iterations: 1600,
            exploration: 1.0,
        }
    }
}

struct UctNode {
    action: HeroId,
    parent: usize,
    children: Vec<usize>,
    untried: Vec<HeroId>,
    visits: u32,
    /// Sum of rewards from player one's side.
    w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UctResult {
    /// `(hero, visits, mean reward)` for each legal root action.
    pub actions: Vec<(HeroId, u32, f64)>,
    pub best: HeroId,
    pub rollouts: u32,
}

fn round_over(s: &DraftState, round: usize) -> bool {
    s.is_terminal() || s.round() != round
}

/// Runs UCT from `root` and returns the most visited action (lowest id on ties).
pub fn uct_search<R: Rng + ?Sized>(
    root: &DraftState,
    predictor: &dyn WinRate,
    params: &UctParams,
    rng: &mut R,
) -> Result<UctResult, GameError> {
    let round = root.round();
    if root.is_terminal() {
        return Err(GameError::Terminal);
    }
    let mut nodes = vec![UctNode {
        action: HeroId::MAX,
        parent: usize::MAX,
        children: Vec::new(),
        untried: root.legal_actions()?,
        visits: 0,
        w: 0.0,
    }];
    for _ in 0..params.iterations.max(1) {
        let mut state = root.clone();
        let mut cur = 0;
        // Selection.
        while nodes[cur].untried.is_empty() && !nodes[cur].children.is_empty() {
            let sign = state.to_move()?.sign();
            let ln_parent = (nodes[cur].visits as f64).ln();
            let mut best = nodes[cur].children[0];
            let mut best_score = f64::NEG_INFINITY;
            for &c in &nodes[cur].children {
                let n = nodes[c].visits as f64;
                let score = sign * nodes[c].w / n + params.exploration * (ln_parent / n).sqrt();
                if score > best_score {
                    best_score = score;
                    best = c;
                }
            }
            cur = best;
            state.push_unchecked(nodes[cur].action);
        }
        // Expansion.
        if !nodes[cur].untried.is_empty() {
            let a = nodes[cur].untried.remove(0);
            state.push_unchecked(a);
            let untried = if round_over(&state, round) { Vec::new() } else { state.legal_actions()? };
            nodes.push(UctNode {
                action: a,
                parent: cur,
                children: Vec::new(),
                untried,
                visits: 0,
                w: 0.0,
            });
            let id = nodes.len() - 1;
            nodes[cur].children.push(id);
            cur = id;
        }
        // Rollout.
        while !round_over(&state, round) {
            let legal = state.legal_actions()?;
            state.push_unchecked(*legal.choose(rng).expect("legal move exists"));
        }
        let reward = state.round_value(round, predictor)?;
        // Back-propagation.
        let mut k = cur;
        while k != usize::MAX {
            nodes[k].visits += 1;
            nodes[k].w += reward;
            k = nodes[k].parent;
        }
    }
    let actions: Vec<(HeroId, u32, f64)> = nodes[0]
        .children
        .iter()
        .map(|&c| (nodes[c].action, nodes[c].visits, nodes[c].w / nodes[c].visits.max(1) as f64))
        .collect();
    let mut sorted = actions.clone();
    sorted.sort_by_key(|a| a.0);
    let best = sorted.iter().fold(sorted[0], |b, a| if a.1 > b.1 { *a } else { b }).0;
    Ok(UctResult {
        actions: sorted,
        best,
        rollouts: params.iterations.max(1),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::game::GameConfig;
    use crate::oracle::{OracleParams, SyntheticOracle};
    use crate::solver::{exact_solve, DEFAULT_LEAF_BUDGET};

    #[test]
    fn finds_exact_optimum_on_tiny_bo1() {
        let mut hits = 0;
        for seed in 0..5 {
            let cfg = Arc::new(GameConfig::small(6, 1).unwrap());
            let o = SyntheticOracle::sample(seed, 6, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
            let s = DraftState::new(cfg);
            let exact = exact_solve(&s, &o, DEFAULT_LEAF_BUDGET).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = uct_search(
                &s,
                &o,
                &UctParams {
                    iterations: 100_000,
                    ..UctParams::default()
                },
                &mut rng,
            )
            .unwrap();
            let regret = exact.regret(r.best, crate::game::Player::One).unwrap();
            hits += (regret < 0.01) as usize;
        }
        assert!(hits >= 4, "{hits}");
    }

    #[test]
    fn stays_inside_the_current_round() {
        let cfg = Arc::new(GameConfig::small(8, 2).unwrap());
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let s = DraftState::from_picks(cfg, &[0, 1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = uct_search(&s, &o, &UctParams::default(), &mut rng).unwrap();
        let legal = s.legal_actions().unwrap();
        assert!(legal.contains(&r.best));
        assert_eq!(r.actions.len(), legal.len());
        // The last pick of a round: every action is a one-step rollout.
        let best_reward = legal
            .iter()
            .map(|&a| s.apply(a).unwrap().round_value(0, &o).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let picked = s.apply(r.best).unwrap().round_value(0, &o).unwrap();
        assert_eq!(picked, best_reward);
    }

    #[test]
    fn seeded_runs_repeat() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.5, 0.5, 2)).unwrap();
        let s = DraftState::new(cfg);
        let run = || uct_search(&s, &o, &UctParams::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(run(), run());
    }
}
