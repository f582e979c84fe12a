//! Parallel PUCT over the draft tree.
//!
//! Values are stored from player one's side and flipped at selection, since
//! the pick order is not strictly alternating. A node reached by the pick that
//! completes a round caches that round's z; back-propagation folds it into the
//! running value, so a node in round `d` accumulates the leaf value plus the
//! z of every round from `d` on.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DraftState, GameError, HeroId, WinRate};
use crate::policy_value::{Evaluator, PolicyValueError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Eval(#[from] PolicyValueError),
    #[error("invalid search parameters: {0}")]
    Params(String),
}

/// How round outcomes enter the back-propagated value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// Accumulate every completed round's z up the path; net values are
    /// scaled by the number of rounds left.
    LongTerm,
    /// A node sees only its own round: crossing a round boundary replaces the
    /// running value with that round's z.
    RoundOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootNoise {
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for RootNoise {
    fn default() -> Self {
        RootNoise { alpha: 0.3, epsilon: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub iterations: u32,
    pub c_puct: f64,
    pub c_vl: f64,
    pub tau: f64,
    pub noise: Option<RootNoise>,
    pub workers: usize,
    /// Leaves gathered per evaluator call by each worker.
    pub batch: usize,
    pub value_mode: ValueMode,
    /// Stop early and keep the visits gathered so far.
    pub time_limit_ms: Option<u64>,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            iterations: 1600,
            c_puct: 1.0,
            c_vl: 3.0,
            tau: 1.0,
            noise: None,
            workers: 1,
            batch: 8,
            value_mode: ValueMode::LongTerm,
            time_limit_ms: None,
            seed: 0,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Params(m.to_string()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.c_vl >= 0.0) || !(self.c_puct >= 0.0) {
            return bad("c_puct and c_vl must be non-negative");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be non-negative (0 means argmax)");
        }
        if self.workers < 1 || self.batch < 1 {
            return bad("workers and batch must be at least 1");
        }
        if let Some(n) = self.noise {
            if !(n.alpha > 0.0) || !(0.0..=1.0).contains(&n.epsilon) {
                return bad("noise needs alpha > 0 and epsilon in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Unexpanded,
    Expanding,
    Expanded,
    Terminal,
}

#[derive(Debug)]
struct Stats {
    visits: u32,
    w: f64,
    in_flight: u32,
    status: Status,
    /// z of the round this node's pick completed, player-one frame; NaN if none.
    boundary: f64,
    boundary_known: bool,
}

#[derive(Debug)]
struct Node {
    stats: Mutex<Stats>,
    children: OnceLock<Box<[Node]>>,
    prior: f32,
    action: HeroId,
}

impl Node {
    fn new(action: HeroId, prior: f32) -> Node {
        Node {
            stats: Mutex::new(Stats {
                visits: 0,
                w: 0.0,
                in_flight: 0,
                status: Status::Unexpanded,
                boundary: f64::NAN,
                boundary_known: false,
            }),
            children: OnceLock::new(),
            prior,
            action,
        }
    }

    fn children(&self) -> &[Node] {
        self.children.get().map(|c| &c[..]).unwrap_or(&[])
    }
}

/// Per-action root statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub hero: HeroId,
    pub visits: u32,
    /// Mean value from player one's side; 0 if unvisited.
    pub q: f64,
    pub prior: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: u32,
    pub elapsed_ms: f64,
    pub max_depth: usize,
    pub nodes_created: usize,
    pub phi_calls: u64,
    pub evaluations: u64,
    pub collisions: u64,
    pub timed_out: bool,
    pub top: Vec<ActionStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Every legal root action in ascending hero order.
    pub actions: Vec<ActionStats>,
    pub root_visits: u32,
    /// Root mean value, player one frame.
    pub root_q: f64,
    pub diagnostics: Diagnostics,
}

impl SearchResult {
    /// Most visited action; lowest hero id on ties.
    pub fn best(&self) -> HeroId {
        let mut best = &self.actions[0];
        for a in &self.actions[1..] {
            if a.visits > best.visits {
                best = a;
            }
        }
        best.hero
    }

    /// π(a) ∝ C(a)^{1/τ}; τ = 0 gives one-hot on [`SearchResult::best`].
    pub fn pi(&self, tau: f64) -> Vec<(HeroId, f64)> {
        if tau <= 0.0 {
            let b = self.best();
            return self.actions.iter().map(|a| (a.hero, (a.hero == b) as u8 as f64)).collect();
        }
        let weights: Vec<f64> = self.actions.iter().map(|a| (a.visits as f64).powf(1.0 / tau)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            let u = 1.0 / self.actions.len() as f64;
            return self.actions.iter().map(|a| (a.hero, u)).collect();
        }
        self.actions.iter().zip(weights).map(|(a, w)| (a.hero, w / total)).collect()
    }

    /// π as a dense vector over all `n_heroes`.
    pub fn pi_dense(&self, tau: f64, n_heroes: usize) -> Vec<f32> {
        let mut out = vec![0.0; n_heroes];
        for (h, p) in self.pi(tau) {
            out[h as usize] = p as f32;
        }
        out
    }
}

/// Samples from `pi` raised to `1/τ`; τ = 0 is argmax with lowest-id ties.
pub fn sample_action<R: Rng + ?Sized>(pi: &[(HeroId, f64)], tau: f64, rng: &mut R) -> HeroId {
    assert!(!pi.is_empty(), "empty distribution");
    if tau <= 0.0 {
        let mut best = pi[0];
        for &(h, p) in &pi[1..] {
            if p > best.1 || (p == best.1 && h < best.0) {
                best = (h, p);
            }
        }
        return best.0;
    }
    let w: Vec<f64> = pi.iter().map(|&(_, p)| p.max(0.0).powf(1.0 / tau)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return pi[rng.random_range(0..pi.len())].0;
    }
    let mut u = rng.random::<f64>() * total;
    for (&(h, _), &wi) in pi.iter().zip(&w) {
        if u < wi {
            return h;
        }
        u -= wi;
    }
    pi.iter().zip(&w).rev().find(|(_, &wi)| wi > 0.0).map(|(&(h, _), _)| h).unwrap()
}

/// A search tree rooted at a state; keep it to continue searching or to reuse
/// the subtree under the chosen action.
#[derive(Debug)]
pub struct SearchTree {
    root: Node,
    state: DraftState,
}

/// Summary of a tree walk for invariant tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeReport {
    pub expanded_nodes: usize,
    pub total_nodes: usize,
    pub conservation_violations: usize,
    pub in_flight_nodes: usize,
    pub q_bound_violations: usize,
}

impl TreeReport {
    pub fn ok(&self) -> bool {
        self.conservation_violations == 0 && self.in_flight_nodes == 0 && self.q_bound_violations == 0
    }
}

struct Ctx<'a> {
    evaluator: &'a dyn Evaluator,
    predictor: &'a dyn WinRate,
    params: &'a SearchParams,
    claimed: AtomicU32,
    collisions: AtomicU64,
    phi_calls: AtomicU64,
    evaluations: AtomicU64,
    nodes: AtomicUsize,
    max_depth: AtomicUsize,
    stop: &'a AtomicBool,
    timed_out: AtomicBool,
    deadline: Option<Instant>,
}

enum Descent<'t> {
    Leaf(Vec<&'t Node>, DraftState),
    Terminal(Vec<&'t Node>),
    Collision(Vec<&'t Node>),
}

impl SearchTree {
    pub fn new(state: DraftState) -> Result<Self, SearchError> {
        if state.is_terminal() {
            return Err(GameError::Terminal.into());
        }
        Ok(SearchTree {
            root: Node::new(HeroId::MAX, 1.0),
            state,
        })
    }

    pub fn state(&self) -> &DraftState {
        &self.state
    }

    /// The subtree under `action`, if it was created and is not terminal.
    pub fn advance(self, action: HeroId) -> Option<SearchTree> {
        let state = self.state.apply(action).ok()?;
        if state.is_terminal() {
            return None;
        }
        let children = self.root.children.into_inner()?.into_vec();
        let child = children.into_iter().find(|c| c.action == action)?;
        Some(SearchTree { root: child, state })
    }

    /// Runs `params.iterations` further simulations from the root.
    pub fn search(
        &mut self,
        evaluator: &dyn Evaluator,
        predictor: &dyn WinRate,
        params: &SearchParams,
        cancel: Option<&AtomicBool>,
    ) -> Result<SearchResult, SearchError> {
        params.validate()?;
        let start = Instant::now();
        let never = AtomicBool::new(false);
        let ctx = Ctx {
            evaluator,
            predictor,
            params,
            claimed: AtomicU32::new(0),
            collisions: AtomicU64::new(0),
            phi_calls: AtomicU64::new(0),
            evaluations: AtomicU64::new(0),
            nodes: AtomicUsize::new(0),
            max_depth: AtomicUsize::new(0),
            stop: cancel.unwrap_or(&never),
            timed_out: AtomicBool::new(false),
            deadline: params.time_limit_ms.map(|ms| start + Duration::from_millis(ms)),
        };
        let needs_root = self.root.stats.lock().status == Status::Unexpanded;
        if needs_root {
            self.root.stats.lock().status = Status::Expanding;
            let ev = evaluator.evaluate(&[&self.state])?.remove(0);
            ctx.evaluations.fetch_add(1, Ordering::Relaxed);
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let noise = params.noise.map(|n| (n, &mut rng));
            let v = Self::expand(&ctx, &self.root, &self.state, &ev.policy, ev.value, noise)?;
            let mut st = self.root.stats.lock();
            st.visits += 1;
            st.w += v;
        }
        let tree = &*self;
        let result: Result<(), SearchError> = if params.workers == 1 {
            tree.worker(&ctx)
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..params.workers).map(|_| scope.spawn(|| tree.worker(&ctx))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("search worker panicked"))
                    .collect::<Result<Vec<()>, _>>()
                    .map(|_| ())
            })
        };
        result?;
        let (root_visits, root_q) = {
            let st = self.root.stats.lock();
            (st.visits, if st.visits > 0 { st.w / st.visits as f64 } else { 0.0 })
        };
        let actions: Vec<ActionStats> = self
            .root
            .children()
            .iter()
            .map(|c| {
                let st = c.stats.lock();
                ActionStats {
                    hero: c.action,
                    visits: st.visits,
                    q: if st.visits > 0 { st.w / st.visits as f64 } else { 0.0 },
                    prior: c.prior,
                }
            })
            .collect();
        let mut top = actions.clone();
        top.sort_by(|a, b| b.visits.cmp(&a.visits).then(a.hero.cmp(&b.hero)));
        top.truncate(5);
        let diagnostics = Diagnostics {
            iterations: ctx.claimed.load(Ordering::Relaxed),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            max_depth: ctx.max_depth.load(Ordering::Relaxed),
            nodes_created: ctx.nodes.load(Ordering::Relaxed),
            phi_calls: ctx.phi_calls.load(Ordering::Relaxed),
            evaluations: ctx.evaluations.load(Ordering::Relaxed),
            collisions: ctx.collisions.load(Ordering::Relaxed),
            timed_out: ctx.timed_out.load(Ordering::Relaxed),
            top,
        };
        Ok(SearchResult {
            actions,
            root_visits,
            root_q,
            diagnostics,
        })
    }

    fn should_stop(ctx: &Ctx) -> bool {
        if ctx.stop.load(Ordering::Relaxed) {
            return true;
        }
        if let Some(d) = ctx.deadline {
            if Instant::now() >= d {
                ctx.timed_out.store(true, Ordering::Relaxed);
                return true;
            }
        }
        false
    }

    fn claim(ctx: &Ctx) -> bool {
        ctx.claimed
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |c| (c < ctx.params.iterations).then_some(c + 1))
            .is_ok()
    }

    fn worker(&self, ctx: &Ctx) -> Result<(), SearchError> {
        let mut pending: Vec<(Vec<&Node>, DraftState)> = Vec::with_capacity(ctx.params.batch);
        loop {
            if Self::should_stop(ctx) {
                return Ok(());
            }
            let mut collided = false;
            while pending.len() < ctx.params.batch {
                if !Self::claim(ctx) {
                    break;
                }
                match self.descend(ctx)? {
                    Descent::Leaf(path, state) => pending.push((path, state)),
                    Descent::Terminal(path) => self.backup(ctx, &path, 0.0),
                    Descent::Collision(path) => {
                        self.revert(ctx, &path);
                        ctx.claimed.fetch_sub(1, Ordering::AcqRel);
                        ctx.collisions.fetch_add(1, Ordering::Relaxed);
                        collided = true;
                        break;
                    }
                }
            }
            if pending.is_empty() {
                if collided {
                    std::thread::yield_now();
                    continue;
                }
                return Ok(());
            }
            let states: Vec<&DraftState> = pending.iter().map(|(_, s)| s).collect();
            let evals = ctx.evaluator.evaluate(&states)?;
            ctx.evaluations.fetch_add(evals.len() as u64, Ordering::Relaxed);
            for ((path, state), ev) in pending.drain(..).zip(evals) {
                let leaf = *path.last().unwrap();
                let v = Self::expand(ctx, leaf, &state, &ev.policy, ev.value, None)?;
                self.backup(ctx, &path, v);
            }
        }
    }

    /// Picks the child maximizing `sign·Q + c_puct·P·√ΣC/(1+C) − VL/(1+C)`.
    fn select<'t>(node: &'t Node, sign: f64, params: &SearchParams) -> &'t Node {
        let children = node.children();
        let snapshot: Vec<(u32, f64, u32)> = children
            .iter()
            .map(|c| {
                let st = c.stats.lock();
                (st.visits, st.w, st.in_flight)
            })
            .collect();
        let total: u32 = snapshot.iter().map(|s| s.0).sum();
        let sqrt_total = (total as f64).sqrt();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (c, &(visits, w, in_flight))) in children.iter().zip(&snapshot).enumerate() {
            let n = visits as f64;
            let q = if visits > 0 { w / n } else { 0.0 };
            let score = sign * q + params.c_puct * c.prior as f64 * sqrt_total / (1.0 + n) - in_flight as f64 * params.c_vl / (1.0 + n);
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        &children[best]
    }

    fn descend<'t>(&'t self, ctx: &Ctx) -> Result<Descent<'t>, SearchError> {
        let mut state = self.state.clone();
        let mut node = &self.root;
        let mut path = vec![node];
        node.stats.lock().in_flight += 1;
        loop {
            let status = node.stats.lock().status;
            match status {
                Status::Expanded => {
                    let sign = state.to_move()?.sign();
                    let child = Self::select(node, sign, ctx.params);
                    state.push_unchecked(child.action);
                    {
                        let mut st = child.stats.lock();
                        st.in_flight += 1;
                        if !st.boundary_known {
                            if let Some(d) = state.just_completed_round() {
                                ctx.phi_calls.fetch_add(1, Ordering::Relaxed);
                                st.boundary = state.round_value(d, ctx.predictor)?;
                            }
                            st.boundary_known = true;
                        }
                    }
                    path.push(child);
                    node = child;
                }
                Status::Terminal => return Ok(self.finish(ctx, Descent::Terminal(path))),
                Status::Expanding => return Ok(Descent::Collision(path)),
                Status::Unexpanded => {
                    let mut st = node.stats.lock();
                    match st.status {
                        Status::Unexpanded if state.is_terminal() => {
                            st.status = Status::Terminal;
                            drop(st);
                            return Ok(self.finish(ctx, Descent::Terminal(path)));
                        }
                        Status::Unexpanded => {
                            st.status = Status::Expanding;
                            drop(st);
                            return Ok(self.finish(ctx, Descent::Leaf(path, state)));
                        }
                        _ => {
                            drop(st);
                            continue;
                        }
                    }
                }
            }
        }
    }

    fn finish<'t>(&self, ctx: &Ctx, d: Descent<'t>) -> Descent<'t> {
        let depth = match &d {
            Descent::Leaf(p, _) | Descent::Terminal(p) | Descent::Collision(p) => p.len() - 1,
        };
        ctx.max_depth.fetch_max(depth, Ordering::Relaxed);
        d
    }

    /// Creates children with masked, renormalized priors and returns the leaf
    /// value in player one's frame.
    fn expand(
        ctx: &Ctx,
        node: &Node,
        state: &DraftState,
        policy: &[f32],
        value: f32,
        noise: Option<(RootNoise, &mut ChaCha8Rng)>,
    ) -> Result<f64, SearchError> {
        let legal = state.legal_actions()?;
        let mut priors: Vec<f64> = legal
            .iter()
            .map(|&h| policy.get(h as usize).copied().unwrap_or(0.0).max(0.0) as f64)
            .collect();
        let mass: f64 = priors.iter().sum();
        if mass > 1e-30 && mass.is_finite() {
            priors.iter_mut().for_each(|p| *p /= mass);
        } else {
            priors.fill(1.0 / legal.len() as f64);
        }
        if let Some((n, rng)) = noise {
            if legal.len() > 1 {
                // Dirichlet(α) as normalized Gamma(α, 1) draws.
                let gamma = Gamma::new(n.alpha, 1.0).expect("alpha > 0");
                let eta: Vec<f64> = (0..legal.len()).map(|_| gamma.sample(rng)).collect();
                let total: f64 = eta.iter().sum();
                if total > 0.0 {
                    for (p, e) in priors.iter_mut().zip(eta) {
                        *p = (1.0 - n.epsilon) * *p + n.epsilon * e / total;
                    }
                }
            }
        }
        let children: Box<[Node]> = legal.iter().zip(&priors).map(|(&h, &p)| Node::new(h, p as f32)).collect();
        ctx.nodes.fetch_add(children.len(), Ordering::Relaxed);
        node.children.set(children).expect("expanded once");
        node.stats.lock().status = Status::Expanded;
        let sign = state.to_move()?.sign();
        let v = value as f64 * sign;
        Ok(match ctx.params.value_mode {
            ValueMode::LongTerm => v * (state.config().rounds() - state.round()) as f64,
            ValueMode::RoundOnly => v,
        })
    }

    fn backup(&self, ctx: &Ctx, path: &[&Node], leaf_value: f64) {
        backup_path(ctx.params.value_mode, path, leaf_value);
    }

    fn revert(&self, _ctx: &Ctx, path: &[&Node]) {
        for node in path {
            let mut st = node.stats.lock();
            assert!(st.in_flight > 0, "virtual loss underflow");
            st.in_flight -= 1;
        }
    }

    /// Walks the tree checking visit conservation, zero virtual loss, and
    /// `|Q|` within the rounds a node can still account for.
    pub fn check_invariants(&self) -> TreeReport {
        let mut report = TreeReport::default();
        let cfg = self.state.config();
        let (l, rounds) = (cfg.picks_per_round(), cfg.rounds());
        let mut stack = vec![(&self.root, self.state.t(), true)];
        while let Some((node, t, is_root)) = stack.pop() {
            report.total_nodes += 1;
            let st = node.stats.lock();
            if st.in_flight != 0 {
                report.in_flight_nodes += 1;
            }
            if st.visits > 0 {
                let own = (!is_root && st.boundary_known && !st.boundary.is_nan()) as usize;
                let bound = (rounds - (t / l).min(rounds) + own) as f64 + 1e-9;
                if (st.w / st.visits as f64).abs() > bound {
                    report.q_bound_violations += 1;
                }
            }
            if st.status == Status::Expanded {
                report.expanded_nodes += 1;
                let sum: u32 = node.children().iter().map(|c| c.stats.lock().visits).sum();
                if st.visits != 1 + sum {
                    report.conservation_violations += 1;
                }
            }
            drop(st);
            for c in node.children() {
                stack.push((c, t + 1, false));
            }
        }
        report
    }

    /// `(visits, W)` of the node reached by `picks` from the root.
    pub fn node_stats(&self, picks: &[HeroId]) -> Option<(u32, f64)> {
        let mut node = &self.root;
        for &h in picks {
            node = node.children().iter().find(|c| c.action == h)?;
        }
        let st = node.stats.lock();
        Some((st.visits, st.w))
    }
}

/// Walks leaf to root with running value `G`, folding in cached round z.
fn accumulate(mode: ValueMode, g: f64, boundary: f64) -> f64 {
    match mode {
        ValueMode::LongTerm => g + boundary,
        ValueMode::RoundOnly => boundary,
    }
}

/// Backed-up values along a root-first path given each node's boundary z.
/// The root's own boundary never counts.
pub fn path_returns(mode: ValueMode, boundaries: &[Option<f64>], leaf_value: f64) -> Vec<f64> {
    let mut g = leaf_value;
    let mut out = vec![0.0; boundaries.len()];
    for (i, b) in boundaries.iter().enumerate().rev() {
        if let (true, Some(z)) = (i > 0, b) {
            g = accumulate(mode, g, *z);
        }
        out[i] = g;
    }
    out
}

fn backup_path(mode: ValueMode, path: &[&Node], leaf_value: f64) {
    let mut g = leaf_value;
    for (i, node) in path.iter().enumerate().rev() {
        let mut st = node.stats.lock();
        if i > 0 && st.boundary_known && !st.boundary.is_nan() {
            g = accumulate(mode, g, st.boundary);
        }
        st.visits += 1;
        st.w += g;
        assert!(st.in_flight > 0, "virtual loss underflow");
        st.in_flight -= 1;
    }
}

/// Fresh-tree search from `state`.
pub fn run_search(
    state: &DraftState,
    evaluator: &dyn Evaluator,
    predictor: &dyn WinRate,
    params: &SearchParams,
) -> Result<(SearchResult, SearchTree), SearchError> {
    let mut tree = SearchTree::new(state.clone())?;
    let result = tree.search(evaluator, predictor, params, None)?;
    Ok((result, tree))
}

/// An evaluator that counts states, for instrumentation.
pub struct Counting<E> {
    pub inner: E,
    pub count: AtomicU64,
}

impl<E> Counting<E> {
    pub fn new(inner: E) -> Self {
        Counting {
            inner,
            count: AtomicU64::new(0),
        }
    }
}

impl<E: Evaluator> Evaluator for Counting<E> {
    fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<crate::policy_value::Evaluation>, PolicyValueError> {
        self.count.fetch_add(states.len() as u64, Ordering::Relaxed);
        self.inner.evaluate(states)
    }
    fn calls(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

/// A win-rate function that counts calls.
pub struct CountingWinRate<P> {
    pub inner: P,
    pub count: AtomicU64,
}

impl<P> CountingWinRate<P> {
    pub fn new(inner: P) -> Self {
        CountingWinRate {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<P: WinRate> WinRate for CountingWinRate<P> {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.winrate(camp1, camp2)
    }
}

/// Shared handle for cancelling a running search from another thread.
pub type CancelFlag = Arc<AtomicBool>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameConfig, Player};
    use crate::oracle::{OracleParams, SyntheticOracle};
    use crate::policy_value::{Evaluation, UniformEvaluator};
    use crate::solver::{exact_solve, DEFAULT_LEAF_BUDGET};

    fn tiny(n: usize, rounds: usize) -> DraftState {
        let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
        let first = GameConfig::alternating(rounds);
        DraftState::new(Arc::new(GameConfig::new(n, 2, rounds, order, first).unwrap()))
    }

    fn params(iterations: u32) -> SearchParams {
        SearchParams {
            iterations,
            batch: 1,
            ..SearchParams::default()
        }
    }

    fn node(prior: f32, visits: u32, w: f64, in_flight: u32) -> Node {
        let n = Node::new(0, prior);
        {
            let mut st = n.stats.lock();
            st.visits = visits;
            st.w = w;
            st.in_flight = in_flight;
        }
        n
    }

    fn parent(children: Vec<Node>) -> Node {
        let p = Node::new(HeroId::MAX, 1.0);
        let kids: Box<[Node]> = children
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                c.action = i as HeroId;
                c
            })
            .collect();
        p.children.set(kids).unwrap();
        p
    }

    #[test]
    fn selection_follows_q_and_sign() {
        let p = parent(vec![node(0.5, 2, 0.2, 0), node(0.5, 2, 1.0, 0)]);
        let sp = SearchParams::default();
        assert_eq!(SearchTree::select(&p, 1.0, &sp).action, 1);
        assert_eq!(SearchTree::select(&p, -1.0, &sp).action, 0);
    }

    #[test]
    fn exploration_term_arithmetic() {
        // ΣC = 16, child C = 3, P = 0.5, Q = 0: bonus 0.5; the other child has
        // C = 13, Q = 0.46, P = 0.5: 0.46 + 0.5·4/14 = 0.6029 > 0.5.
        let p = parent(vec![node(0.5, 3, 0.0, 0), node(0.5, 13, 13.0 * 0.46, 0)]);
        assert_eq!(SearchTree::select(&p, 1.0, &SearchParams::default()).action, 1);
        let p = parent(vec![node(0.5, 3, 0.0, 0), node(0.5, 13, 13.0 * 0.35, 0)]);
        assert_eq!(SearchTree::select(&p, 1.0, &SearchParams::default()).action, 0);
    }

    #[test]
    fn virtual_loss_diverts_selection() {
        let p = parent(vec![node(0.5, 1, 0.5, 1), node(0.5, 1, 0.0, 0)]);
        // 0.5 + 0.5·√2/2 − 3/2 < 0 + 0.5·√2/2.
        assert_eq!(SearchTree::select(&p, 1.0, &SearchParams::default()).action, 1);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let p = parent(vec![node(0.25, 0, 0.0, 0), node(0.25, 0, 0.0, 0), node(0.5, 0, 0.0, 0)]);
        assert_eq!(SearchTree::select(&p, 1.0, &SearchParams::default()).action, 0);
    }

    #[test]
    fn one_iteration_visits_one_child() {
        let s = tiny(6, 1);
        let o = SyntheticOracle::sample(1, 6, OracleParams::new(1.0, 0.0, 0.0, 1)).unwrap();
        let (r, tree) = run_search(&s, &UniformEvaluator, &o, &params(1)).unwrap();
        assert_eq!(r.actions.len(), 6);
        assert_eq!(r.actions.iter().filter(|a| a.visits > 0).count(), 1);
        assert_eq!(r.root_visits, 2);
        assert!(tree.check_invariants().ok());
    }

    #[test]
    fn tau_zero_is_one_hot() {
        let s = tiny(6, 1);
        let o = SyntheticOracle::sample(1, 6, OracleParams::new(1.0, 0.0, 0.0, 1)).unwrap();
        let (r, _) = run_search(&s, &UniformEvaluator, &o, &params(200)).unwrap();
        let pi = r.pi(0.0);
        assert_eq!(pi.iter().filter(|p| p.1 == 1.0).count(), 1);
        assert_eq!(pi.iter().find(|p| p.1 == 1.0).unwrap().0, r.best());
        let soft = r.pi(1.0);
        assert!((soft.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converges_on_tiny_bo1() {
        for seed in 0..5 {
            let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
            let s = DraftState::new(Arc::new(GameConfig::new(6, 2, 1, order, vec![Player::One]).unwrap()));
            let o = SyntheticOracle::sample(seed, 6, OracleParams::new(1.0, 0.5, 0.5, 1)).unwrap();
            let exact = exact_solve(&s, &o, DEFAULT_LEAF_BUDGET).unwrap();
            let (r, tree) = run_search(&s, &UniformEvaluator, &o, &params(50_000)).unwrap();
            assert!(exact.optimal.contains(&r.best()), "seed {seed}");
            assert!(tree.check_invariants().ok());
        }
    }

    fn boundary_node(z: Option<f64>) -> Node {
        let n = node(1.0, 0, 0.0, 1);
        {
            let mut st = n.stats.lock();
            st.boundary_known = true;
            st.boundary = z.unwrap_or(f64::NAN);
        }
        n
    }

    #[test]
    fn path_accumulation_fixture() {
        // BO2: the leaf ends round 1 (z = 0.3, leaf value 0); the node ending
        // round 0 has z = 0.4.
        let nodes = [boundary_node(None), boundary_node(Some(0.4)), boundary_node(None), boundary_node(Some(0.3))];
        let path: Vec<&Node> = nodes.iter().collect();
        backup_path(ValueMode::LongTerm, &path, 0.0);
        let w: Vec<f64> = nodes.iter().map(|n| n.stats.lock().w).collect();
        assert_eq!(w, vec![0.4 + 0.3, 0.4 + 0.3, 0.3, 0.3]);
        assert!(nodes.iter().all(|n| n.stats.lock().in_flight == 0 && n.stats.lock().visits == 1));

        let nodes = [boundary_node(None), boundary_node(Some(0.4)), boundary_node(None), boundary_node(Some(0.3))];
        let path: Vec<&Node> = nodes.iter().collect();
        backup_path(ValueMode::RoundOnly, &path, 0.0);
        let w: Vec<f64> = nodes.iter().map(|n| n.stats.lock().w).collect();
        assert_eq!(w, vec![0.4, 0.4, 0.3, 0.3]);
        assert_eq!(path_returns(ValueMode::RoundOnly, &[None, Some(0.4), None, Some(0.3)], 0.0), w);
    }

    #[test]
    fn root_boundary_is_ignored() {
        let nodes = [boundary_node(Some(0.9)), boundary_node(None)];
        let path: Vec<&Node> = nodes.iter().collect();
        backup_path(ValueMode::LongTerm, &path, 0.25);
        assert_eq!(nodes[0].stats.lock().w, 0.25);
    }

    #[test]
    fn single_path_ancestors_share_g() {
        let order = GameConfig::order_from_digits(&[1, 2]).unwrap();
        let cfg = Arc::new(GameConfig::new(4, 2, 1, order, vec![Player::One]).unwrap());
        let s = DraftState::from_picks(cfg, &[0]).unwrap();
        let o = SyntheticOracle::from_strengths(vec![1.0, 0.0, 0.0, -1.0], 1.0).unwrap();
        let (_, tree) = run_search(&s, &UniformEvaluator, &o, &params(1)).unwrap();
        let z = 2.0 * (o.winrate(&[0], &[1]) - 0.5);
        assert_eq!(tree.node_stats(&[1]).unwrap(), (1, z));
        assert_eq!(tree.node_stats(&[]).unwrap(), (2, z));
    }

    #[test]
    fn invariants_and_determinism_across_modes() {
        let cfg = Arc::new(GameConfig::small(8, 2).unwrap());
        let o = SyntheticOracle::sample(5, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        let net = crate::policy_value::PolicyValueNet::new(&cfg, vec![16], 1).unwrap();
        for mode in [ValueMode::LongTerm, ValueMode::RoundOnly] {
            for batch in [1, 8] {
                let p = SearchParams {
                    iterations: 3000,
                    batch,
                    value_mode: mode,
                    noise: Some(RootNoise::default()),
                    seed: 9,
                    ..SearchParams::default()
                };
                let s = DraftState::new(cfg.clone());
                let (a, ta) = run_search(&s, &net, &o, &p).unwrap();
                let (b, _) = run_search(&s, &net, &o, &p).unwrap();
                assert!(ta.check_invariants().ok(), "{:?}", ta.check_invariants());
                assert_eq!(a.actions, b.actions);
                assert_eq!(a.root_visits, 3001);
                assert_eq!(a.actions.iter().map(|x| x.visits).sum::<u32>(), 3000);
            }
        }
    }

    #[test]
    fn parallel_workers_keep_invariants() {
        let cfg = Arc::new(GameConfig::small(8, 2).unwrap());
        let o = SyntheticOracle::sample(5, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        let p = SearchParams {
            iterations: 4000,
            workers: 4,
            batch: 4,
            ..SearchParams::default()
        };
        let (r, tree) = run_search(&DraftState::new(cfg), &UniformEvaluator, &o, &p).unwrap();
        assert_eq!(r.actions.iter().map(|x| x.visits).sum::<u32>(), 4000);
        assert!(tree.check_invariants().ok());
    }

    #[test]
    fn adversarial_priors_fall_back_to_uniform() {
        struct Adversary;
        impl Evaluator for Adversary {
            fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<Evaluation>, PolicyValueError> {
                Ok(states
                    .iter()
                    .map(|s| {
                        let mut policy = vec![0.0; s.config().n_heroes()];
                        for h in s.history(Player::One).iter().chain(s.current_round(crate::game::Camp::One).iter()) {
                            policy[h as usize] = 1.0;
                        }
                        Evaluation { policy, value: 0.0 }
                    })
                    .collect())
            }
        }
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let s = DraftState::from_picks(cfg, &[0]).unwrap();
        let o = SyntheticOracle::sample(1, 8, OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
        let (r, _) = run_search(&s, &Adversary, &o, &params(1)).unwrap();
        assert!(r.actions.iter().all(|a| (a.prior - 1.0 / 7.0).abs() < 1e-6));
    }

    #[test]
    fn bo1_modes_coincide() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(2, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        let net = crate::policy_value::PolicyValueNet::new(&cfg, vec![16], 4).unwrap();
        let mut s = DraftState::new(cfg);
        while !s.is_terminal() {
            let mk = |mode| SearchParams {
                iterations: 500,
                value_mode: mode,
                ..SearchParams::default()
            };
            let (a, _) = run_search(&s, &net, &o, &mk(ValueMode::LongTerm)).unwrap();
            let (b, _) = run_search(&s, &net, &o, &mk(ValueMode::RoundOnly)).unwrap();
            assert_eq!(a.actions, b.actions);
            s = s.apply(a.best()).unwrap();
        }
    }

    #[test]
    fn subtree_reuse_keeps_counts() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(2, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        let (r, tree) = run_search(&DraftState::new(cfg), &UniformEvaluator, &o, &params(500)).unwrap();
        let best = r.best();
        let visits = r.actions.iter().find(|a| a.hero == best).unwrap().visits;
        let mut sub = tree.advance(best).unwrap();
        let r2 = sub.search(&UniformEvaluator, &o, &params(100), None).unwrap();
        assert_eq!(r2.root_visits, visits + 100);
        assert!(sub.check_invariants().ok());
    }

    #[test]
    fn cancel_and_deadline_stop_early() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(2, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        let stop = AtomicBool::new(true);
        let mut tree = SearchTree::new(DraftState::new(cfg.clone())).unwrap();
        let r = tree.search(&UniformEvaluator, &o, &params(10_000), Some(&stop)).unwrap();
        assert_eq!(r.root_visits, 1);
        let p = SearchParams {
            time_limit_ms: Some(0),
            ..params(1_000_000)
        };
        let (r, tree) = run_search(&DraftState::new(cfg), &UniformEvaluator, &o, &p).unwrap();
        assert!(r.diagnostics.timed_out);
        assert!(tree.check_invariants().ok());
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_action(&[(3, 0.0), (5, 1.0)], 1.0, &mut rng), 5);
        assert_eq!(sample_action(&[(3, 0.5), (1, 0.5)], 0.0, &mut rng), 1);
        let pi: Vec<(HeroId, f64)> = (0..5).map(|h| (h, 0.2)).collect();
        let mut counts = [0u64; 5];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_action(&pi, 1.0, &mut rng) as usize] += 1;
        }
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - 0.2 * n as f64).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn rejects_terminal_root_and_bad_params() {
        let cfg = Arc::new(GameConfig::small(8, 1).unwrap());
        let o = SyntheticOracle::sample(2, 8, OracleParams::new(1.0, 1.0, 1.0, 2)).unwrap();
        assert!(run_search(&DraftState::from_picks(cfg.clone(), &[0, 1, 2, 3]).unwrap(), &UniformEvaluator, &o, &params(1)).is_err());
        assert!(run_search(&DraftState::new(cfg), &UniformEvaluator, &o, &params(0)).is_err());
    }
}
