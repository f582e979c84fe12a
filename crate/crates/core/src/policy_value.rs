//! State features, the two-headed policy/value network, training targets and
//! the binary sample format.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{transform_winrate, Camp, DraftState, GameConfig, GameError, Player, WinRate};
use crate::nn::{self, Adam, AdamConfig, Architecture, DenseNet, Expect, Head, Loss, LossReport, NetError};
use crate::selfplay::GameRecord;

#[derive(Debug, Error)]
pub enum PolicyValueError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("network expects width {expected} and {classes} classes, config needs {width} and {n_heroes}")]
    Incompatible {
        expected: usize,
        classes: usize,
        width: usize,
        n_heroes: usize,
    },
    #[error("record config hash {record:x} does not match {config:x}")]
    ConfigMismatch { record: u64, config: u64 },
    #[error("record has {pi} visit distributions for {picks} picks")]
    RecordShape { pi: usize, picks: usize },
    #[error("no training samples")]
    NoSamples,
    #[error("sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature width `4N + D + L + 2`.
pub fn encoding_width(config: &GameConfig) -> usize {
    4 * config.n_heroes() + config.rounds() + config.picks_per_round() + 2
}

/// Features of a non-terminal state, laid out as: current-round heroes of camp
/// one and camp two, earlier-round heroes of player one and player two, round
/// one-hot, step-in-round one-hot, acting player is player one, acting player
/// is in camp one.
pub fn encode_state(state: &DraftState) -> Result<Vec<f32>, GameError> {
    let mut out = vec![0.0; encoding_width(state.config())];
    encode_state_into(state, &mut out)?;
    Ok(out)
}

pub fn encode_state_into(state: &DraftState, out: &mut [f32]) -> Result<(), GameError> {
    let cfg = state.config();
    let n = cfg.n_heroes();
    let mover = state.to_move()?;
    let camp = state.camp_to_move()?;
    out.fill(0.0);
    let sets = [
        state.current_round(Camp::One),
        state.current_round(Camp::Two),
        state.history(Player::One),
        state.history(Player::Two),
    ];
    for (k, set) in sets.iter().enumerate() {
        for h in set.iter() {
            out[k * n + h as usize] = 1.0;
        }
    }
    let base = 4 * n;
    out[base + state.round()] = 1.0;
    let base = base + cfg.rounds();
    out[base + state.step_in_round()] = 1.0;
    let base = base + cfg.picks_per_round();
    out[base] = (mover == Player::One) as u8 as f32;
    out[base + 1] = (camp == Camp::One) as u8 as f32;
    Ok(())
}

/// The encoding of the same position with player identities exchanged.
pub fn mirror_encoding(config: &GameConfig, enc: &[f32]) -> Vec<f32> {
    let n = config.n_heroes();
    let mut out = enc.to_vec();
    out[2 * n..3 * n].copy_from_slice(&enc[3 * n..4 * n]);
    out[3 * n..4 * n].copy_from_slice(&enc[2 * n..3 * n]);
    let flag = out.len() - 2;
    out[flag] = 1.0 - enc[flag];
    out
}

/// Prior over all heroes and value from the acting player's view.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub policy: Vec<f32>,
    pub value: f32,
}

/// Leaf evaluator for the search. Implementations must be deterministic.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<Evaluation>, PolicyValueError>;

    /// Number of evaluated states so far, when instrumented.
    fn calls(&self) -> u64 {
        0
    }
}

/// Uniform priors and zero value: turns the search into pure-prior PUCT.
#[derive(Debug, Clone, Default)]
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<Evaluation>, PolicyValueError> {
        Ok(states
            .iter()
            .map(|s| {
                let n = s.config().n_heroes();
                Evaluation {
                    policy: vec![1.0 / n as f32; n],
                    value: 0.0,
                }
            })
            .collect())
    }
}

impl<E: Evaluator + ?Sized> Evaluator for std::sync::Arc<E> {
    fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<Evaluation>, PolicyValueError> {
        (**self).evaluate(states)
    }
    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub net: DenseNet<f32>,
    pub config_hash: u64,
    /// Average the value over the encoding and its player-swapped mirror.
    pub symmetrize: bool,
}

impl PolicyValueNet {
    pub fn architecture(config: &GameConfig, hidden: Vec<usize>) -> Architecture {
        Architecture {
            input: encoding_width(config),
            hidden,
            head: Head::PolicyValue {
                classes: config.n_heroes(),
            },
        }
    }

    pub fn new(config: &GameConfig, hidden: Vec<usize>, seed: u64) -> Result<Self, PolicyValueError> {
        Self::from_net(config, DenseNet::new(Self::architecture(config, hidden), seed)?)
    }

    pub fn zeros(config: &GameConfig, hidden: Vec<usize>) -> Result<Self, PolicyValueError> {
        Self::from_net(config, DenseNet::zeros(Self::architecture(config, hidden))?)
    }

    pub fn from_net(config: &GameConfig, net: DenseNet<f32>) -> Result<Self, PolicyValueError> {
        let arch = net.arch();
        let width = encoding_width(config);
        let classes = match arch.head {
            Head::PolicyValue { classes } => classes,
            _ => 0,
        };
        if arch.input != width || classes != config.n_heroes() {
            return Err(PolicyValueError::Incompatible {
                expected: arch.input,
                classes,
                width,
                n_heroes: config.n_heroes(),
            });
        }
        Ok(PolicyValueNet {
            net,
            config_hash: config.fingerprint(),
            symmetrize: false,
        })
    }

    pub fn check_config(&self, config: &GameConfig) -> Result<(), PolicyValueError> {
        if self.config_hash != config.fingerprint() {
            return Err(PolicyValueError::ConfigMismatch {
                record: self.config_hash,
                config: config.fingerprint(),
            });
        }
        Ok(())
    }

    /// Policy over all N heroes and value in (−1, 1) from the acting player's view.
    pub fn predict(&self, state: &DraftState) -> Result<Evaluation, PolicyValueError> {
        Ok(self.evaluate(&[state])?.remove(0))
    }

    pub fn predict_encoded(&self, x: ArrayView2<f32>) -> Result<(Array2<f32>, Vec<f32>), PolicyValueError> {
        let out = self.net.forward_sparse(x)?;
        let value = out.value.expect("policy/value head").to_vec();
        Ok((out.main, value))
    }

    pub fn save(&self, path: &Path, adam: Option<&Adam<f32>>, metadata: BTreeMap<String, serde_json::Value>) -> Result<(), PolicyValueError> {
        nn::save_checkpoint(path, &self.net, adam, Some(self.config_hash), metadata)?;
        Ok(())
    }

    pub fn load(path: &Path, config: &GameConfig) -> Result<Self, PolicyValueError> {
        let ck = nn::load_checkpoint(
            path,
            &Expect {
                arch: None,
                config_hash: Some(config.fingerprint()),
            },
        )?;
        Self::from_net(config, ck.net)
    }
}

impl Evaluator for PolicyValueNet {
    fn evaluate(&self, states: &[&DraftState]) -> Result<Vec<Evaluation>, PolicyValueError> {
        let Some(first) = states.first() else {
            return Ok(Vec::new());
        };
        let cfg = first.config();
        let width = encoding_width(cfg);
        if width != self.net.input_width() {
            return Err(NetError::Shape {
                expected: self.net.input_width(),
                got: width,
            }
            .into());
        }
        let rows = if self.symmetrize { 2 * states.len() } else { states.len() };
        let mut x = Array2::<f32>::zeros((rows, width));
        for (i, s) in states.iter().enumerate() {
            let mut row = x.row_mut(i);
            encode_state_into(s, row.as_slice_mut().expect("contiguous"))?;
        }
        if self.symmetrize {
            for i in 0..states.len() {
                let m = mirror_encoding(cfg, x.row(i).as_slice().expect("contiguous"));
                x.row_mut(states.len() + i).assign(&ndarray::ArrayView1::from(&m));
            }
        }
        let (policy, value) = self.predict_encoded(x.view())?;
        Ok((0..states.len())
            .map(|i| Evaluation {
                policy: policy.row(i).to_vec(),
                value: if self.symmetrize {
                    0.5 * (value[i] + value[states.len() + i])
                } else {
                    value[i]
                },
            })
            .collect())
    }
}

/// How value targets combine rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Sum of this and all later rounds' z, divided by the rounds remaining.
    LongTerm,
    /// z of the sample's own round only.
    PerRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub encoding: Vec<f32>,
    /// Search visit distribution over all N heroes; zero on illegal heroes.
    pub policy: Vec<f32>,
    pub value: f32,
    pub round: u16,
    pub player: Player,
}

/// Per-round z from `player`'s side, using the record's lineups and `predictor`.
pub fn player_round_values(state: &DraftState, predictor: &dyn WinRate, player: Player) -> Result<Vec<f64>, GameError> {
    (0..state.config().rounds())
        .map(|d| {
            let phi = state.round_winrate(d, predictor)?;
            let camp1 = state.config().camp_player(d, Camp::One);
            let z = transform_winrate(phi);
            Ok(if camp1 == player { z } else { -z })
        })
        .collect()
}

/// One sample per pick: the pre-pick state, the search's π, and the value target.
pub fn make_targets(
    record: &GameRecord,
    config: &std::sync::Arc<GameConfig>,
    predictor: &dyn WinRate,
    mode: TargetMode,
) -> Result<Vec<TrainingSample>, PolicyValueError> {
    if record.config_hash != config.fingerprint() {
        return Err(PolicyValueError::ConfigMismatch {
            record: record.config_hash,
            config: config.fingerprint(),
        });
    }
    if record.pi.len() != record.picks.len() {
        return Err(PolicyValueError::RecordShape {
            pi: record.pi.len(),
            picks: record.picks.len(),
        });
    }
    let terminal = DraftState::from_picks(config.clone(), &record.picks)?;
    if !terminal.is_terminal() {
        return Err(GameError::NotTerminal.into());
    }
    let rounds = config.rounds();
    let per_player = [
        player_round_values(&terminal, predictor, Player::One)?,
        player_round_values(&terminal, predictor, Player::Two)?,
    ];
    let mut state = DraftState::new(config.clone());
    let mut out = Vec::with_capacity(record.picks.len());
    for (&pick, pi) in record.picks.iter().zip(&record.pi) {
        let player = state.to_move()?;
        let d = state.round();
        let z = &per_player[player.index()];
        let value = match mode {
            TargetMode::LongTerm => z[d..].iter().sum::<f64>() / (rounds - d) as f64,
            TargetMode::PerRound => z[d],
        };
        let legal = state.legal_set()?;
        let mut policy = pi.clone();
        for (h, p) in policy.iter_mut().enumerate() {
            if !legal.contains(h as u16) {
                *p = 0.0;
            }
        }
        let mass: f32 = policy.iter().sum();
        if mass > 0.0 {
            policy.iter_mut().for_each(|p| *p /= mass);
        }
        out.push(TrainingSample {
            encoding: encode_state(&state)?,
            policy,
            value: value as f32,
            round: d as u16,
            player,
        });
        state = state.apply(pick)?;
    }
    Ok(out)
}

pub const SAMPLE_FORMAT_VERSION: u8 = 1;

fn put_f32s(buf: &mut Vec<u8>, xs: &[f32]) {
    buf.extend_from_slice(&(xs.len() as u32).to_le_bytes());
    for v in xs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Record body: encoding and π (each a `u32` count then `f32`s), `f32` z,
/// `u16` round, `u8` player.
pub fn encode_sample(s: &TrainingSample) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 4 * (s.encoding.len() + s.policy.len()) + 7);
    put_f32s(&mut buf, &s.encoding);
    put_f32s(&mut buf, &s.policy);
    buf.extend_from_slice(&s.value.to_le_bytes());
    buf.extend_from_slice(&s.round.to_le_bytes());
    buf.push(s.player.index() as u8 + 1);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], PolicyValueError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + k)
            .ok_or_else(|| PolicyValueError::Format("truncated record".into()))?;
        self.pos += k;
        Ok(s)
    }

    fn f32s(&mut self) -> Result<Vec<f32>, PolicyValueError> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_sample(bytes: &[u8]) -> Result<TrainingSample, PolicyValueError> {
    let mut c = Cursor { bytes, pos: 0 };
    let encoding = c.f32s()?;
    let policy = c.f32s()?;
    let value = f32::from_le_bytes(c.take(4)?.try_into().unwrap());
    let round = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    let player = match c.take(1)?[0] {
        1 => Player::One,
        2 => Player::Two,
        p => return Err(PolicyValueError::Format(format!("bad player byte {p}"))),
    };
    if c.pos != bytes.len() {
        return Err(PolicyValueError::Format("trailing bytes in record".into()));
    }
    Ok(TrainingSample {
        encoding,
        policy,
        value,
        round,
        player,
    })
}

/// Version byte, then each record as a `u32` length and its body.
pub fn write_samples<W: Write>(mut w: W, samples: &[TrainingSample]) -> Result<(), PolicyValueError> {
    w.write_all(&[SAMPLE_FORMAT_VERSION])?;
    for s in samples {
        let body = encode_sample(s);
        w.write_all(&(body.len() as u32).to_le_bytes())?;
        w.write_all(&body)?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(mut r: R) -> Result<Vec<TrainingSample>, PolicyValueError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    match bytes.first() {
        Some(&SAMPLE_FORMAT_VERSION) => {}
        Some(v) => return Err(PolicyValueError::Format(format!("unsupported version {v}"))),
        None => return Err(PolicyValueError::Format("empty file".into())),
    }
    let mut pos = 1;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let len = bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| PolicyValueError::Format("truncated length".into()))?;
        pos += 4;
        let body = bytes
            .get(pos..pos + len)
            .ok_or_else(|| PolicyValueError::Format("truncated record".into()))?;
        out.push(decode_sample(body)?);
        pos += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvHyper {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    /// L2 penalty `c_p`.
    pub l2: f64,
    pub seed: u64,
}

impl Default for PvHyper {
    fn default() -> Self {
        PvHyper {
            hidden: vec![512, 256],
            batch_size: 400,
            lr: 1e-4,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Adam training state for a policy/value network.
#[derive(Debug, Clone)]
pub struct PvTrainer {
    pub model: PolicyValueNet,
    pub adam: Adam<f32>,
    pub l2: f64,
}

impl PvTrainer {
    pub fn new(model: PolicyValueNet, hyper: &PvHyper) -> Self {
        let adam = Adam::new(
            &model.net,
            AdamConfig {
                lr: hyper.lr,
                ..AdamConfig::default()
            },
        );
        PvTrainer { model, adam, l2: hyper.l2 }
    }

    /// One optimizer step on a batch of samples.
    pub fn step(&mut self, batch: &[&TrainingSample]) -> Result<LossReport, PolicyValueError> {
        let (x, y) = batch_matrices(batch, self.model.net.input_width())?;
        Ok(nn::train_step(&mut self.model.net, &mut self.adam, x.view(), y.view(), Loss::PolicyValue, self.l2)?)
    }
}

fn batch_matrices(batch: &[&TrainingSample], width: usize) -> Result<(Array2<f32>, Array2<f32>), PolicyValueError> {
    let Some(first) = batch.first() else {
        return Err(PolicyValueError::NoSamples);
    };
    let classes = first.policy.len();
    let mut x = Array2::zeros((batch.len(), width));
    let mut y = Array2::zeros((batch.len(), classes + 1));
    for (i, s) in batch.iter().enumerate() {
        if s.encoding.len() != width || s.policy.len() != classes {
            return Err(NetError::Shape {
                expected: width,
                got: s.encoding.len(),
            }
            .into());
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.encoding));
        for (j, &p) in s.policy.iter().enumerate() {
            y[[i, j]] = p;
        }
        y[[i, classes]] = s.value;
    }
    Ok((x, y))
}

/// Minimizes `(z − v)² − πᵀ log p + c_p‖θ‖²` over `epochs` shuffled passes.
/// Returns the per-step loss reports.
pub fn train_policy_value(
    samples: &[TrainingSample],
    trainer: &mut PvTrainer,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<LossReport>, PolicyValueError> {
    if samples.is_empty() {
        return Err(PolicyValueError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut reports = Vec::new();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            reports.push(trainer.step(&batch)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::seq::IndexedRandom;

    use super::*;
    use crate::game::HeroId;
    use crate::oracle::SyntheticOracle;
    use crate::winrate::LookupTable;

    fn bo(rounds: usize, n: usize) -> Arc<GameConfig> {
        Arc::new(GameConfig::small(n, rounds).unwrap())
    }

    #[test]
    fn empty_state_encoding() {
        let cfg = bo(1, 8);
        let e = encode_state(&DraftState::new(cfg.clone())).unwrap();
        assert_eq!(e.len(), 4 * 8 + 1 + 4 + 2);
        assert!(e[..32].iter().all(|&v| v == 0.0));
        assert_eq!(e[32], 1.0);
        assert_eq!(&e[33..37], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&e[37..], &[1.0, 1.0]);
        assert!(encode_state(&DraftState::from_picks(cfg, &[0, 1, 2, 3]).unwrap()).is_err());
    }

    #[test]
    fn within_round_order_is_invisible() {
        let cfg = Arc::new(GameConfig::standard(20, 1).unwrap());
        // Camp two picks twice in a row at steps 1 and 2.
        let a = DraftState::from_picks(cfg.clone(), &[0, 1, 2]).unwrap();
        let b = DraftState::from_picks(cfg, &[0, 2, 1]).unwrap();
        assert_eq!(encode_state(&a).unwrap(), encode_state(&b).unwrap());
    }

    #[test]
    fn history_bits_after_a_round() {
        let cfg = bo(3, 12);
        let s = DraftState::from_picks(cfg.clone(), &[0, 1, 2, 3]).unwrap();
        let e = encode_state(&s).unwrap();
        let n = 12;
        assert_eq!(e[..2 * n].iter().sum::<f32>(), 0.0);
        assert_eq!(e[2 * n..4 * n].iter().sum::<f32>(), 4.0);
        let one_hots = &e[4 * n..];
        assert_eq!(&one_hots[..3], &[0.0, 1.0, 0.0]);
        // Round one is opened by player two.
        assert_eq!(&one_hots[7..], &[0.0, 1.0]);
    }

    #[test]
    fn zero_net_is_uniform() {
        let cfg = bo(1, 8);
        let net = PolicyValueNet::zeros(&cfg, vec![16]).unwrap();
        let ev = net.predict(&DraftState::new(cfg)).unwrap();
        assert!(ev.policy.iter().all(|&p| (p - 0.125).abs() < 1e-7));
        assert_eq!(ev.value, 0.0);
    }

    #[test]
    fn golden_output() {
        let cfg = bo(2, 8);
        let net = PolicyValueNet::new(&cfg, vec![8, 6], 11).unwrap();
        let ev = net.predict(&DraftState::from_picks(cfg, &[3, 1, 6]).unwrap()).unwrap();
        let golden: [f32; 8] = GOLDEN_POLICY;
        for (p, g) in ev.policy.iter().zip(golden) {
            assert!((p - g).abs() < 1e-6, "{:?} {}", ev.policy, ev.value);
        }
        assert!((ev.value - GOLDEN_VALUE).abs() < 1e-6, "{}", ev.value);
    }

    const GOLDEN_POLICY: [f32; 8] = [0.07298973, 0.197262, 0.09492314, 0.28065997, 0.06161297, 0.12137323, 0.1067012, 0.06447775];
    const GOLDEN_VALUE: f32 = -0.4029491;

    #[test]
    fn symmetrized_mirror_values_negate() {
        let order = GameConfig::order_from_digits(&[1, 2, 2, 1]).unwrap();
        let a = Arc::new(GameConfig::new(8, 4, 1, order.clone(), vec![Player::One]).unwrap());
        let b = Arc::new(GameConfig::new(8, 4, 1, order, vec![Player::Two]).unwrap());
        let mut net = PolicyValueNet::new(&a, vec![8], 3).unwrap();
        net.symmetrize = true;
        let sa = DraftState::from_picks(a.clone(), &[5, 2]).unwrap();
        let sb = DraftState::from_picks(b.clone(), &[5, 2]).unwrap();
        assert_eq!(mirror_encoding(&a, &encode_state(&sa).unwrap()), encode_state(&sb).unwrap());
        let va = net.predict(&sa).unwrap().value * sa.to_move().unwrap().sign() as f32;
        let vb = net.predict(&sb).unwrap().value * sb.to_move().unwrap().sign() as f32;
        assert!((va + vb).abs() < 1e-6, "{va} {vb}");
    }

    fn table_phi(values: &[(usize, f64)], cfg: &GameConfig, picks: &[HeroId]) -> LookupTable {
        let s = DraftState::from_picks(Arc::new(cfg.clone()), picks).unwrap();
        let mut t = LookupTable::constant(0.5);
        for &(d, phi) in values {
            t.entries.insert(s.round_lineups(d).unwrap(), phi);
        }
        t
    }

    fn record(cfg: &GameConfig, picks: Vec<HeroId>) -> GameRecord {
        let n = cfg.n_heroes();
        GameRecord {
            config_hash: cfg.fingerprint(),
            pi: vec![vec![1.0 / n as f32; n]; picks.len()],
            picks,
            ..GameRecord::default()
        }
    }

    #[test]
    fn bo1_target() {
        let cfg = bo(1, 8);
        let picks = vec![0, 1, 2, 3];
        let t = table_phi(&[(0, 0.75)], &cfg, &picks);
        let samples = make_targets(&record(&cfg, picks), &cfg, &crate::winrate::WinratePredictor::Table(Arc::new(t)), TargetMode::LongTerm).unwrap();
        // Steps 0 and 3 belong to camp one, player one.
        assert_eq!(samples[0].value, 0.5);
        assert_eq!(samples[3].value, 0.5);
        assert_eq!(samples[1].value, -0.5);
    }

    #[test]
    fn bo3_targets() {
        let order = GameConfig::order_from_digits(&[1, 2, 2, 1]).unwrap();
        let cfg = Arc::new(GameConfig::new(12, 4, 3, order, vec![Player::One; 3]).unwrap());
        let picks: Vec<HeroId> = vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
        let t = table_phi(&[(0, 0.75), (1, 0.5), (2, 0.25)], &cfg, &picks);
        let p = crate::winrate::WinratePredictor::Table(Arc::new(t));
        let long = make_targets(&record(&cfg, picks.clone()), &cfg, &p, TargetMode::LongTerm).unwrap();
        assert_eq!(long[0].value, 0.0);
        assert_eq!(long[4].value, -0.25);
        assert_eq!(long[8].value, -0.5);
        assert_eq!(long[9].value, 0.5);
        let per = make_targets(&record(&cfg, picks), &cfg, &p, TargetMode::PerRound).unwrap();
        assert_eq!(per[0].value, 0.5);
        assert_eq!(per[5].value, 0.0);
        for (s, l) in long.iter().zip(&per) {
            assert!(s.value.abs() <= 1.0 && l.value.abs() <= 1.0);
        }
    }

    #[test]
    fn same_round_same_player_targets_agree() {
        let o = SyntheticOracle::sample(3, 20, crate::oracle::OracleParams::new(1.0, 1.0, 1.0, 5)).unwrap();
        let cfg = Arc::new(GameConfig::standard(20, 3).unwrap());
        let mut s = DraftState::new(cfg.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        while !s.is_terminal() {
            let legal = s.legal_actions().unwrap();
            s = s.apply(*legal.choose(&mut rng).unwrap()).unwrap();
        }
        let samples = make_targets(&record(&cfg, s.picks().to_vec()), &cfg, &o, TargetMode::LongTerm).unwrap();
        for a in &samples {
            for b in &samples {
                if a.round == b.round {
                    if a.player == b.player {
                        assert_eq!(a.value, b.value);
                    } else {
                        assert_eq!(a.value, -b.value);
                    }
                }
            }
        }
    }

    #[test]
    fn targets_mask_illegal_and_reject_partial_records() {
        let cfg = bo(1, 8);
        let o = SyntheticOracle::sample(1, 8, crate::oracle::OracleParams::new(1.0, 0.0, 0.0, 2)).unwrap();
        let samples = make_targets(&record(&cfg, vec![0, 1, 2, 3]), &cfg, &o, TargetMode::LongTerm).unwrap();
        assert_eq!(samples[2].policy[0], 0.0);
        assert_eq!(samples[2].policy[1], 0.0);
        assert!((samples[2].policy.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(make_targets(&record(&cfg, vec![0, 1]), &cfg, &o, TargetMode::LongTerm).is_err());
    }

    #[test]
    fn sample_file_roundtrip() {
        let s = TrainingSample {
            encoding: vec![0.0, 1.0, 0.5],
            policy: vec![0.25, 0.75],
            value: -0.125,
            round: 2,
            player: Player::Two,
        };
        let mut buf = Vec::new();
        write_samples(&mut buf, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(buf[0], SAMPLE_FORMAT_VERSION);
        assert_eq!(read_samples(&buf[..]).unwrap(), vec![s.clone(), s]);
        assert!(read_samples(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = 9;
        assert!(read_samples(&bad[..]).is_err());
    }

    #[test]
    fn defaults() {
        let h = PvHyper::default();
        assert_eq!((h.batch_size, h.lr, h.l2), (400, 1e-4, 1e-4));
    }

    /// Sixteen distinct early positions with one-hot policy targets.
    fn fixture_samples(cfg: &Arc<GameConfig>) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out: Vec<TrainingSample> = Vec::new();
        while out.len() < 16 {
            let mut s = DraftState::new(cfg.clone());
            for _ in 0..1 + out.len() % 3 {
                let legal = s.legal_actions().unwrap();
                s = s.apply(*legal.choose(&mut rng).unwrap()).unwrap();
            }
            let encoding = encode_state(&s).unwrap();
            if out.iter().any(|o| o.encoding == encoding) {
                continue;
            }
            let legal = s.legal_actions().unwrap();
            let target = *legal.choose(&mut rng).unwrap();
            let mut policy = vec![0.0; cfg.n_heroes()];
            policy[target as usize] = 1.0;
            out.push(TrainingSample {
                encoding,
                policy,
                value: if out.len() % 3 == 0 { 0.5 } else { -0.25 },
                round: s.round() as u16,
                player: s.to_move().unwrap(),
            });
        }
        out
    }

    #[test]
    fn overfits_small_fixture() {
        let cfg = bo(2, 8);
        let samples = fixture_samples(&cfg);
        let hyper = PvHyper {
            hidden: vec![64],
            lr: 2e-2,
            l2: 0.0,
            ..PvHyper::default()
        };
        let mut trainer = PvTrainer::new(PolicyValueNet::new(&cfg, hyper.hidden.clone(), 0).unwrap(), &hyper);
        let reports = train_policy_value(&samples, &mut trainer, 600, 16, 0).unwrap();
        let last = reports.last().unwrap();
        assert!(last.cross_entropy < 0.05, "{last:?}");
        assert!(last.squared_error < 0.01, "{last:?}");
        assert!(last.total < reports[0].total);
    }

    #[test]
    fn heavy_penalty_shrinks_weights() {
        let cfg = bo(1, 8);
        let samples = fixture_samples(&cfg);
        let hyper = PvHyper {
            hidden: vec![16],
            lr: 1e-3,
            l2: 10.0,
            ..PvHyper::default()
        };
        let mut trainer = PvTrainer::new(PolicyValueNet::new(&cfg, hyper.hidden.clone(), 0).unwrap(), &hyper);
        let mut norm = trainer.model.net.squared_norm();
        for _ in 0..50 {
            train_policy_value(&samples, &mut trainer, 1, 16, 0).unwrap();
            let next = trainer.model.net.squared_norm();
            assert!(next < norm, "{next} ≥ {norm}");
            norm = next;
        }
    }

    #[test]
    fn checkpoint_roundtrip_checks_config() {
        let cfg = bo(1, 8);
        let net = PolicyValueNet::new(&cfg, vec![8], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pv_v1.jwd");
        net.save(&path, None, BTreeMap::new()).unwrap();
        assert_eq!(PolicyValueNet::load(&path, &cfg).unwrap(), net);
        let other = GameConfig::small(8, 2).unwrap();
        assert!(PolicyValueNet::load(&path, &other).is_err());
    }
}
