//! Single-round win-rate predictors: multi-hot lineup features, a learned
//! network (and its linear baseline), evaluation metrics, and per-hero stats.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::game::{HeroId, HeroSet, WinRate};
use crate::nn::{self, Adam, AdamConfig, Architecture, DenseNet, Expect, Head, Loss, NetError};
use crate::oracle::{MatchDataset, SyntheticOracle};
use crate::stats;

#[derive(Debug, Error)]
pub enum WinrateError {
    #[error("lineups must be disjoint, equal-sized, and below {n_heroes}")]
    BadLineups { n_heroes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cross-validation needs at least 2 folds and one record per fold")]
    BadFolds,
    #[error("checkpoint is not a win-rate network")]
    NotWinrateNet,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Multi-hot features: slot `h` marks camp one's hero `h`, slot `N + h` camp two's.
pub fn encode_lineups(n_heroes: usize, camp1: &[HeroId], camp2: &[HeroId]) -> Result<Vec<f32>, WinrateError> {
    let mut out = vec![0.0; 2 * n_heroes];
    encode_into(n_heroes, camp1, camp2, &mut out)?;
    Ok(out)
}

fn encode_into(n_heroes: usize, camp1: &[HeroId], camp2: &[HeroId], out: &mut [f32]) -> Result<(), WinrateError> {
    let a: HeroSet = camp1.iter().copied().collect();
    let b: HeroSet = camp2.iter().copied().collect();
    let ok = camp1.len() == camp2.len()
        && a.len() == camp1.len()
        && b.len() == camp2.len()
        && a.bits() & b.bits() == 0
        && camp1.iter().chain(camp2).all(|&h| (h as usize) < n_heroes);
    if !ok {
        return Err(WinrateError::BadLineups { n_heroes });
    }
    out.fill(0.0);
    for h in a.iter() {
        out[h as usize] = 1.0;
    }
    for h in b.iter() {
        out[n_heroes + h as usize] = 1.0;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LearnedPredictor {
    pub net: DenseNet<f32>,
    pub n_heroes: usize,
    /// Average `p(A, B)` with `1 − p(B, A)` so the prediction is zero-sum.
    pub symmetrize: bool,
}

impl LearnedPredictor {
    pub fn new(net: DenseNet<f32>, symmetrize: bool) -> Result<Self, WinrateError> {
        let arch = net.arch();
        if arch.head != Head::Sigmoid || arch.input % 2 != 0 {
            return Err(WinrateError::NotWinrateNet);
        }
        let n_heroes = arch.input / 2;
        Ok(LearnedPredictor {
            net,
            n_heroes,
            symmetrize,
        })
    }

    fn raw(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        let n = self.n_heroes;
        let mut x = Array2::<f32>::zeros((if self.symmetrize { 2 } else { 1 }, 2 * n));
        for &h in camp1 {
            x[[0, h as usize]] = 1.0;
        }
        for &h in camp2 {
            x[[0, n + h as usize]] = 1.0;
        }
        if self.symmetrize {
            for &h in camp2 {
                x[[1, h as usize]] = 1.0;
            }
            for &h in camp1 {
                x[[1, n + h as usize]] = 1.0;
            }
        }
        let out = self.net.forward_sparse(x.view()).expect("width checked at construction");
        let p = out.main[[0, 0]] as f64;
        if self.symmetrize {
            0.5 * (p + 1.0 - out.main[[1, 0]] as f64)
        } else {
            p
        }
    }

    /// Batched prediction for evaluation.
    pub fn predict_many(&self, records: &[(&[HeroId], &[HeroId])]) -> Vec<f64> {
        let n = self.n_heroes;
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(1024) {
            let mut x = Array2::<f32>::zeros((chunk.len(), 2 * n));
            let mut xs = Array2::<f32>::zeros((chunk.len(), 2 * n));
            for (i, (a, b)) in chunk.iter().enumerate() {
                for &h in a.iter() {
                    x[[i, h as usize]] = 1.0;
                    xs[[i, n + h as usize]] = 1.0;
                }
                for &h in b.iter() {
                    x[[i, n + h as usize]] = 1.0;
                    xs[[i, h as usize]] = 1.0;
                }
            }
            let p = self.net.forward(x.view()).expect("width").main;
            if self.symmetrize {
                let q = self.net.forward(xs.view()).expect("width").main;
                out.extend((0..chunk.len()).map(|i| 0.5 * (p[[i, 0]] as f64 + 1.0 - q[[i, 0]] as f64)));
            } else {
                out.extend(p.column(0).iter().map(|&v| v as f64));
            }
        }
        out
    }
}

/// Win rates looked up by sorted lineup pair, with a default for unseen pairs.
#[derive(Debug, Clone, Default)]
pub struct LookupTable {
    pub entries: HashMap<(Vec<HeroId>, Vec<HeroId>), f64>,
    pub default: f64,
}

impl LookupTable {
    pub fn constant(p: f64) -> Self {
        LookupTable {
            entries: HashMap::new(),
            default: p,
        }
    }
}

/// The single-round win-rate function φ used for rewards, from camp one's view.
#[derive(Debug, Clone)]
pub enum WinratePredictor {
    Learned(Arc<LearnedPredictor>),
    Oracle(Arc<SyntheticOracle>),
    Table(Arc<LookupTable>),
}

impl WinratePredictor {
    pub fn oracle(o: SyntheticOracle) -> Self {
        WinratePredictor::Oracle(Arc::new(o))
    }

    pub fn n_heroes(&self) -> Option<usize> {
        match self {
            WinratePredictor::Learned(l) => Some(l.n_heroes),
            WinratePredictor::Oracle(o) => Some(o.n_heroes()),
            WinratePredictor::Table(_) => None,
        }
    }

    /// Checked prediction.
    pub fn predict(&self, camp1: &[HeroId], camp2: &[HeroId]) -> Result<f64, WinrateError> {
        if let Some(n) = self.n_heroes() {
            let mut scratch = vec![0.0; 2 * n];
            encode_into(n, camp1, camp2, &mut scratch)?;
        }
        Ok(self.winrate(camp1, camp2))
    }

    pub fn predict_records(&self, ds: &MatchDataset) -> Vec<f64> {
        match self {
            WinratePredictor::Learned(l) => {
                let pairs: Vec<(&[HeroId], &[HeroId])> = ds
                    .records
                    .iter()
                    .map(|r| (r.camp1.as_slice(), r.camp2.as_slice()))
                    .collect();
                l.predict_many(&pairs)
            }
            _ => ds.records.iter().map(|r| self.winrate(&r.camp1, &r.camp2)).collect(),
        }
    }

    pub fn load_learned(path: &Path, symmetrize: bool) -> Result<Self, WinrateError> {
        let ck = nn::load_checkpoint(path, &Expect::default())?;
        Ok(WinratePredictor::Learned(Arc::new(LearnedPredictor::new(ck.net, symmetrize)?)))
    }
}

impl WinRate for WinratePredictor {
    fn winrate(&self, camp1: &[HeroId], camp2: &[HeroId]) -> f64 {
        match self {
            WinratePredictor::Learned(l) => l.raw(camp1, camp2),
            WinratePredictor::Oracle(o) => o.winrate(camp1, camp2),
            WinratePredictor::Table(t) => {
                let mut a = camp1.to_vec();
                let mut b = camp2.to_vec();
                a.sort_unstable();
                b.sort_unstable();
                *t.entries.get(&(a, b)).unwrap_or(&t.default)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WinrateHyper {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub l2: f64,
    pub seed: u64,
    pub symmetrize: bool,
}

impl Default for WinrateHyper {
    fn default() -> Self {
        WinrateHyper {
            hidden: vec![256, 128],
            lr: 1e-4,
            batch_size: 256,
            max_epochs: 50,
            patience: 3,
            validation_fraction: 0.1,
            l2: 0.0,
            seed: 0,
            symmetrize: true,
        }
    }
}

impl WinrateHyper {
    /// Logistic-regression baseline: same engine, no hidden layers.
    pub fn linear(&self) -> Self {
        WinrateHyper {
            hidden: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

fn feature_matrix(ds: &MatchDataset, idx: &[usize]) -> (Array2<f32>, Array2<f32>) {
    let n = ds.n_heroes;
    let mut x = Array2::zeros((idx.len(), 2 * n));
    let mut y = Array2::zeros((idx.len(), 1));
    for (row, &i) in idx.iter().enumerate() {
        let r = &ds.records[i];
        for &h in &r.camp1 {
            x[[row, h as usize]] = 1.0;
        }
        for &h in &r.camp2 {
            x[[row, n + h as usize]] = 1.0;
        }
        y[[row, 0]] = if r.win { 1.0 } else { 0.0 };
    }
    (x, y)
}

/// Trains the sigmoid network with binary cross-entropy and Adam, keeping the
/// parameters with the best validation loss (early stopping on plateau).
pub fn train_winrate(ds: &MatchDataset, hyper: &WinrateHyper) -> Result<(WinratePredictor, Vec<EpochLog>), WinrateError> {
    if ds.is_empty() {
        return Err(WinrateError::EmptyDataset);
    }
    let wins = ds.records.iter().filter(|r| r.win).count();
    if wins == 0 || wins == ds.len() {
        warn!("win-rate dataset has a single class; training anyway");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((ds.len() as f64 * hyper.validation_fraction) as usize).min(ds.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let (x_val, y_val) = feature_matrix(ds, val_idx);

    let arch = Architecture {
        input: 2 * ds.n_heroes,
        hidden: hyper.hidden.clone(),
        head: Head::Sigmoid,
    };
    let mut net = DenseNet::<f32>::new(arch, hyper.seed)?;
    let mut adam = Adam::new(
        &net,
        AdamConfig {
            lr: hyper.lr,
            ..AdamConfig::default()
        },
    );
    let mut best = (f64::INFINITY, net.clone());
    let mut stale = 0;
    let mut curve = Vec::new();
    for epoch in 0..hyper.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(hyper.batch_size.max(1)) {
            let (x, y) = feature_matrix(ds, chunk);
            total += nn::train_step(&mut net, &mut adam, x.view(), y.view(), Loss::BinaryCrossEntropy, hyper.l2)?.total;
            batches += 1;
        }
        let validation_loss = if n_val > 0 {
            net.loss(x_val.view(), y_val.view(), Loss::BinaryCrossEntropy, 0.0)?.total
        } else {
            total / batches as f64
        };
        let log = EpochLog {
            epoch,
            train_loss: total / batches as f64,
            validation_loss,
        };
        debug!(?log, "win-rate epoch");
        curve.push(log);
        if validation_loss < best.0 - 1e-5 {
            best = (validation_loss, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    let predictor = LearnedPredictor::new(best.1, hyper.symmetrize)?;
    Ok((WinratePredictor::Learned(Arc::new(predictor)), curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub f1: f64,
}

/// Accuracy and F1 at threshold 0.5 (`p ≥ 0.5` predicts a camp-one win), rank AUC.
pub fn metrics(probs: &[f64], labels: &[bool]) -> Metrics {
    assert_eq!(probs.len(), labels.len());
    let (mut tp, mut fp, mut fnn, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p >= 0.5;
        if pred == y {
            correct += 1;
        }
        match (pred, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fnn > 0 { tp as f64 / (tp + fnn) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        accuracy: correct as f64 / probs.len().max(1) as f64,
        auc: stats::auc(probs, labels),
        f1,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub accuracy: f64,
    /// Mean over folds with a defined AUC.
    pub auc: f64,
    pub f1: f64,
    pub folds: Vec<FoldMetrics>,
    /// Held-out prediction for every record, in dataset order.
    #[serde(skip)]
    pub out_of_fold: Vec<f64>,
}

fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn summarize(folds: Vec<FoldMetrics>, out_of_fold: Vec<f64>) -> CvReport {
    let k = folds.len() as f64;
    let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
    for f in folds.iter().filter(|f| f.auc.is_none()) {
        warn!(fold = f.fold, "fold has a single class; AUC excluded");
    }
    CvReport {
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k,
        auc: if aucs.is_empty() { f64::NAN } else { aucs.iter().sum::<f64>() / aucs.len() as f64 },
        f1: folds.iter().map(|f| f.f1).sum::<f64>() / k,
        folds,
        out_of_fold,
    }
}

/// Train on k−1 folds, score the held-out fold, for every fold.
pub fn cross_validate<F>(ds: &MatchDataset, k: usize, seed: u64, mut fit: F) -> Result<CvReport, WinrateError>
where
    F: FnMut(&MatchDataset) -> Result<WinratePredictor, WinrateError>,
{
    if k < 2 || ds.len() < k {
        return Err(WinrateError::BadFolds);
    }
    let fold = fold_assignment(ds.len(), k, seed);
    let mut folds = Vec::with_capacity(k);
    let mut oof = vec![f64::NAN; ds.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] == f).collect();
        let model = fit(&ds.subset(&train))?;
        let held = ds.subset(&test);
        let probs = model.predict_records(&held);
        let labels: Vec<bool> = held.records.iter().map(|r| r.win).collect();
        let m = metrics(&probs, &labels);
        for (&i, &p) in test.iter().zip(&probs) {
            oof[i] = p;
        }
        folds.push(FoldMetrics {
            fold: f,
            n: test.len(),
            accuracy: m.accuracy,
            auc: m.auc,
            f1: m.f1,
        });
    }
    Ok(summarize(folds, oof))
}

/// Metrics of a fixed predictor, reported per fold of a `k`-way partition.
pub fn evaluate_metrics(predictor: &WinratePredictor, ds: &MatchDataset, k: usize, seed: u64) -> Result<CvReport, WinrateError> {
    if k == 0 || ds.len() < k {
        return Err(WinrateError::BadFolds);
    }
    let probs = predictor.predict_records(ds);
    let fold = fold_assignment(ds.len(), k, seed);
    let folds = (0..k)
        .map(|f| {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] == f).collect();
            let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let y: Vec<bool> = idx.iter().map(|&i| ds.records[i].win).collect();
            let m = metrics(&p, &y);
            FoldMetrics {
                fold: f,
                n: idx.len(),
                accuracy: m.accuracy,
                auc: m.auc,
                f1: m.f1,
            }
        })
        .collect();
    Ok(summarize(folds, probs))
}

/// Appearance and win counts per hero over both camps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeroStats {
    pub appearances: Vec<u64>,
    pub wins: Vec<u64>,
}

impl HeroStats {
    pub fn n_heroes(&self) -> usize {
        self.appearances.len()
    }

    /// Share of appearances on the winning side; 0.5 for unseen heroes.
    pub fn winrate(&self, h: HeroId) -> f64 {
        let a = self.appearances[h as usize];
        if a == 0 {
            0.5
        } else {
            self.wins[h as usize] as f64 / a as f64
        }
    }

    pub fn winrates(&self) -> Vec<f64> {
        (0..self.n_heroes()).map(|h| self.winrate(h as HeroId)).collect()
    }
}

pub fn hero_stats(ds: &MatchDataset) -> HeroStats {
    let mut appearances = vec![0u64; ds.n_heroes];
    let mut wins = vec![0u64; ds.n_heroes];
    for r in &ds.records {
        for &h in &r.camp1 {
            appearances[h as usize] += 1;
            wins[h as usize] += r.win as u64;
        }
        for &h in &r.camp2 {
            appearances[h as usize] += 1;
            wins[h as usize] += (!r.win) as u64;
        }
    }
    HeroStats { appearances, wins }
}
