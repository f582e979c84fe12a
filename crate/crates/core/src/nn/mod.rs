//! A small dense-network engine: ReLU stacks with softmax, sigmoid, tanh or
//! policy/value heads, their losses, an L2 penalty, Adam, and checkpoints.
//!
//! Networks are generic over the float type so gradient checks can run in
//! `f64`; everything that ships (search, checkpoints) uses `f32`.

mod checkpoint;
mod net;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, Expect, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{Architecture, Dense, DenseNet, Head, Loss, LossReport, Output};

use ndarray::{Array2, ArrayView2, NdFloat, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use net::cast;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected width {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("loss {loss:?} does not match head {head:?}")]
    LossMismatch { head: Head, loss: Loss },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss {0:?}; parameters left unchanged")]
    NonFiniteLoss(LossReport),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment buffers, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub(crate) m: Vec<Dense<T>>,
    pub(crate) v: Vec<Dense<T>>,
}

impl<T: NdFloat> Adam<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Dense {
                    w: ndarray::Array2::zeros(l.w.dim()),
                    b: ndarray::Array1::zeros(l.b.len()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, net: &mut DenseNet<T>, grads: &[Dense<T>]) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1: T = cast(c.beta1);
        let b2: T = cast(c.beta2);
        let one_b1: T = cast(1.0 - c.beta1);
        let one_b2: T = cast(1.0 - c.beta2);
        let corr1: T = cast(1.0 - c.beta1.powi(t));
        let corr2: T = cast(1.0 - c.beta2.powi(t));
        let lr: T = cast(c.lr);
        let eps: T = cast(c.eps);
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let step = |p: &mut T, &g: &T, m: &mut T, v: &mut T| {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(step);
            Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(step);
        }
    }
}

/// One Adam step on the mean batch loss plus `l2 · ‖θ‖²`. Returns the loss
/// measured before the update; a non-finite loss aborts without touching
/// the parameters.
pub fn train_step<T: NdFloat>(
    net: &mut DenseNet<T>,
    adam: &mut Adam<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView2<T>,
    loss: Loss,
    l2: f64,
) -> Result<LossReport, NetError> {
    let (report, grads) = net.gradients(inputs, targets, loss, l2)?;
    if !report.total.is_finite() {
        return Err(NetError::NonFiniteLoss(report));
    }
    adam.update(net, &grads);
    Ok(report)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

fn random_targets(rng: &mut ChaCha8Rng, head: Head, rows: usize) -> Array2<f64> {
    let mut t = Array2::zeros((rows, head.target_width()));
    for mut row in t.rows_mut() {
        match head {
            Head::Softmax { classes } | Head::PolicyValue { classes } => {
                let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                for (i, r) in raw.iter().enumerate() {
                    row[i] = r / s;
                }
                if classes < row.len() {
                    row[classes] = rng.random_range(-1.0..1.0);
                }
            }
            Head::Sigmoid => row[0] = if rng.random_bool(0.5) { 1.0 } else { 0.0 },
            Head::Tanh => row[0] = rng.random_range(-1.0..1.0),
        }
    }
    t
}

/// Worst relative error between the analytic gradient and central
/// differences over every parameter, on a random `f64` net and batch.
pub fn gradient_check(a: Architecture, seed: u64, l2: f64) -> Result<f64, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = DenseNet::<f64>::new(a.clone(), seed)?;
    // add bias noise so no unit sits exactly at a ReLU kink
    let mut net = net;
    for p in net.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let x = random_matrix(&mut rng, 5, a.input, 1.0);
    let y = random_targets(&mut rng, a.head, 5);
    let loss = Loss::for_head(a.head);
    let (_, grads) = net.gradients(x.view(), y.view(), loss, l2)?;
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.w.iter().copied().chain(g.b.iter().copied()))
        .collect();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let mut plus = net.clone();
        *plus.params_mut().nth(i).unwrap() += h;
        let mut minus = net.clone();
        *minus.params_mut().nth(i).unwrap() -= h;
        let lp = plus.loss(x.view(), y.view(), loss, l2)?.total;
        let lm = minus.loss(x.view(), y.view(), loss, l2)?.total;
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
