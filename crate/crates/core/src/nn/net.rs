use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use num_traits::NumCast;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

pub(crate) fn cast<T: NdFloat>(x: f64) -> T {
    <T as NumCast>::from(x).expect("representable")
}

pub(crate) fn f64_of<T: NdFloat>(x: T) -> f64 {
    x.to_f64().expect("finite cast")
}

/// Output head of a network. Hidden layers are always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Softmax { classes: usize },
    Sigmoid,
    Tanh,
    /// Softmax policy over `classes` plus a scalar tanh value, both fed by the last hidden layer.
    PolicyValue { classes: usize },
}

impl Head {
    /// Width of a target row: the class count, 1, or `classes + 1` (policy then value).
    pub fn target_width(&self) -> usize {
        match *self {
            Head::Softmax { classes } => classes,
            Head::Sigmoid | Head::Tanh => 1,
            Head::PolicyValue { classes } => classes + 1,
        }
    }

    fn layer_count(&self) -> usize {
        match self {
            Head::PolicyValue { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl Architecture {
    /// (fan_in, fan_out) of every layer in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            shapes.push((prev, h));
            prev = h;
        }
        match self.head {
            Head::Softmax { classes } => shapes.push((prev, classes)),
            Head::Sigmoid | Head::Tanh => shapes.push((prev, 1)),
            Head::PolicyValue { classes } => {
                shapes.push((prev, classes));
                shapes.push((prev, 1));
            }
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn validate(&self) -> Result<(), NetError> {
        let classes_ok = match self.head {
            Head::Softmax { classes } | Head::PolicyValue { classes } => classes > 0,
            _ => true,
        };
        if self.input == 0 || self.hidden.contains(&0) || !classes_ok {
            return Err(NetError::Architecture(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Loss paired with each head: cross-entropy for softmax, binary
/// cross-entropy for sigmoid, squared error for tanh, and the sum of
/// cross-entropy and squared error for the policy/value head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    BinaryCrossEntropy,
    SquaredError,
    PolicyValue,
}

impl Loss {
    pub fn for_head(head: Head) -> Loss {
        match head {
            Head::Softmax { .. } => Loss::CrossEntropy,
            Head::Sigmoid => Loss::BinaryCrossEntropy,
            Head::Tanh => Loss::SquaredError,
            Head::PolicyValue { .. } => Loss::PolicyValue,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean data loss plus the L2 penalty.
    pub total: f64,
    /// Mean (binary) cross-entropy, zero for the tanh head.
    pub cross_entropy: f64,
    /// Mean squared error of the tanh output, zero for classification heads.
    pub squared_error: f64,
    pub penalty: f64,
}

/// Weights are stored `fan_in × fan_out` so a batch multiplies on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: NdFloat> Dense<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.w);
        z += &self.b;
        z
    }
}

#[derive(Debug, Clone)]
pub struct Output<T> {
    /// Softmax probabilities, sigmoid or tanh outputs; the policy for the dual head.
    pub main: Array2<T>,
    /// Tanh value of the dual head.
    pub value: Option<Array1<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T = f32> {
    arch: Architecture,
    layers: Vec<Dense<T>>,
}

fn relu_inplace<T: NdFloat>(a: &mut Array2<T>) {
    // NaN passes through so a poisoned input surfaces as a non-finite loss.
    a.mapv_inplace(|v| if v < T::zero() { T::zero() } else { v });
}

fn softmax_rows<T: NdFloat>(z: &Array2<T>) -> Array2<T> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn sigmoid<T: NdFloat>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: NdFloat> DenseNet<T> {
    pub fn zeros(arch: Architecture) -> Result<Self, NetError> {
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(DenseNet { arch, layers })
    }

    /// He-uniform hidden layers and Glorot-uniform head layers, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NetError> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_hidden = net.arch.hidden.len();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let (fan_in, fan_out) = layer.w.dim();
            let limit = if k < n_hidden {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            layer.w.mapv_inplace(|_| cast(rng.random_range(-limit..limit)));
        }
        Ok(net)
    }

    pub fn from_layers(arch: Architecture, layers: Vec<Dense<T>>) -> Result<Self, NetError> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.w.dim() != (i, o) || l.b.len() != o)
        {
            return Err(NetError::Architecture("layer shapes do not match architecture".into()));
        }
        Ok(DenseNet { arch, layers })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.arch.input
    }

    fn n_hidden(&self) -> usize {
        self.arch.hidden.len()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), NetError> {
        if x.ncols() != self.arch.input {
            return Err(NetError::Shape {
                expected: self.arch.input,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn trunk(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut h = x.to_owned();
        for layer in &self.layers[..self.n_hidden()] {
            h = layer.apply(&h.view());
            relu_inplace(&mut h);
        }
        h
    }

    /// Post-activation of every hidden layer, with the input first.
    fn trunk_cached(&self, x: &ArrayView2<T>) -> Vec<Array2<T>> {
        let mut acts = vec![x.to_owned()];
        for layer in &self.layers[..self.n_hidden()] {
            let mut h = layer.apply(&acts.last().unwrap().view());
            relu_inplace(&mut h);
            acts.push(h);
        }
        acts
    }

    fn head_logits(&self, h: &ArrayView2<T>) -> (Array2<T>, Option<Array2<T>>) {
        let k = self.n_hidden();
        let main = self.layers[k].apply(h);
        let value = (self.arch.head.layer_count() == 2).then(|| self.layers[k + 1].apply(h));
        (main, value)
    }

    fn finish(&self, main: Array2<T>, value: Option<Array2<T>>) -> Output<T> {
        match self.arch.head {
            Head::Softmax { .. } => Output {
                main: softmax_rows(&main),
                value: None,
            },
            Head::Sigmoid => Output {
                main: main.mapv(sigmoid),
                value: None,
            },
            Head::Tanh => Output {
                main: main.mapv(|v| v.tanh()),
                value: None,
            },
            Head::PolicyValue { .. } => Output {
                main: softmax_rows(&main),
                value: value.map(|v| v.column(0).mapv(|x| x.tanh())),
            },
        }
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Output<T>, NetError> {
        self.check_input(&x)?;
        let h = self.trunk(&x);
        let (main, value) = self.head_logits(&h.view());
        Ok(self.finish(main, value))
    }

    /// Forward pass for inputs that are mostly zero (multi-hot encodings):
    /// the first layer only gathers the rows of active inputs.
    pub fn forward_sparse(&self, x: ArrayView2<T>) -> Result<Output<T>, NetError> {
        self.check_input(&x)?;
        if self.n_hidden() == 0 {
            return self.forward(x);
        }
        let first = &self.layers[0];
        let mut h = Array2::zeros((x.nrows(), first.b.len()));
        for (xr, mut hr) in x.rows().into_iter().zip(h.rows_mut()) {
            hr.assign(&first.b);
            for (i, &v) in xr.iter().enumerate() {
                if v != T::zero() {
                    hr.scaled_add(v, &first.w.row(i));
                }
            }
        }
        relu_inplace(&mut h);
        for layer in &self.layers[1..self.n_hidden()] {
            h = layer.apply(&h.view());
            relu_inplace(&mut h);
        }
        let (main, value) = self.head_logits(&h.view());
        Ok(self.finish(main, value))
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Parameters in storage order: per layer, weights row-major then bias.
    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().copied().chain(l.b.iter().copied()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.params().map(|p| f64_of(p).powi(2)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn check_targets(&self, x: &ArrayView2<T>, targets: &ArrayView2<T>, loss: Loss) -> Result<(), NetError> {
        self.check_input(x)?;
        if loss != Loss::for_head(self.arch.head) {
            return Err(NetError::LossMismatch {
                head: self.arch.head,
                loss,
            });
        }
        let width = self.arch.head.target_width();
        if targets.ncols() != width || targets.nrows() != x.nrows() {
            return Err(NetError::Shape {
                expected: width,
                got: targets.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(NetError::EmptyBatch);
        }
        Ok(())
    }

    /// Mean batch loss plus `l2 · ‖θ‖²`, without gradients.
    pub fn loss(&self, x: ArrayView2<T>, targets: ArrayView2<T>, loss: Loss, l2: f64) -> Result<LossReport, NetError> {
        self.check_targets(&x, &targets, loss)?;
        let h = self.trunk(&x);
        let (main, value) = self.head_logits(&h.view());
        let (mut report, _, _) = self.head_loss(&main, value.as_ref(), &targets);
        report.penalty = l2 * self.squared_norm();
        report.total += report.penalty;
        Ok(report)
    }

    /// Loss and d(loss)/d(logits) for each head layer; reductions in f64.
    fn head_loss(
        &self,
        main: &Array2<T>,
        value: Option<&Array2<T>>,
        targets: &ArrayView2<T>,
    ) -> (LossReport, Array2<T>, Option<Array2<T>>) {
        let n = main.nrows() as f64;
        let inv_n: T = cast(1.0 / n);
        let mut report = LossReport::default();
        let ce_softmax = |logits: &Array2<T>, pi: ArrayView2<T>| -> (f64, Array2<T>) {
            let mut grad = Array2::zeros(logits.dim());
            let mut total = 0.0;
            for ((z, p), mut g) in logits.rows().into_iter().zip(pi.rows()).zip(grad.rows_mut()) {
                let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(f64_of(v)));
                let lse = max + z.iter().map(|&v| (f64_of(v) - max).exp()).sum::<f64>().ln();
                let mass: f64 = p.iter().map(|&v| f64_of(v)).sum();
                for ((&zi, &pi), gi) in z.iter().zip(p.iter()).zip(g.iter_mut()) {
                    let log_q = f64_of(zi) - lse;
                    total -= f64_of(pi) * log_q;
                    *gi = cast::<T>(log_q.exp() * mass - f64_of(pi)) * inv_n;
                }
            }
            (total / n, grad)
        };
        let mse_tanh = |logits: ArrayView2<T>, z: ArrayView2<T>| -> (f64, Array2<T>) {
            let mut grad = Array2::zeros(logits.dim());
            let mut total = 0.0;
            Zip::from(&mut grad).and(&logits).and(&z).for_each(|g, &u, &t| {
                let v = f64_of(u).tanh();
                let d = v - f64_of(t);
                total += d * d;
                *g = cast::<T>(2.0 * d * (1.0 - v * v)) * inv_n;
            });
            (total / n, grad)
        };
        match self.arch.head {
            Head::Softmax { .. } => {
                let (l, g) = ce_softmax(main, targets.view());
                report.cross_entropy = l;
                report.total = l;
                (report, g, None)
            }
            Head::Sigmoid => {
                let mut grad = Array2::zeros(main.dim());
                let mut total = 0.0;
                Zip::from(&mut grad).and(main).and(targets).for_each(|g, &u, &y| {
                    let u = f64_of(u);
                    let y = f64_of(y);
                    // log(1 + e^u) − y·u, stable for large |u|
                    let softplus = u.max(0.0) + (-u.abs()).exp().ln_1p();
                    total += softplus - y * u;
                    let p = 1.0 / (1.0 + (-u).exp());
                    *g = cast::<T>(p - y) * inv_n;
                });
                report.cross_entropy = total / n;
                report.total = report.cross_entropy;
                (report, grad, None)
            }
            Head::Tanh => {
                let (l, g) = mse_tanh(main.view(), targets.view());
                report.squared_error = l;
                report.total = l;
                (report, g, None)
            }
            Head::PolicyValue { classes } => {
                let (ce, gp) = ce_softmax(main, targets.slice(ndarray::s![.., ..classes]));
                let value = value.expect("dual head has a value layer");
                let (se, gv) = mse_tanh(value.view(), targets.slice(ndarray::s![.., classes..]));
                report.cross_entropy = ce;
                report.squared_error = se;
                report.total = ce + se;
                (report, gp, Some(gv))
            }
        }
    }

    /// Loss report and gradients of the mean batch loss plus `l2 · ‖θ‖²`,
    /// one [`Dense`] of gradients per layer.
    pub fn gradients(
        &self,
        x: ArrayView2<T>,
        targets: ArrayView2<T>,
        loss: Loss,
        l2: f64,
    ) -> Result<(LossReport, Vec<Dense<T>>), NetError> {
        self.check_targets(&x, &targets, loss)?;
        let acts = self.trunk_cached(&x);
        let h = acts.last().unwrap();
        let (main, value) = self.head_logits(&h.view());
        let (mut report, g_main, g_value) = self.head_loss(&main, value.as_ref(), &targets);

        let k = self.n_hidden();
        let mut grads: Vec<Dense<T>> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
            .collect();
        let mut dh = g_main.dot(&self.layers[k].w.t());
        grads[k].w = h.t().dot(&g_main);
        grads[k].b = g_main.sum_axis(Axis(0));
        if let Some(gv) = g_value {
            dh += &gv.dot(&self.layers[k + 1].w.t());
            grads[k + 1].w = h.t().dot(&gv);
            grads[k + 1].b = gv.sum_axis(Axis(0));
        }
        for i in (0..k).rev() {
            let mut dz = dh;
            Zip::from(&mut dz).and(&acts[i + 1]).for_each(|d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
            grads[i].w = acts[i].t().dot(&dz);
            grads[i].b = dz.sum_axis(Axis(0));
            dh = if i > 0 {
                dz.dot(&self.layers[i].w.t())
            } else {
                Array2::zeros((0, 0))
            };
        }
        if l2 != 0.0 {
            let two_c: T = cast(2.0 * l2);
            for (g, p) in grads.iter_mut().zip(&self.layers) {
                g.w.scaled_add(two_c, &p.w);
                g.b.scaled_add(two_c, &p.b);
            }
            report.penalty = l2 * self.squared_norm();
            report.total += report.penalty;
        }
        Ok((report, grads))
    }
}
