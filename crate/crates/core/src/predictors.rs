//! Trainable predictive modules.
//!
//! A predictor maps the values on an input stencil to the values on an
//! output stencil. Two model families are provided: a linear map
//! (`hidden_units == 0`, fitted by least squares) and a single-hidden-layer
//! perceptron trained with plain mini-batch gradient descent. Inputs and
//! targets pass through an affine normalisation fitted on the training data.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest half-range used when normalising a feature. Keeps near-constant
/// features from being blown up into noise.
pub const MIN_SCALE: f64 = 1e-3;

const FORMAT_TAG: &str = "premonn-predictor 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::parse("activation", format!("unknown `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Zero selects the linear model.
    pub hidden_units: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl PredictorSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self { input_dim, output_dim, hidden_units: 0, activation: Activation::Tanh, seed: 0 }
    }

    pub fn mlp(input_dim: usize, output_dim: usize, hidden_units: usize, seed: u64) -> Self {
        Self { input_dim, output_dim, hidden_units, activation: Activation::Tanh, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("predictor dimensions must be >= 1".into()));
        }
        Ok(())
    }

    /// Length of the flat weight vector.
    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input_dim, self.hidden_units, self.output_dim);
        if h == 0 {
            o * i + o
        } else {
            h * i + h + o * h + o
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    /// Stop when the epoch loss changes by less than this; zero disables.
    pub early_stop_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 0.05, batch_size: 16, l2: 0.0, early_stop_tol: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.l2 >= 0.0 && self.early_stop_tol >= 0.0) {
            return Err(Error::Config("l2 and early_stop_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

/// Windows a scalar series into `(y_{k+M-1}, ..., y_k) -> y_{k+M}` pairs.
pub fn make_training_pairs(values: &[f64], order: usize) -> Result<Vec<Sample>> {
    if order == 0 {
        return Err(Error::Config("autoregressive order must be >= 1".into()));
    }
    if values.len() <= order {
        return Err(Error::TooShort { needed: order, got: values.len() });
    }
    Ok(values
        .windows(order + 1)
        .map(|w| Sample { input: w[..order].iter().rev().copied().collect(), target: vec![w[order]] })
        .collect())
}

/// Euclidean distance between observation and prediction.
pub fn prediction_error(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::Dimension { expected: observed.len(), got: predicted.len(), context: "prediction error" });
    }
    Ok(observed.iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Per-feature affine map onto roughly `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub in_center: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_center: Vec<f64>,
    pub out_scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            in_center: vec![0.0; input_dim],
            in_scale: vec![1.0; input_dim],
            out_center: vec![0.0; output_dim],
            out_scale: vec![1.0; output_dim],
        }
    }

    fn fit(samples: &[Sample], input_dim: usize, output_dim: usize) -> Self {
        let (in_center, in_scale) = center_scale(samples.iter().map(|s| &s.input[..]), input_dim);
        let (out_center, out_scale) = center_scale(samples.iter().map(|s| &s.target[..]), output_dim);
        Self { in_center, in_scale, out_center, out_scale }
    }

    fn input(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().zip(self.in_center.iter().zip(&self.in_scale)).map(|(v, (c, s))| (v - c) / s));
    }

    fn target(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(self.out_center.iter().zip(&self.out_scale)).map(|(v, (c, s))| (v - c) / s).collect()
    }

    fn restore(&self, y: &mut [f64]) {
        for (v, (c, s)) in y.iter_mut().zip(self.out_center.iter().zip(&self.out_scale)) {
            *v = *v * s + c;
        }
    }
}

fn center_scale<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let scale = lo.iter().zip(&hi).map(|(a, b)| (0.5 * (b - a)).max(MIN_SCALE)).collect();
    (center, scale)
}

/// Raw network over normalised values: the weights plus forward and
/// backward passes. Layout of the flat weight vector:
/// hidden model `[W1 (h x i) | b1 (h) | W2 (o x h) | b2 (o)]`,
/// linear model `[W (o x i) | b (o)]`, all row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: PredictorSpec,
    pub weights: Vec<f64>,
}

impl Network {
    /// Uniform initialisation in `±1/sqrt(fan_in)` from `spec.seed`.
    pub fn init(spec: PredictorSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (i, h, o) = (spec.input_dim, spec.hidden_units, spec.output_dim);
        let mut weights = Vec::with_capacity(spec.param_count());
        let mut layer = |rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                weights.push(rng.random_range(-bound..bound));
            }
        };
        if h == 0 {
            layer(&mut rng, i, o);
        } else {
            layer(&mut rng, i, h);
            layer(&mut rng, h, o);
        }
        Self { spec, weights }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut hidden = Vec::new();
        let mut out = vec![0.0; self.spec.output_dim];
        self.forward_into(input, &mut hidden, &mut out);
        out
    }

    fn forward_into(&self, input: &[f64], hidden: &mut Vec<f64>, out: &mut [f64]) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden_units, self.spec.output_dim);
        let w = &self.weights;
        if h == 0 {
            let (wm, b) = w.split_at(o * i);
            for k in 0..o {
                out[k] = b[k] + dot(&wm[k * i..(k + 1) * i], input);
            }
            return;
        }
        let (w1, rest) = w.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        hidden.clear();
        hidden.extend((0..h).map(|k| self.spec.activation.apply(b1[k] + dot(&w1[k * i..(k + 1) * i], input))));
        for k in 0..o {
            out[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
        }
    }

    /// Mean over the batch of `0.5 * |f(x) - t|^2`, plus `0.5 * l2 * |w|^2`,
    /// and its gradient with respect to the flat weight vector.
    pub fn loss_and_gradient(&self, batch: &[Sample], l2: f64) -> (f64, Vec<f64>) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden_units, self.spec.output_dim);
        let mut grad = vec![0.0; self.weights.len()];
        let mut loss = 0.0;
        let mut hidden = Vec::with_capacity(h);
        let mut out = vec![0.0; o];
        let mut delta_out = vec![0.0; o];
        let inv = 1.0 / batch.len() as f64;
        for s in batch {
            self.forward_into(&s.input, &mut hidden, &mut out);
            for k in 0..o {
                delta_out[k] = (out[k] - s.target[k]) * inv;
                loss += 0.5 * (out[k] - s.target[k]).powi(2) * inv;
            }
            if h == 0 {
                let (gw, gb) = grad.split_at_mut(o * i);
                for k in 0..o {
                    axpy(delta_out[k], &s.input, &mut gw[k * i..(k + 1) * i]);
                    gb[k] += delta_out[k];
                }
                continue;
            }
            let w2 = &self.weights[h * i + h..h * i + h + o * h];
            let (g1, rest) = grad.split_at_mut(h * i);
            let (gb1, rest) = rest.split_at_mut(h);
            let (g2, gb2) = rest.split_at_mut(o * h);
            for k in 0..o {
                axpy(delta_out[k], &hidden, &mut g2[k * h..(k + 1) * h]);
                gb2[k] += delta_out[k];
            }
            for j in 0..h {
                let back: f64 = (0..o).map(|k| delta_out[k] * w2[k * h + j]).sum();
                let dz = back * self.spec.activation.derivative(hidden[j]);
                axpy(dz, &s.input, &mut g1[j * i..(j + 1) * i]);
                gb1[j] += dz;
            }
        }
        if l2 > 0.0 {
            for (g, w) in grad.iter_mut().zip(&self.weights) {
                *g += l2 * w;
            }
            loss += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        }
        (loss, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// A fitted predictor. Immutable after training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPredictor {
    pub spec: PredictorSpec,
    pub normalization: Normalization,
    pub weights: Vec<f64>,
    /// Mean squared error per output component on the training pairs, in
    /// the original units.
    pub train_mse: f64,
}

impl TrainedPredictor {
    /// A linear predictor with explicit raw-space coefficients.
    pub fn from_linear(coefficients: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let output_dim = coefficients.len();
        let input_dim = coefficients.first().map_or(0, Vec::len);
        let spec = PredictorSpec::linear(input_dim, output_dim);
        spec.validate()?;
        if bias.len() != output_dim || coefficients.iter().any(|r| r.len() != input_dim) {
            return Err(Error::Dimension { expected: output_dim, got: bias.len(), context: "linear coefficients" });
        }
        let mut weights: Vec<f64> = coefficients.iter().flatten().copied().collect();
        weights.extend_from_slice(bias);
        Ok(Self { normalization: Normalization::identity(input_dim, output_dim), spec, weights, train_mse: 0.0 })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.spec.output_dim];
        self.predict_into(input, &mut out)?;
        Ok(out)
    }

    pub fn predict_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        if input.len() != self.spec.input_dim {
            return Err(Error::Dimension {
                expected: self.spec.input_dim,
                got: input.len(),
                context: "predictor input",
            });
        }
        if out.len() != self.spec.output_dim {
            return Err(Error::Dimension {
                expected: self.spec.output_dim,
                got: out.len(),
                context: "predictor output",
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictor input"));
        }
        let mut x = Vec::with_capacity(input.len());
        self.normalization.input(input, &mut x);
        let net = NetworkRef { spec: &self.spec, weights: &self.weights };
        net.forward(&x, out);
        self.normalization.restore(out);
        Ok(())
    }

    /// Raw-space `(coefficients per output, bias)` of a linear model.
    pub fn linear_coefficients(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.spec.hidden_units != 0 {
            return None;
        }
        let (i, o) = (self.spec.input_dim, self.spec.output_dim);
        let n = &self.normalization;
        let mut coeffs = Vec::with_capacity(o);
        let mut bias = Vec::with_capacity(o);
        for k in 0..o {
            let row: Vec<f64> = (0..i).map(|j| n.out_scale[k] * self.weights[k * i + j] / n.in_scale[j]).collect();
            let shift: f64 = (0..i).map(|j| self.weights[k * i + j] * n.in_center[j] / n.in_scale[j]).sum();
            bias.push(n.out_scale[k] * (self.weights[o * i + k] - shift) + n.out_center[k]);
            coeffs.push(row);
        }
        Some((coeffs, bias))
    }

    pub fn mse(&self, samples: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        let mut out = vec![0.0; self.spec.output_dim];
        for s in samples {
            self.predict_into(&s.input, &mut out)?;
            total += out.iter().zip(&s.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / (samples.len() * self.spec.output_dim) as f64)
    }

    /// Plain-text form: tag line, spec line, normalisation line, weights line.
    /// Floats carry 17 significant digits, which round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(
            s,
            "spec {} {} {} {} {} {}",
            self.spec.input_dim,
            self.spec.output_dim,
            self.spec.hidden_units,
            self.spec.activation,
            self.spec.seed,
            fmt_f64(self.train_mse)
        );
        let n = &self.normalization;
        let _ = writeln!(
            s,
            "norm {} ; {} ; {} ; {}",
            join_f64(&n.in_center),
            join_f64(&n.in_scale),
            join_f64(&n.out_center),
            join_f64(&n.out_scale)
        );
        let _ = writeln!(s, "weights {}", join_f64(&self.weights));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::parse("predictor", msg.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(FORMAT_TAG) {
            return Err(bad("missing or unsupported format tag"));
        }
        let spec_line = lines.next().ok_or_else(|| bad("missing spec line"))?;
        let f: Vec<&str> = spec_line.split_whitespace().collect();
        if f.len() != 7 || f[0] != "spec" {
            return Err(bad("malformed spec line"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(&e.to_string()));
        let spec = PredictorSpec {
            input_dim: int(f[1])?,
            output_dim: int(f[2])?,
            hidden_units: int(f[3])?,
            activation: f[4].parse()?,
            seed: f[5].parse().map_err(|e: std::num::ParseIntError| bad(&e.to_string()))?,
        };
        spec.validate()?;
        let train_mse = parse_f64(f[6])?;
        let norm_line = lines.next().ok_or_else(|| bad("missing norm line"))?;
        let body = norm_line.strip_prefix("norm").ok_or_else(|| bad("malformed norm line"))?;
        let parts: Vec<Vec<f64>> = body
            .split(';')
            .map(|p| p.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        if parts.len() != 4
            || parts[0].len() != spec.input_dim
            || parts[1].len() != spec.input_dim
            || parts[2].len() != spec.output_dim
            || parts[3].len() != spec.output_dim
        {
            return Err(bad("normalisation does not match spec"));
        }
        let mut parts = parts.into_iter();
        let normalization = Normalization {
            in_center: parts.next().unwrap(),
            in_scale: parts.next().unwrap(),
            out_center: parts.next().unwrap(),
            out_scale: parts.next().unwrap(),
        };
        let wline = lines.next().ok_or_else(|| bad("missing weights line"))?;
        let weights = wline
            .strip_prefix("weights")
            .ok_or_else(|| bad("malformed weights line"))?
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        if weights.len() != spec.param_count() {
            return Err(Error::Dimension {
                expected: spec.param_count(),
                got: weights.len(),
                context: "serialized weights",
            });
        }
        Ok(Self { spec, normalization, weights, train_mse })
    }
}

struct NetworkRef<'a> {
    spec: &'a PredictorSpec,
    weights: &'a [f64],
}

impl NetworkRef<'_> {
    fn forward(&self, input: &[f64], out: &mut [f64]) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden_units, self.spec.output_dim);
        let w = self.weights;
        if h == 0 {
            for k in 0..o {
                out[k] = w[o * i + k] + dot(&w[k * i..(k + 1) * i], input);
            }
            return;
        }
        let b1 = &w[h * i..h * i + h];
        let w2 = &w[h * i + h..h * i + h + o * h];
        let b2 = &w[h * i + h + o * h..];
        out.copy_from_slice(b2);
        for j in 0..h {
            let a = self.spec.activation.apply(b1[j] + dot(&w[j * i..(j + 1) * i], input));
            for k in 0..o {
                out[k] += w2[k * h + j] * a;
            }
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::parse("predictor", format!("`{s}`: {e}")))
}

/// Fits a predictor to `samples`. Linear models are solved directly by
/// (ridge) least squares; hidden-layer models use mini-batch gradient
/// descent with a fixed learning rate. Deterministic given `spec.seed`.
pub fn train(samples: &[Sample], spec: &PredictorSpec, cfg: &TrainConfig) -> Result<TrainedPredictor> {
    spec.validate()?;
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::TooShort { needed: 0, got: 0 });
    }
    for s in samples {
        if s.input.len() != spec.input_dim {
            return Err(Error::Dimension { expected: spec.input_dim, got: s.input.len(), context: "training input" });
        }
        if s.target.len() != spec.output_dim {
            return Err(Error::Dimension {
                expected: spec.output_dim,
                got: s.target.len(),
                context: "training target",
            });
        }
        if s.input.iter().chain(&s.target).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
    }
    let normalization = Normalization::fit(samples, spec.input_dim, spec.output_dim);
    let mut buf = Vec::new();
    let scaled: Vec<Sample> = samples
        .iter()
        .map(|s| {
            normalization.input(&s.input, &mut buf);
            Sample { input: buf.clone(), target: normalization.target(&s.target) }
        })
        .collect();
    let weights = if spec.hidden_units == 0 {
        fit_linear(&scaled, spec, cfg.l2)?
    } else {
        fit_gradient_descent(&scaled, spec, cfg)?
    };
    let mut trained = TrainedPredictor { spec: spec.clone(), normalization, weights, train_mse: 0.0 };
    trained.train_mse = trained.mse(samples)?;
    if !trained.train_mse.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    Ok(trained)
}

fn fit_linear(samples: &[Sample], spec: &PredictorSpec, l2: f64) -> Result<Vec<f64>> {
    let (i, o) = (spec.input_dim, spec.output_dim);
    let n = samples.len();
    let reg_rows = if l2 > 0.0 { i } else { 0 };
    let mut x = DMatrix::<f64>::zeros(n + reg_rows, i + 1);
    let mut y = DMatrix::<f64>::zeros(n + reg_rows, o);
    for (r, s) in samples.iter().enumerate() {
        for (c, v) in s.input.iter().enumerate() {
            x[(r, c)] = *v;
        }
        x[(r, i)] = 1.0;
        for (c, v) in s.target.iter().enumerate() {
            y[(r, c)] = *v;
        }
    }
    let ridge = (l2 * n as f64).sqrt();
    for k in 0..reg_rows {
        x[(n + k, k)] = ridge;
    }
    let svd = x.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    let sol = svd.solve(&y, tol).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let mut weights = vec![0.0; spec.param_count()];
    for k in 0..o {
        for j in 0..i {
            weights[k * i + j] = sol[(j, k)];
        }
        weights[o * i + k] = sol[(i, k)];
    }
    Ok(weights)
}

fn fit_gradient_descent(samples: &[Sample], spec: &PredictorSpec, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut net = Network::init(spec.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut prev_loss = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| samples[k].clone()));
            let (loss, grad) = net.loss_and_gradient(&batch, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            for (w, g) in net.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        epoch_loss /= samples.len() as f64;
        if net.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        if cfg.early_stop_tol > 0.0 && (prev_loss - epoch_loss).abs() < cfg.early_stop_tol {
            break;
        }
        prev_loss = epoch_loss;
    }
    Ok(net.weights)
}

/// Independent single-output-stencil predictors, one per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorGroup {
    pub channels: Vec<TrainedPredictor>,
}

impl PredictorGroup {
    pub fn new(channels: Vec<TrainedPredictor>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("predictor group needs at least one channel".into()));
        }
        Ok(Self { channels })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Trains one predictor per channel; channel `p` uses seed `spec.seed + p`.
    pub fn train(per_channel: &[Vec<Sample>], spec: &PredictorSpec, cfg: &TrainConfig) -> Result<Self> {
        let channels = per_channel
            .iter()
            .enumerate()
            .map(|(p, samples)| {
                let mut s = spec.clone();
                s.seed = spec.seed.wrapping_add(p as u64);
                train(samples, &s, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    /// Stacks the per-channel predictions in channel order.
    pub fn predict(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.len() != self.channels.len() {
            return Err(Error::Dimension {
                expected: self.channels.len(),
                got: inputs.len(),
                context: "channel count",
            });
        }
        let mut out = Vec::new();
        for (p, x) in self.channels.iter().zip(inputs) {
            out.extend(p.predict(x)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ar1_samples() -> Vec<Sample> {
        let mut v = vec![3.0];
        for _ in 0..40 {
            let last = *v.last().unwrap();
            v.push(0.5 * last);
        }
        make_training_pairs(&v, 1).unwrap()
    }

    #[test]
    fn windowing() {
        let p = make_training_pairs(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], Sample::new(vec![2.0, 1.0], vec![3.0]));
        assert_eq!(p[1], Sample::new(vec![3.0, 2.0], vec![4.0]));
        assert!(matches!(make_training_pairs(&[1.0, 2.0], 2), Err(Error::TooShort { .. })));
        let c = make_training_pairs(&[7.0; 10], 3).unwrap();
        assert!(c.iter().all(|s| s.target == vec![7.0]));
    }

    #[test]
    fn error_norm() {
        assert_eq!(prediction_error(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(prediction_error(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(prediction_error(&[2.5], &[2.0]).unwrap(), 0.5);
        assert!(prediction_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn explicit_linear_predict() {
        let zero = TrainedPredictor::from_linear(&[vec![0.0, 0.0]], &[0.0]).unwrap();
        assert_eq!(zero.predict(&[4.0, -1.0]).unwrap(), vec![0.0]);
        let half = TrainedPredictor::from_linear(&[vec![0.5]], &[0.0]).unwrap();
        assert_eq!(half.predict(&[2.0]).unwrap(), vec![1.0]);
        assert!(half.predict(&[1.0, 2.0]).is_err());
        assert!(matches!(half.predict(&[f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn linear_recovers_ar1() {
        let p = train(&ar1_samples(), &PredictorSpec::linear(1, 1), &TrainConfig::default()).unwrap();
        assert!(p.train_mse < 1e-10, "mse {}", p.train_mse);
        let (c, b) = p.linear_coefficients().unwrap();
        assert!((c[0][0] - 0.5).abs() < 1e-4);
        assert!(b[0].abs() < 1e-6);
        let y = p.predict(&[4.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn constant_target_is_realizable() {
        let samples: Vec<Sample> =
            (0..30).map(|k| Sample::new(vec![k as f64 * 0.1, (k as f64).sin()], vec![2.5])).collect();
        for hidden in [0, 6] {
            let spec = PredictorSpec::mlp(2, 1, hidden, 3);
            let p = train(&samples, &spec, &TrainConfig::default()).unwrap();
            assert!(p.train_mse < 1e-6, "hidden {hidden}: {}", p.train_mse);
            assert!((p.predict(&[0.7, 0.3]).unwrap()[0] - 2.5).abs() < 1e-3);
        }
    }

    #[test]
    fn mlp_fits_sine_ar_map() {
        let v: Vec<f64> = (0..200).map(|k| (0.3 * k as f64).sin()).collect();
        let pairs = make_training_pairs(&v, 2).unwrap();
        let spec = PredictorSpec::mlp(2, 1, 8, 11);
        let cfg = TrainConfig { epochs: 2000, learning_rate: 0.05, batch_size: 16, ..TrainConfig::default() };
        let p = train(&pairs, &spec, &cfg).unwrap();
        assert!(p.train_mse < 1e-3, "mse {}", p.train_mse);
    }

    #[test]
    fn linear_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Sample> = (0..50)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = 1.5 * x[0] - 0.7 * x[1] + 0.2 * x[2] + 0.3 + rng.random_range(-0.1..0.1);
                Sample::new(x, vec![y])
            })
            .collect();
        let p = train(&samples, &PredictorSpec::linear(3, 1), &TrainConfig::default()).unwrap();
        let (c, b) = p.linear_coefficients().unwrap();
        // normal equations on [x, 1] solved by Gaussian elimination
        let mut m = [[0.0f64; 5]; 4];
        for s in &samples {
            let row = [s.input[0], s.input[1], s.input[2], 1.0];
            for r in 0..4 {
                for k in 0..4 {
                    m[r][k] += row[r] * row[k];
                }
                m[r][4] += row[r] * s.target[0];
            }
        }
        for col in 0..4 {
            let piv = (col..4).max_by(|a, b| m[*a][col].abs().total_cmp(&m[*b][col].abs())).unwrap();
            m.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for k in col..5 {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..4).map(|r| m[r][4] / m[r][r]).collect();
        for j in 0..3 {
            assert!((c[0][j] - beta[j]).abs() < 1e-6);
        }
        assert!((b[0] - beta[3]).abs() < 1e-6);
    }

    #[test]
    fn determinism() {
        let pairs = ar1_samples();
        let spec = PredictorSpec::mlp(1, 1, 5, 42);
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        let a = train(&pairs, &spec, &cfg).unwrap();
        let b = train(&pairs, &spec, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn divergence_is_reported() {
        let samples: Vec<Sample> =
            (0..20).map(|k| Sample::new(vec![k as f64, (k * k) as f64], vec![(k as f64).cos()])).collect();
        let spec = PredictorSpec::mlp(2, 1, 8, 1);
        let cfg = TrainConfig { epochs: 200, learning_rate: 1e6, ..TrainConfig::default() };
        assert!(matches!(train(&samples, &spec, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = vec![Sample::new(vec![1.0, 2.0], vec![1.0])];
        assert!(matches!(
            train(&s, &PredictorSpec::linear(3, 1), &TrainConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let samples: Vec<Sample> = (0..25)
            .map(|k| {
                let x = k as f64 / 7.0;
                Sample::new(vec![x, x.sin()], vec![x.cos(), 0.1 * x])
            })
            .collect();
        let spec = PredictorSpec { activation: Activation::Relu, ..PredictorSpec::mlp(2, 2, 4, 9) };
        let p = train(&samples, &spec, &TrainConfig { epochs: 20, ..Default::default() }).unwrap();
        let q = TrainedPredictor::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert!(TrainedPredictor::from_text("garbage").is_err());
    }

    fn relative_gap(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    fn finite_difference_check(spec: PredictorSpec, batch: &[Sample], l2: f64) {
        let net = Network::init(spec);
        let (_, grad) = net.loss_and_gradient(batch, l2);
        let h = 1e-5;
        for k in 0..net.weights.len() {
            let mut plus = net.clone();
            plus.weights[k] += h;
            let mut minus = net.clone();
            minus.weights[k] -= h;
            let fd = (plus.loss_and_gradient(batch, l2).0 - minus.loss_and_gradient(batch, l2).0) / (2.0 * h);
            if grad[k].abs() < 1e-7 && fd.abs() < 1e-7 {
                continue;
            }
            assert!(relative_gap(grad[k], fd) < 1e-4, "param {k}: {} vs {fd}", grad[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradient_matches_finite_differences(
            seed in 0u64..1000,
            input_dim in 1usize..4,
            hidden in 0usize..5,
            output_dim in 1usize..3,
            l2 in prop_oneof![Just(0.0), 0.0f64..0.1],
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch: Vec<Sample> = (0..5)
                .map(|_| Sample::new(
                    (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..output_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                ))
                .collect();
            finite_difference_check(PredictorSpec::mlp(input_dim, output_dim, hidden, seed), &batch, l2);
        }
    }
}
