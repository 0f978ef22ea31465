//! Fully-connected regression network trained with Adam on squared error.
//!
//! Categorical inputs are one-hot encoded. The input Jacobian is obtained by
//! back-propagating a unit output gradient through the same layers used for
//! training, so it is exact up to floating point.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMeta};
use crate::error::{RamError, Result};

/// Rows per forward block; fixed so results do not depend on the thread count.
const BLOCK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: vec![64; 6],
            activation: Activation::Tanh,
            epochs: 60,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(RamError::InvalidArgument("hidden layer widths must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RamError::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(RamError::InvalidArgument(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Maps raw dataset rows to network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    /// First network input of every feature.
    pub offsets: Vec<usize>,
    /// Category count per feature; `None` for numeric.
    pub levels: Vec<Option<usize>>,
    pub width: usize,
}

impl InputEncoding {
    pub fn from_features(features: &[FeatureMeta]) -> Self {
        let mut offsets = Vec::with_capacity(features.len());
        let mut levels = Vec::with_capacity(features.len());
        let mut width = 0;
        for f in features {
            offsets.push(width);
            let k = f.categories().map(<[String]>::len);
            width += k.unwrap_or(1);
            levels.push(k);
        }
        InputEncoding {
            offsets,
            levels,
            width,
        }
    }

    pub fn arity(&self) -> usize {
        self.offsets.len()
    }

    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.width));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                out[[i, self.coordinate(s, v)]] = if self.levels[s].is_some() { 1.0 } else { v };
            }
        }
        out
    }

    /// Network input that carries feature `s` at raw value `v`.
    pub fn coordinate(&self, s: usize, v: f64) -> usize {
        match self.levels[s] {
            Some(k) => self.offsets[s] + (v.max(0.0) as usize).min(k - 1),
            None => self.offsets[s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    encoding: InputEncoding,
    activation: Activation,
    layers: Vec<Dense>,
    /// Full-data training MSE before the first update and after every epoch.
    pub loss_history: Vec<f64>,
}

struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Mlp {
    fn init(encoding: InputEncoding, cfg: &MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![encoding.width];
        widths.extend(&cfg.hidden_layers);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = match cfg.activation {
                    Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                };
                Dense {
                    weights: Array2::from_shape_fn((fan_in, fan_out), |_| {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp {
            encoding,
            activation: cfg.activation,
            layers,
            loss_history: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.encoding.arity()
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Activations of every layer; the last entry is the `(rows, 1)` output.
    fn forward_encoded(&self, input: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weights) + &layer.bias;
            if l < last {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Propagates `grad_out` (d loss / d output) back; returns per-layer
    /// parameter gradients and the gradient w.r.t. the encoded input.
    fn backward(
        &self,
        acts: &[Array2<f64>],
        grad_out: Array2<f64>,
        want_params: bool,
    ) -> (Vec<(Array2<f64>, Array1<f64>)>, Array2<f64>) {
        let mut grads = Vec::new();
        let mut delta = grad_out;
        for l in (0..self.layers.len()).rev() {
            if want_params {
                grads.push((acts[l].t().dot(&delta), delta.sum_axis(Axis(0))));
            }
            let mut upstream = delta.dot(&self.layers[l].weights.t());
            if l > 0 {
                let act = self.activation;
                upstream.zip_mut_with(&acts[l], |g, &a| *g *= act.derivative_from_output(a));
            }
            delta = upstream;
        }
        grads.reverse();
        (grads, delta)
    }

    pub fn predict_encoded(&self, input: Array2<f64>) -> Array1<f64> {
        let acts = self.forward_encoded(input);
        acts.last().unwrap().column(0).to_owned()
    }

    pub fn predict_block(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.predict_encoded(self.encoding.encode(x))
    }

    /// Per-feature input gradients for a block of raw rows.
    pub fn jacobian_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let acts = self.forward_encoded(self.encoding.encode(x));
        let (_, d_input) = self.backward(&acts, Array2::ones((x.nrows(), 1)), false);
        let mut jac = Array2::zeros((x.nrows(), self.arity()));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                jac[[i, s]] = d_input[[i, self.encoding.coordinate(s, v)]];
            }
        }
        jac
    }

    /// Output with the network input carrying feature `s` shifted by `delta`.
    pub fn predict_shifted(&self, row: &[f64], s: usize, delta: f64) -> f64 {
        let view = ArrayView2::from_shape((1, row.len()), row).unwrap();
        let mut enc = self.encoding.encode(view);
        enc[[0, self.encoding.coordinate(s, row[s])]] += delta;
        self.predict_encoded(enc)[0]
    }

    fn full_mse(&self, input: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let mut sse = 0.0;
        for start in (0..input.nrows()).step_by(BLOCK_ROWS) {
            let end = (start + BLOCK_ROWS).min(input.nrows());
            let pred = self.predict_encoded(input.slice(s![start..end, ..]).to_owned());
            sse += pred
                .iter()
                .zip(y.slice(s![start..end]))
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>();
        }
        sse / input.nrows() as f64
    }

    fn adam_step(&mut self, state: &mut AdamState, grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        state.step += 1;
        let bc1 = 1.0 - BETA1.powi(state.step);
        let bc2 = 1.0 - BETA2.powi(state.step);
        for (l, (gw, gb)) in grads.iter().enumerate() {
            let (mw, mb) = &mut state.m[l];
            let (vw, vb) = &mut state.v[l];
            let layer = &mut self.layers[l];
            ndarray::Zip::from(&mut layer.weights)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
        }
    }
}

/// Trains a network on (standardized) data with mini-batch Adam.
pub fn train_mlp(ds: &Dataset, cfg: &MlpConfig) -> Result<Mlp> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoding = InputEncoding::from_features(&ds.features);
    let input = encoding.encode(ds.x.view());
    let mut net = Mlp::init(encoding, cfg, &mut rng);
    let mut adam = AdamState {
        m: net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect(),
        v: net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect(),
        step: 0,
    };

    let n = ds.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let initial = net.full_mse(&input, &ds.y);
    if !initial.is_finite() {
        return Err(RamError::NonFiniteLoss { epoch: 0 });
    }
    net.loss_history.push(initial);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = input.select(Axis(0), batch);
            let yb = ds.y.select(Axis(0), batch);
            let acts = net.forward_encoded(xb);
            let out = acts.last().unwrap();
            let scale = 2.0 / batch.len() as f64;
            let grad_out =
                Array2::from_shape_fn((batch.len(), 1), |(i, _)| scale * (out[[i, 0]] - yb[i]));
            let (grads, _) = net.backward(&acts, grad_out, true);
            net.adam_step(&mut adam, &grads, cfg.learning_rate);
        }
        let mse = net.full_mse(&input, &ds.y);
        if !mse.is_finite() {
            return Err(RamError::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: train mse {mse:.5}");
        net.loss_history.push(mse);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_ds(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y = x.column(0).to_owned();
        Dataset::new(
            vec![
                FeatureMeta::numeric("x1", 0, 0.0, 0.0),
                FeatureMeta::numeric("x2", 1, 0.0, 0.0),
            ],
            x,
            y,
            "y",
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = MlpConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.learning_rate = 1.5;
        assert!(cfg.validate().is_err());
        cfg.learning_rate = 0.01;
        cfg.hidden_layers = vec![4, 0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn encoding_places_one_hot_blocks() {
        let feats = vec![
            FeatureMeta::numeric("a", 0, 0.0, 1.0),
            FeatureMeta::categorical("c", 1, vec!["x".into(), "y".into(), "z".into()]),
            FeatureMeta::numeric("b", 2, 0.0, 1.0),
        ];
        let enc = InputEncoding::from_features(&feats);
        assert_eq!(enc.width, 5);
        let row = Array2::from_shape_vec((1, 3), vec![0.5, 2.0, -1.0]).unwrap();
        assert_eq!(
            enc.encode(row.view()).row(0).to_vec(),
            vec![0.5, 0.0, 0.0, 1.0, -1.0]
        );
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let ds = linear_ds(200, 3);
        let cfg = MlpConfig {
            hidden_layers: vec![8, 8],
            epochs: 5,
            seed: 11,
            ..MlpConfig::default()
        };
        let a = train_mlp(&ds, &cfg).unwrap();
        let b = train_mlp(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
    }
}
