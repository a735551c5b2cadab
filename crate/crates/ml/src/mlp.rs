//! Dense ReLU network for scalar regression, trained with Nadam on
//! mini-batch mean squared error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::preprocess::{check_finite, check_width, check_xy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n_hidden: usize,
    pub n_neurons: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            n_hidden: 4,
            n_neurons: 100,
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl MlpParams {
    fn validate(&self) -> Result<()> {
        if self.n_neurons == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(MlError::Config("n_neurons, batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(MlError::Config("learning rate must be > 0 and betas in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Weight matrices are `fan_in x fan_out`; the last layer is linear with a
/// single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(MlError::Config(format!("bad layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| normal.sample(&mut rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Mlp {
            weights,
            biases,
            loss_trace: vec![],
        })
    }

    pub fn n_features(&self) -> usize {
        self.weights[0].nrows()
    }

    /// Pre-activations of every layer for a batch.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut zs: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = if l == 0 {
                x.dot(w) + b
            } else {
                zs[l - 1].mapv(relu).dot(w) + b
            };
            zs.push(z);
        }
        zs
    }

    /// Network output, shape `(batch, 1)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_all(x).pop().expect("at least one layer")
    }

    /// Mean squared error on `(x, y)` and its gradient by back-propagation.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Gradients) {
        let zs = self.forward_all(x);
        let out = zs.last().expect("at least one layer").column(0).to_owned();
        let b = y.len() as f64;
        let err = &out - &y;
        let loss = err.mapv(|e| e * e).sum() / b;

        let n_layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        let mut delta = (err * (2.0 / b)).insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            let input = if l == 0 { x.to_owned() } else { zs[l - 1].mapv(relu) };
            gw[l] = input.t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                Zip::from(&mut back).and(&zs[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &MlpParams, seed: u64) -> Result<Self> {
        check_xy(x, y)?;
        params.validate()?;
        let mut sizes = vec![x.ncols()];
        sizes.extend(std::iter::repeat_n(params.n_neurons, params.n_hidden));
        sizes.push(1);
        let mut net = Mlp::init(&sizes, seed)?;
        let mut opt = Nadam::new(&net, params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(params.batch_size) {
                let xb = x.select(Axis(0), batch);
                let yb = y.select(Axis(0), batch);
                let (loss, grads) = net.loss_and_gradients(xb.view(), yb.view());
                total += loss * batch.len() as f64;
                opt.step(&mut net, &grads);
            }
            let epoch_loss = total / x.nrows() as f64;
            if !epoch_loss.is_finite() {
                let last = net.loss_trace.last().copied();
                return Err(MlError::Training(format!(
                    "loss diverged at epoch {epoch} (previous epoch loss {last:?}, learning rate {})",
                    params.learning_rate
                )));
            }
            net.loss_trace.push(epoch_loss);
        }
        Ok(net)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features())?;
        check_finite(x)?;
        Ok(self.forward(x).column(0).to_owned())
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Adam with a Nesterov look-ahead on the first moment.
struct Nadam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl Nadam {
    fn new(net: &Mlp, p: &MlpParams) -> Self {
        Nadam {
            lr: p.learning_rate,
            beta1: p.beta1,
            beta2: p.beta2,
            epsilon: p.epsilon,
            t: 0,
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn step(&mut self, net: &mut Mlp, g: &Gradients) {
        self.t += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.lr);
        let c_next = 1.0 - b1.powi(self.t + 1);
        let c_now = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |theta: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = b1 * *m / c_next + (1.0 - b1) * g / c_now;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            Zip::from(&mut net.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&g.weights[l])
                .for_each(|t, m, v, &g| update(t, m, v, g));
            Zip::from(&mut net.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&g.biases[l])
                .for_each(|t, m, v, &g| update(t, m, v, g));
        }
    }
}
