//! Feed-forward regressor: dense layers with batch normalization before a
//! rectifier, a linear output layer, MSE loss with L2 decay, and AdaMax.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::serde_mat;
use crate::linalg::Mat;
use crate::{AbeError, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const ADAMAX_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub l2: f64,
    pub batch_norm: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_units: 512,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 180,
            beta1: 0.9,
            beta2: 0.999,
            l2: 1e-4,
            batch_norm: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `outputs x inputs`.
    #[serde(with = "serde_mat")]
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer intermediate values of a training-mode forward pass.
struct Cache {
    input: Mat,
    xhat: Option<Mat>,
    inv_std: Vec<f64>,
    pre_activation: Mat,
}

/// Gradients in the same layout as the parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Mat>,
    pub bias: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-uniform initialized network `inputs -> hidden^layers -> outputs`.
    pub fn new(inputs: usize, outputs: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dims = vec![inputs];
        dims.extend(std::iter::repeat_n(cfg.hidden_units, cfg.hidden_layers));
        dims.push(outputs);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let hidden = i + 1 < dims.len() - 1;
                let limit = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: Mat::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit)),
                    bias: vec![0.0; w[1]],
                    norm: (hidden && cfg.batch_norm).then(|| BatchNorm {
                        gamma: vec![1.0; w[1]],
                        beta: vec![0.0; w[1]],
                        running_mean: vec![0.0; w[1]],
                        running_var: vec![1.0; w[1]],
                    }),
                    activation: if hidden { Activation::Relu } else { Activation::Linear },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.ncols())
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    /// Checks that layer shapes chain and the activations follow the
    /// hidden-rectifier / linear-output layout.
    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if n == 0 {
            return Err(AbeError::Model("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(AbeError::Model(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && l.weights.ncols() != self.layers[i - 1].weights.nrows() {
                return Err(AbeError::Model(format!("layer {i}: input width mismatch")));
            }
            let expect = if i + 1 == n { Activation::Linear } else { Activation::Relu };
            if l.activation != expect {
                return Err(AbeError::Model(format!("layer {i}: unexpected activation")));
            }
            if let Some(bn) = &l.norm {
                let m = l.weights.nrows();
                if [bn.gamma.len(), bn.beta.len(), bn.running_mean.len(), bn.running_var.len()] != [m; 4] {
                    return Err(AbeError::Model(format!("layer {i}: batch-norm size mismatch")));
                }
            }
        }
        Ok(())
    }

    /// Inference forward pass on columns of `x` (running BN statistics).
    pub fn predict(&self, x: &Mat) -> Mat {
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = &l.weights * &a;
            add_bias(&mut z, &l.bias);
            if let Some(bn) = &l.norm {
                for i in 0..z.nrows() {
                    let s = bn.gamma[i] / (bn.running_var[i] + BN_EPS).sqrt();
                    for v in z.row_mut(i).iter_mut() {
                        *v = s * (*v - bn.running_mean[i]) + bn.beta[i];
                    }
                }
            }
            if l.activation == Activation::Relu {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    fn forward_train(&self, x: &Mat) -> (Mat, Vec<Cache>, Vec<(Vec<f64>, Vec<f64>)>) {
        let mut a = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::new();
        let b = x.ncols() as f64;
        for l in &self.layers {
            let mut z = &l.weights * &a;
            add_bias(&mut z, &l.bias);
            let mut xhat = None;
            let mut inv_std = Vec::new();
            if let Some(bn) = &l.norm {
                let mut xh = z.clone();
                let mut means = Vec::with_capacity(z.nrows());
                let mut vars = Vec::with_capacity(z.nrows());
                for i in 0..z.nrows() {
                    let row = z.row(i);
                    let mean = row.sum() / b;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b;
                    let is = 1.0 / (var + BN_EPS).sqrt();
                    for (dst, v) in xh.row_mut(i).iter_mut().zip(row.iter()) {
                        *dst = (v - mean) * is;
                    }
                    for (dst, v) in z.row_mut(i).iter_mut().zip(xh.row(i).iter()) {
                        *dst = bn.gamma[i] * v + bn.beta[i];
                    }
                    inv_std.push(is);
                    means.push(mean);
                    vars.push(var);
                }
                stats.push((means, vars));
                xhat = Some(xh);
            }
            let pre = z.clone();
            if l.activation == Activation::Relu {
                z.apply(|v| *v = v.max(0.0));
            }
            caches.push(Cache {
                input: a,
                xhat,
                inv_std,
                pre_activation: pre,
            });
            a = z;
        }
        (a, caches, stats)
    }

    /// Training-mode loss `mean((f(x) - y)²) + l2/2 * sum ‖W‖²` and its
    /// gradient, with batch statistics in the normalization layers.
    pub fn loss_and_grads(&self, x: &Mat, y: &Mat, l2: f64) -> (f64, Grads) {
        let (out, caches, _) = self.forward_train(x);
        let (data_loss, grads) = self.backward(&out, &caches, y, l2);
        (data_loss + self.l2_penalty(l2), grads)
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        0.5 * l2 * self.layers.iter().map(|l| l.weights.norm_squared()).sum::<f64>()
    }

    fn backward(&self, out: &Mat, caches: &[Cache], y: &Mat, l2: f64) -> (f64, Grads) {
        let count = (out.nrows() * out.ncols()) as f64;
        let diff = out - y;
        let data_loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let n = self.layers.len();
        let mut grads = Grads {
            weights: Vec::with_capacity(n),
            bias: Vec::with_capacity(n),
            gamma: Vec::with_capacity(n),
            beta: Vec::with_capacity(n),
        };
        let b = out.ncols() as f64;
        for (l, c) in self.layers.iter().zip(caches).rev() {
            if l.activation == Activation::Relu {
                delta.zip_apply(&c.pre_activation, |d, p| {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let (mut g_gamma, mut g_beta) = (Vec::new(), Vec::new());
            if let (Some(bn), Some(xh)) = (&l.norm, &c.xhat) {
                for i in 0..delta.nrows() {
                    let dy = delta.row(i).clone_owned();
                    let xr = xh.row(i);
                    let sum_dy: f64 = dy.sum();
                    let sum_dy_x: f64 = dy.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
                    g_gamma.push(sum_dy_x);
                    g_beta.push(sum_dy);
                    let k = bn.gamma[i] * c.inv_std[i] / b;
                    for ((d, &dyv), &xv) in delta.row_mut(i).iter_mut().zip(dy.iter()).zip(xr.iter()) {
                        *d = k * (b * dyv - sum_dy - xv * sum_dy_x);
                    }
                }
            }
            let mut gw = &delta * c.input.transpose();
            gw += &l.weights * l2;
            let gb: Vec<f64> = delta.row_iter().map(|r| r.sum()).collect();
            let next = l.weights.transpose() * &delta;
            grads.weights.push(gw);
            grads.bias.push(gb);
            grads.gamma.push(g_gamma);
            grads.beta.push(g_beta);
            delta = next;
        }
        grads.weights.reverse();
        grads.bias.reverse();
        grads.gamma.reverse();
        grads.beta.reverse();
        (data_loss, grads)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            // Batch normalization cancels the bias; it stays at zero.
            match &mut l.norm {
                Some(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                None => out.push(&mut l.bias),
            }
        }
        out
    }
}

impl Grads {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for i in 0..self.weights.len() {
            out.push(self.weights[i].as_slice());
            if self.gamma[i].is_empty() {
                out.push(&self.bias[i]);
            } else {
                out.push(&self.gamma[i]);
                out.push(&self.beta[i]);
            }
        }
        out
    }
}

fn add_bias(z: &mut Mat, bias: &[f64]) {
    for (i, b) in bias.iter().enumerate() {
        z.row_mut(i).add_scalar_mut(*b);
    }
}

/// AdaMax state: first moment and exponentially weighted infinity norm.
struct AdaMax {
    m: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    t: i32,
}

impl AdaMax {
    fn new(net: &mut Mlp) -> Self {
        let sizes: Vec<usize> = net.params_mut().iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            u: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &Grads, cfg: &TrainConfig) {
        self.t += 1;
        let lr = cfg.learning_rate / (1.0 - cfg.beta1.powi(self.t));
        for (k, (p, g)) in net.params_mut().into_iter().zip(grads.slices()).enumerate() {
            let (m, u) = (&mut self.m[k], &mut self.u[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                u[i] = (cfg.beta2 * u[i]).max(g[i].abs());
                p[i] -= lr * m[i] / (u[i] + ADAMAX_EPS);
            }
        }
    }
}

fn columns(data: &[Vec<f64>], idx: &[usize]) -> Mat {
    let rows = data[0].len();
    Mat::from_fn(rows, idx.len(), |r, c| data[idx[c]][r])
}

/// Minibatch training on (already normalized) inputs and targets. Returns
/// the network and the mean training loss of every epoch.
pub fn train(inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Mlp, Vec<f64>)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(AbeError::Empty("training set"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(AbeError::Config("batch size and epochs must be positive".into()));
    }
    let mut net = Mlp::new(inputs[0].len(), targets[0].len(), cfg);
    let mut opt = AdaMax::new(&mut net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            // A single sample has no batch statistics.
            if chunk.len() < 2 && net.layers.iter().any(|l| l.norm.is_some()) && seen > 0 {
                continue;
            }
            let x = columns(inputs, chunk);
            let y = columns(targets, chunk);
            let (out, caches, stats) = net.forward_train(&x);
            let (loss, grads) = net.backward(&out, &caches, &y, cfg.l2);
            if !loss.is_finite() {
                return Err(AbeError::NonFinite("training loss"));
            }
            total += loss * chunk.len() as f64;
            seen += chunk.len();
            opt.step(&mut net, &grads, cfg);
            let mut s = stats.into_iter();
            for l in net.layers.iter_mut() {
                if let Some(bn) = &mut l.norm {
                    let (means, vars) = s.next().expect("one statistics entry per normalized layer");
                    for i in 0..means.len() {
                        bn.running_mean[i] = (1.0 - BN_MOMENTUM) * bn.running_mean[i] + BN_MOMENTUM * means[i];
                        bn.running_var[i] = (1.0 - BN_MOMENTUM) * bn.running_var[i] + BN_MOMENTUM * vars[i];
                    }
                }
            }
        }
        let mean = total / seen.max(1) as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(n: usize, seed: u64, din: usize, dout: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..din).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y = x
            .iter()
            .map(|v| (0..dout).map(|j| (v[j % din] * 2.0).sin() + 0.5 * v[(j + 1) % din] * v[j % din]).collect())
            .collect();
        (x, y)
    }

    fn flat_params(net: &mut Mlp) -> Vec<(usize, usize)> {
        net.params_mut()
            .iter()
            .enumerate()
            .flat_map(|(k, p)| (0..p.len()).map(move |i| (k, i)))
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = TrainConfig {
            hidden_layers: 1,
            hidden_units: 6,
            seed: 3,
            ..Default::default()
        };
        let (x, y) = toy_data(7, 1, 3, 2);
        let idx: Vec<usize> = (0..7).collect();
        let (xm, ym) = (columns(&x, &idx), columns(&y, &idx));
        let mut net = Mlp::new(3, 2, &cfg);
        // Move off the symmetric initial point of the normalization layer.
        if let Some(bn) = &mut net.layers[0].norm {
            bn.gamma.iter_mut().enumerate().for_each(|(i, g)| *g = 0.7 + 0.1 * i as f64);
            bn.beta.iter_mut().enumerate().for_each(|(i, b)| *b = 0.05 * i as f64 - 0.1);
        }
        let l2 = 1e-3;
        let (_, grads) = net.loss_and_grads(&xm, &ym, l2);
        let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (n, (k, i)) in flat_params(&mut net).into_iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[k][i] += h;
            let mut minus = net.clone();
            minus.params_mut()[k][i] -= h;
            let numeric = (plus.loss_and_grads(&xm, &ym, l2).0 - minus.loss_and_grads(&xm, &ym, l2).0) / (2.0 * h);
            let rel = (numeric - analytic[n]).abs() / numeric.abs().max(analytic[n].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn overfits_ten_pairs() {
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_units: 64,
            epochs: 2000,
            batch_size: 10,
            l2: 0.0,
            learning_rate: 0.002,
            seed: 5,
            ..Default::default()
        };
        let (x, y) = toy_data(10, 2, 11, 22);
        let (net, history) = train(&x, &y, &cfg).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let pred = net.predict(&columns(&x, &idx));
        let mse = (pred - columns(&y, &idx)).norm_squared() / 220.0;
        assert!(mse < 1e-3, "mse {mse}, last loss {:?}", history.last());
    }

    #[test]
    fn deterministic_and_duplicate_invariant() {
        let (x, y) = toy_data(20, 4, 4, 3);
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_units: 8,
            epochs: 5,
            batch_size: 20,
            seed: 9,
            ..Default::default()
        };
        let (a, ha) = train(&x, &y, &cfg).unwrap();
        let (b, hb) = train(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);

        // Full-batch steps on the doubled set see the same mean gradients
        // and batch statistics.
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<Vec<f64>> = y.iter().chain(&y).cloned().collect();
        let (c, _) = train(&x2, &y2, &TrainConfig { batch_size: 40, ..cfg }).unwrap();
        for (la, lc) in a.layers.iter().zip(&c.layers) {
            assert!((&la.weights - &lc.weights).amax() < 1e-9);
        }
    }

    #[test]
    fn loss_decreases_on_average() {
        let (x, y) = toy_data(400, 6, 11, 22);
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_units: 32,
            epochs: 40,
            batch_size: 50,
            learning_rate: 0.005,
            seed: 1,
            ..Default::default()
        };
        let (_, h) = train(&x, &y, &cfg).unwrap();
        let increases = h.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increases as f64 <= 0.05 * h.len() as f64 + 1.0, "{h:?}");
        assert!(h.last().unwrap() < &h[0]);
    }

    #[test]
    fn layout_validation() {
        let mut net = Mlp::new(11, 22, &TrainConfig::default());
        assert_eq!(net.layers.len(), 5);
        assert_eq!((net.inputs(), net.outputs()), (11, 22));
        net.validate().unwrap();
        net.layers[4].activation = Activation::Relu;
        assert!(net.validate().is_err());
        assert!(train(&[], &[], &TrainConfig::default()).is_err());
    }
}
