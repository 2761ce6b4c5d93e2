//! Joint-density Gaussian mixture over `[x; y]` with conditional-mean
//! regression `E[y | x]`.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::serde_mat;
use crate::linalg::Mat;
use crate::{AbeError, Result};

const KMEANS_ITERS: usize = 10;
const RIDGE: f64 = 1e-6;
const MIN_SAMPLES_PER_COMPONENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop when the per-sample log-likelihood improves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 128,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    #[serde(with = "serde_mat::vec")]
    pub covariances: Vec<Mat>,
    /// Leading dimensions that form the conditioning input.
    pub input_dim: usize,
}

fn log_gauss(chol: &Cholesky<f64, Dyn>, log_det: f64, diff: &DVector<f64>) -> f64 {
    let z = chol.l().solve_lower_triangular(diff).expect("triangular factor is nonsingular");
    -0.5 * (z.norm_squared() + log_det + diff.len() as f64 * (2.0 * PI).ln())
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn regularize(cov: &mut Mat) {
    let dim = cov.nrows();
    let reg = (RIDGE * cov.trace() / dim as f64).max(1e-12);
    for i in 0..dim {
        cov[(i, i)] += reg;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn kmeans(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            d2.iter().position(|&d| {
                r -= d;
                r <= 0.0
            })
            .unwrap_or(data.len() - 1)
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[next].clone());
        let c = centers.last().expect("just pushed");
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, c));
        }
    }
    let mut labels = vec![0; data.len()];
    for _ in 0..KMEANS_ITERS {
        for (l, x) in labels.iter_mut().zip(data) {
            *l = (0..k)
                .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                .expect("k >= 1");
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = data.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(x, _)| x).collect();
            if !members.is_empty() {
                for (i, v) in c.iter_mut().enumerate() {
                    *v = members.iter().map(|m| m[i]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
    labels
}

/// Weighted mean and covariance (ridge-regularized) from responsibilities.
fn moments(data: &[Vec<f64>], resp: &[f64]) -> (f64, Vec<f64>, Mat) {
    let dim = data[0].len();
    let nk: f64 = resp.iter().sum();
    let mut mean = vec![0.0; dim];
    for (x, r) in data.iter().zip(resp) {
        for i in 0..dim {
            mean[i] += r * x[i];
        }
    }
    mean.iter_mut().for_each(|v| *v /= nk.max(f64::MIN_POSITIVE));
    let mut cov = Mat::zeros(dim, dim);
    for (x, r) in data.iter().zip(resp) {
        if *r == 0.0 {
            continue;
        }
        let d = DVector::from_iterator(dim, x.iter().zip(&mean).map(|(a, m)| a - m));
        cov.ger(*r, &d, &d, 1.0);
    }
    cov /= nk.max(f64::MIN_POSITIVE);
    regularize(&mut cov);
    (nk, mean, cov)
}

impl Gmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn factors(&self) -> Vec<Option<(Cholesky<f64, Dyn>, f64)>> {
        self.covariances
            .iter()
            .map(|c| c.clone().cholesky().map(|ch| {
                let ld = log_det(&ch);
                (ch, ld)
            }))
            .collect()
    }

    /// Per-sample log-likelihood and responsibilities.
    fn e_step(&self, data: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let factors = self.factors();
        let mut total = 0.0;
        let resp = data
            .iter()
            .map(|x| {
                let logs: Vec<f64> = (0..self.components())
                    .map(|k| match &factors[k] {
                        Some((ch, ld)) => {
                            let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.means[k]).map(|(a, m)| a - m));
                            self.weights[k].ln() + log_gauss(ch, *ld, &diff)
                        }
                        None => f64::NEG_INFINITY,
                    })
                    .collect();
                let lse = log_sum_exp(&logs);
                total += lse;
                logs.iter().map(|l| (l - lse).exp()).collect()
            })
            .collect();
        (total / data.len() as f64, resp)
    }

    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        self.e_step(data).0
    }

    /// Conditional mean of the trailing dimensions given the leading
    /// `input_dim` ones.
    pub fn conditional_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dx = self.input_dim;
        if x.len() != dx {
            return Err(AbeError::Dimension(format!("GMM input has {} dims, expected {dx}", x.len())));
        }
        let dim = self.means.first().map_or(0, |m| m.len());
        let dy = dim - dx;
        let mut logs = Vec::with_capacity(self.components());
        let mut preds = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let cov = &self.covariances[k];
            let sxx = cov.view((0, 0), (dx, dx)).clone_owned();
            let syx = cov.view((dx, 0), (dy, dx)).clone_owned();
            let Some(ch) = sxx.cholesky() else {
                logs.push(f64::NEG_INFINITY);
                preds.push(vec![0.0; dy]);
                continue;
            };
            let diff = DVector::from_iterator(dx, x.iter().zip(&self.means[k]).map(|(a, m)| a - m));
            logs.push(self.weights[k].ln() + log_gauss(&ch, log_det(&ch), &diff));
            let shift = &syx * ch.solve(&diff);
            preds.push((0..dy).map(|i| self.means[k][dx + i] + shift[i]).collect());
        }
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return Err(AbeError::Numerical("no GMM component has support at the input".into()));
        }
        let mut out = vec![0.0; dy];
        for (l, p) in logs.iter().zip(&preds) {
            let w = (l - lse).exp();
            for i in 0..dy {
                out[i] += w * p[i];
            }
        }
        Ok(out)
    }
}

/// EM fit on joint vectors. Returns the model and the per-sample
/// log-likelihood before each M-step.
pub fn fit(data: &[Vec<f64>], input_dim: usize, cfg: &GmmConfig) -> Result<(Gmm, Vec<f64>)> {
    if cfg.components == 0 {
        return Err(AbeError::Config("GMM needs at least one component".into()));
    }
    if data.len() < MIN_SAMPLES_PER_COMPONENT * cfg.components {
        return Err(AbeError::Config(format!(
            "{} samples are too few for {} components",
            data.len(),
            cfg.components
        )));
    }
    let dim = data[0].len();
    if input_dim == 0 || input_dim >= dim {
        return Err(AbeError::Dimension(format!("input dim {input_dim} of joint dim {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = kmeans(data, cfg.components, &mut rng);
    let mut gmm = Gmm {
        weights: Vec::new(),
        means: Vec::new(),
        covariances: Vec::new(),
        input_dim,
    };
    for k in 0..cfg.components {
        let resp: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect();
        let (nk, mean, cov) = moments(data, &resp);
        if nk > 0.0 {
            gmm.weights.push(nk / data.len() as f64);
            gmm.means.push(mean);
            gmm.covariances.push(cov);
        }
    }
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let (ll, resp) = gmm.e_step(data);
        history.push(ll);
        let n = history.len();
        if n >= 2 && (history[n - 1] - history[n - 2]).abs() < cfg.tol {
            break;
        }
        let mut next = Gmm {
            weights: Vec::new(),
            means: Vec::new(),
            covariances: Vec::new(),
            input_dim,
        };
        for k in 0..gmm.components() {
            let r: Vec<f64> = resp.iter().map(|row| row[k]).collect();
            let (nk, mean, cov) = moments(data, &r);
            if nk < 1e-9 * data.len() as f64 || cov.clone().cholesky().is_none() {
                log::warn!("pruning GMM component {k} (weight {:.3e})", nk / data.len() as f64);
                continue;
            }
            next.weights.push(nk);
            next.means.push(mean);
            next.covariances.push(cov);
        }
        if next.weights.is_empty() {
            return Err(AbeError::Numerical("all GMM components collapsed".into()));
        }
        let total: f64 = next.weights.iter().sum();
        next.weights.iter_mut().for_each(|w| *w /= total);
        gmm = next;
    }
    Ok((gmm, history))
}
