use super::Frame;
use crate::poly;
use crate::{AbeError, Result};

pub const NB_LPC_ORDER: usize = 11;
/// Relative white-noise floor added to r[0] before the recursion.
pub const LPC_FLOOR: f64 = 1e-3;

/// All-pole model with `A(z) = 1 - sum(coeffs[k-1] z^-k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    pub coeffs: Vec<f64>,
    pub order: usize,
    /// RMS of the forward prediction error implied by the recursion.
    pub residual_gain: f64,
    pub degenerate: bool,
}

impl LpcModel {
    /// Identity model `A(z) = 1`.
    pub fn identity(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order],
            order,
            residual_gain: 0.0,
            degenerate: true,
        }
    }

    /// Coefficients of `A(z)` in powers of z^-1, starting with 1.
    pub fn inverse_polynomial(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.coeffs.iter().map(|a| -a)).collect()
    }
}

/// Biased autocorrelation `r[k] = (1/N) sum x[n] x[n+k]` for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                return 0.0;
            }
            x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
        })
        .collect()
}

pub fn levinson_lpc(frame: &Frame, order: usize) -> Result<LpcModel> {
    levinson_lpc_with_floor(&frame.samples, order, LPC_FLOOR)
}

/// Levinson-Durbin on the biased autocorrelation with `r[0] *= 1 + floor`.
/// If the result has a root on or outside the unit circle (only possible
/// with `floor = 0` and rounding), the roots are reflected inside.
pub fn levinson_lpc_with_floor(x: &[f64], order: usize, floor: f64) -> Result<LpcModel> {
    if order == 0 {
        return Err(AbeError::Dimension("LPC order must be at least 1".into()));
    }
    if x.len() <= order {
        return Err(AbeError::Dimension(format!(
            "frame length {} must exceed LPC order {order}",
            x.len()
        )));
    }
    let mut r = autocorrelation(x, order);
    if !(r[0] > f64::MIN_POSITIVE) {
        return Ok(LpcModel::identity(order));
    }
    r[0] *= 1.0 + floor;

    let mut a = vec![0.0; order];
    let mut err = r[0];
    let mut stable = true;
    for i in 0..order {
        let acc: f64 = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        if k.abs() >= 1.0 || !k.is_finite() {
            stable = false;
        }
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            // Perfectly predictable: remaining coefficients stay zero.
            err = 0.0;
            break;
        }
    }
    if !stable {
        let mut poly_a = vec![1.0];
        poly_a.extend(a.iter().map(|v| -v));
        let roots = poly::roots(&poly_a)?;
        let fixed = poly::stabilize_roots(&roots, 1.0 - 1e-6);
        let p = poly::from_roots(&fixed);
        a = p[1..].iter().map(|v| -v).collect();
        a.resize(order, 0.0);
    }
    Ok(LpcModel {
        coeffs: a,
        order,
        residual_gain: err.max(0.0).sqrt(),
        degenerate: false,
    })
}

/// Prediction residue `x[n] - sum a_k x[n-k]` with zero initial state.
pub fn inverse_filter(x: &[f64], lpc: &LpcModel) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let pred: f64 = lpc
                .coeffs
                .iter()
                .enumerate()
                .take_while(|(k, _)| k + 1 <= n)
                .map(|(k, a)| a * x[n - k - 1])
                .sum();
            x[n] - pred
        })
        .collect()
}
