//! Scalar reconstruction filter from the lifted controller, its high-band
//! cascade and the FIR truncation used as the high-band feature.

use crate::linalg::Mat;
use crate::mrss::StateSpace;
use crate::signal::FirFilter;
use crate::{AbeError, Result};

pub const FIR_LEN: usize = 21;
/// Horizon over which the truncation energy ratio is measured.
const TAIL_HORIZON: usize = 512;

#[derive(Debug, Clone)]
pub struct SynthesisFilter {
    pub k_full: StateSpace,
    pub k_hpf: StateSpace,
    pub fir: Vec<f64>,
    /// Impulse-response energy beyond the FIR length, relative to the
    /// energy of the first 512 samples.
    pub truncation_ratio: f64,
}

/// `K(z) = [1 z^-1] K~(z²)` for a 1-input, 2-output `K~`.
///
/// `K~(z²)` is realized on the doubled state `[p; r]` with
/// `A' = [[0, I], [A, 0]]`, `B' = [0; B]`, `C' = [C, 0]`; one extra state
/// delays the second output by a sample.
pub fn assemble_synthesis_filter(ktilde: &StateSpace) -> Result<StateSpace> {
    if ktilde.inputs() != 1 || ktilde.outputs() != 2 {
        return Err(AbeError::Dimension(format!(
            "lifted filter must be 1-input 2-output, got {}x{}",
            ktilde.outputs(),
            ktilde.inputs()
        )));
    }
    let n = ktilde.states();
    let size = 2 * n + 1;
    let mut a = Mat::zeros(size, size);
    let mut b = Mat::zeros(size, 1);
    let mut c = Mat::zeros(1, size);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        b[(n + i, 0)] = ktilde.b[(i, 0)];
        for j in 0..n {
            a[(n + i, j)] = ktilde.a[(i, j)];
        }
        c[(0, i)] = ktilde.c[(0, i)];
        a[(2 * n, i)] = ktilde.c[(1, i)];
    }
    b[(2 * n, 0)] = ktilde.d[(1, 0)];
    c[(0, 2 * n)] = 1.0;
    let d = Mat::from_element(1, 1, ktilde.d[(0, 0)]);
    StateSpace::new(a, b, c, d)
}

/// Cascades `k` with the causal HPF (HPF after `k`) and truncates the
/// impulse response to `fir_len` taps.
pub fn extract_highband_filter(k: &StateSpace, hpf: &FirFilter, fir_len: usize) -> Result<SynthesisFilter> {
    if k.inputs() != 1 || k.outputs() != 1 {
        return Err(AbeError::Dimension("synthesis filter must be SISO".into()));
    }
    if fir_len == 0 {
        return Err(AbeError::Dimension("FIR length must be positive".into()));
    }
    k.ensure_stable()?;
    let k_hpf = k.then(&StateSpace::fir(&hpf.taps))?;
    let h = k_hpf.impulse_channel(0, 0, TAIL_HORIZON.max(fir_len));
    let total: f64 = h.iter().map(|v| v * v).sum();
    let tail: f64 = h[fir_len.min(h.len())..].iter().map(|v| v * v).sum();
    Ok(SynthesisFilter {
        k_full: k.clone(),
        k_hpf,
        fir: h[..fir_len].to_vec(),
        truncation_ratio: if total > 0.0 { tail / total } else { 0.0 },
    })
}
