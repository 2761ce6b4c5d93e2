//! Pole-zero production models fitted to wideband frames with Prony's
//! method, and a simple voiced/unvoiced decision.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{lstsq, Mat};
use crate::mrss::StateSpace;
use crate::signal::{energy, Frame};
use crate::{poly, AbeError, Result};

/// Poles are kept at or below this radius after reflection.
pub const MAX_POLE_RADIUS: f64 = 0.995;
pub const MAX_POLES: usize = 16;
pub const MAX_ZEROS: usize = 8;

const ZCR_VOICED: f64 = 0.25;
const ENERGY_GATE: f64 = 1e-4;
const SILENCE_RMS: f64 = 1e-10;
/// Relative fit errors closer than this are treated as equal, so the
/// smaller model wins.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Excitation {
    Voiced,
    Unvoiced,
}

/// `F(z) = num(z^-1) / den(z^-1)` with `den[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub zeros: Vec<Complex64>,
    pub poles: Vec<Complex64>,
    /// Leading numerator coefficient (the RMS level for degenerate models).
    pub gain: f64,
    pub excitation: Excitation,
    pub num_poles: usize,
    pub num_zeros: usize,
    pub fit_error: f64,
    pub degenerate: bool,
}

impl SignalModel {
    fn degenerate(rms: f64) -> Self {
        Self {
            num: vec![rms],
            den: vec![1.0],
            zeros: Vec::new(),
            poles: Vec::new(),
            gain: rms,
            excitation: Excitation::Unvoiced,
            num_poles: 0,
            num_zeros: 0,
            fit_error: 0.0,
            degenerate: true,
        }
    }

    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut imp = vec![0.0; len];
        if len > 0 {
            imp[0] = 1.0;
        }
        poly::lfilter(&self.num, &self.den, &imp)
    }

    /// Realization as second-order all-pole sections followed by the FIR
    /// numerator on a delay line.
    pub fn state_space(&self) -> Result<StateSpace> {
        let mut sys = StateSpace::fir(&self.num);
        for section in pole_sections(&self.poles) {
            sys = StateSpace::from_tf(&[1.0], &section)?.then(&sys)?;
        }
        Ok(sys)
    }
}

/// Groups poles into real denominator sections of degree 1 or 2.
fn pole_sections(poles: &[Complex64]) -> Vec<Vec<f64>> {
    let mut sections = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im.abs() <= 1e-12 * p.norm().max(1.0) {
            reals.push(p.re);
        } else if p.im > 0.0 {
            sections.push(vec![1.0, -2.0 * p.re, p.norm_sqr()]);
        }
    }
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => sections.push(vec![1.0, -(r1 + r2), r1 * r2]),
            [r] => sections.push(vec![1.0, -r]),
            _ => {}
        }
    }
    sections
}

/// Voiced iff the zero-crossing rate is below 0.25 per sample and the
/// frame energy exceeds `1e-4 * reference_energy` (normally the largest
/// frame energy of the corpus).
pub fn classify_excitation(frame: &[f64], reference_energy: f64) -> Excitation {
    let e = energy(frame);
    if frame.len() < 2 || e <= 0.0 || e <= ENERGY_GATE * reference_energy {
        return Excitation::Unvoiced;
    }
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    let zcr = crossings as f64 / (frame.len() - 1) as f64;
    if zcr < ZCR_VOICED {
        Excitation::Voiced
    } else {
        Excitation::Unvoiced
    }
}

/// Result of one fixed-order Prony fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PronyFit {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub poles: Vec<Complex64>,
    pub fit_error: f64,
}

fn relative_error(x: &[f64], num: &[f64], den: &[f64], x_energy: f64) -> f64 {
    let mut imp = vec![0.0; x.len()];
    imp[0] = 1.0;
    let h = poly::lfilter(num, den, &imp);
    let err: f64 = x.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum();
    (err / x_energy).sqrt()
}

/// Numerator of length `zeros + 1` minimizing `‖x − h‖` over the whole
/// frame for a fixed denominator (Shanks' step).
fn shanks_numerator(x: &[f64], den: &[f64], zeros: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let mut imp = vec![0.0; n];
    imp[0] = 1.0;
    let g = poly::lfilter(&[1.0], den, &imp);
    let m = Mat::from_fn(n, zeros + 1, |i, j| if i >= j { g[i - j] } else { 0.0 });
    let b = lstsq(&m, &DVector::from_column_slice(x), 1e-12)?;
    Ok(b.iter().copied().collect())
}

/// Removes pole/zero pairs that cancel to within `1e-6`.
fn cancel_pairs(poles: &mut Vec<Complex64>, zeros: &mut Vec<Complex64>) {
    let mut i = 0;
    while i < poles.len() {
        let p = poles[i];
        let hit = zeros
            .iter()
            .position(|z| (z - p).norm() <= 1e-6 * p.norm().max(1.0));
        match hit {
            Some(j) => {
                poles.remove(i);
                zeros.remove(j);
            }
            None => i += 1,
        }
    }
}

/// Classical two-stage Prony fit with `poles` denominator and `zeros`
/// numerator degree, treating the frame as impulse-response data.
pub fn prony_fixed(x: &[f64], poles: usize, zeros: usize) -> Result<PronyFit> {
    let n = x.len();
    let x_energy = energy(x);
    if n <= poles + zeros + 1 || x_energy <= 0.0 {
        return Err(AbeError::Degenerate(format!(
            "cannot fit ({poles}, {zeros}) to {n} samples"
        )));
    }
    let den = if poles == 0 {
        vec![1.0]
    } else {
        let rows = n - zeros - 1;
        let m = Mat::from_fn(rows, poles, |i, k| {
            let t = i + zeros + 1;
            if t > k {
                x[t - k - 1]
            } else {
                0.0
            }
        });
        let rhs = DVector::from_fn(rows, |i, _| -x[i + zeros + 1]);
        let a = lstsq(&m, &rhs, 1e-12)?;
        let mut den = vec![1.0];
        den.extend(a.iter());
        den
    };
    let roots = poly::roots(&den)?;
    let mut stable = poly::stabilize_roots(&roots, MAX_POLE_RADIUS);
    let den = poly::from_roots(&stable);
    let mut num = shanks_numerator(x, &den, zeros)?;

    let mut num_roots = poly::roots(&num)?;
    let before = stable.len();
    cancel_pairs(&mut stable, &mut num_roots);
    let den = if stable.len() != before {
        let lead = num.iter().copied().find(|v| *v != 0.0).unwrap_or(0.0);
        let reduced = poly::from_roots(&stable);
        let delay = num.iter().position(|v| *v != 0.0).unwrap_or(0);
        num = vec![0.0; delay];
        num.extend(poly::from_roots(&num_roots).iter().map(|c| c * lead));
        reduced
    } else {
        den
    };
    let fit_error = relative_error(x, &num, &den, x_energy);
    Ok(PronyFit {
        num,
        den,
        poles: stable,
        fit_error,
    })
}

/// Searches even orders `(p, z)` in `{2..=max_poles} x {0..=max_zeros}`
/// in order of increasing `p + z`, keeping the smallest relative error.
pub fn prony_fit(frame: &Frame, max_poles: usize, max_zeros: usize) -> Result<SignalModel> {
    let x = &frame.samples;
    if max_poles < 1 {
        return Err(AbeError::Dimension("max_poles must be at least 1".into()));
    }
    if x.len() < 4 * (max_poles + max_zeros) {
        return Err(AbeError::Dimension(format!(
            "frame of {} samples too short for orders ({max_poles}, {max_zeros})",
            x.len()
        )));
    }
    let rms = (energy(x) / x.len() as f64).sqrt();
    if !(rms > SILENCE_RMS) {
        return Ok(SignalModel::degenerate(rms));
    }
    let mut grid: Vec<(usize, usize)> = (1..=max_poles / 2)
        .flat_map(|p| (0..=max_zeros / 2).map(move |z| (2 * p, 2 * z)))
        .collect();
    grid.sort_by_key(|&(p, z)| (p + z, p));

    let mut best: Option<(PronyFit, usize, usize)> = None;
    for (p, z) in grid {
        let fit = match prony_fixed(x, p, z) {
            Ok(f) if f.fit_error.is_finite() => f,
            _ => continue,
        };
        let better = best
            .as_ref()
            .is_none_or(|(b, _, _)| fit.fit_error < b.fit_error - TIE_TOL);
        if better {
            best = Some((fit, p, z));
        }
    }
    let (fit, p, z) = best.ok_or_else(|| AbeError::Numerical("no Prony order succeeded".into()))?;
    let zeros = poly::roots(&fit.num)?;
    let gain = fit.num.iter().copied().find(|v| *v != 0.0).unwrap_or(0.0);
    Ok(SignalModel {
        zeros,
        poles: fit.poles,
        gain,
        excitation: classify_excitation(x, energy(x)),
        num_poles: p,
        num_zeros: z,
        fit_error: fit.fit_error,
        degenerate: false,
        num: fit.num,
        den: fit.den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(x: Vec<f64>) -> Frame {
        Frame::from_samples(x, 16_000)
    }

    fn impulse(n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x
    }

    #[test]
    fn recovers_first_order_pole_zero() {
        let x = poly::lfilter(&[1.0, -0.3], &[1.0, -0.8], &impulse(400));
        let m = prony_fit(&frame(x), 8, 8).unwrap();
        assert!(m.fit_error < 1e-6, "{}", m.fit_error);
        assert!(m.poles.iter().any(|p| (p - 0.8).norm() < 1e-3), "{:?}", m.poles);
        assert!(m.zeros.iter().any(|z| (z - 0.3).norm() < 1e-3), "{:?}", m.zeros);
    }

    #[test]
    fn impulse_is_a_constant_gain() {
        let m = prony_fit(&frame(impulse(400)), 16, 8).unwrap();
        assert!(m.fit_error < 1e-6);
        let h = m.impulse_response(50);
        assert!((h[0] - 1.0).abs() < 1e-6);
        assert!(h[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn zero_frame_is_degenerate() {
        let m = prony_fit(&frame(vec![0.0; 400]), 16, 8).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.gain, 0.0);
    }

    #[test]
    fn short_frame_rejected() {
        assert!(prony_fit(&frame(vec![1.0; 50]), 16, 8).is_err());
    }

    #[test]
    fn voicing_decisions() {
        let mut train = vec![0.0; 400];
        for n in (0..400).step_by(160) {
            train[n] = 1.0;
        }
        let voiced = poly::lfilter(&[1.0], &[1.0, -1.8, 0.9], &train);
        assert_eq!(classify_excitation(&voiced, energy(&voiced)), Excitation::Voiced);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..400).map(|_| rng.random::<f64>() - 0.5).collect();
        assert_eq!(classify_excitation(&noise, energy(&noise)), Excitation::Unvoiced);
        assert_eq!(classify_excitation(&[0.0; 400], 1.0), Excitation::Unvoiced);
        // Energy gate relative to a much louder corpus.
        assert_eq!(classify_excitation(&voiced, 1e6 * energy(&voiced)), Excitation::Unvoiced);
    }

    #[test]
    fn state_space_matches_direct_form() {
        let x = poly::lfilter(&[0.5, 0.2, -0.1], &[1.0, -1.2, 0.8, -0.1], &impulse(400));
        let m = prony_fit(&frame(x), 8, 4).unwrap();
        let ss = m.state_space().unwrap();
        let h = ss.impulse_channel(0, 0, 200);
        let direct = m.impulse_response(200);
        for (a, b) in h.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn random_frame(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..120).map(|_| rng.random::<f64>() - 0.5).collect();
        poly::lfilter(&[1.0], &[1.0, -0.9, 0.5], &e)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn fitted_models_are_stable_and_real(seed in 0u64..1000) {
            let m = prony_fit(&frame(random_frame(seed)), 8, 4).unwrap();
            prop_assert!(m.poles.iter().all(|p| p.norm() <= 1.0 - 1e-6));
            prop_assert!(poly::expansion_imag_residue(&m.poles) < 1e-10);
            prop_assert!(m.den.iter().chain(&m.num).all(|v| v.is_finite()));
        }

        #[test]
        fn reported_error_is_grid_minimum(seed in 0u64..1000) {
            let x = random_frame(seed);
            let m = prony_fit(&frame(x.clone()), 6, 4).unwrap();
            let mut best = f64::INFINITY;
            for p in [2, 4, 6] {
                for z in [0, 2, 4] {
                    if let Ok(f) = prony_fixed(&x, p, z) {
                        best = best.min(f.fit_error);
                    }
                }
            }
            prop_assert!(m.fit_error <= best + 1e-9);
            prop_assert!(m.fit_error >= best - 1e-12);
        }
    }
}
