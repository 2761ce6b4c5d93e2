use std::f64::consts::PI;

use super::norm::{hinf_norm_bounds, hinf_norm_with_grid, FrequencyEvaluator};
use super::riccati::dare_sda;
use crate::linalg::{self, hstack, max_singular_value, CMat, Mat};
use crate::mrss::{GeneralizedPlant, StateSpace, STATE_CAP};
use crate::{AbeError, Result};

/// Grid used for the frequency-wise lower bound on the optimal level.
const BOUND_GRID: usize = 256;
/// Seed grid for the level-set norm computations inside synthesis.
const SEED_GRID: usize = 256;
/// Relative D21 perturbation used when the unperturbed problem fails.
const D21_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HinfSolution {
    /// Controller `y -> u`.
    pub controller: StateSpace,
    /// Achieved closed-loop bound.
    pub gamma: f64,
    /// Number of Riccati solves in the level bisection.
    pub iterations: usize,
    /// True when the measurement feedthrough had to be perturbed.
    pub regularized: bool,
}

/// Controller found at one level, with its closed loop in the reduced
/// (plant-order) realization.
#[derive(Debug, Clone)]
pub struct SynthesisCandidate {
    pub gamma: f64,
    pub controller: StateSpace,
    pub reduced_loop: StateSpace,
}

/// Synthesis data for plants of the form `e = P11 w + D12 u`, `y = P21 w`
/// (`B2 = 0`, `D22 = 0`, `D12` invertible).
///
/// With `K' = D12 K` the closed loop is `P11 + K' P21`. Its transpose is a
/// disturbance-feedforward problem for the dual system
/// `(Aᵀ, [C1ᵀ C2ᵀ], B1ᵀ, [D11ᵀ D21ᵀ])`, solved through the full-information
/// Riccati equation. Writing its solution as `X0 + Y`, with `X0` the
/// Gramian solving `X0 = A X0 Aᵀ + B1 B1ᵀ`, keeps the shifted equation
/// regular even when `D21 = 0`.
#[derive(Debug, Clone)]
pub struct HinfProblem {
    ne: usize,
    ny: usize,
    a: Mat,
    b: Mat,
    c1: Mat,
    d: Mat,
    d12_true: Mat,
    x0: Mat,
    r0: Mat,
    s: Mat,
    r_shift: Mat,
    s_shift: Mat,
    d12_inv: Mat,
}

fn is_zero(m: &Mat, scale: f64) -> bool {
    m.iter().all(|v| v.abs() <= 1e-13 * scale.max(1.0))
}

impl HinfProblem {
    pub fn new(plant: &GeneralizedPlant) -> Result<Self> {
        Self::with_d21(plant, plant.d21())
    }

    fn with_d21(plant: &GeneralizedPlant, d21: Mat) -> Result<Self> {
        let scale = plant.sys.d.norm() + plant.sys.b.norm();
        if !is_zero(&plant.b2(), scale) || !is_zero(&plant.d22(), scale) {
            return Err(AbeError::UnsupportedPlant(
                "control input must enter only the error output, statically".into(),
            ));
        }
        if plant.n_u != plant.n_e {
            return Err(AbeError::UnsupportedPlant(format!(
                "D12 must be square, got {}x{}",
                plant.n_e, plant.n_u
            )));
        }
        let d12_inv = linalg::inverse(&plant.d12())
            .map_err(|_| AbeError::UnsupportedPlant("D12 is singular".into()))?;
        let (ne, ny) = (plant.n_e, plant.n_y);
        let a = plant.sys.a.transpose();
        let b = hstack(&plant.c1().transpose(), &plant.c2().transpose());
        let c1 = plant.b1().transpose();
        let d12_true = plant.d21().transpose();
        let d = hstack(&plant.d11().transpose(), &d21.transpose());
        let q = c1.transpose() * &c1;
        let x0 = linalg::stein(&a, &q)?;
        let r0 = d.transpose() * &d;
        let s = c1.transpose() * &d;
        let r_shift = &r0 + b.transpose() * &x0 * &b;
        let s_shift = &s + a.transpose() * &x0 * &b;
        Ok(Self {
            ne,
            ny,
            a,
            b,
            c1,
            d,
            d12_true,
            x0,
            r0,
            s,
            r_shift,
            s_shift,
            d12_inv,
        })
    }

    fn level(&self, gamma: f64) -> Mat {
        let k = self.ne + self.ny;
        let mut g = Mat::zeros(k, k);
        for i in 0..self.ne {
            g[(i, i)] = gamma * gamma;
        }
        g
    }

    /// Solves the Riccati equation at level `gamma`. Returns `None` when
    /// `gamma` is not achievable (or the equation cannot be solved there).
    pub fn attempt(&self, gamma: f64) -> Option<SynthesisCandidate> {
        let (ne, ny, n) = (self.ne, self.ny, self.a.nrows());
        let lvl = self.level(gamma);
        let y = dare_sda(&self.a, &self.b, &Mat::zeros(n, n), &(&self.r_shift - &lvl), &self.s_shift).ok()?;
        let x = linalg::symmetrize(&(&self.x0 + &y.x));
        let xn = x.norm().max(1.0);
        if n > 0 && linalg::min_symmetric_eigenvalue(&x) < -1e-8 * xn {
            return None;
        }
        let m = &self.r0 - &lvl + self.b.transpose() * &x * &self.b;
        let l = self.b.transpose() * &x * &self.a + self.s.transpose();
        let m_uu = m.view((ne, ne), (ny, ny)).into_owned();
        let m_uw = m.view((ne, 0), (ny, ne)).into_owned();
        let m_ww = m.view((0, 0), (ne, ne)).into_owned();
        if linalg::min_symmetric_eigenvalue(&m_uu) <= 1e-13 * m.norm() {
            return None;
        }
        let m_uu_inv = linalg::inverse(&m_uu).ok()?;
        let nabla = &m_ww - m_uw.transpose() * &m_uu_inv * &m_uw;
        if linalg::max_symmetric_eigenvalue(&nabla) >= 0.0 {
            return None;
        }
        if n > 0 {
            let m_inv = linalg::inverse(&m).ok()?;
            let a_worst = &self.a - &self.b * m_inv * &l;
            if linalg::spectral_radius(&a_worst).ok()? >= 1.0 {
                return None;
            }
        }
        let l_u = l.rows(ne, ny).into_owned();
        let f_x = -(&m_uu_inv * l_u);
        let f_w = -(&m_uu_inv * &m_uw);
        let b1 = self.b.columns(0, ne).into_owned();
        let b2 = self.b.columns(ne, ny).into_owned();
        let d11 = self.d.columns(0, ne).into_owned();
        let a_k = &self.a + &b2 * &f_x;
        if n > 0 && linalg::spectral_radius(&a_k).ok()? >= 1.0 {
            return None;
        }
        let b_k = &b1 + &b2 * &f_w;
        // Dual controller w' -> u' is (a_k, b_k, f_x, f_w); K = D12⁻¹ K'.
        let dual = StateSpace::new(a_k.clone(), b_k.clone(), f_x.clone(), f_w.clone()).ok()?;
        let kp = dual.transpose();
        let controller = StateSpace::new(kp.a, kp.b, &self.d12_inv * kp.c, &self.d12_inv * kp.d).ok()?;
        let reduced = StateSpace::new(
            a_k,
            b_k,
            &self.c1 + &self.d12_true * &f_x,
            &d11 + &self.d12_true * &f_w,
        )
        .ok()?
        .transpose();
        Some(SynthesisCandidate {
            gamma,
            controller,
            reduced_loop: reduced,
        })
    }
}

/// `max_ω σ(P11(ω) Π(ω))` with `Π` the projector onto the null space of
/// `P21(ω)`: no controller, causal or not, can do better at any frequency.
fn frequency_lower_bound(plant: &GeneralizedPlant) -> Result<f64> {
    let w_only = plant.sys.select_inputs(&(0..plant.n_w).collect::<Vec<_>>())?;
    let ev = FrequencyEvaluator::new(&w_only);
    let mut best: f64 = 0.0;
    for i in 0..BOUND_GRID {
        let om = PI * i as f64 / (BOUND_GRID - 1) as f64;
        let g = ev.response(om)?;
        let p11 = g.rows(0, plant.n_e).into_owned();
        let p21 = g.rows(plant.n_e, plant.n_y).into_owned();
        let pph = &p21 * p21.adjoint();
        let proj = match pph.clone().try_inverse() {
            Some(inv) if pph.norm() > 1e-300 => {
                CMat::identity(plant.n_w, plant.n_w) - p21.adjoint() * inv * &p21
            }
            _ => CMat::identity(plant.n_w, plant.n_w),
        };
        best = best.max(max_singular_value(&(p11 * proj)));
    }
    Ok(best)
}

fn zero_controller(plant: &GeneralizedPlant) -> StateSpace {
    StateSpace::gain(Mat::zeros(plant.n_u, plant.n_y))
}

/// Suboptimal H-infinity synthesis by bisection on the level `γ` between a
/// frequency-wise lower bound and `1.1‖P11‖∞ + 1`.
pub fn hinf_synthesize(plant: &GeneralizedPlant, rel_tol: f64) -> Result<HinfSolution> {
    if !(rel_tol > 0.0) {
        return Err(AbeError::Numerical(format!("rel_tol must be positive, got {rel_tol}")));
    }
    if plant.states() > STATE_CAP {
        return Err(AbeError::StateCap {
            got: plant.states(),
            cap: STATE_CAP,
        });
    }
    let norm_tol = (0.1 * rel_tol).min(1e-6);
    // The attained peak never exceeds the true open-loop norm.
    let (p11_norm, _) = hinf_norm_bounds(&plant.p11(), norm_tol, SEED_GRID)?;
    let trivial = HinfSolution {
        controller: zero_controller(plant),
        gamma: p11_norm,
        iterations: 0,
        regularized: false,
    };
    let scale = plant.sys.d.norm() + plant.sys.b.norm() + plant.sys.c.norm();
    let p12_zero = is_zero(&plant.d12(), scale) && is_zero(&plant.b2(), scale);
    let p21_zero = is_zero(&plant.d21(), scale) && is_zero(&plant.c2(), scale);
    if p12_zero || p21_zero || p11_norm == 0.0 {
        return Ok(trivial);
    }
    plant.p11().ensure_stable()?;

    let mut problem = HinfProblem::new(plant)?;
    let mut regularized = false;
    let mut hi = 1.1 * p11_norm + 1.0;
    let mut iterations = 1;
    let mut best = problem.attempt(hi);
    if best.is_none() {
        let p21_scale = hinf_norm_with_grid(&plant.p21(), 1e-3, SEED_GRID)?.max(f64::MIN_POSITIVE);
        let mut d21 = plant.d21();
        for i in 0..d21.nrows().min(d21.ncols()) {
            d21[(i, i)] += D21_EPS * p21_scale;
        }
        problem = HinfProblem::with_d21(plant, d21)?;
        regularized = true;
        iterations += 1;
        best = problem.attempt(hi);
        log::debug!("synthesis fell back to a perturbed D21");
    }
    let mut best = best.ok_or_else(|| {
        AbeError::Numerical(format!(
            "Riccati equation unsolvable at gamma = {hi:.6e} (||P11|| = {p11_norm:.6e})"
        ))
    })?;

    let mut lo = frequency_lower_bound(plant)?.min(hi);
    let floor = rel_tol * rel_tol * p11_norm;
    while hi - lo > rel_tol * hi && hi > floor && iterations < 200 {
        // Geometric midpoint once the lower bound is positive: the upper
        // bound starts far above the optimum.
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        iterations += 1;
        match problem.attempt(mid) {
            Some(c) => {
                hi = mid;
                best = c;
            }
            None => lo = mid,
        }
    }

    let achieved = hinf_norm_with_grid(&best.reduced_loop, norm_tol, SEED_GRID)?;
    let gamma = hi.max(achieved);
    if gamma >= p11_norm {
        return Ok(HinfSolution {
            iterations,
            ..trivial
        });
    }
    Ok(HinfSolution {
        controller: best.controller,
        gamma,
        iterations,
        regularized,
    })
}
