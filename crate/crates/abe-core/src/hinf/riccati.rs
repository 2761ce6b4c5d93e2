use crate::linalg::{self, symmetrize, Mat};
use crate::{AbeError, Result};

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub x: Mat,
    pub iterations: usize,
}

/// Stabilizing solution of the discrete algebraic Riccati equation
///
/// `X = AᵀXA + Q − (BᵀXA + Sᵀ)ᵀ (R + BᵀXB)⁻¹ (BᵀXA + Sᵀ)`
///
/// by the structure-preserving doubling algorithm. `R` must be invertible
/// but may be indefinite.
pub fn dare_sda(a: &Mat, b: &Mat, q: &Mat, r: &Mat, s: &Mat) -> Result<DareSolution> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DareSolution {
            x: Mat::zeros(0, 0),
            iterations: 0,
        });
    }
    let rinv = linalg::inverse(r)?;
    let mut ak = a - b * &rinv * s.transpose();
    let mut gk = symmetrize(&(b * &rinv * b.transpose()));
    let mut hk = symmetrize(&(q - s * &rinv * s.transpose()));
    let eye = Mat::identity(n, n);
    for it in 1..=80 {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let winv_a = lu
            .solve(&ak)
            .ok_or_else(|| AbeError::Numerical("doubling step is singular".into()))?;
        let winv_g = lu
            .solve(&gk)
            .ok_or_else(|| AbeError::Numerical("doubling step is singular".into()))?;
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &winv_a));
        let g_next = symmetrize(&(&gk + &ak * &winv_g * ak.transpose()));
        let a_next = &ak * &winv_a;
        if h_next.iter().chain(a_next.iter()).any(|v| !v.is_finite()) {
            return Err(AbeError::Numerical("doubling iteration diverged".into()));
        }
        let change = (&h_next - &hk).norm();
        let scale = h_next.norm().max(f64::MIN_POSITIVE);
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if change <= 1e-14 * scale || ak.norm() <= 1e-300 {
            return Ok(DareSolution { x: hk, iterations: it });
        }
    }
    Err(AbeError::Numerical("doubling iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, s: &Mat, x: &Mat) -> f64 {
        let m = r + b.transpose() * x * b;
        let l = b.transpose() * x * a + s.transpose();
        let rhs = a.transpose() * x * a + q - l.transpose() * linalg::inverse(&m).unwrap() * l;
        (x - rhs).norm() / x.norm().max(1.0)
    }

    #[test]
    fn scalar_lqr_closed_form() {
        // x = a²x + q − a²x²b²/(r + b²x) with a = b = q = r = 1: x = golden ratio.
        let one = Mat::identity(1, 1);
        let z = Mat::zeros(1, 1);
        let sol = dare_sda(&one, &one, &one, &one, &z).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.x[(0, 0)] - phi).abs() < 1e-12);
    }

    #[test]
    fn mimo_residual_and_stability() {
        let a = Mat::from_row_slice(3, 3, &[0.9, 0.2, 0.0, -0.1, 0.8, 0.3, 0.05, 0.0, 1.1]);
        let b = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.3, 1.0]);
        let q = Mat::identity(3, 3);
        let r = Mat::identity(2, 2) * 0.5;
        let s = Mat::from_row_slice(3, 2, &[0.1, 0.0, 0.0, 0.1, 0.0, 0.0]);
        let sol = dare_sda(&a, &b, &q, &r, &s).unwrap();
        assert!(residual(&a, &b, &q, &r, &s, &sol.x) < 1e-10);
        let m = &r + b.transpose() * &sol.x * &b;
        let l = b.transpose() * &sol.x * &a + s.transpose();
        let acl = &a - &b * linalg::inverse(&m).unwrap() * l;
        assert!(linalg::spectral_radius(&acl).unwrap() < 1.0);
    }
}
