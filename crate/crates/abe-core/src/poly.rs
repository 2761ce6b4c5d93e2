//! Polynomials in `z⁻¹`: `c[0] + c[1] z⁻¹ + … + c[n] z⁻ⁿ`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::eigenvalues;
use crate::Result;

/// Roots in the `z` plane of `Σ c[k] z⁻ᵏ`, i.e. of `Σ c[k] zⁿ⁻ᵏ`.
/// Leading and trailing zero coefficients are stripped first.
pub fn roots(c: &[f64]) -> Result<Vec<Complex64>> {
    let first = c.iter().position(|&v| v != 0.0);
    let last = c.iter().rposition(|&v| v != 0.0);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Ok(Vec::new()),
    };
    let c = &c[first..=last];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut comp = DMatrix::zeros(n, n);
    for k in 0..n {
        comp[(0, k)] = -c[k + 1] / c[0];
    }
    for k in 1..n {
        comp[(k, k - 1)] = 1.0;
    }
    eigenvalues(&comp)
}

/// Expands `Π (1 − rₖ z⁻¹)`. Conjugate pairs give real coefficients; the
/// imaginary residue is dropped.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, v) in c.iter().enumerate() {
            next[k] += v;
            next[k + 1] -= v * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

/// Largest imaginary residue of the expansion of `roots`.
pub fn expansion_imag_residue(roots: &[Complex64]) -> f64 {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, v) in c.iter().enumerate() {
            next[k] += v;
            next[k + 1] -= v * r;
        }
        c = next;
    }
    c.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
}

pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Direct-form rational filter `B(z)/A(z)` from zero initial state.
pub fn lfilter(b: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
    let a0 = a[0];
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let mut acc = 0.0;
        for (k, bk) in b.iter().enumerate() {
            if k > n {
                break;
            }
            acc += bk * x[n - k];
        }
        for (k, ak) in a.iter().enumerate().skip(1) {
            if k > n {
                break;
            }
            acc -= ak * y[n - k];
        }
        y[n] = acc / a0;
    }
    y
}

pub fn eval_z_inv(c: &[f64], omega: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -omega);
    let mut zk = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for v in c {
        acc += zk * v;
        zk *= step;
    }
    acc
}

/// Moves roots with modulus above `max_radius` inside: first radial
/// reflection `r → r/|r|²`, then clamping to `max_radius`.
pub fn stabilize_roots(roots: &[Complex64], max_radius: f64) -> Vec<Complex64> {
    roots
        .iter()
        .map(|&r| {
            let m = r.norm();
            if m <= max_radius {
                return r;
            }
            let reflected = r / (m * m);
            let mr = reflected.norm();
            if mr > max_radius {
                reflected * (max_radius / mr)
            } else {
                reflected
            }
        })
        .collect()
}
