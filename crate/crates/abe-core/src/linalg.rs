//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{AbeError, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Eigenvalues of a real square matrix. Empty input yields an empty list.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.nrows() == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(AbeError::NonFinite("eigenvalue input"));
    }
    if let Some(schur) = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // Spectra symmetric about the origin (e.g. z² embeddings) can stall the
    // shifted QR iteration; a real diagonal shift breaks the symmetry.
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for shift in [0.1 * scale, -0.37 * scale] {
        let shifted = m + Mat::identity(m.nrows(), m.ncols()) * shift;
        if let Some(schur) = nalgebra::Schur::try_new(shifted, f64::EPSILON, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| z - shift).collect());
        }
    }
    // Companion-like blocks with zero diagonals can still stall; a random
    // orthogonal similarity gives a different Hessenberg form.
    let n = m.nrows();
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).qr().q();
        let rotated = q.transpose() * m * &q;
        if let Some(schur) = nalgebra::Schur::try_new(rotated, f64::EPSILON, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(AbeError::Numerical("Schur iteration did not converge".into()))
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn max_singular_value(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    if m.nrows() == 2 || m.ncols() == 2 {
        // Largest eigenvalue of the 2x2 Hermitian Gram matrix.
        let g = if m.ncols() == 2 { m.adjoint() * m } else { m * m.adjoint() };
        let (a, d, b) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)].norm_sqr());
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b).sqrt();
        return (mean + disc).max(0.0).sqrt();
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn max_singular_value_real(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| AbeError::Numerical("singular linear system".into()))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &Mat::identity(a.nrows(), a.nrows()))
}

/// Minimum-norm least-squares solution of `a x = b` with a relative rank
/// tolerance on the singular values.
pub fn lstsq(a: &Mat, b: &DVector<f64>, rtol: f64) -> Result<DVector<f64>> {
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (smax * rtol).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .map_err(|e| AbeError::Numerical(format!("least squares: {e}")))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_symmetric_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves the Stein equation `X = AᵀXA + Q` for stable `A` by Smith doubling.
pub fn stein(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = ak.transpose() * &x * &ak;
        let done = inc.norm() <= 1e-15 * x.norm().max(f64::MIN_POSITIVE);
        x += inc;
        if done {
            return Ok(symmetrize(&x));
        }
        ak = &ak * &ak;
        if ak.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    Err(AbeError::Numerical("Stein doubling did not converge".into()))
}

/// Upper Hessenberg form `A = Q H Qᵀ` for repeated shifted solves.
pub struct Hessenberg {
    pub q: Mat,
    pub h: Mat,
}

impl Hessenberg {
    pub fn new(a: &Mat) -> Self {
        if a.nrows() <= 2 {
            return Self {
                q: Mat::identity(a.nrows(), a.nrows()),
                h: a.clone(),
            };
        }
        let (q, h) = a.clone().hessenberg().unpack();
        Self { q, h }
    }

    /// Solves `(z I - H) X = R` for a complex shift `z` by Gaussian
    /// elimination with adjacent-row pivoting, O(n²) per column.
    pub fn shifted_solve(&self, z: Complex64, rhs: &CMat) -> Result<CMat> {
        let n = self.h.nrows();
        let p = rhs.ncols();
        // Row-major working copies.
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                m[i * n + j] = Complex64::new(-self.h[(i, j)], 0.0);
            }
            m[i * n + i] += z;
        }
        let mut r = vec![Complex64::new(0.0, 0.0); n * p];
        for i in 0..n {
            for j in 0..p {
                r[i * p + j] = rhs[(i, j)];
            }
        }
        for k in 0..n {
            if k + 1 < n && m[(k + 1) * n + k].norm_sqr() > m[k * n + k].norm_sqr() {
                for j in k..n {
                    m.swap(k * n + j, (k + 1) * n + j);
                }
                for j in 0..p {
                    r.swap(k * p + j, (k + 1) * p + j);
                }
            }
            let piv = m[k * n + k];
            if piv.norm_sqr() == 0.0 {
                return Err(AbeError::Numerical("singular shifted Hessenberg system".into()));
            }
            if k + 1 < n {
                let f = m[(k + 1) * n + k] / piv;
                if f.norm_sqr() != 0.0 {
                    let (top, bottom) = m.split_at_mut((k + 1) * n);
                    let row_k = &top[k * n..k * n + n];
                    let row_k1 = &mut bottom[..n];
                    for j in k..n {
                        row_k1[j] -= f * row_k[j];
                    }
                    for j in 0..p {
                        let v = r[k * p + j];
                        r[(k + 1) * p + j] -= f * v;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            let inv = Complex64::new(1.0, 0.0) / m[i * n + i];
            for col in 0..p {
                let mut s = r[i * p + col];
                for j in i + 1..n {
                    s -= m[i * n + j] * r[j * p + col];
                }
                r[i * p + col] = s * inv;
            }
        }
        Ok(CMat::from_row_slice(n, p, &r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubled_embedding_with_delay_state() {
        // Doubled 3-state filter plus one delay; stalls Schur with and without
        // a diagonal shift.
        let a = Mat::from_row_slice(
            3,
            3,
            &[
                2.922280e-1, 2.807041e-1, -2.289825e-1,
                2.708694e-1, 2.281440e-1, -6.943152e-2,
                -5.328041e-3, 2.623140e-1, 2.854761e-1,
            ],
        );
        let mut m = Mat::zeros(7, 7);
        m.view_mut((0, 3), (3, 3)).copy_from(&Mat::identity(3, 3));
        m.view_mut((3, 0), (3, 3)).copy_from(&a);
        m.view_mut((6, 0), (1, 3)).copy_from_slice(&[-1.011502e-1, -1.392975e-1, -2.673847e-1]);
        let eig = eigenvalues(&m).unwrap();
        assert_eq!(eig.len(), 7);
        let inner = eigenvalues(&a).unwrap();
        let mut squares: Vec<Complex64> = eig.iter().map(|z| z * z).collect();
        for target in inner.iter().chain(inner.iter()).chain(std::iter::once(&Complex64::new(0.0, 0.0))) {
            let (idx, err) = squares
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z - target).norm()))
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            assert!(err < 1e-9, "{target} missing from {eig:?}");
            squares.remove(idx);
        }
    }

    #[test]
    fn doubled_embedding_spectrum() {
        // [[0, I], [A, 0]] has eigenvalues ±sqrt(eig(A)).
        let n = 30;
        let a = Mat::from_fn(n, n, |i, j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 40.0);
        let mut big = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            big[(i, n + i)] = 1.0;
            for j in 0..n {
                big[(n + i, j)] = a[(i, j)];
            }
        }
        let small = eigenvalues(&a).unwrap();
        let doubled = eigenvalues(&big).unwrap();
        assert_eq!(doubled.len(), 2 * n);
        for l in &small {
            let r = l.sqrt();
            for root in [r, -r] {
                let d = doubled.iter().map(|z| (z - root).norm()).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-6, "{root} missing ({d})");
            }
        }
    }

    #[test]
    fn stein_matches_series() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let q = Mat::identity(2, 2);
        let x = stein(&a, &q).unwrap();
        let resid = a.transpose() * &x * &a + &q - &x;
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn hessenberg_shifted_solve_matches_dense() {
        let a = Mat::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let hs = Hessenberg::new(&a);
        let z = Complex64::new(0.3, 0.9);
        let b = CMat::from_fn(5, 2, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
        let y = hs.shifted_solve(z, &(to_complex(&hs.q.transpose()) * &b)).unwrap();
        let x = to_complex(&hs.q) * y;
        let dense = CMat::identity(5, 5) * z - to_complex(&a);
        let resid = dense * &x - &b;
        assert!(resid.norm() < 1e-10);
    }
}
