//! Discrete-time state-space algebra: realizations, interconnections,
//! 2-fold lifting and the lifted generalized plant of the reconstruction
//! problem.

mod plant;

pub use plant::{build_generalized_plant, closed_loop, GeneralizedPlant};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{self, block_diag, hstack, vstack, CMat, Mat};
use crate::{AbeError, Result};

/// Largest state dimension any constructor will produce.
pub const STATE_CAP: usize = 200;

/// `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k] + D u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interconnect {
    /// `args[1] ∘ args[0] ∘ …`: the first argument is applied first.
    Series,
    Sum,
    Diff,
    /// SISO `z^-k`; takes no arguments.
    Delay(usize),
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(AbeError::Dimension(format!(
                "inconsistent realization: A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if n > STATE_CAP {
            return Err(AbeError::StateCap { got: n, cap: STATE_CAP });
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(AbeError::NonFinite("state-space matrices"));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn gain(d: Mat) -> Self {
        let (m, p) = d.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, p),
            c: Mat::zeros(m, 0),
            d,
        }
    }

    pub fn scalar(k: f64) -> Self {
        Self::gain(Mat::from_element(1, 1, k))
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius().map(|r| r < 1.0).unwrap_or(false)
    }

    /// SISO `z^-k` as a k-state shift register.
    pub fn delay(k: usize) -> Self {
        if k == 0 {
            return Self::scalar(1.0);
        }
        let mut a = Mat::zeros(k, k);
        for i in 1..k {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = Mat::zeros(k, 1);
        b[(0, 0)] = 1.0;
        let mut c = Mat::zeros(1, k);
        c[(0, k - 1)] = 1.0;
        Self { a, b, c, d: Mat::zeros(1, 1) }
    }

    /// SISO FIR `sum(taps[k] z^-k)` on a tapped delay line.
    pub fn fir(taps: &[f64]) -> Self {
        let taps = trim_trailing(taps);
        if taps.is_empty() {
            return Self::scalar(0.0);
        }
        let n = taps.len() - 1;
        if n == 0 {
            return Self::scalar(taps[0]);
        }
        let mut s = Self::delay(n);
        s.c = Mat::from_fn(1, n, |_, j| taps[j + 1]);
        s.d[(0, 0)] = taps[0];
        s
    }

    /// Controllable-canonical realization of `num(z^-1) / den(z^-1)`.
    pub fn from_tf(num: &[f64], den: &[f64]) -> Result<Self> {
        let den = trim_trailing(den);
        let num = trim_trailing(num);
        let a0 = *den.first().ok_or_else(|| AbeError::Improper("empty denominator".into()))?;
        if a0 == 0.0 {
            return Err(AbeError::Improper(
                "leading denominator coefficient is zero".into(),
            ));
        }
        let n = den.len().max(num.len()).saturating_sub(1);
        let coef = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0) / a0;
        let b0 = coef(num, 0);
        let mut a = Mat::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -coef(den, j + 1);
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = Mat::zeros(n, 1);
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        let c = Mat::from_fn(1, n, |_, j| coef(num, j + 1) - b0 * coef(den, j + 1));
        Self::new(a, b, c, Mat::from_element(1, 1, b0))
    }

    /// `second ∘ self`: the output of `self` drives `second`.
    pub fn then(&self, second: &StateSpace) -> Result<Self> {
        if self.outputs() != second.inputs() {
            return Err(AbeError::Dimension(format!(
                "series: {} outputs feed {} inputs",
                self.outputs(),
                second.inputs()
            )));
        }
        let (n1, n2) = (self.states(), second.states());
        let mut a = block_diag(&self.a, &second.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&second.b * &self.c));
        let b = vstack(&self.b, &(&second.b * &self.d));
        let c = hstack(&(&second.d * &self.c), &second.c);
        let d = &second.d * &self.d;
        Self::new(a, b, c, d)
    }

    /// `self + sign * other`, sharing inputs and summing outputs.
    fn parallel(&self, other: &StateSpace, sign: f64) -> Result<Self> {
        if self.inputs() != other.inputs() || self.outputs() != other.outputs() {
            return Err(AbeError::Dimension(format!(
                "parallel: {}x{} vs {}x{}",
                self.outputs(),
                self.inputs(),
                other.outputs(),
                other.inputs()
            )));
        }
        Self::new(
            block_diag(&self.a, &other.a),
            vstack(&self.b, &other.b),
            hstack(&self.c, &(&other.c * sign)),
            &self.d + &other.d * sign,
        )
    }

    pub fn sum(&self, other: &StateSpace) -> Result<Self> {
        self.parallel(other, 1.0)
    }

    pub fn diff(&self, other: &StateSpace) -> Result<Self> {
        self.parallel(other, -1.0)
    }

    /// Same input, outputs of `self` on top of those of `other`.
    pub fn stack_outputs(&self, other: &StateSpace) -> Result<Self> {
        if self.inputs() != other.inputs() {
            return Err(AbeError::Dimension("stack_outputs: input mismatch".into()));
        }
        Self::new(
            block_diag(&self.a, &other.a),
            vstack(&self.b, &other.b),
            block_diag(&self.c, &other.c),
            vstack(&self.d, &other.d),
        )
    }

    /// Block-diagonal combination: independent inputs and outputs.
    pub fn append(&self, other: &StateSpace) -> Result<Self> {
        Self::new(
            block_diag(&self.a, &other.a),
            block_diag(&self.b, &other.b),
            block_diag(&self.c, &other.c),
            block_diag(&self.d, &other.d),
        )
    }

    pub fn scale_output(&self, k: f64) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
        }
    }

    pub fn select_outputs(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&r| r >= self.outputs()) {
            return Err(AbeError::Dimension("output index out of range".into()));
        }
        Ok(Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.select_rows(rows),
            d: self.d.select_rows(rows),
        })
    }

    pub fn select_inputs(&self, cols: &[usize]) -> Result<Self> {
        if cols.iter().any(|&c| c >= self.inputs()) {
            return Err(AbeError::Dimension("input index out of range".into()));
        }
        Ok(Self {
            a: self.a.clone(),
            b: self.b.select_columns(cols),
            c: self.c.clone(),
            d: self.d.select_columns(cols),
        })
    }

    /// Realization of the transposed transfer matrix `G(z)^T`.
    pub fn transpose(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// 2-fold lifting `L2 G L2^-1`: `(A², [AB B], [C; CA], [[D 0]; [CB D]])`.
    /// Lifted signals stack the even-phase sample block over the odd one.
    pub fn lift2(&self) -> Self {
        let (m, p) = (self.outputs(), self.inputs());
        let a2 = &self.a * &self.a;
        let b = hstack(&(&self.a * &self.b), &self.b);
        let c = vstack(&self.c, &(&self.c * &self.a));
        let mut d = Mat::zeros(2 * m, 2 * p);
        d.view_mut((0, 0), (m, p)).copy_from(&self.d);
        d.view_mut((m, p), (m, p)).copy_from(&self.d);
        d.view_mut((m, 0), (m, p)).copy_from(&(&self.c * &self.b));
        Self { a: a2, b, c, d }
    }

    /// Response to `u` (one column per time step) from zero state.
    pub fn simulate(&self, u: &Mat) -> Result<Mat> {
        if u.nrows() != self.inputs() {
            return Err(AbeError::Dimension(format!(
                "simulate: input has {} rows, system has {} inputs",
                u.nrows(),
                self.inputs()
            )));
        }
        let steps = u.ncols();
        let mut y = Mat::zeros(self.outputs(), steps);
        let mut x = DVector::zeros(self.states());
        for t in 0..steps {
            let ut = u.column(t);
            y.set_column(t, &(&self.c * &x + &self.d * ut));
            x = &self.a * &x + &self.b * ut;
        }
        Ok(y)
    }

    /// SISO convenience wrapper around [`StateSpace::simulate`].
    pub fn filter(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = Mat::from_row_slice(1, x.len(), x);
        Ok(self.simulate(&u)?.row(0).iter().copied().collect())
    }

    /// Markov parameters `D, CB, CAB, …` (each `outputs × inputs`).
    pub fn impulse_response(&self, len: usize) -> Vec<Mat> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ab = self.b.clone();
        for _ in 1..len {
            out.push(&self.c * &ab);
            ab = &self.a * &ab;
        }
        out
    }

    /// Impulse response of input `input` on output `output`.
    pub fn impulse_channel(&self, output: usize, input: usize, len: usize) -> Vec<f64> {
        self.impulse_response(len).iter().map(|m| m[(output, input)]).collect()
    }

    /// `G(e^{jω}) = D + C (e^{jω} I − A)^-1 B`.
    pub fn freq_response(&self, omega: f64) -> Result<CMat> {
        let z = Complex64::from_polar(1.0, omega);
        let n = self.states();
        let d = linalg::to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let m = CMat::from_fn(n, n, |i, j| {
            let v = Complex64::new(-self.a[(i, j)], 0.0);
            if i == j {
                v + z
            } else {
                v
            }
        });
        let x = m
            .lu()
            .solve(&linalg::to_complex(&self.b))
            .ok_or_else(|| AbeError::Numerical("pole on the unit circle".into()))?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    pub fn ensure_stable(&self) -> Result<()> {
        let r = self.spectral_radius()?;
        if r >= 1.0 {
            return Err(AbeError::Unstable(r));
        }
        Ok(())
    }
}

fn trim_trailing(v: &[f64]) -> &[f64] {
    let end = v.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
    &v[..end]
}

/// Applies an interconnection to a list of systems.
pub fn interconnect(op: Interconnect, args: &[&StateSpace]) -> Result<StateSpace> {
    match op {
        Interconnect::Delay(k) => {
            if !args.is_empty() {
                return Err(AbeError::Dimension("Delay takes no systems".into()));
            }
            Ok(StateSpace::delay(k))
        }
        Interconnect::Series | Interconnect::Sum | Interconnect::Diff => {
            let (first, rest) = args
                .split_first()
                .ok_or_else(|| AbeError::Dimension("interconnect needs a system".into()))?;
            rest.iter().try_fold((*first).clone(), |acc, g| match op {
                Interconnect::Series => acc.then(g),
                Interconnect::Sum => acc.sum(g),
                _ => acc.diff(g),
            })
        }
    }
}

/// Interleaves a 2-channel lifted signal (2m × T) into m × 2T.
pub fn unlift(y: &Mat) -> Mat {
    let m = y.nrows() / 2;
    let mut out = Mat::zeros(m, 2 * y.ncols());
    for t in 0..y.ncols() {
        for i in 0..m {
            out[(i, 2 * t)] = y[(i, t)];
            out[(i, 2 * t + 1)] = y[(m + i, t)];
        }
    }
    out
}

/// Stacks even/odd phases of an m × 2T signal into 2m × T.
pub fn lift_signal(u: &Mat) -> Mat {
    let m = u.nrows();
    let t = u.ncols() / 2;
    Mat::from_fn(2 * m, t, |i, k| {
        if i < m {
            u[(i, 2 * k)]
        } else {
            u[(i - m, 2 * k + 1)]
        }
    })
}

/// `(‖g‖∞, ‖lift2(g)‖∞)`; both values should agree.
pub fn hinf_norm_equal_under_lifting(g: &StateSpace) -> Result<(f64, f64)> {
    let tol = 1e-9;
    Ok((
        crate::hinf::hinf_norm(g, tol)?,
        crate::hinf::hinf_norm(&g.lift2(), tol)?,
    ))
}
