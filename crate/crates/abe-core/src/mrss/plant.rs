use super::StateSpace;
use crate::linalg::{self, hstack, vstack, Mat};
use crate::signal::{FirFilter, LpcModel};
use crate::sysid::SignalModel;
use crate::{poly, AbeError, Result};

/// A partitioned system `[e; y] = [[P11, P12]; [P21, P22]] [w; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPlant {
    pub sys: StateSpace,
    pub n_w: usize,
    pub n_u: usize,
    pub n_e: usize,
    pub n_y: usize,
}

impl GeneralizedPlant {
    pub fn new(sys: StateSpace, n_w: usize, n_u: usize, n_e: usize, n_y: usize) -> Result<Self> {
        if sys.inputs() != n_w + n_u || sys.outputs() != n_e + n_y {
            return Err(AbeError::Dimension(format!(
                "plant is {}x{}, partition says {}x{}",
                sys.outputs(),
                sys.inputs(),
                n_e + n_y,
                n_w + n_u
            )));
        }
        Ok(Self { sys, n_w, n_u, n_e, n_y })
    }

    pub fn states(&self) -> usize {
        self.sys.states()
    }

    pub fn b1(&self) -> Mat {
        self.sys.b.columns(0, self.n_w).into_owned()
    }

    pub fn b2(&self) -> Mat {
        self.sys.b.columns(self.n_w, self.n_u).into_owned()
    }

    pub fn c1(&self) -> Mat {
        self.sys.c.rows(0, self.n_e).into_owned()
    }

    pub fn c2(&self) -> Mat {
        self.sys.c.rows(self.n_e, self.n_y).into_owned()
    }

    pub fn d11(&self) -> Mat {
        self.sys.d.view((0, 0), (self.n_e, self.n_w)).into_owned()
    }

    pub fn d12(&self) -> Mat {
        self.sys.d.view((0, self.n_w), (self.n_e, self.n_u)).into_owned()
    }

    pub fn d21(&self) -> Mat {
        self.sys.d.view((self.n_e, 0), (self.n_y, self.n_w)).into_owned()
    }

    pub fn d22(&self) -> Mat {
        self.sys.d.view((self.n_e, self.n_w), (self.n_y, self.n_u)).into_owned()
    }

    /// The open-loop map `w -> e`.
    pub fn p11(&self) -> StateSpace {
        StateSpace {
            a: self.sys.a.clone(),
            b: self.b1(),
            c: self.c1(),
            d: self.d11(),
        }
    }

    /// The map `w -> y`.
    pub fn p21(&self) -> StateSpace {
        StateSpace {
            a: self.sys.a.clone(),
            b: self.b1(),
            c: self.c2(),
            d: self.d21(),
        }
    }

    /// Copy with the exogenous paths (`B1`, `D11`, `D21`) scaled by `k`.
    pub fn scale_exogenous(&self, k: f64) -> Self {
        let mut sys = self.sys.clone();
        sys.b.columns_mut(0, self.n_w).scale_mut(k);
        sys.d.columns_mut(0, self.n_w).scale_mut(k);
        Self { sys, ..self.clone() }
    }
}

/// Lower LFT: closes `u = K y` and returns the map `w -> e`.
pub fn closed_loop(plant: &GeneralizedPlant, k: &StateSpace) -> Result<StateSpace> {
    if k.inputs() != plant.n_y || k.outputs() != plant.n_u {
        return Err(AbeError::Dimension(format!(
            "controller is {}x{}, plant expects {}x{}",
            k.outputs(),
            k.inputs(),
            plant.n_u,
            plant.n_y
        )));
    }
    let (a, b1, b2) = (&plant.sys.a, plant.b1(), plant.b2());
    let (c1, c2) = (plant.c1(), plant.c2());
    let (d11, d12, d21, d22) = (plant.d11(), plant.d12(), plant.d21(), plant.d22());
    let (ak, bk, ck, dk) = (&k.a, &k.b, &k.c, &k.d);

    // u = M (Dk C2 x + Ck xk + Dk D21 w), M = (I - Dk D22)^-1
    let nu = plant.n_u;
    let m = linalg::inverse(&(Mat::identity(nu, nu) - dk * &d22))?;
    let u_x = &m * dk * &c2;
    let u_xk = &m * ck;
    let u_w = &m * dk * &d21;
    // y = C2 x + D21 w + D22 u
    let y_x = &c2 + &d22 * &u_x;
    let y_xk = &d22 * &u_xk;
    let y_w = &d21 + &d22 * &u_w;

    let top = hstack(&(a + &b2 * &u_x), &(&b2 * &u_xk));
    let bottom = hstack(&(bk * &y_x), &(ak + bk * &y_xk));
    let acl = vstack(&top, &bottom);
    let bcl = vstack(&(&b1 + &b2 * &u_w), &(bk * &y_w));
    let ccl = hstack(&(&c1 + &d12 * &u_x), &(&d12 * &u_xk));
    let dcl = &d11 + &d12 * &u_w;
    StateSpace::new(acl, bcl, ccl, dcl)
}

/// SIMO delay line `x -> [z^-q x; H_causal x]` sharing one register.
fn delay_and_filter(taps: &[f64], q: usize) -> StateSpace {
    let n = taps.len() - 1;
    let mut a = Mat::zeros(n, n);
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = Mat::zeros(n, 1);
    if n > 0 {
        b[(0, 0)] = 1.0;
    }
    let mut c = Mat::zeros(2, n);
    let mut d = Mat::zeros(2, 1);
    if q == 0 {
        d[(0, 0)] = 1.0;
    } else {
        c[(0, q - 1)] = 1.0;
    }
    for j in 0..n {
        c[(1, j)] = taps[j + 1];
    }
    d[(1, 0)] = taps[0];
    StateSpace { a, b, c, d }
}

/// Lifted generalized plant of the reconstruction error system.
///
/// Inputs are the lifted excitation `w~` (2) and the lifted filter output
/// `u` (2); outputs are the lifted error `e~` (2) and the LPC residue `y`
/// (1). With `u = K~ y` the closed loop is
/// `e~ = z^{-q/2} F_lift w~ − K~ A S (H_causal F)_lift w~`.
pub fn build_generalized_plant(
    model: &SignalModel,
    lpf: &FirFilter,
    lpc: &LpcModel,
) -> Result<GeneralizedPlant> {
    let q = lpf.half_delay_q;
    if lpf.causal || q % 2 != 0 || lpf.taps.len() != 2 * q + 1 {
        return Err(AbeError::Dimension(format!(
            "plant needs a zero-phase LPF of length 2q+1 with q even (q = {q}, len = {})",
            lpf.taps.len()
        )));
    }
    let a_poly = lpc.inverse_polynomial();
    let worst = poly::roots(&a_poly)?.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if worst >= 1.0 {
        return Err(AbeError::Unstable(worst));
    }
    let f = model.state_space()?;
    f.ensure_stable()?;

    let lifted = f.then(&delay_and_filter(&lpf.taps, q))?.lift2();
    let y_path = lifted.select_outputs(&[1])?.then(&StateSpace::fir(&a_poly))?;
    let n = y_path.states();
    let nl = lifted.states();

    let mut c_e = Mat::zeros(2, n);
    c_e.view_mut((0, 0), (2, nl)).copy_from(&lifted.c.select_rows(&[0, 2]));
    let d_e = lifted.d.select_rows(&[0, 2]);

    let a = y_path.a.clone();
    let b = hstack(&y_path.b, &Mat::zeros(n, 2));
    let c = vstack(&c_e, &y_path.c);
    let mut d = Mat::zeros(3, 4);
    d.view_mut((0, 0), (2, 2)).copy_from(&d_e);
    d.view_mut((0, 2), (2, 2)).copy_from(&(-Mat::identity(2, 2)));
    d.view_mut((2, 0), (1, 2)).copy_from(&y_path.d);
    GeneralizedPlant::new(StateSpace::new(a, b, c, d)?, 2, 2, 2, 1)
}
