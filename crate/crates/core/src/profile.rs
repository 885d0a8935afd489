//! Approximate blowup profile `Q_P(b, lambda)` and its residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::inhomogeneity::InhomogeneityProfile;
use crate::linearized::ProfileCoefficientSet;
use crate::spectral::{derivative, energy, half_wave, scaling_generator};

pub const ETA_STAR: f64 = 0.3;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub b: f64,
    pub lambda: f64,
}

impl ProfileParams {
    pub fn new(b: f64, lambda: f64) -> Self {
        Self { b, lambda }
    }

    pub fn size(&self) -> f64 {
        self.b.abs() + self.lambda
    }

    pub fn check(&self, eta_star: f64) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidArgument(format!("bad profile parameters {self:?}")));
        }
        if self.size() > eta_star {
            return Err(Error::OutOfRange(format!(
                "|b| + lambda = {} exceeds eta* = {eta_star}",
                self.size()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BlowupProfile {
    pub qp: GridFunction,
    /// `d Q_P / d b`
    pub d_b: GridFunction,
    /// `d Q_P / d lambda`
    pub d_lambda: GridFunction,
    pub params: ProfileParams,
}

impl BlowupProfile {
    pub fn real_part(&self) -> GridFunction {
        self.qp.real_part()
    }

    pub fn imag_part(&self) -> GridFunction {
        self.qp.imag_part()
    }
}

fn combine(terms: &[(Complex64, &GridFunction)]) -> GridFunction {
    let mut out = GridFunction::zeros(terms[0].1.grid());
    for (c, f) in terms {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (o, v) in out.values_mut().iter_mut().zip(f.values()) {
            *o += c * v;
        }
    }
    out
}

/// `Q + b^2 T20 + lambda^2 T02 + b^4 T40 + i (b S10 + b^3 S30)`.
pub fn assemble_profile(c: &ProfileCoefficientSet, p: ProfileParams) -> Result<BlowupProfile> {
    assemble_profile_with(c, p, ETA_STAR)
}

pub fn assemble_profile_with(c: &ProfileCoefficientSet, p: ProfileParams, eta_star: f64) -> Result<BlowupProfile> {
    p.check(eta_star)?;
    let (b, l) = (p.b, p.lambda);
    let r = |x: f64| Complex64::new(x, 0.0);
    let qp = combine(&[
        (r(1.0), &c.q),
        (r(b * b), &c.t20),
        (r(l * l), &c.t02),
        (r(b.powi(4)), &c.t40),
        (I * b, &c.s10),
        (I * b.powi(3), &c.s30),
    ]);
    let d_b = combine(&[
        (r(2.0 * b), &c.t20),
        (r(4.0 * b.powi(3)), &c.t40),
        (I, &c.s10),
        (I * (3.0 * b * b), &c.s30),
    ]);
    let d_lambda = c.t02.scale(2.0 * l);
    Ok(BlowupProfile { qp, d_b, d_lambda, params: p })
}

/// `Phi_P = -[-i b^2/2 d_b Q_P - i b lambda d_lambda Q_P - D Q_P - Q_P + i b Lambda Q_P
/// + k(lambda y)|Q_P|^2 Q_P]`.
pub fn profile_residual(
    c: &ProfileCoefficientSet,
    p: ProfileParams,
    k: &InhomogeneityProfile,
) -> Result<GridFunction> {
    let prof = assemble_profile_with(c, p, f64::INFINITY)?;
    residual_of(&prof, k)
}

pub fn residual_of(prof: &BlowupProfile, k: &InhomogeneityProfile) -> Result<GridFunction> {
    let (b, l) = (prof.params.b, prof.params.lambda);
    let qp = &prof.qp;
    let dq = half_wave(qp);
    let lam = scaling_generator(qp);
    let kl = k.rescaled(l);
    let grid = qp.grid().clone();
    let vals = (0..grid.size())
        .map(|j| {
            let x = grid.x(j);
            let v = qp.values()[j];
            let s = -I * (0.5 * b * b) * prof.d_b.values()[j] - I * (b * l) * prof.d_lambda.values()[j]
                - dq.values()[j]
                - v
                + I * b * lam.values()[j]
                + kl.k(x) * v.norm_sqr() * v;
            -s
        })
        .collect();
    GridFunction::new(&grid, vals)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub l2: f64,
    pub h1: f64,
    /// `sup <x>^2 |Phi'|`
    pub weighted_grad_sup: f64,
}

pub fn residual_norms(phi: &GridFunction) -> ResidualNorms {
    let d = derivative(phi);
    let l2 = phi.norm();
    let h1 = (phi.norm_sq() + d.norm_sq()).sqrt();
    let g = phi.grid();
    let weighted_grad_sup = d
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| (1.0 + g.x(j).powi(2)) * v.norm())
        .fold(0.0, f64::max);
    ResidualNorms { l2, h1, weighted_grad_sup }
}

/// Energy of `Q_P` with the nonlinearity weighted by `k(lambda y)`.
pub fn profile_energy(c: &ProfileCoefficientSet, p: ProfileParams, k: &InhomogeneityProfile) -> Result<f64> {
    let prof = assemble_profile_with(c, p, f64::INFINITY)?;
    Ok(energy(&prof.qp, &k.rescaled(p.lambda)))
}

/// Coefficient of `lambda^2` in the energy expansion: `-(1/8) k''(0) int y^2 Q^4`.
pub fn energy_lambda_coefficient(c: &ProfileCoefficientSet, k: &InhomogeneityProfile) -> f64 {
    let g = &c.grid;
    let kpp = k.second_derivative_at_zero();
    let s: f64 = c.q.values().iter().enumerate().map(|(j, v)| g.x(j).powi(2) * v.re.powi(4)).sum();
    -kpp * s * g.dx() / 8.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanRow {
    pub b: f64,
    pub lambda: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    pub weighted_grad_sup: f64,
    pub mass_deviation: f64,
    pub energy: f64,
}

/// Geometric ladder of `n` values from `lo` to `hi`.
pub fn geometric_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

pub fn scan(
    c: &ProfileCoefficientSet,
    k: &InhomogeneityProfile,
    bs: &[f64],
    lambda_of_b: impl Fn(f64) -> f64,
) -> Result<Vec<ScanRow>> {
    let mq = c.q.norm_sq();
    bs.iter()
        .map(|&b| {
            let p = ProfileParams::new(b, lambda_of_b(b));
            let prof = assemble_profile_with(c, p, f64::INFINITY)?;
            let n = residual_norms(&residual_of(&prof, k)?);
            Ok(ScanRow {
                b,
                lambda: p.lambda,
                phi_l2: n.l2,
                phi_h1: n.h1,
                weighted_grad_sup: n.weighted_grad_sup,
                mass_deviation: prof.qp.norm_sq() - mq,
                energy: energy(&prof.qp, &k.rescaled(p.lambda)),
            })
        })
        .collect()
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("b,lambda,phi_l2,phi_h1,weighted_grad_sup,mass_deviation,energy\n");
    for r in rows {
        s.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.b, r.lambda, r.phi_l2, r.phi_h1, r.weighted_grad_sup, r.mass_deviation, r.energy
        ));
    }
    s
}
