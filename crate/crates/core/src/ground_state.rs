//! The ground state `Q > 0` of `DQ + Q = Q^3`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpectralGrid};
use crate::spectral::{apply_symbol, dot, half_wave, halfnorm_sq, scaling_generator};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: String,
    pub iterations: usize,
    /// Ratio of the last two residuals.
    pub contraction: f64,
    pub final_residual: f64,
}

/// Certified ground state on a grid.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub q: GridFunction,
    /// `sup |DQ + Q - Q^3|`.
    pub residual_norm: f64,
    /// `||Q||^2`.
    pub mass: f64,
    pub lambda_q: GridFunction,
    pub report: SolverReport,
}

#[derive(Clone, Debug)]
pub struct PetviashviliConfig {
    pub initial: Option<GridFunction>,
    pub gamma: f64,
    pub max_iter: usize,
    /// Certificate tolerance on the sup residual.
    pub tol: f64,
    /// Iteration stops once the residual falls below this.
    pub target: f64,
}

impl Default for PetviashviliConfig {
    fn default() -> Self {
        Self { initial: None, gamma: 1.5, max_iter: 2000, tol: 1e-9, target: 1e-13 }
    }
}

#[derive(Clone, Debug)]
pub struct GradientFlowConfig {
    pub initial: Option<GridFunction>,
    pub step: f64,
    /// Mass held fixed along the flow; defaults to that of the initial guess.
    pub target_mass: Option<f64>,
    pub max_iter: usize,
    /// Tolerance on the relative Euler-Lagrange residual.
    pub tol: f64,
    /// Certificate tolerance on `sup |DQ + Q - Q^3|` after normalization.
    pub certify_tol: f64,
}

impl Default for GradientFlowConfig {
    fn default() -> Self {
        Self { initial: None, step: 0.8, target_mass: None, max_iter: 20000, tol: 1e-12, certify_tol: 1e-9 }
    }
}

/// The default guess `2/(1+x^2)`.
pub fn default_guess(grid: &SpectralGrid) -> GridFunction {
    GridFunction::from_real_fn(grid, |x| 2.0 / (1.0 + x * x))
}

/// `DQ + Q - Q^3` for real `Q`.
pub fn residual_field(q: &GridFunction) -> GridFunction {
    let dq = half_wave(q);
    dq.zip_map(q, |d, v| d + v - v * v * v)
}

pub fn residual_sup(q: &GridFunction) -> f64 {
    residual_field(q).max_abs()
}

fn symmetrize_real(f: &GridFunction) -> GridFunction {
    f.real_part().even_part()
}

impl GroundState {
    /// Evaluates the certificate quantities for a candidate and checks the invariants.
    pub fn certify(q: GridFunction, tol: f64, report: SolverReport) -> Result<Self> {
        if let Some(j) = q.values().iter().position(|v| !(v.re > 0.0)) {
            return Err(Error::LostPositivity(j));
        }
        let residual_norm = residual_sup(&q);
        if !(residual_norm < tol) {
            return Err(Error::NoConvergence { iterations: report.iterations, residual: residual_norm });
        }
        let mass = q.norm_sq();
        let lambda_q = scaling_generator(&q);
        Ok(Self { q, residual_norm, mass, lambda_q, report })
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.q.grid()
    }

    /// `|(Q,DQ)/2 - (1/4) int Q^4|` relative to `(Q, DQ)`.
    pub fn pohozaev_defect(&self) -> f64 {
        let h = halfnorm_sq(&self.q);
        let q4: f64 = self.q.values().iter().map(|v| v.re.powi(4)).sum::<f64>() * self.grid().dx();
        (0.5 * h - 0.25 * q4).abs() / h
    }

    pub fn q_real(&self) -> Vec<f64> {
        self.q.re()
    }

    /// `Q'` by spectral differentiation.
    pub fn q_prime(&self) -> GridFunction {
        crate::spectral::derivative(&self.q)
    }
}

/// Petviashvili iteration `Q <- M^gamma (D+1)^{-1} Q^3`, `M = ((D+1)Q,Q)/(Q^3,Q)`.
pub fn solve_petviashvili(grid: &SpectralGrid, config: &PetviashviliConfig) -> Result<GroundState> {
    let mut q = match &config.initial {
        Some(g) => {
            grid.check(g.grid())?;
            symmetrize_real(g)
        }
        None => default_guess(grid),
    };
    let xi: Vec<f64> = grid.wavenumbers().into_iter().map(f64::abs).collect();
    let mut res = residual_sup(&q);
    let mut prev = f64::NAN;
    let mut best = res;
    let mut stall = 0;
    let mut it = 0;
    while it < config.max_iter && res >= config.target {
        let qh = q.spectrum();
        let cube = q.map(|v| Complex64::new(v.re.powi(3), 0.0));
        let mut ch = cube.spectrum();
        let num: f64 = qh.iter().zip(&xi).map(|(v, k)| (1.0 + k) * v.norm_sqr()).sum();
        let den: f64 = qh.iter().zip(&ch).map(|(a, b)| (a.conj() * b).re).sum();
        if !(den > 0.0) {
            return Err(Error::Diverged(format!("Petviashvili denominator {den:.3e}")));
        }
        let m = (num / den).powf(config.gamma);
        for (v, k) in ch.iter_mut().zip(&xi) {
            *v *= m / (1.0 + k);
        }
        q = symmetrize_real(&GridFunction::from_spectrum(grid, ch)?);
        it += 1;
        if let Some(j) = q.values().iter().position(|v| !(v.re > 0.0)) {
            let _ = j;
            return Err(Error::LostPositivity(it));
        }
        prev = res;
        res = residual_sup(&q);
        if res < best * 0.999 {
            best = res;
            stall = 0;
        } else {
            stall += 1;
            if stall > 25 {
                break;
            }
        }
    }
    let report = SolverReport {
        method: "petviashvili".into(),
        iterations: it,
        contraction: res / prev,
        final_residual: res,
    };
    GroundState::certify(q, config.tol, report)
}

/// Relative slack for roundoff when comparing successive quotient values.
pub const QUOTIENT_SLACK: f64 = 1e-13;

/// `log` of the Weinstein quotient `||D^{1/2}u|| ||u|| / ||u||_4^2`.
pub fn log_weinstein(u: &GridFunction) -> f64 {
    let a = halfnorm_sq(u);
    let m = u.norm_sq();
    let c: f64 = u.values().iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * u.grid().dx();
    0.5 * (a.ln() + m.ln() - c.ln())
}

fn cube(u: &GridFunction) -> GridFunction {
    u.map(|v| Complex64::new(v.re.powi(3), 0.0))
}

/// Least-squares `(mu, beta)` minimizing `||Du + mu u - beta u^3||`.
fn best_fit_coefficients(u: &GridFunction, du: &GridFunction) -> (f64, f64) {
    let u3 = cube(u);
    let (g11, g12, g22) = (dot(u, u), -dot(u, &u3), dot(&u3, &u3));
    let (r1, r2) = (-dot(u, du), dot(&u3, du));
    let det = g11 * g22 - g12 * g12;
    ((r1 * g22 - r2 * g12) / det, (g11 * r2 - g12 * r1) / det)
}

/// Moves `u` along `Du/a - u/m` until `(Du,u)/(u,u) = ratio`; the torus
/// would otherwise let the quotient decrease by spreading.
fn retract(u: &GridFunction, ratio: f64) -> GridFunction {
    let a = halfnorm_sq(u);
    let m = u.norm_sq();
    let du = half_wave(u);
    let v = du.scale(1.0 / a).axpy(-1.0 / m, u);
    let dv = half_wave(&v);
    let c0 = a - ratio * m;
    let c1 = -2.0 * (dot(&du, &v) - ratio * dot(u, &v));
    let c2 = dot(&dv, &v) - ratio * v.norm_sq();
    let s = if c2.abs() < 1e-300 {
        -c0 / c1
    } else {
        let disc = (c1 * c1 - 4.0 * c2 * c0).max(0.0).sqrt();
        let r1 = (-c1 + disc) / (2.0 * c2);
        let r2 = (-c1 - disc) / (2.0 * c2);
        if r1.abs() < r2.abs() { r1 } else { r2 }
    };
    u.axpy(-s, &v)
}

/// Descent record: one quotient value per accepted step, tagged with the round.
#[derive(Clone, Debug, Default)]
pub struct FlowHistory {
    pub rounds: Vec<Vec<f64>>,
}

impl FlowHistory {
    /// Largest relative increase between consecutive steps within a round.
    pub fn max_increase(&self) -> f64 {
        self.rounds
            .iter()
            .flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]) / w[0].abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn steps(&self) -> usize {
        self.rounds.iter().map(|r| r.len().saturating_sub(1)).sum()
    }
}

/// Preconditioned descent at fixed mass and fixed `(Du,u)/(u,u) = ratio`.
/// Returns the final and previous relative Euler-Lagrange residuals.
fn descend(
    u: &mut GridFunction,
    ratio: f64,
    target: f64,
    config: &GradientFlowConfig,
    history: &mut Vec<f64>,
    it: &mut usize,
) -> Result<(f64, f64)> {
    let dx = u.grid().dx();
    *u = retract(u, ratio);
    *u = u.scale((target / u.norm_sq()).sqrt());
    let mut w = log_weinstein(u);
    history.push(w);
    let mut tau = config.step;
    let mut res = f64::INFINITY;
    let mut prev_res = f64::NAN;
    while *it < config.max_iter {
        let a = halfnorm_sq(u);
        let m = u.norm_sq();
        let c: f64 = u.values().iter().map(|v| v.re.powi(4)).sum::<f64>() * dx;
        let du = half_wave(u);
        let grad = du.scale(1.0 / a).axpy(1.0 / m, u).axpy(-2.0 / c, &cube(u));
        // Euler-Lagrange form Du + mu u - beta u^3 with least-squares (mu, beta).
        let (mu, beta) = best_fit_coefficients(u, &du);
        let el = du.zip_map(u, |d, v| d + mu * v - beta * v * v * v);
        prev_res = res;
        res = el.max_abs() / (mu * u.max_abs());
        if res < config.tol {
            break;
        }
        let mu_p = a / m;
        // Preconditioned gradient projected (in the preconditioner metric) onto the
        // tangent space of {mass fixed, ratio fixed}.
        let prec = |f: &GridFunction| apply_symbol(f, |xi| 1.0 / (xi.abs() + mu_p));
        let v = du.scale(1.0 / a).axpy(-1.0 / m, u);
        let (pg0, pv, pu) = (prec(&grad.scale(a)), prec(&v), prec(u));
        let (m11, m12, m21, m22) = (dot(&pv, &v), dot(&pu, &v), dot(&pv, u), dot(&pu, u));
        let (r1, r2) = (dot(&pg0, &v), dot(&pg0, u));
        let det = m11 * m22 - m12 * m21;
        let c1 = (r1 * m22 - m12 * r2) / det;
        let c2 = (m11 * r2 - m21 * r1) / det;
        let pg = pg0.axpy(-c1, &pv).axpy(-c2, &pu);
        let mut accepted = false;
        for _ in 0..40 {
            let trial = retract(&u.axpy(-tau, &pg), ratio);
            let trial = trial.scale((target / trial.norm_sq()).sqrt());
            let wt = log_weinstein(&trial);
            // Decreases below roundoff of the quotient count as non-increasing.
            if wt <= w + QUOTIENT_SLACK * w.abs() {
                *u = symmetrize_real(&trial);
                w = wt;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            if res < 1e3 * config.tol {
                break;
            }
            return Err(Error::Diverged(format!("no descent step at iteration {it}, residual {res:.3e}")));
        }
        if !w.is_finite() {
            return Err(Error::Diverged(format!("quotient not finite at iteration {it}")));
        }
        history.push(w);
        tau = (tau * 1.2).min(config.step);
        *it += 1;
    }
    Ok((res, prev_res))
}

/// Independent ground-state solver: preconditioned descent on the Weinstein
/// quotient `||D^{1/2}u|| ||u|| / ||u||_4^2` at fixed mass.
///
/// The torus breaks the L2-scaling invariance of the quotient, so the descent
/// runs on the slice `(Du,u)/(u,u) = r`; `r` is then adjusted until the
/// minimizer solves `Du + u = beta u^3`, and the amplitude is normalized to `beta = 1`.
pub fn solve_gradient_flow(grid: &SpectralGrid, config: &GradientFlowConfig) -> Result<(GroundState, FlowHistory)> {
    let mut u = match &config.initial {
        Some(g) => {
            grid.check(g.grid())?;
            symmetrize_real(g)
        }
        None => default_guess(grid),
    };
    let target = config.target_mass.unwrap_or_else(|| u.norm_sq());
    let mut history = FlowHistory::default();
    let mut ratio = 1.0;
    let mut it = 0;
    let mut res = f64::INFINITY;
    let mut prev = f64::NAN;
    for _round in 0..12 {
        let mut h = Vec::new();
        (res, prev) = descend(&mut u, ratio, target, config, &mut h, &mut it)?;
        history.rounds.push(h);
        let (mu, _) = best_fit_coefficients(&u, &half_wave(&u));
        if (mu - 1.0).abs() < 1e-14 {
            break;
        }
        ratio /= mu;
    }
    if !(res < 1e3 * config.tol) {
        return Err(Error::NoConvergence { iterations: it, residual: res });
    }
    let (mu, beta) = best_fit_coefficients(&u, &half_wave(&u));
    if (mu - 1.0).abs() > 1e-10 {
        return Err(Error::NoConvergence { iterations: it, residual: (mu - 1.0).abs() });
    }
    let q = symmetrize_real(&u.scale(beta.sqrt()));
    let report = SolverReport {
        method: "weinstein_gradient_flow".into(),
        iterations: it,
        contraction: res / prev,
        final_residual: res,
    };
    Ok((GroundState::certify(q, config.certify_tol, report)?, history))
}

/// Least-squares slope of `log Q` against `log x` over `x in [L/8, L/4]`.
pub fn tail_exponent(q: &GridFunction) -> Result<f64> {
    let g = q.grid();
    let l = g.half_width();
    let mut pts = Vec::new();
    for j in 0..g.size() {
        let x = g.x(j);
        if x >= l / 8.0 && x <= l / 4.0 {
            let v = q.values()[j].re;
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("non-positive tail value at x = {x}")));
            }
            pts.push((x.ln(), v.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("tail window holds fewer than two nodes".into()));
    }
    Ok(crate::fit::linear_fit(&pts).slope)
}
