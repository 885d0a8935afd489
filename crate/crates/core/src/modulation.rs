//! Modulation decomposition `u = lambda^{-1/2} (Q_P + eps)(x/lambda) e^{i gamma}`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpectralGrid};
use crate::inhomogeneity::InhomogeneityProfile;
use crate::linearized::ProfileCoefficientSet;
use crate::profile::{BlowupProfile, ProfileParams};
use crate::resample::evaluate_uniform;
use crate::spectral::{fractional_norm_sq, half_wave, inner, scaling_generator};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum F {
    Q,
    T20,
    T02,
    T40,
    S10,
    S30,
    LQ,
    LT20,
    LT02,
    LT40,
    LS10,
    LS30,
    Rho1,
    Rho2,
}

const ALL: [F; 14] = [
    F::Q,
    F::T20,
    F::T02,
    F::T40,
    F::S10,
    F::S30,
    F::LQ,
    F::LT20,
    F::LT02,
    F::LT40,
    F::LS10,
    F::LS30,
    F::Rho1,
    F::Rho2,
];

/// Profile ingredients on the coefficient grid, with their `Lambda` images.
#[derive(Clone, Debug)]
pub struct ModulationBasis {
    grid: SpectralGrid,
    fns: Vec<GridFunction>,
    pub mass_q: f64,
    pub e1: f64,
}

impl ModulationBasis {
    pub fn new(c: &ProfileCoefficientSet) -> Self {
        let base = [&c.q, &c.t20, &c.t02, &c.t40, &c.s10, &c.s30];
        let mut fns: Vec<GridFunction> = base.iter().map(|f| (*f).clone()).collect();
        fns.extend(base.iter().map(|f| scaling_generator(f)));
        fns.push(c.rho1.clone());
        fns.push(c.rho2_hat.clone());
        Self { grid: c.grid.clone(), fns, mass_q: c.q.norm_sq(), e1: c.e1 }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Samples every ingredient at `y_j = x_j / lambda`; points beyond the
    /// coefficient domain are set to zero.
    pub fn sample(&self, xgrid: &SpectralGrid, lambda: f64) -> Result<MappedBasis> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::ScaleUnresolved(lambda));
        }
        let grid = SpectralGrid::new(xgrid.half_width() / lambda, xgrid.size())?;
        let start = grid.x(0);
        let step = grid.dx();
        let lc = self.grid.half_width();
        let fns = self
            .fns
            .par_iter()
            .map(|f| {
                let mut v = evaluate_uniform(f, start, step, grid.size());
                for (j, z) in v.iter_mut().enumerate() {
                    if grid.x(j).abs() >= lc {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
                GridFunction::new(&grid, v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MappedBasis { grid, lambda, fns })
    }
}

/// Ingredients sampled on the mapped grid `y = x / lambda`.
#[derive(Clone, Debug)]
pub struct MappedBasis {
    pub grid: SpectralGrid,
    pub lambda: f64,
    fns: Vec<GridFunction>,
}

impl MappedBasis {
    fn f(&self, which: F) -> &GridFunction {
        &self.fns[ALL.iter().position(|w| *w == which).expect("listed")]
    }

    fn combo(&self, terms: &[(Complex64, F)]) -> GridFunction {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.size()];
        for (c, w) in terms {
            for (o, v) in out.iter_mut().zip(self.f(*w).values()) {
                *o += c * v;
            }
        }
        GridFunction::new(&self.grid, out).expect("length")
    }

    pub fn profile(&self, b: f64) -> BlowupProfile {
        let l = self.lambda;
        let r = |x: f64| Complex64::new(x, 0.0);
        let qp = self.combo(&[
            (r(1.0), F::Q),
            (r(b * b), F::T20),
            (r(l * l), F::T02),
            (r(b.powi(4)), F::T40),
            (I * b, F::S10),
            (I * b.powi(3), F::S30),
        ]);
        let d_b = self.combo(&[(r(2.0 * b), F::T20), (r(4.0 * b.powi(3)), F::T40), (I, F::S10), (I * (3.0 * b * b), F::S30)]);
        let d_lambda = self.combo(&[(r(2.0 * l), F::T02)]);
        BlowupProfile { qp, d_b, d_lambda, params: ProfileParams::new(b, l) }
    }

    pub fn lambda_qp(&self, b: f64) -> GridFunction {
        let l = self.lambda;
        let r = |x: f64| Complex64::new(x, 0.0);
        self.combo(&[
            (r(1.0), F::LQ),
            (r(b * b), F::LT20),
            (r(l * l), F::LT02),
            (r(b.powi(4)), F::LT40),
            (I * b, F::LS10),
            (I * b.powi(3), F::LS30),
        ])
    }

    fn lambda_d_b(&self, b: f64) -> GridFunction {
        let r = |x: f64| Complex64::new(x, 0.0);
        self.combo(&[(r(2.0 * b), F::LT20), (r(4.0 * b.powi(3)), F::LT40), (I, F::LS10), (I * (3.0 * b * b), F::LS30)])
    }

    fn d_bb(&self, b: f64) -> GridFunction {
        let r = |x: f64| Complex64::new(x, 0.0);
        self.combo(&[(r(2.0), F::T20), (r(12.0 * b * b), F::T40), (I * (6.0 * b), F::S30)])
    }

    fn lambda_d_lambda(&self) -> GridFunction {
        self.combo(&[(Complex64::new(2.0 * self.lambda, 0.0), F::LT02)])
    }

    /// `rho1 + i b rho2_hat`.
    pub fn rho(&self, b: f64) -> GridFunction {
        self.combo(&[(Complex64::new(1.0, 0.0), F::Rho1), (I * b, F::Rho2)])
    }

    fn rho2_hat(&self) -> GridFunction {
        self.f(F::Rho2).scale_c(I)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeOptions {
    pub max_iter: usize,
    /// Newton stops once every condition is below `tol * ||Q||^2`.
    pub tol: f64,
    /// Convergence is declared below `accept * ||Q||^2`.
    pub accept: f64,
    /// Largest admissible mapped spacing `dx / lambda`.
    pub max_mapped_dx: f64,
    pub delta: f64,
    pub max_halvings: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { max_iter: 40, tol: 1e-13, accept: 1e-9, max_mapped_dx: 0.25, delta: 0.1, max_halvings: 8 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpsNorms {
    pub l2: f64,
    pub h_half: f64,
    /// `||D^{1/2+delta} eps||`
    pub d_half_delta: f64,
}

#[derive(Clone, Debug)]
pub struct ModulationState {
    pub b: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eps: GridFunction,
    pub ortho_residuals: [f64; 3],
    pub eps_norms: EpsNorms,
    pub iterations: usize,
}

impl ModulationState {
    pub fn gamma_wrapped(&self) -> f64 {
        wrap_angle(self.gamma)
    }
}

/// Angle in `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

/// `lambda^{-1/2} Q_P(x/lambda) e^{i gamma}` on `xgrid`.
pub fn synthesize(basis: &ModulationBasis, xgrid: &SpectralGrid, b: f64, lambda: f64, gamma: f64) -> Result<GridFunction> {
    let m = basis.sample(xgrid, lambda)?;
    let qp = m.profile(b).qp;
    let c = Complex64::from_polar(lambda.powf(-0.5), gamma);
    GridFunction::new(xgrid, qp.values().iter().map(|v| c * v).collect())
}

/// `e^{-i gamma} lambda^{1/2} f(lambda y)` on the mapped grid.
fn pull_back(f: &GridFunction, grid: &SpectralGrid, lambda: f64, gamma: f64) -> GridFunction {
    let c = Complex64::from_polar(lambda.sqrt(), -gamma);
    GridFunction::new(grid, f.values().iter().map(|v| c * v).collect()).expect("length")
}

fn im_inner(f: &GridFunction, g: &GridFunction) -> f64 {
    inner(f, g).expect("same grid").im
}

struct Eval {
    m: MappedBasis,
    eps_tilde: GridFunction,
    eps: GridFunction,
    tests: [GridFunction; 3],
    residual: Vector3<f64>,
}

fn evaluate(u: &GridFunction, basis: &ModulationBasis, th: [f64; 3]) -> Result<Eval> {
    let [b, lambda, gamma] = th;
    let m = basis.sample(u.grid(), lambda)?;
    let eps_tilde = pull_back(u, &m.grid, lambda, gamma);
    let prof = m.profile(b);
    let eps = &eps_tilde - &prof.qp;
    let tests = [m.lambda_qp(b), prof.d_b.clone(), m.rho(b)];
    let residual = Vector3::new(im_inner(&tests[0], &eps), im_inner(&tests[1], &eps), im_inner(&tests[2], &eps));
    Ok(Eval { m, eps_tilde, eps, tests, residual })
}

fn jacobian(e: &Eval, lu: &GridFunction, th: [f64; 3]) -> Matrix3<f64> {
    let [b, lambda, gamma] = th;
    let prof = e.m.profile(b);
    let l_eps_tilde = pull_back(lu, &e.m.grid, lambda, gamma).scale(1.0 / lambda);
    let d_eps_db = prof.d_b.scale(-1.0);
    let d_eps_dl = &l_eps_tilde - &prof.d_lambda;
    let d_eps_dg = e.eps_tilde.scale_c(-I);
    let zero = GridFunction::zeros(&e.m.grid);
    let d_tests_db = [e.m.lambda_d_b(b), e.m.d_bb(b), e.m.rho2_hat()];
    let d_tests_dl = [e.m.lambda_d_lambda(), zero.clone(), zero];
    let mut j = Matrix3::zeros();
    for i in 0..3 {
        let f = &e.tests[i];
        j[(i, 0)] = im_inner(&d_tests_db[i], &e.eps) + im_inner(f, &d_eps_db);
        j[(i, 1)] = im_inner(&d_tests_dl[i], &e.eps) + im_inner(f, &d_eps_dl);
        j[(i, 2)] = im_inner(f, &d_eps_dg);
    }
    j
}

/// Newton solve of the three orthogonality conditions for `(b, lambda, gamma)`.
pub fn decompose(
    u: &GridFunction,
    basis: &ModulationBasis,
    guess: (f64, f64, f64),
    opts: &DecomposeOptions,
) -> Result<ModulationState> {
    let xgrid = u.grid().clone();
    let lu = scaling_generator(u);
    let scale = basis.mass_q;
    let mut th = [guess.0, guess.1, guess.2];
    let check_scale = |lambda: f64| -> Result<()> {
        if !(lambda > 0.0) || xgrid.dx() / lambda > opts.max_mapped_dx {
            return Err(Error::ScaleUnresolved(lambda));
        }
        Ok(())
    };
    check_scale(th[1])?;
    let mut cur = evaluate(u, basis, th)?;
    let mut iterations = 0;
    while iterations < opts.max_iter && cur.residual.amax() > opts.tol * scale {
        iterations += 1;
        let j = jacobian(&cur, &lu, th);
        let step = match j.lu().solve(&(-cur.residual)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(Error::IllConditioned("singular modulation Jacobian".into())),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = [th[0] + t * step[0], th[1] + t * step[1], th[2] + t * step[2]];
            if trial[1] > 0.0 && xgrid.dx() / trial[1] <= opts.max_mapped_dx {
                let e = evaluate(u, basis, trial)?;
                if e.residual.amax() < cur.residual.amax() {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                th = trial;
                cur = e;
            }
            None => break,
        }
    }
    check_scale(th[1])?;
    let r = cur.residual;
    if !(r.amax() <= opts.accept * scale) {
        return Err(Error::NoConvergence { iterations, residual: r.amax() / scale });
    }
    let eps = cur.eps;
    let l2sq = eps.norm_sq();
    let eps_norms = EpsNorms {
        l2: l2sq.sqrt(),
        h_half: (l2sq + fractional_norm_sq(&eps, 0.5)).sqrt(),
        d_half_delta: fractional_norm_sq(&eps, 0.5 + opts.delta).sqrt(),
    };
    Ok(ModulationState {
        b: th[0],
        lambda: th[1],
        gamma: th[2],
        eps,
        ortho_residuals: [r[0], r[1], r[2]],
        eps_norms,
        iterations,
    })
}

/// `(rho1, b rho2_hat)`.
pub fn compute_rho(c: &ProfileCoefficientSet, b: f64) -> (GridFunction, GridFunction) {
    (c.rho1.clone(), c.rho2_hat.scale(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    #[default]
    Plus,
    Minus,
}

/// Deformed linearized operators `M+` (real part) and `M-` (imaginary part) at
/// the profile, with `k` evaluated at `lambda y`. Returns a real field.
///
/// `M-` uses the linearization of the imaginary part of `|u|^2 u`, whose cross
/// coefficient on `eps2` is `2 Q_2P^2`.
pub fn apply_m(
    eps: &GridFunction,
    profile: &BlowupProfile,
    k: &InhomogeneityProfile,
    lambda: f64,
    which: Which,
) -> Result<GridFunction> {
    eps.grid().check(profile.qp.grid())?;
    let grid = eps.grid();
    let kl = k.rescaled(lambda);
    let (e1, e2) = (eps.real_part(), eps.imag_part());
    let (main, other) = match which {
        Which::Plus => (&e1, &e2),
        Which::Minus => (&e2, &e1),
    };
    let d = half_wave(main);
    let vals = (0..grid.size())
        .map(|j| {
            let q = profile.qp.values()[j];
            let (q1, q2) = (q.re, q.im);
            let kk = kl.k(grid.x(j));
            let a = main.values()[j].re;
            let o = other.values()[j].re;
            let lin = match which {
                Which::Plus => q.norm_sqr() * a + 2.0 * q1 * q1 * a + 2.0 * q1 * q2 * o,
                Which::Minus => q.norm_sqr() * a + 2.0 * q2 * q2 * a + 2.0 * q1 * q2 * o,
            };
            Complex64::new(d.values()[j].re + a - kk * lin, 0.0)
        })
        .collect();
    GridFunction::new(grid, vals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModRecord {
    pub t: f64,
    pub s: f64,
    pub b: f64,
    pub lambda: f64,
    /// Unwrapped along the series.
    pub gamma: f64,
    pub ortho_max: f64,
    pub eps_l2: f64,
    pub eps_h_half: f64,
    pub eps_d_half_delta: f64,
    /// `b_s + b^2/2`
    pub mod_b: Option<f64>,
    /// `gamma_s - 1`
    pub mod_gamma: Option<f64>,
    /// `lambda_s/lambda + b`
    pub mod_lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModTrack {
    pub records: Vec<ModRecord>,
}

impl ModTrack {
    pub fn converged(&self) -> impl Iterator<Item = &ModRecord> {
        self.records.iter().filter(|r| r.error.is_none())
    }

    pub fn to_csv(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let mut s = String::from(
            "t,s,b,lambda,gamma,ortho_max,eps_l2,eps_h_half,eps_d_half_delta,mod_b,mod_gamma,mod_lambda,error\n",
        );
        for r in &self.records {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{}\n",
                r.t,
                r.s,
                r.b,
                r.lambda,
                r.gamma,
                r.ortho_max,
                r.eps_l2,
                r.eps_h_half,
                r.eps_d_half_delta,
                o(r.mod_b),
                o(r.mod_gamma),
                o(r.mod_lambda),
                r.error.clone().unwrap_or_default()
            ));
        }
        s
    }
}

/// Phase guess from the centre value of `u` and the profile.
fn phase_guess(u: &GridFunction, basis: &ModulationBasis, b: f64, lambda: f64) -> f64 {
    let g = u.grid();
    let j0 = g.size() / 2;
    let m = basis.sample(g, lambda).ok();
    let q0 = m.map(|m| m.profile(b).qp.values()[j0]).unwrap_or(Complex64::new(1.0, 0.0));
    u.values()[j0].arg() - q0.arg()
}

/// Nearest representative of `a + 2 pi n` to `target`.
pub fn unwrap_near(a: f64, target: f64) -> f64 {
    target + wrap_angle(a - target)
}

/// Derivative at interior points of a nonuniform series by the three-point formula.
fn three_point(s: &[f64], v: &[f64], i: usize) -> f64 {
    let (h1, h2) = (s[i] - s[i - 1], s[i + 1] - s[i]);
    (-h2 / (h1 * (h1 + h2))) * v[i - 1] + ((h2 - h1) / (h1 * h2)) * v[i] + (h1 / (h2 * (h1 + h2))) * v[i + 1]
}

/// Decomposes every snapshot with warm starts, builds `s` by trapezoid rule in
/// `dt / lambda`, and estimates `Mod` by centred differences in `s`.
pub fn track(
    snapshots: &[(f64, GridFunction)],
    basis: &ModulationBasis,
    first_guess: (f64, f64, f64),
    opts: &DecomposeOptions,
) -> ModTrack {
    let mut records: Vec<ModRecord> = Vec::with_capacity(snapshots.len());
    let mut prev: Option<(f64, f64, f64, f64)> = None; // t, b, lambda, gamma
    let mut s = 0.0;
    for (t, u) in snapshots {
        let (b, l, g) = match prev {
            None => first_guess,
            Some((tp, b, l, g)) => (b, l, g + (t - tp) / l),
        };
        let guess = (b, l, unwrap_near(phase_guess(u, basis, b, l), g));
        match decompose(u, basis, guess, opts) {
            Ok(st) => {
                if let Some((tp, _, lp, _)) = prev {
                    s += 0.5 * (t - tp) * (1.0 / lp + 1.0 / st.lambda);
                }
                let gamma = match prev {
                    Some((_, _, _, g)) => unwrap_near(st.gamma, g),
                    None => st.gamma,
                };
                prev = Some((*t, st.b, st.lambda, gamma));
                records.push(ModRecord {
                    t: *t,
                    s,
                    b: st.b,
                    lambda: st.lambda,
                    gamma,
                    ortho_max: st.ortho_residuals.iter().fold(0.0, |a, v| a.max(v.abs())),
                    eps_l2: st.eps_norms.l2,
                    eps_h_half: st.eps_norms.h_half,
                    eps_d_half_delta: st.eps_norms.d_half_delta,
                    mod_b: None,
                    mod_gamma: None,
                    mod_lambda: None,
                    error: None,
                });
            }
            Err(e) => records.push(ModRecord {
                t: *t,
                s: f64::NAN,
                b: f64::NAN,
                lambda: f64::NAN,
                gamma: f64::NAN,
                ortho_max: f64::NAN,
                eps_l2: f64::NAN,
                eps_h_half: f64::NAN,
                eps_d_half_delta: f64::NAN,
                mod_b: None,
                mod_gamma: None,
                mod_lambda: None,
                error: Some(e.to_string()),
            }),
        }
    }
    fill_mod(&mut records);
    ModTrack { records }
}

/// Fills the `Mod` columns from consecutive converged records.
pub fn fill_mod(records: &mut [ModRecord]) {
    let ok: Vec<usize> = (0..records.len()).filter(|&i| records[i].error.is_none()).collect();
    let s: Vec<f64> = ok.iter().map(|&i| records[i].s).collect();
    let b: Vec<f64> = ok.iter().map(|&i| records[i].b).collect();
    let g: Vec<f64> = ok.iter().map(|&i| records[i].gamma).collect();
    let ll: Vec<f64> = ok.iter().map(|&i| records[i].lambda.ln()).collect();
    for k in 1..ok.len().saturating_sub(1) {
        let r = &mut records[ok[k]];
        r.mod_b = Some(three_point(&s, &b, k) + 0.5 * b[k] * b[k]);
        r.mod_gamma = Some(three_point(&s, &g, k) - 1.0);
        r.mod_lambda = Some(three_point(&s, &ll, k) + b[k]);
    }
}
