//! The linearized operators `L+ = D + 1 - 3Q^2`, `L- = D + 1 - Q^2` and the
//! profile corrections built from them.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::grid::{GridFunction, SpectralGrid};
use crate::inhomogeneity::InhomogeneityProfile;
use crate::krylov::minres;
use crate::spectral::{dot, scaling_generator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Plus,
    Minus,
}

/// Largest grid size for which dense matrices are assembled.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCertificates {
    /// `||L- Q|| / ||Q||`.
    pub minus: f64,
    /// `||L+ Q'|| / ||Q'||`.
    pub plus: f64,
    /// `||L+ Lambda Q + Q|| / ||Q||`.
    pub lambda_identity: f64,
}

#[derive(Clone, Debug)]
pub struct LinearizedPair {
    pub gs: GroundState,
    v_plus: Vec<f64>,
    v_minus: Vec<f64>,
    abs_xi: Vec<f64>,
    /// Unit `Q'`.
    pub kernel_plus: GridFunction,
    /// Unit `Q`.
    pub kernel_minus: GridFunction,
    pub certificates: KernelCertificates,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||L f - g_projected|| / ||g_projected||`.
    pub residual: f64,
    /// Component of the right-hand side along the unit kernel vector.
    pub kernel_component: f64,
}

fn unit(f: &GridFunction) -> GridFunction {
    f.scale(1.0 / f.norm())
}

impl LinearizedPair {
    pub fn grid(&self) -> &SpectralGrid {
        self.gs.grid()
    }

    fn potential(&self, which: Which) -> &[f64] {
        match which {
            Which::Plus => &self.v_plus,
            Which::Minus => &self.v_minus,
        }
    }

    pub fn kernel(&self, which: Which) -> &GridFunction {
        match which {
            Which::Plus => &self.kernel_plus,
            Which::Minus => &self.kernel_minus,
        }
    }

    fn apply_real(&self, which: Which, f: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let g = self.grid();
        g.forward(&mut buf);
        for (v, k) in buf.iter_mut().zip(&self.abs_xi) {
            *v *= 1.0 + k;
        }
        g.inverse(&mut buf);
        let pot = self.potential(which);
        buf.iter().zip(f).zip(pot).map(|((d, x), p)| d.re - p * x).collect()
    }

    fn precondition(&self, f: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let g = self.grid();
        g.forward(&mut buf);
        for (v, k) in buf.iter_mut().zip(&self.abs_xi) {
            *v /= 1.0 + k;
        }
        g.inverse(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    /// Applies `L+` or `L-` to a (possibly complex) field.
    pub fn apply(&self, which: Which, f: &GridFunction) -> GridFunction {
        let re = self.apply_real(which, &f.re());
        let im = self.apply_real(which, &f.im());
        GridFunction::from_parts(self.grid(), &re, &im).expect("same length")
    }

    /// Solves `L f = g` on the orthogonal complement of the kernel vector.
    pub fn solve_on_complement(&self, which: Which, rhs: &GridFunction) -> Result<(GridFunction, SolveReport)> {
        self.grid().check(rhs.grid())?;
        let scale = rhs.max_abs().max(f64::MIN_POSITIVE);
        if !rhs.is_real(1e-12 * scale) {
            return Err(Error::InvalidArgument("right-hand side must be real".into()));
        }
        let k = self.kernel(which);
        let g0 = rhs.real_part();
        let c = dot(k, &g0);
        let g = g0.axpy(-c, k);
        let b = g.re();
        let gnorm = g.norm();
        if gnorm == 0.0 {
            return Ok((GridFunction::zeros(self.grid()), SolveReport { iterations: 0, residual: 0.0, kernel_component: c }));
        }
        let kv = k.re();
        let dx = self.grid().dx();
        let project = |v: &mut Vec<f64>| {
            let s: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>() * dx;
            for (a, b) in v.iter_mut().zip(&kv) {
                *a -= s * b;
            }
        };
        let mut x = vec![0.0; b.len()];
        let mut iterations = 0;
        let mut rel = f64::INFINITY;
        for _ in 0..6 {
            let ax = self.apply_real(which, &x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            project(&mut r);
            rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() * dx.sqrt() / gnorm;
            if rel < 1e-12 {
                break;
            }
            let out = minres(|v| self.apply_real(which, v), |v| self.precondition(v), &r, 1e-13, 2000);
            iterations += out.iterations;
            for (a, d) in x.iter_mut().zip(&out.x) {
                *a += d;
            }
            project(&mut x);
        }
        let ax = self.apply_real(which, &x);
        let r: f64 = b.iter().zip(&ax).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() * dx.sqrt();
        rel = rel.min(r / gnorm).max(r / gnorm);
        if !(rel < 1e-8) {
            return Err(Error::IllConditioned(format!("relative residual {rel:.3e} after {iterations} iterations")));
        }
        let f = GridFunction::from_real(self.grid(), &x)?;
        Ok((f, SolveReport { iterations, residual: rel, kernel_component: c }))
    }

    /// Solves and returns only the solution.
    pub fn solve(&self, which: Which, rhs: &GridFunction) -> Result<GridFunction> {
        Ok(self.solve_on_complement(which, rhs)?.0)
    }

    /// Dense matrix of `L+` or `L-` (only for `N <= DENSE_LIMIT`).
    pub fn dense_matrix(&self, which: Which) -> Result<DMatrix<f64>> {
        let g = self.grid();
        let n = g.size();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!("dense assembly limited to N <= {DENSE_LIMIT}, got {n}")));
        }
        let mut col: Vec<Complex64> = self.abs_xi.iter().map(|&k| Complex64::new(k, 0.0)).collect();
        g.inverse(&mut col);
        let c: Vec<f64> = (0..n).map(|k| 0.5 * (col[k].re + col[(n - k) % n].re)).collect();
        let pot = self.potential(which);
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let d = c[(i + n - j) % n];
            if i == j {
                d + 1.0 - pot[i]
            } else {
                d
            }
        }))
    }

    /// Lowest `count` eigenpairs of the dense operator, ascending.
    pub fn lowest_spectrum(&self, which: Which, count: usize) -> Result<Vec<(f64, GridFunction)>> {
        let a = self.dense_matrix(which)?;
        let n = a.nrows();
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen(format!("symmetric eigensolver failed for N = {n}")))?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let dx = self.grid().dx();
        idx.into_iter()
            .take(count)
            .map(|i| {
                let v: Vec<f64> = eig.eigenvectors.column(i).iter().map(|x| x / dx.sqrt()).collect();
                Ok((eig.eigenvalues[i], GridFunction::from_real(self.grid(), &v)?))
            })
            .collect()
    }
}

/// Max entry of `|A - A^T|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

/// Builds the operator pair and its kernel certificates.
pub fn assemble(gs: &GroundState) -> Result<LinearizedPair> {
    let q = gs.q_real();
    let g = gs.grid().clone();
    let v_plus: Vec<f64> = q.iter().map(|v| 3.0 * v * v).collect();
    let v_minus: Vec<f64> = q.iter().map(|v| v * v).collect();
    let abs_xi: Vec<f64> = g.wavenumbers().into_iter().map(f64::abs).collect();
    let qp = gs.q_prime();
    let mut pair = LinearizedPair {
        gs: gs.clone(),
        v_plus,
        v_minus,
        abs_xi,
        kernel_plus: unit(&qp),
        kernel_minus: unit(&gs.q),
        certificates: KernelCertificates { minus: 0.0, plus: 0.0, lambda_identity: 0.0 },
    };
    let minus = pair.apply(Which::Minus, &gs.q).norm() / gs.q.norm();
    let plus = pair.apply(Which::Plus, &qp).norm() / qp.norm();
    let lambda_identity = (&pair.apply(Which::Plus, &gs.lambda_q) + &gs.q).norm() / gs.q.norm();
    pair.certificates = KernelCertificates { minus, plus, lambda_identity };
    if !(minus < 1e-6 && plus < 1e-6) {
        return Err(Error::KernelCertificate(format!(
            "||L-Q||/||Q|| = {minus:.3e}, ||L+Q'||/||Q'|| = {plus:.3e}; grid too coarse"
        )));
    }
    Ok(pair)
}

/// Right-hand side used for the order-`b^4` real correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum T40Rhs {
    /// `3/2 S30 - Lambda S30 + 3 Q T20^2 + 2 Q S10 S30 + S10^2 T20`: every
    /// real `b^4` term of the expanded nonlinearity.
    #[default]
    Complete,
    /// `3/2 S30 - Lambda S30 + 3 Q T20^2 + 2 Q S10 S30`, without the `S10^2 T20` term.
    WithoutS10SqT20,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub t40_rhs: T40Rhs,
    /// Normalized solvability residual above which the build fails.
    pub solvability_tol: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { t40_rhs: T40Rhs::Complete, solvability_tol: 1e-5 }
    }
}

/// Corrections of the blowup profile and the modulation directions.
#[derive(Clone, Debug)]
pub struct ProfileCoefficientSet {
    pub grid: SpectralGrid,
    pub q: GridFunction,
    pub lambda_q: GridFunction,
    pub s10: GridFunction,
    pub t20: GridFunction,
    pub t02: GridFunction,
    pub s30: GridFunction,
    pub t40: GridFunction,
    pub rho1: GridFunction,
    /// `rho2 = b * rho2_hat`.
    pub rho2_hat: GridFunction,
    pub e1: f64,
    pub k_second_deriv_at_0: f64,
    pub t40_rhs: T40Rhs,
    pub solvability_residuals: Vec<(String, f64)>,
    pub solve_residuals: Vec<(String, f64)>,
}

impl ProfileCoefficientSet {
    /// `|(S10,S10) + 2(Q,T20)| / (S10,S10)`.
    pub fn mass_relation_defect(&self) -> f64 {
        let ss = dot(&self.s10, &self.s10);
        (ss + 2.0 * dot(&self.q, &self.t20)).abs() / ss
    }

    /// `(Q, rho1)`.
    pub fn q_rho1(&self) -> f64 {
        dot(&self.q, &self.rho1)
    }

    pub fn mass_q(&self) -> f64 {
        self.q.norm_sq()
    }

    pub fn solvability(&self, name: &str) -> Option<f64> {
        self.solvability_residuals.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn prod(fs: &[&GridFunction]) -> GridFunction {
    let mut out = fs[0].clone();
    for f in &fs[1..] {
        out = out.mul_pointwise(f);
    }
    out
}

/// `|(Q, g)| / (||Q|| ||g||)`.
fn normalized_overlap(q: &GridFunction, g: &GridFunction) -> f64 {
    let n = g.norm();
    if n == 0.0 {
        0.0
    } else {
        dot(q, g).abs() / (q.norm() * n)
    }
}

/// Right-hand side of the `rho2_hat` equation, `2 Q S10 rho1 + Lambda rho1 - 2 T20`.
pub fn rho2_rhs(q: &GridFunction, s10: &GridFunction, rho1: &GridFunction, t20: &GridFunction) -> GridFunction {
    let a = prod(&[q, s10, rho1]).scale(2.0);
    let b = scaling_generator(rho1);
    (&a + &b).axpy(-2.0, t20)
}

/// Normalized overlap with `Q` of the variant `S10 rho1 + Lambda rho1 - 2 T20`
/// (coefficient 1 on the `S10 rho1` term).
pub fn rho2_rhs_unit_coefficient_overlap(c: &ProfileCoefficientSet) -> f64 {
    let a = prod(&[&c.s10, &c.rho1]);
    let g = (&a + &scaling_generator(&c.rho1)).axpy(-2.0, &c.t20);
    normalized_overlap(&c.q, &g)
}

/// Sequential constrained solves for `S10, T20, T02, S30, T40, rho1, rho2_hat`.
pub fn build_profile_coefficients(
    pair: &LinearizedPair,
    k: &InhomogeneityProfile,
    opts: &BuildOptions,
) -> Result<ProfileCoefficientSet> {
    let t40_rhs = opts.t40_rhs;
    let g = pair.grid().clone();
    let q = pair.gs.q.clone();
    let lq = pair.gs.lambda_q.clone();
    let kpp = k.second_derivative_at_zero();
    let mut solves = Vec::new();
    let mut solvab = Vec::new();
    let mut run = |name: &str, which: Which, rhs: &GridFunction| -> Result<GridFunction> {
        let (f, rep) = pair.solve_on_complement(which, rhs)?;
        solves.push((name.to_string(), rep.residual));
        Ok(f)
    };

    let s10 = run("S10", Which::Minus, &lq)?;
    let rhs_t20 = &(&s10.scale(0.5) - &scaling_generator(&s10)) + &prod(&[&s10, &s10, &q]);
    let t20 = run("T20", Which::Plus, &rhs_t20)?;

    let rhs_t02 = q.map_x(|x, v| v * v * v * (0.5 * kpp * x * x));
    solvab.push(("r1".to_string(), normalized_overlap(&pair.kernel_plus, &rhs_t02)));
    let t02 = run("T02", Which::Plus, &rhs_t02)?;

    let rhs_s30 = &(&(&scaling_generator(&t20) - &t20) + &prod(&[&q, &t20, &s10]).scale(2.0))
        + &prod(&[&s10, &s10, &s10]);
    solvab.push(("r2".to_string(), normalized_overlap(&q, &rhs_s30)));
    let s30 = run("S30", Which::Minus, &rhs_s30)?;

    let mut rhs_t40 = &(&s30.scale(1.5) - &scaling_generator(&s30))
        + &(&prod(&[&q, &t20, &t20]).scale(3.0) + &prod(&[&q, &s10, &s30]).scale(2.0));
    if t40_rhs == T40Rhs::Complete {
        rhs_t40 = &rhs_t40 + &prod(&[&s10, &s10, &t20]);
    }
    let t40 = run("T40", Which::Plus, &rhs_t40)?;

    let rho1 = run("rho1", Which::Plus, &s10)?;
    let rhs_rho2 = rho2_rhs(&q, &s10, &rho1, &t20);
    solvab.push(("r3".to_string(), normalized_overlap(&q, &rhs_rho2)));
    let rho2_hat = run("rho2_hat", Which::Minus, &rhs_rho2)?;

    for (name, v) in &solvab {
        if !(*v < opts.solvability_tol) {
            return Err(Error::SolvabilityViolated { name: name.clone(), value: *v });
        }
    }
    let e1 = 0.5 * dot(&lq, &s10);
    if !(e1 > 0.0) {
        return Err(Error::InvalidArgument(format!("e1 = {e1} is not positive")));
    }
    Ok(ProfileCoefficientSet {
        grid: g,
        q,
        lambda_q: lq,
        s10,
        t20,
        t02,
        s30,
        t40,
        rho1,
        rho2_hat,
        e1,
        k_second_deriv_at_0: kpp,
        t40_rhs,
        solvability_residuals: solvab,
        solve_residuals: solves,
    })
}
