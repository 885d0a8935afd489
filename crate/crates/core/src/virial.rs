//! Localized virial toolbox: cutoff `phi`, resolvent smoothing `u_s`, the half-derivative
//! identity, the functional `J_A` and the localized quadratic forms.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpectralGrid};
use crate::inhomogeneity::InhomogeneityProfile;
use crate::spectral::{derivative, dot, fractional_norm_sq, halfnorm_sq};

/// Smooth even cutoff with `phi'(x) = x` on `[0, 1]`, `phi'(x) = 3 - e^{-x}` on `[2, inf)`
/// and a quintic bridge for `phi'` on `(1, 2)` matching value, slope and curvature.
#[derive(Clone, Debug)]
pub struct CutoffPhi {
    pub a: f64,
    /// `phi'(1 + t) = sum c_k t^k` on `0 < t < 1`.
    bridge: [f64; 6],
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, ck)| k as f64 * ck).collect()
}

impl CutoffPhi {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("A = {a} must be positive")));
        }
        let e = (-2.0f64).exp();
        // c0..c2 fixed by the left end; solve the 3x3 system at t = 1.
        let (c0, c1, c2) = (1.0, 1.0, 0.0);
        let m = nalgebra::Matrix3::new(1.0, 1.0, 1.0, 3.0, 4.0, 5.0, 6.0, 12.0, 20.0);
        let rhs = nalgebra::Vector3::new(3.0 - e - c0 - c1 - c2, e - c1 - 2.0 * c2, -e - 2.0 * c2);
        let sol = m.lu().solve(&rhs).ok_or_else(|| Error::IllConditioned("cutoff bridge".into()))?;
        Ok(Self { a, bridge: [c0, c1, c2, sol[0], sol[1], sol[2]] })
    }

    /// `phi` on the positive half-line; the bridge is integrated exactly.
    fn phi_pos(&self, x: f64) -> f64 {
        let bridge_int = |t: f64| {
            self.bridge.iter().enumerate().map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>()
        };
        if x <= 1.0 {
            0.5 * x * x
        } else if x < 2.0 {
            0.5 + bridge_int(x - 1.0)
        } else {
            0.5 + bridge_int(1.0) + 3.0 * (x - 2.0) + (-x).exp() - (-2.0f64).exp()
        }
    }

    /// `d^n phi / dx^n` at `x >= 0` for `n = 1..=4`.
    fn deriv_pos(&self, x: f64, n: usize) -> f64 {
        if x <= 1.0 {
            match n {
                1 => x,
                2 => 1.0,
                _ => 0.0,
            }
        } else if x < 2.0 {
            let mut c = self.bridge.to_vec();
            for _ in 1..n {
                c = poly_deriv(&c);
            }
            poly(&c, x - 1.0)
        } else {
            let e = (-x).exp();
            match n {
                1 => 3.0 - e,
                2 | 4 => e,
                _ => -e,
            }
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi_pos(x.abs())
    }

    /// `phi^(n)(x)`, `n = 1..=4`; odd orders are odd functions.
    pub fn deriv(&self, x: f64, n: usize) -> f64 {
        let v = self.deriv_pos(x.abs(), n);
        if n % 2 == 1 && x < 0.0 {
            -v
        } else {
            v
        }
    }

    pub fn laplacian(&self, x: f64) -> f64 {
        self.deriv(x, 2)
    }

    pub fn bilaplacian(&self, x: f64) -> f64 {
        self.deriv(x, 4)
    }

    /// `grad (A^2 phi(x/A)) = A phi'(x/A)`.
    pub fn grad_a(&self, x: f64) -> f64 {
        self.a * self.deriv(x / self.a, 1)
    }

    /// `Delta (A^2 phi(x/A)) = phi''(x/A)`; tends to 1 pointwise as `A -> inf`.
    pub fn lap_a(&self, x: f64) -> f64 {
        self.laplacian(x / self.a)
    }

    /// `Delta^2 (A^2 phi(x/A)) = phi''''(x/A) / A^2`.
    pub fn bilap_a(&self, x: f64) -> f64 {
        self.bilaplacian(x / self.a) / (self.a * self.a)
    }

    /// Minimum of `phi''` over `samples` points of `[0, 3]`; errors if negative.
    pub fn certify_convexity(&self, samples: usize) -> Result<f64> {
        let min = (0..=samples)
            .map(|i| self.laplacian(3.0 * i as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            return Err(Error::OutOfRange(format!("phi'' reaches {min:.3e}")));
        }
        Ok(min)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Nodes and weights for `int_0^inf sqrt(s) g(s) ds` via `s = c tan^2(theta)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventQuadrature {
    pub nodes: Vec<f64>,
    /// Include the factor `sqrt(s) ds/dtheta`.
    pub weights: Vec<f64>,
    pub scale: f64,
}

impl ResolventQuadrature {
    pub fn new(count: usize) -> Self {
        Self::with_scale(count, 1.0)
    }

    pub fn with_scale(count: usize, scale: f64) -> Self {
        let (x, w) = gauss_legendre(count);
        let h = std::f64::consts::FRAC_PI_4;
        let (nodes, weights) = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let th = h * (xi + 1.0);
                let t = th.tan();
                let s = scale * t * t;
                let ds = 2.0 * scale * t / th.cos().powi(2);
                (s, wi * h * s.sqrt() * ds)
            })
            .unzip();
        Self { nodes, weights, scale }
    }

    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// `sum_q w_q g(s_q)` with the node terms evaluated concurrently and summed in order.
    pub fn integrate(&self, g: impl Fn(f64) -> f64 + Sync) -> f64 {
        let terms: Vec<f64> = self.nodes.par_iter().zip(&self.weights).map(|(s, w)| w * g(*s)).collect();
        terms.iter().sum()
    }
}

impl Default for ResolventQuadrature {
    fn default() -> Self {
        Self::new(80)
    }
}

fn resolvent_symbol(xi: f64, s: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() / (xi * xi + s)
}

/// `u_s = sqrt(2/pi) (-Delta + s)^{-1} u`.
pub fn resolvent_smooth(u: &GridFunction, s: f64) -> Result<GridFunction> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must be positive")));
    }
    Ok(crate::spectral::apply_symbol(u, |xi| resolvent_symbol(xi, s)))
}

/// `u_s` and `grad u_s` from a precomputed spectrum.
fn smoothed_pair(grid: &SpectralGrid, spec: &[Complex64], s: f64, grad: bool) -> GridFunction {
    let mut buf: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let xi = grid.wavenumber(j);
            let m = resolvent_symbol(xi, s);
            if grad {
                if j == grid.size() / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    v * Complex64::new(0.0, xi * m)
                }
            } else {
                v * m
            }
        })
        .collect();
    grid.inverse(&mut buf);
    GridFunction::new(grid, buf).expect("length preserved")
}

/// `int_0^inf sqrt(s) int w(x) |grad u_s|^2 dx ds` (or `|u_s|^2` when `grad` is false).
pub fn weighted_smoothed_integral(
    u: &GridFunction,
    weight: impl Fn(f64) -> f64 + Sync,
    quad: &ResolventQuadrature,
    grad: bool,
) -> f64 {
    let g = u.grid();
    let w: Vec<f64> = (0..g.size()).map(|j| weight(g.x(j))).collect();
    sampled_weight_integral(u, &w, quad, grad)
}

fn sampled_weight_integral(u: &GridFunction, w: &[f64], quad: &ResolventQuadrature, grad: bool) -> f64 {
    let g = u.grid().clone();
    let spec = u.spectrum();
    quad.integrate(|s| {
        let f = smoothed_pair(&g, &spec, s, grad);
        g.dx() * f.values().iter().zip(w).map(|(v, w)| w * v.norm_sqr()).sum::<f64>()
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub relerr: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let relerr = if rhs == 0.0 { (lhs - rhs).abs() } else { ((lhs - rhs) / rhs).abs() };
        Self { lhs, rhs, relerr }
    }
}

/// `int_0^inf sqrt(s) ||grad u_s||^2 ds` against `||D^{1/2} u||^2`.
pub fn halfnorm_identity(u: &GridFunction, quad: &ResolventQuadrature) -> IdentityCheck {
    IdentityCheck::new(weighted_smoothed_integral(u, |_| 1.0, quad, true), halfnorm_sq(u))
}

/// `int_0^inf sqrt(s) ||D^alpha u_s||^2 ds` against `||D^{alpha - 1/2} u||^2`.
pub fn fractional_identity(u: &GridFunction, alpha: f64, quad: &ResolventQuadrature) -> IdentityCheck {
    let g = u.grid().clone();
    let spec = u.spectrum();
    let n = g.size() as f64;
    let lhs = quad.integrate(|s| {
        spec.iter()
            .enumerate()
            .map(|(j, v)| {
                let xi = g.wavenumber(j).abs();
                if xi == 0.0 {
                    0.0
                } else {
                    (xi.powf(alpha) * resolvent_symbol(xi, s)).powi(2) * v.norm_sqr()
                }
            })
            .sum::<f64>()
            * g.dx()
            / n
    });
    IdentityCheck::new(lhs, fractional_norm_sq(u, alpha - 0.5))
}

/// The four summands of `J_A`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JaTerms {
    /// `(1/2) ||D^{1/2} eps||^2`
    pub kinetic: f64,
    /// `(1/2) ||eps||^2 / lambda`
    pub mass: f64,
    /// `-int k [F(u) - F(Q) - F'(Q) eps]`
    pub potential: f64,
    /// `(b/2) Im int A phi'(x/(A lambda)) eps' conj(eps)`
    pub virial: f64,
    pub total: f64,
}

pub fn evaluate_ja(
    eps: &GridFunction,
    q: &GridFunction,
    b: f64,
    lambda: f64,
    k: &InhomogeneityProfile,
    phi: &CutoffPhi,
) -> Result<JaTerms> {
    eps.grid().check(q.grid())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let g = eps.grid();
    let kinetic = 0.5 * halfnorm_sq(eps);
    let mass = 0.5 * eps.norm_sq() / lambda;
    let pot: f64 = (0..g.size())
        .map(|j| {
            let (e, qv) = (eps.values()[j], q.values()[j]);
            let u = qv + e;
            let f = qv.norm_sqr() * qv;
            let diff = 0.25 * u.norm_sqr().powi(2) - 0.25 * qv.norm_sqr().powi(2) - (f * e.conj()).re;
            k.k(g.x(j)) * diff
        })
        .sum();
    let potential = -pot * g.dx();
    let virial = if b == 0.0 {
        0.0
    } else {
        let de = derivative(eps);
        let s: f64 = (0..g.size())
            .map(|j| {
                let x = g.x(j);
                let w = phi.a * phi.deriv(x / (phi.a * lambda), 1);
                w * (de.values()[j] * eps.values()[j].conj()).im
            })
            .sum();
        0.5 * b * s * g.dx()
    };
    Ok(JaTerms { kinetic, mass, potential, virial, total: kinetic + mass + potential + virial })
}

/// `int_0^inf sqrt(s) int Delta phi_A |grad v_s|^2`.
pub fn localized_kinetic(v: &GridFunction, phi: &CutoffPhi, quad: &ResolventQuadrature) -> f64 {
    weighted_smoothed_integral(v, |x| phi.lap_a(x), quad, true)
}

/// `(L_{+,A} eps1, eps1)` and `(L_{-,A} eps2, eps2)` with `eps = eps1 + i eps2`.
///
/// Potentials are `3kQ^2` and `kQ^2`, the Hessian of `int k F` at `Q`.
pub fn localized_forms(
    eps: &GridFunction,
    q: &GridFunction,
    k: &InhomogeneityProfile,
    phi: &CutoffPhi,
    quad: &ResolventQuadrature,
) -> Result<(f64, f64)> {
    eps.grid().check(q.grid())?;
    let e1 = eps.real_part();
    let e2 = eps.imag_part();
    let form = |v: &GridFunction, c: f64| {
        let g = v.grid();
        let pot: f64 =
            (0..g.size()).map(|j| k.k(g.x(j)) * q.values()[j].re.powi(2) * v.values()[j].norm_sqr()).sum();
        localized_kinetic(v, phi, quad) + v.norm_sq() - c * pot * g.dx()
    };
    Ok((form(&e1, 3.0), form(&e2, 1.0)))
}

/// `int_0^inf sqrt(s) int Delta^2 phi_A |u_s|^2`.
///
/// The weight enters as exact cell averages of `Delta^2 phi_A`, shifted to zero mean as its
/// continuum integral is. Point samples carry `O(dx)` defects at the jumps of `phi''''`, which the
/// `1/s` zero mode of `u_s` amplifies.
pub fn biharmonic_bound(u: &GridFunction, phi: &CutoffPhi, quad: &ResolventQuadrature) -> f64 {
    let g = u.grid();
    let (a, h) = (phi.a, 0.5 * g.dx());
    let mut w: Vec<f64> = (0..g.size())
        .map(|j| {
            let x = g.x(j);
            (phi.deriv((x + h) / a, 3) - phi.deriv((x - h) / a, 3)) / (a * g.dx())
        })
        .collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    sampled_weight_integral(u, &w, quad, false)
}

/// Directions removed before sampling the forms.
pub struct CoercivityBasis<'a> {
    pub q: &'a GridFunction,
    pub plus: Vec<&'a GridFunction>,
    pub minus: Vec<&'a GridFunction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivitySample {
    pub a: f64,
    pub samples: usize,
    pub seed: u64,
    /// `min (L_{+,A} v, v) / ||v||^2`
    pub c0_plus: f64,
    pub c0_minus: f64,
    pub c0: f64,
}

/// Removes the span of `dirs` (real, Gram-Schmidt) from real `v`; dependent directions are skipped.
pub fn project_off(v: &GridFunction, dirs: &[&GridFunction]) -> GridFunction {
    let mut basis: Vec<GridFunction> = Vec::new();
    for d in dirs {
        let mut e = (*d).real_part();
        let n0 = e.norm();
        for b in &basis {
            e = e.axpy(-dot(b, &e), b);
        }
        let n = e.norm();
        if n > 1e-10 * n0 {
            basis.push(e.scale(1.0 / n));
        }
    }
    let mut out = v.clone();
    for b in &basis {
        out = out.axpy(-dot(b, &out), b);
    }
    out
}

/// Random even sum of four Gaussian pairs.
pub fn random_even_direction(grid: &SpectralGrid, rng: &mut impl Rng) -> GridFunction {
    let bumps: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0), rng.gen_range(0.3..3.0))).collect();
    GridFunction::from_real_fn(grid, |x| {
        bumps
            .iter()
            .map(|(a, c, w)| a * ((-((x - c) / w).powi(2)).exp() + (-((x + c) / w).powi(2)).exp()))
            .sum()
    })
}

/// Smallest sampled Rayleigh quotients of both forms over projected random even directions.
pub fn coercivity_sample(
    basis: &CoercivityBasis,
    k: &InhomogeneityProfile,
    phi: &CutoffPhi,
    quad: &ResolventQuadrature,
    samples: usize,
    seed: u64,
) -> Result<CoercivitySample> {
    let grid = basis.q.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<GridFunction> = (0..samples).map(|_| random_even_direction(&grid, &mut rng)).collect();
    let vals: Vec<(f64, f64)> = dirs
        .iter()
        .map(|v| {
            let vp = project_off(v, &basis.plus);
            let vm = project_off(v, &basis.minus).map(|z| Complex64::new(0.0, z.re));
            let (p, _) = localized_forms(&vp, basis.q, k, phi, quad)?;
            let (_, m) = localized_forms(&vm, basis.q, k, phi, quad)?;
            Ok((p / vp.norm_sq(), m / vm.norm_sq()))
        })
        .collect::<Result<_>>()?;
    let c0_plus = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let c0_minus = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok(CoercivitySample { a: phi.a, samples, seed, c0_plus, c0_minus, c0: c0_plus.min(c0_minus) })
}

/// Five test functions for certifying a quadrature, the last being `q`.
pub fn certification_suite(q: &GridFunction) -> Vec<(String, GridFunction)> {
    let g = q.grid();
    vec![
        ("gaussian".into(), GridFunction::from_real_fn(g, |x| (-x * x).exp())),
        ("sech".into(), GridFunction::from_real_fn(g, |x| 1.0 / x.cosh())),
        ("lorentzian_sq".into(), GridFunction::from_real_fn(g, |x| 1.0 / (1.0 + x * x).powi(2))),
        ("chirped_gaussian".into(), GridFunction::from_fn(g, |x| Complex64::from_polar((-0.5 * x * x).exp(), 2.0 * x))),
        ("ground_state".into(), q.clone()),
    ]
}

/// Runs [`halfnorm_identity`] over [`certification_suite`].
pub fn certify_quadrature(q: &GridFunction, quad: &ResolventQuadrature) -> Vec<(String, IdentityCheck)> {
    certification_suite(q).into_iter().map(|(name, f)| (name, halfnorm_identity(&f, quad))).collect()
}
