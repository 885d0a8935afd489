//! Fourier-multiplier calculus and conserved-quantity diagnostics.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{GridFunction, Multiplier, SpectralGrid};
use crate::inhomogeneity::InhomogeneityProfile;

/// Fraction of mass beyond `|x| > L/2` above which a field counts as touching the boundary.
pub const TAIL_WARN: f64 = 1e-8;

/// Inverse DFT of `m(xi) * f_hat(xi)`.
pub fn apply_multiplier(f: &GridFunction, m: &Multiplier) -> Result<GridFunction> {
    f.grid().check(m.grid())?;
    let mut spec = f.spectrum();
    m.apply_spectrum(&mut spec);
    GridFunction::from_spectrum(f.grid(), spec)
}

/// Applies a real symbol given as a function of the wavenumber.
pub fn apply_symbol(f: &GridFunction, m: impl Fn(f64) -> f64) -> GridFunction {
    let g = f.grid();
    let mut spec = f.spectrum();
    for (j, v) in spec.iter_mut().enumerate() {
        *v *= m(g.wavenumber(j));
    }
    GridFunction::from_spectrum(g, spec).expect("length preserved")
}

/// Drops roundoff imaginary parts when a Hermitian symbol acts on real input.
fn real_in_real_out(f: &GridFunction, mut out: GridFunction) -> GridFunction {
    if f.values().iter().all(|v| v.im == 0.0) {
        out.values_mut().iter_mut().for_each(|v| v.im = 0.0);
    }
    out
}

pub fn half_wave(f: &GridFunction) -> GridFunction {
    real_in_real_out(f, apply_symbol(f, f64::abs))
}

pub fn derivative(f: &GridFunction) -> GridFunction {
    real_in_real_out(f, apply_multiplier(f, &Multiplier::derivative(f.grid())).expect("same grid"))
}

/// Smooth step rising from 0 at `r <= 0` to 1 at `r >= 1`; all derivatives vanish at both ends.
pub fn smooth_step(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / r).exp();
        let b = (-1.0 / (1.0 - r)).exp();
        a / (a + b)
    }
}

/// Window equal to 1 on `|x| <= L/2` and decaying smoothly to 0 at `|x| = L`.
pub fn boundary_window(grid: &SpectralGrid, x: f64) -> f64 {
    let l = grid.half_width();
    1.0 - smooth_step((x.abs() - 0.5 * l) / (0.5 * l))
}

/// `Lambda f = f/2 + x f'` on the torus.
///
/// The coordinate `x` is replaced by the periodic `x W(x)` with `W` from
/// [`boundary_window`]; both agree on `|x| <= L/2`, where decaying inputs live.
///
/// Input and output pass through [`spectral_filter`]: `x f'` multiplies grid-scale
/// roundoff by `x * xi_max`, and nested applications would otherwise amplify it.
pub fn scaling_generator(f: &GridFunction) -> GridFunction {
    let g = f.grid();
    let ff = spectral_filter(f);
    let df = derivative(&ff);
    spectral_filter(&df.map_x(|x, d| d * (x * boundary_window(g, x))).axpy(0.5, &ff))
}

/// Exponential filter `exp(-36 (|xi|/xi_max)^36)`; equal to 1 to roundoff below `0.6 xi_max`.
pub fn filter_symbol(xi: f64, xi_max: f64) -> f64 {
    (-36.0 * (xi.abs() / xi_max).powi(36)).exp()
}

pub fn spectral_filter(f: &GridFunction) -> GridFunction {
    let xi_max = f.grid().wavenumber(f.grid().size() / 2).abs();
    real_in_real_out(f, apply_symbol(f, |xi| filter_symbol(xi, xi_max)))
}

/// Fraction of `||f||^2` carried by `|x| > L/2`.
pub fn tail_fraction(f: &GridFunction) -> f64 {
    let g = f.grid();
    let total = f.norm_sq();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = f
        .values()
        .iter()
        .enumerate()
        .filter(|(j, _)| g.x(*j).abs() > 0.5 * g.half_width())
        .map(|(_, v)| v.norm_sqr())
        .sum();
    tail * g.dx() / total
}

/// `(f, g) = dx * sum conj(f) g`.
pub fn inner(f: &GridFunction, g: &GridFunction) -> Result<Complex64> {
    f.grid().check(g.grid())?;
    let s: Complex64 = f.values().iter().zip(g.values()).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.grid().dx())
}

/// Real part of the inner product; panics on grid mismatch.
pub fn dot(f: &GridFunction, g: &GridFunction) -> f64 {
    assert!(f.grid() == g.grid(), "grid mismatch in inner product");
    let s: f64 = f.values().iter().zip(g.values()).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
    s * f.grid().dx()
}

/// `||D^alpha f||^2` evaluated in Fourier space.
pub fn fractional_norm_sq(f: &GridFunction, alpha: f64) -> f64 {
    let g = f.grid();
    let spec = f.spectrum();
    let s: f64 = spec
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let xi = g.wavenumber(j).abs();
            if xi == 0.0 {
                0.0
            } else if alpha == 0.5 {
                xi * v.norm_sqr()
            } else {
                xi.powf(2.0 * alpha) * v.norm_sqr()
            }
        })
        .sum();
    s * g.dx() / g.size() as f64
}

/// `||D^{1/2} f||^2 = (f, Df)`.
pub fn halfnorm_sq(f: &GridFunction) -> f64 {
    fractional_norm_sq(f, 0.5)
}

/// `||f||^2 + ||D^{1/2} f||^2`.
pub fn h_half_norm_sq(f: &GridFunction) -> f64 {
    f.norm_sq() + halfnorm_sq(f)
}

pub fn mass(u: &GridFunction) -> f64 {
    u.norm_sq()
}

/// `E(u) = (u, Du)/2 - (1/4) sum k |u|^4 dx`.
pub fn energy(u: &GridFunction, k: &InhomogeneityProfile) -> f64 {
    let g = u.grid();
    let quartic: f64 = u
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| k.k(g.x(j)) * v.norm_sqr().powi(2))
        .sum();
    0.5 * halfnorm_sq(u) - 0.25 * quartic * g.dx()
}

/// `P(u) = Im (u, u')`.
pub fn momentum(u: &GridFunction) -> f64 {
    inner(u, &derivative(u)).expect("same grid").im
}

/// Zeroes modes with `|m| > N/3`.
pub fn dealias_two_thirds(f: &GridFunction) -> GridFunction {
    let g = f.grid();
    let cut = g.size() as i64 / 3;
    let mut spec = f.spectrum();
    for (j, v) in spec.iter_mut().enumerate() {
        if g.mode(j).abs() > cut {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    GridFunction::from_spectrum(g, spec).expect("length preserved")
}

/// `u_mu(x) = mu^{-1/2} f(x/mu)` for an analytic profile sampled on `grid`.
pub fn l2_rescale_fn(grid: &SpectralGrid, mu: f64, f: impl Fn(f64) -> f64) -> GridFunction {
    GridFunction::from_real_fn(grid, |x| f(x / mu) / mu.sqrt())
}
