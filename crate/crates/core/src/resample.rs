//! Band-limited evaluation of grid functions at new equispaced points.
//!
//! The trigonometric interpolant is summed with a chirp-z transform
//! (Bluestein convolution). The Nyquist coefficient is split evenly between
//! the modes `+-N/2` so real fields interpolate to real values.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{fft_forward, fft_inverse, GridFunction, SpectralGrid};

const TAU_HI: f64 = 6.283_185_307_179_586;
const TAU_LO: f64 = 2.449_293_598_294_706_4e-16;

/// `c * n` reduced to `[-pi, pi]` without losing the low-order bits of the product.
fn exact_phase(c: f64, n: f64) -> f64 {
    let p = c * n;
    let e = c.mul_add(n, -p);
    let k = (p / TAU_HI).round();
    k.mul_add(-TAU_HI, p) - k * TAU_LO + e
}

fn cis(phase: f64) -> Complex64 {
    Complex64::new(phase.cos(), phase.sin())
}

/// Values of the interpolant of `f` at `start + step*j`, `j = 0..count`.
pub fn evaluate_uniform(f: &GridFunction, start: f64, step: f64, count: usize) -> Vec<Complex64> {
    if count == 0 {
        return Vec::new();
    }
    let g = f.grid();
    let n = g.size();
    let l = g.half_width();
    let x0 = -l;
    let spec = f.spectrum();
    let half = n / 2;
    let m_len = n + 1;
    // Coefficients indexed by p = m + N/2 in 0..=N.
    let shift_c = std::f64::consts::PI * (start - x0) / l;
    let half_theta = 0.5 * std::f64::consts::PI * step / l;
    let mut a = Vec::with_capacity(m_len);
    for p in 0..m_len {
        let m = p as i64 - half as i64;
        let c = if p == 0 || p == n {
            0.5 * spec[half]
        } else if m >= 0 {
            spec[m as usize]
        } else {
            spec[(m + n as i64) as usize]
        };
        let ph = exact_phase(shift_c, m as f64) + exact_phase(half_theta, (p * p) as f64);
        a.push(c * cis(ph) / n as f64);
    }
    let size = (m_len + count - 1).next_power_of_two();
    let mut abuf = vec![Complex64::new(0.0, 0.0); size];
    abuf[..m_len].copy_from_slice(&a);
    let mut w = vec![Complex64::new(0.0, 0.0); size];
    for k in 0..count {
        w[k] = cis(-exact_phase(half_theta, (k * k) as f64));
    }
    for k in 1..m_len {
        w[size - k] = cis(-exact_phase(half_theta, (k * k) as f64));
    }
    fft_forward(&mut abuf);
    fft_forward(&mut w);
    for (x, y) in abuf.iter_mut().zip(&w) {
        *x *= y;
    }
    fft_inverse(&mut abuf);
    (0..count)
        .map(|j| {
            let jj = j as i64;
            let post = exact_phase(half_theta, (jj * (jj - n as i64)) as f64);
            abuf[j] * cis(post)
        })
        .collect()
}

/// Samples `x -> f(x / mu)` on `target`; `mu > 0`.
pub fn dilate_onto(f: &GridFunction, target: &SpectralGrid, mu: f64) -> Result<GridFunction> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("dilation must be positive, got {mu}")));
    }
    let start = target.x(0) / mu;
    let step = target.dx() / mu;
    let vals = evaluate_uniform(f, start, step, target.size());
    GridFunction::new(target, vals)
}

/// Direct O(N K) evaluation; used as an oracle.
pub fn evaluate_direct(f: &GridFunction, points: &[f64]) -> Vec<Complex64> {
    let g = f.grid();
    let n = g.size();
    let spec = f.spectrum();
    let x0 = g.x(0);
    points
        .iter()
        .map(|&x| {
            let mut s = Complex64::new(0.0, 0.0);
            for (j, c) in spec.iter().enumerate() {
                if j == n / 2 {
                    let xi = g.wavenumber(j).abs();
                    s += c * (xi * (x - x0)).cos();
                } else {
                    s += c * cis(g.wavenumber(j) * (x - x0));
                }
            }
            s / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes() {
        let g = SpectralGrid::new(12.0, 256).unwrap();
        let f = GridFunction::from_fn(&g, |x| Complex64::new(1.0 / (1.0 + x * x), x * (-x * x).exp()));
        let out = evaluate_uniform(&f, g.x(0), g.dx(), g.size());
        for (a, b) in out.iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn matches_direct_sum() {
        let g = SpectralGrid::new(10.0, 128).unwrap();
        let f = GridFunction::from_real_fn(&g, |x| (-(x - 0.3).powi(2)).exp());
        let pts: Vec<f64> = (0..50).map(|j| -3.1 + 0.137 * j as f64).collect();
        let fast = evaluate_uniform(&f, pts[0], 0.137, pts.len());
        let slow = evaluate_direct(&f, &pts);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, &x) in fast.iter().zip(&pts) {
            assert!((a.re - (-(x - 0.3f64).powi(2)).exp()).abs() < 1e-12);
            assert!(a.im.abs() < 1e-13);
        }
    }

    #[test]
    fn dilation_of_gaussian() {
        let g = SpectralGrid::new(16.0, 512).unwrap();
        let f = GridFunction::from_real_fn(&g, |x| (-x * x).exp());
        let h = SpectralGrid::new(8.0, 1024).unwrap();
        let d = dilate_onto(&f, &h, 0.5).unwrap();
        for j in 0..h.size() {
            let x = h.x(j);
            assert!((d.values()[j].re - (-4.0 * x * x).exp()).abs() < 1e-12);
        }
    }
}
