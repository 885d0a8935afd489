//! Periodic truncation of the line and sampled fields on it.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

type Plan = Arc<dyn Fft<f64>>;

fn plans(n: usize) -> (Plan, Plan) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Plan, Plan)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// In-place forward FFT of arbitrary length (unnormalized).
pub fn fft_forward(buf: &mut [Complex64]) {
    plans(buf.len()).0.process(buf);
}

/// In-place inverse FFT of arbitrary length, normalized by 1/n.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    plans(n).1.process(buf);
    let s = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// The torus [-L, L) with N equispaced nodes.
///
/// Nodes are `x_j = -L + 2Lj/N`; wavenumbers are stored in FFT order,
/// `xi = pi*m/L` with `m = j` for `j < N/2` and `m = j - N` otherwise.
#[derive(Clone)]
pub struct SpectralGrid {
    l: f64,
    n: usize,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralGrid(L={}, N={})", self.l, self.n)
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.l == other.l && self.n == other.n
    }
}

impl SpectralGrid {
    pub fn new(half_width: f64, size: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if size < 16 || size % 2 != 0 {
            return Err(Error::InvalidGrid(format!("size must be even and >= 16, got {size}")));
        }
        Ok(Self { l: half_width, n: size })
    }

    pub fn half_width(&self) -> f64 {
        self.l
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.l + self.dx() * j as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed mode index of FFT slot `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        std::f64::consts::PI * self.mode(j) as f64 / self.l
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    /// Index of the node at `-x_j`.
    pub fn reflect_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    pub fn check(&self, other: &SpectralGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { l1: self.l, n1: self.n, l2: other.l, n2: other.n })
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        fft_forward(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        fft_inverse(buf);
    }
}

/// Complex samples of a field on a [`SpectralGrid`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: SpectralGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: &SpectralGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.size(),
                values.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.size()] }
    }

    pub fn from_real(grid: &SpectralGrid, re: &[f64]) -> Result<Self> {
        Self::new(grid, re.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_parts(grid: &SpectralGrid, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::InvalidArgument("real and imaginary parts differ in length".into()));
        }
        Self::new(grid, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self { grid: grid.clone(), values: (0..grid.size()).map(|j| f(grid.x(j))).collect() }
    }

    pub fn from_real_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn real_part(&self) -> GridFunction {
        self.map(|v| Complex64::new(v.re, 0.0))
    }

    pub fn imag_part(&self) -> GridFunction {
        self.map(|v| Complex64::new(v.im, 0.0))
    }

    /// True when every imaginary part is below `tol` in magnitude.
    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridFunction {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise map with access to the node coordinate.
    pub fn map_x(&self, f: impl Fn(f64, Complex64) -> Complex64) -> GridFunction {
        let g = &self.grid;
        Self {
            grid: g.clone(),
            values: self.values.iter().enumerate().map(|(j, &v)| f(g.x(j), v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> GridFunction {
        assert!(self.grid == other.grid, "grid mismatch in pointwise operation");
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|v| v.conj())
    }

    /// The reflected field `x -> f(-x)`.
    pub fn reflect(&self) -> GridFunction {
        let g = &self.grid;
        Self {
            grid: g.clone(),
            values: (0..g.size()).map(|j| self.values[g.reflect_index(j)]).collect(),
        }
    }

    /// Even part `(f(x) + f(-x))/2`.
    pub fn even_part(&self) -> GridFunction {
        self.zip_map(&self.reflect(), |a, b| 0.5 * (a + b))
    }

    /// Largest deviation from evenness.
    pub fn parity_defect(&self) -> f64 {
        let g = &self.grid;
        (0..g.size())
            .map(|j| (self.values[j] - self.values[g.reflect_index(j)]).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unnormalized discrete Fourier coefficients in FFT order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        self.grid.forward(&mut buf);
        buf
    }

    pub fn from_spectrum(grid: &SpectralGrid, mut spec: Vec<Complex64>) -> Result<Self> {
        if spec.len() != grid.size() {
            return Err(Error::InvalidArgument("spectrum length differs from grid size".into()));
        }
        grid.inverse(&mut spec);
        Self::new(grid, spec)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| v * c)
    }

    pub fn scale_c(&self, c: Complex64) -> GridFunction {
        self.map(|v| v * c)
    }

    /// `self + c*other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> GridFunction {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn mul_pointwise(&self, other: &GridFunction) -> GridFunction {
        self.zip_map(other, |a, b| a * b)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        self.map(|a| -a)
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.scale(rhs)
    }
}

impl Mul<&GridFunction> for f64 {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        rhs.scale(self)
    }
}

impl Mul for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        self.mul_pointwise(rhs)
    }
}

/// A Fourier symbol sampled at the grid wavenumbers (FFT order).
#[derive(Clone, Debug)]
pub struct Multiplier {
    grid: SpectralGrid,
    symbol: Vec<Complex64>,
}

impl Multiplier {
    pub fn from_fn(grid: &SpectralGrid, m: impl Fn(f64) -> Complex64) -> Result<Self> {
        let symbol: Vec<Complex64> = grid.wavenumbers().into_iter().map(m).collect();
        if symbol.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("multiplier symbol not finite on the grid".into()));
        }
        Ok(Self { grid: grid.clone(), symbol })
    }

    pub fn real(grid: &SpectralGrid, m: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, |xi| Complex64::new(m(xi), 0.0))
    }

    pub fn identity(grid: &SpectralGrid) -> Self {
        Self { grid: grid.clone(), symbol: vec![Complex64::new(1.0, 0.0); grid.size()] }
    }

    /// The half-wave operator `D = |xi|`.
    pub fn half_wave(grid: &SpectralGrid) -> Self {
        Self::fractional(grid, 1.0)
    }

    /// `|xi|^alpha` with the zero mode set to zero.
    pub fn fractional(grid: &SpectralGrid, alpha: f64) -> Self {
        let symbol = grid
            .wavenumbers()
            .into_iter()
            .map(|xi| Complex64::new(if xi == 0.0 { 0.0 } else { xi.abs().powf(alpha) }, 0.0))
            .collect();
        Self { grid: grid.clone(), symbol }
    }

    /// `i*xi`, with the unpaired Nyquist mode zeroed so real fields stay real.
    pub fn derivative(grid: &SpectralGrid) -> Self {
        let n = grid.size();
        let symbol = (0..n)
            .map(|j| if j == n / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, grid.wavenumber(j)) })
            .collect();
        Self { grid: grid.clone(), symbol }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    pub fn compose(&self, other: &Multiplier) -> Result<Multiplier> {
        self.grid.check(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            symbol: self.symbol.iter().zip(&other.symbol).map(|(a, b)| a * b).collect(),
        })
    }

    /// Applies the symbol to raw FFT-order coefficients in place.
    pub fn apply_spectrum(&self, spec: &mut [Complex64]) {
        for (v, m) in spec.iter_mut().zip(&self.symbol) {
            *v *= m;
        }
    }
}
