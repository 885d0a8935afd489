//! Split-step integration of `i u_t = D u - k(x)|u|^2 u`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpectralGrid};
use crate::inhomogeneity::InhomogeneityProfile;
use crate::spectral::{dealias_two_thirds, energy, halfnorm_sq};

#[derive(Clone, Debug)]
pub struct FieldState {
    pub t: f64,
    pub u: GridFunction,
    pub step_count: usize,
    pub dt_last: f64,
}

impl FieldState {
    pub fn new(t: f64, u: GridFunction) -> Self {
        Self { t, u, step_count: 0, dt_last: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Strang,
    /// Triple-jump composition of Strang steps, fourth order.
    Yoshida4,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StepOptions {
    /// `false` runs the linear flow only.
    pub nonlinear: bool,
    /// 2/3-rule filter after each step.
    pub dealias: bool,
    pub scheme: Scheme,
    /// Upper bound on `dt * max k|u|^2`.
    pub stability_guard: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { nonlinear: true, dealias: false, scheme: Scheme::Strang, stability_guard: 0.5 }
    }
}

/// Precomputed samples of `k` and the wavenumbers for one grid.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: SpectralGrid,
    k: Vec<f64>,
    xi: Vec<f64>,
    pub options: StepOptions,
}

impl Propagator {
    pub fn new(grid: &SpectralGrid, k: &InhomogeneityProfile, options: StepOptions) -> Self {
        Self { grid: grid.clone(), k: k.sample(grid), xi: grid.wavenumbers(), options }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Samples of `exp(-i |xi| tau)` in FFT order, built from two power tables of
    /// `exp(-i pi tau / L)`.
    pub fn linear_multiplier(&self, tau: f64) -> Vec<Complex64> {
        const B: usize = 256;
        let n = self.xi.len();
        let h = std::f64::consts::PI * tau / self.grid.half_width();
        let small: Vec<Complex64> = (0..B).map(|r| Complex64::from_polar(1.0, -h * r as f64)).collect();
        let big: Vec<Complex64> =
            (0..=n / 2 / B + 1).map(|q| Complex64::from_polar(1.0, -h * (q * B) as f64)).collect();
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j } else { n - j };
                small[m % B] * big[m / B]
            })
            .collect()
    }

    fn apply_multiplier(&self, u: &mut [Complex64], mult: &[Complex64]) {
        self.grid.forward(u);
        for (v, w) in u.iter_mut().zip(mult) {
            *v *= w;
        }
        self.grid.inverse(u);
    }

    /// `u -> exp(-i |xi| tau) u` in Fourier space.
    pub fn linear(&self, u: &mut [Complex64], tau: f64) {
        let mult = self.linear_multiplier(tau);
        self.apply_multiplier(u, &mult);
    }

    /// Exact flow of `i u_t = -k|u|^2 u`.
    pub fn nonlinear(&self, u: &mut [Complex64], tau: f64) {
        for (v, k) in u.iter_mut().zip(&self.k) {
            *v *= Complex64::from_polar(1.0, tau * k * v.norm_sqr());
        }
    }

    pub fn max_rate(&self, u: &[Complex64]) -> f64 {
        u.iter().zip(&self.k).map(|(v, k)| k * v.norm_sqr()).fold(0.0, f64::max)
    }

    fn strang(&self, u: &mut [Complex64], dt: f64) {
        if self.options.nonlinear {
            let half = self.linear_multiplier(0.5 * dt);
            self.apply_multiplier(u, &half);
            self.nonlinear(u, dt);
            self.apply_multiplier(u, &half);
        } else {
            self.linear(u, dt);
        }
    }

    /// One step of size `dt` in place.
    pub fn advance(&self, u: &mut [Complex64], dt: f64) -> Result<()> {
        match self.options.scheme {
            Scheme::Strang => self.strang(u, dt),
            Scheme::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c * w1;
                self.strang(u, w1 * dt);
                self.strang(u, w0 * dt);
                self.strang(u, w1 * dt);
            }
        }
        if self.options.dealias {
            let g = GridFunction::new(&self.grid, u.to_vec())?;
            u.copy_from_slice(dealias_two_thirds(&g).values());
        }
        if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::ResolutionExceeded { t: f64::NAN });
        }
        Ok(())
    }

    pub fn step(&self, state: &FieldState, dt: f64) -> Result<FieldState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
        }
        self.grid.check(state.u.grid())?;
        let rate = self.max_rate(state.u.values());
        if self.options.nonlinear && dt * rate > self.options.stability_guard {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt:.3e} exceeds the stability guard ({:.3e} / max k|u|^2)",
                self.options.stability_guard
            )));
        }
        let mut u = state.u.values().to_vec();
        self.advance(&mut u, dt).map_err(|e| match e {
            Error::ResolutionExceeded { .. } => Error::ResolutionExceeded { t: state.t },
            e => e,
        })?;
        Ok(FieldState {
            t: state.t + dt,
            u: GridFunction::new(&self.grid, u)?,
            step_count: state.step_count + 1,
            dt_last: dt,
        })
    }
}

/// One Strang step.
pub fn step_strang(state: &FieldState, dt: f64, k: &InhomogeneityProfile) -> Result<FieldState> {
    Propagator::new(state.u.grid(), k, StepOptions::default()).step(state, dt)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriteria {
    /// Final time, `< 0`.
    pub t_end: f64,
    pub lambda_min: f64,
    pub max_halfnorm: Option<f64>,
    pub max_steps: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { t_end: -1e-3, lambda_min: 0.0, max_halfnorm: None, max_steps: 10_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedEnd,
    ScaleFloor,
    HalfnormCap,
    StepLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    /// Scalar record every this many steps.
    pub record_every: usize,
    /// Snapshot whenever `s = int dt / lambda_est` advanced by this much; `0` disables.
    pub snapshot_ds: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { record_every: 50, snapshot_ds: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub c_dt: f64,
    pub stop: StopCriteria,
    pub sampling: Sampling,
    pub step: StepOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { c_dt: 0.05, stop: StopCriteria::default(), sampling: Sampling::default(), step: StepOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TimeRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub halfnorm: f64,
    pub lambda_est: f64,
    pub dt: f64,
    pub steps: usize,
    /// Index into [`TimeSeries::snapshots`].
    pub snapshot: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub lambda_est: f64,
    pub u: GridFunction,
}

#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub records: Vec<TimeRecord>,
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
    pub final_state: FieldState,
}

impl TimeSeries {
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        self.records.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mass,energy,halfnorm,lambda_est,dt,steps,snapshot\n");
        for r in &self.records {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}\n",
                r.t,
                r.mass,
                r.energy,
                r.halfnorm,
                r.lambda_est,
                r.dt,
                r.steps,
                r.snapshot.map(|i| i.to_string()).unwrap_or_default()
            ));
        }
        s
    }
}

/// Scale proxy `(||D^{1/2}Q|| / ||D^{1/2}u||)^2`, exact for `u = lambda^{-1/2} Q(x/lambda)`.
pub fn lambda_est(u: &GridFunction, halfnorm_q_sq: f64) -> f64 {
    halfnorm_q_sq / halfnorm_sq(u)
}

/// Adaptive run with `dt = c_dt lambda_est^2`.
pub fn run(
    u0: &GridFunction,
    t0: f64,
    k: &InhomogeneityProfile,
    halfnorm_q_sq: f64,
    cfg: &RunConfig,
) -> Result<TimeSeries> {
    if !(t0 < cfg.stop.t_end) {
        return Err(Error::InvalidArgument(format!("t0 = {t0} must precede t_end = {}", cfg.stop.t_end)));
    }
    let prop = Propagator::new(u0.grid(), k, cfg.step);
    let mut state = FieldState::new(t0, u0.clone());
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut s_since_snap = f64::INFINITY;
    let mut dt = 0.0;
    let record = |state: &FieldState, dt: f64, lam: f64, hn: f64, snap: Option<usize>| TimeRecord {
        t: state.t,
        mass: state.u.norm_sq(),
        energy: energy(&state.u, k),
        halfnorm: hn.sqrt(),
        lambda_est: lam,
        dt,
        steps: state.step_count,
        snapshot: snap,
    };
    let stop = loop {
        let hn = halfnorm_sq(&state.u);
        let lam = halfnorm_q_sq / hn;
        let reason = if state.t >= cfg.stop.t_end {
            Some(StopReason::ReachedEnd)
        } else if lam <= cfg.stop.lambda_min {
            Some(StopReason::ScaleFloor)
        } else if cfg.stop.max_halfnorm.is_some_and(|m| hn.sqrt() >= m) {
            Some(StopReason::HalfnormCap)
        } else if state.step_count >= cfg.stop.max_steps {
            Some(StopReason::StepLimit)
        } else {
            None
        };
        let mut snap = None;
        if cfg.sampling.snapshot_ds > 0.0 && (s_since_snap >= cfg.sampling.snapshot_ds || reason.is_some()) {
            snapshots.push(Snapshot { t: state.t, lambda_est: lam, u: state.u.clone() });
            snap = Some(snapshots.len() - 1);
            s_since_snap = 0.0;
        }
        if snap.is_some() || reason.is_some() || state.step_count % cfg.sampling.record_every.max(1) == 0 {
            records.push(record(&state, dt, lam, hn, snap));
        }
        if let Some(r) = reason {
            break r;
        }
        dt = (cfg.c_dt * lam * lam).min(cfg.stop.t_end - state.t);
        state = prop.step(&state, dt)?;
        s_since_snap += dt / lam;
    };
    Ok(TimeSeries { records, snapshots, stop, final_state: state })
}

/// Critical mass `||Q|| / sqrt(max k)` sampled on the grid.
pub fn threshold_mass(q_norm: f64, k: &InhomogeneityProfile, grid: &SpectralGrid) -> f64 {
    let kmax = k.sample(grid).into_iter().fold(f64::NEG_INFINITY, f64::max);
    q_norm / kmax.sqrt()
}
