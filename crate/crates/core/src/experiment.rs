//! Initial data, blowup experiments and law fits.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{run, RunConfig, Scheme, Snapshot, StopReason, TimeRecord, TimeSeries};
use crate::fit::{linear_fit, power_fit, proportional_fit};
use crate::grid::{GridFunction, SpectralGrid};
use crate::ground_state::{
    solve_gradient_flow, solve_petviashvili, GradientFlowConfig, GroundState, PetviashviliConfig, SolverReport,
};
use crate::inhomogeneity::InhomogeneityProfile;
use crate::io::{read_grid_function, read_json, version_tag, write_grid_function, write_json, Encoding};
use crate::linearized::{assemble, build_profile_coefficients, BuildOptions, ProfileCoefficientSet};
use crate::modulation::{track, wrap_angle, DecomposeOptions, ModRecord, ModTrack, ModulationBasis};
use crate::profile::{assemble_profile, ProfileParams};
use crate::spectral::{dot, energy, halfnorm_sq};
use crate::virial::{
    biharmonic_bound, certify_quadrature, coercivity_sample, evaluate_ja, localized_forms, CoercivityBasis,
    CoercivitySample, CutoffPhi, IdentityCheck, ResolventQuadrature,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialDataOptions {
    /// Rescale to `||u|| = ||Q||` exactly.
    pub renormalize_mass: bool,
    /// Adjust `b1` so that `E(u(t1)) = E0` on the grid.
    pub match_energy: bool,
    /// Largest admissible `dx / lambda1`.
    pub max_mapped_dx: f64,
}

impl Default for InitialDataOptions {
    fn default() -> Self {
        Self { renormalize_mass: false, match_energy: false, max_mapped_dx: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct InitialData {
    pub u: GridFunction,
    pub a0: f64,
    pub lambda1: f64,
    /// `sqrt(lambda1) / A0`
    pub b1_nominal: f64,
    pub b1: f64,
    pub gamma0: f64,
    pub mass: f64,
    pub energy: f64,
}

/// `A0 = sqrt(e1 / E0)`.
pub fn a0_of(e1: f64, e0: f64) -> Result<f64> {
    if !(e0 > 0.0) {
        return Err(Error::InvalidArgument(format!("E0 = {e0} must be positive")));
    }
    Ok((e1 / e0).sqrt())
}

/// `lambda1^{-1/2} Q_P1(x/lambda1) e^{i gamma0}` with `lambda1 = t1^2/(4 A0^2)` and
/// `b1 = sqrt(lambda1)/A0`.
pub fn build_initial_data(
    basis: &ModulationBasis,
    k: &InhomogeneityProfile,
    xgrid: &SpectralGrid,
    e0: f64,
    t1: f64,
    gamma0: f64,
    opts: &InitialDataOptions,
) -> Result<InitialData> {
    if !(t1 < 0.0) {
        return Err(Error::InvalidArgument(format!("t1 = {t1} must be negative")));
    }
    let a0 = a0_of(basis.e1, e0)?;
    let lambda1 = t1 * t1 / (4.0 * a0 * a0);
    let b_nom = lambda1.sqrt() / a0;
    if xgrid.dx() / lambda1 > opts.max_mapped_dx {
        let n = (2.0 * xgrid.half_width() / (opts.max_mapped_dx * lambda1)).ceil() as usize;
        return Err(Error::InvalidArgument(format!(
            "lambda1 = {lambda1:.3e} unresolved: dx/lambda1 = {:.3e}; use N >= {}",
            xgrid.dx() / lambda1,
            n.next_power_of_two()
        )));
    }
    let m = basis.sample(xgrid, lambda1)?;
    let phase = Complex64::from_polar(lambda1.powf(-0.5), gamma0);
    let make = |b: f64| -> Result<GridFunction> {
        let qp = m.profile(b).qp;
        let u = GridFunction::new(xgrid, qp.values().iter().map(|v| phase * v).collect())?;
        Ok(if opts.renormalize_mass { u.scale((basis.mass_q / u.norm_sq()).sqrt()) } else { u })
    };
    let mut b = b_nom;
    let mut u = make(b)?;
    if opts.match_energy {
        // Secant iteration on E(b) - E0.
        let f = |u: &GridFunction| energy(u, k) - e0;
        let (mut b0, mut f0) = (b, f(&u));
        let mut b1 = b * 1.01;
        let mut u1 = make(b1)?;
        let mut f1 = f(&u1);
        for _ in 0..50 {
            if f1.abs() < 1e-13 * e0 || f1 == f0 {
                break;
            }
            let b2 = b1 - f1 * (b1 - b0) / (f1 - f0);
            (b0, f0) = (b1, f1);
            b1 = b2;
            u1 = make(b1)?;
            f1 = f(&u1);
        }
        if !(f1.abs() < 1e-10 * e0) || !(b1 > 0.0) {
            return Err(Error::NoConvergence { iterations: 50, residual: f1 / e0 });
        }
        b = b1;
        u = u1;
    }
    Ok(InitialData {
        mass: u.norm_sq(),
        energy: energy(&u, k),
        u,
        a0,
        lambda1,
        b1_nominal: b_nom,
        b1: b,
        gamma0,
    })
}

/// `(L, N)` of a grid in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub size: usize,
}

impl GridSpec {
    pub const fn new(half_width: f64, size: usize) -> Self {
        Self { half_width, size }
    }

    pub fn build(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.half_width, self.size)
    }

    /// Parses `L,N`.
    pub fn parse(s: &str) -> Result<Self> {
        let (l, n) = s
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("grid '{s}' is not of the form L,N")))?;
        let half_width = l.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad L in '{s}'")))?;
        let size = n.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad N in '{s}'")))?;
        let g = Self { half_width, size };
        g.build()?;
        Ok(g)
    }
}

/// Settings of the virial study.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VirialConfig {
    pub quadrature_nodes: usize,
    /// Cutoff radii of the biharmonic scaling study.
    pub biharmonic_a: Vec<f64>,
    pub biharmonic_grid: GridSpec,
    pub coercivity_a: f64,
    pub coercivity_samples: usize,
    /// Coefficients are built on `coeff_grid` and every `decimate`-th node is kept.
    pub decimate: usize,
    pub consistency_a: f64,
}

impl Default for VirialConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 80,
            biharmonic_a: vec![25.0, 50.0, 100.0],
            biharmonic_grid: GridSpec::new(2048.0, 16384),
            coercivity_a: 100.0,
            coercivity_samples: 200,
            decimate: 8,
            consistency_a: 1000.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Evolution grid.
    pub grid: GridSpec,
    /// Grid of the ground state and profile coefficients.
    pub coeff_grid: GridSpec,
    /// `default`, `homogeneous` or `custom:k1=..,width=..`.
    pub k: String,
    pub e0: f64,
    pub t1: f64,
    pub gamma0: f64,
    /// Stop once `lambda_est < lambda1 / shrink`; `0` keeps `run.stop.lambda_min`.
    pub shrink: f64,
    pub run: RunConfig,
    pub initial: InitialDataOptions,
    pub decompose: DecomposeOptions,
    pub solvability_tol: f64,
    /// Grid of the solvability table in the property suites.
    pub suite_grid: GridSpec,
    /// Grid of the quadrature certification.
    pub identity_grid: GridSpec,
    pub virial: VirialConfig,
    pub seed: u64,
    pub save_snapshots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut run = RunConfig { c_dt: 0.5, ..RunConfig::default() };
        run.step.scheme = Scheme::Yoshida4;
        run.stop.t_end = -1e-6;
        run.sampling.snapshot_ds = 0.5;
        run.sampling.record_every = 5;
        Self {
            grid: GridSpec::new(5.0, 32768),
            coeff_grid: GridSpec::new(512.0, 32768),
            k: "default".into(),
            e0: 0.04,
            t1: -1.0,
            gamma0: 0.0,
            shrink: 30.0,
            run,
            initial: InitialDataOptions { renormalize_mass: true, match_energy: true, max_mapped_dx: 0.1 },
            decompose: DecomposeOptions::default(),
            solvability_tol: 1e-4,
            suite_grid: GridSpec::new(4096.0, 262144),
            identity_grid: GridSpec::new(256.0, 4096),
            virial: VirialConfig::default(),
            seed: 7,
            save_snapshots: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > 0.0) {
            return Err(Error::InvalidArgument(format!("E0 = {} must be positive", self.e0)));
        }
        if !(self.t1 < 0.0) {
            return Err(Error::InvalidArgument(format!("t1 = {} must be negative", self.t1)));
        }
        if !(self.t1 < self.run.stop.t_end && self.run.stop.t_end < 0.0) {
            return Err(Error::InvalidArgument(format!("need t1 < t_end < 0, got t_end = {}", self.run.stop.t_end)));
        }
        if self.shrink != 0.0 && !(self.shrink > 1.0) {
            return Err(Error::InvalidArgument(format!("shrink = {} must exceed 1", self.shrink)));
        }
        if !(self.run.c_dt > 0.0) {
            return Err(Error::InvalidArgument(format!("c_dt = {} must be positive", self.run.c_dt)));
        }
        self.grid.build()?;
        self.coeff_grid.build()?;
        self.inhomogeneity()?;
        Ok(())
    }

    /// Overlays a possibly partial JSON object on the defaults, key by key at every depth.
    pub fn from_partial_json(s: &str) -> Result<Self> {
        let patch: serde_json::Value = serde_json::from_str(s)?;
        let mut base = serde_json::to_value(Self::default())?;
        merge_json(&mut base, patch);
        Ok(serde_json::from_value(base)?)
    }

    pub fn inhomogeneity(&self) -> Result<InhomogeneityProfile> {
        InhomogeneityProfile::parse(&self.k)
    }
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// One named pass/fail entry with its measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, bound: format!("< {limit:e}"), pass: value < limit }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, bound: format!("> {limit:e}"), pass: value > limit }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, bound: format!("in [{lo}, {hi}]"), pass: value >= lo && value <= hi }
    }

    pub fn exact(name: &str, value: f64, expected: f64) -> Self {
        Self { name: name.into(), value, bound: format!("== {expected:e}"), pass: value == expected }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub c_dt: f64,
    pub scheme: Scheme,
    pub decompose_tol: f64,
    pub decompose_accept: f64,
    pub solvability_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub grid: GridSpec,
    pub coeff_grid: GridSpec,
    pub k: String,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        let k = cfg.inhomogeneity().map(|k| k.label()).unwrap_or_else(|_| cfg.k.clone());
        Self {
            version: version_tag(),
            grid: cfg.grid,
            coeff_grid: cfg.coeff_grid,
            k,
            seed: cfg.seed,
            tolerances: Tolerances {
                c_dt: cfg.run.c_dt,
                scheme: cfg.run.step.scheme,
                decompose_tol: cfg.decompose.tol,
                decompose_accept: cfg.decompose.accept,
                solvability_tol: cfg.solvability_tol,
            },
        }
    }
}

/// Ground state, coefficients and initial data shared by the dynamics commands.
pub struct Prepared {
    pub k: InhomogeneityProfile,
    pub coefficients: ProfileCoefficientSet,
    pub basis: ModulationBasis,
    pub xgrid: SpectralGrid,
    pub initial: InitialData,
    /// `||D^{1/2} Q||^2`
    pub halfnorm_q_sq: f64,
}

/// Certified `Q` and the profile coefficients on `grid`.
pub fn build_coefficients(
    grid: &SpectralGrid,
    k: &InhomogeneityProfile,
    solvability_tol: f64,
) -> Result<ProfileCoefficientSet> {
    let gs = solve_petviashvili(grid, &PetviashviliConfig::default())?;
    let pair = assemble(&gs)?;
    build_profile_coefficients(&pair, k, &BuildOptions { solvability_tol, ..BuildOptions::default() })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let k = cfg.inhomogeneity()?;
    let coefficients = build_coefficients(&cfg.coeff_grid.build()?, &k, cfg.solvability_tol)?;
    let basis = ModulationBasis::new(&coefficients);
    let xgrid = cfg.grid.build()?;
    let initial = build_initial_data(&basis, &k, &xgrid, cfg.e0, cfg.t1, cfg.gamma0, &cfg.initial)?;
    let halfnorm_q_sq = halfnorm_sq(&coefficients.q);
    Ok(Prepared { k, coefficients, basis, xgrid, initial, halfnorm_q_sq })
}

/// Evolves the prepared initial data with the configured stop criteria.
pub fn simulate(cfg: &ExperimentConfig, p: &Prepared) -> Result<TimeSeries> {
    let mut run_cfg = cfg.run.clone();
    if cfg.shrink > 0.0 {
        run_cfg.stop.lambda_min = p.initial.lambda1 / cfg.shrink;
    }
    run(&p.initial.u, cfg.t1, &p.k, p.halfnorm_q_sq, &run_cfg)
}

/// Converged modulation records with `lambda` in the last decade reached.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub modulation_points: usize,
    pub series_points: usize,
    /// `lambda1 / lambda_min`
    pub shrink_reached: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaLaw {
    /// `lambda = lambda_star t^2` by least squares.
    pub lambda_star: f64,
    pub relative_residual: f64,
    /// `lambda_star * 4 A0^2`
    pub normalized: f64,
    /// Free power-law fit `lambda ~ |t|^p`.
    pub exponent: f64,
    pub exponent_rms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateLaw {
    /// `||D^{1/2} u|| = C / |t|` by least squares.
    pub c: f64,
    pub relative_residual: f64,
    /// Free power-law fit `||D^{1/2} u|| ~ |t|^p`.
    pub exponent: f64,
    pub exponent_rms: f64,
    /// `(max - min) / min` of `||D^{1/2} u|| |t|`.
    pub variation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BRatio {
    /// Mean of `A0 b / sqrt(lambda)`.
    pub mean: f64,
    /// Largest `|A0 b / sqrt(lambda) - 1|`.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaLaw {
    /// Slope of `gamma` against `1/|t|`, divided by `4 A0^2`.
    pub normalized_slope: f64,
    pub offset: f64,
    pub rms: f64,
}

/// `C = (b^2 + ||eps||^2_{H^{1/2}}) / lambda` over the window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeBound {
    pub c_min: f64,
    pub c_max: f64,
    pub c_mean: f64,
    /// `(c_max - c_min) / c_mean`
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub a0: f64,
    pub lambda1: f64,
    pub b1: f64,
    pub b1_nominal: f64,
    pub initial_mass: f64,
    pub initial_energy: f64,
    pub stop: StopReason,
    pub final_t: f64,
    pub steps: usize,
    /// Set when the run stopped early, tracking failed inside the window, or less than a decade of
    /// `lambda` was covered.
    pub partial: bool,
    pub tracking_failures: usize,
    pub window: Option<FitWindow>,
    pub lambda_law: Option<LambdaLaw>,
    pub rate: Option<RateLaw>,
    pub b_ratio: Option<BRatio>,
    pub gamma_law: Option<GammaLaw>,
    pub size_bound: Option<SizeBound>,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

impl FitReport {
    /// Acceptance checks of the blowup laws; missing fits fail.
    pub fn checks(&self) -> Vec<Check> {
        let nan = f64::NAN;
        let mut v = vec![
            Check::within("lambda_exponent", self.lambda_law.as_ref().map_or(nan, |l| l.exponent), 1.9, 2.1),
            Check::below("rate_variation", self.rate.as_ref().map_or(nan, |r| r.variation), 0.15),
            Check::below("mass_drift", self.mass_drift, 1e-8),
            Check::within("lambda_star_4a0sq", self.lambda_law.as_ref().map_or(nan, |l| l.normalized), 0.8, 1.2),
            Check::below("b_ratio_deviation", self.b_ratio.as_ref().map_or(nan, |b| b.max_deviation), 0.2),
            Check::below("size_bound_spread", self.size_bound.as_ref().map_or(nan, |s| s.spread), SIZE_BOUND_SPREAD),
        ];
        v.push(Check::exact("partial", if self.partial { 1.0 } else { 0.0 }, 0.0));
        v
    }
}

/// Largest admissible relative spread of the fitted size-bound constant.
pub const SIZE_BOUND_SPREAD: f64 = 0.25;

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

/// Fits every law over the last decade of the tracked `lambda`.
pub fn fit_laws(cfg: &ExperimentConfig, p: &Prepared, series: &TimeSeries, track: &ModTrack) -> FitReport {
    let a0 = p.initial.a0;
    let four_a0_sq = 4.0 * a0 * a0;
    let ok: Vec<&ModRecord> = track.converged().collect();
    let failures = track.records.len() - ok.len();
    let e0 = series.records[0].energy;
    let mass_drift = series.mass_drift();
    let energy_drift = series.records.iter().map(|r| ((r.energy - e0) / e0).abs()).fold(0.0, f64::max);
    let mut report = FitReport {
        provenance: Provenance::of(cfg),
        a0,
        lambda1: p.initial.lambda1,
        b1: p.initial.b1,
        b1_nominal: p.initial.b1_nominal,
        initial_mass: p.initial.mass,
        initial_energy: p.initial.energy,
        stop: series.stop,
        final_t: series.final_state.t,
        steps: series.final_state.step_count,
        partial: !matches!(series.stop, StopReason::ScaleFloor | StopReason::ReachedEnd),
        tracking_failures: failures,
        window: None,
        lambda_law: None,
        rate: None,
        b_ratio: None,
        gamma_law: None,
        size_bound: None,
        mass_drift,
        energy_drift,
    };
    let lambda_min = ok.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let win: Vec<&ModRecord> = ok.iter().copied().filter(|r| r.lambda <= 10.0 * lambda_min).collect();
    if win.len() < 3 {
        report.partial = true;
        return report;
    }
    let (t_start, t_end) = min_max(&win.iter().map(|r| r.t).collect::<Vec<_>>());
    let in_window = |t: f64| t >= t_start && t <= t_end;
    let recs: Vec<&TimeRecord> = series.records.iter().filter(|r| in_window(r.t)).collect();
    let window_failures = track.records.iter().filter(|r| r.error.is_some() && in_window(r.t)).count();
    let lambda_max = win.iter().map(|r| r.lambda).fold(0.0, f64::max);
    let shrink_reached = p.initial.lambda1 / lambda_min;
    if shrink_reached < 10.0 || window_failures > 0 {
        report.partial = true;
    }
    report.window = Some(FitWindow {
        t_start,
        t_end,
        lambda_max,
        lambda_min,
        modulation_points: win.len(),
        series_points: recs.len(),
        shrink_reached,
    });

    let abs_t: Vec<f64> = win.iter().map(|r| r.t.abs()).collect();
    let lam: Vec<f64> = win.iter().map(|r| r.lambda).collect();
    let t_sq: Vec<f64> = abs_t.iter().map(|t| t * t).collect();
    let (lambda_star, rel) = proportional_fit(&t_sq, &lam);
    let pf = power_fit(&abs_t, &lam);
    report.lambda_law = Some(LambdaLaw {
        lambda_star,
        relative_residual: rel,
        normalized: lambda_star * four_a0_sq,
        exponent: pf.slope,
        exponent_rms: pf.rms,
    });

    if recs.len() >= 3 {
        let rt: Vec<f64> = recs.iter().map(|r| r.t.abs()).collect();
        let hn: Vec<f64> = recs.iter().map(|r| r.halfnorm).collect();
        let inv: Vec<f64> = rt.iter().map(|t| 1.0 / t).collect();
        let (c, rel) = proportional_fit(&inv, &hn);
        let pf = power_fit(&rt, &hn);
        let prod: Vec<f64> = hn.iter().zip(&rt).map(|(h, t)| h * t).collect();
        let (lo, hi) = min_max(&prod);
        report.rate =
            Some(RateLaw { c, relative_residual: rel, exponent: pf.slope, exponent_rms: pf.rms, variation: (hi - lo) / lo });
    } else {
        report.partial = true;
    }

    let ratios: Vec<f64> = win.iter().map(|r| a0 * r.b / r.lambda.sqrt()).collect();
    report.b_ratio = Some(BRatio {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        max_deviation: ratios.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max),
    });

    let gpts: Vec<(f64, f64)> = win.iter().map(|r| (1.0 / r.t.abs(), r.gamma)).collect();
    let gf = linear_fit(&gpts);
    report.gamma_law = Some(GammaLaw { normalized_slope: gf.slope / four_a0_sq, offset: gf.intercept, rms: gf.rms });

    let cs: Vec<f64> = win.iter().map(|r| (r.b * r.b + r.eps_h_half * r.eps_h_half) / r.lambda).collect();
    let (lo, hi) = min_max(&cs);
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    report.size_bound = Some(SizeBound { c_min: lo, c_max: hi, c_mean: mean, spread: (hi - lo) / mean });
    report
}

pub struct ExperimentOutcome {
    pub report: FitReport,
    pub series: TimeSeries,
    pub track: ModTrack,
}

impl ExperimentOutcome {
    /// Writes `series.csv`, `modulation.csv`, `report.json` and optionally `snapshots/`.
    pub fn persist(&self, dir: &Path, snapshots: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("series.csv"), self.series.to_csv())?;
        fs::write(dir.join("modulation.csv"), self.track.to_csv())?;
        write_json(&dir.join("report.json"), &self.report)?;
        if snapshots {
            write_snapshots(&dir.join("snapshots"), &self.series.snapshots)?;
        }
        Ok(())
    }
}

/// Simulates from [`build_initial_data`], tracks the modulation parameters and fits the laws.
pub fn run_blowup_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = prepare(cfg)?;
    let series = simulate(cfg, &p)?;
    let track = track_series(&p, &series.snapshots, &cfg.decompose);
    let report = fit_laws(cfg, &p, &series, &track);
    Ok(ExperimentOutcome { report, series, track })
}

/// Modulation track of snapshots started from the initial parameters.
pub fn track_series(p: &Prepared, snapshots: &[Snapshot], opts: &DecomposeOptions) -> ModTrack {
    let snaps: Vec<(f64, GridFunction)> = snapshots.iter().map(|s| (s.t, s.u.clone())).collect();
    track(&snaps, &p.basis, (p.initial.b1, p.initial.lambda1, p.initial.gamma0), opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub files: Vec<String>,
    pub t: Vec<f64>,
    pub lambda_est: Vec<f64>,
}

/// One grid-function file per snapshot plus `manifest.json`.
pub fn write_snapshots(dir: &Path, snaps: &[Snapshot]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut m = SnapshotManifest { files: Vec::new(), t: Vec::new(), lambda_est: Vec::new() };
    for (i, s) in snaps.iter().enumerate() {
        let name = format!("snap_{i:05}.json");
        write_grid_function(&dir.join(&name), &s.u, Some(s.t), Encoding::Base64)?;
        m.files.push(name);
        m.t.push(s.t);
        m.lambda_est.push(s.lambda_est);
    }
    write_json(&dir.join("manifest.json"), &m)
}

pub fn read_snapshots(dir: &Path) -> Result<Vec<Snapshot>> {
    let m: SnapshotManifest = read_json(&dir.join("manifest.json"))?;
    m.files
        .iter()
        .zip(&m.lambda_est)
        .map(|(f, l)| {
            let (u, t) = read_grid_function(&dir.join(f))?;
            let t = t.ok_or_else(|| Error::Format(format!("{f} carries no time stamp")))?;
            Ok(Snapshot { t, lambda_est: *l, u })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub version: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

/// Exact zero-in zero-out checks.
pub fn trivial_checks(seed: u64) -> Result<Vec<Check>> {
    let g = SpectralGrid::new(512.0, 32768)?;
    let zero = GridFunction::zeros(&g);
    let q = solve_petviashvili(&g, &PetviashviliConfig::default())?.q;
    let k = InhomogeneityProfile::default();
    let phi = CutoffPhi::new(10.0)?;
    let quad = ResolventQuadrature::new(20);
    let (fp, fm) = localized_forms(&zero, &q, &k, &phi, &quad)?;
    let ja = evaluate_ja(&zero, &q, 0.0, 1.0, &k, &phi)?;
    let c = build_coefficients(&g, &k, 1.0)?;
    let prof = assemble_profile(&c, ProfileParams::new(0.0, 0.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: f64 = rng.gen_range(-3.0..3.0);
    Ok(vec![
        Check::exact("halfnorm_of_zero", halfnorm_sq(&zero), 0.0),
        Check::exact("energy_of_zero", energy(&zero, &k), 0.0),
        Check::exact("biharmonic_of_zero", biharmonic_bound(&zero, &phi, &quad), 0.0),
        Check::exact("localized_forms_of_zero", fp.abs() + fm.abs(), 0.0),
        Check::exact("ja_at_zero", ja.total, 0.0),
        Check::exact("profile_at_origin_is_q", (&prof.qp - &c.q).max_abs(), 0.0),
        Check::exact("a0_at_e1", a0_of(c.e1, c.e1)? - 1.0, 0.0),
        Check::exact("wrap_of_wrapped_angle", wrap_angle(wrap_angle(theta)) - wrap_angle(theta), 0.0),
    ])
}

/// Trivial checks, the solvability table and the quadrature certification.
pub fn run_property_suites(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut checks = trivial_checks(cfg.seed)?;
    let k = cfg.inhomogeneity()?;
    let c = build_coefficients(&cfg.suite_grid.build()?, &k, 1.0)?;
    for (name, v) in &c.solvability_residuals {
        checks.push(Check::below(&format!("solvability_{name}"), *v, 1e-6));
    }
    let q = solve_petviashvili(&cfg.identity_grid.build()?, &PetviashviliConfig::default())?.q;
    let quad = ResolventQuadrature::new(cfg.virial.quadrature_nodes);
    for (name, r) in certify_quadrature(&q, &quad) {
        checks.push(Check::below(&format!("halfnorm_identity_{name}"), r.relerr, 1e-6));
    }
    Ok(SuiteReport { version: version_tag(), seed: cfg.seed, checks })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiharmonicPoint {
    pub a: f64,
    pub lhs: f64,
    /// `lhs * A / ||u||^2`
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VirialReport {
    pub version: String,
    pub identity: Vec<(String, IdentityCheck)>,
    pub convexity_min: f64,
    pub biharmonic: Vec<BiharmonicPoint>,
    /// `ratio(A_{i+1}) / ratio(A_i)`
    pub biharmonic_halving: Vec<f64>,
    pub coercivity: CoercivitySample,
    pub consistency_relerr: f64,
    pub checks: Vec<Check>,
}

fn decimate(f: &GridFunction, grid: &SpectralGrid, m: usize) -> Result<GridFunction> {
    GridFunction::new(grid, f.values().iter().step_by(m).copied().collect())
}

/// Quadrature certification, biharmonic scaling, sampled coercivity and the large-`A` limit.
pub fn run_virial_check(cfg: &ExperimentConfig) -> Result<VirialReport> {
    let vc = &cfg.virial;
    let k = cfg.inhomogeneity()?;
    let quad = ResolventQuadrature::new(vc.quadrature_nodes);
    let mut checks = Vec::new();

    let q = solve_petviashvili(&cfg.identity_grid.build()?, &PetviashviliConfig::default())?.q;
    let identity = certify_quadrature(&q, &quad);
    for (name, r) in &identity {
        checks.push(Check::below(&format!("halfnorm_identity_{name}"), r.relerr, 1e-6));
    }
    let convexity_min = CutoffPhi::new(1.0)?.certify_convexity(3000)?;
    checks.push(Check::above("phi_convexity_min", convexity_min, 0.0));

    let bg = vc.biharmonic_grid.build()?;
    let u = GridFunction::from_real_fn(&bg, |x| (-x * x).exp());
    let biharmonic = vc
        .biharmonic_a
        .iter()
        .map(|&a| {
            let lhs = biharmonic_bound(&u, &CutoffPhi::new(a)?, &quad);
            Ok(BiharmonicPoint { a, lhs, ratio: lhs * a / u.norm_sq() })
        })
        .collect::<Result<Vec<_>>>()?;
    let biharmonic_halving: Vec<f64> = biharmonic.windows(2).map(|w| w[1].ratio / w[0].ratio).collect();
    for (i, h) in biharmonic_halving.iter().enumerate() {
        checks.push(Check::within(&format!("biharmonic_halving_{i}"), *h, 0.4, 0.6));
    }

    let c = build_coefficients(&cfg.coeff_grid.build()?, &k, cfg.solvability_tol)?;
    let m = vc.decimate.max(1);
    let cg = SpectralGrid::new(c.grid.half_width(), c.grid.size() / m)?;
    let (qd, s10, rho1) = (decimate(&c.q, &cg, m)?, decimate(&c.s10, &cg, m)?, decimate(&c.rho1, &cg, m)?);
    let basis = CoercivityBasis { q: &qd, plus: vec![&qd, &s10], minus: vec![&rho1] };
    let coercivity =
        coercivity_sample(&basis, &k, &CutoffPhi::new(vc.coercivity_a)?, &quad, vc.coercivity_samples, cfg.seed)?;
    checks.push(Check::above("coercivity_c0", coercivity.c0, 0.0));

    let v = GridFunction::from_real_fn(q.grid(), |x| (-x * x).exp());
    let (lp, _) = localized_forms(&v, &q, &k, &CutoffPhi::new(vc.consistency_a)?, &quad)?;
    let g = q.grid();
    let pot: f64 =
        (0..g.size()).map(|j| k.k(g.x(j)) * q.values()[j].re.powi(2) * v.values()[j].re.powi(2)).sum::<f64>() * g.dx();
    let direct = halfnorm_sq(&v) + v.norm_sq() - 3.0 * pot;
    let consistency_relerr = ((lp - direct) / direct).abs();
    checks.push(Check::below("large_a_consistency", consistency_relerr, 0.01));

    Ok(VirialReport {
        version: version_tag(),
        identity,
        convexity_min,
        biharmonic,
        biharmonic_halving,
        coercivity,
        consistency_relerr,
        checks,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundStateSummary {
    pub grid: GridSpec,
    pub residual_norm: f64,
    pub mass: f64,
    pub solver_report: SolverReport,
    pub flow_report: SolverReport,
    pub checks: Vec<Check>,
}

/// Petviashvili solution certified against the independent descent solver.
pub fn ground_state_certificate(grid: &SpectralGrid) -> Result<(GroundState, GroundStateSummary)> {
    let gs = solve_petviashvili(grid, &PetviashviliConfig::default())?;
    let (flow, _) = solve_gradient_flow(grid, &GradientFlowConfig::default())?;
    let mq = gs.mass;
    let checks = vec![
        Check::below("residual_sup", gs.residual_norm, 1e-9),
        Check::below("dual_solver_l2", (&gs.q - &flow.q).norm(), 1e-6),
        Check::below("lambda_q_q_over_mass", dot(&gs.lambda_q, &gs.q).abs() / mq, 1e-8),
        Check::below("pohozaev_relative", gs.pohozaev_defect(), 1e-6),
    ];
    let summary = GroundStateSummary {
        grid: GridSpec::new(grid.half_width(), grid.size()),
        residual_norm: gs.residual_norm,
        mass: mq,
        solver_report: gs.report.clone(),
        flow_report: flow.report.clone(),
        checks,
    };
    Ok((gs, summary))
}
