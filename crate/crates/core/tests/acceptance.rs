//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Grids: the certificate, algebra and expansion checks use `L = 8192, N = 2^19` so that torus
//! corrections of order `1/L^2` sit below the tolerances; the dense spectrum uses `L = 32, N = 2^11`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use halfwave::experiment::{
    build_coefficients, ground_state_certificate, run_blowup_experiment, run_virial_check, Check, ExperimentConfig,
    GridSpec,
};
use halfwave::ground_state::{solve_petviashvili, GroundState, PetviashviliConfig};
use halfwave::linearized::{assemble, build_profile_coefficients, BuildOptions, LinearizedPair, ProfileCoefficientSet, Which};
use halfwave::modulation::{decompose, synthesize, DecomposeOptions, ModulationBasis};
use halfwave::profile::{assemble_profile_with, geometric_ladder, scan, ProfileParams};
use halfwave::virial::{certify_quadrature, ResolventQuadrature};
use halfwave::{GridFunction, InhomogeneityProfile, SpectralGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[Check], elapsed: Duration, limit: Option<Duration>) -> Outcome {
    let mut pass = checks.iter().all(|c| c.pass);
    let mut parts: Vec<String> =
        checks.iter().map(|c| format!("{}={:.4e}{}", c.name, c.value, if c.pass { "" } else { "(!)" })).collect();
    if let Some(l) = limit {
        pass &= elapsed <= l;
        parts.push(format!("runtime={:.1}s/{}s", elapsed.as_secs_f64(), l.as_secs()));
    } else {
        parts.push(format!("runtime={:.1}s", elapsed.as_secs_f64()));
    }
    Outcome { pass, detail: parts.join(" ") }
}

fn big_grid() -> SpectralGrid {
    SpectralGrid::new(8192.0, 1 << 19).unwrap()
}

fn criterion1() -> (Outcome, GroundState) {
    let t = Instant::now();
    let (gs, summary) = ground_state_certificate(&big_grid()).expect("ground state");
    (outcome(&summary.checks, t.elapsed(), Some(Duration::from_secs(120))), gs)
}

fn criterion2(gs: &GroundState) -> (Outcome, LinearizedPair) {
    let t = Instant::now();
    let pair = assemble(gs).expect("kernel certificates");
    let c = &pair.certificates;
    let small = solve_petviashvili(&SpectralGrid::new(32.0, 2048).unwrap(), &PetviashviliConfig::default()).unwrap();
    let dense = assemble(&small).expect("dense grid certificates");
    let plus = dense.lowest_spectrum(Which::Plus, 3).unwrap();
    let negatives = plus.iter().filter(|(v, _)| *v < -1e-8).count();
    let coeffs =
        build_profile_coefficients(&pair, &InhomogeneityProfile::homogeneous(), &BuildOptions::default()).unwrap();
    let checks = vec![
        Check::below("L-Q", c.minus, 1e-6),
        Check::below("L+Q'", c.plus, 1e-6),
        Check::below("L+LambdaQ+Q", c.lambda_identity, 1e-5),
        Check::exact("negative_eigenvalues_L+", negatives as f64, 1.0),
        Check::above("e1", coeffs.e1, 0.0),
    ];
    (outcome(&checks, t.elapsed(), Some(Duration::from_secs(300))), pair)
}

fn criterion3(c: &ProfileCoefficientSet) -> Outcome {
    let t = Instant::now();
    let mut checks = vec![Check::below("mass_relation", c.mass_relation_defect(), 1e-6)];
    for (name, v) in &c.solvability_residuals {
        checks.push(Check::below(&format!("solvability_{name}"), *v, 1e-6));
    }
    // With the profile equations as set up here the overlap carries a minus sign: (Q, rho1) = -2 e1.
    let two_e1 = 2.0 * c.e1;
    checks.push(Check::below("q_rho1_plus_2e1_rel", (c.q_rho1() + two_e1).abs() / two_e1, 1e-6));
    outcome(&checks, t.elapsed(), None)
}

fn criterion4() -> Outcome {
    let t = Instant::now();
    let k = InhomogeneityProfile::default();
    let c = build_coefficients(&SpectralGrid::new(512.0, 32768).unwrap(), &k, 1e-4).unwrap();
    let bs = geometric_ladder(0.02, 0.2, 10);
    let rows = scan(&c, &k, &bs, |b| b * b).unwrap();
    let fit = halfwave::fit::power_fit(&bs, &rows.iter().map(|r| r.phi_l2).collect::<Vec<_>>());
    let ratios: Vec<f64> = rows.iter().map(|r| r.weighted_grad_sup / r.b.powi(5)).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let checks = vec![
        Check::within("residual_slope", fit.slope, 4.6, 5.4),
        Check::below("weighted_bound_ratio_spread", hi / lo, 2.0),
    ];
    outcome(&checks, t.elapsed(), None)
}

fn criterion5(c: &ProfileCoefficientSet) -> Outcome {
    let t = Instant::now();
    let k = InhomogeneityProfile::default();
    let mq = c.q.norm_sq();
    let mut mass_ratios = Vec::new();
    for b in geometric_ladder(0.02, 0.2, 4) {
        for lambda in geometric_ladder(4e-4, 4e-2, 4) {
            let prof = assemble_profile_with(c, ProfileParams::new(b, lambda), f64::INFINITY).unwrap();
            mass_ratios.push((prof.qp.norm_sq() - mq).abs() / (b.powi(4) + lambda * lambda));
        }
    }
    let mut sorted = mass_ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let bs = geometric_ladder(0.02, 0.2, 10);
    let rows = scan(c, &k, &bs, |b| b * b * b).unwrap();
    let energy_ratio: Vec<f64> = rows.iter().map(|r| r.energy / (r.b * r.b * c.e1)).collect();
    let checks = vec![
        Check::below("mass_ratio_max_over_median", sorted[sorted.len() - 1] / median, 3.0),
        Check::below("energy_over_b2e1_at_0.02", (energy_ratio[0] - 1.0).abs(), 0.02),
        Check::below("energy_ratio_improves", (energy_ratio[0] - 1.0).abs() - (energy_ratio[9] - 1.0).abs(), 0.0),
    ];
    outcome(&checks, t.elapsed(), None)
}

fn criterion6() -> Outcome {
    let t = Instant::now();
    let q = solve_petviashvili(&SpectralGrid::new(256.0, 4096).unwrap(), &PetviashviliConfig::default()).unwrap().q;
    let checks: Vec<Check> = certify_quadrature(&q, &ResolventQuadrature::default())
        .into_iter()
        .map(|(n, r)| Check::below(&n, r.relerr, 1e-6))
        .collect();
    outcome(&checks, t.elapsed(), Some(Duration::from_secs(60)))
}

fn criterion7() -> Outcome {
    let t = Instant::now();
    let r = run_virial_check(&ExperimentConfig::default()).unwrap();
    let checks: Vec<Check> =
        r.checks.into_iter().filter(|c| c.name.starts_with("biharmonic") || c.name.starts_with("coercivity")).collect();
    outcome(&checks, t.elapsed(), None)
}

fn criterion8() -> Outcome {
    let t = Instant::now();
    let xg = SpectralGrid::new(16.0, 8192).unwrap();
    let o = DecomposeOptions::default();
    let (b, l, g) = (0.1, 0.05, 0.7);
    let pert = |x: f64, mu: f64| {
        let y = x / mu;
        Complex64::new(1e-3 * (-(y / 0.1).powi(2)).exp(), 4e-4 * (-(y / 0.2).powi(2)).exp() * (1.0 + y / 0.3))
            * mu.powf(-0.5)
    };
    let mut checks = Vec::new();
    for name in ["homogeneous", "default"] {
        let k = InhomogeneityProfile::parse(name).unwrap();
        let c = build_coefficients(&SpectralGrid::new(512.0, 32768).unwrap(), &k, 1e-4).unwrap();
        let basis = ModulationBasis::new(&c);
        let u = synthesize(&basis, &xg, b, l, g).unwrap();
        let s = decompose(&u, &basis, (0.08, 0.055, 0.6), &o).unwrap();
        let err = (s.b - b).abs().max((s.lambda - l).abs()).max((s.gamma - g).abs());
        checks.push(Check::below(&format!("roundtrip_{name}"), err, 1e-9));
        let u1 = &u + &GridFunction::from_fn(&xg, |x| pert(x, 1.0));
        let s1 = decompose(&u1, &basis, (b, l, g), &o).unwrap();
        let th = 0.3;
        let sg = decompose(&u1.scale_c(Complex64::from_polar(1.0, th)), &basis, (b, l, g + th), &o).unwrap();
        let gauge = (sg.b - s1.b).abs().max((sg.lambda - s1.lambda).abs()).max((sg.gamma - th - s1.gamma).abs());
        checks.push(Check::below(&format!("gauge_{name}"), gauge, 1e-8));
        // Scaling is a symmetry only for k = 1; the inhomogeneous profile depends on lambda.
        if k.is_homogeneous() {
            let mut worst = 0.0f64;
            for mu in [0.8, 1.3] {
                let um = &synthesize(&basis, &xg, b, l * mu, g).unwrap() + &GridFunction::from_fn(&xg, |x| pert(x, mu));
                let sm = decompose(&um, &basis, (b, l * mu, g), &o).unwrap();
                worst = worst
                    .max((sm.b - s1.b).abs())
                    .max((sm.lambda / mu - s1.lambda).abs())
                    .max((sm.gamma - s1.gamma).abs());
            }
            checks.push(Check::below("scaling_homogeneous", worst, 1e-8));
        }
    }
    outcome(&checks, t.elapsed(), None)
}

fn dynamics(k: &str, names: &[&str], limit: Option<Duration>) -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig { k: k.into(), ..ExperimentConfig::default() };
    let o = run_blowup_experiment(&cfg).unwrap();
    let checks: Vec<Check> = o.report.checks().into_iter().filter(|c| names.contains(&c.name.as_str())).collect();
    let mut out = outcome(&checks, t.elapsed(), limit);
    if let Some(w) = &o.report.window {
        out.detail.push_str(&format!(" window=[{:.4},{:.4}] lambda/{:.1}", w.t_start, w.t_end, w.shrink_reached));
    }
    out
}

fn criterion11() -> Outcome {
    let t = Instant::now();
    let mut cfg = ExperimentConfig {
        grid: GridSpec::new(5.0, 8192),
        shrink: 3.0,
        ..ExperimentConfig::default()
    };
    cfg.run.c_dt = 0.1;
    cfg.run.step.scheme = halfwave::evolution::Scheme::Strang;
    let a = run_blowup_experiment(&cfg).unwrap();
    let b = run_blowup_experiment(&cfg).unwrap();
    let same_series = a.series.to_csv() == b.series.to_csv();
    let same_track = a.track.to_csv() == b.track.to_csv();
    let checks = vec![
        Check::exact("series_csv_differs", if same_series { 0.0 } else { 1.0 }, 0.0),
        Check::exact("modulation_csv_differs", if same_track { 0.0 } else { 1.0 }, 0.0),
    ];
    outcome(&checks, t.elapsed(), None)
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    let (o1, gs) = criterion1();
    report(1, o1);
    let (o2, pair) = criterion2(&gs);
    report(2, o2);
    let coeffs = build_profile_coefficients(&pair, &InhomogeneityProfile::default(), &BuildOptions::default()).unwrap();
    report(3, criterion3(&coeffs));
    report(4, criterion4());
    report(5, criterion5(&coeffs));
    drop((pair, coeffs, gs));
    report(6, criterion6());
    report(7, criterion7());
    report(8, criterion8());
    report(
        9,
        dynamics("homogeneous", &["lambda_exponent", "rate_variation", "mass_drift", "partial"], Some(Duration::from_secs(1800))),
    );
    report(10, dynamics("default", &["lambda_star_4a0sq", "b_ratio_deviation", "size_bound_spread", "partial"], None));
    report(11, criterion11());
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
