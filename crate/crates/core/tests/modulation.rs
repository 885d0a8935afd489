use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

use halfwave::ground_state::{solve_petviashvili, PetviashviliConfig};
use halfwave::linearized::{self, assemble, build_profile_coefficients, BuildOptions, LinearizedPair, ProfileCoefficientSet};
use halfwave::modulation::*;
use halfwave::profile::assemble_profile;
use halfwave::{GridFunction, InhomogeneityProfile, SpectralGrid};

struct Setup {
    pair: LinearizedPair,
    coeffs: ProfileCoefficientSet,
    basis: ModulationBasis,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let g = SpectralGrid::new(32.0, 2048).unwrap();
        let pair = assemble(&solve_petviashvili(&g, &PetviashviliConfig::default()).unwrap()).unwrap();
        let opts = BuildOptions { solvability_tol: 1e-1, ..Default::default() };
        let coeffs = build_profile_coefficients(&pair, &InhomogeneityProfile::default(), &opts).unwrap();
        let basis = ModulationBasis::new(&coeffs);
        Setup { pair, coeffs, basis }
    })
}

fn xgrid() -> SpectralGrid {
    SpectralGrid::new(4.0, 2048).unwrap()
}

#[test]
fn synthesized_profile_decomposes_exactly() {
    let s = setup();
    let xg = xgrid();
    let (b, l, g) = (0.08, 0.06, 2.5);
    let u = synthesize(&s.basis, &xg, b, l, g).unwrap();
    let st = decompose(&u, &s.basis, (0.07, 0.065, 2.3), &DecomposeOptions::default()).unwrap();
    assert!((st.b - b).abs() < 1e-10, "b = {}", st.b);
    assert!((st.lambda - l).abs() < 1e-10 * l);
    assert!((st.gamma_wrapped() - g).abs() < 1e-10);
    assert!(st.eps.norm() < 1e-8);
    assert!(st.ortho_residuals.iter().all(|r| r.abs() < 1e-9));
}

#[test]
fn decomposition_recovers_phase_modulo_two_pi() {
    let s = setup();
    let xg = xgrid();
    let u = synthesize(&s.basis, &xg, 0.05, 0.05, -3.0).unwrap();
    let st = decompose(&u, &s.basis, (0.05, 0.05, -3.0 + 2.0 * PI), &DecomposeOptions::default()).unwrap();
    assert!((wrap_angle(st.gamma) - wrap_angle(-3.0)).abs() < 1e-10);
}

#[test]
fn unresolved_scale_is_reported() {
    let s = setup();
    let xg = xgrid();
    let u = synthesize(&s.basis, &xg, 0.05, 0.05, 0.0).unwrap();
    assert!(decompose(&u, &s.basis, (0.05, 1e-4, 0.0), &DecomposeOptions::default()).is_err());
    assert!(s.basis.sample(&xg, 0.0).is_err());
    assert!(s.basis.sample(&xg, f64::NAN).is_err());
}

#[test]
fn sampled_profile_matches_direct_assembly() {
    // lambda = 1 maps the coefficient grid onto itself; only the endpoint -L is cut
    let s = setup();
    let m = s.basis.sample(&s.coeffs.grid, 1.0).unwrap();
    let p = halfwave::profile::ProfileParams::new(0.1, 1.0);
    let direct = halfwave::profile::assemble_profile_with(&s.coeffs, p, f64::INFINITY).unwrap();
    let mapped = m.profile(0.1);
    assert_eq!(mapped.qp.values()[0].norm(), 0.0);
    for j in 1..m.grid.size() {
        assert!((mapped.qp.values()[j] - direct.qp.values()[j]).norm() < 1e-12);
        assert!((mapped.d_b.values()[j] - direct.d_b.values()[j]).norm() < 1e-12);
    }
}

#[test]
fn deformed_operator_reduces_to_l_plus_at_origin() {
    let s = setup();
    let prof = assemble_profile(&s.coeffs, halfwave::profile::ProfileParams::new(0.0, 0.0)).unwrap();
    let g = s.coeffs.grid.clone();
    let f = GridFunction::from_real_fn(&g, |x| (-(x - 0.3).powi(2)).exp());
    let k = InhomogeneityProfile::default();
    let mp = apply_m(&f, &prof, &k, 0.0, Which::Plus).unwrap();
    let lp = s.pair.apply(linearized::Which::Plus, &f);
    assert!((&mp - &lp).max_abs() < 1e-12);
    let mm = apply_m(&f.scale_c(num_complex::Complex64::i()), &prof, &k, 0.0, Which::Minus).unwrap();
    let lm = s.pair.apply(linearized::Which::Minus, &f);
    assert!((&mm - &lm).max_abs() < 1e-12);
}

#[test]
fn rho_pair() {
    let s = setup();
    let (r1, r2) = compute_rho(&s.coeffs, 0.3);
    assert_eq!(r1.values(), s.coeffs.rho1.values());
    assert!((&r2 - &s.coeffs.rho2_hat.scale(0.3)).max_abs() == 0.0);
}

/// Exact solution of `b_s = -b^2/2`, `lambda_s/lambda = -b`, `gamma_s = 1`.
fn ode(s: f64, s0: f64, c: f64) -> (f64, f64, f64) {
    (2.0 / (s + s0), c / (s + s0).powi(2), s)
}

fn blank(t: f64, s: f64, b: f64, lambda: f64, gamma: f64) -> ModRecord {
    ModRecord {
        t,
        s,
        b,
        lambda,
        gamma,
        ortho_max: 0.0,
        eps_l2: 0.0,
        eps_h_half: 0.0,
        eps_d_half_delta: 0.0,
        mod_b: None,
        mod_gamma: None,
        mod_lambda: None,
        error: None,
    }
}

#[test]
fn mod_vanishes_on_exact_law() {
    let (s0, c) = (20.0, 10.0);
    let mut recs: Vec<ModRecord> = (0..200)
        .map(|i| {
            let s = i as f64 * 0.05 + 0.002 * (i as f64 * 1.7).sin();
            let (b, l, g) = ode(s, s0, c);
            blank(0.0, s, b, l, g)
        })
        .collect();
    recs[57].error = Some("skip".into());
    fill_mod(&mut recs);
    assert!(recs[0].mod_b.is_none() && recs[199].mod_b.is_none() && recs[57].mod_b.is_none());
    for r in &recs[1..199] {
        if r.error.is_some() {
            continue;
        }
        assert!(r.mod_b.unwrap().abs() < 1e-6);
        assert!(r.mod_gamma.unwrap().abs() < 1e-12);
        assert!(r.mod_lambda.unwrap().abs() < 1e-5);
    }
}

#[test]
fn tracking_follows_synthetic_trajectory() {
    let s = setup();
    let xg = xgrid();
    let (s0, c) = (40.0, 64.0);
    // t(s) = -c/(s+s0) up to a constant
    let snaps: Vec<(f64, GridFunction)> = (0..12)
        .map(|i| {
            let sv = i as f64 * 0.5;
            let (b, l, g) = ode(sv, s0, c);
            (-c / (sv + s0), synthesize(&s.basis, &xg, b, l, g).unwrap())
        })
        .collect();
    let (b0, l0, g0) = ode(0.0, s0, c);
    let tr = track(&snaps, &s.basis, (b0 * 0.9, l0 * 1.05, g0 + 0.1), &DecomposeOptions::default());
    assert_eq!(tr.converged().count(), 12);
    for (i, r) in tr.records.iter().enumerate() {
        let (b, l, g) = ode(i as f64 * 0.5, s0, c);
        assert!((r.b - b).abs() < 1e-9 && (r.lambda / l - 1.0).abs() < 1e-9 && (r.gamma - g).abs() < 1e-9);
        // trapezoid rule on 1/lambda is exact up to O(h^2)
        assert!((r.s - i as f64 * 0.5).abs() < 1e-3);
    }
    for r in &tr.records[1..11] {
        assert!(r.mod_b.unwrap().abs() < 1e-4, "{:?}", r.mod_b);
        assert!(r.mod_lambda.unwrap().abs() < 1e-3);
        assert!(r.mod_gamma.unwrap().abs() < 1e-3);
    }
    let csv = tr.to_csv();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("t,s,b,lambda,gamma"));
}

proptest! {
    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -1e4..1e4f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let n = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - 2.0 * PI * n).abs() < 1e-9);
    }

    #[test]
    fn unwrap_picks_nearest_branch(a in -PI..PI, target in -100.0..100.0f64) {
        let u = unwrap_near(a, target);
        prop_assert!((u - target).abs() <= PI + 1e-12);
        prop_assert!((wrap_angle(u) - wrap_angle(a)).abs() < 1e-9 || (wrap_angle(u) - wrap_angle(a)).abs() > 2.0 * PI - 1e-9);
    }
}
