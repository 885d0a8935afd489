use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use halfwave::ground_state::{solve_petviashvili, PetviashviliConfig};
use halfwave::spectral::{dot, halfnorm_sq};
use halfwave::virial::*;
use halfwave::{GridFunction, InhomogeneityProfile, SpectralGrid};

fn phi() -> CutoffPhi {
    CutoffPhi::new(1.0).unwrap()
}

#[test]
fn cutoff_pieces() {
    let p = phi();
    for x in [0.0, 0.3, 0.99] {
        assert!((p.deriv(x, 1) - x).abs() < 1e-15);
        assert!((p.phi(x) - 0.5 * x * x).abs() < 1e-15);
        assert_eq!(p.laplacian(x), 1.0);
    }
    for x in [2.0, 3.5, 10.0] {
        assert!((p.deriv(x, 1) - (3.0 - (-x).exp())).abs() < 1e-14);
        assert!((p.deriv(x, 2) - (-x).exp()).abs() < 1e-14);
    }
}

#[test]
fn cutoff_joins_smoothly() {
    let p = phi();
    let h = 1e-9;
    for x0 in [1.0, 2.0] {
        for n in 1..=3 {
            let (l, r) = (p.deriv(x0 - h, n), p.deriv(x0 + h, n));
            assert!((l - r).abs() < 1e-7, "phi^({n}) jumps at {x0}: {l} vs {r}");
        }
    }
    for x0 in [1.0, 2.0] {
        assert!((p.phi(x0 - h) - p.phi(x0 + h)).abs() < 1e-8);
    }
}

#[test]
fn cutoff_derivatives_match_differences() {
    let p = phi();
    let h = 1e-5;
    for x in [0.5, 1.2, 1.5, 1.8, 2.7, -1.4] {
        assert!(((p.phi(x + h) - p.phi(x - h)) / (2.0 * h) - p.deriv(x, 1)).abs() < 1e-8);
        for n in 1..4 {
            let fd = (p.deriv(x + h, n) - p.deriv(x - h, n)) / (2.0 * h);
            assert!((fd - p.deriv(x, n + 1)).abs() < 1e-7, "n = {n}, x = {x}");
        }
    }
}

#[test]
fn rescaled_cutoff() {
    let a = 7.0;
    let p = CutoffPhi::new(a).unwrap();
    let big = |x: f64| a * a * p.phi(x / a);
    let h = 1e-3;
    for x in [3.0, 9.0, 15.0] {
        assert!(((big(x + h) - big(x - h)) / (2.0 * h) - p.grad_a(x)).abs() < 1e-6);
        assert!(((big(x + h) - 2.0 * big(x) + big(x - h)) / (h * h) - p.lap_a(x)).abs() < 1e-4);
        assert!((p.bilap_a(x) - p.bilaplacian(x / a) / (a * a)).abs() < 1e-15);
    }
    assert!(p.certify_convexity(3000).unwrap() >= 0.0);
    assert!(CutoffPhi::new(0.0).is_err());
    assert!(CutoffPhi::new(f64::INFINITY).is_err());
}

#[test]
fn resolvent_weight_integral() {
    // int_0^inf sqrt(s) / (1+s)^2 ds = pi/2
    let q = ResolventQuadrature::default();
    assert_eq!(q.count(), 80);
    assert!((q.integrate(|s| 1.0 / (1.0 + s).powi(2)) - PI / 2.0).abs() < 1e-10);
    // int_0^inf sqrt(s) / (xi^2+s)^2 ds = pi / (2 xi)
    for xi in [0.5, 3.0, 20.0] {
        let v = q.integrate(|s| 1.0 / (xi * xi + s).powi(2));
        assert!((v - PI / (2.0 * xi)).abs() < 1e-6 * PI / (2.0 * xi), "xi = {xi}");
    }
}

#[test]
fn resolvent_inverts_shifted_laplacian() {
    let g = SpectralGrid::new(20.0, 512).unwrap();
    let u = GridFunction::from_real_fn(&g, |x| (-x * x).exp());
    let s = 2.0;
    let us = resolvent_smooth(&u, s).unwrap();
    let d2 = halfwave::spectral::derivative(&halfwave::spectral::derivative(&us));
    let back = us.scale(s).axpy(-1.0, &d2);
    assert!((&back - &u.scale((2.0 / PI).sqrt())).max_abs() < 1e-12);
    assert!(resolvent_smooth(&u, 0.0).is_err());
    assert!(resolvent_smooth(&u, -1.0).is_err());
}

#[test]
fn half_derivative_identity() {
    let g = SpectralGrid::new(30.0, 2048).unwrap();
    let q = ResolventQuadrature::default();
    for f in [
        GridFunction::from_real_fn(&g, |x| (-x * x).exp()),
        GridFunction::from_fn(&g, |x| Complex64::from_polar(1.0 / x.cosh(), x)),
    ] {
        let c = halfnorm_identity(&f, &q);
        assert!(c.relerr < 1e-6, "{c:?}");
        assert_eq!(c.rhs, halfnorm_sq(&f));
    }
}

#[test]
fn fractional_identities() {
    let g = SpectralGrid::new(30.0, 2048).unwrap();
    let f = GridFunction::from_real_fn(&g, |x| (-x * x / 2.0).exp());
    let q = ResolventQuadrature::default();
    for alpha in [0.5, 0.75, 1.0, 1.5] {
        let c = fractional_identity(&f, alpha, &q);
        assert!(c.relerr < 1e-6, "alpha = {alpha}: {c:?}");
    }
}

#[test]
fn quadrature_certificate_on_ground_state() {
    let g = SpectralGrid::new(40.0, 4096).unwrap();
    let gs = solve_petviashvili(&g, &PetviashviliConfig::default()).unwrap();
    let out = certify_quadrature(&gs.q, &ResolventQuadrature::default());
    let names: Vec<&str> = out.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["gaussian", "sech", "lorentzian_sq", "chirped_gaussian", "ground_state"]);
    for (n, c) in &out {
        assert!(c.relerr < 1e-6, "{n}: {c:?}");
    }
}

#[test]
fn ja_vanishes_at_zero() {
    let g = SpectralGrid::new(10.0, 256).unwrap();
    let q = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
    let z = GridFunction::zeros(&g);
    let j = evaluate_ja(&z, &q, 0.3, 0.1, &InhomogeneityProfile::default(), &CutoffPhi::new(5.0).unwrap()).unwrap();
    assert_eq!((j.kinetic, j.mass, j.potential, j.virial, j.total), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert!(evaluate_ja(&z, &q, 0.3, 0.0, &InhomogeneityProfile::default(), &phi()).is_err());
    let other = SpectralGrid::new(10.0, 128).unwrap();
    assert!(evaluate_ja(&GridFunction::zeros(&other), &q, 0.3, 0.1, &InhomogeneityProfile::default(), &phi()).is_err());
}

#[test]
fn ja_is_quadratic_at_leading_order() {
    let g = SpectralGrid::new(10.0, 256).unwrap();
    let q = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
    let h = GridFunction::from_fn(&g, |x| Complex64::new((-x * x).exp(), 0.5 * x * (-x * x).exp()));
    let k = InhomogeneityProfile::default();
    let p = CutoffPhi::new(3.0).unwrap();
    let j = |e: f64| evaluate_ja(&h.scale(e), &q, 0.2, 0.5, &k, &p).unwrap().total;
    let r = j(2e-4) / j(1e-4);
    assert!((r - 4.0).abs() < 1e-3, "{r}");
}

#[test]
fn forms_without_potential_dominate_mass() {
    let g = SpectralGrid::new(20.0, 1024).unwrap();
    let zero = GridFunction::zeros(&g);
    let v = GridFunction::from_fn(&g, |x| Complex64::new(1.0, 1.0) * (-(x - 1.0).powi(2)).exp());
    let (p, m) = localized_forms(&v, &zero, &InhomogeneityProfile::default(), &CutoffPhi::new(4.0).unwrap(), &ResolventQuadrature::default()).unwrap();
    let half = 0.5 * v.norm_sq();
    assert!(p > half && m > half);
    assert!((p - m).abs() < 1e-12);
}

#[test]
fn localized_kinetic_tends_to_half_norm() {
    let g = SpectralGrid::new(40.0, 2048).unwrap();
    let v = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
    let quad = ResolventQuadrature::default();
    let h = halfnorm_sq(&v);
    let gap = |a: f64| (localized_kinetic(&v, &CutoffPhi::new(a).unwrap(), &quad) - h).abs();
    assert!(gap(20.0) < gap(5.0));
    assert!(gap(20.0) < 0.05 * h);
}

#[test]
fn biharmonic_bound_ignores_constants() {
    let g = SpectralGrid::new(20.0, 1024).unwrap();
    let c = GridFunction::from_real_fn(&g, |_| 1.0);
    let p = CutoffPhi::new(3.0).unwrap();
    let quad = ResolventQuadrature::default();
    assert!(biharmonic_bound(&c, &p, &quad).abs() < 1e-8);
    assert_eq!(biharmonic_bound(&GridFunction::zeros(&g), &p, &quad), 0.0);
}

#[test]
fn coercivity_sampling_is_deterministic() {
    let g = SpectralGrid::new(20.0, 1024).unwrap();
    let q = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
    let lq = halfwave::spectral::scaling_generator(&q);
    let basis = CoercivityBasis { q: &q, plus: vec![&q, &lq], minus: vec![&q] };
    let k = InhomogeneityProfile::default();
    let p = CutoffPhi::new(10.0).unwrap();
    let quad = ResolventQuadrature::new(24);
    let a = coercivity_sample(&basis, &k, &p, &quad, 4, 11).unwrap();
    let b = coercivity_sample(&basis, &k, &p, &quad, 4, 11).unwrap();
    assert_eq!(a.c0_plus.to_bits(), b.c0_plus.to_bits());
    assert_eq!(a.c0_minus.to_bits(), b.c0_minus.to_bits());
    assert_eq!(a.c0, a.c0_plus.min(a.c0_minus));
    assert_eq!((a.samples, a.seed, a.a), (4, 11, 10.0));
}

#[test]
fn random_directions_are_even() {
    let g = SpectralGrid::new(10.0, 256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let v = random_even_direction(&g, &mut rng);
        assert!((&v - &v.even_part()).max_abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauss_legendre_is_exact(n in 1usize..30, k in 0usize..60) {
        prop_assume!(k < 2 * n);
        let (x, w) = gauss_legendre(n);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
        let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn cutoff_parity(x in -5.0..5.0f64) {
        let p = phi();
        prop_assert_eq!(p.phi(x), p.phi(-x));
        for n in 1..=4 {
            let s = if n % 2 == 1 { -1.0 } else { 1.0 };
            prop_assert_eq!(p.deriv(-x, n), s * p.deriv(x, n));
        }
        prop_assert!(p.laplacian(x) >= 0.0);
    }

    #[test]
    fn ja_is_phase_invariant(theta in 0.0..6.3f64, b in -0.3..0.3f64, amp in 0.01..0.5f64) {
        let g = SpectralGrid::new(10.0, 256).unwrap();
        let q = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
        let e = GridFunction::from_fn(&g, |x| Complex64::new(amp * (-x * x).exp(), amp * x / (1.0 + x.powi(4))));
        let r = Complex64::from_polar(1.0, theta);
        let k = InhomogeneityProfile::default();
        let p = CutoffPhi::new(2.0).unwrap();
        let a = evaluate_ja(&e, &q, b, 0.3, &k, &p).unwrap();
        let c = evaluate_ja(&e.map(|v| v * r), &q.map(|v| v * r), b, 0.3, &k, &p).unwrap();
        prop_assert!((a.total - c.total).abs() < 1e-12);
    }

    #[test]
    fn projection_is_orthogonal(c in -3.0..3.0f64, w in 0.3..3.0f64) {
        let g = SpectralGrid::new(10.0, 256).unwrap();
        let d1 = GridFunction::from_real_fn(&g, |x| 1.0 / (1.0 + x * x));
        let d2 = GridFunction::from_real_fn(&g, |x| (-x * x).exp());
        let d3 = GridFunction::from_real_fn(&g, |x| x * (-x * x).exp());
        let v = GridFunction::from_real_fn(&g, |x| (-((x - c) / w).powi(2)).exp());
        let out = project_off(&v, &[&d1, &d2, &d3, &d1]);
        for d in [&d1, &d2, &d3] {
            prop_assert!(dot(&out, d).abs() < 1e-11 * d.norm());
        }
        let twice = project_off(&out, &[&d1, &d2, &d3]);
        prop_assert!((&twice - &out).max_abs() < 1e-13);
    }
}
