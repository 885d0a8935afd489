use num_complex::Complex64;
use std::sync::OnceLock;

use halfwave::evolution::Snapshot;
use halfwave::experiment::*;
use halfwave::linearized::ProfileCoefficientSet;
use halfwave::modulation::ModulationBasis;
use halfwave::{GridFunction, InhomogeneityProfile, SpectralGrid};

fn coeffs() -> &'static ProfileCoefficientSet {
    static C: OnceLock<ProfileCoefficientSet> = OnceLock::new();
    C.get_or_init(|| {
        build_coefficients(&SpectralGrid::new(128.0, 8192).unwrap(), &InhomogeneityProfile::default(), 1e-1).unwrap()
    })
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("halfwave-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn a0_formula() {
    assert_eq!(a0_of(4.0, 1.0).unwrap(), 2.0);
    assert!((a0_of(0.3, 0.04).unwrap() - (0.3f64 / 0.04).sqrt()).abs() < 1e-15);
    assert!(a0_of(1.0, 0.0).is_err());
    assert!(a0_of(1.0, -1.0).is_err());
}

#[test]
fn default_config_is_valid() {
    let c = ExperimentConfig::default();
    c.validate().unwrap();
    assert_eq!(c.grid, GridSpec::new(5.0, 32768));
    assert_eq!(c.seed, 7);
    assert_eq!(c.virial.biharmonic_a, vec![25.0, 50.0, 100.0]);
}

#[test]
fn partial_json_keeps_nested_defaults() {
    let c = ExperimentConfig::from_partial_json(r#"{"run": {"c_dt": 0.1, "stop": {"t_end": -0.5}}, "k": "homogeneous"}"#).unwrap();
    let d = ExperimentConfig::default();
    assert_eq!(c.run.c_dt, 0.1);
    assert_eq!(c.run.stop.t_end, -0.5);
    assert_eq!(c.run.sampling.snapshot_ds, d.run.sampling.snapshot_ds);
    assert_eq!(c.run.step.scheme, d.run.step.scheme);
    assert_eq!(c.virial.quadrature_nodes, 80);
    assert!(c.inhomogeneity().unwrap().is_homogeneous());
    assert!(ExperimentConfig::from_partial_json("{").is_err());
    assert!(ExperimentConfig::from_partial_json(r#"{"e0": "big"}"#).is_err());
}

#[test]
fn config_round_trips_through_json() {
    let c = ExperimentConfig::default();
    let s = serde_json::to_string(&c).unwrap();
    let back = ExperimentConfig::from_partial_json(&s).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), s);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["grid"]["L"], 5.0);
    assert_eq!(v["grid"]["N"], 32768);
}

#[test]
fn validation_rejects_bad_settings() {
    let patch = |s: &str| ExperimentConfig::from_partial_json(s).unwrap().validate();
    assert!(patch(r#"{"e0": 0.0}"#).is_err());
    assert!(patch(r#"{"t1": 0.5}"#).is_err());
    assert!(patch(r#"{"t1": -1.0, "run": {"stop": {"t_end": -2.0}}}"#).is_err());
    assert!(patch(r#"{"run": {"stop": {"t_end": 0.5}}}"#).is_err());
    assert!(patch(r#"{"shrink": 0.5}"#).is_err());
    assert!(patch(r#"{"shrink": 0.0}"#).is_ok());
    assert!(patch(r#"{"run": {"c_dt": 0.0}}"#).is_err());
    assert!(patch(r#"{"grid": {"L": -1.0, "N": 64}}"#).is_err());
    assert!(patch(r#"{"k": "nonsense"}"#).is_err());
}

#[test]
fn grid_spec_parsing() {
    assert_eq!(GridSpec::parse("5,1024").unwrap(), GridSpec::new(5.0, 1024));
    assert_eq!(GridSpec::parse(" 2.5 , 64 ").unwrap(), GridSpec::new(2.5, 64));
    for bad in ["5;1024", "x,64", "5,y", "5,7", "-1,64", ""] {
        assert!(GridSpec::parse(bad).is_err(), "{bad}");
    }
    assert_eq!(GridSpec::new(3.0, 32).build().unwrap().dx(), 6.0 / 32.0);
}

#[test]
fn check_helpers() {
    assert!(Check::below("a", 1.0, 2.0).pass);
    assert!(!Check::below("a", 2.0, 2.0).pass);
    assert!(Check::above("a", 3.0, 2.0).pass);
    assert!(!Check::above("a", f64::NAN, 2.0).pass);
    assert!(Check::within("a", 2.0, 2.0, 3.0).pass);
    assert!(!Check::within("a", 3.5, 2.0, 3.0).pass);
    assert!(Check::exact("a", 0.0, 0.0).pass);
    assert!(!Check::exact("a", 1e-300, 0.0).pass);
    assert!(all_pass(&[Check::below("a", 0.0, 1.0), Check::exact("b", 1.0, 1.0)]));
    assert!(!all_pass(&[Check::below("a", 0.0, 1.0), Check::exact("b", 1.0, 2.0)]));
    assert!(all_pass(&[]));
    let c = Check::within("lambda_exponent", 2.01, 1.9, 2.1);
    assert_eq!(c.bound, "in [1.9, 2.1]");
}

#[test]
fn provenance_records_settings() {
    let p = Provenance::of(&ExperimentConfig::default());
    assert_eq!(p.seed, 7);
    assert_eq!(p.tolerances.c_dt, 0.5);
    assert_eq!(p.coeff_grid, GridSpec::new(512.0, 32768));
    assert!(!p.version.is_empty());
}

const E0: f64 = 0.04;

fn initial(t1: f64, opts: &InitialDataOptions, gamma0: f64) -> InitialData {
    let basis = ModulationBasis::new(coeffs());
    let xg = SpectralGrid::new(1.0, 32768).unwrap();
    build_initial_data(&basis, &InhomogeneityProfile::default(), &xg, E0, t1, gamma0, opts).unwrap()
}

#[test]
fn initial_data_follows_scaling_law() {
    let c = coeffs();
    let opts = InitialDataOptions::default();
    let mq = c.q.norm_sq();
    let mut prev: Option<f64> = None;
    for t1 in [-0.4, -0.2, -0.1] {
        let d = initial(t1, &opts, 0.0);
        let a0 = (c.e1 / E0).sqrt();
        assert!((d.a0 - a0).abs() < 1e-15);
        assert!((d.lambda1 - t1 * t1 / (4.0 * a0 * a0)).abs() < 1e-15);
        assert!((d.b1_nominal - d.lambda1.sqrt() / a0).abs() < 1e-15);
        assert_eq!(d.b1, d.b1_nominal);
        let dev = (d.mass - mq).abs() / mq;
        if let Some(p) = prev {
            // at least O(lambda1) = O(t1^2)
            assert!(p / dev > 3.5, "mass deviation {dev} after {p}");
        }
        prev = Some(dev);
    }
}

#[test]
fn initial_data_matching_options() {
    let opts = InitialDataOptions { renormalize_mass: true, match_energy: true, max_mapped_dx: 0.1 };
    let d = initial(-0.2, &opts, 0.0);
    assert!((d.mass - coeffs().q.norm_sq()).abs() < 1e-12 * d.mass);
    assert!((d.energy - E0).abs() < 1e-10 * E0);
    // energy matching only corrects the grid offsets, so b1 stays of the nominal order
    let r = d.b1 / d.b1_nominal;
    assert!(r > 0.5 && r < 2.0, "{r}");
}

#[test]
fn initial_phase_is_a_gauge() {
    let opts = InitialDataOptions::default();
    let a = initial(-0.2, &opts, 0.0);
    let b = initial(-0.2, &opts, 1.3);
    let r = Complex64::from_polar(1.0, 1.3);
    assert!((&b.u - &a.u.map(|v| v * r)).max_abs() < 1e-12 * a.u.max_abs());
    assert!((a.energy - b.energy).abs() < 1e-12);
}

#[test]
fn unresolved_initial_scale_suggests_grid() {
    let basis = ModulationBasis::new(coeffs());
    let xg = SpectralGrid::new(10.0, 256).unwrap();
    let e = build_initial_data(&basis, &InhomogeneityProfile::default(), &xg, 1.0, -0.2, 0.0, &InitialDataOptions::default())
        .unwrap_err()
        .to_string();
    assert!(e.contains("use N >="), "{e}");
    assert!(build_initial_data(&basis, &InhomogeneityProfile::default(), &xg, 1.0, 0.2, 0.0, &InitialDataOptions::default()).is_err());
}

#[test]
fn snapshots_round_trip_through_disk() {
    let g = SpectralGrid::new(3.0, 64).unwrap();
    let snaps: Vec<Snapshot> = (0..3)
        .map(|i| Snapshot {
            t: -1.0 + 0.25 * i as f64,
            lambda_est: 0.1 / (i + 1) as f64,
            u: GridFunction::from_fn(&g, |x| Complex64::new(x.cos() * i as f64, x.sin())),
        })
        .collect();
    let dir = scratch("snaps");
    write_snapshots(&dir, &snaps).unwrap();
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("snap_00002.json").exists());
    let back = read_snapshots(&dir).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in snaps.iter().zip(&back) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.lambda_est, b.lambda_est);
        assert_eq!(a.u.values(), b.u.values());
    }
    assert!(read_snapshots(&dir.join("missing")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn trivial_suite_is_exact() {
    let checks = trivial_checks(7).unwrap();
    assert_eq!(checks.len(), 8);
    for c in &checks {
        assert!(c.pass, "{c:?}");
    }
}
