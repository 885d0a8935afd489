//! `halfwave` command-line entry point.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on configuration,
//! numerical or I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use halfwave::experiment::{
    all_pass, build_coefficients, ground_state_certificate, prepare, read_snapshots, run_blowup_experiment,
    run_property_suites, run_virial_check, simulate, write_snapshots, Check, ExperimentConfig, GridSpec, Provenance,
};
use halfwave::fit::power_fit;
use halfwave::io::{grid_function_csv, version_tag, write_grid_function, write_json, Encoding};
use halfwave::modulation::{track, ModulationBasis};
use halfwave::profile::{geometric_ladder, scan, scan_csv};
use halfwave::{Error, GridFunction};

#[derive(Parser)]
#[command(name = "halfwave", version, about = "Blowup laboratory for the inhomogeneous mass-critical half-wave equation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out/<subcommand>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `L,N` of the grid the subcommand works on.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// `default`, `homogeneous` or `custom:k1=<v>,width=<v>`.
    #[arg(long, global = true)]
    k: Option<String>,
    /// Target energy of the initial data
    #[arg(long, global = true)]
    e0: Option<f64>,
    /// Initial time, negative
    #[arg(long, global = true, allow_hyphen_values = true)]
    t1: Option<f64>,
    /// Seed for sampled directions
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for Q and certify it against the descent solver.
    GroundState,
    /// Profile coefficients and residual scans.
    Profile(ProfileArgs),
    /// Evolve the prepared initial data and store series and snapshots.
    Simulate,
    /// Track modulation parameters through a snapshot directory.
    Modulate(ModulateArgs),
    /// Quadrature identity, biharmonic scaling and coercivity study.
    VirialCheck,
    /// Full blowup experiment with law fits.
    Experiment(ExperimentArgs),
    /// Trivial checks, solvability table and quadrature certification.
    Suite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    /// `lambda = b^2`
    Square,
    /// `lambda = b^3`
    Cube,
}

#[derive(Args)]
struct ProfileArgs {
    /// Write the coefficient bundle.
    #[arg(long)]
    coefficients: bool,
    /// Write the residual scan.
    #[arg(long)]
    scan: bool,
    #[arg(long, default_value_t = 0.02)]
    b_min: f64,
    #[arg(long, default_value_t = 0.2)]
    b_max: f64,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, value_enum, default_value_t = Law::Square)]
    law: Law,
}

#[derive(Args)]
struct ModulateArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    snapshots: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Also store the snapshots.
    #[arg(long)]
    save_snapshots: bool,
}

const GROUND_STATE_GRID: GridSpec = GridSpec::new(8192.0, 524288);

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg: ExperimentConfig = match &c.config {
        Some(p) => ExperimentConfig::from_partial_json(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = &c.k {
        cfg.k = k.clone();
    }
    if let Some(e0) = c.e0 {
        cfg.e0 = e0;
    }
    if let Some(t1) = c.t1 {
        cfg.t1 = t1;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn grid_override(c: &Common) -> Result<Option<GridSpec>, Error> {
    c.grid.as_deref().map(GridSpec::parse).transpose()
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{} {} = {:.6e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    all_pass(checks)
}

fn out_dir(c: &Common, name: &str) -> Result<PathBuf, Error> {
    let dir = c.out.clone().unwrap_or_else(|| Path::new("out").join(name));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn ground_state(c: &Common) -> Result<bool, Error> {
    let grid = grid_override(c)?.unwrap_or(GROUND_STATE_GRID).build()?;
    let dir = out_dir(c, "ground-state")?;
    let (gs, summary) = ground_state_certificate(&grid)?;
    write_grid_function(&dir.join("q.json"), &gs.q, None, Encoding::Base64)?;
    fs::write(dir.join("q.csv"), grid_function_csv(&gs.q))?;
    write_json(&dir.join("ground_state.json"), &json!({ "version": version_tag(), "summary": summary }))?;
    Ok(report_checks(&summary.checks))
}

fn profile(c: &Common, args: &ProfileArgs) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    if let Some(g) = grid_override(c)? {
        cfg.coeff_grid = g;
    }
    let k = cfg.inhomogeneity()?;
    let dir = out_dir(c, "profile")?;
    let coeffs = build_coefficients(&cfg.coeff_grid.build()?, &k, cfg.solvability_tol)?;
    let (both, mut pass) = (!args.coefficients && !args.scan, true);
    if args.coefficients || both {
        let bundle = dir.join("coefficients");
        fs::create_dir_all(&bundle)?;
        let fields: [(&str, &GridFunction); 9] = [
            ("q", &coeffs.q),
            ("lambda_q", &coeffs.lambda_q),
            ("s10", &coeffs.s10),
            ("t20", &coeffs.t20),
            ("t02", &coeffs.t02),
            ("s30", &coeffs.s30),
            ("t40", &coeffs.t40),
            ("rho1", &coeffs.rho1),
            ("rho2_hat", &coeffs.rho2_hat),
        ];
        for (name, f) in fields {
            write_grid_function(&bundle.join(format!("{name}.json")), f, None, Encoding::Base64)?;
        }
        let checks: Vec<Check> = coeffs
            .solvability_residuals
            .iter()
            .map(|(n, v)| Check::below(&format!("solvability_{n}"), *v, cfg.solvability_tol))
            .collect();
        pass &= report_checks(&checks);
        write_json(
            &bundle.join("manifest.json"),
            &json!({
                "version": version_tag(),
                "grid": cfg.coeff_grid,
                "k": k.label(),
                "e1": coeffs.e1,
                "k_second_deriv_at_0": coeffs.k_second_deriv_at_0,
                "t40_rhs": coeffs.t40_rhs,
                "solvability_residuals": coeffs.solvability_residuals,
                "solve_residuals": coeffs.solve_residuals,
                "mass_relation_defect": coeffs.mass_relation_defect(),
                "q_rho1": coeffs.q_rho1(),
                "files": fields.iter().map(|(n, _)| format!("{n}.json")).collect::<Vec<_>>(),
            }),
        )?;
    }
    if args.scan || both {
        let bs = geometric_ladder(args.b_min, args.b_max, args.points);
        let law = args.law;
        let rows = scan(&coeffs, &k, &bs, |b| match law {
            Law::Square => b * b,
            Law::Cube => b * b * b,
        })?;
        fs::write(dir.join("scan.csv"), scan_csv(&rows))?;
        let fit = power_fit(&bs, &rows.iter().map(|r| r.phi_l2).collect::<Vec<_>>());
        println!("residual slope d log||Phi|| / d log b = {:.4}", fit.slope);
        write_json(
            &dir.join("scan.json"),
            &json!({ "version": version_tag(), "grid": cfg.coeff_grid, "k": k.label(), "slope": fit }),
        )?;
    }
    Ok(pass)
}

fn simulate_cmd(c: &Common) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    if let Some(g) = grid_override(c)? {
        cfg.grid = g;
    }
    let dir = out_dir(c, "simulate")?;
    let p = prepare(&cfg)?;
    let series = simulate(&cfg, &p)?;
    fs::write(dir.join("series.csv"), series.to_csv())?;
    write_snapshots(&dir.join("snapshots"), &series.snapshots)?;
    let checks = vec![Check::below("mass_drift", series.mass_drift(), 1e-8)];
    write_json(
        &dir.join("simulate.json"),
        &json!({
            "provenance": Provenance::of(&cfg),
            "config": cfg,
            "a0": p.initial.a0,
            "lambda1": p.initial.lambda1,
            "b1": p.initial.b1,
            "stop": series.stop,
            "final_t": series.final_state.t,
            "steps": series.final_state.step_count,
            "snapshots": series.snapshots.len(),
            "checks": checks,
        }),
    )?;
    println!("stop {:?} at t = {:.6e} after {} steps", series.stop, series.final_state.t, series.final_state.step_count);
    Ok(report_checks(&checks))
}

fn modulate(c: &Common, args: &ModulateArgs) -> Result<bool, Error> {
    let cfg = load_config(c)?;
    let k = cfg.inhomogeneity()?;
    let dir = out_dir(c, "modulate")?;
    let snaps = read_snapshots(&args.snapshots)?;
    let first = snaps.first().ok_or_else(|| Error::Format("no snapshots".into()))?;
    let coeffs = build_coefficients(&cfg.coeff_grid.build()?, &k, cfg.solvability_tol)?;
    let basis = ModulationBasis::new(&coeffs);
    let a0 = halfwave::experiment::a0_of(coeffs.e1, cfg.e0)?;
    let guess = (first.lambda_est.sqrt() / a0, first.lambda_est, cfg.gamma0);
    let pairs: Vec<(f64, GridFunction)> = snaps.iter().map(|s| (s.t, s.u.clone())).collect();
    let tr = track(&pairs, &basis, guess, &cfg.decompose);
    fs::write(dir.join("modulation.csv"), tr.to_csv())?;
    let failures = tr.records.len() - tr.converged().count();
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "provenance": Provenance::of(&cfg),
            "snapshots": args.snapshots,
            "records": tr.records.len(),
            "failures": failures,
            "e1": coeffs.e1,
        }),
    )?;
    Ok(report_checks(&[Check::exact("tracking_failures", failures as f64, 0.0)]))
}

fn virial(c: &Common) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    if let Some(g) = grid_override(c)? {
        cfg.virial.biharmonic_grid = g;
    }
    let dir = out_dir(c, "virial-check")?;
    let r = run_virial_check(&cfg)?;
    write_json(&dir.join("virial.json"), &r)?;
    Ok(report_checks(&r.checks))
}

fn experiment(c: &Common, args: &ExperimentArgs) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    if let Some(g) = grid_override(c)? {
        cfg.grid = g;
    }
    cfg.save_snapshots |= args.save_snapshots;
    let dir = out_dir(c, "experiment")?;
    let o = run_blowup_experiment(&cfg)?;
    o.persist(&dir, cfg.save_snapshots)?;
    write_json(&dir.join("config.json"), &cfg)?;
    Ok(report_checks(&o.report.checks()))
}

fn suite(c: &Common) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    if let Some(g) = grid_override(c)? {
        cfg.suite_grid = g;
    }
    let dir = out_dir(c, "suite")?;
    let r = run_property_suites(&cfg)?;
    write_json(&dir.join("suite.json"), &r)?;
    Ok(report_checks(&r.checks))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::GroundState => ground_state(c),
        Command::Profile(a) => profile(c, a),
        Command::Simulate => simulate_cmd(c),
        Command::Modulate(a) => modulate(c, a),
        Command::VirialCheck => virial(c),
        Command::Experiment(a) => experiment(c, a),
        Command::Suite => suite(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
