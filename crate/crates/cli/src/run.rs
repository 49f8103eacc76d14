//! Executes a validated configuration and writes its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use peridyn_core::control::{export_control_csv, export_nodal_csv, verify_kkt, ControlBox, ControlProblem};
use peridyn_core::expr::{ScalarField, VectorField};
use peridyn_core::kernel::{KernelFamily, MaterialField};
use peridyn_core::lab::{
    adjoint_probes, asymptotic_compatibility_study, gamma_energy_study, h_refinement_study, manufactured_local_study,
    measure_omega, poincare_sweep, solve_control, GammaStudy, Setup,
};
use peridyn_core::linalg::SolverOptions;
use peridyn_core::report::{strictly_decreasing, Summary, Table};

use crate::config::{RunConfig, StudyConfig};
use crate::error::CliError;

/// Tolerances of the built-in checks.
pub const MANUFACTURED_RATE_BAND: f64 = 0.2;
pub const OMEGA_MAX_RATIO: f64 = 0.75;
pub const POINCARE_MAX_BAND: f64 = 3.0;
pub const POINCARE_MIN_FRACTION: f64 = 0.1;

pub const SUMMARY_FILE: &str = "summary.txt";
pub const ERROR_FILE: &str = "error.txt";

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: Summary,
    /// `false` if any check in the summary failed.
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let material = MaterialField::parse(&cfg.material.expr, cfg.material.min, cfg.material.max)?;
    let bounds = ControlBox::new(cfg.control.lower.clone(), cfg.control.upper.clone())?;
    let problem = ControlProblem::with_weights(
        cfg.control.lambda,
        VectorField::parse(&cfg.control.desired)?,
        bounds,
        ScalarField::parse(&cfg.control.tracking_weight)?,
        ScalarField::parse(&cfg.control.control_weight)?,
    )?;
    Ok(Setup {
        domain: cfg.domain,
        family: cfg.family,
        material,
        problem,
        quadrature: cfg.discretization.quadrature.clone(),
        solver: SolverOptions {
            tol: cfg.solver.cg_tol,
            maxit: cfg.solver.cg_maxit,
            ..SolverOptions::default()
        },
        kkt_tol: cfg.solver.kkt_tol,
        maxit: cfg.solver.maxit,
    })
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Write {
            path: path.clone(),
            source: e,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        self.text(name, &t.to_csv())
    }
}

fn fractional_order(family: KernelFamily) -> Option<f64> {
    match family {
        KernelFamily::Fractional { s } => Some(s),
        _ => None,
    }
}

/// Runs the study and writes its CSV files and `summary.txt` into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output).map_err(|e| CliError::Write {
        path: cfg.output.clone(),
        source: e,
    })?;
    let mut out = Writer {
        dir: cfg.output.clone(),
        files: Vec::new(),
    };
    let s = setup(cfg)?;
    let mut sum = Summary::default();
    sum.line(format!("study: {}", cfg.study.name()));
    sum.line(format!("dimension: {}", cfg.domain.dim()));
    sum.line(format!("kernel: {}", cfg.family.name()));
    let mut passed = true;
    let (h, delta) = (cfg.discretization.h, cfg.discretization.delta);

    match &cfg.study {
        StudyConfig::Solve => {
            let d = solve_control(&s, delta, h)?;
            out.text("state.csv", &export_nodal_csv(&d.mesh, &d.triple))?;
            out.text("control.csv", &export_control_csv(&d.mesh, &d.triple.g))?;
            let k = verify_kkt(&s.problem, &d.ops, &d.triple, 1e-10);
            sum.line(format!(
                "h: {h}, delta: {delta}, free dofs: {}",
                d.mesh.free_dof_count()
            ));
            sum.line(format!("objective: {:.12e}", d.triple.objective));
            sum.line(format!("iterations: {}", d.triple.iterations));
            sum.line(format!(
                "state residual {:.3e}, adjoint residual {:.3e}",
                k.state_res, k.adjoint_res
            ));
            passed &= sum.check(
                "stationarity",
                d.triple.kkt_residual <= cfg.solver.kkt_tol,
                format!(
                    "residual {:.3e} (tol {:.1e})",
                    d.triple.kkt_residual, cfg.solver.kkt_tol
                ),
            );
            passed &= sum.check(
                "sign conditions",
                k.max_sign_violation <= 1e3 * cfg.solver.kkt_tol,
                format!("max violation {:.3e}", k.max_sign_violation),
            );
        }
        StudyConfig::Gamma {
            deltas,
            ratio,
            field,
            zero_extension,
        } => {
            let r = gamma_energy_study(&GammaStudy {
                domain: cfg.domain,
                field: VectorField::parse(field)?,
                material: s.material.clone(),
                family: cfg.family,
                deltas: deltas.clone(),
                ratio: *ratio,
                zero_extension: *zero_extension,
                quadrature: s.quadrature.clone(),
            })?;
            out.table("gamma_energy.csv", &r.table())?;
            if let Some(f) = r.fit {
                sum.line(format!("gap {f}"));
            }
            let gaps: Vec<f64> = r.gaps().iter().map(|g| g.abs()).collect();
            passed &= sum.check(
                "energy gap decreasing",
                strictly_decreasing(&gaps),
                gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(", "),
            );
        }
        StudyConfig::HStudy {
            hs,
            manufactured: Some((load, exact)),
            expected_rate,
            ..
        } => {
            let r = manufactured_local_study(
                &cfg.domain,
                &s.material,
                &VectorField::parse(load)?,
                &VectorField::parse(exact)?,
                hs,
                &s.solver,
            )?;
            out.table("manufactured.csv", &r.table())?;
            match (r.l2_fit, expected_rate) {
                (Some(f), Some(e)) => {
                    passed &= sum.check(
                        "L2 state rate",
                        (f.rate - e).abs() <= MANUFACTURED_RATE_BAND,
                        format!("{f} (expected {e} +/- {MANUFACTURED_RATE_BAND})"),
                    );
                }
                (Some(f), None) => sum.line(format!("L2 state {f}")),
                (None, _) => sum.line("L2 state rate: not enough points"),
            }
        }
        StudyConfig::HStudy {
            hs,
            reference_h,
            manufactured: None,
            expected_rate,
        } => {
            let r = h_refinement_study(&s, delta, hs, *reference_h)?;
            out.table("hstudy.csv", &r.table())?;
            sum.line(format!("delta: {delta}, reference h: {}", r.reference_h));
            for (name, fit) in [
                ("state L2", r.state_fit),
                ("state seminorm", r.seminorm_fit),
                ("adjoint L2", r.adjoint_fit),
                ("control L2", r.control_fit),
            ] {
                if let Some(f) = fit {
                    sum.line(format!("{name} {f}"));
                }
            }
            if let Some(e) = r.expected_control_rate {
                sum.line(format!("expected control rate: {e}"));
            }
            passed &= sum.check(
                "errors decrease",
                r.monotone(),
                "all four error columns strictly decreasing",
            );
            if let (Some(e), Some(f)) = (expected_rate, r.state_fit) {
                passed &= sum.check(
                    "L2 state rate",
                    f.rate >= e - MANUFACTURED_RATE_BAND,
                    format!("{f} (expected at least {e} - {MANUFACTURED_RATE_BAND})"),
                );
            }
        }
        StudyConfig::AcStudy {
            hs,
            reference_h,
            paths,
            probes,
            tolerance,
        } => {
            let probes = probes
                .iter()
                .map(|p| VectorField::parse(p))
                .collect::<Result<Vec<_>, _>>()?;
            let r = asymptotic_compatibility_study(&s, paths, hs, *reference_h, &probes)?;
            out.table("ac_study.csv", &r.table())?;
            for (h, e) in &r.local_errors {
                sum.line(format!("local error at h={h}: {e:.3e}"));
            }
            passed &= sum.check(
                "cross-path state",
                r.cross_path_state <= *tolerance,
                format!("{:.3e} (tol {tolerance:.1e})", r.cross_path_state),
            );
            passed &= sum.check(
                "control functionals",
                r.functional_spread() <= *tolerance,
                format!("spread {:.3e} (tol {tolerance:.1e})", r.functional_spread()),
            );
        }
        StudyConfig::Poincare { deltas } => {
            let r = poincare_sweep(
                &cfg.domain,
                cfg.family,
                &s.material,
                deltas,
                h,
                &s.quadrature,
                &s.solver,
            )?;
            out.table("poincare.csv", &r.table())?;
            let nonlocal: Vec<f64> = r.rows.iter().filter(|x| x.0 > 0.0).map(|x| x.1).collect();
            if !nonlocal.is_empty() {
                passed &= sum.check(
                    "uniform lower bound",
                    r.band() <= POINCARE_MAX_BAND,
                    format!("max/min {:.3} (<= {POINCARE_MAX_BAND})", r.band()),
                );
            }
            if let (Some(local), false) = (r.local_value(), nonlocal.is_empty()) {
                let min = nonlocal.iter().cloned().fold(f64::INFINITY, f64::min);
                passed &= sum.check(
                    "relative to local",
                    min >= POINCARE_MIN_FRACTION * local,
                    format!("min {min:.4} vs local {local:.4}"),
                );
            }
        }
        StudyConfig::Omega { hs, probe_h, lambdas } => {
            let probes = adjoint_probes(&s, delta, *probe_h, lambdas)?;
            let r = measure_omega(&cfg.domain, &probes, hs, fractional_order(cfg.family))?;
            out.table("omega.csv", &r.table())?;
            if let Some(f) = r.fit {
                sum.line(format!("omega decay {f}"));
            }
            if let Some(e) = r.bound_exponent {
                sum.line(format!("bound exponent: {e}"));
            }
            let worst = r.ratios.iter().cloned().fold(0.0, f64::max);
            passed &= sum.check(
                "omega halving",
                worst <= OMEGA_MAX_RATIO,
                format!("max ratio {worst:.3} (<= {OMEGA_MAX_RATIO})"),
            );
        }
    }
    sum.line(format!("elapsed: {:.3} s", start.elapsed().as_secs_f64()));
    out.text(SUMMARY_FILE, &sum.render())?;
    Ok(Outcome {
        dir: out.dir,
        summary: sum,
        passed,
        files: out.files,
    })
}

/// Writes `error.txt` into `dir` if the directory can be created.
pub fn write_error(dir: &Path, err: &CliError) -> Option<PathBuf> {
    std::fs::create_dir_all(dir).ok()?;
    let path = dir.join(ERROR_FILE);
    std::fs::write(&path, format!("{err}\n")).ok()?;
    Some(path)
}
