//! Limit studies: energies as `delta -> 0`, refinement in `h` at fixed
//! `delta`, the projection error `omega(h)`, joint `(delta, h)` paths and
//! the smallest eigenvalue across horizons.
//!
//! Exact solutions are replaced by discrete references on finer nested
//! meshes; coarse fields are interpolated onto the reference mesh before
//! norms are taken.

use std::time::{Duration, Instant};

use crate::control::{solve_kkt_projected_gradient, ControlOperators, ControlProblem, SolutionTriple};
use crate::error::{Error, Result};
use crate::expr::VectorField;
use crate::fem::{
    assemble_load, assemble_mass, l2_error_vs_field, l2_norm_cellwise, l2_norm_fe, project_pi0_field,
    transfer_cellwise, transfer_fe,
};
use crate::kernel::{KernelFamily, KernelSpec, MaterialField};
use crate::linalg::{smallest_eig_with, SolverOptions, SpdSolver};
use crate::local::{assemble_stiffness_local, energy_local, seminorm_h1};
use crate::mesh::{build_mesh, Domain, Mesh};
use crate::nonlocal::{assemble_stiffness_nonlocal, energy_nonlocal, seminorm_x, QuadratureRule};
use crate::report::{fit_rate, fmt_float, strictly_decreasing, RateFit, Table};

pub const GAMMA_HEADER: [&str; 5] = ["delta", "h", "E_delta", "E_0", "gap"];
pub const HSTUDY_HEADER: [&str; 6] = [
    "h",
    "delta",
    "err_state_L2",
    "err_state_seminorm",
    "err_adjoint_L2",
    "err_control_L2",
];
pub const OMEGA_HEADER: [&str; 2] = ["h", "omega"];
pub const AC_HEADER: [&str; 7] = [
    "path",
    "h",
    "delta",
    "err_state_L2",
    "err_control_L2",
    "seminorm_X",
    "kkt_residual",
];
pub const POINCARE_HEADER: [&str; 2] = ["delta", "lambda_min"];
pub const MANUFACTURED_HEADER: [&str; 3] = ["h", "err_state_L2", "err_state_H1"];

/// Everything needed to pose and solve the discrete control problem at a given `(delta, h)`.
#[derive(Clone, Debug)]
pub struct Setup {
    pub domain: Domain,
    pub family: KernelFamily,
    pub material: MaterialField,
    pub problem: ControlProblem,
    pub quadrature: QuadratureRule,
    pub solver: SolverOptions,
    pub kkt_tol: f64,
    pub maxit: usize,
}

/// A solved discrete control problem; `kernel` is `None` for the local model.
pub struct Discrete {
    pub mesh: Mesh,
    pub kernel: Option<KernelSpec>,
    pub ops: ControlOperators,
    pub triple: SolutionTriple,
}

impl Discrete {
    pub fn state_full(&self) -> Vec<f64> {
        self.mesh.expand(&self.triple.u)
    }

    pub fn adjoint_full(&self) -> Vec<f64> {
        self.mesh.expand(&self.triple.p)
    }
}

/// Builds the operators of the model at `(delta, h)`; `delta = 0` selects the local form.
pub fn operators_at(setup: &Setup, delta: f64, h: f64) -> Result<(Mesh, Option<KernelSpec>, ControlOperators)> {
    let mesh = build_mesh(setup.domain.clone(), delta, h)?;
    if delta == 0.0 {
        let k = assemble_stiffness_local(&mesh, &setup.material)?;
        let ops = ControlOperators::local(&k, &setup.problem, setup.solver.clone())?;
        return Ok((mesh, None, ops));
    }
    let kernel = KernelSpec::new(setup.family, delta, setup.domain.dim())?;
    let k = assemble_stiffness_nonlocal(&mesh, &kernel, &setup.material, &setup.quadrature)?;
    let ops = ControlOperators::nonlocal(&k, &setup.problem, setup.solver.clone())?;
    Ok((mesh, Some(kernel), ops))
}

pub fn solve_control(setup: &Setup, delta: f64, h: f64) -> Result<Discrete> {
    let (mesh, kernel, ops) = operators_at(setup, delta, h)?;
    let triple = solve_kkt_projected_gradient(&setup.problem, &ops, setup.kkt_tol, setup.maxit)?;
    Ok(Discrete {
        mesh,
        kernel,
        ops,
        triple,
    })
}

/// `‖u_coarse - u_ref‖_{L²(Omega)}` after interpolating onto the reference mesh.
pub fn fe_error(coarse: &Mesh, u_coarse: &[f64], reference: &Mesh, u_ref: &[f64]) -> f64 {
    l2_norm_fe(reference, &fe_difference(coarse, u_coarse, reference, u_ref))
}

fn fe_difference(coarse: &Mesh, u_coarse: &[f64], reference: &Mesh, u_ref: &[f64]) -> Vec<f64> {
    transfer_fe(coarse, u_coarse, reference)
        .iter()
        .zip(u_ref)
        .map(|(a, b)| a - b)
        .collect()
}

/// `‖g_coarse - g_ref‖_{L²(Omega)}` for cellwise data on nested meshes.
pub fn cellwise_error(coarse: &Mesh, g_coarse: &[f64], reference: &Mesh, g_ref: &[f64]) -> f64 {
    let t = transfer_cellwise(coarse, g_coarse, reference);
    let d: Vec<f64> = t.iter().zip(g_ref).map(|(a, b)| a - b).collect();
    l2_norm_cellwise(reference, &d)
}

fn is_multiple(coarse: f64, fine: f64) -> bool {
    let r = coarse / fine;
    r >= 1.0 - 1e-12 && (r - r.round()).abs() < 1e-9
}

fn check_nested(hs: &[f64]) -> Result<()> {
    if hs.is_empty() {
        return Err(Error::Study("empty mesh-size sequence".into()));
    }
    for w in hs.windows(2) {
        if !(w[1] < w[0]) || !is_multiple(w[0], w[1]) {
            return Err(Error::Study(format!(
                "mesh sizes {} and {} are not a strictly decreasing nested pair",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn check_strictly_decreasing(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Study(format!(
            "{name} sequence must be nonempty and strictly decreasing"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Energy limit

#[derive(Clone, Debug)]
pub struct GammaStudy {
    pub domain: Domain,
    pub field: VectorField,
    pub material: MaterialField,
    pub family: KernelFamily,
    pub deltas: Vec<f64>,
    /// Mesh size is `delta / ratio`; at least 4.
    pub ratio: f64,
    /// Zero extension of the field outside `Omega` instead of its natural extension.
    pub zero_extension: bool,
    pub quadrature: QuadratureRule,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaRow {
    pub delta: f64,
    pub h: f64,
    pub e_delta: f64,
    pub e_0: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct GammaReport {
    pub rows: Vec<GammaRow>,
    pub fit: Option<RateFit>,
    pub elapsed: Duration,
}

impl GammaReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&GAMMA_HEADER);
        for r in &self.rows {
            t.push(vec![
                fmt_float(r.delta),
                fmt_float(r.h),
                fmt_float(r.e_delta),
                fmt_float(r.e_0),
                fmt_float(r.gap),
            ]);
        }
        t
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap).collect()
    }
}

pub fn gamma_energy_study(study: &GammaStudy) -> Result<GammaReport> {
    let start = Instant::now();
    check_strictly_decreasing("horizon", &study.deltas)?;
    if !(study.ratio >= 4.0) {
        return Err(Error::Study(format!(
            "mesh ratio delta/h must be at least 4, got {}",
            study.ratio
        )));
    }
    let n = study.domain.dim();
    let mut rows = Vec::with_capacity(study.deltas.len());
    for &delta in &study.deltas {
        let h = delta / study.ratio;
        let mesh = build_mesh(study.domain.clone(), delta, h)?;
        let kernel = KernelSpec::new(study.family, delta, n)?;
        let u = mesh.interpolate(&study.field, study.zero_extension);
        let e_delta = energy_nonlocal(&mesh, &kernel, &study.material, &study.quadrature, &u)?;
        let e_0 = energy_local(&mesh, &study.material, &u)?;
        rows.push(GammaRow {
            delta,
            h,
            e_delta,
            e_0,
            gap: (e_delta - e_0).abs(),
        });
    }
    let d: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(GammaReport {
        fit: fit_rate(&d, &g),
        rows,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Refinement in h at fixed delta

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HStudyRow {
    pub h: f64,
    pub delta: f64,
    pub err_state_l2: f64,
    pub err_state_seminorm: f64,
    pub err_adjoint_l2: f64,
    pub err_control_l2: f64,
}

#[derive(Clone, Debug)]
pub struct HStudyReport {
    pub rows: Vec<HStudyRow>,
    pub reference_h: f64,
    pub state_fit: Option<RateFit>,
    pub seminorm_fit: Option<RateFit>,
    pub adjoint_fit: Option<RateFit>,
    pub control_fit: Option<RateFit>,
    /// Control-space rate `s` expected for fractional kernels.
    pub expected_control_rate: Option<f64>,
    pub elapsed: Duration,
}

impl HStudyReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&HSTUDY_HEADER);
        for r in &self.rows {
            t.push(vec![
                fmt_float(r.h),
                fmt_float(r.delta),
                fmt_float(r.err_state_l2),
                fmt_float(r.err_state_seminorm),
                fmt_float(r.err_adjoint_l2),
                fmt_float(r.err_control_l2),
            ]);
        }
        t
    }

    pub fn column(&self, f: impl Fn(&HStudyRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Each error sequence decreases strictly along the refinement.
    pub fn monotone(&self) -> bool {
        strictly_decreasing(&self.column(|r| r.err_state_l2))
            && strictly_decreasing(&self.column(|r| r.err_adjoint_l2))
            && strictly_decreasing(&self.column(|r| r.err_control_l2))
    }
}

pub fn h_refinement_study(setup: &Setup, delta: f64, hs: &[f64], reference_h: f64) -> Result<HStudyReport> {
    let start = Instant::now();
    check_nested(hs)?;
    let finest = *hs.last().unwrap();
    if !(finest / reference_h >= 4.0 - 1e-9) || !is_multiple(finest, reference_h) {
        return Err(Error::Study(format!(
            "reference mesh size {reference_h} must be at least 4x finer than {finest} and nested"
        )));
    }
    let reference = solve_control(setup, delta, reference_h)?;
    let (ru, rp) = (reference.state_full(), reference.adjoint_full());
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let d = solve_control(setup, delta, h)?;
        let du = fe_difference(&d.mesh, &d.state_full(), &reference.mesh, &ru);
        let seminorm = match &reference.kernel {
            Some(k) => seminorm_x(&reference.mesh, k, &setup.quadrature, &du)?,
            None => seminorm_h1(&reference.mesh, &du),
        };
        rows.push(HStudyRow {
            h,
            delta,
            err_state_l2: l2_norm_fe(&reference.mesh, &du),
            err_state_seminorm: seminorm,
            err_adjoint_l2: fe_error(&d.mesh, &d.adjoint_full(), &reference.mesh, &rp),
            err_control_l2: cellwise_error(&d.mesh, &d.triple.g, &reference.mesh, &reference.triple.g),
        });
    }
    let hcol: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let fit = |f: fn(&HStudyRow) -> f64| fit_rate(&hcol, &rows.iter().map(f).collect::<Vec<_>>());
    Ok(HStudyReport {
        state_fit: fit(|r| r.err_state_l2),
        seminorm_fit: fit(|r| r.err_state_seminorm),
        adjoint_fit: fit(|r| r.err_adjoint_l2),
        control_fit: fit(|r| r.err_control_l2),
        expected_control_rate: match setup.family {
            KernelFamily::Fractional { s } if delta > 0.0 => Some(s),
            _ => None,
        },
        rows,
        reference_h,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Manufactured local state

#[derive(Clone, Debug)]
pub struct ManufacturedReport {
    /// `(h, L² error, H¹ seminorm error)`.
    pub rows: Vec<(f64, f64, f64)>,
    pub l2_fit: Option<RateFit>,
    pub elapsed: Duration,
}

impl ManufacturedReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&MANUFACTURED_HEADER);
        for &(h, e, s) in &self.rows {
            t.push(vec![fmt_float(h), fmt_float(e), fmt_float(s)]);
        }
        t
    }
}

/// Solves `B_0(u, v) = <g, v>` for each `h` and compares with the exact field.
pub fn manufactured_local_study(
    domain: &Domain,
    material: &MaterialField,
    load: &VectorField,
    exact: &VectorField,
    hs: &[f64],
    solver: &SolverOptions,
) -> Result<ManufacturedReport> {
    let start = Instant::now();
    check_strictly_decreasing("mesh size", hs)?;
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let mesh = build_mesh(domain.clone(), 0.0, h)?;
        let k = assemble_stiffness_local(&mesh, material)?;
        let b = assemble_load(&mesh, load, 6);
        let (u, _) = SpdSolver::new(k.state_matrix(), solver.clone())?.solve(&b)?;
        let full = mesh.expand(&u);
        let interp = mesh.interpolate(exact, false);
        // The P1 interpolant is H¹-superclose; its distance serves as the seminorm error.
        let diff: Vec<f64> = full.iter().zip(&interp).map(|(a, b)| a - b).collect();
        rows.push((h, l2_error_vs_field(&mesh, &full, exact, 6), seminorm_h1(&mesh, &diff)));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ManufacturedReport {
        l2_fit: fit_rate(&x, &y),
        rows,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Projection error omega(h)

/// `‖Pi_0^H w - w‖_{L²(Omega)}` of a P1 field on `fine` against the cells of
/// the nested coarse mesh `coarse`, computed exactly cell by cell.
pub fn projection_error(fine: &Mesh, w: &[f64], coarse: &Mesh) -> f64 {
    let n = fine.dim();
    let nv = n + 1;
    let m = coarse.omega_cells().len();
    let mut first = vec![0.0; m * n];
    let mut second = vec![0.0; m * n];
    let mut vol = vec![0.0; m];
    for &c in fine.omega_cells() {
        let pos = coarse
            .omega_position(coarse.locate(fine.cell_centroid(c)))
            .expect("fine Omega cell lies in a coarse Omega cell");
        let t = fine.cell_volume(c);
        vol[pos] += t;
        let vs = fine.cell(c);
        for a in 0..n {
            let vals: Vec<f64> = vs.iter().map(|&v| w[v * n + a]).collect();
            let sum: f64 = vals.iter().sum();
            let sq: f64 = vals.iter().map(|x| x * x).sum();
            first[pos * n + a] += t * sum / nv as f64;
            // ∫_T w² for P1 w: |T| (Σ w_i² + (Σ w_i)²) / ((n+1)(n+2)).
            second[pos * n + a] += t * (sq + sum * sum) / (nv * (nv + 1)) as f64;
        }
    }
    let mut total = 0.0;
    for k in 0..m {
        for a in 0..n {
            let i = k * n + a;
            total += (second[i] - first[i] * first[i] / vol[k]).max(0.0);
        }
    }
    total.sqrt()
}

#[derive(Clone, Debug)]
pub struct OmegaReport {
    pub rows: Vec<(f64, f64)>,
    pub fit: Option<RateFit>,
    /// `omega(h_{i+1}) / omega(h_i)`.
    pub ratios: Vec<f64>,
    /// `s` for fractional kernels, the exponent of the `h^s` bound.
    pub bound_exponent: Option<f64>,
}

impl OmegaReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&OMEGA_HEADER);
        for &(h, w) in &self.rows {
            t.push(vec![fmt_float(h), fmt_float(w)]);
        }
        t
    }
}

/// A probe: a P1 field given as a full nodal vector on its mesh.
pub struct Probe {
    pub mesh: Mesh,
    pub field: Vec<f64>,
}

/// `omega(h) = max_probe ‖Pi_0 w - w‖` for each coarse size in `hs`.
pub fn measure_omega(
    domain: &Domain,
    probes: &[Probe],
    hs: &[f64],
    bound_exponent: Option<f64>,
) -> Result<OmegaReport> {
    check_nested(hs)?;
    if probes.is_empty() {
        return Err(Error::Study("no probe fields".into()));
    }
    for p in probes {
        if !is_multiple(*hs.last().unwrap(), p.mesh.spacing()) {
            return Err(Error::Study("probe meshes must refine every coarse mesh".into()));
        }
    }
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let coarse = build_mesh(domain.clone(), 0.0, h)?;
        let w = probes
            .iter()
            .map(|p| projection_error(&p.mesh, &p.field, &coarse))
            .fold(0.0, f64::max);
        rows.push((h, w));
    }
    let ratios = rows.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(OmegaReport {
        fit: fit_rate(&x, &y),
        rows,
        ratios,
        bound_exponent,
    })
}

/// Probes `P_box(-p / λ)` (nodal clamp) from adjoint solves at each `λ`.
pub fn adjoint_probes(setup: &Setup, delta: f64, h: f64, lambdas: &[f64]) -> Result<Vec<Probe>> {
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let s = Setup {
            problem: setup.problem.with_lambda(lambda)?,
            ..setup.clone()
        };
        let d = solve_control(&s, delta, h)?;
        let bounds = s.problem.bounds();
        let n = d.mesh.dim();
        let field = d
            .adjoint_full()
            .iter()
            .enumerate()
            .map(|(i, p)| (-p / lambda).max(bounds.lower()[i % n]).min(bounds.upper()[i % n]))
            .collect();
        out.push(Probe { mesh: d.mesh, field });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Joint (delta, h) paths

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaPath {
    /// `delta = c h`.
    Proportional(f64),
    /// `delta = c sqrt(h)`.
    Sqrt(f64),
    /// `delta` fixed while `h -> 0`.
    Fixed(f64),
    /// `delta = 0`: the local problem.
    Local,
}

impl DeltaPath {
    pub fn delta(&self, h: f64) -> f64 {
        match *self {
            DeltaPath::Proportional(c) => c * h,
            DeltaPath::Sqrt(c) => c * h.sqrt(),
            DeltaPath::Fixed(d) => d,
            DeltaPath::Local => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DeltaPath::Proportional(c) => format!("delta={c}h"),
            DeltaPath::Sqrt(c) if c == 1.0 => "delta=sqrt(h)".into(),
            DeltaPath::Sqrt(c) => format!("delta={c}sqrt(h)"),
            DeltaPath::Fixed(d) => format!("delta={d}"),
            DeltaPath::Local => "local".into(),
        }
    }

    /// Parses `2h`, `sqrt(h)`, `0.5sqrt(h)`, `fixed:0.1`, `local`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().replace(' ', "");
        let t = t.strip_prefix("delta=").unwrap_or(&t);
        let bad = || Error::Config(format!("unrecognized horizon path `{s}`"));
        let coef = |c: &str| -> Result<f64> {
            let c = c.trim_end_matches('*');
            if c.is_empty() {
                Ok(1.0)
            } else {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(bad)
            }
        };
        if t == "local" || t == "0" {
            Ok(DeltaPath::Local)
        } else if let Some(v) = t.strip_prefix("fixed:") {
            Ok(DeltaPath::Fixed(coef(v)?))
        } else if let Some(c) = t.strip_suffix("sqrt(h)") {
            Ok(DeltaPath::Sqrt(coef(c)?))
        } else if let Some(c) = t.strip_suffix('h') {
            Ok(DeltaPath::Proportional(coef(c)?))
        } else {
            Err(bad())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcRow {
    pub path: String,
    pub h: f64,
    pub delta: f64,
    pub err_state_l2: f64,
    pub err_control_l2: f64,
    pub seminorm_x: f64,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug)]
pub struct AcReport {
    pub rows: Vec<AcRow>,
    pub reference_h: f64,
    /// `(h, ‖u_h - u_ref‖)` of the local problem on the study meshes.
    pub local_errors: Vec<(f64, f64)>,
    /// Largest pairwise `L²` state distance between paths at the finest `h`.
    pub cross_path_state: f64,
    /// For each probe, `⟨g, phi⟩` per path at the finest `h`.
    pub functionals: Vec<Vec<f64>>,
    pub elapsed: Duration,
}

impl AcReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&AC_HEADER);
        for r in &self.rows {
            t.push(vec![
                r.path.clone(),
                fmt_float(r.h),
                fmt_float(r.delta),
                fmt_float(r.err_state_l2),
                fmt_float(r.err_control_l2),
                fmt_float(r.seminorm_x),
                fmt_float(r.kkt_residual),
            ]);
        }
        t
    }

    pub fn path_rows(&self, path: &str) -> Vec<&AcRow> {
        self.rows.iter().filter(|r| r.path == path).collect()
    }

    /// Largest spread `max - min` of each probe functional across paths.
    pub fn functional_spread(&self) -> f64 {
        self.functionals
            .iter()
            .map(|v| {
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// `∫_Omega g . phi` for cellwise `g`.
pub fn control_functional(mesh: &Mesh, g: &[f64], phi: &VectorField) -> f64 {
    let n = mesh.dim();
    let means = project_pi0_field(mesh, phi, 6);
    mesh.omega_cells()
        .iter()
        .enumerate()
        .map(|(k, &c)| mesh.cell_volume(c) * (0..n).map(|a| g[k * n + a] * means[k * n + a]).sum::<f64>())
        .sum()
}

pub fn asymptotic_compatibility_study(
    setup: &Setup,
    paths: &[DeltaPath],
    hs: &[f64],
    reference_h: f64,
    probes: &[VectorField],
) -> Result<AcReport> {
    let start = Instant::now();
    check_nested(hs)?;
    if paths.is_empty() {
        return Err(Error::Study("no horizon paths".into()));
    }
    let finest = *hs.last().unwrap();
    if !(finest / reference_h >= 4.0 - 1e-9) || !is_multiple(finest, reference_h) {
        return Err(Error::Study(format!(
            "reference mesh size {reference_h} must be at least 4x finer than {finest} and nested"
        )));
    }
    let reference = solve_control(setup, 0.0, reference_h)?;
    let ru = reference.state_full();
    let mut local_errors = Vec::with_capacity(hs.len());
    for &h in hs {
        let d = solve_control(setup, 0.0, h)?;
        local_errors.push((h, fe_error(&d.mesh, &d.state_full(), &reference.mesh, &ru)));
    }
    let mut rows = Vec::new();
    let mut finest_states: Vec<Vec<f64>> = Vec::new();
    let mut functionals = vec![Vec::new(); probes.len()];
    for path in paths {
        for &h in hs {
            let delta = path.delta(h);
            let d = solve_control(setup, delta, h)?;
            let full = d.state_full();
            let seminorm = match &d.kernel {
                Some(k) => seminorm_x(&d.mesh, k, &setup.quadrature, &full)?,
                None => seminorm_h1(&d.mesh, &full),
            };
            rows.push(AcRow {
                path: path.label(),
                h,
                delta,
                err_state_l2: fe_error(&d.mesh, &full, &reference.mesh, &ru),
                err_control_l2: cellwise_error(&d.mesh, &d.triple.g, &reference.mesh, &reference.triple.g),
                seminorm_x: seminorm,
                kkt_residual: d.triple.kkt_residual,
            });
            if h == finest {
                finest_states.push(transfer_fe(&d.mesh, &full, &reference.mesh));
                for (f, phi) in functionals.iter_mut().zip(probes) {
                    f.push(control_functional(&d.mesh, &d.triple.g, phi));
                }
            }
        }
    }
    let mut cross: f64 = 0.0;
    for i in 0..finest_states.len() {
        for j in i + 1..finest_states.len() {
            let d: Vec<f64> = finest_states[i]
                .iter()
                .zip(&finest_states[j])
                .map(|(a, b)| a - b)
                .collect();
            cross = cross.max(l2_norm_fe(&reference.mesh, &d));
        }
    }
    Ok(AcReport {
        rows,
        reference_h,
        local_errors,
        cross_path_state: cross,
        functionals,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Smallest eigenvalue across horizons

#[derive(Clone, Debug)]
pub struct PoincareReport {
    pub rows: Vec<(f64, f64)>,
    pub elapsed: Duration,
}

impl PoincareReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&POINCARE_HEADER);
        for &(d, l) in &self.rows {
            t.push(vec![fmt_float(d), fmt_float(l)]);
        }
        t
    }

    /// `max / min` over the nonlocal rows.
    pub fn band(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.0 > 0.0).map(|r| r.1).collect();
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn local_value(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == 0.0).map(|r| r.1)
    }
}

/// `lambda_min(A_delta, M)` of the state operator for each horizon
/// (`0` selects the local form) on meshes of size `h`.
pub fn poincare_sweep(
    domain: &Domain,
    family: KernelFamily,
    material: &MaterialField,
    deltas: &[f64],
    h: f64,
    quadrature: &QuadratureRule,
    solver: &SolverOptions,
) -> Result<PoincareReport> {
    let start = Instant::now();
    let min_delta = deltas
        .iter()
        .cloned()
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_delta.is_finite() && h > min_delta / 4.0 + 1e-12 {
        return Err(Error::Study(format!(
            "mesh size {h} exceeds a quarter of the smallest horizon {min_delta}"
        )));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mesh = build_mesh(domain.clone(), delta, h)?;
        let a = if delta == 0.0 {
            assemble_stiffness_local(&mesh, material)?.state_matrix()
        } else {
            let k = KernelSpec::new(family, delta, domain.dim())?;
            assemble_stiffness_nonlocal(&mesh, &k, material, quadrature)?.state_matrix()
        };
        let m = assemble_mass(&mesh);
        let est = smallest_eig_with(&a, &m, 1e-10, solver)?;
        rows.push((delta, est.value));
    }
    Ok(PoincareReport {
        rows,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlBox;

    #[test]
    fn projection_error_of_linear_probe() {
        let fine = build_mesh(Domain::unit(1), 0.0, 1.0 / 64.0).unwrap();
        let w = fine.interpolate(&VectorField::parse(&["x"]).unwrap(), false);
        for h in [0.25, 0.125] {
            let coarse = build_mesh(Domain::unit(1), 0.0, h).unwrap();
            let e = projection_error(&fine, &w, &coarse);
            assert!((e - h / (2.0 * 3f64.sqrt())).abs() < 1e-12, "{e}");
        }
        let c = fine.interpolate(&VectorField::parse(&["3"]).unwrap(), false);
        let coarse = build_mesh(Domain::unit(1), 0.0, 0.25).unwrap();
        assert!(projection_error(&fine, &c, &coarse) < 1e-12);
    }

    #[test]
    fn constant_field_has_no_gap_and_linear_gap_is_tiny_inside() {
        let study = GammaStudy {
            domain: Domain::unit(1),
            field: VectorField::parse(&["2"]).unwrap(),
            material: MaterialField::constant(1.0).unwrap(),
            family: KernelFamily::Constant,
            deltas: vec![0.2, 0.1],
            ratio: 4.0,
            zero_extension: false,
            quadrature: QuadratureRule::default(),
        };
        let r = gamma_energy_study(&study).unwrap();
        assert!(r.gaps().iter().all(|g| *g < 1e-14));
        assert_eq!(r.table().header(), GAMMA_HEADER);
    }

    #[test]
    fn paths_parse_and_evaluate() {
        assert_eq!(DeltaPath::parse("2h").unwrap(), DeltaPath::Proportional(2.0));
        assert_eq!(DeltaPath::parse("delta = sqrt(h)").unwrap(), DeltaPath::Sqrt(1.0));
        assert_eq!(DeltaPath::parse("fixed:0.2").unwrap(), DeltaPath::Fixed(0.2));
        assert_eq!(DeltaPath::parse("local").unwrap(), DeltaPath::Local);
        assert!(DeltaPath::parse("h^2").is_err());
        assert_eq!(DeltaPath::Sqrt(1.0).delta(0.0625), 0.25);
        assert_eq!(DeltaPath::Proportional(4.0).label(), "delta=4h");
    }

    fn setup() -> Setup {
        Setup {
            domain: Domain::unit(1),
            family: KernelFamily::Constant,
            material: MaterialField::constant(1.0).unwrap(),
            problem: ControlProblem::new(
                1.0,
                VectorField::parse(&["sin(pi*x)"]).unwrap(),
                ControlBox::uniform(-5.0, 5.0, 1).unwrap(),
            )
            .unwrap(),
            quadrature: QuadratureRule::default(),
            solver: SolverOptions::default(),
            kkt_tol: 1e-10,
            maxit: 500,
        }
    }

    #[test]
    fn local_path_reproduces_local_solve() {
        let s = setup();
        let r = asymptotic_compatibility_study(&s, &[DeltaPath::Local], &[0.25, 0.125], 1.0 / 32.0, &[]).unwrap();
        for (row, (h, e)) in r.rows.iter().zip(&r.local_errors) {
            assert_eq!(row.h, *h);
            assert_eq!(row.err_state_l2, *e);
        }
        assert_eq!(r.cross_path_state, 0.0);
    }

    #[test]
    fn rejects_bad_sequences() {
        let s = setup();
        assert!(h_refinement_study(&s, 0.0, &[0.25, 0.2], 0.05).is_err());
        assert!(h_refinement_study(&s, 0.0, &[0.25, 0.125], 0.0625).is_err());
    }

    #[test]
    fn local_poincare_endpoint() {
        let one = MaterialField::constant(1.0).unwrap();
        let q = QuadratureRule::default();
        let o = SolverOptions::default();
        let r = poincare_sweep(
            &Domain::unit(1),
            KernelFamily::Constant,
            &one,
            &[0.0],
            1.0 / 64.0,
            &q,
            &o,
        )
        .unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((r.local_value().unwrap() - pi2).abs() < 1e-2 * pi2);
        let two = MaterialField::constant(2.0).unwrap();
        let r2 = poincare_sweep(
            &Domain::unit(1),
            KernelFamily::Constant,
            &two,
            &[0.0],
            1.0 / 64.0,
            &q,
            &o,
        )
        .unwrap();
        assert!((r2.rows[0].1 - 2.0 * r.rows[0].1).abs() < 1e-8 * r2.rows[0].1);
    }
}
