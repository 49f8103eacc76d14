//! Box-constrained optimal control with tracking objective
//! `I(u, g) = ∫ ½ γ |u - u_des|² + (λ/2) ∫ Γ |g|²`
//! over P1 states and P0 controls.
//!
//! The state equation is `A u = L g` where `A` is the state operator of the
//! nonlocal or local model and `L` maps a cellwise control to its load.
//! The adjoint solves `A p = M_γ u - d` and the `L²` gradient of the reduced
//! cost is `Pi_0 p + λ g`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::expr::{ScalarField, VectorField};
use crate::fem::{
    assemble_weighted_load, assemble_weighted_mass, cell_rule, l2_norm_cellwise, load_from_cellwise, project_pi0_fe,
};
use crate::linalg::{SolverOptions, SpdSolver};
use crate::local::StiffnessLocal;
use crate::mesh::Mesh;
use crate::nonlocal::StiffnessNonlocal;
use crate::sparse::{norm2, CsrMatrix};

/// Quadrature order for tracking and control integrals.
pub const DEFAULT_QUADRATURE_ORDER: usize = 4;
pub const DEFAULT_KKT_TOL: f64 = 1e-8;
pub const DEFAULT_INNER_TOL: f64 = 1e-10;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Componentwise bounds `a ⪯ g ⪯ b`; infinite bounds are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Domain(
                "control box bounds must have matching nonzero length".into(),
            ));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::Domain(format!(
                    "control box component {i}: need a <= b, got [{a}, {b}]"
                )));
            }
            if a > 0.0 || b < 0.0 {
                return Err(Error::Domain(format!(
                    "control box component {i}: [{a}, {b}] does not contain 0"
                )));
            }
        }
        Ok(ControlBox { lower, upper })
    }

    /// The same interval `[a, b]` for each of `n` components.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        ControlBox::new(vec![a; n], vec![b; n])
    }

    pub fn unbounded(n: usize) -> Self {
        ControlBox {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, g: &[f64]) -> bool {
        let n = self.dim();
        g.iter()
            .enumerate()
            .all(|(i, &v)| self.lower[i % n] <= v && v <= self.upper[i % n])
    }
}

/// Componentwise clamp of cellwise data to the box.
pub fn project_box(bounds: &ControlBox, z: &[f64]) -> Vec<f64> {
    let n = bounds.dim();
    z.iter()
        .enumerate()
        .map(|(i, &v)| v.max(bounds.lower[i % n]).min(bounds.upper[i % n]))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ControlProblem {
    lambda: f64,
    control_weight: ScalarField,
    tracking_weight: ScalarField,
    desired: VectorField,
    bounds: ControlBox,
    order: usize,
}

impl ControlProblem {
    /// Problem with `Γ ≡ 1` and `γ ≡ 1`.
    pub fn new(lambda: f64, desired: VectorField, bounds: ControlBox) -> Result<Self> {
        ControlProblem::with_weights(
            lambda,
            desired,
            bounds,
            ScalarField::constant(1.0),
            ScalarField::constant(1.0),
        )
    }

    pub fn with_weights(
        lambda: f64,
        desired: VectorField,
        bounds: ControlBox,
        tracking_weight: ScalarField,
        control_weight: ScalarField,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "regularization weight must be positive, got {lambda}"
            )));
        }
        if desired.dim() != bounds.dim() {
            return Err(Error::Domain(format!(
                "desired state has {} components but the control box has {}",
                desired.dim(),
                bounds.dim()
            )));
        }
        Ok(ControlProblem {
            lambda,
            control_weight,
            tracking_weight,
            desired,
            bounds,
            order: DEFAULT_QUADRATURE_ORDER,
        })
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order.max(1);
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        ControlProblem::with_weights(
            lambda,
            self.desired.clone(),
            self.bounds.clone(),
            self.tracking_weight.clone(),
            self.control_weight.clone(),
        )
        .map(|p| p.with_order(self.order))
    }

    pub fn bounds(&self) -> &ControlBox {
        &self.bounds
    }

    pub fn desired(&self) -> &VectorField {
        &self.desired
    }

    pub fn tracking_weight(&self) -> &ScalarField {
        &self.tracking_weight
    }

    pub fn control_weight(&self) -> &ScalarField {
        &self.control_weight
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check_solver_scope(&self) -> Result<()> {
        if self.control_weight.as_constant() != Some(1.0) {
            return Err(Error::Config(format!(
                "the optimality solver requires control weight 1, got `{}`",
                self.control_weight.source()
            )));
        }
        Ok(())
    }
}

/// `I(u, g)` for a free state vector and cellwise control, by Gauss quadrature.
pub fn objective(problem: &ControlProblem, mesh: &Mesh, u: &[f64], g: &[f64]) -> f64 {
    let n = mesh.dim();
    let full = mesh.expand(u);
    let mut ud = vec![0.0; n];
    let mut track = 0.0;
    let mut control = 0.0;
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        let b = mesh.barycentric(c);
        let vs = mesh.cell(c);
        let g2: f64 = (0..n).map(|a| g[k * n + a].powi(2)).sum();
        for (x, w) in cell_rule(mesh, c, problem.order) {
            problem.desired.eval_into(x, &mut ud);
            let mut d2 = 0.0;
            for a in 0..n {
                let uh: f64 = vs
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| full[v * n + a] * b.eval(i, x))
                    .sum();
                d2 += (uh - ud[a]).powi(2);
            }
            track += w * problem.tracking_weight.eval(x) * d2;
            control += w * problem.control_weight.eval(x) * g2;
        }
    }
    0.5 * track + 0.5 * problem.lambda * control
}

/// Discrete operators shared by state and adjoint solves.
pub struct ControlOperators {
    mesh: Mesh,
    state: SpdSolver,
    tracking_mass: CsrMatrix,
    tracking_load: Vec<f64>,
}

impl ControlOperators {
    /// Builds from an explicit state operator on the free DOFs of `mesh`.
    pub fn new(mesh: &Mesh, state: CsrMatrix, problem: &ControlProblem, opts: SolverOptions) -> Result<Self> {
        if state.nrows() != mesh.free_dof_count() {
            return Err(Error::Matrix(format!(
                "state operator has {} rows, mesh has {} free DOFs",
                state.nrows(),
                mesh.free_dof_count()
            )));
        }
        if problem.bounds.dim() != mesh.dim() {
            return Err(Error::Domain("control box dimension does not match the mesh".into()));
        }
        for &c in mesh.omega_cells() {
            for (x, _) in cell_rule(mesh, c, problem.order) {
                let v = problem.tracking_weight.eval(x);
                if !(v >= 0.0) {
                    return Err(Error::Domain(format!(
                        "tracking weight `{}` is {v} at ({}, {})",
                        problem.tracking_weight.source(),
                        x[0],
                        x[1]
                    )));
                }
            }
        }
        let tracking_mass = assemble_weighted_mass(mesh, &problem.tracking_weight, problem.order);
        let tracking_load =
            assemble_weighted_load(mesh, &problem.desired, Some(&problem.tracking_weight), problem.order);
        Ok(ControlOperators {
            mesh: mesh.clone(),
            state: SpdSolver::new(state, opts)?,
            tracking_mass,
            tracking_load,
        })
    }

    pub fn nonlocal(stiffness: &StiffnessNonlocal, problem: &ControlProblem, opts: SolverOptions) -> Result<Self> {
        ControlOperators::new(
            stiffness.mesh(),
            stiffness.state_matrix(),
            problem,
            opts.block(stiffness.mesh().dim()),
        )
    }

    pub fn local(stiffness: &StiffnessLocal, problem: &ControlProblem, opts: SolverOptions) -> Result<Self> {
        ControlOperators::new(
            stiffness.mesh(),
            stiffness.state_matrix(),
            problem,
            opts.block(stiffness.mesh().dim()),
        )
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn state_matrix(&self) -> &CsrMatrix {
        self.state.matrix()
    }

    pub fn tracking_mass(&self) -> &CsrMatrix {
        &self.tracking_mass
    }

    pub fn tracking_load(&self) -> &[f64] {
        &self.tracking_load
    }

    pub fn control_len(&self) -> usize {
        self.mesh.omega_cells().len() * self.mesh.dim()
    }

    /// `u = S g`.
    pub fn solve_state(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(self.state.solve(&load_from_cellwise(&self.mesh, g))?.0)
    }

    /// `A p = M_γ u - d`.
    pub fn solve_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.state.solve(&self.adjoint_rhs(u))?.0)
    }

    /// Solves `A x = b` with the state operator.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.state.solve(b)?.0)
    }

    fn adjoint_rhs(&self, u: &[f64]) -> Vec<f64> {
        let mu = self.tracking_mass.matvec(u);
        mu.iter().zip(&self.tracking_load).map(|(a, b)| a - b).collect()
    }

    /// Cell means of the adjoint.
    pub fn project_adjoint(&self, p: &[f64]) -> Vec<f64> {
        project_pi0_fe(&self.mesh, &self.mesh.expand(p))
    }
}

/// `Pi_0 p + λ g` at `g`, together with the state and adjoint it required.
pub fn reduced_gradient(
    problem: &ControlProblem,
    ops: &ControlOperators,
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    problem.check_solver_scope()?;
    let u = ops.solve_state(g)?;
    let p = ops.solve_adjoint(&u)?;
    let grad = gradient_from(problem, ops, &p, g);
    Ok((grad, u, p))
}

fn gradient_from(problem: &ControlProblem, ops: &ControlOperators, p: &[f64], g: &[f64]) -> Vec<f64> {
    ops.project_adjoint(p)
        .iter()
        .zip(g)
        .map(|(pp, gg)| pp + problem.lambda * gg)
        .collect()
}

/// `‖g - P_box(-Pi_0 p / λ)‖_{L²}`.
pub fn stationarity_residual(problem: &ControlProblem, ops: &ControlOperators, p: &[f64], g: &[f64]) -> f64 {
    let target: Vec<f64> = ops.project_adjoint(p).iter().map(|v| -v / problem.lambda).collect();
    let proj = project_box(&problem.bounds, &target);
    let diff: Vec<f64> = g.iter().zip(&proj).map(|(a, b)| a - b).collect();
    l2_norm_cellwise(&ops.mesh, &diff)
}

/// Discrete optimal state, control and adjoint.
#[derive(Clone, Debug)]
pub struct SolutionTriple {
    /// State on the free DOFs; layer values are zero.
    pub u: Vec<f64>,
    /// Cellwise control, `position * n + component`.
    pub g: Vec<f64>,
    pub p: Vec<f64>,
    /// Stationarity residual at `g`.
    pub kkt_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Objective value after each accepted iterate, starting at the initial control.
    pub history: Vec<f64>,
}

fn l2_inner(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    let n = mesh.dim();
    mesh.omega_cells()
        .iter()
        .enumerate()
        .map(|(k, &c)| mesh.cell_volume(c) * (0..n).map(|i| a[k * n + i] * b[k * n + i]).sum::<f64>())
        .sum()
}

/// Projected gradient with Armijo backtracking from `g = 0`.
///
/// The first trial step is `1/λ`; later iterations start from the
/// Barzilai-Borwein step capped at `1/λ`. Since the reduced cost is
/// quadratic, the decrease of a trial step is evaluated from its increment
/// `j(g + d) - j(g) = <j'(g), d> + ½ (d_u' M_γ d_u + λ ‖d‖²)` with `d_u = S d`.
pub fn solve_kkt_projected_gradient(
    problem: &ControlProblem,
    ops: &ControlOperators,
    tol: f64,
    maxit: usize,
) -> Result<SolutionTriple> {
    problem.check_solver_scope()?;
    let mesh = &ops.mesh;
    let lambda = problem.lambda;
    let mut g = project_box(&problem.bounds, &vec![0.0; ops.control_len()]);
    let mut u = ops.solve_state(&g)?;
    let mut p = ops.solve_adjoint(&u)?;
    let mut grad = gradient_from(problem, ops, &p, &g);
    let mut j = objective(problem, mesh, &u, &g);
    let mut history = vec![j];
    let mut best = (f64::INFINITY, g.clone());
    let mut s0 = 1.0 / lambda;
    for it in 0..=maxit {
        let res = stationarity_residual(problem, ops, &p, &g);
        if res < best.0 {
            best = (res, g.clone());
        }
        if res <= tol {
            return Ok(SolutionTriple {
                kkt_residual: res,
                objective: objective(problem, mesh, &u, &g),
                u,
                g,
                p,
                iterations: it,
                history,
            });
        }
        if it == maxit {
            break;
        }
        let mut s = s0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial_in: Vec<f64> = g.iter().zip(&grad).map(|(a, d)| a - s * d).collect();
            let trial = project_box(&problem.bounds, &trial_in);
            let step: Vec<f64> = trial.iter().zip(&g).map(|(a, b)| a - b).collect();
            let du = ops.solve_state(&step)?;
            let slope = l2_inner(mesh, &grad, &step);
            let curvature = ops.tracking_mass.bilinear(&du, &du) + lambda * l2_inner(mesh, &step, &step);
            let change = slope + 0.5 * curvature;
            if change <= ARMIJO * slope {
                accepted = Some((trial, step, du, change));
                break;
            }
            s *= 0.5;
        }
        let Some((trial, step, du, change)) = accepted else {
            return Err(Error::OptimizationNonConvergence {
                iterations: it,
                residual: best.0,
                best: best.1,
            });
        };
        j += change;
        g = trial;
        for (a, b) in u.iter_mut().zip(&du) {
            *a += b;
        }
        p = ops.solve_adjoint(&u)?;
        let next = gradient_from(problem, ops, &p, &g);
        let dg: Vec<f64> = next.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = l2_inner(mesh, &step, &dg);
        s0 = if sy > 0.0 {
            (l2_inner(mesh, &step, &step) / sy).min(1.0 / lambda)
        } else {
            1.0 / lambda
        };
        grad = next;
        history.push(j);
    }
    Err(Error::OptimizationNonConvergence {
        iterations: maxit,
        residual: best.0,
        best: best.1,
    })
}

/// Fixed-point iteration `g <- P_box(-Pi_0 p(g) / λ)`.
///
/// Converges when the reduced Hessian satisfies `‖S* M_γ S‖ / λ < 1`;
/// otherwise it may oscillate and reports non-convergence.
pub fn solve_kkt_fixed_point(
    problem: &ControlProblem,
    ops: &ControlOperators,
    tol: f64,
    maxit: usize,
) -> Result<SolutionTriple> {
    problem.check_solver_scope()?;
    let mesh = &ops.mesh;
    let mut g = project_box(&problem.bounds, &vec![0.0; ops.control_len()]);
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, g.clone());
    for it in 0..=maxit {
        let u = ops.solve_state(&g)?;
        let p = ops.solve_adjoint(&u)?;
        history.push(objective(problem, mesh, &u, &g));
        let res = stationarity_residual(problem, ops, &p, &g);
        if res < best.0 {
            best = (res, g.clone());
        }
        if res <= tol {
            return Ok(SolutionTriple {
                kkt_residual: res,
                objective: *history.last().unwrap(),
                u,
                g,
                p,
                iterations: it,
                history,
            });
        }
        if !res.is_finite() {
            break;
        }
        let target: Vec<f64> = ops.project_adjoint(&p).iter().map(|v| -v / problem.lambda).collect();
        g = project_box(&problem.bounds, &target);
    }
    Err(Error::OptimizationNonConvergence {
        iterations: maxit,
        residual: best.0,
        best: best.1,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    /// `‖A u - L g‖ / max(‖L g‖, 1e-300)`.
    pub state_res: f64,
    /// `‖A p - (M_γ u - d)‖ / max(‖M_γ u - d‖, 1e-300)`.
    pub adjoint_res: f64,
    /// Largest violation of the cellwise sign conditions on `Pi_0 p + λ g`.
    pub max_sign_violation: f64,
}

/// A posteriori check of the discrete optimality system.
///
/// `tol` decides when a control component counts as sitting on a bound.
pub fn verify_kkt(problem: &ControlProblem, ops: &ControlOperators, triple: &SolutionTriple, tol: f64) -> KktReport {
    let a = ops.state_matrix();
    let lg = load_from_cellwise(&ops.mesh, &triple.g);
    let au = a.matvec(&triple.u);
    let r: Vec<f64> = au.iter().zip(&lg).map(|(x, y)| x - y).collect();
    let state_res = norm2(&r) / norm2(&lg).max(1e-300);
    let rhs = ops.adjoint_rhs(&triple.u);
    let ap = a.matvec(&triple.p);
    let r: Vec<f64> = ap.iter().zip(&rhs).map(|(x, y)| x - y).collect();
    let adjoint_res = norm2(&r) / norm2(&rhs).max(1e-300);
    let mu = gradient_from(problem, ops, &triple.p, &triple.g);
    let n = problem.bounds.dim();
    let mut worst: f64 = 0.0;
    for (i, (&gi, &m)) in triple.g.iter().zip(&mu).enumerate() {
        let (lo, hi) = (problem.bounds.lower[i % n], problem.bounds.upper[i % n]);
        let at_lo = gi <= lo + tol * (1.0 + lo.abs());
        let at_hi = gi >= hi - tol * (1.0 + hi.abs());
        let v = match (at_lo, at_hi) {
            (true, true) => 0.0,
            (true, false) => (-m).max(0.0),
            (false, true) => m.max(0.0),
            (false, false) => m.abs(),
        };
        worst = worst.max(v);
    }
    KktReport {
        state_res,
        adjoint_res,
        max_sign_violation: worst,
    }
}

/// Per-node state and adjoint as CSV over all mesh nodes.
pub fn export_nodal_csv(mesh: &Mesh, triple: &SolutionTriple) -> String {
    let n = mesh.dim();
    let u = mesh.expand(&triple.u);
    let p = mesh.expand(&triple.p);
    let mut out = String::from("node,x,y,region");
    for a in 0..n {
        write!(out, ",u{a}").unwrap();
    }
    for a in 0..n {
        write!(out, ",p{a}").unwrap();
    }
    out.push('\n');
    for node in 0..mesh.node_count() {
        let x = mesh.point(node);
        write!(out, "{node},{:.16e},{:.16e},{}", x[0], x[1], mesh.region(node).label()).unwrap();
        for a in 0..n {
            write!(out, ",{:.16e}", u[node * n + a]).unwrap();
        }
        for a in 0..n {
            write!(out, ",{:.16e}", p[node * n + a]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Per-cell control as CSV over the cells of `Omega`.
pub fn export_control_csv(mesh: &Mesh, g: &[f64]) -> String {
    let n = mesh.dim();
    let mut out = String::from("cell,x,y");
    for a in 0..n {
        write!(out, ",g{a}").unwrap();
    }
    out.push('\n');
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        let x = mesh.cell_centroid(c);
        write!(out, "{c},{:.16e},{:.16e}", x[0], x[1]).unwrap();
        for a in 0..n {
            write!(out, ",{:.16e}", g[k * n + a]).unwrap();
        }
        out.push('\n');
    }
    out
}
