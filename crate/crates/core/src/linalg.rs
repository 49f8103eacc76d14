//! Symmetric positive definite solves and generalized eigenvalue estimates.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Largest dimension handled by the dense Cholesky path.
pub const DENSE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    ConjugateGradient,
    Cholesky,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub wall_time: Duration,
    pub method: SolveMethod,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub maxit: usize,
    /// Block size of the Jacobi preconditioner.
    pub block: usize,
    /// Systems up to this dimension are factored densely.
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            maxit: 10_000,
            block: 1,
            dense_limit: DENSE_LIMIT,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }

    pub fn block(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }
}

fn check_system(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Matrix(format!(
            "incompatible system: {}x{} matrix, right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(())
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm2(&r) / bnorm
}

/// Inverted diagonal blocks of `a`.
struct BlockJacobi {
    block: usize,
    inv: Vec<f64>,
}

impl BlockJacobi {
    fn new(a: &CsrMatrix, block: usize) -> Result<Self> {
        let n = a.nrows();
        let block = if n % block == 0 { block } else { 1 };
        let mut inv = Vec::with_capacity(n * block);
        for start in (0..n).step_by(block) {
            let d = DMatrix::from_fn(block, block, |i, j| a.get(start + i, start + j));
            let chol = Cholesky::new(d)
                .ok_or_else(|| Error::Matrix(format!("diagonal block at row {start} is not positive definite")))?;
            inv.extend(chol.inverse().iter().copied());
        }
        Ok(BlockJacobi { block, inv })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let b = self.block;
        for (k, (rc, zc)) in r.chunks(b).zip(z.chunks_mut(b)).enumerate() {
            let m = &self.inv[k * b * b..(k + 1) * b * b];
            for i in 0..b {
                // Column-major block; the block is symmetric.
                zc[i] = (0..b).map(|j| m[j * b + i] * rc[j]).sum();
            }
        }
    }
}

/// Block-Jacobi preconditioned conjugate gradients from `x0 = 0`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    check_system(a, b)?;
    let start = Instant::now();
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, report(0, 0.0, start, SolveMethod::ConjugateGradient)));
    }
    let pre = BlockJacobi::new(a, opts.block)?;
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    for it in 1..=opts.maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Matrix(format!(
                "non-positive curvature {pap:.3e} in conjugate gradients at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / bnorm;
        if res <= opts.tol {
            let true_res = relative_residual(a, &x, b, bnorm);
            if true_res <= opts.tol {
                return Ok((x, report(it, true_res, start, SolveMethod::ConjugateGradient)));
            }
            // Drifted recursive residual: restart from the true one.
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            pre.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        message: format!(
            "conjugate gradients did not reach {:.1e} in {} iterations",
            opts.tol, opts.maxit
        ),
        report: report(opts.maxit, res, start, SolveMethod::ConjugateGradient),
    })
}

fn report(iterations: usize, relative_residual: f64, start: Instant, method: SolveMethod) -> SolveReport {
    SolveReport {
        iterations,
        relative_residual,
        wall_time: start.elapsed(),
        method,
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// Conjugate gradients first; systems up to the dense limit that fail to
/// converge are retried with a dense Cholesky factorization.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport)> {
    solve_spd_with(
        a,
        b,
        &SolverOptions {
            tol,
            maxit,
            ..Default::default()
        },
    )
}

pub fn solve_spd_with(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    match conjugate_gradient(a, b, opts) {
        Err(Error::NonConvergence { .. }) if a.nrows() <= opts.dense_limit => {
            DenseSpd::factor(a)?.solve(a, b, opts.tol)
        }
        other => other,
    }
}

/// Dense Cholesky factorization of a small SPD matrix.
pub struct DenseSpd {
    chol: Cholesky<f64, Dyn>,
}

impl DenseSpd {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let chol = Cholesky::new(a.to_dense())
            .ok_or_else(|| Error::Matrix("matrix is not positive definite (Cholesky failed)".into()))?;
        Ok(DenseSpd { chol })
    }

    /// Solves with up to three steps of iterative refinement.
    pub fn solve(&self, a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        check_system(a, b)?;
        let start = Instant::now();
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok((vec![0.0; b.len()], report(0, 0.0, start, SolveMethod::Cholesky)));
        }
        let mut x = self.chol.solve(&DVector::from_column_slice(b));
        let mut res = relative_residual(a, x.as_slice(), b, bnorm);
        let mut steps = 0;
        while res > tol && steps < 3 {
            let ax = a.matvec(x.as_slice());
            let r = DVector::from_iterator(b.len(), b.iter().zip(&ax).map(|(bi, ai)| bi - ai));
            x += self.chol.solve(&r);
            res = relative_residual(a, x.as_slice(), b, bnorm);
            steps += 1;
        }
        let rep = report(steps, res, start, SolveMethod::Cholesky);
        if res > tol {
            return Err(Error::NonConvergence {
                message: format!("dense solve residual {res:.3e} exceeds {tol:.1e}"),
                report: rep,
            });
        }
        Ok((x.as_slice().to_vec(), rep))
    }
}

/// Reusable solver for one SPD matrix.
///
/// Small systems are factored once and solved densely; larger ones use
/// preconditioned conjugate gradients on every call.
pub struct SpdSolver {
    matrix: CsrMatrix,
    opts: SolverOptions,
    dense: Option<DenseSpd>,
}

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, opts: SolverOptions) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Matrix("solver requires a square matrix".into()));
        }
        let dense = if matrix.nrows() <= opts.dense_limit {
            Some(DenseSpd::factor(&matrix)?)
        } else {
            None
        };
        Ok(SpdSolver { matrix, opts, dense })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        match &self.dense {
            Some(d) => d.solve(&self.matrix, b, self.opts.tol),
            None => conjugate_gradient(&self.matrix, b, &self.opts),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenEstimate {
    pub value: f64,
    /// `M`-normalized eigenvector.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Smallest eigenvalue of `A x = lambda M x` by inverse power iteration.
pub fn smallest_eig(a: &CsrMatrix, m: &CsrMatrix, tol: f64) -> Result<EigenEstimate> {
    smallest_eig_with(a, m, tol, &SolverOptions::default())
}

pub fn smallest_eig_with(a: &CsrMatrix, m: &CsrMatrix, tol: f64, opts: &SolverOptions) -> Result<EigenEstimate> {
    let n = a.nrows();
    if m.nrows() != n || a.ncols() != n || m.ncols() != n || n == 0 {
        return Err(Error::Matrix(
            "eigenproblem matrices must be square with matching sizes".into(),
        ));
    }
    let solver = SpdSolver::new(
        a.clone(),
        SolverOptions {
            tol: opts.tol.min(1e-12),
            ..opts.clone()
        },
    )?;
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = f64::INFINITY;
    const MAXIT: usize = 2000;
    for it in 1..=MAXIT {
        let mx = m.matvec(&x);
        let (y, _) = solver.solve(&mx)?;
        let ay = a.matvec(&y);
        let my = m.matvec(&y);
        let num = dot(&y, &ay);
        let den = dot(&y, &my);
        let next = num / den;
        let scale = 1.0 / den.sqrt();
        x = y.iter().map(|v| v * scale).collect();
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(EigenEstimate {
                value: next,
                vector: x,
                iterations: it,
            });
        }
        lambda = next;
    }
    Err(Error::Matrix(format!(
        "inverse iteration did not reach relative tolerance {tol:.1e} in {MAXIT} steps"
    )))
}
