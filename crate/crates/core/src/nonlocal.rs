//! The nonlocal bilinear form `B_delta` on continuous P1 fields.
//!
//! `B_delta(u, v) = 1/2 ∬_{D_delta} H k_delta(|x - y|) Du Dv / |x - y|^2`
//! with `D_delta` the pairs having at least one point in `Omega` and
//! `Du(x, y) = (u(x) - u(y)) . (x - y) / |x - y|`. Splitting `D_delta` into
//! `Omega x Omega` and the two copies of `Omega x layer`, every integral is
//! written as an outer integral over `x` in `Omega` and an inner integral
//! over the ball `B_delta(x)`, with inner weight `1/2` for `y` in `Omega`
//! and `1` for `y` in the layer. The inner integral is done in polar
//! coordinates (see the `rays` module); the outer one by graded composite
//! Gauss in 1D and a triangle rule in 2D.
//!
//! Material values enter cellwise: `H` on a pair of cells is the mean of
//! `h` at their centroids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, MaterialField};
use crate::mesh::Mesh;
use crate::quadrature::{GaussRule, Grading, TriangleRule};
use crate::rays::{OuterRule, PieceData, RayIntegrator};
use crate::sparse::CsrMatrix;

/// Quadrature settings for nonlocal integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    /// Gauss order per outer panel (1D) or collapsed-triangle order (2D).
    pub outer_order: usize,
    /// Gauss order per angular sector (2D).
    pub inner_order: usize,
    /// Geometric levels toward panel ends; `None` derives them from `floor_ratio`.
    pub grading_levels: Option<usize>,
    pub grading_ratio: f64,
    /// Relative size of the innermost graded panel.
    pub floor_ratio: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule {
            outer_order: 3,
            inner_order: 3,
            grading_levels: None,
            grading_ratio: 0.5,
            floor_ratio: 1e-6,
        }
    }
}

impl QuadratureRule {
    pub fn validate(&self) -> Result<()> {
        if self.outer_order == 0 || self.inner_order == 0 {
            return Err(Error::Config("quadrature orders must be at least 1".into()));
        }
        if !(self.floor_ratio > 0.0 && self.floor_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "grading floor ratio must lie in (0, 1], got {}",
                self.floor_ratio
            )));
        }
        Grading::new(self.grading_ratio, 0)?;
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.grading_levels
            .unwrap_or_else(|| Grading::levels_for(self.grading_ratio, self.floor_ratio))
    }

    pub(crate) fn outer(&self) -> Result<OuterRule> {
        self.validate()?;
        Ok(OuterRule {
            gauss: GaussRule::new(self.outer_order),
            grading: Grading::new(self.grading_ratio, self.levels())?,
            triangle: TriangleRule::new(self.outer_order),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyDiagnostics {
    /// Interacting (outer cell, inner cell) pairs.
    pub pair_count: usize,
    pub nnz: usize,
    pub min_entry: f64,
    pub max_entry: f64,
}

/// Matrix of `B_delta` on the free DOFs, plus its coupling to constrained DOFs.
#[derive(Clone, Debug)]
pub struct StiffnessNonlocal {
    mesh: Mesh,
    kernel: KernelSpec,
    material: MaterialField,
    quad: QuadratureRule,
    matrix: CsrMatrix,
    coupling: CsrMatrix,
    diagnostics: AssemblyDiagnostics,
}

impl StiffnessNonlocal {
    /// `uᵀ A v ≈ B_delta(u, v)` on free coefficient vectors.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Free rows, constrained columns.
    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn material(&self) -> &MaterialField {
        &self.material
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn diagnostics(&self) -> &AssemblyDiagnostics {
        &self.diagnostics
    }

    /// Operator of the state equation `2 B_delta(u, v) = <g, v>`, the
    /// Euler-Lagrange equation of `B_delta(u, u) - <g, u>`.
    pub fn state_matrix(&self) -> CsrMatrix {
        self.matrix.scaled(2.0)
    }

    /// `f_i = -B_delta(u0, phi_i)` for data `u0` on the constrained nodes.
    ///
    /// `u0` is a full nodal vector (`node * n + component`); it must vanish
    /// at free DOFs.
    pub fn lifting_load(&self, u0: &[f64]) -> Result<Vec<f64>> {
        let n = self.mesh.dim();
        let dofs = self.mesh.dofs();
        if u0.len() != self.mesh.node_count() * n {
            return Err(Error::Assembly(format!(
                "lifting data has length {}, expected {}",
                u0.len(),
                self.mesh.node_count() * n
            )));
        }
        for k in 0..dofs.free_count() {
            let (node, c) = dofs.free_owner(k);
            if u0[node * n + c] != 0.0 {
                return Err(Error::Assembly(format!(
                    "lifting data given at node {node} inside Omega; only layer and boundary nodes carry data"
                )));
            }
        }
        let constrained: Vec<f64> = (0..dofs.constrained_count())
            .map(|k| {
                let (node, c) = dofs.constrained_owner(k);
                u0[node * n + c]
            })
            .collect();
        Ok(self.coupling.matvec(&constrained).into_iter().map(|v| -v).collect())
    }
}

pub(crate) fn cell_material(mesh: &Mesh, material: &MaterialField) -> Result<Vec<f64>> {
    let centroids: Vec<[f64; 2]> = (0..mesh.cell_count()).map(|c| mesh.cell_centroid(c)).collect();
    material.check_bounds(centroids.iter().copied())?;
    Ok(centroids.iter().map(|&p| material.eval(p)).collect())
}

fn check_inputs(mesh: &Mesh, kernel: &KernelSpec, quad: &QuadratureRule) -> Result<()> {
    quad.validate()?;
    if kernel.dim() != mesh.dim() {
        return Err(Error::Assembly(format!(
            "kernel dimension {} does not match mesh dimension {}",
            kernel.dim(),
            mesh.dim()
        )));
    }
    let reach = mesh.padding_cells() as f64 * mesh.spacing();
    if reach < kernel.delta() * (1.0 - 1e-10) {
        return Err(Error::Assembly(format!(
            "mesh padding {reach} does not cover the horizon {}",
            kernel.delta()
        )));
    }
    Ok(())
}

/// Maps nodes near an outer cell to a dense local box.
struct LocalBox {
    width: usize,
    stride: usize,
    i0: isize,
    j0: isize,
    size: usize,
}

impl LocalBox {
    fn around(mesh: &Mesh, cell: usize) -> Self {
        let g = mesh.grid();
        let stride = g.counts[0] + 1;
        let p = mesh.padding_cells() as isize + 1;
        let first = mesh.cell(cell).iter().copied().min().unwrap();
        let (i, j) = ((first % stride) as isize, (first / stride) as isize);
        let width = (2 * p + 2) as usize;
        let (j0, rows) = if mesh.dim() == 1 { (0, 1) } else { (j - p, width) };
        LocalBox {
            width,
            stride,
            i0: i - p,
            j0,
            size: width * rows,
        }
    }

    #[inline]
    fn local(&self, node: usize) -> usize {
        let i = (node % self.stride) as isize - self.i0;
        let j = (node / self.stride) as isize - self.j0;
        debug_assert!(i >= 0 && (i as usize) < self.width && j >= 0);
        j as usize * self.width + i as usize
    }

    fn global(&self, local: usize) -> usize {
        let (i, j) = (
            (local % self.width) as isize + self.i0,
            (local / self.width) as isize + self.j0,
        );
        j as usize * self.stride + i as usize
    }
}

/// `∑_ij` form of one piece: `a0_i a0_j M0 + (a0_i a1_j + a1_i a0_j) M1 + a1_i a1_j M2`.
#[inline]
fn pair_moment(p: &PieceData<'_>, i: usize, j: usize) -> f64 {
    let [m0, m1, m2] = p.moments;
    p.a0[i] * p.a0[j] * m0 + (p.a0[i] * p.a1[j] + p.a1[i] * p.a0[j]) * m1 + p.a1[i] * p.a1[j] * m2
}

pub fn assemble_stiffness_nonlocal(
    mesh: &Mesh,
    kernel: &KernelSpec,
    material: &MaterialField,
    quad: &QuadratureRule,
) -> Result<StiffnessNonlocal> {
    check_inputs(mesh, kernel, quad)?;
    if mesh.free_dof_count() == 0 {
        return Err(Error::Assembly("mesh has no free degrees of freedom".into()));
    }
    let hbar = cell_material(mesh, material)?;
    let outer = quad.outer()?;
    let ri = RayIntegrator::new(mesh, *kernel, quad.inner_order);
    let n = mesh.dim();

    let per_cell: Vec<(Vec<(usize, usize, f64)>, usize)> = mesh
        .omega_cells()
        .par_iter()
        .map(|&a| {
            let lb = LocalBox::around(mesh, a);
            let nn = n * n;
            let mut acc = vec![0.0; lb.size * lb.size * nn];
            let mut touched = vec![false; lb.size];
            let mut partners = std::collections::BTreeSet::new();
            let mut loc = [0usize; 6];
            for (x, wx) in ri.outer_points(a, &outer) {
                ri.visit_point(a, x, wx, &mut |p: &PieceData<'_>| {
                    partners.insert(p.cell_b);
                    let region = if mesh.cell_in_omega(p.cell_b) { 0.5 } else { 1.0 };
                    let f = p.weight * region * 0.5 * (hbar[a] + hbar[p.cell_b]);
                    let m = p.nodes.len();
                    for (k, &node) in p.nodes.iter().enumerate() {
                        loc[k] = lb.local(node);
                        touched[loc[k]] = true;
                    }
                    for i in 0..m {
                        for j in 0..m {
                            let q = f * pair_moment(p, i, j);
                            let base = (loc[i] * lb.size + loc[j]) * nn;
                            for al in 0..n {
                                for be in 0..n {
                                    acc[base + al * n + be] += q * (p.e[al] * p.e[be]);
                                }
                            }
                        }
                    }
                });
            }
            let nodes: Vec<usize> = (0..lb.size).filter(|&l| touched[l]).collect();
            let mut trip = Vec::new();
            for &li in &nodes {
                for &lj in &nodes {
                    let base = (li * lb.size + lj) * nn;
                    let (gi, gj) = (lb.global(li), lb.global(lj));
                    for al in 0..n {
                        for be in 0..n {
                            let v = acc[base + al * n + be];
                            if v != 0.0 {
                                trip.push((gi * n + al, gj * n + be, v));
                            }
                        }
                    }
                }
            }
            (trip, partners.len())
        })
        .collect();

    let pair_count = per_cell.iter().map(|c| c.1).sum();
    if pair_count == 0 {
        return Err(Error::Assembly("quadrature produced no interacting cell pairs".into()));
    }
    let total = mesh.node_count() * n;
    let triplets: Vec<_> = per_cell.into_iter().flat_map(|c| c.0).collect();
    let full = CsrMatrix::from_triplets(total, total, triplets);
    let dofs = mesh.dofs();
    let free: Vec<usize> = (0..dofs.free_count())
        .map(|k| {
            let (node, c) = dofs.free_owner(k);
            node * n + c
        })
        .collect();
    let constrained: Vec<usize> = (0..dofs.constrained_count())
        .map(|k| {
            let (node, c) = dofs.constrained_owner(k);
            node * n + c
        })
        .collect();
    let matrix = full.select(&free, &free);
    let coupling = full.select(&free, &constrained);
    let (min_entry, max_entry) = matrix
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let diagnostics = AssemblyDiagnostics {
        pair_count,
        nnz: matrix.nnz(),
        min_entry,
        max_entry,
    };
    Ok(StiffnessNonlocal {
        mesh: mesh.clone(),
        kernel: *kernel,
        material: material.clone(),
        quad: quad.clone(),
        matrix,
        coupling,
        diagnostics,
    })
}

/// `(u(x) - u(y)) . e` on a piece as `s0 + s1 r`.
#[inline]
fn strain_coefficients(p: &PieceData<'_>, u: &[f64], n: usize) -> (f64, f64) {
    let (mut s0, mut s1) = (0.0, 0.0);
    for (k, &node) in p.nodes.iter().enumerate() {
        let ue: f64 = (0..n).map(|c| u[node * n + c] * p.e[c]).sum();
        s0 += p.a0[k] * ue;
        s1 += p.a1[k] * ue;
    }
    (s0, s1)
}

#[inline]
fn piece_energy(p: &PieceData<'_>, s0: f64, s1: f64) -> f64 {
    let [m0, m1, m2] = p.moments;
    let mut v = s1 * s1 * m2;
    if s0 != 0.0 {
        v += s0 * s0 * m0 + 2.0 * s0 * s1 * m1;
    }
    v
}

/// `E_delta(u) = ∬_{D_delta} H k |Du|^2 / |x - y|^2` for a full nodal vector `u`
/// (layer values included).
pub fn energy_nonlocal(
    mesh: &Mesh,
    kernel: &KernelSpec,
    material: &MaterialField,
    quad: &QuadratureRule,
    u: &[f64],
) -> Result<f64> {
    check_inputs(mesh, kernel, quad)?;
    let n = mesh.dim();
    if u.len() != mesh.node_count() * n {
        return Err(Error::Assembly(format!(
            "field has length {}, expected {}",
            u.len(),
            mesh.node_count() * n
        )));
    }
    let hbar = cell_material(mesh, material)?;
    let outer = quad.outer()?;
    let ri = RayIntegrator::new(mesh, *kernel, quad.inner_order);
    let parts: Vec<f64> = mesh
        .omega_cells()
        .par_iter()
        .map(|&a| {
            let mut sum = 0.0;
            for (x, wx) in ri.outer_points(a, &outer) {
                ri.visit_point(a, x, wx, &mut |p: &PieceData<'_>| {
                    let region = if mesh.cell_in_omega(p.cell_b) { 1.0 } else { 2.0 };
                    let (s0, s1) = strain_coefficients(p, u, n);
                    sum += p.weight * region * 0.5 * (hbar[a] + hbar[p.cell_b]) * piece_energy(p, s0, s1);
                });
            }
            sum
        })
        .collect();
    Ok(parts.iter().sum())
}

/// `[u]_X`: square root of the energy with `h ≡ 1`.
pub fn seminorm_x(mesh: &Mesh, kernel: &KernelSpec, quad: &QuadratureRule, u: &[f64]) -> Result<f64> {
    let one = MaterialField::constant(1.0)?;
    Ok(energy_nonlocal(mesh, kernel, &one, quad, u)?.sqrt())
}

/// `∫_{B_delta(x)} H k |Du(x, y)|^2 / |x - y|^2 dy` at a point `x` of `Omega`.
pub fn energy_density_at(
    mesh: &Mesh,
    kernel: &KernelSpec,
    material: &MaterialField,
    quad: &QuadratureRule,
    u: &[f64],
    x: [f64; 2],
) -> Result<f64> {
    check_inputs(mesh, kernel, quad)?;
    let hbar = cell_material(mesh, material)?;
    let ri = RayIntegrator::new(mesh, *kernel, quad.inner_order);
    let n = mesh.dim();
    let a = mesh.locate(x);
    let mut sum = 0.0;
    ri.visit_point(a, x, 1.0, &mut |p: &PieceData<'_>| {
        let (s0, s1) = strain_coefficients(p, u, n);
        sum += p.weight * 0.5 * (hbar[a] + hbar[p.cell_b]) * piece_energy(p, s0, s1);
    });
    Ok(sum)
}
