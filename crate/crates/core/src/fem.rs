//! Mass matrices, loads, the piecewise-constant projection `Pi_0`, norms and
//! transfers between meshes.
//!
//! Nodal vectors come in two layouts: *free* vectors indexed by the DOF map,
//! and *full* vectors indexed by `node * n + component`. Cellwise data on
//! `Omega` (controls, projections) is indexed by `position * n + component`
//! where `position` runs over [`Mesh::omega_cells`].

use crate::expr::{ScalarField, VectorField};
use crate::mesh::Mesh;
use crate::quadrature::{GaussRule, TriangleRule};
use crate::sparse::CsrMatrix;

/// Quadrature points and weights on cell `c`.
pub fn cell_rule(mesh: &Mesh, c: usize, order: usize) -> Vec<([f64; 2], f64)> {
    let vs = mesh.cell(c);
    match mesh.dim() {
        1 => {
            let (a, b) = (mesh.point(vs[0])[0], mesh.point(vs[1])[0]);
            GaussRule::new(order).on(a, b).map(|(x, w)| ([x, 0.0], w)).collect()
        }
        _ => {
            let p = [mesh.point(vs[0]), mesh.point(vs[1]), mesh.point(vs[2])];
            let area = mesh.cell_volume(c);
            let rule = TriangleRule::new(order);
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(l, w)| {
                    let x = [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ];
                    (x, w * area)
                })
                .collect()
        }
    }
}

/// Indices of the full DOFs listed by the free numbering.
pub fn free_indices(mesh: &Mesh) -> Vec<usize> {
    let n = mesh.dim();
    (0..mesh.free_dof_count())
        .map(|k| {
            let (node, c) = mesh.dofs().free_owner(k);
            node * n + c
        })
        .collect()
}

/// `∫_Omega w phi_i phi_j` over all nodes (full layout, identity on components).
fn weighted_mass_full(mesh: &Mesh, weight: Option<(&ScalarField, usize)>) -> CsrMatrix {
    let n = mesh.dim();
    let nv = n + 1;
    let mut t = Vec::new();
    for &c in mesh.omega_cells() {
        let vs = mesh.cell(c);
        let mut local = [[0.0; 3]; 3];
        match weight {
            None => {
                // Exact P1 mass: |T| (1 + delta_ij) / ((n + 1)(n + 2)).
                let vol = mesh.cell_volume(c);
                let scale = vol / ((nv * (nv + 1)) as f64);
                for (i, row) in local.iter_mut().enumerate().take(nv) {
                    for (j, v) in row.iter_mut().enumerate().take(nv) {
                        *v = if i == j { 2.0 * scale } else { scale };
                    }
                }
            }
            Some((w, order)) => {
                let b = mesh.barycentric(c);
                for (x, wx) in cell_rule(mesh, c, order) {
                    let wv = wx * w.eval(x);
                    for i in 0..nv {
                        for j in 0..nv {
                            local[i][j] += wv * b.eval(i, x) * b.eval(j, x);
                        }
                    }
                }
            }
        }
        for i in 0..nv {
            for j in 0..nv {
                for a in 0..n {
                    t.push((vs[i] * n + a, vs[j] * n + a, local[i][j]));
                }
            }
        }
    }
    let total = mesh.node_count() * n;
    CsrMatrix::from_triplets(total, total, t)
}

/// Unrestricted mass matrix over `Omega` in the full layout.
pub fn assemble_mass_full(mesh: &Mesh) -> CsrMatrix {
    weighted_mass_full(mesh, None)
}

/// `M_ij = ∫_Omega phi_i . phi_j` on the free DOFs.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let free = free_indices(mesh);
    assemble_mass_full(mesh).select(&free, &free)
}

/// `∫_Omega w phi_i . phi_j` on the free DOFs, by Gauss quadrature of `order`.
pub fn assemble_weighted_mass(mesh: &Mesh, weight: &ScalarField, order: usize) -> CsrMatrix {
    let free = free_indices(mesh);
    weighted_mass_full(mesh, Some((weight, order))).select(&free, &free)
}

/// `b_i = ∫_Omega w g . phi_i` on the free DOFs.
pub fn assemble_weighted_load(mesh: &Mesh, g: &VectorField, weight: Option<&ScalarField>, order: usize) -> Vec<f64> {
    let n = mesh.dim();
    let mut full = vec![0.0; mesh.node_count() * n];
    let mut gv = vec![0.0; n];
    for &c in mesh.omega_cells() {
        let b = mesh.barycentric(c);
        let vs = mesh.cell(c);
        for (x, wx) in cell_rule(mesh, c, order) {
            g.eval_into(x, &mut gv);
            let w = wx * weight.map_or(1.0, |w| w.eval(x));
            for (k, &v) in vs.iter().enumerate() {
                let phi = b.eval(k, x);
                for a in 0..n {
                    full[v * n + a] += w * gv[a] * phi;
                }
            }
        }
    }
    mesh.restrict(&full)
}

/// `b_i = ∫_Omega g . phi_i` by per-cell Gauss quadrature.
pub fn assemble_load(mesh: &Mesh, g: &VectorField, order: usize) -> Vec<f64> {
    assemble_weighted_load(mesh, g, None, order)
}

/// Load of a cellwise constant field: `∫_T phi_i = |T| / (n + 1)`.
pub fn load_from_cellwise(mesh: &Mesh, g: &[f64]) -> Vec<f64> {
    let n = mesh.dim();
    let mut full = vec![0.0; mesh.node_count() * n];
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        let share = mesh.cell_volume(c) / (n + 1) as f64;
        for &v in mesh.cell(c) {
            for a in 0..n {
                full[v * n + a] += share * g[k * n + a];
            }
        }
    }
    mesh.restrict(&full)
}

/// Transpose of [`load_from_cellwise`]: `(Pi_0-adjoint)`, i.e. `|T| * mean_T(p)`.
pub fn cellwise_moments(mesh: &Mesh, p_free: &[f64]) -> Vec<f64> {
    let n = mesh.dim();
    let full = mesh.expand(p_free);
    let mut out = vec![0.0; mesh.omega_cells().len() * n];
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        let share = mesh.cell_volume(c) / (n + 1) as f64;
        for &v in mesh.cell(c) {
            for a in 0..n {
                out[k * n + a] += share * full[v * n + a];
            }
        }
    }
    out
}

/// Cell means of a P1 function given as a full nodal vector.
pub fn project_pi0_fe(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    let n = mesh.dim();
    let nv = (n + 1) as f64;
    let mut out = vec![0.0; mesh.omega_cells().len() * n];
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        for &v in mesh.cell(c) {
            for a in 0..n {
                out[k * n + a] += u[v * n + a] / nv;
            }
        }
    }
    out
}

/// Cell means of a field, by Gauss quadrature of `order`.
pub fn project_pi0_field(mesh: &Mesh, f: &VectorField, order: usize) -> Vec<f64> {
    let n = mesh.dim();
    let mut out = vec![0.0; mesh.omega_cells().len() * n];
    let mut fv = vec![0.0; n];
    for (k, &c) in mesh.omega_cells().iter().enumerate() {
        let vol = mesh.cell_volume(c);
        for (x, w) in cell_rule(mesh, c, order) {
            f.eval_into(x, &mut fv);
            for a in 0..n {
                out[k * n + a] += w * fv[a] / vol;
            }
        }
    }
    out
}

/// `Pi_0` of cellwise data is the identity; provided for symmetry of the API.
pub fn project_pi0_cellwise(g: &[f64]) -> Vec<f64> {
    g.to_vec()
}

/// `L^2(Omega)` norm of a cellwise constant field.
pub fn l2_norm_cellwise(mesh: &Mesh, g: &[f64]) -> f64 {
    let n = mesh.dim();
    mesh.omega_cells()
        .iter()
        .enumerate()
        .map(|(k, &c)| mesh.cell_volume(c) * (0..n).map(|a| g[k * n + a].powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// `L^2(Omega)` norm of a P1 function (full layout), exact.
pub fn l2_norm_fe(mesh: &Mesh, u: &[f64]) -> f64 {
    assemble_mass_full(mesh).bilinear(u, u).max(0.0).sqrt()
}

/// `‖u_h - f‖_{L^2(Omega)}` by Gauss quadrature of `order`.
pub fn l2_error_vs_field(mesh: &Mesh, u: &[f64], f: &VectorField, order: usize) -> f64 {
    let n = mesh.dim();
    let mut fv = vec![0.0; n];
    let mut sum = 0.0;
    for &c in mesh.omega_cells() {
        let b = mesh.barycentric(c);
        let vs = mesh.cell(c);
        for (x, w) in cell_rule(mesh, c, order) {
            f.eval_into(x, &mut fv);
            for a in 0..n {
                let uh: f64 = vs.iter().enumerate().map(|(k, &v)| u[v * n + a] * b.eval(k, x)).sum();
                sum += w * (uh - fv[a]).powi(2);
            }
        }
    }
    sum.sqrt()
}

/// Value of a P1 function (full layout) at `x`.
pub fn eval_fe(mesh: &Mesh, u: &[f64], x: [f64; 2]) -> [f64; 2] {
    let n = mesh.dim();
    let c = mesh.locate(x);
    let b = mesh.barycentric(c);
    let mut out = [0.0; 2];
    for (k, &v) in mesh.cell(c).iter().enumerate() {
        let phi = b.eval(k, x);
        for a in 0..n {
            out[a] += u[v * n + a] * phi;
        }
    }
    out
}

/// P1 interpolation of `u` (full layout on `from`) at the nodes of `to` in
/// the closure of `Omega`; other nodes of `to` get zero.
pub fn transfer_fe(from: &Mesh, u: &[f64], to: &Mesh) -> Vec<f64> {
    let n = to.dim();
    let mut out = vec![0.0; to.node_count() * n];
    for node in 0..to.node_count() {
        if to.region(node) == crate::mesh::NodeRegion::Layer {
            continue;
        }
        let v = eval_fe(from, u, to.point(node));
        out[node * n..(node + 1) * n].copy_from_slice(&v[..n]);
    }
    out
}

/// Cellwise data on `from` sampled at the centroids of the `Omega` cells of `to`.
pub fn transfer_cellwise(from: &Mesh, g: &[f64], to: &Mesh) -> Vec<f64> {
    let n = to.dim();
    let mut out = vec![0.0; to.omega_cells().len() * n];
    for (k, &c) in to.omega_cells().iter().enumerate() {
        let src = from.locate(to.cell_centroid(c));
        let pos = from
            .omega_position(src)
            .expect("centroid of an Omega cell lies in Omega");
        out[k * n..(k + 1) * n].copy_from_slice(&g[pos * n..(pos + 1) * n]);
    }
    out
}
