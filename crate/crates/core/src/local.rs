//! The local limit form
//! `B_0(u, v) = 1/(n(n+2)) ∫_Omega h (2 <Sym ∇u, Sym ∇v>_F + div u div v)`
//! on P1 fields with homogeneous Dirichlet data on `∂Omega`.
//!
//! Gradients are constant per cell and `h` is sampled at cell centroids, so
//! the assembly is exact for cellwise constant materials.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::free_indices;
use crate::kernel::MaterialField;
use crate::mesh::Mesh;
use crate::nonlocal::cell_material;
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug)]
pub struct StiffnessLocal {
    mesh: Mesh,
    material: MaterialField,
    matrix: CsrMatrix,
}

impl StiffnessLocal {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn material(&self) -> &MaterialField {
        &self.material
    }

    /// Operator of the state equation `B_0(u, v) = <g, v>`.
    pub fn state_matrix(&self) -> CsrMatrix {
        self.matrix.clone()
    }
}

/// Element matrix entry for `(phi_a e_alpha, phi_b e_beta)` without the volume factor.
#[inline]
fn local_entry(ga: [f64; 2], gb: [f64; 2], al: usize, be: usize) -> f64 {
    let dot = ga[0] * gb[0] + ga[1] * gb[1];
    let kron = if al == be { dot } else { 0.0 };
    kron + ga[be] * gb[al] + ga[al] * gb[be]
}

pub fn assemble_stiffness_local(mesh: &Mesh, material: &MaterialField) -> Result<StiffnessLocal> {
    if mesh.free_dof_count() == 0 {
        return Err(Error::Assembly("mesh has no free degrees of freedom".into()));
    }
    let n = mesh.dim();
    let nv = n + 1;
    let scale = 1.0 / (n * (n + 2)) as f64;
    let hbar = cell_material(mesh, material)?;
    let per_cell: Vec<Vec<(usize, usize, f64)>> = mesh
        .omega_cells()
        .par_iter()
        .map(|&c| {
            let b = mesh.barycentric(c);
            let vs = mesh.cell(c);
            let f = scale * hbar[c] * mesh.cell_volume(c);
            let mut t = Vec::with_capacity(nv * nv * n * n);
            for i in 0..nv {
                for j in 0..nv {
                    for al in 0..n {
                        for be in 0..n {
                            let v = f * local_entry(b.grads[i], b.grads[j], al, be);
                            t.push((vs[i] * n + al, vs[j] * n + be, v));
                        }
                    }
                }
            }
            t
        })
        .collect();
    let total = mesh.node_count() * n;
    let full = CsrMatrix::from_triplets(total, total, per_cell.into_iter().flatten().collect());
    let free = free_indices(mesh);
    Ok(StiffnessLocal {
        mesh: mesh.clone(),
        material: material.clone(),
        matrix: full.select(&free, &free),
    })
}

/// Cellwise gradient `(∇u)_{ab} = ∂_b u_a` of a full nodal vector.
fn cell_gradient(mesh: &Mesh, u: &[f64], c: usize) -> [[f64; 2]; 2] {
    let n = mesh.dim();
    let b = mesh.barycentric(c);
    let mut g = [[0.0; 2]; 2];
    for (k, &v) in mesh.cell(c).iter().enumerate() {
        for a in 0..n {
            for d in 0..n {
                g[a][d] += u[v * n + a] * b.grads[k][d];
            }
        }
    }
    g
}

/// `[u]_{H^1} = ‖∇u‖_{L^2(Omega)}`.
pub fn seminorm_h1(mesh: &Mesh, u: &[f64]) -> f64 {
    let n = mesh.dim();
    mesh.omega_cells()
        .iter()
        .map(|&c| {
            let g = cell_gradient(mesh, u, c);
            let sq: f64 = (0..n)
                .flat_map(|a| (0..n).map(move |d| (a, d)))
                .map(|(a, d)| g[a][d].powi(2))
                .sum();
            mesh.cell_volume(c) * sq
        })
        .sum::<f64>()
        .sqrt()
}

/// `E_0(u) = 1/(n(n+2)) ∫_Omega h (2 |Sym ∇u|_F^2 + (div u)^2)`.
pub fn energy_local(mesh: &Mesh, material: &MaterialField, u: &[f64]) -> Result<f64> {
    let n = mesh.dim();
    let hbar = cell_material(mesh, material)?;
    let scale = 1.0 / (n * (n + 2)) as f64;
    Ok(mesh
        .omega_cells()
        .iter()
        .map(|&c| {
            let g = cell_gradient(mesh, u, c);
            let mut sym2 = 0.0;
            let mut div = 0.0;
            for a in 0..n {
                div += g[a][a];
                for d in 0..n {
                    sym2 += (0.5 * (g[a][d] + g[d][a])).powi(2);
                }
            }
            scale * hbar[c] * mesh.cell_volume(c) * (2.0 * sym2 + div * div)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VectorField;
    use crate::linalg::DenseSpd;
    use crate::mesh::{build_interval_mesh, build_rect_mesh, Domain};
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_stencil() {
        let h = 0.125;
        let mesh = build_interval_mesh(Domain::unit(1), 0.0, h).unwrap();
        let s = assemble_stiffness_local(&mesh, &MaterialField::constant(1.0).unwrap()).unwrap();
        let a = s.matrix();
        assert!((a.get(3, 3) - 2.0 / h).abs() < 1e-12);
        assert!((a.get(3, 2) + 1.0 / h).abs() < 1e-12);
        assert!((a.get(3, 4) + 1.0 / h).abs() < 1e-12);
        assert_eq!(a.get(3, 5), 0.0);
    }

    #[test]
    fn weighted_laplacian_in_1d() {
        let h = 0.1;
        let mesh = build_interval_mesh(Domain::unit(1), 0.0, h).unwrap();
        let mat = MaterialField::parse("1 + x", 1.0, 2.0).unwrap();
        let a = assemble_stiffness_local(&mesh, &mat).unwrap();
        // Classical formula: A_ii = (h_{i-1/2} + h_{i+1/2}) / h, A_{i,i+1} = -h_{i+1/2} / h.
        for i in 0..mesh.free_dof_count() {
            let x = (i + 1) as f64 * h;
            let (left, right) = (1.0 + x - h / 2.0, 1.0 + x + h / 2.0);
            assert!((a.matrix().get(i, i) - (left + right) / h).abs() < 1e-12);
            if i + 1 < mesh.free_dof_count() {
                assert!((a.matrix().get(i, i + 1) + right / h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilation_and_sine_energies() {
        let mesh = build_rect_mesh(Domain::unit(2), 0.0, 0.25).unwrap();
        let one = MaterialField::constant(1.0).unwrap();
        let dil = mesh.interpolate(&VectorField::parse(&["x", "y"]).unwrap(), false);
        assert!((energy_local(&mesh, &one, &dil).unwrap() - 1.0).abs() < 1e-13);
        let m1 = build_interval_mesh(Domain::unit(1), 0.0, 1.0 / 256.0).unwrap();
        let s = m1.interpolate(&VectorField::parse(&["sin(pi*x)"]).unwrap(), false);
        let e = energy_local(&m1, &one, &s).unwrap();
        let target = std::f64::consts::PI.powi(2) / 2.0;
        assert!((e - target).abs() < 1e-3, "{e}");
        let lin = m1.interpolate(&VectorField::parse(&["x"]).unwrap(), false);
        assert!((seminorm_h1(&m1, &lin) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_definite_and_linear_in_material() {
        let mesh = build_rect_mesh(Domain::unit(2), 0.0, 0.25).unwrap();
        let mat = MaterialField::parse("1 + box(0, 0.5, 0, 1)", 1.0, 2.0).unwrap();
        let a = assemble_stiffness_local(&mesh, &mat).unwrap();
        let b = assemble_stiffness_local(&mesh, &mat.scaled(2.0).unwrap()).unwrap();
        assert!(a.matrix().is_symmetric());
        assert!(DenseSpd::factor(a.matrix()).is_ok());
        for (x, y) in a.matrix().values().iter().zip(b.matrix().values()) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y.abs());
        }
    }

    proptest! {
        #[test]
        fn energy_equals_quadratic_form(coeffs in proptest::collection::vec(-2.0f64..2.0, 18)) {
            let mesh = build_rect_mesh(Domain::unit(2), 0.0, 0.25).unwrap();
            let mat = MaterialField::parse("1 + box(0.5, 1, 0, 1)", 1.0, 2.0).unwrap();
            let a = assemble_stiffness_local(&mesh, &mat).unwrap();
            let full = mesh.expand(&coeffs);
            let e = energy_local(&mesh, &mat, &full).unwrap();
            let q = a.matrix().bilinear(&coeffs, &coeffs);
            prop_assert!((e - q).abs() <= 1e-12 * (1.0 + e.abs()));
        }

        #[test]
        fn seminorm_is_homogeneous(alpha in -4.0f64..4.0) {
            let mesh = build_interval_mesh(Domain::unit(1), 0.0, 0.125).unwrap();
            let u = mesh.interpolate(&VectorField::parse(&["x*(1-x)"]).unwrap(), false);
            let scaled: Vec<f64> = u.iter().map(|v| alpha * v).collect();
            let lhs = seminorm_h1(&mesh, &scaled);
            prop_assert!((lhs - alpha.abs() * seminorm_h1(&mesh, &u)).abs() < 1e-12);
        }
    }
}
