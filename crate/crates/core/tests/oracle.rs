mod common;

use common::{brute_force_stiffness_1d, Hats};
use peridyn_core::kernel::{KernelSpec, MaterialField};
use peridyn_core::mesh::{build_interval_mesh, Domain};
use peridyn_core::nonlocal::{assemble_stiffness_nonlocal, QuadratureRule};

fn compare(kernel: KernelSpec, h: f64) -> f64 {
    let delta = kernel.delta();
    let mesh = build_interval_mesh(Domain::unit(1), delta, h).unwrap();
    let s = assemble_stiffness_nonlocal(
        &mesh,
        &kernel,
        &MaterialField::constant(1.0).unwrap(),
        &QuadratureRule::default(),
    )
    .unwrap();
    let hats = Hats {
        lo: mesh.point(0)[0],
        h,
        count: mesh.node_count(),
    };
    let free: Vec<usize> = (0..mesh.free_dof_count())
        .map(|k| mesh.dofs().free_owner(k).0)
        .collect();
    let oracle = brute_force_stiffness_1d(&hats, &free, delta, |r| kernel.eval(r));
    let mut worst: f64 = 0.0;
    for i in 0..free.len() {
        for j in 0..free.len() {
            let (a, o) = (s.matrix().get(i, j), oracle[i][j]);
            let rel = if o == 0.0 { a.abs() } else { ((a - o) / o).abs() };
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn stiffness_matches_brute_force() {
    let w1 = compare(KernelSpec::constant(0.3, 1).unwrap(), 0.125);
    let w2 = compare(KernelSpec::fractional(0.25, 0.3, 1).unwrap(), 0.125);
    println!("worst {w1:.2e} {w2:.2e}");
    assert!(w1 < 1e-6 && w2 < 1e-6);
}
