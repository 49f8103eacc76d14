//! Polar integration of pair integrands over the ball `B_delta(x)`.
//!
//! For an outer point `x` in a cell `T_a` and a unit direction `e`, the ray
//! `y = x + r e`, `0 < r < delta`, is cut at every mesh line. On each piece
//! `y` stays in one cell `T_b`, so for every P1 basis function
//! `phi_i(x) - phi_i(y) = a0_i + a1_i r` is affine in `r`, and radial
//! integrals against `k(r) r^(n-3) r^m` are evaluated in closed form.
//! In 2D the angle is integrated with Gauss-Legendre on sectors whose
//! endpoints are the directions of nearby vertices and of the points where
//! the circle of radius `delta` crosses mesh lines.

use std::f64::consts::PI;

use crate::kernel::KernelSpec;
use crate::mesh::{Barycentric, Mesh};
use crate::quadrature::{GaussRule, Grading, TriangleRule};

/// Narrowest angular sector worth integrating.
const MIN_SECTOR: f64 = 1e-13;

/// One straight piece of a ray inside cell `cell`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Piece {
    pub cell: usize,
    pub r0: f64,
    pub r1: f64,
}

/// Data handed to the visitor for every ray piece.
pub(crate) struct PieceData<'a> {
    pub cell_b: usize,
    /// Outer weight times angular weight.
    pub weight: f64,
    pub e: [f64; 2],
    /// Nodes of `T_a` and `T_b` without repetition.
    pub nodes: &'a [usize],
    pub a0: &'a [f64],
    pub a1: &'a [f64],
    /// `int k(r) r^(n-3+m) dr` over the piece, `m = 0, 1, 2`; the first two
    /// are zero on the piece starting at `x`, where `a0` vanishes.
    pub moments: [f64; 3],
}

pub(crate) struct RayIntegrator<'m> {
    mesh: &'m Mesh,
    kernel: KernelSpec,
    xs: Vec<f64>,
    ys: Vec<f64>,
    bary: Vec<Barycentric>,
    angular: GaussRule,
}

impl<'m> RayIntegrator<'m> {
    pub fn new(mesh: &'m Mesh, kernel: KernelSpec, angular_order: usize) -> Self {
        let g = mesh.grid();
        let xs = (0..=g.counts[0]).map(|i| mesh.point(g.node_index(i, 0))[0]).collect();
        let ys = if mesh.dim() == 2 {
            (0..=g.counts[1]).map(|j| mesh.point(g.node_index(0, j))[1]).collect()
        } else {
            Vec::new()
        };
        let bary = (0..mesh.cell_count()).map(|c| mesh.barycentric(c)).collect();
        RayIntegrator {
            mesh,
            kernel,
            xs,
            ys,
            bary,
            angular: GaussRule::new(angular_order),
        }
    }

    fn delta(&self) -> f64 {
        self.kernel.delta()
    }

    /// Unit directions with weights integrating over the unit sphere.
    pub fn directions(&self, x: [f64; 2]) -> Vec<([f64; 2], f64)> {
        if self.mesh.dim() == 1 {
            return vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)];
        }
        let mut angles = self.split_angles(x);
        angles.push(0.0);
        angles.push(2.0 * PI);
        angles.sort_by(f64::total_cmp);
        let mut out = Vec::with_capacity(angles.len() * self.angular.len());
        for w in angles.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 - t0 <= MIN_SECTOR {
                continue;
            }
            for (t, wt) in self.angular.on(t0, t1) {
                out.push(([t.cos(), t.sin()], wt));
            }
        }
        out
    }

    fn split_angles(&self, x: [f64; 2]) -> Vec<f64> {
        let d = self.delta();
        let g = self.mesh.grid();
        let h = g.spacing;
        let norm = |t: f64| if t < 0.0 { t + 2.0 * PI } else { t };
        let mut angles = Vec::new();
        let (i_lo, i_hi) = self.index_range(&self.xs, x[0] - d, x[0] + d);
        let (j_lo, j_hi) = self.index_range(&self.ys, x[1] - d, x[1] + d);
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let v = [self.xs[i] - x[0], self.ys[j] - x[1]];
                let r2 = v[0] * v[0] + v[1] * v[1];
                if r2 > 0.0 && r2 < d * d {
                    angles.push(norm(v[1].atan2(v[0])));
                }
            }
        }
        for i in i_lo..=i_hi {
            let dx = self.xs[i] - x[0];
            if dx.abs() < d {
                let dy = (d * d - dx * dx).sqrt();
                angles.push(norm(dy.atan2(dx)));
                angles.push(norm((-dy).atan2(dx)));
            }
        }
        for j in j_lo..=j_hi {
            let dy = self.ys[j] - x[1];
            if dy.abs() < d {
                let dx = (d * d - dy * dy).sqrt();
                angles.push(norm(dy.atan2(dx)));
                angles.push(norm(dy.atan2(-dx)));
            }
        }
        // Diagonals y - x = offset + k h.
        let offset = g.origin[1] - g.origin[0];
        let rel = x[1] - x[0];
        let reach = d * std::f64::consts::SQRT_2;
        let k_lo = ((rel - reach - offset) / h).floor() as i64;
        let k_hi = ((rel + reach - offset) / h).ceil() as i64;
        for k in k_lo..=k_hi {
            let t = (offset + k as f64 * h - rel) / d;
            let s = t / std::f64::consts::SQRT_2;
            if s.abs() < 1.0 {
                let base = s.asin();
                angles.push(norm(PI / 4.0 + base).rem_euclid(2.0 * PI));
                angles.push(norm(PI / 4.0 + PI - base).rem_euclid(2.0 * PI));
            }
        }
        angles
    }

    /// Lattice indices with coordinates in `[lo, hi]`, clamped to the grid.
    fn index_range(&self, coords: &[f64], lo: f64, hi: f64) -> (usize, usize) {
        let a = coords.partition_point(|&c| c < lo);
        let b = coords.partition_point(|&c| c <= hi);
        (
            a.min(coords.len() - 1),
            b.saturating_sub(1).max(a.min(coords.len() - 1)),
        )
    }

    /// Pieces of the ray `x + r e`, `0 < r < delta`.
    pub fn pieces(&self, x: [f64; 2], e: [f64; 2], out: &mut Vec<Piece>) {
        out.clear();
        let d = self.delta();
        let mut cuts = Vec::with_capacity(16);
        crossings(&self.xs, x[0], e[0], d, &mut cuts);
        if self.mesh.dim() == 2 {
            crossings(&self.ys, x[1], e[1], d, &mut cuts);
            let g = self.mesh.grid();
            let de = e[1] - e[0];
            if de.abs() > 1e-15 {
                let offset = g.origin[1] - g.origin[0];
                let rel = x[1] - x[0];
                let end = rel + d * de;
                let (lo, hi) = if end > rel { (rel, end) } else { (end, rel) };
                let k_lo = ((lo - offset) / g.spacing).floor() as i64;
                let k_hi = ((hi - offset) / g.spacing).ceil() as i64;
                for k in k_lo..=k_hi {
                    let r = (offset + k as f64 * g.spacing - rel) / de;
                    if r > 0.0 && r < d {
                        cuts.push(r);
                    }
                }
            }
        }
        cuts.push(d);
        cuts.sort_by(f64::total_cmp);
        let tiny = 1e-14 * self.mesh.spacing();
        let mut r0 = 0.0;
        for &r1 in &cuts {
            if r1 - r0 <= tiny {
                continue;
            }
            let rm = 0.5 * (r0 + r1);
            let cell = self.mesh.locate([x[0] + rm * e[0], x[1] + rm * e[1]]);
            out.push(Piece { cell, r0, r1 });
            r0 = r1;
        }
    }

    /// Visits every ray piece issued from `x` in cell `a`.
    pub fn visit_point<F: FnMut(&PieceData<'_>)>(&self, a: usize, x: [f64; 2], weight: f64, visit: &mut F) {
        let n = self.mesh.dim();
        let nv = n + 1;
        let ba = &self.bary[a];
        let cell_a = self.mesh.cell(a);
        let mut phi_a = [0.0; 3];
        for k in 0..nv {
            phi_a[k] = ba.eval(k, x);
        }
        let p = n as f64 - 3.0;
        let mut pieces = Vec::with_capacity(32);
        let mut nodes = [0usize; 6];
        let mut a0 = [0.0; 6];
        let mut a1 = [0.0; 6];
        for (e, we) in self.directions(x) {
            self.pieces(x, e, &mut pieces);
            for (idx, piece) in pieces.iter().enumerate() {
                // The piece leaving x lies in T_a even when x sits on a cell edge.
                let b = if idx == 0 { a } else { piece.cell };
                let bb = &self.bary[b];
                let cell_b = self.mesh.cell(b);
                let mut m = 0;
                for k in 0..nv {
                    nodes[m] = cell_a[k];
                    a0[m] = phi_a[k];
                    a1[m] = 0.0;
                    m += 1;
                }
                for k in 0..nv {
                    let ext = bb.eval(k, x);
                    let slope = -bb.directional(k, e);
                    match nodes[..nv].iter().position(|&v| v == cell_b[k]) {
                        Some(pos) => {
                            a0[pos] -= ext;
                            a1[pos] = slope;
                        }
                        None => {
                            nodes[m] = cell_b[k];
                            a0[m] = -ext;
                            a1[m] = slope;
                            m += 1;
                        }
                    }
                }
                let first = idx == 0;
                if first {
                    // phi_i(x) - phi_i(x + r e) = -r grad phi_i . e exactly on T_a.
                    a0[..m].iter_mut().for_each(|v| *v = 0.0);
                }
                let moments = [
                    if first {
                        0.0
                    } else {
                        self.kernel.power_integral(p, piece.r0, piece.r1)
                    },
                    if first {
                        0.0
                    } else {
                        self.kernel.power_integral(p + 1.0, piece.r0, piece.r1)
                    },
                    self.kernel.power_integral(p + 2.0, piece.r0, piece.r1),
                ];
                visit(&PieceData {
                    cell_b: b,
                    weight: weight * we,
                    e,
                    nodes: &nodes[..m],
                    a0: &a0[..m],
                    a1: &a1[..m],
                    moments,
                });
            }
        }
    }

    /// Outer quadrature points and weights of cell `a`.
    pub fn outer_points(&self, a: usize, outer: &OuterRule) -> Vec<([f64; 2], f64)> {
        let vs = self.mesh.cell(a);
        match self.mesh.dim() {
            1 => {
                let (xl, xr) = (self.mesh.point(vs[0])[0], self.mesh.point(vs[1])[0]);
                let d = self.delta();
                let mut breaks = vec![xl, xr];
                for &xn in &self.xs {
                    for b in [xn - d, xn + d] {
                        if b > xl && b < xr {
                            breaks.push(b);
                        }
                    }
                }
                breaks.sort_by(f64::total_cmp);
                breaks.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * (xr - xl));
                let mut out = Vec::new();
                for w in breaks.windows(2) {
                    for (x, wx) in outer.grading.rule(&outer.gauss, w[0], w[1], true, true) {
                        out.push(([x, 0.0], wx));
                    }
                }
                out
            }
            _ => {
                let p = [self.mesh.point(vs[0]), self.mesh.point(vs[1]), self.mesh.point(vs[2])];
                let area = self.mesh.cell_volume(a);
                outer
                    .triangle
                    .points
                    .iter()
                    .zip(&outer.triangle.weights)
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
}

/// Outer rules: graded composite Gauss in 1D, collapsed Gauss on triangles.
pub(crate) struct OuterRule {
    pub gauss: GaussRule,
    pub grading: Grading,
    pub triangle: TriangleRule,
}

/// Distances `r` in `(0, delta)` where `x + r e` crosses one of `lines`.
fn crossings(lines: &[f64], x: f64, e: f64, delta: f64, out: &mut Vec<f64>) {
    if e.abs() < 1e-15 {
        return;
    }
    let end = x + delta * e;
    let (lo, hi) = if end > x { (x, end) } else { (end, x) };
    let a = lines.partition_point(|&c| c <= lo);
    let b = lines.partition_point(|&c| c < hi);
    for &c in &lines[a..b] {
        let r = (c - x) / e;
        if r > 0.0 && r < delta {
            out.push(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rect_mesh, Domain};

    #[test]
    fn directions_integrate_the_circle() {
        let mesh = build_rect_mesh(Domain::unit(2), 0.3, 0.125).unwrap();
        let k = KernelSpec::constant(0.3, 2).unwrap();
        let ri = RayIntegrator::new(&mesh, k, 3);
        let dirs = ri.directions([0.41, 0.53]);
        let total: f64 = dirs.iter().map(|d| d.1).sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
        let cos2: f64 = dirs.iter().map(|(e, w)| w * e[0] * e[0]).sum();
        assert!((cos2 - PI).abs() < 1e-6, "{cos2}");
    }

    #[test]
    fn pieces_stay_in_one_cell() {
        let mesh = build_rect_mesh(Domain::unit(2), 0.3, 0.125).unwrap();
        let k = KernelSpec::constant(0.3, 2).unwrap();
        let ri = RayIntegrator::new(&mesh, k, 3);
        let x = [0.41, 0.53];
        let mut pieces = Vec::new();
        for (e, _) in ri.directions(x) {
            ri.pieces(x, e, &mut pieces);
            assert_eq!(pieces.first().unwrap().r0, 0.0);
            assert!((pieces.last().unwrap().r1 - 0.3).abs() < 1e-15);
            for p in &pieces {
                for t in [0.01, 0.5, 0.99] {
                    let r = p.r0 + t * (p.r1 - p.r0);
                    let y = [x[0] + r * e[0], x[1] + r * e[1]];
                    let b = mesh.barycentric(p.cell);
                    for v in 0..3 {
                        assert!(b.eval(v, y) > -1e-12, "point {y:?} outside cell {}", p.cell);
                    }
                }
            }
        }
    }

    #[test]
    fn one_dimensional_pieces() {
        let mesh = build_interval_mesh(Domain::unit(1), 0.3, 0.125).unwrap();
        let k = KernelSpec::constant(0.3, 1).unwrap();
        let ri = RayIntegrator::new(&mesh, k, 3);
        let mut pieces = Vec::new();
        ri.pieces([0.3, 0.0], [1.0, 0.0], &mut pieces);
        let ends: Vec<f64> = pieces.iter().map(|p| p.r1).collect();
        assert_eq!(pieces.len(), 3);
        assert!((ends[0] - 0.075).abs() < 1e-14 && (ends[2] - 0.3).abs() < 1e-14);
    }
}
