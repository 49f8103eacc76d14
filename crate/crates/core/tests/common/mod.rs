//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use peridyn_core::quadrature::{GaussRule, Grading};

/// Uniform 1D hat functions on the padded lattice `x_k = lo + k h`.
pub struct Hats {
    pub lo: f64,
    pub h: f64,
    pub count: usize,
}

impl Hats {
    pub fn eval(&self, k: usize, t: f64) -> f64 {
        let xk = self.lo + k as f64 * self.h;
        (1.0 - (t - xk).abs() / self.h).max(0.0)
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.h
    }
}

/// Graded composite Gauss points on `[a, b]` with breakpoints, refined toward every breakpoint.
fn graded_points(mut breaks: Vec<f64>, gauss: &GaussRule, grading: &Grading) -> Vec<(f64, f64)> {
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|p, q| (*p - *q).abs() < 1e-15);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        if w[1] - w[0] > 1e-15 {
            out.extend(grading.rule(gauss, w[0], w[1], true, true));
        }
    }
    out
}

/// Dense matrix `1/2 ∬ k(|x-y|) (phi_i(x)-phi_i(y)) (phi_j(x)-phi_j(y)) / |x-y|^2`
/// over the padded square, for the hats `free` (which vanish outside Omega), `h ≡ 1`.
///
/// Tensor Gauss of order 8 on panels split at every node, at `x ± delta`
/// and at `y = x`, graded geometrically toward every breakpoint.
pub fn brute_force_stiffness_1d(hats: &Hats, free: &[usize], delta: f64, k: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let gauss = GaussRule::new(8);
    let grading = Grading { ratio: 0.5, levels: 26 };
    let (lo, hi) = (hats.node(0), hats.node(hats.count - 1));
    let nodes: Vec<f64> = (0..hats.count).map(|i| hats.node(i)).collect();
    let mut outer_breaks = nodes.clone();
    for &x in &nodes {
        for b in [x - delta, x + delta] {
            if b > lo && b < hi {
                outer_breaks.push(b);
            }
        }
    }
    let m = free.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut dx = vec![0.0; m];
    for (x, wx) in graded_points(outer_breaks, &gauss, &grading) {
        let (ylo, yhi) = ((x - delta).max(lo), (x + delta).min(hi));
        let mut inner_breaks: Vec<f64> = nodes.iter().copied().filter(|&t| t > ylo && t < yhi).collect();
        inner_breaks.extend([ylo, yhi, x]);
        let phix: Vec<f64> = free.iter().map(|&f| hats.eval(f, x)).collect();
        for (y, wy) in graded_points(inner_breaks, &gauss, &grading) {
            let r = (x - y).abs();
            if r == 0.0 || r >= delta {
                continue;
            }
            let w = 0.5 * wx * wy * k(r) / (r * r);
            for (i, &f) in free.iter().enumerate() {
                dx[i] = phix[i] - hats.eval(f, y);
            }
            for i in 0..m {
                if dx[i] == 0.0 {
                    continue;
                }
                for j in 0..m {
                    a[i][j] += w * dx[i] * dx[j];
                }
            }
        }
    }
    a
}
