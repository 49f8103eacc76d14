//! Quadrature rules: Gauss-Legendre on intervals, collapsed Gauss on
//! triangles, and geometrically graded composite rules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `order` points, exact for polynomials of degree `2 * order - 1`.
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let rule = GaussLegendre::new(order);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Points and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let l = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (a + l * t, l * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Rule on the reference triangle in barycentric coordinates; weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed tensor rule exact for polynomials of degree `2 * order - 1`.
    pub fn new(order: usize) -> Self {
        let order = order.max(1);
        let outer = GaussRule::new(order + 1);
        let inner = GaussRule::new(order);
        let mut points = Vec::with_capacity(outer.len() * inner.len());
        let mut weights = Vec::with_capacity(outer.len() * inner.len());
        // (u, v) in the unit square -> (s, t) = (u, u v) on {0 <= t <= s <= 1}, Jacobian u.
        for (&u, &wu) in outer.nodes.iter().zip(&outer.weights) {
            for (&v, &wv) in inner.nodes.iter().zip(&inner.weights) {
                let (s, t) = (u, u * v);
                points.push([1.0 - s, s - t, t]);
                // Reference area is 1/2.
                weights.push(2.0 * wu * wv * u);
            }
        }
        TriangleRule { points, weights }
    }
}

/// Geometric grading of `[a, b]` toward one or both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grading {
    /// Panel ratio in `(0, 1)`.
    pub ratio: f64,
    pub levels: usize,
}

impl Grading {
    pub fn new(ratio: f64, levels: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("grading ratio must lie in (0, 1), got {ratio}")));
        }
        Ok(Grading { ratio, levels })
    }

    /// Levels needed to shrink the innermost panel below `floor` relative length.
    pub fn levels_for(ratio: f64, floor: f64) -> usize {
        if floor >= 1.0 {
            return 0;
        }
        (floor.ln() / ratio.ln()).ceil().max(0.0) as usize
    }

    /// Breakpoints of `[0, 1]` refined geometrically toward 0.
    fn toward_zero(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (0..=self.levels).map(|k| self.ratio.powi(k as i32)).collect();
        pts.push(0.0);
        pts.reverse();
        pts
    }

    /// Panels of `[a, b]`, graded toward `a` and/or `b`.
    pub fn panels(&self, a: f64, b: f64, at_a: bool, at_b: bool) -> Vec<(f64, f64)> {
        let l = b - a;
        let breaks: Vec<f64> = match (at_a, at_b) {
            (false, false) => vec![0.0, 1.0],
            (true, false) => self.toward_zero(),
            (false, true) => self.toward_zero().iter().rev().map(|t| 1.0 - t).collect(),
            (true, true) => {
                let half: Vec<f64> = self.toward_zero().iter().map(|t| 0.5 * t).collect();
                let mut all = half.clone();
                all.extend(half.iter().rev().skip(1).map(|t| 1.0 - t));
                all
            }
        };
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (a + l * w[0], a + l * w[1]))
            .collect()
    }

    /// Composite Gauss points and weights on the graded panels.
    pub fn rule(&self, gauss: &GaussRule, a: f64, b: f64, at_a: bool, at_b: bool) -> Vec<(f64, f64)> {
        self.panels(a, b, at_a, at_b)
            .into_iter()
            .flat_map(|(lo, hi)| gauss.on(lo, hi).collect::<Vec<_>>())
            .collect()
    }
}
