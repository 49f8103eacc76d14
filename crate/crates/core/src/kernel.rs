//! Radial interaction kernels `k_delta` and the material coefficient `h(x)`.
//!
//! Two families are built in, both supported in the ball of radius `delta`
//! and normalized to unit mass over `R^n`:
//!
//! - constant: `k(r) = c` with `c = 1 / |B_delta|`;
//! - fractional: `k(r) = c r^(2 - n - 2s)` with
//!   `c = (2 - 2s) / (omega_{n-1} delta^(2 - 2s))`, so that
//!   `k(r) / r^2 ~ r^-(n + 2s)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::quadrature::{GaussRule, Grading};

/// Number of geometric radii used by the monotonicity check.
pub const DEFAULT_MONOTONICITY_SAMPLES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    Constant,
    Fractional { s: f64 },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Constant => "constant",
            KernelFamily::Fractional { .. } => "fractional",
        }
    }
}

/// Surface measure of the unit sphere `S^(n-1)` in `R^n`.
pub fn sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Volume of the ball of radius `r` in `R^n`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    sphere_measure(n) * r.powi(n as i32) / n as f64
}

fn check_dim(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("dimension must be 1 or 2, got {n}")))
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!(
            "fractional order must lie in (0, 1), got {s}; s >= 1 is not normalizable"
        )));
    }
    if s == 0.5 {
        return Err(Error::Domain(
            "fractional order s = 1/2 is excluded from the fractional-type regularity theory".into(),
        ));
    }
    Ok(())
}

/// Normalization constant making `k_delta` a unit-mass density.
pub fn normalize(family: KernelFamily, delta: f64, n: usize) -> Result<f64> {
    check_dim(n)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("horizon must be positive, got {delta}")));
    }
    match family {
        KernelFamily::Constant => Ok(1.0 / ball_volume(n, delta)),
        KernelFamily::Fractional { s } => {
            check_order(s)?;
            Ok((2.0 - 2.0 * s) / (sphere_measure(n) * delta.powf(2.0 - 2.0 * s)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    delta: f64,
    dim: usize,
    c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrability {
    Finite,
    Infinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub mass_error: f64,
    pub mass_ok: bool,
    pub monotonicity_ok: bool,
    pub l1_of_k_over_r2: Integrability,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.mass_ok && self.monotonicity_ok
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, delta: f64, dim: usize) -> Result<Self> {
        let c = normalize(family, delta, dim)?;
        Ok(KernelSpec { family, delta, dim, c })
    }

    pub fn constant(delta: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Constant, delta, dim)
    }

    pub fn fractional(s: f64, delta: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Fractional { s }, delta, dim)
    }

    /// Same family and dimension with another horizon.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.family, delta, self.dim)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_factor(&self) -> f64 {
        self.c
    }

    /// `q` in `k(r) = c r^q` on `r < delta`.
    pub fn exponent(&self) -> f64 {
        match self.family {
            KernelFamily::Constant => 0.0,
            KernelFamily::Fractional { s } => 2.0 - self.dim as f64 - 2.0 * s,
        }
    }

    /// Fractional order, if any.
    pub fn order(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Constant => None,
            KernelFamily::Fractional { s } => Some(s),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.delta {
            return 0.0;
        }
        match self.family {
            KernelFamily::Constant => self.c,
            KernelFamily::Fractional { .. } => self.c * r.powf(self.exponent()),
        }
    }

    /// `int_{r0}^{r1} k(r) r^p dr` in closed form, with `r1` clipped to `delta`.
    pub fn power_integral(&self, p: f64, r0: f64, r1: f64) -> f64 {
        let r1 = r1.min(self.delta);
        if r1 <= r0 {
            return 0.0;
        }
        let e = self.exponent() + p;
        let v = if (e + 1.0).abs() < 1e-14 {
            (r1 / r0).ln()
        } else if e + 1.0 > 0.0 {
            (r1.powf(e + 1.0) - r0.powf(e + 1.0)) / (e + 1.0)
        } else if r0 == 0.0 {
            f64::INFINITY
        } else {
            (r1.powf(e + 1.0) - r0.powf(e + 1.0)) / (e + 1.0)
        };
        self.c * v
    }

    /// Whether `k(|xi|) / |xi|^2` is integrable over the ball.
    pub fn l1_of_k_over_r2(&self) -> Integrability {
        // Radial integrand r^(q - 2 + n - 1) near zero.
        if self.exponent() + self.dim as f64 - 2.0 > 0.0 {
            Integrability::Finite
        } else {
            Integrability::Infinite
        }
    }

    /// Numerical mass of the kernel over `R^n`.
    pub fn numeric_mass(&self) -> f64 {
        let n = self.dim as f64;
        let growth = self.exponent() + n;
        // Geometric panels toward the origin; the dropped innermost panel
        // carries mass below 1e-17 relative.
        let levels = ((17.0 * 10f64.log2()) / growth.max(1e-3)).ceil() as usize;
        let grading = Grading {
            ratio: 0.5,
            levels: levels.min(100_000),
        };
        let gauss = GaussRule::new(10);
        let radial: f64 = grading
            .rule(&gauss, 0.0, self.delta, true, false)
            .iter()
            .map(|&(r, w)| w * r.powf(growth - 1.0))
            .sum();
        sphere_measure(self.dim) * self.c * radial
    }

    pub fn verify_assumptions(&self, samples: usize, tol: f64) -> Result<AssumptionReport> {
        if samples < 2 {
            return Err(Error::Config("monotonicity check needs at least 2 samples".into()));
        }
        let mass_error = (self.numeric_mass() - 1.0).abs();
        // Geometric radii spanning (1e-8 delta, delta).
        let radii: Vec<f64> = (0..samples)
            .map(|i| {
                let t = i as f64 / (samples - 1) as f64;
                self.delta * 10f64.powf(-8.0 * (1.0 - t)) * (1.0 - 1e-12)
            })
            .collect();
        let ratio: Vec<f64> = radii.iter().map(|&r| self.eval(r) / (r * r)).collect();
        let monotonicity_ok = ratio.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14));
        Ok(AssumptionReport {
            mass_error,
            mass_ok: mass_error <= tol,
            monotonicity_ok,
            l1_of_k_over_r2: self.l1_of_k_over_r2(),
        })
    }
}

/// Material coefficient `h(x)` with its declared bounds.
#[derive(Clone, Debug)]
pub struct MaterialField {
    field: ScalarField,
    hmin: f64,
    hmax: f64,
}

impl MaterialField {
    pub fn new(field: ScalarField, hmin: f64, hmax: f64) -> Result<Self> {
        if !(hmin > 0.0 && hmin <= hmax && hmax.is_finite()) {
            return Err(Error::Config(format!(
                "material bounds must satisfy 0 < hmin <= hmax < inf, got [{hmin}, {hmax}]"
            )));
        }
        Ok(MaterialField { field, hmin, hmax })
    }

    pub fn parse(expr: &str, hmin: f64, hmax: f64) -> Result<Self> {
        Self::new(ScalarField::parse(expr)?, hmin, hmax)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(ScalarField::constant(value), value, value)
    }

    /// `factor * h`, with scaled bounds.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let expr = format!("({:e}) * ({})", factor, self.field.source());
        Self::parse(&expr, factor * self.hmin, factor * self.hmax)
    }

    pub fn source(&self) -> &str {
        self.field.source()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.hmin, self.hmax)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.field.eval(x)
    }

    /// `H(x, y) = (h(x) + h(y)) / 2`.
    pub fn pair(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        0.5 * (self.eval(x) + self.eval(y))
    }

    pub fn is_constant(&self) -> bool {
        self.field.as_constant().is_some()
    }

    /// Checks the declared bounds at the given sample points.
    pub fn check_bounds(&self, points: impl IntoIterator<Item = [f64; 2]>) -> Result<()> {
        let slack = 1e-12 * self.hmax;
        for p in points {
            let v = self.eval(p);
            if !(v >= self.hmin - slack && v <= self.hmax + slack) {
                return Err(Error::Config(format!(
                    "material value {v} at {p:?} violates the bounds [{}, {}]",
                    self.hmin, self.hmax
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_constants() {
        assert_eq!(normalize(KernelFamily::Constant, 1.0, 1).unwrap(), 0.5);
        assert!((normalize(KernelFamily::Constant, 0.5, 2).unwrap() - 4.0 / PI).abs() < 1e-15);
        let c = normalize(KernelFamily::Fractional { s: 0.25 }, 1.0, 1).unwrap();
        assert!((c - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_excluded_orders() {
        for s in [0.5, 1.0, 1.5, 0.0, -0.1] {
            assert!(
                matches!(KernelSpec::fractional(s, 1.0, 1), Err(Error::Domain(_))),
                "{s}"
            );
        }
        assert!(KernelSpec::constant(0.0, 1).is_err());
        assert!(KernelSpec::constant(1.0, 3).is_err());
    }

    #[test]
    fn evaluation() {
        let k = KernelSpec::constant(1.0, 1).unwrap();
        assert_eq!(k.eval(0.5), 0.5);
        assert_eq!(k.eval(1.0), 0.0);
        let f = KernelSpec::fractional(0.25, 1.0, 1).unwrap();
        assert!((f.eval(0.25) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn assumption_reports() {
        let r = KernelSpec::constant(1.0, 1)
            .unwrap()
            .verify_assumptions(256, 1e-10)
            .unwrap();
        assert!(r.mass_error < 1e-12 && r.monotonicity_ok);
        let f = KernelSpec::fractional(0.4, 0.5, 2)
            .unwrap()
            .verify_assumptions(256, 1e-10)
            .unwrap();
        assert!(f.mass_error < 1e-10, "{}", f.mass_error);
        for s in [0.1, 0.25, 0.75, 0.9] {
            for n in [1, 2] {
                let k = KernelSpec::fractional(s, 0.3, n).unwrap();
                assert_eq!(k.l1_of_k_over_r2(), Integrability::Infinite);
            }
        }
        assert!(KernelSpec::constant(1.0, 1)
            .unwrap()
            .verify_assumptions(1, 1e-10)
            .is_err());
    }

    #[test]
    fn power_integral_matches_quadrature() {
        let k = KernelSpec::fractional(0.25, 0.8, 2).unwrap();
        let g = GaussRule::new(12);
        let numeric = g.integrate(0.1, 0.6, |r| k.eval(r) * r * r);
        assert!((k.power_integral(2.0, 0.1, 0.6) - numeric).abs() < 1e-13);
        // Logarithmic case: exponent q + p = -1.
        let p = -1.0 - k.exponent();
        let log = k.power_integral(p, 0.1, 0.4);
        assert!((log - k.constant_factor() * 4f64.ln()).abs() < 1e-14);
        assert_eq!(k.power_integral(2.0, 0.9, 1.0), 0.0);
    }

    #[test]
    fn material_field() {
        let m = MaterialField::parse("1 + box(0.5, 1)", 1.0, 2.0).unwrap();
        assert_eq!(m.pair([0.2, 0.0], [0.7, 0.0]), 1.5);
        assert!(m.check_bounds([[0.1, 0.0], [0.9, 0.0]]).is_ok());
        let bad = MaterialField::parse("x", 0.5, 1.0).unwrap();
        assert!(bad.check_bounds([[0.1, 0.0]]).is_err());
        assert!(MaterialField::constant(0.0).is_err());
        assert_eq!(m.scaled(2.0).unwrap().eval([0.7, 0.0]), 4.0);
    }

    proptest! {
        #[test]
        fn unit_mass(s in 0.05f64..0.95, delta in 0.05f64..2.0, n in 1usize..3) {
            prop_assume!((s - 0.5).abs() > 1e-3);
            for k in [KernelSpec::fractional(s, delta, n).unwrap(), KernelSpec::constant(delta, n).unwrap()] {
                let r = k.verify_assumptions(DEFAULT_MONOTONICITY_SAMPLES, 1e-10).unwrap();
                prop_assert!(r.ok(), "{:?} {:?}", k, r);
            }
        }

        #[test]
        fn constant_family_rescales(delta in 0.05f64..2.0, t in 0.0f64..1.2, n in 1usize..3) {
            let k = KernelSpec::constant(delta, n).unwrap();
            let unit = KernelSpec::constant(1.0, n).unwrap();
            let lhs = k.eval(t * delta);
            let rhs = delta.powi(-(n as i32)) * unit.eval(t);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn pair_coefficient_is_symmetric(x in -1.0f64..2.0, y in -1.0f64..2.0) {
            let m = MaterialField::parse("1 + x^2 + 0.5*box(0, 0.5)", 1.0, 10.0).unwrap();
            prop_assert_eq!(m.pair([x, 0.0], [y, 0.0]), m.pair([y, 0.0], [x, 0.0]));
        }
    }
}
