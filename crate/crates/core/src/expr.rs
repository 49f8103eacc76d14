//! Scalar and vector fields written in a small expression language.
//!
//! Expressions are evaluated with `fasteval`. The coordinates are bound to
//! `x` and `y` (aliases `x1`, `x2`). Besides the built-in functions of
//! `fasteval` (`sin`, `cos`, `abs`, `min`, `max`, `pi()`, comparisons, ...)
//! the following names are provided:
//!
//! - `pi`: the constant, usable without parentheses;
//! - `sqrt(v)`, `exp(v)`;
//! - `box(lo, hi)` / `box(xlo, xhi, ylo, yhi)`: indicator of the half-open
//!   axis-aligned box `[lo, hi)` (resp. its 2D analogue), for piecewise
//!   constant coefficients.

use std::fmt;
use std::sync::Arc;

use fasteval::{Compiler, Evaler};

use crate::error::{Error, Result};

struct Compiled {
    source: String,
    slab: fasteval::Slab,
    instruction: fasteval::Instruction,
}

/// A compiled scalar expression `f(x, y)`.
#[derive(Clone)]
pub struct ScalarField {
    inner: Arc<Compiled>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ScalarField").field(&self.inner.source).finish()
    }
}

fn callback<'a>(p: [f64; 2]) -> impl FnMut(&str, Vec<f64>) -> Option<f64> + 'a {
    move |name: &str, args: Vec<f64>| match name {
        "x" | "x1" => Some(p[0]),
        "y" | "x2" => Some(p[1]),
        "pi" => Some(std::f64::consts::PI),
        "sqrt" => args.first().map(|v| v.sqrt()),
        "exp" => args.first().map(|v| v.exp()),
        "box" => match args.len() {
            2 => Some(indicator(p[0], args[0], args[1])),
            4 => Some(indicator(p[0], args[0], args[1]) * indicator(p[1], args[2], args[3])),
            _ => None,
        },
        _ => None,
    }
}

fn indicator(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v < hi {
        1.0
    } else {
        0.0
    }
}

impl ScalarField {
    pub fn parse(source: &str) -> Result<Self> {
        let parser = fasteval::Parser::new();
        let mut slab = fasteval::Slab::new();
        let err = |e: fasteval::Error| Error::Expr {
            expr: source.to_string(),
            message: e.to_string(),
        };
        let instruction = parser
            .parse(source, &mut slab.ps)
            .map_err(err)?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let field = ScalarField {
            inner: Arc::new(Compiled {
                source: source.to_string(),
                slab,
                instruction,
            }),
        };
        // Unknown names only surface at evaluation time.
        field.try_eval([0.25, 0.25])?;
        Ok(field)
    }

    pub fn constant(value: f64) -> Self {
        // Round-trips through the parser so constants and expressions share one path.
        Self::parse(&format!("{value:e}")).expect("numeric literal parses")
    }

    pub fn source(&self) -> &str {
        &self.inner.source
    }

    fn try_eval(&self, p: [f64; 2]) -> Result<f64> {
        let c = &self.inner;
        c.instruction.eval(&c.slab, &mut callback(p)).map_err(|e| Error::Expr {
            expr: c.source.clone(),
            message: e.to_string(),
        })
    }

    /// Evaluates at `p`; the second coordinate is ignored in 1D expressions.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.try_eval(p).expect("expression validated at parse time")
    }

    /// `Some(c)` when the expression does not depend on the coordinates.
    pub fn as_constant(&self) -> Option<f64> {
        let probes = [[0.0, 0.0], [0.37, -1.3], [-2.1, 0.61], [5.5, 3.25]];
        let v = self.eval(probes[0]);
        probes[1..].iter().all(|&p| self.eval(p) == v).then_some(v)
    }
}

/// A vector field with one scalar expression per component.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn parse<S: AsRef<str>>(sources: &[S]) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Config("vector field needs at least one component".into()));
        }
        let components = sources
            .iter()
            .map(|s| ScalarField::parse(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { components })
    }

    pub fn zero(n: usize) -> Self {
        VectorField {
            components: vec![ScalarField::constant(0.0); n],
        }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Self {
        VectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn eval_into(&self, p: [f64; 2], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(p);
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(p)).collect()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.components.iter().all(|c| c.as_constant() == Some(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_coordinates_and_constants() {
        let f = ScalarField::parse("sin(pi*x) + 2*y^2").unwrap();
        let v = f.eval([0.5, 3.0]);
        assert!((v - 19.0).abs() < 1e-14);
        assert_eq!(ScalarField::parse("sqrt(4)").unwrap().eval([0.0, 0.0]), 2.0);
        assert_eq!(
            ScalarField::parse("pi()").unwrap().eval([0.0, 0.0]),
            std::f64::consts::PI
        );
    }

    #[test]
    fn box_indicator_is_half_open() {
        let f = ScalarField::parse("1 + 2*box(0.25, 0.75)").unwrap();
        assert_eq!(f.eval([0.1, 0.0]), 1.0);
        assert_eq!(f.eval([0.25, 0.0]), 3.0);
        assert_eq!(f.eval([0.75, 0.0]), 1.0);
        let g = ScalarField::parse("box(0, 0.5, 0.5, 1)").unwrap();
        assert_eq!(g.eval([0.2, 0.7]), 1.0);
        assert_eq!(g.eval([0.2, 0.2]), 0.0);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(ScalarField::parse("z + 1"), Err(Error::Expr { .. })));
        assert!(ScalarField::parse("1 +").is_err());
    }

    #[test]
    fn division_is_floating_point() {
        assert_eq!(ScalarField::parse("1/2").unwrap().eval([0.0, 0.0]), 0.5);
    }

    #[test]
    fn constant_detection() {
        assert_eq!(ScalarField::parse("3").unwrap().as_constant(), Some(3.0));
        assert_eq!(ScalarField::parse("x").unwrap().as_constant(), None);
        assert_eq!(ScalarField::constant(-0.125).eval([1.0, 2.0]), -0.125);
    }

    #[test]
    fn fields_are_shareable_across_threads() {
        fn assert_sync<T: Send + Sync>() {}
        assert_sync::<ScalarField>();
        assert_sync::<VectorField>();
    }
}
