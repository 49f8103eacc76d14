//! Finite-element discretization of a box-constrained optimal control problem
//! governed by linear bond-based peridynamics, together with its local
//! (linearized-elasticity type) limit and a harness for limit studies in the
//! horizon `delta` and the mesh size `h`.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: structured simplicial meshes of the padded domain and DOF maps.
//! - [`kernel`]: horizon-supported radial kernels and the material coefficient.
//! - [`nonlocal`]: stiffness, lifting, energy and seminorm of the nonlocal form.
//! - [`local`]: the local limit form, its energy and the `H^1` seminorm.
//! - [`fem`]: mass matrices, loads, piecewise-constant projection and transfers.
//! - [`linalg`]: sparse SPD solves and the smallest generalized eigenvalue.
//! - [`control`]: objective, projected-gradient KKT solver and a posteriori checks.
//! - [`lab`]: the convergence studies.
//! - [`report`]: CSV tables and rate fits.

pub mod control;
pub mod error;
pub mod expr;
pub mod fem;
pub mod kernel;
pub mod lab;
pub mod linalg;
pub mod local;
pub mod mesh;
pub mod nonlocal;
pub mod quadrature;
pub mod report;
pub mod sparse;

mod rays;

pub use error::{Error, Result};
