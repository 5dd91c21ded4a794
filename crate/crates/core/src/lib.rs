//! Gaussian-class solutions of the nonlocal Gross–Pitaevskii equation with a
//! quadratic Weyl Hamiltonian and quadratic nonlocal kernel, symmetry
//! operators mapping solutions to solutions, and an independent split-step
//! grid solver used to cross-check them.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the command-line tool uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod grid;
pub mod moments;
pub mod phase_space;
pub mod poly;
pub mod propagator;
pub mod real;
pub mod reconstruction;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;

pub type Point = phase_space::PhasePoint<f64>;
pub type Model = phase_space::QuadraticModel<f64>;
pub type Provider = phase_space::CoefficientProvider<f64>;
pub type Times = flow::TimeGrid<f64>;
pub type Bundle = flow::TrajectoryBundle<f64>;
pub type State = propagator::HermiteGaussianState<f64>;
pub type Symbol = propagator::WeylPolySymbol<f64>;
pub type Operator = propagator::PhaseSpaceOperator<f64>;
pub type Field = grid::GridState<f64>;
pub type Assembly = reconstruction::SolutionAssembly<f64>;
