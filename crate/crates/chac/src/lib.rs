// Index loops mirror the assembly formulas; keeping them literal beats
// iterator gymnastics for this kind of numerical kernel.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

//! Structure-preserving finite-element solver for a coupled
//! Cahn-Hilliard/Allen-Cahn system with a state- and gradient-dependent
//! non-diagonal mobility.
//!
//! The crate provides:
//!
//! - [`mesh`]: structured periodic triangulations of the unit-square torus,
//!   with nested uniform refinement;
//! - [`fespace`]: periodic P2 elements, quadrature, projections, norms and
//!   inter-grid prolongation;
//! - [`linalg`]: sparse matrices and a direct solver with cached symbolic
//!   factorization;
//! - [`model`]: the quartic two-phase potential and the cross-kinetic
//!   mobility tensor, with exact derivatives;
//! - [`scheme`]: the Petrov-Galerkin time discretization (linear-in-time
//!   phases, interval-constant potentials) solved by Newton's method, which
//!   conserves mass and satisfies a discrete energy identity to solver
//!   tolerance;
//! - [`diagnostics`]: mass, free energy, dissipation and relative energy;
//! - [`study`]: mesh-ladder convergence studies with inter-grid error norms
//!   and experimental orders of convergence.
//!
//! # Example
//!
//! Conservation and energy decay over a few coarse steps:
//!
//! ```
//! use chac::fespace::build_space;
//! use chac::mesh::build_periodic_mesh;
//! use chac::model::ModelParams;
//! use chac::scheme::{run, NewtonOpts, NullSink, TimeGrid};
//! use chac::diagnostics;
//!
//! let space = build_space(build_periodic_mesh(4)?, 8)?;
//! let params = ModelParams::default();
//! let grid = TimeGrid::new(0.01, 5)?;
//! let pi2 = 2.0 * std::f64::consts::PI;
//! let rho0 = move |p: [f64; 2]| 0.5 + 0.5 * (pi2 * p[0]).sin() * (pi2 * p[1]).sin();
//! let grad_rho0 = move |p: [f64; 2]| {
//!     [
//!         0.5 * pi2 * (pi2 * p[0]).cos() * (pi2 * p[1]).sin(),
//!         0.5 * pi2 * (pi2 * p[0]).sin() * (pi2 * p[1]).cos(),
//!     ]
//! };
//! let eta0 = move |p: [f64; 2]| 0.5 + 0.5 * (2.0 * pi2 * p[0]).sin() * (pi2 * p[1]).sin();
//! let grad_eta0 = move |p: [f64; 2]| {
//!     [
//!         pi2 * (2.0 * pi2 * p[0]).cos() * (pi2 * p[1]).sin(),
//!         0.5 * pi2 * (2.0 * pi2 * p[0]).sin() * (pi2 * p[1]).cos(),
//!     ]
//! };
//! let final_state = run(
//!     &space,
//!     &params,
//!     &grid,
//!     (&rho0, &grad_rho0, &eta0, &grad_eta0),
//!     NewtonOpts::default(),
//!     &mut NullSink,
//! )?;
//! let mass = diagnostics::mass(&space, &final_state.rho)?;
//! assert!((mass - 0.5).abs() < 1e-10);
//! # Ok::<(), chac::error::ChacError>(())
//! ```

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fespace;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod scheme;
pub mod study;
pub mod vtk;
