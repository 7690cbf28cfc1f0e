//! Simulation and analysis toolkit for exact distributed first-order methods
//! with gradient tracking.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] builds time-varying communication graphs and their doubly
//!   stochastic mixing matrices.
//! * [`objective`] holds the local cost functions and a centralized reference
//!   solver.
//! * [`method`] runs the unified tracking iteration with pluggable tracking
//!   terms and per-node step-size policies.
//! * [`theory`] evaluates the convergence constants and the analytical
//!   oracle for the scalar quadratic case.
//! * [`harness`] drives parameter sweeps and writes CSV and SVG outputs.
//!
//! Stacked iterates are stored as `d × n` matrices, one column per agent; see
//! [`stack::Stack`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod method;
pub mod network;
pub mod objective;
pub mod stack;
pub mod theory;

pub use error::{Error, Result};
pub use stack::Stack;
