//! Scalar comparison bounds for nonlinear delay differential equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dde;
pub mod expr;
pub mod linalg;
pub mod linear_system;
pub mod majorant;
pub mod path;
pub mod system;
pub mod auxiliary;
pub mod region;
pub mod scenarios;
pub mod verification;
