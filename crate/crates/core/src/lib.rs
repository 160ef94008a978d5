//! Co-design of dynamic control allocation and anti-windup gains for over-actuated
//! linear systems with saturating actuators, via linear matrix inequalities.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod result;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
