//! Constrained multibody modeling of serial-parallel hybrid mechanisms on fixed
//! and floating bases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod closure;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod floating;
pub mod io;
pub mod kinematics;
pub mod math;
pub mod mechanisms;
pub mod model;
pub mod qp;
pub mod relative;

pub use error::{Error, Result};
pub use model::{GeneralizedState, MechanismModel};
