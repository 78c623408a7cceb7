//! Offset-free explicit MPC for a DC-motor speed loop: model, observer,
//! condensed mp-QP, critical-region enumeration, table runtime, PI
//! baseline, frame codec and closed-loop harness.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod augment;
pub mod condense;
pub mod error;
pub mod explicit;
pub mod harness;
pub mod motor;
pub mod observer;
pub mod pi;
pub mod polyhedra;
pub mod runtime;
pub mod wire;

pub use error::ModelError;
