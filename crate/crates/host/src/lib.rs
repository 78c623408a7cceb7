//! Host-side front end: project config and scenario files, the design
//! pipeline, law table files, CSV traces and the frame server.

pub mod cli;
pub mod config;
pub mod design;
pub mod scenario;
pub mod serve;
pub mod trace;

pub use empc_core;
