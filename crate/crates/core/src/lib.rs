//! Robust multi-objective trajectory optimization with polynomial chaos
//! trajectory ensembles and a constrained NSGA-II.

pub mod aero;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod fmt;
pub mod mc;
pub mod moea;
pub mod odesim;
pub mod pce;
pub mod sst;

pub use error::{Error, Result};
