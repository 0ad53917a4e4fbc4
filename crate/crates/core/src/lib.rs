//! Exact finite-domain machinery for random walks in small isotropic random
//! environments on Z^d.

pub mod analysis;
pub mod environment;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lattice;
pub mod reference;
pub mod rng;
pub mod solver;

pub use environment::{Environment, Family, FamilySpec, SiteLaw};
pub use error::{Error, Result};
pub use lattice::{Domain, Point, ShellSpec};
pub use kernels::{Kernel, SmoothingField};
pub use solver::{green, GreenOperator};
