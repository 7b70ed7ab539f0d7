//! Riesz representer estimation by empirical Bregman divergence minimization,
//! with the plug-in, weighting, doubly robust and targeted estimators built
//! on top of it.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod balancing;
pub mod data;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod functionals;
pub mod linalg;
pub mod links;
pub mod losses;
pub mod models;
pub mod optim;
pub mod rng;
pub mod verify;

pub use data::{Dataset, Layout};
pub use error::{Error, Result};
pub use fit::{fit_riesz, FitConfig, FitResult, Penalty, PenaltyKind, RieszModel};
pub use functionals::{EvaluableFn, Functional};
pub use links::{BranchRule, LinkKind, LinkSpec};
pub use losses::{LossKind, LossSpec};
pub use models::{BasisKind, BasisSpec, Model, ModelSpec};
