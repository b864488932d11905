//! Constrained Bayesian optimization for expensive coupled simulations.
//!
//! The crate is split along the pipeline it implements:
//!
//! - [`gp`]: exact Gaussian-process regression with a Matérn-5/2 kernel.
//! - [`acquisition`]: expected improvement, feasibility probability and the
//!   constrained variant, plus the inner maximizer proposing the next point.
//! - [`optimizer`]: the outer ask/tell campaign loop with stopping rules.
//! - [`coupling`]: IQN-ILS quasi-Newton iteration for partitioned
//!   fluid–structure interface equations.
//! - [`transfer`]: inverse-distance-weighting and nonconforming mesh pairing
//!   for load and motion exchange across an interface.
//! - [`testbed`]: a reduced coupled beam/pseudo-fluid model that stands in
//!   for a full FSI solver, with the design problems built on top of it.

// `!(a > b)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod coupling;
pub mod gp;
pub mod optimizer;
pub mod space;
pub mod stats;
pub mod testbed;
pub mod transfer;

pub use acquisition::{ConstraintSpec, Incumbent, Sense};
pub use gp::{Dataset, Hyperparams, Posterior};
pub use optimizer::{run_campaign, CampaignConfig, CampaignState, EvaluationRecord, Outcome, StopReason, Tag};
pub use space::Bounds;
