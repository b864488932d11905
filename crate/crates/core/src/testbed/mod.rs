//! Reduced coupled models standing in for full fluid–structure simulations.
//!
//! A finite-difference cantilever is coupled to an algebraic pseudo-fluid
//! through nonconforming interface meshes, and the interface equation is
//! solved with IQN-ILS. On top of it sit four design problems: a linear
//! modulus distribution with a velocity-analog constraint, a uniform
//! modulus, a stiff box of variable position, and a two-parameter tapered
//! plate at an angle of attack with lift, deflection and pressure
//! constraints.

pub mod beam;
pub mod coupled;
pub mod integrator;
pub mod problem;
pub mod profile;

use thiserror::Error;

use crate::coupling::CouplingError;
use crate::transfer::TransferError;

pub use beam::{beam_deflection, cantilever_deflection};
pub use coupled::{pseudo_fluid_load, CoupledBeam, CoupledSolution, InterfaceSettings, PseudoFluid};
pub use integrator::{generalized_alpha_trajectory, AlphaParams, IntegratorConfig, Trajectory};
pub use problem::{BeamSettings, EvaluationOutput, Family, ProblemSpec, SailPlaneSettings};
pub use profile::{Section, StiffnessProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestbedError {
    #[error("invalid stiffness profile: {0}")]
    InvalidProfile(String),
    #[error("modulus {modulus:e} Pa at x = {x} m is not positive")]
    NonPositiveModulus { x: f64, modulus: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("integrator: {0}")]
    Integrator(String),
    #[error("excessive deformation: deflection {deflection:e} m leaves the load model's range")]
    ExcessiveDeformation { deflection: f64 },
    #[error("coupling did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("design vector has {found} entries, {family} takes {expected}")]
    Parameters {
        family: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}
