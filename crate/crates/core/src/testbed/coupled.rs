//! Partitioned beam / pseudo-fluid evaluation.
//!
//! The structure is a cantilever discretized by its interface nodes; the
//! fluid side is a finer set of boundary points that receives the beam
//! motion through segment interpolation and returns a pressure depending on
//! the local deflection. Loads go back to the nodes by inverse distance
//! weighting with tributary lumping. The interface equation is solved with
//! IQN-ILS.
//!
//! Both meshes are paired once in the undeformed configuration and all
//! transfers are carried out in those reference coordinates: the beam
//! kinematics is transverse only, so material points never slide along the
//! interface and the pairing stays valid for any deflection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::beam::{bending_stiffness, cantilever_deflection};
use super::profile::{Section, StiffnessProfile};
use super::TestbedError;
use crate::coupling::{self, CouplingOptions, CouplingReport, SolverFailure, SolverPair};
use crate::transfer::{self, CouplingPairs, FieldSample, PairingOptions, Point};

/// Load of the pseudo-fluid: `q0 / (1 + beta w) − gamma w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoFluid {
    /// Undisturbed load, N/m.
    pub q0: f64,
    /// Load relief per unit deflection, 1/m.
    pub beta: f64,
    /// Stiffness-like feedback, N/m².
    pub gamma: f64,
}

impl Default for PseudoFluid {
    fn default() -> Self {
        Self {
            q0: 500.0,
            beta: 20.0,
            gamma: 1000.0,
        }
    }
}

impl PseudoFluid {
    pub fn load_at(&self, q_nominal: f64, w: f64) -> Result<f64, TestbedError> {
        let denom = 1.0 + self.beta * w;
        if !(denom > 0.0) {
            return Err(TestbedError::ExcessiveDeformation { deflection: w });
        }
        Ok(q_nominal / denom - self.gamma * w)
    }
}

/// Pointwise pseudo-fluid load for a deflection field.
pub fn pseudo_fluid_load(w: &[f64], params: &PseudoFluid) -> Result<Vec<f64>, TestbedError> {
    w.iter().map(|w| params.load_at(params.q0, *w)).collect()
}

/// Interface discretization and coupling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterfaceSettings {
    pub structural_nodes: usize,
    pub fluid_points: usize,
    pub idw_neighbors: usize,
    pub idw_exponent: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub omega: f64,
}

impl Default for InterfaceSettings {
    fn default() -> Self {
        Self {
            structural_nodes: 33,
            fluid_points: 128,
            idw_neighbors: 4,
            idw_exponent: 2.0,
            tolerance: 1e-8,
            max_iter: 50,
            omega: 0.5,
        }
    }
}

impl InterfaceSettings {
    pub fn validate(&self) -> Result<(), TestbedError> {
        if self.structural_nodes < 3 || self.fluid_points < 2 {
            return Err(TestbedError::Grid(format!(
                "{} structural nodes, {} fluid points",
                self.structural_nodes, self.fluid_points
            )));
        }
        if self.idw_neighbors == 0 || !(self.idw_exponent > 0.0) {
            return Err(TestbedError::Grid("IDW neighbors and exponent must be positive".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 || !(self.omega > 0.0) {
            return Err(TestbedError::Grid("coupling tolerance, max_iter, omega must be positive".into()));
        }
        Ok(())
    }

    fn coupling_options(&self) -> CouplingOptions {
        CouplingOptions {
            tol: self.tolerance,
            max_iter: self.max_iter,
            omega: self.omega,
        }
    }
}

/// Fluid pressure as a function of the position along the interface and the local deflection.
pub type PressureLaw<'a> = dyn Fn(f64, f64) -> Result<f64, TestbedError> + 'a;

/// Cantilever coupled to a pressure law through nonconforming interface meshes.
pub struct CoupledBeam<'a> {
    length: f64,
    ei: Vec<f64>,
    structural: Vec<Point>,
    fluid: Vec<Point>,
    pairs: CouplingPairs,
    pressure: Box<PressureLaw<'a>>,
    /// Converts pressure (Pa) into line load (N/m).
    load_scale: f64,
}

impl<'a> CoupledBeam<'a> {
    pub fn new(
        profile: &StiffnessProfile,
        section: &Section,
        length: f64,
        modulus_floor: f64,
        grid: &InterfaceSettings,
        load_scale: f64,
        pressure: Box<PressureLaw<'a>>,
    ) -> Result<Self, TestbedError> {
        grid.validate()?;
        profile.validate(length)?;
        let ns = grid.structural_nodes;
        let nf = grid.fluid_points;
        let ei = bending_stiffness(profile, section, length, ns, modulus_floor)?;
        let structural: Vec<Point> = (0..ns)
            .map(|i| [length * i as f64 / (ns - 1) as f64, 0.0])
            .collect();
        let fluid: Vec<Point> = (0..nf)
            .map(|j| [length * (j as f64 + 0.5) / nf as f64, 0.0])
            .collect();
        let pairs = transfer::pair_meshes(
            &structural,
            &fluid,
            &PairingOptions {
                k: grid.idw_neighbors,
                alpha: grid.idw_exponent,
                ..PairingOptions::default()
            },
        )?;
        Ok(Self {
            length,
            ei,
            structural,
            fluid,
            pairs,
            pressure,
            load_scale,
        })
    }

    pub fn interface_dim(&self) -> usize {
        self.structural.len()
    }

    /// Positions of the fluid boundary points along the interface.
    pub fn fluid_coordinates(&self) -> Vec<f64> {
        self.fluid.iter().map(|p| p[0]).collect()
    }

    /// Deflection of each fluid point for nodal deflections `d`.
    pub fn fluid_deflection(&self, d: &DVector<f64>) -> Result<Vec<f64>, TestbedError> {
        let sample = FieldSample::new(self.structural.clone(), d.iter().copied().collect())?;
        Ok(transfer::map_motion(&sample, &self.pairs)?)
    }

    /// Pressure at each fluid point for nodal deflections `d`.
    pub fn pressures(&self, d: &DVector<f64>) -> Result<Vec<f64>, TestbedError> {
        let w = self.fluid_deflection(d)?;
        self.fluid
            .iter()
            .zip(&w)
            .map(|(p, w)| (self.pressure)(p[0], *w))
            .collect()
    }
}

impl SolverPair for CoupledBeam<'_> {
    fn fluid(&mut self, d: &DVector<f64>) -> Result<DVector<f64>, SolverFailure> {
        let line_loads: Vec<f64> = self
            .pressures(d)?
            .into_iter()
            .map(|p| p * self.load_scale)
            .collect();
        let sample = FieldSample::new(self.fluid.clone(), line_loads)?;
        Ok(DVector::from_vec(transfer::map_loads(&sample, &self.pairs)?))
    }

    fn solid(&mut self, nodal: &DVector<f64>) -> Result<DVector<f64>, SolverFailure> {
        let q: Vec<f64> = nodal
            .iter()
            .zip(self.pairs.tributary_lengths())
            .map(|(f, t)| f / t)
            .collect();
        Ok(DVector::from_vec(cantilever_deflection(&self.ei, &q, self.length)?))
    }
}

/// Converged interface state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    /// Nodal deflections, root first.
    pub deflection: Vec<f64>,
    /// Fluid point coordinates along the interface.
    pub fluid_coordinates: Vec<f64>,
    /// Converged pressures at the fluid points.
    pub pressures: Vec<f64>,
    pub report: CouplingReport,
}

impl CoupledSolution {
    pub fn tip_deflection(&self) -> f64 {
        *self.deflection.last().unwrap_or(&0.0)
    }
}

/// Runs the coupling iteration from the undeformed state.
pub fn solve_coupled(beam: &mut CoupledBeam<'_>, grid: &InterfaceSettings) -> Result<CoupledSolution, TestbedError> {
    let d0 = DVector::zeros(beam.interface_dim());
    let report = coupling::converge(beam, &d0, &grid.coupling_options())?;
    if !report.converged {
        return Err(TestbedError::NotConverged {
            iterations: report.iterations,
            residual: report.final_residual(),
        });
    }
    let pressures = beam.pressures(&report.d_final)?;
    Ok(CoupledSolution {
        deflection: report.d_final.iter().copied().collect(),
        fluid_coordinates: beam.fluid_coordinates(),
        pressures,
        report,
    })
}
