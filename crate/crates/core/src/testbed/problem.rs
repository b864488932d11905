//! Design problems built on the coupled testbed.

use serde::{Deserialize, Serialize};

use super::coupled::{solve_coupled, CoupledBeam, CoupledSolution, InterfaceSettings, PseudoFluid};
use super::profile::{Section, StiffnessProfile, BEAM_LENGTH};
use super::TestbedError;
use crate::acquisition::ConstraintSpec;
use crate::space::Bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Linear modulus with fixed integral; minimize tip deflection subject to
    /// the outlet-velocity analog.
    Example1,
    /// Uniform modulus, unconstrained.
    Example2,
    /// Stiff box of variable position, unconstrained.
    Example3,
    /// Tapered plate at an angle of attack; minimize drag subject to lift,
    /// deflection and pressure-differential constraints.
    SailPlane,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Example1, Family::Example2, Family::Example3, Family::SailPlane];

    pub fn id(&self) -> &'static str {
        match self {
            Family::Example1 => "example1",
            Family::Example2 => "example2",
            Family::Example3 => "example3",
            Family::SailPlane => "sailplane",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Self::ALL.into_iter().find(|f| f.id() == s)
    }

    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            Family::Example1 => vec!["A"],
            Family::Example2 => vec!["B"],
            Family::Example3 => vec!["x_b"],
            Family::SailPlane => vec!["theta", "E"],
        }
    }

    pub fn objective_name(&self) -> &'static str {
        match self {
            Family::SailPlane => "F_D",
            _ => "delta",
        }
    }

    pub fn constraint_names(&self) -> Vec<&'static str> {
        match self {
            Family::Example1 => vec!["v_x"],
            Family::Example2 | Family::Example3 => vec![],
            Family::SailPlane => vec!["F_L", "delta", "dp"],
        }
    }

    /// Design box in the units of the parameters (MPa/m, MPa, m, degrees).
    pub fn bounds(&self) -> Bounds {
        let (lo, hi) = match self {
            Family::Example1 => (vec![-31.9088], vec![31.9088]),
            Family::Example2 => (vec![0.0], vec![10.0]),
            Family::Example3 => (vec![BEAM_LENGTH / 6.0], vec![BEAM_LENGTH - BEAM_LENGTH / 6.0]),
            Family::SailPlane => (vec![0.0, 30.0], vec![10.0, 50.0]),
        };
        Bounds::new(lo, hi).expect("preset bounds are valid")
    }

    pub fn constraints(&self) -> Vec<ConstraintSpec> {
        match self {
            Family::Example1 => vec![ConstraintSpec::at_most(1.4)],
            Family::Example2 | Family::Example3 => vec![],
            Family::SailPlane => vec![
                ConstraintSpec::at_least(12000.0),
                ConstraintSpec::at_most(2.5e-3),
                ConstraintSpec::at_most(1.2e5),
            ],
        }
    }

    pub fn n_init(&self) -> usize {
        match self {
            Family::Example3 => 3,
            Family::SailPlane => 8,
            _ => 4,
        }
    }

    /// Fixed initial designs where the family prescribes them.
    pub fn init_points(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Family::Example3 => {
                let l = BEAM_LENGTH;
                Some(vec![vec![l / 6.0], vec![l / 2.0], vec![l - l / 6.0]])
            }
            Family::SailPlane => Some(
                [
                    (0.0, 40.0),
                    (2.5, 40.0),
                    (5.0, 40.0),
                    (7.5, 40.0),
                    (10.0, 40.0),
                    (2.5, 30.0),
                    (7.5, 50.0),
                    (10.0, 30.0),
                ]
                .iter()
                .map(|(t, e)| vec![*t, *e])
                .collect(),
            ),
            _ => None,
        }
    }
}

/// Cantilever and pseudo-fluid parameters of the three beam families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSettings {
    /// m
    pub length: f64,
    /// Cross-section second moment, m⁴.
    pub second_moment: f64,
    /// Smallest modulus used for the uniform family, Pa.
    pub modulus_floor: f64,
    pub fluid: PseudoFluid,
    /// Blockage sensitivity of the velocity analog, 1/m.
    pub kappa: f64,
    /// Reference outlet velocity, m/s.
    pub v0: f64,
}

impl Default for BeamSettings {
    fn default() -> Self {
        Self {
            length: BEAM_LENGTH,
            second_moment: 6.67e-7,
            modulus_floor: 0.05e6,
            fluid: PseudoFluid::default(),
            kappa: 5.0,
            v0: 1.0,
        }
    }
}

/// Tapered plate at an angle of attack in a uniform stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SailPlaneSettings {
    /// kg/m³
    pub density: f64,
    /// m/s
    pub inflow_velocity: f64,
    /// Plate length along the chord, m.
    pub chord: f64,
    /// Section width, m.
    pub width: f64,
    /// Thickness at the clamped leading edge, m.
    pub thickness_root: f64,
    /// Thickness at the trailing edge, m.
    pub thickness_tip: f64,
    /// Normal-force coefficient at zero angle.
    pub normal_coefficient_base: f64,
    /// Growth of the normal-force coefficient with sin θ.
    pub normal_coefficient_slope: f64,
    /// Skin-friction force along the plate, N.
    pub tangential_force: f64,
    /// Chordwise pressure gradient: shape `1 + λ (1 − 2 s / chord)`.
    pub pressure_slope: f64,
    /// Pressure relief per unit deflection, 1/m.
    pub relief: f64,
    /// Stiffness-like pressure feedback, Pa/m.
    pub feedback: f64,
    /// Converts pressure into structural line load, m.
    pub load_width: f64,
}

impl Default for SailPlaneSettings {
    fn default() -> Self {
        Self {
            density: 2000.0,
            inflow_velocity: 5.0,
            chord: 0.4,
            width: 0.01,
            thickness_root: 0.038,
            thickness_tip: 0.004,
            normal_coefficient_base: 0.354,
            normal_coefficient_slope: 11.8,
            tangential_force: 350.0,
            pressure_slope: 1.3,
            relief: -80.0,
            feedback: 0.0,
            load_width: 6.0e-5,
        }
    }
}

impl SailPlaneSettings {
    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.density * self.inflow_velocity.powi(2)
    }

    /// Chord-averaged undeformed pressure at angle `theta` (degrees), Pa.
    pub fn mean_pressure(&self, theta: f64) -> f64 {
        self.dynamic_pressure()
            * (self.normal_coefficient_base + self.normal_coefficient_slope * theta.to_radians().sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: Family,
    #[serde(default)]
    pub beam: BeamSettings,
    #[serde(default)]
    pub sail: SailPlaneSettings,
    #[serde(default)]
    pub interface: InterfaceSettings,
}

/// Result of one coupled evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutput {
    pub objective: f64,
    /// Constraint values in the order of [`Family::constraint_names`].
    pub constraints: Vec<f64>,
    pub solution: CoupledSolution,
}

impl ProblemSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            beam: BeamSettings::default(),
            sail: SailPlaneSettings::default(),
            interface: InterfaceSettings::default(),
        }
    }

    /// Stiffness profile (SI units) for a design vector in parameter units.
    pub fn profile(&self, x: &[f64]) -> Result<StiffnessProfile, TestbedError> {
        let expected = self.family.parameter_names().len();
        if x.len() != expected {
            return Err(TestbedError::Parameters {
                family: self.family.id(),
                expected,
                found: x.len(),
            });
        }
        Ok(match self.family {
            Family::Example1 => StiffnessProfile::Linear { a: x[0] * 1e6 },
            Family::Example2 => StiffnessProfile::Uniform { b: x[0] * 1e6 },
            Family::Example3 => StiffnessProfile::Box { x_b: x[0] },
            Family::SailPlane => StiffnessProfile::SailPlane {
                theta: x[0],
                e: x[1] * 1e6,
            },
        })
    }

    /// Solves the coupled problem at `x` and extracts objective and constraints.
    pub fn evaluate(&self, x: &[f64]) -> Result<EvaluationOutput, TestbedError> {
        let profile = self.profile(x)?;
        match self.family {
            Family::SailPlane => self.evaluate_sail(&profile, x[0]),
            _ => self.evaluate_beam(&profile),
        }
    }

    fn evaluate_beam(&self, profile: &StiffnessProfile) -> Result<EvaluationOutput, TestbedError> {
        let b = &self.beam;
        let fluid = b.fluid;
        let mut model = CoupledBeam::new(
            profile,
            &Section::Constant(b.second_moment),
            b.length,
            b.modulus_floor,
            &self.interface,
            1.0,
            Box::new(move |_, w| fluid.load_at(fluid.q0, w)),
        )?;
        let solution = solve_coupled(&mut model, &self.interface)?;
        let delta = solution.tip_deflection();
        let constraints = match self.family {
            Family::Example1 => vec![b.v0 * (1.0 + b.kappa * delta)],
            _ => vec![],
        };
        Ok(EvaluationOutput {
            objective: delta,
            constraints,
            solution,
        })
    }

    fn evaluate_sail(&self, profile: &StiffnessProfile, theta: f64) -> Result<EvaluationOutput, TestbedError> {
        let s = self.sail;
        let mean = s.mean_pressure(theta);
        let law = PseudoFluid {
            q0: 0.0,
            beta: s.relief,
            gamma: s.feedback,
        };
        let chord = s.chord;
        let nominal = move |x: f64| mean * (1.0 + s.pressure_slope * (1.0 - 2.0 * x / chord));
        let mut model = CoupledBeam::new(
            profile,
            &Section::Tapered {
                width: s.width,
                root: s.thickness_root,
                tip: s.thickness_tip,
            },
            chord,
            0.0,
            &self.interface,
            s.load_width,
            Box::new(move |x, w| law.load_at(nominal(x), w)),
        )?;
        let solution = solve_coupled(&mut model, &self.interface)?;
        let spacing = chord / solution.pressures.len() as f64;
        let normal: f64 = solution.pressures.iter().sum::<f64>() * spacing;
        let th = theta.to_radians();
        let drag = normal * th.sin() + s.tangential_force * th.cos();
        let lift = normal * th.cos() - s.tangential_force * th.sin();
        let delta = solution.tip_deflection() * th.cos();
        let p_max = solution.pressures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p_min = solution.pressures.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(EvaluationOutput {
            objective: drag,
            constraints: vec![lift, delta, p_max - p_min],
            solution,
        })
    }
}
