//! Elastic modulus distributions along the beam and cross-section geometry.

use super::TestbedError;

/// Beam length shared by the three beam families, m.
pub const BEAM_LENGTH: f64 = 0.35;
/// Integral of the linear modulus along the beam, Pa·m.
pub const MODULUS_INTEGRAL: f64 = 1.96e6;
/// Largest admissible |A| for the linear profile, Pa/m.
pub const LINEAR_SLOPE_BOUND: f64 = 31.9088e6;
/// Largest admissible uniform modulus, Pa.
pub const UNIFORM_MODULUS_MAX: f64 = 10.0e6;
/// Modulus inside the box, Pa.
pub const BOX_INSIDE: f64 = 7.0e6;
/// Modulus outside the box, Pa.
pub const BOX_OUTSIDE: f64 = 5.6e6;

const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StiffnessProfile {
    /// `E = A x + B` with `B` fixed by the modulus integral; `a` in Pa/m.
    Linear { a: f64 },
    /// `E = B`; `b` in Pa.
    Uniform { b: f64 },
    /// Stiffer box of width l/3 centered at `x_b` (m).
    Box { x_b: f64 },
    /// Uniform modulus `e` (Pa) of a plate at angle `theta` (degrees).
    SailPlane { theta: f64, e: f64 },
}

impl StiffnessProfile {
    /// Checks the family bounds; `length` is the beam length.
    pub fn validate(&self, length: f64) -> Result<(), TestbedError> {
        let bad = |msg: String| Err(TestbedError::InvalidProfile(msg));
        match *self {
            StiffnessProfile::Linear { a } => {
                if !a.is_finite() || a.abs() > LINEAR_SLOPE_BOUND * (1.0 + BOUND_SLACK) {
                    return bad(format!("slope {a:e} Pa/m outside ±{LINEAR_SLOPE_BOUND:e}"));
                }
            }
            StiffnessProfile::Uniform { b } => {
                if !(0.0..=UNIFORM_MODULUS_MAX * (1.0 + BOUND_SLACK)).contains(&b) {
                    return bad(format!("uniform modulus {b:e} Pa outside [0, {UNIFORM_MODULUS_MAX:e}]"));
                }
            }
            StiffnessProfile::Box { x_b } => {
                let half = length / 6.0;
                let tol = BOUND_SLACK * length;
                if !x_b.is_finite() || x_b < half - tol || x_b > length - half + tol {
                    return bad(format!("box center {x_b} m does not fit in [{half}, {}]", length - half));
                }
            }
            StiffnessProfile::SailPlane { theta, e } => {
                if !theta.is_finite() || !(e.is_finite() && e > 0.0) {
                    return bad(format!("sail-plane angle {theta} deg, modulus {e:e} Pa"));
                }
            }
        }
        Ok(())
    }

    /// Modulus at `x` as written by the profile definition, Pa.
    pub fn raw_modulus(&self, x: f64, length: f64) -> f64 {
        match *self {
            StiffnessProfile::Linear { a } => a * x + MODULUS_INTEGRAL / length - a * length / 2.0,
            StiffnessProfile::Uniform { b } => b,
            StiffnessProfile::Box { x_b } => {
                if (x - x_b).abs() <= length / 6.0 {
                    BOX_INSIDE
                } else {
                    BOX_OUTSIDE
                }
            }
            StiffnessProfile::SailPlane { e, .. } => e,
        }
    }

    /// Positions where the modulus jumps.
    pub fn discontinuities(&self, length: f64) -> Vec<f64> {
        match *self {
            StiffnessProfile::Box { x_b } => vec![x_b - length / 6.0, x_b + length / 6.0],
            _ => Vec::new(),
        }
    }

    /// Modulus used by the solver: the raw modulus with the uniform family
    /// floored at `floor` so that `B = 0` stays solvable.
    pub fn modulus(&self, x: f64, length: f64, floor: f64) -> Result<f64, TestbedError> {
        let e = self.raw_modulus(x, length);
        let e = match self {
            StiffnessProfile::Uniform { .. } => e.max(floor),
            _ => e,
        };
        if !(e > 0.0) || !e.is_finite() {
            return Err(TestbedError::NonPositiveModulus { x, modulus: e });
        }
        Ok(e)
    }
}

/// Cross-section second moment of area along the beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Section {
    /// Constant second moment, m⁴.
    Constant(f64),
    /// Rectangular section of fixed width with thickness varying linearly
    /// from `root` to `tip`, all in m.
    Tapered { width: f64, root: f64, tip: f64 },
}

impl Section {
    pub fn second_moment(&self, x: f64, length: f64) -> f64 {
        match *self {
            Section::Constant(i) => i,
            Section::Tapered { width, root, tip } => {
                let t = root + (tip - root) * x / length;
                width * t.powi(3) / 12.0
            }
        }
    }
}
