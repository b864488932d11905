//! Generalized-α time integration of `M a + C v + K d = f(t)`.

use nalgebra::{DMatrix, DVector};

use super::TestbedError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// High-frequency spectral radius ρ∞ in [0, 1].
    pub rho_inf: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), TestbedError> {
        if !(0.0..=1.0).contains(&self.rho_inf) {
            return Err(TestbedError::Integrator(format!(
                "spectral radius {} outside [0, 1]",
                self.rho_inf
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(TestbedError::Integrator(format!("time step {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(TestbedError::Integrator(format!("end time {}", self.t_end)));
        }
        Ok(())
    }
}

/// Algorithmic parameters derived from ρ∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParams {
    pub alpha_m: f64,
    pub alpha_f: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl AlphaParams {
    pub fn from_spectral_radius(rho_inf: f64) -> Self {
        let alpha_m = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0);
        let alpha_f = rho_inf / (rho_inf + 1.0);
        let gamma = 0.5 - alpha_m + alpha_f;
        let beta = 0.25 * (1.0 - alpha_m + alpha_f).powi(2);
        Self {
            alpha_m,
            alpha_f,
            beta,
            gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub displacements: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub accelerations: Vec<DVector<f64>>,
}

/// Integrates from `(d0, v0)` at t = 0 up to `t_end` with a fixed step.
pub fn generalized_alpha_trajectory(
    m: &DMatrix<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    f: impl Fn(f64) -> DVector<f64>,
    d0: &DVector<f64>,
    v0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, TestbedError> {
    cfg.validate()?;
    let n = m.nrows();
    for (name, mat) in [("M", m), ("C", c), ("K", k)] {
        if mat.shape() != (n, n) {
            return Err(TestbedError::Integrator(format!(
                "{name} is {}x{}, expected {n}x{n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
    }
    if d0.len() != n || v0.len() != n {
        return Err(TestbedError::Integrator("initial state dimension".into()));
    }
    let p = AlphaParams::from_spectral_radius(cfg.rho_inf);
    let dt = cfg.dt;

    let m_lu = m.clone().lu();
    let a0 = m_lu
        .solve(&(f(0.0) - c * v0 - k * d0))
        .ok_or_else(|| TestbedError::Integrator("singular mass matrix".into()))?;

    let effective = m * (1.0 - p.alpha_m)
        + c * ((1.0 - p.alpha_f) * p.gamma * dt)
        + k * ((1.0 - p.alpha_f) * p.beta * dt * dt);
    let eff_lu = effective.lu();
    if eff_lu.determinant().abs() == 0.0 {
        return Err(TestbedError::Integrator("singular effective stiffness".into()));
    }

    let steps = (cfg.t_end / dt).round() as usize;
    let mut out = Trajectory {
        times: Vec::with_capacity(steps + 1),
        displacements: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        accelerations: Vec::with_capacity(steps + 1),
    };
    let (mut d, mut v, mut a) = (d0.clone(), v0.clone(), a0);
    out.times.push(0.0);
    out.displacements.push(d.clone());
    out.velocities.push(v.clone());
    out.accelerations.push(a.clone());

    for step in 0..steps {
        let t_next = (step + 1) as f64 * dt;
        let t_mid = t_next - p.alpha_f * dt;
        // predictors: the parts of d, v at n+1 not depending on a_{n+1}
        let d_pred = &d + &v * dt + &a * ((0.5 - p.beta) * dt * dt);
        let v_pred = &v + &a * ((1.0 - p.gamma) * dt);
        let rhs = f(t_mid)
            - m * (&a * p.alpha_m)
            - c * (&v_pred * (1.0 - p.alpha_f) + &v * p.alpha_f)
            - k * (&d_pred * (1.0 - p.alpha_f) + &d * p.alpha_f);
        let a_next = eff_lu
            .solve(&rhs)
            .ok_or_else(|| TestbedError::Integrator("singular effective stiffness".into()))?;
        d = d_pred + &a_next * (p.beta * dt * dt);
        v = v_pred + &a_next * (p.gamma * dt);
        a = a_next;
        out.times.push(t_next);
        out.displacements.push(d.clone());
        out.velocities.push(v.clone());
        out.accelerations.push(a.clone());
    }
    Ok(out)
}
