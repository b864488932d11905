//! Euler–Bernoulli cantilever, clamped at x = 0 and free at x = l.
//!
//! `(EI w'')'' = q` is split into `M'' = q` (free-end conditions `M = M' = 0`)
//! and `EI w'' = M` (clamped conditions `w = w' = 0`). Both are marched with
//! second-order central differences; the derivative conditions use mirror
//! ghost nodes.

use super::profile::{Section, StiffnessProfile};
use super::TestbedError;

/// Nodal deflections on a uniform grid of `ei.len()` nodes.
pub fn cantilever_deflection(ei: &[f64], q: &[f64], length: f64) -> Result<Vec<f64>, TestbedError> {
    let nodes = ei.len();
    if nodes < 2 || q.len() != nodes {
        return Err(TestbedError::Grid(format!(
            "{} stiffness values and {} loads",
            ei.len(),
            q.len()
        )));
    }
    if let Some(i) = ei.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(TestbedError::NonPositiveModulus {
            x: length * i as f64 / (nodes - 1) as f64,
            modulus: ei[i],
        });
    }
    let n = nodes - 1;
    let h2 = (length / n as f64).powi(2);

    let mut m = vec![0.0; nodes];
    m[n - 1] = 0.5 * h2 * q[n];
    for i in (1..n).rev() {
        m[i - 1] = 2.0 * m[i] - m[i + 1] + h2 * q[i];
    }

    let kappa: Vec<f64> = m.iter().zip(ei).map(|(m, ei)| m / ei).collect();
    let mut w = vec![0.0; nodes];
    w[1] = 0.5 * h2 * kappa[0];
    for i in 1..n {
        w[i + 1] = 2.0 * w[i] - w[i - 1] + h2 * kappa[i];
    }
    Ok(w)
}

/// 5-point Gauss–Legendre rule on [−1, 1].
const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Bending stiffness at `nodes` equally spaced points: the harmonic mean of
/// `E(x) I(x)` over each node's cell (half cells at the ends). Cells are
/// split at modulus jumps, so a discontinuous profile enters through its
/// exact overlap with the cell and the response varies continuously with
/// the jump positions.
pub fn bending_stiffness(
    profile: &StiffnessProfile,
    section: &Section,
    length: f64,
    nodes: usize,
    modulus_floor: f64,
) -> Result<Vec<f64>, TestbedError> {
    if nodes < 2 {
        return Err(TestbedError::Grid(format!("{nodes} nodes")));
    }
    let h = length / (nodes - 1) as f64;
    let jumps = profile.discontinuities(length);
    let flexibility = |x: f64| -> Result<f64, TestbedError> {
        Ok(1.0 / (profile.modulus(x, length, modulus_floor)? * section.second_moment(x, length)))
    };
    (0..nodes)
        .map(|i| {
            let x = i as f64 * h;
            let (a, b) = ((x - 0.5 * h).max(0.0), (x + 0.5 * h).min(length));
            let mut cuts = vec![a];
            cuts.extend(jumps.iter().copied().filter(|j| *j > a && *j < b));
            cuts.push(b);
            let mut integral = 0.0;
            for w in cuts.windows(2) {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (t, wt) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                    integral += wt * half * flexibility(mid + half * t)?;
                }
            }
            Ok((b - a) / integral)
        })
        .collect()
}

/// Tip deflection under a distributed load `load(x)` (N/m) on `n_grid` intervals.
pub fn beam_deflection(
    profile: &StiffnessProfile,
    section: &Section,
    length: f64,
    load: impl Fn(f64) -> f64,
    n_grid: usize,
    modulus_floor: f64,
) -> Result<f64, TestbedError> {
    if n_grid < 16 {
        return Err(TestbedError::Grid(format!("n_grid = {n_grid}, need at least 16")));
    }
    profile.validate(length)?;
    let ei = bending_stiffness(profile, section, length, n_grid + 1, modulus_floor)?;
    let q: Vec<f64> = (0..=n_grid)
        .map(|i| load(length * i as f64 / n_grid as f64))
        .collect();
    let w = cantilever_deflection(&ei, &q, length)?;
    Ok(w[n_grid])
}
