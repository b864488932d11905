//! Expected improvement, feasibility probability and their constrained product.
//!
//! All functions here work on GP predictions in user units. The inner
//! maximizer probes a shifted Halton design over the design box, keeps the
//! best probes and refines each with a bounded compass search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::gp::Posterior;
use crate::space::{shifted_halton, Bounds};
use crate::stats::{normal_cdf, normal_pdf};

/// Direction of an inequality constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `c(x) <= threshold`
    #[serde(rename = "<=")]
    AtMost,
    /// `c(x) >= threshold`
    #[serde(rename = ">=")]
    AtLeast,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::AtMost => "<=",
            Sense::AtLeast => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "<=" | "≤" => Some(Sense::AtMost),
            ">=" | "≥" => Some(Sense::AtLeast),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub threshold: f64,
    pub sense: Sense,
}

impl ConstraintSpec {
    pub fn at_most(threshold: f64) -> Self {
        Self {
            threshold,
            sense: Sense::AtMost,
        }
    }

    pub fn at_least(threshold: f64) -> Self {
        Self {
            threshold,
            sense: Sense::AtLeast,
        }
    }

    /// Whether an observed constraint value satisfies this spec.
    pub fn is_satisfied(&self, value: f64) -> bool {
        match self.sense {
            Sense::AtMost => value <= self.threshold,
            Sense::AtLeast => value >= self.threshold,
        }
    }
}

/// Best feasible observation so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    /// Infinite until a feasible point is known; stored as null then.
    #[serde(with = "infinite_as_null")]
    pub f_best: f64,
    pub x_best: Vec<f64>,
    pub feasible_found: bool,
}

impl Incumbent {
    /// Incumbent before any feasible point is known.
    pub fn none() -> Self {
        Self {
            f_best: f64::INFINITY,
            x_best: Vec::new(),
            feasible_found: false,
        }
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `E[max(0, f_best − f)]` for `f ~ N(mu, var)`.
pub fn expected_improvement(mu: f64, var: f64, f_best: f64) -> f64 {
    let gap = f_best - mu;
    if !(var > 0.0) {
        return gap.max(0.0);
    }
    let sigma = var.sqrt();
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Probability that a constraint with predictive `N(mu_c, var_c)` is satisfied.
pub fn feasibility_probability(mu_c: f64, var_c: f64, spec: &ConstraintSpec) -> f64 {
    // ">=" is handled as "<=" on the negated quantity
    let (mu, lambda) = match spec.sense {
        Sense::AtMost => (mu_c, spec.threshold),
        Sense::AtLeast => (-mu_c, -spec.threshold),
    };
    if !(var_c > 0.0) {
        return if mu <= lambda { 1.0 } else { 0.0 };
    }
    normal_cdf((lambda - mu) / var_c.sqrt())
}

/// A constraint surrogate paired with the constraint it models.
#[derive(Debug, Clone)]
pub struct ConstraintModel {
    pub posterior: Posterior,
    pub spec: ConstraintSpec,
}

/// `∏_k ρ_k(x)`, accumulated left to right starting from 1.
pub fn feasibility_product(x: &[f64], constraints: &[ConstraintModel]) -> f64 {
    constraints.iter().fold(1.0, |acc, c| {
        let p = c.posterior.predict(x);
        acc * feasibility_probability(p.mean, p.var, &c.spec)
    })
}

/// Constrained expected improvement `EI(x) · ∏_k ρ_k(x)`.
///
/// Before any feasible observation exists there is no incumbent value, and the
/// feasibility product alone is returned.
pub fn constrained_ei(
    x: &[f64],
    objective: &Posterior,
    constraints: &[ConstraintModel],
    incumbent: &Incumbent,
) -> f64 {
    let rho = feasibility_product(x, constraints);
    if !incumbent.feasible_found {
        return rho;
    }
    let p = objective.predict(x);
    expected_improvement(p.mean, p.var, incumbent.f_best) * rho
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximizeOptions {
    /// Total acquisition evaluations, probes included.
    pub budget: usize,
    pub probes_per_dim: usize,
    pub refine_starts: usize,
    pub seed: u64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            budget: 2000,
            probes_per_dim: 512,
            refine_starts: 8,
            seed: 0,
        }
    }
}

/// Everything the inner maximizer needs to score a candidate.
#[derive(Debug, Clone, Copy)]
pub struct AcquisitionProblem<'a> {
    pub objective: &'a Posterior,
    pub constraints: &'a [ConstraintModel],
    pub incumbent: &'a Incumbent,
    pub bounds: &'a Bounds,
    /// Points that must not be proposed again.
    pub quarantine: &'a [Vec<f64>],
    pub quarantine_radius: f64,
}

impl AcquisitionProblem<'_> {
    fn quarantined(&self, x: &[f64]) -> bool {
        self.quarantine.iter().any(|q| {
            q.iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                <= self.quarantine_radius
        })
    }

    /// Constrained EI, zero inside the quarantine balls.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.quarantined(x) {
            return 0.0;
        }
        constrained_ei(x, self.objective, self.constraints, self.incumbent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub value: f64,
    /// The acquisition was zero at every probe; `x` maximizes feasibility instead.
    pub fallback: bool,
    pub evaluations: usize,
}

fn by_value_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Compass search in unit coordinates, maximizing `f`.
fn compass_search<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    start: Vec<f64>,
    start_value: f64,
    initial_step: f64,
    budget: usize,
) -> (Vec<f64>, f64, usize) {
    let mut x = start;
    let mut fx = start_value;
    let mut step = initial_step;
    let mut used = 0;
    let dim = x.len();
    while step > 1e-9 && used + 2 * dim <= budget {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for d in 0..dim {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[d] = (cand[d] + dir * step).clamp(0.0, 1.0);
                if cand[d] == x[d] {
                    continue;
                }
                let v = f(&cand);
                used += 1;
                if v > best.as_ref().map_or(fx, |b| b.1) {
                    best = Some((cand, v));
                }
            }
        }
        match best {
            Some((cand, v)) => {
                x = cand;
                fx = v;
            }
            None => step *= 0.5,
        }
    }
    (x, fx, used)
}

/// Maximizes constrained EI over the design box.
///
/// Deterministic for a given seed. Ties are broken by the lowest probe index.
pub fn maximize_acquisition(problem: &AcquisitionProblem<'_>, opts: &MaximizeOptions) -> Proposal {
    let bounds = problem.bounds;
    let dim = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let n_probes = (opts.probes_per_dim * dim).max(1);
    let probes = shifted_halton(n_probes, &shift);

    let mut scored: Vec<(usize, f64)> = probes
        .iter()
        .enumerate()
        .map(|(i, u)| (i, problem.value(&bounds.from_unit(u))))
        .collect();
    let mut evaluations = n_probes;
    scored.sort_by(by_value_then_index);

    if !(scored[0].1 > 0.0) {
        // nothing to gain anywhere: head for the most likely feasible region
        let mut feas: Vec<(usize, f64)> = probes
            .iter()
            .enumerate()
            .filter(|(_, u)| !problem.quarantined(&bounds.from_unit(u)))
            .map(|(i, u)| (i, feasibility_product(&bounds.from_unit(u), problem.constraints)))
            .collect();
        evaluations += feas.len();
        feas.sort_by(by_value_then_index);
        let idx = feas.first().map_or(0, |f| f.0);
        log::warn!("acquisition is zero at every probe, proposing the most likely feasible point");
        return Proposal {
            x: bounds.from_unit(&probes[idx]),
            value: 0.0,
            fallback: true,
            evaluations,
        };
    }

    let starts: Vec<(usize, f64)> = scored
        .iter()
        .copied()
        .filter(|s| s.1 > 0.0)
        .take(opts.refine_starts.max(1))
        .collect();
    let remaining = opts.budget.saturating_sub(n_probes);
    let per_start = (remaining / starts.len()).max(8 * dim);
    let spacing = (n_probes as f64).powf(-1.0 / dim as f64);

    let mut objective = |u: &[f64]| problem.value(&bounds.from_unit(u));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(idx, value) in &starts {
        let (u, v, used) =
            compass_search(&mut objective, probes[idx].clone(), value, 2.0 * spacing, per_start);
        evaluations += used;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((u, v));
        }
    }
    let (u, value) = best.expect("at least one refinement start");
    let mut x = bounds.from_unit(&u);
    bounds.clamp(&mut x);
    Proposal {
        x,
        value,
        fallback: false,
        evaluations,
    }
}
