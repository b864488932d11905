//! Outer constrained Bayesian-optimization loop.
//!
//! A campaign evaluates its initial designs, then alternates between fitting
//! one GP per quantity (objective and each constraint), maximizing
//! constrained EI, and recording the evaluation of the proposed point. The
//! state is a plain value that serializes for persistence, and the loop is
//! exposed both as ask/tell ([`CampaignState::next_request`] and
//! [`CampaignState::tell`]) and as a driver over a closure
//! ([`run_campaign`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::acquisition::{
    maximize_acquisition, AcquisitionProblem, ConstraintModel, ConstraintSpec, Incumbent, MaximizeOptions,
};
use crate::gp::{self, Dataset, FitOptions, GpError, HyperBounds, Hyperparams, Posterior};
use crate::space::Bounds;

/// Largest deviation tolerated between a proposal and the point reported back.
pub const ECHO_TOLERANCE: f64 = 1e-9;
/// Quarantine radius around failed points, as a fraction of the box diagonal.
pub const QUARANTINE_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("initial point {index} lies outside the bounds")]
    InitOutOfBounds { index: usize },
    #[error("{what} has {found} entries, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("point {x:?} lies outside the bounds")]
    OutOfBounds { x: Vec<f64> },
    #[error("fitting the {surrogate} surrogate failed: {source}")]
    Fit { surrogate: String, source: GpError },
    #[error("no evaluation was requested")]
    NoPendingRequest,
    #[error("reported point {found:?} deviates from the requested {expected:?}")]
    EchoMismatch { expected: Vec<f64>, found: Vec<f64> },
    #[error("campaign is finished ({0})")]
    Finished(StopReason),
    #[error("non-finite value reported for the {0}")]
    NonFinite(String),
}

/// Row label of an evaluation: an initial design or the n-th proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    Init,
    Iteration(usize),
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Init => write!(f, "Init"),
            Tag::Iteration(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Observed {
        objective: f64,
        constraints: Vec<f64>,
        feasible: bool,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub tag: Tag,
    pub x: Vec<f64>,
    pub outcome: Outcome,
}

impl EvaluationRecord {
    pub fn objective(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Observed { objective, .. } => Some(*objective),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn constraints(&self) -> Option<&[f64]> {
        match &self.outcome {
            Outcome::Observed { constraints, .. } => Some(constraints),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.outcome, Outcome::Observed { feasible: true, .. })
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.outcome, Outcome::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub bounds: Bounds,
    pub constraints: Vec<ConstraintSpec>,
    pub n_init: usize,
    /// Explicit initial designs; replaces random sampling when present.
    pub init_points: Option<Vec<Vec<f64>>>,
    /// Number of proposals after the initial designs.
    pub max_iters: usize,
    pub stall_window: usize,
    /// Relative improvement of the best feasible objective below which the
    /// campaign counts as stalled.
    pub stall_tol: f64,
    pub seed: u64,
    pub gp_restarts: usize,
    pub acquisition_budget: usize,
    pub hyper_bounds: HyperBounds,
}

impl CampaignConfig {
    pub fn new(bounds: Bounds, constraints: Vec<ConstraintSpec>) -> Self {
        Self {
            bounds,
            constraints,
            n_init: 4,
            init_points: None,
            max_iters: 20,
            stall_window: 3,
            stall_tol: 0.01,
            seed: 0,
            gp_restarts: 8,
            acquisition_budget: 2000,
            hyper_bounds: HyperBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        match &self.init_points {
            Some(points) => {
                if points.is_empty() {
                    return bad("init_points is empty");
                }
                for (index, p) in points.iter().enumerate() {
                    if p.len() != self.bounds.dim() {
                        return Err(OptimizerError::DimensionMismatch {
                            what: "initial point",
                            expected: self.bounds.dim(),
                            found: p.len(),
                        });
                    }
                    if !self.bounds.contains(p) {
                        return Err(OptimizerError::InitOutOfBounds { index });
                    }
                }
            }
            None => {
                if self.n_init == 0 {
                    return bad("n_init must be at least 1");
                }
            }
        }
        if self.stall_window == 0 {
            return bad("stall_window must be at least 1");
        }
        if !(self.stall_tol >= 0.0) || !self.stall_tol.is_finite() {
            return bad("stall_tol must be a finite non-negative number");
        }
        if self.gp_restarts == 0 {
            return bad("gp_restarts must be at least 1");
        }
        if self.acquisition_budget == 0 {
            return bad("acquisition_budget must be at least 1");
        }
        if self.constraints.iter().any(|c| !c.threshold.is_finite()) {
            return bad("constraint thresholds must be finite");
        }
        self.hyper_bounds
            .validate()
            .map_err(|e| OptimizerError::InvalidConfig(e.to_string()))
    }

    pub fn quarantine_radius(&self) -> f64 {
        QUARANTINE_FRACTION * self.bounds.diagonal()
    }
}

/// Initial designs: the explicit list if given, otherwise `n_init` uniform
/// draws from a generator seeded with the campaign seed.
pub fn initialize(config: &CampaignConfig) -> Result<Vec<Vec<f64>>, OptimizerError> {
    config.validate()?;
    if let Some(points) = &config.init_points {
        return Ok(points.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..config.n_init).map(|_| config.bounds.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Budget,
    Stall,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::Stall => "stall",
        })
    }
}

/// Hyperparameters of the last fit, kept for warm starts and for rebuilding surrogates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateHyperparams {
    pub objective: Option<Hyperparams>,
    pub constraints: Vec<Option<Hyperparams>>,
}

/// An evaluation the campaign is waiting for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub tag: Tag,
    pub x: Vec<f64>,
    /// Acquisition value at `x` (zero for initial designs).
    pub acquisition: f64,
    /// The acquisition vanished everywhere and `x` maximizes feasibility instead.
    pub fallback: bool,
}

/// What the campaign wants next.
#[derive(Debug, Clone, PartialEq)]
pub enum Ask {
    Evaluate(Request),
    Done(StopReason),
}

/// GP surrogates rebuilt from the current history.
pub struct Surrogates {
    pub objective: Posterior,
    pub constraints: Vec<ConstraintModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub config: CampaignConfig,
    pub init_plan: Vec<Vec<f64>>,
    pub history: Vec<EvaluationRecord>,
    pub incumbent: Incumbent,
    pub hyperparams: SurrogateHyperparams,
    pub proposals: usize,
    pub pending: Option<Request>,
}

impl CampaignState {
    pub fn new(config: CampaignConfig) -> Result<Self, OptimizerError> {
        let init_plan = initialize(&config)?;
        let n_constraints = config.constraints.len();
        Ok(Self {
            config,
            init_plan,
            history: Vec::new(),
            incumbent: Incumbent::none(),
            hyperparams: SurrogateHyperparams {
                objective: None,
                constraints: vec![None; n_constraints],
            },
            proposals: 0,
            pending: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.bounds.dim()
    }

    pub fn init_done(&self) -> bool {
        self.history.len() >= self.init_plan.len()
    }

    /// Best feasible objective after the initial designs and after each
    /// proposal: entry `t` covers the initial designs plus `t` proposals.
    /// `None` until a feasible point exists.
    pub fn best_series(&self) -> Vec<Option<f64>> {
        let mut out = Vec::new();
        let mut best: Option<f64> = None;
        let n_init = self.init_plan.len().min(self.history.len());
        for (i, rec) in self.history.iter().enumerate() {
            if rec.is_feasible() {
                let f = rec.objective().expect("feasible records are observed");
                if best.is_none_or(|b| f < b) {
                    best = Some(f);
                }
            }
            if i + 1 >= n_init {
                out.push(best);
            }
        }
        out
    }

    pub fn should_stop(&self) -> Option<StopReason> {
        if !self.init_done() {
            return None;
        }
        if self.proposals >= self.config.max_iters {
            return Some(StopReason::Budget);
        }
        let w = self.config.stall_window;
        if self.proposals >= w {
            let series = self.best_series();
            let t = self.proposals.min(series.len() - 1);
            if let (Some(before), Some(now)) = (series[t - w], series[t]) {
                let gain = before - now;
                if gain <= 0.0 || gain < self.config.stall_tol * before.abs() {
                    return Some(StopReason::Stall);
                }
            }
        }
        None
    }

    fn observed(&self) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        let mut cs = vec![Vec::new(); self.config.constraints.len()];
        for rec in &self.history {
            if let Outcome::Observed {
                objective,
                constraints,
                ..
            } = &rec.outcome
            {
                xs.push(rec.x.clone());
                fs.push(*objective);
                for (k, c) in constraints.iter().enumerate() {
                    cs[k].push(*c);
                }
            }
        }
        (xs, fs, cs)
    }

    pub fn failed_points(&self) -> Vec<Vec<f64>> {
        self.history
            .iter()
            .filter(|r| r.is_failed())
            .map(|r| r.x.clone())
            .collect()
    }

    fn iteration_seed(&self, iteration: usize) -> u64 {
        self.config
            .seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(iteration as u64 + 1))
    }

    /// Fits every surrogate to the observed history, warm-starting from the
    /// stored hyperparameters, and records the new ones.
    pub fn fit_surrogates(&mut self, seed: u64) -> Result<Surrogates, OptimizerError> {
        let (xs, fs, cs) = self.observed();
        let bounds = &self.config.bounds;
        let fit_one = |name: String, y: &[f64], warm: Option<Hyperparams>, seed: u64| {
            let wrap = |source| OptimizerError::Fit {
                surrogate: name.clone(),
                source,
            };
            let ds = Dataset::normalized(&xs, y, bounds).map_err(wrap)?;
            let opts = FitOptions {
                bounds: self.config.hyper_bounds,
                restarts: self.config.gp_restarts,
                seed,
                warm_start: warm,
                ..FitOptions::default()
            };
            let fitted = gp::fit(&ds, &opts).map_err(wrap)?;
            let post = Posterior::new(&ds, fitted.hyperparams).map_err(wrap)?;
            Ok::<_, OptimizerError>((post, fitted.hyperparams))
        };
        let (objective, hp_obj) = fit_one("objective".into(), &fs, self.hyperparams.objective, seed)?;
        let mut constraints = Vec::with_capacity(cs.len());
        let mut hp_cons = Vec::with_capacity(cs.len());
        for (k, values) in cs.iter().enumerate() {
            let (post, hp) = fit_one(
                format!("constraint {k}"),
                values,
                self.hyperparams.constraints[k],
                seed.wrapping_add(k as u64 + 1),
            )?;
            constraints.push(ConstraintModel {
                posterior: post,
                spec: self.config.constraints[k],
            });
            hp_cons.push(Some(hp));
        }
        self.hyperparams = SurrogateHyperparams {
            objective: Some(hp_obj),
            constraints: hp_cons,
        };
        Ok(Surrogates {
            objective,
            constraints,
        })
    }

    /// Rebuilds surrogates from the stored hyperparameters without refitting.
    /// `None` before the first fit.
    pub fn surrogates(&self) -> Result<Option<Surrogates>, OptimizerError> {
        let Some(hp_obj) = self.hyperparams.objective else {
            return Ok(None);
        };
        let (xs, fs, cs) = self.observed();
        let bounds = &self.config.bounds;
        let build = |name: String, y: &[f64], hp: Hyperparams| {
            let wrap = |source| OptimizerError::Fit {
                surrogate: name.clone(),
                source,
            };
            let ds = Dataset::normalized(&xs, y, bounds).map_err(wrap)?;
            Posterior::new(&ds, hp).map_err(wrap)
        };
        let objective = build("objective".into(), &fs, hp_obj)?;
        let mut constraints = Vec::new();
        for (k, values) in cs.iter().enumerate() {
            let Some(hp) = self.hyperparams.constraints[k] else {
                return Ok(None);
            };
            constraints.push(ConstraintModel {
                posterior: build(format!("constraint {k}"), values, hp)?,
                spec: self.config.constraints[k],
            });
        }
        Ok(Some(Surrogates {
            objective,
            constraints,
        }))
    }

    /// Fits the surrogates and maximizes constrained EI for the next proposal.
    pub fn propose(&mut self) -> Result<Request, OptimizerError> {
        let iteration = self.proposals + 1;
        let seed = self.iteration_seed(iteration);
        let surrogates = self.fit_surrogates(seed)?;
        let quarantine = self.failed_points();
        let problem = AcquisitionProblem {
            objective: &surrogates.objective,
            constraints: &surrogates.constraints,
            incumbent: &self.incumbent,
            bounds: &self.config.bounds,
            quarantine: &quarantine,
            quarantine_radius: self.config.quarantine_radius(),
        };
        let proposal = maximize_acquisition(
            &problem,
            &MaximizeOptions {
                budget: self.config.acquisition_budget,
                seed: seed.rotate_left(17),
                ..MaximizeOptions::default()
            },
        );
        Ok(Request {
            tag: Tag::Iteration(iteration),
            x: proposal.x,
            acquisition: proposal.value,
            fallback: proposal.fallback,
        })
    }

    /// The evaluation to perform next. Idempotent while a request is pending.
    pub fn next_request(&mut self) -> Result<Ask, OptimizerError> {
        if let Some(p) = &self.pending {
            return Ok(Ask::Evaluate(p.clone()));
        }
        let request = if !self.init_done() {
            Request {
                tag: Tag::Init,
                x: self.init_plan[self.history.len()].clone(),
                acquisition: 0.0,
                fallback: false,
            }
        } else {
            if let Some(reason) = self.should_stop() {
                return Ok(Ask::Done(reason));
            }
            self.propose()?
        };
        self.pending = Some(request.clone());
        Ok(Ask::Evaluate(request))
    }

    /// Records the outcome of the pending request.
    ///
    /// `x` must match the request within [`ECHO_TOLERANCE`]; the stored
    /// record keeps the requested point.
    pub fn tell(&mut self, x: &[f64], result: Result<(f64, Vec<f64>), String>) -> Result<&EvaluationRecord, OptimizerError> {
        let pending = self.pending.as_ref().ok_or(OptimizerError::NoPendingRequest)?;
        if x.len() != pending.x.len() {
            return Err(OptimizerError::DimensionMismatch {
                what: "reported point",
                expected: pending.x.len(),
                found: x.len(),
            });
        }
        if x.iter().zip(&pending.x).any(|(a, b)| !((a - b).abs() <= ECHO_TOLERANCE)) {
            return Err(OptimizerError::EchoMismatch {
                expected: pending.x.clone(),
                found: x.to_vec(),
            });
        }
        let outcome = match result {
            Ok((objective, constraints)) => {
                if constraints.len() != self.config.constraints.len() {
                    return Err(OptimizerError::DimensionMismatch {
                        what: "constraint vector",
                        expected: self.config.constraints.len(),
                        found: constraints.len(),
                    });
                }
                if !objective.is_finite() {
                    return Err(OptimizerError::NonFinite("objective".into()));
                }
                if let Some(k) = constraints.iter().position(|c| !c.is_finite()) {
                    return Err(OptimizerError::NonFinite(format!("constraint {k}")));
                }
                let feasible = self
                    .config
                    .constraints
                    .iter()
                    .zip(&constraints)
                    .all(|(spec, c)| spec.is_satisfied(*c));
                Outcome::Observed {
                    objective,
                    constraints,
                    feasible,
                }
            }
            Err(reason) => Outcome::Failed { reason },
        };
        let pending = self.pending.take().expect("checked above");
        let record = EvaluationRecord {
            tag: pending.tag,
            x: pending.x,
            outcome,
        };
        if let Outcome::Observed {
            objective,
            feasible: true,
            ..
        } = record.outcome
        {
            if !self.incumbent.feasible_found || objective < self.incumbent.f_best {
                self.incumbent = Incumbent {
                    f_best: objective,
                    x_best: record.x.clone(),
                    feasible_found: true,
                };
            }
        }
        if let Tag::Iteration(_) = record.tag {
            self.proposals += 1;
        }
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }
}

/// Runs a whole campaign against `evaluator`, which returns the objective and
/// constraint values or a failure description.
pub fn run_campaign<F>(config: CampaignConfig, mut evaluator: F) -> Result<(CampaignState, StopReason), OptimizerError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), String>,
{
    let mut state = CampaignState::new(config)?;
    loop {
        match state.next_request()? {
            Ask::Done(reason) => return Ok((state, reason)),
            Ask::Evaluate(req) => {
                let result = evaluator(&req.x);
                state.tell(&req.x, result)?;
            }
        }
    }
}
