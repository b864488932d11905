//! Exact Gaussian-process regression with a Matérn-5/2 kernel.
//!
//! Training data live in a [`Dataset`], which carries the normalization
//! between user coordinates and model coordinates: inputs are mapped to the
//! unit cube through the design-space bounds and outputs are standardized to
//! zero mean and unit variance. Hyperparameters are always expressed in model
//! coordinates; [`Posterior::predict`] accepts user-space inputs and returns
//! user-space mean and variance.
//!
//! Hyperparameters are fitted by maximizing the log marginal likelihood with
//! a multistart projected-gradient ascent in log space, using the analytic
//! gradient of the likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::space::{shifted_halton, Bounds};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Smallest jitter tried after a failed plain factorization, relative to θ₁.
const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to θ₁.
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("covariance matrix is not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("dataset needs at least {needed} distinct input points, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("input matrix has {rows} rows but {targets} targets were given")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error("input point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("non-finite value in training data at row {0}")]
    NonFinite(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

/// Kernel and noise hyperparameters, in model coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Signal variance θ₁.
    pub signal_var: f64,
    /// Shared lengthscale θ₂.
    pub lengthscale: f64,
    /// Observation noise variance σ².
    pub noise_var: f64,
}

impl Hyperparams {
    pub fn new(signal_var: f64, lengthscale: f64, noise_var: f64) -> Result<Self, GpError> {
        let hp = Self {
            signal_var,
            lengthscale,
            noise_var,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.signal_var > 0.0 && self.signal_var.is_finite()) {
            return Err(GpError::InvalidHyperparams(format!(
                "signal variance must be positive, got {}",
                self.signal_var
            )));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(GpError::InvalidHyperparams(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(GpError::InvalidHyperparams(format!(
                "noise variance must be non-negative, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    fn to_log(self) -> [f64; 3] {
        [
            self.signal_var.ln(),
            self.lengthscale.ln(),
            self.noise_var.ln(),
        ]
    }

    fn from_log(v: [f64; 3]) -> Self {
        Self {
            signal_var: v[0].exp(),
            lengthscale: v[1].exp(),
            noise_var: v[2].exp(),
        }
    }
}

/// Matérn-5/2 covariance as a function of the distance `r`.
pub fn matern52_distance(r: f64, hp: &Hyperparams) -> f64 {
    let s = SQRT5 * r / hp.lengthscale;
    hp.signal_var * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Matérn-5/2 covariance between two points.
pub fn matern52(xi: &[f64], xj: &[f64], hp: &Hyperparams) -> f64 {
    matern52_distance(distance(xi, xj), hp)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// `K(X, X) + σ² I`, without jitter.
pub fn build_covariance(x: &[Vec<f64>], hp: &Hyperparams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_var + hp.noise_var;
        for j in 0..i {
            let v = matern52(&x[i], &x[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Lower Cholesky factor, or `None` when a pivot is not safely positive.
fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Factorizes `k`, escalating diagonal jitter from 1e-10·θ₁ to 1e-4·θ₁ by
/// decades when the plain factorization fails. Returns the factor and the
/// jitter that was added.
fn factorize(k: &DMatrix<f64>, signal_var: f64) -> Result<(DMatrix<f64>, f64), GpError> {
    if let Some(l) = cholesky(k) {
        return Ok((l, 0.0));
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * signal_var;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(&kj) {
            log::debug!("covariance factorized with jitter {jitter:e}");
            return Ok((l, jitter));
        }
        rel *= 10.0;
    }
    Err(GpError::IllConditioned {
        jitter: JITTER_MAX * signal_var,
    })
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

fn solve_upper_transposed(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

/// Mapping between user coordinates and model coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Box mapped onto the unit cube; `None` keeps inputs unchanged.
    pub input_bounds: Option<Bounds>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            input_bounds: None,
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    pub fn encode_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.input_bounds {
            Some(b) => b.to_unit(x),
            None => x.to_vec(),
        }
    }

    pub fn encode_output(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn decode_mean(&self, m: f64) -> f64 {
        m * self.y_scale + self.y_mean
    }

    pub fn decode_var(&self, v: f64) -> f64 {
        v * self.y_scale * self.y_scale
    }
}

/// GP training data in model coordinates plus the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    normalization: Normalization,
}

impl Dataset {
    /// Dataset used as-is, with identity normalization.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, GpError> {
        Self::check_shape(&x, &y)?;
        Ok(Self {
            x,
            y,
            normalization: Normalization::identity(),
        })
    }

    /// Dataset with inputs scaled to the unit cube through `bounds` and
    /// outputs standardized to zero mean and unit variance.
    pub fn normalized(x: &[Vec<f64>], y: &[f64], bounds: &Bounds) -> Result<Self, GpError> {
        Self::check_shape(x, y)?;
        if let Some((index, p)) = x.iter().enumerate().find(|(_, p)| p.len() != bounds.dim()) {
            return Err(GpError::DimensionMismatch {
                index,
                expected: bounds.dim(),
                found: p.len(),
            });
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1e-300) && sd > 0.0 {
            sd
        } else {
            1.0
        };
        let normalization = Normalization {
            input_bounds: Some(bounds.clone()),
            y_mean: mean,
            y_scale: scale,
        };
        let xs = x.iter().map(|p| bounds.to_unit(p)).collect();
        let ys = y.iter().map(|&v| normalization.encode_output(v)).collect();
        Ok(Self {
            x: xs,
            y: ys,
            normalization,
        })
    }

    fn check_shape(x: &[Vec<f64>], y: &[f64]) -> Result<(), GpError> {
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        if x.len() != y.len() {
            return Err(GpError::ShapeMismatch {
                rows: x.len(),
                targets: y.len(),
            });
        }
        let d = x[0].len();
        for (index, (p, v)) in x.iter().zip(y).enumerate() {
            if p.len() != d {
                return Err(GpError::DimensionMismatch {
                    index,
                    expected: d,
                    found: p.len(),
                });
            }
            if !v.is_finite() || p.iter().any(|c| !c.is_finite()) {
                return Err(GpError::NonFinite(index));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Inputs in model coordinates.
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Targets in model coordinates.
    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Number of pairwise-distinct input points.
    pub fn distinct_inputs(&self) -> usize {
        let mut distinct: Vec<&Vec<f64>> = Vec::new();
        for p in &self.x {
            if !distinct.contains(&p) {
                distinct.push(p);
            }
        }
        distinct.len()
    }
}

/// Log marginal likelihood `log p(y | X, θ)` in model coordinates.
pub fn log_marginal_likelihood(ds: &Dataset, hp: &Hyperparams) -> Result<f64, GpError> {
    hp.validate()?;
    let k = build_covariance(ds.inputs(), hp);
    let (l, _) = factorize(&k, hp.signal_var)?;
    let y = DVector::from_column_slice(ds.targets());
    let v = solve_lower(&l, &y);
    let n = ds.len() as f64;
    let log_det_half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * v.dot(&v) - log_det_half - 0.5 * n * (2.0 * PI).ln())
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln θ₁, ln θ₂, ln σ²)`.
pub fn lml_with_gradient(ds: &Dataset, hp: &Hyperparams) -> Result<(f64, [f64; 3]), GpError> {
    hp.validate()?;
    let x = ds.inputs();
    let n = x.len();
    let k = build_covariance(x, hp);
    let (l, _) = factorize(&k, hp.signal_var)?;
    let y = DVector::from_column_slice(ds.targets());
    let alpha = solve_upper_transposed(&l, &solve_lower(&l, &y));
    let log_det_half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln();

    // K⁻¹ from the factor
    let mut k_inv = DMatrix::identity(n, n);
    for j in 0..n {
        let col = k_inv.column(j).into_owned();
        let sol = solve_upper_transposed(&l, &solve_lower(&l, &col));
        k_inv.set_column(j, &sol);
    }
    // ½ tr((ααᵀ − K⁻¹) D) for each derivative matrix D
    let mut grad = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            let a = alpha[i] * alpha[j] - k_inv[(i, j)];
            let (d_signal, d_length) = if i == j {
                (hp.signal_var, 0.0)
            } else {
                let s = SQRT5 * distance(&x[i], &x[j]) / hp.lengthscale;
                let e = (-s).exp();
                (
                    hp.signal_var * (1.0 + s + s * s / 3.0) * e,
                    hp.signal_var * e * s * s * (1.0 + s) / 3.0,
                )
            };
            grad[0] += a * d_signal;
            grad[1] += a * d_length;
            if i == j {
                grad[2] += a * hp.noise_var;
            }
        }
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((lml, grad))
}

/// Box constraints on the hyperparameters for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub signal_var: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            signal_var: (1e-3, 1e3),
            lengthscale: (1e-2, 1e1),
            noise_var: (1e-8, 1e-1),
        }
    }
}

impl HyperBounds {
    fn log_box(&self) -> ([f64; 3], [f64; 3]) {
        (
            [
                self.signal_var.0.ln(),
                self.lengthscale.0.ln(),
                self.noise_var.0.ln(),
            ],
            [
                self.signal_var.1.ln(),
                self.lengthscale.1.ln(),
                self.noise_var.1.ln(),
            ],
        )
    }

    /// Centre of the box in log space.
    pub fn midpoint(&self) -> Hyperparams {
        let (lo, hi) = self.log_box();
        Hyperparams::from_log([
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ])
    }

    pub fn validate(&self) -> Result<(), GpError> {
        for (name, (lo, hi)) in [
            ("signal_var", self.signal_var),
            ("lengthscale", self.lengthscale),
            ("noise_var", self.noise_var),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(GpError::InvalidHyperparams(format!(
                    "{name} bounds must satisfy 0 < lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub bounds: HyperBounds,
    pub restarts: usize,
    pub seed: u64,
    /// Extra starting point tried before the space-filling restarts.
    pub warm_start: Option<Hyperparams>,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bounds: HyperBounds::default(),
            restarts: 8,
            seed: 0,
            warm_start: None,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub hyperparams: Hyperparams,
    pub log_likelihood: f64,
    /// Set when no restart improved on the bounds midpoint, which is then returned.
    pub fell_back_to_midpoint: bool,
}

fn project(v: [f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> [f64; 3] {
    [
        v[0].clamp(lo[0], hi[0]),
        v[1].clamp(lo[1], hi[1]),
        v[2].clamp(lo[2], hi[2]),
    ]
}

fn eval_log(ds: &Dataset, v: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let hp = Hyperparams::from_log(v);
    lml_with_gradient(ds, &hp).ok().filter(|(f, _)| f.is_finite())
}

/// Projected gradient ascent with Barzilai–Borwein steps and Armijo backtracking.
fn local_ascent(
    ds: &Dataset,
    start: [f64; 3],
    lo: &[f64; 3],
    hi: &[f64; 3],
    max_iters: usize,
) -> Option<([f64; 3], f64)> {
    let mut x = project(start, lo, hi);
    let (mut f, mut g) = eval_log(ds, x)?;
    let mut step = 0.1;
    for _ in 0..max_iters {
        let pg: f64 = (0..3)
            .map(|i| (project(add(x, g, 1.0), lo, hi)[i] - x[i]).abs())
            .fold(0.0, f64::max);
        if pg < 1e-7 {
            break;
        }
        let mut accepted = None;
        let mut t = step;
        while t > 1e-12 {
            let cand = project(add(x, g, t), lo, hi);
            let dir: f64 = (0..3).map(|i| g[i] * (cand[i] - x[i])).sum();
            if let Some((fc, gc)) = eval_log(ds, cand) {
                if fc >= f + 1e-4 * dir {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        let s: [f64; 3] = [cand[0] - x[0], cand[1] - x[1], cand[2] - x[2]];
        let y: [f64; 3] = [gc[0] - g[0], gc[1] - g[1], gc[2] - g[2]];
        let sy: f64 = (0..3).map(|i| s[i] * y[i]).sum();
        let ss: f64 = (0..3).map(|i| s[i] * s[i]).sum();
        step = if sy < 0.0 {
            (ss / -sy).clamp(1e-6, 1e2)
        } else {
            (2.0 * t).min(1e2)
        };
        let gain = fc - f;
        x = cand;
        f = fc;
        g = gc;
        if gain.abs() < 1e-12 * (1.0 + f.abs()) && ss < 1e-16 {
            break;
        }
    }
    Some((x, f))
}

fn add(x: [f64; 3], g: [f64; 3], t: f64) -> [f64; 3] {
    [x[0] + t * g[0], x[1] + t * g[1], x[2] + t * g[2]]
}

/// Fits hyperparameters by multistart maximization of the log marginal likelihood.
///
/// Starting points are the optional warm start followed by a seeded, shifted
/// Halton design over the log-space box, so the starts used with `k` restarts
/// are a prefix of those used with more.
pub fn fit(ds: &Dataset, opts: &FitOptions) -> Result<FitResult, GpError> {
    opts.bounds.validate()?;
    let found = ds.distinct_inputs();
    if found < 2 {
        return Err(GpError::InsufficientData { needed: 2, found });
    }
    let (lo, hi) = opts.bounds.log_box();
    let midpoint = opts.bounds.midpoint();
    let mid_lml = log_marginal_likelihood(ds, &midpoint).unwrap_or(f64::NEG_INFINITY);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shift: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(opts.restarts + 1);
    if let Some(w) = opts.warm_start {
        if w.validate().is_ok() && w.noise_var > 0.0 {
            starts.push(project(w.to_log(), &lo, &hi));
        }
    }
    for u in shifted_halton(opts.restarts, &shift) {
        starts.push([
            lo[0] + u[0] * (hi[0] - lo[0]),
            lo[1] + u[1] * (hi[1] - lo[1]),
            lo[2] + u[2] * (hi[2] - lo[2]),
        ]);
    }

    let mut best: Option<([f64; 3], f64)> = None;
    for start in starts {
        if let Some((x, f)) = local_ascent(ds, start, &lo, &hi, opts.max_iters) {
            // strict improvement keeps the earliest start on ties
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((x, f));
            }
        }
    }
    match best {
        Some((x, f)) if f > mid_lml => Ok(FitResult {
            hyperparams: Hyperparams::from_log(x),
            log_likelihood: f,
            fell_back_to_midpoint: false,
        }),
        _ => {
            if !mid_lml.is_finite() {
                // surfaces the factorization error at the midpoint
                log_marginal_likelihood(ds, &midpoint)?;
            }
            log::warn!("no hyperparameter restart improved on the bounds midpoint");
            Ok(FitResult {
                hyperparams: midpoint,
                log_likelihood: mid_lml,
                fell_back_to_midpoint: true,
            })
        }
    }
}

/// Predictive mean and variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub var: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.var.sqrt()
    }
}

/// GP conditioned on a dataset: immutable after construction.
#[derive(Debug, Clone)]
pub struct Posterior {
    chol: DMatrix<f64>,
    weights: DVector<f64>,
    x: Vec<Vec<f64>>,
    hyperparams: Hyperparams,
    normalization: Normalization,
    jitter: f64,
}

impl Posterior {
    pub fn new(ds: &Dataset, hp: Hyperparams) -> Result<Self, GpError> {
        hp.validate()?;
        let k = build_covariance(ds.inputs(), &hp);
        let (chol, jitter) = factorize(&k, hp.signal_var)?;
        let y = DVector::from_column_slice(ds.targets());
        let weights = solve_upper_transposed(&chol, &solve_lower(&chol, &y));
        Ok(Self {
            chol,
            weights,
            x: ds.inputs().to_vec(),
            hyperparams: hp,
            normalization: ds.normalization().clone(),
            jitter,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Lower-triangular factor of `K + (σ² + jitter) I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `(K + σ² I)⁻¹ y` in model coordinates.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Jitter added to the diagonal to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prediction at a point given in model coordinates.
    pub fn predict_model(&self, u: &[f64]) -> Prediction {
        let kstar = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(u, xi, &self.hyperparams)),
        );
        let mean = kstar.dot(&self.weights);
        let v = solve_lower(&self.chol, &kstar);
        let var = (self.hyperparams.signal_var - v.dot(&v)).max(0.0);
        Prediction { mean, var }
    }

    /// Prediction of the latent function at a point given in user coordinates.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let p = self.predict_model(&self.normalization.encode_input(x));
        Prediction {
            mean: self.normalization.decode_mean(p.mean),
            var: self.normalization.decode_var(p.var),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn hp(a: f64, b: f64, c: f64) -> Hyperparams {
        Hyperparams::new(a, b, c).unwrap()
    }

    #[test]
    fn kernel_at_zero_distance_is_signal_variance() {
        let h = hp(2.5, 0.3, 0.0);
        assert_eq!(matern52(&[0.4, 0.1], &[0.4, 0.1], &h), 2.5);
    }

    #[test]
    fn kernel_reference_value() {
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        let v = matern52(&[0.0], &[1.0], &hp(1.0, 1.0, 0.0));
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.523_994).abs() < 1e-6);
        let v2 = matern52(&[0.0], &[1.0], &hp(2.0, 1.0, 0.0));
        assert_eq!(v2, 2.0 * v);
    }

    #[test]
    fn single_point_covariance() {
        let k = build_covariance(&[vec![0.3]], &hp(1.5, 1.0, 0.25));
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], 1.75);
    }

    #[test]
    fn duplicate_rows_are_singular_before_jitter() {
        let x = vec![vec![0.2, 0.7], vec![0.2, 0.7]];
        let h = hp(1.0, 0.5, 0.0);
        let k = build_covariance(&x, &h);
        assert!(cholesky(&k).is_none());
        let (_, jitter) = factorize(&k, h.signal_var).unwrap();
        assert!(jitter >= JITTER_START * h.signal_var);
    }

    #[test]
    fn non_finite_covariance_fails_after_escalation() {
        let mut k = DMatrix::identity(2, 2);
        k[(0, 1)] = 5.0;
        k[(1, 0)] = 5.0;
        assert!(matches!(
            factorize(&k, 1.0),
            Err(GpError::IllConditioned { .. })
        ));
    }

    #[test]
    fn lml_of_standard_normal_at_zero() {
        let ds = Dataset::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let v = log_marginal_likelihood(&ds, &hp(0.75, 1.0, 0.25)).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn lml_change_of_variables() {
        let x = vec![vec![0.1], vec![0.5], vec![0.8], vec![0.95]];
        let y = vec![0.3, -1.2, 0.7, 0.1];
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();
        let scaled = Dataset::new(x, y.iter().map(|v| 10.0 * v).collect()).unwrap();
        let a = log_marginal_likelihood(&ds, &hp(1.3, 0.4, 0.01)).unwrap();
        let b = log_marginal_likelihood(&scaled, &hp(130.0, 0.4, 1.0)).unwrap();
        assert!((b - a + 4.0 * 10f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn interpolates_noiseless_data() {
        let x = vec![vec![0.0], vec![0.3], vec![0.55], vec![1.0]];
        let y = vec![1.0, -0.5, 2.0, 0.25];
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();
        let h = hp(1.0, 0.3, 0.0);
        let post = Posterior::new(&ds, h).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = post.predict(xi);
            assert!((p.mean - yi).abs() < 1e-8);
            assert!(p.var <= 1e-8 * h.signal_var);
        }
    }

    #[test]
    fn far_points_recover_prior() {
        let ds = Dataset::new(vec![vec![0.0], vec![0.1]], vec![1.0, 2.0]).unwrap();
        let post = Posterior::new(&ds, hp(3.0, 0.05, 1e-6)).unwrap();
        let p = post.predict(&[100.0]);
        assert!(p.mean.abs() < 1e-12);
        assert!((p.var - 3.0).abs() < 1e-12);
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let x: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.13, (i * i) as f64 * 0.05]).collect();
        let y: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let h = hp(1.7, 0.4, 1e-3);
        let post = Posterior::new(&Dataset::new(x.clone(), y).unwrap(), h).unwrap();
        let l = post.chol_factor();
        for i in 0..l.nrows() {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..l.ncols() {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let rebuilt = l * l.transpose();
        let direct = build_covariance(&x, &h);
        let rel = (&rebuilt - &direct).abs().max() / direct.abs().max();
        assert!(rel < 1e-10, "relative reconstruction error {rel}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<Vec<f64>> = (0..9)
            .map(|i| vec![(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()])
            .collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let ds = Dataset::new(x, y).unwrap();
        for base in [[0.3f64, -1.0, -4.0], [1.2, 0.2, -2.0], [-0.5, -2.0, -6.0]] {
            let h = Hyperparams::from_log(base);
            let (_, g) = lml_with_gradient(&ds, &h).unwrap();
            for k in 0..3 {
                let step = 1e-5;
                let mut up = base;
                let mut dn = base;
                up[k] += step;
                dn[k] -= step;
                let fu = log_marginal_likelihood(&ds, &Hyperparams::from_log(up)).unwrap();
                let fd = log_marginal_likelihood(&ds, &Hyperparams::from_log(dn)).unwrap();
                let fdiff = (fu - fd) / (2.0 * step);
                let rel = (fdiff - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-4, "component {k} at {base:?}: fd {fdiff} vs analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn fit_rejects_single_distinct_point() {
        let ds = Dataset::new(vec![vec![0.5], vec![0.5]], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            fit(&ds, &FitOptions::default()),
            Err(GpError::InsufficientData { needed: 2, found: 1 })
        );
    }

    #[test]
    fn constant_targets_shrink_signal_variance() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let ds = Dataset::normalized(&x, &[4.2; 8], &Bounds::unit(1)).unwrap();
        let res = fit(&ds, &FitOptions::default()).unwrap();
        assert!(res.hyperparams.signal_var < 1e-2, "{:?}", res.hyperparams);
    }

    #[test]
    fn more_restarts_never_lower_likelihood() {
        // oscillating data gives a multimodal likelihood surface
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|p| (25.0 * p[0]).sin() + 2.0 * p[0])
            .collect();
        let ds = Dataset::normalized(&x, &y, &Bounds::unit(1)).unwrap();
        let one = fit(&ds, &FitOptions { restarts: 1, seed: 11, ..FitOptions::default() }).unwrap();
        let eight = fit(&ds, &FitOptions { restarts: 8, seed: 11, ..FitOptions::default() }).unwrap();
        assert!(eight.log_likelihood >= one.log_likelihood);
    }

    #[test]
    fn fit_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0].powi(3)).collect();
        let ds = Dataset::normalized(&x, &y, &Bounds::unit(1)).unwrap();
        let opts = FitOptions { seed: 5, ..FitOptions::default() };
        assert_eq!(fit(&ds, &opts).unwrap(), fit(&ds, &opts).unwrap());
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 3),
                               b in prop::collection::vec(-5.0f64..5.0, 3),
                               t1 in 0.01f64..10.0, t2 in 0.01f64..10.0) {
            let h = hp(t1, t2, 0.0);
            prop_assert_eq!(matern52(&a, &b, &h), matern52(&b, &a, &h));
        }

        #[test]
        fn kernel_decays_with_distance(r in 1e-3f64..5.0, dr in 1e-3f64..1.0, t2 in 0.05f64..5.0) {
            let h = hp(1.0, t2, 0.0);
            let near = matern52_distance(r, &h);
            let far = matern52_distance(r + dr, &h);
            prop_assert!(far < near || near == 0.0);
        }

        #[test]
        fn posterior_variance_bounded_by_prior(seed in 0u64..500, q in prop::collection::vec(-0.5f64..1.5, 2)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
            let h = hp(0.5 + rng.random::<f64>(), 0.1 + rng.random::<f64>(), 1e-6);
            let post = Posterior::new(&Dataset::new(x, y).unwrap(), h).unwrap();
            let p = post.predict(&q);
            prop_assert!(p.var >= 0.0);
            prop_assert!(p.var <= h.signal_var + 1e-9);
        }
    }
}
