//! IQN-ILS quasi-Newton iteration for the partitioned interface equation
//! `R(d) = S(F(d)) − d = 0`.
//!
//! `F` maps an interface displacement to an interface load (the fluid side),
//! `S` maps a load back to a predicted displacement `d̃` (the structure side).
//! Neither Jacobian is available. Differences of successive residuals and
//! predicted displacements are stored newest-first as the columns of `V` and
//! `W`; each step solves the least-squares problem `V α ≈ −R` through an
//! economy Householder QR and updates `d ← d + W α + R`.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use std::io::{self, Write};
use thiserror::Error;

/// Columns whose QR diagonal falls below this fraction of the largest one are dropped.
pub const FILTER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("fluid solver failed: {0}")]
    Fluid(String),
    #[error("structural solver failed: {0}")]
    Solid(String),
    #[error("interface vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("secant history is empty or fully linearly dependent")]
    DegenerateHistory,
    #[error("convergence tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

/// Failure reported by one of the black-box sub-solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverFailure(pub String);

impl<T: std::fmt::Display> From<T> for SolverFailure {
    fn from(e: T) -> Self {
        SolverFailure(e.to_string())
    }
}

/// A fluid solver and a structural solver coupled through an interface.
pub trait SolverPair {
    /// Interface load produced by the fluid for the given interface displacement.
    fn fluid(&mut self, displacement: &DVector<f64>) -> Result<DVector<f64>, SolverFailure>;
    /// Interface displacement produced by the structure under the given load.
    fn solid(&mut self, load: &DVector<f64>) -> Result<DVector<f64>, SolverFailure>;
}

/// [`SolverPair`] built from two closures.
pub struct FnPair<F, S> {
    pub fluid: F,
    pub solid: S,
}

impl<F, S> SolverPair for FnPair<F, S>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, SolverFailure>,
    S: FnMut(&DVector<f64>) -> Result<DVector<f64>, SolverFailure>,
{
    fn fluid(&mut self, displacement: &DVector<f64>) -> Result<DVector<f64>, SolverFailure> {
        (self.fluid)(displacement)
    }

    fn solid(&mut self, load: &DVector<f64>) -> Result<DVector<f64>, SolverFailure> {
        (self.solid)(load)
    }
}

/// Evaluates `R = S(F(d)) − d`, returning `(R, d̃)`.
pub fn residual<P: SolverPair + ?Sized>(
    pair: &mut P,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), CouplingError> {
    let load = pair.fluid(d).map_err(|e| CouplingError::Fluid(e.0))?;
    let predicted = pair.solid(&load).map_err(|e| CouplingError::Solid(e.0))?;
    if predicted.len() != d.len() {
        return Err(CouplingError::DimensionMismatch {
            expected: d.len(),
            found: predicted.len(),
        });
    }
    Ok((&predicted - d, predicted))
}

/// Secant history: columns of `V` (residual differences) and `W`
/// (predicted-displacement differences), newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingHistory {
    p: usize,
    v: VecDeque<DVector<f64>>,
    w: VecDeque<DVector<f64>>,
}

impl CouplingHistory {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            v: VecDeque::new(),
            w: VecDeque::new(),
        }
    }

    pub fn interface_dim(&self) -> usize {
        self.p
    }

    /// Current column count `q`.
    pub fn columns(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Prepends a secant pair; drops the oldest pair once `q` would exceed `p`.
    pub fn push_pair(
        &mut self,
        delta_r: DVector<f64>,
        delta_dtilde: DVector<f64>,
    ) -> Result<(), CouplingError> {
        for v in [&delta_r, &delta_dtilde] {
            if v.len() != self.p {
                return Err(CouplingError::DimensionMismatch {
                    expected: self.p,
                    found: v.len(),
                });
            }
        }
        self.v.push_front(delta_r);
        self.w.push_front(delta_dtilde);
        while self.v.len() > self.p {
            self.v.pop_back();
            self.w.pop_back();
        }
        Ok(())
    }

    pub fn v_column(&self, i: usize) -> &DVector<f64> {
        &self.v[i]
    }

    pub fn w_column(&self, i: usize) -> &DVector<f64> {
        &self.w[i]
    }

    pub fn v_matrix(&self) -> DMatrix<f64> {
        stack(self.p, self.v.iter())
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        stack(self.p, self.w.iter())
    }

    pub fn clear(&mut self) {
        self.v.clear();
        self.w.clear();
    }
}

fn stack<'a>(p: usize, cols: impl ExactSizeIterator<Item = &'a DVector<f64>>) -> DMatrix<f64> {
    let q = cols.len();
    let mut m = DMatrix::zeros(p, q);
    for (j, c) in cols.enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Economy QR factorization `A = Q R` with `Q` p×q and `R` q×q upper triangular.
#[derive(Debug, Clone)]
pub struct EconomyQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Householder QR of a tall matrix (`rows >= cols`).
pub fn householder_qr(a: &DMatrix<f64>) -> EconomyQr {
    let (p, q) = a.shape();
    assert!(p >= q, "householder_qr needs rows >= cols, got {p}x{q}");
    let mut work = a.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(q);
    for k in 0..q {
        let x = work.view((k, k), (p - k, 1)).column(0).into_owned();
        let norm = x.norm();
        let mut v = x;
        if norm > 0.0 {
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vn = v.norm();
            if vn > 0.0 {
                v /= vn;
            }
        } else {
            v.fill(0.0);
        }
        // apply H = I − 2 v vᵀ to the trailing block
        for j in k..q {
            let mut col = work.view_mut((k, j), (p - k, 1));
            let s = 2.0 * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, &v, 1.0);
        }
        reflectors.push(v);
    }
    let r = work.view((0, 0), (q, q)).upper_triangle();
    // Q = H_0 H_1 ... H_{q-1} applied to the first q columns of the identity
    let mut qm = DMatrix::<f64>::identity(p, q);
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..q {
            let mut col = qm.view_mut((k, j), (p - k, 1));
            let s = 2.0 * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, v, 1.0);
        }
    }
    EconomyQr { q: qm, r }
}

fn back_substitute(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = r.nrows();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Least-squares coefficients `α` with `V α ≈ −R`.
///
/// Columns of `V` that are numerically dependent on newer ones are filtered
/// out and receive a zero coefficient, so `α` always has one entry per
/// stored column.
pub fn solve_alpha(hist: &CouplingHistory, rk: &DVector<f64>) -> Result<DVector<f64>, CouplingError> {
    if rk.len() != hist.p {
        return Err(CouplingError::DimensionMismatch {
            expected: hist.p,
            found: rk.len(),
        });
    }
    let q = hist.columns();
    if q == 0 {
        return Err(CouplingError::DegenerateHistory);
    }
    let mut kept: Vec<usize> = (0..q).collect();
    loop {
        if kept.is_empty() {
            return Err(CouplingError::DegenerateHistory);
        }
        let v = stack(hist.p, kept.iter().map(|&i| &hist.v[i]));
        let qr = householder_qr(&v);
        let diag: Vec<f64> = (0..kept.len()).map(|i| qr.r[(i, i)].abs()).collect();
        let largest = diag.iter().copied().fold(0.0, f64::max);
        if !(largest > 0.0) {
            return Err(CouplingError::DegenerateHistory);
        }
        if let Some(pos) = diag.iter().position(|&d| d < FILTER_TOLERANCE * largest) {
            log::debug!("filtering secant column {}", kept[pos]);
            kept.remove(pos);
            continue;
        }
        let rhs = qr.q.transpose() * (-rk);
        let coeffs = back_substitute(&qr.r, &rhs);
        let mut alpha = DVector::zeros(q);
        for (c, &i) in coeffs.iter().zip(&kept) {
            alpha[i] = *c;
        }
        return Ok(alpha);
    }
}

/// Quasi-Newton update `d + W α + R`.
pub fn qn_update(
    d: &DVector<f64>,
    hist: &CouplingHistory,
    alpha: &DVector<f64>,
    rk: &DVector<f64>,
) -> DVector<f64> {
    let mut next = d + rk;
    for (i, a) in alpha.iter().enumerate() {
        next.axpy(*a, &hist.w[i], 1.0);
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    /// Convergence tolerance on the Euclidean norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor of the startup step taken before any secant pair exists.
    pub omega: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            omega: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub d_final: DVector<f64>,
    /// Number of displacement updates applied (startup step included).
    pub iterations: usize,
    /// `‖R‖` at every evaluated iterate, starting with `d0`.
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

impl CouplingReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_norms.last().unwrap_or(&f64::INFINITY)
    }

    /// Writes the residual trace as tab-separated `iteration residual_norm` rows.
    pub fn write_trace<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iteration\tresidual_norm")?;
        for (i, r) in self.residual_norms.iter().enumerate() {
            writeln!(out, "{i}\t{r:e}")?;
        }
        Ok(())
    }
}

/// Iterates the interface equation to `‖R‖ <= tol` with IQN-ILS.
///
/// The history is local to this call. When every secant column is filtered
/// the iteration falls back to a relaxed step `d + ω R`.
pub fn converge<P: SolverPair + ?Sized>(
    pair: &mut P,
    d0: &DVector<f64>,
    opts: &CouplingOptions,
) -> Result<CouplingReport, CouplingError> {
    if !(opts.tol > 0.0) {
        return Err(CouplingError::InvalidTolerance(opts.tol));
    }
    let p = d0.len();
    let (mut r, mut dtilde) = residual(pair, d0)?;
    let mut norms = vec![r.norm()];
    let mut d = d0.clone();
    if norms[0] <= opts.tol {
        return Ok(CouplingReport {
            d_final: d,
            iterations: 0,
            residual_norms: norms,
            converged: true,
        });
    }
    if opts.max_iter == 0 {
        return Ok(CouplingReport {
            d_final: d,
            iterations: 0,
            residual_norms: norms,
            converged: false,
        });
    }
    let mut hist = CouplingHistory::new(p);
    d += opts.omega * &r;
    let mut iterations = 1;
    loop {
        let (r_new, dtilde_new) = residual(pair, &d)?;
        let norm = r_new.norm();
        norms.push(norm);
        if !norm.is_finite() {
            return Ok(CouplingReport {
                d_final: d,
                iterations,
                residual_norms: norms,
                converged: false,
            });
        }
        if norm <= opts.tol {
            return Ok(CouplingReport {
                d_final: d,
                iterations,
                residual_norms: norms,
                converged: true,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(CouplingReport {
                d_final: d,
                iterations,
                residual_norms: norms,
                converged: false,
            });
        }
        hist.push_pair(&r_new - &r, &dtilde_new - &dtilde)?;
        d = match solve_alpha(&hist, &r_new) {
            Ok(alpha) => qn_update(&d, &hist, &alpha, &r_new),
            Err(CouplingError::DegenerateHistory) => &d + opts.omega * &r_new,
            Err(e) => return Err(e),
        };
        r = r_new;
        dtilde = dtilde_new;
        iterations += 1;
    }
}
