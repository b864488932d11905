//! Plot data for the surrogates and the acquisition function.
//!
//! One-dimensional problems get one file per surrogate with columns
//! `x,mean,lower,upper,cei`, the band being mean ± 1.96 standard deviations.
//! Two-dimensional problems get one file with columns
//! `x1,x2,mean,mask` where `mask` is 1 if the product of the feasibility
//! probabilities is at least 0.5. Higher dimensions get one-dimensional
//! slices through the incumbent (or the box centre), one file per
//! parameter and surrogate.
//!
//! Before the first surrogate fit the files show the prior: the mean of the
//! observations and their standard deviation.

use std::fs;
use std::path::{Path, PathBuf};

use fsibo::acquisition::{expected_improvement, feasibility_probability, ConstraintSpec};
use fsibo::gp::{Dataset, Normalization, Posterior, Prediction};
use fsibo::optimizer::{CampaignState, Outcome};

use crate::config::Names;
use crate::error::CliError;
use crate::output::num;

pub const GRID_1D: usize = 201;
pub const GRID_2D: usize = 101;
pub const MASK_THRESHOLD: f64 = 0.5;
const BAND: f64 = 1.96;

enum Model {
    Fitted(Posterior),
    Prior(Normalization),
}

impl Model {
    fn predict(&self, x: &[f64]) -> Prediction {
        match self {
            Model::Fitted(p) => p.predict(x),
            Model::Prior(n) => Prediction {
                mean: n.y_mean,
                var: n.y_scale * n.y_scale,
            },
        }
    }
}

struct Models {
    objective: Model,
    constraints: Vec<(Model, ConstraintSpec)>,
}

impl Models {
    fn from_state(state: &CampaignState) -> Result<Option<Self>, CliError> {
        if let Some(s) = state.surrogates()? {
            return Ok(Some(Self {
                objective: Model::Fitted(s.objective),
                constraints: s
                    .constraints
                    .into_iter()
                    .map(|c| (Model::Fitted(c.posterior), c.spec))
                    .collect(),
            }));
        }
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        let mut cs = vec![Vec::new(); state.config.constraints.len()];
        for rec in &state.history {
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
        if xs.is_empty() {
            return Ok(None);
        }
        let prior = |y: &[f64]| {
            Dataset::normalized(&xs, y, &state.config.bounds)
                .map(|d| Model::Prior(d.normalization().clone()))
                .map_err(|e| CliError::Evaluation(e.to_string()))
        };
        Ok(Some(Self {
            objective: prior(&fs)?,
            constraints: cs
                .iter()
                .zip(&state.config.constraints)
                .map(|(y, spec)| Ok((prior(y)?, *spec)))
                .collect::<Result<_, CliError>>()?,
        }))
    }

    fn feasibility(&self, x: &[f64]) -> f64 {
        self.constraints.iter().fold(1.0, |acc, (m, spec)| {
            let p = m.predict(x);
            acc * feasibility_probability(p.mean, p.var, spec)
        })
    }

    fn cei(&self, x: &[f64], state: &CampaignState) -> f64 {
        let rho = self.feasibility(x);
        if !state.incumbent.feasible_found {
            return rho;
        }
        let p = self.objective.predict(x);
        expected_improvement(p.mean, p.var, state.incumbent.f_best) * rho
    }
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Writes the plot files for `state` into `dir`, each named `{prefix}_...csv`.
/// Returns the paths written; nothing is written before the first observation.
pub fn emit_plots(state: &CampaignState, names: &Names, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let Some(models) = Models::from_state(state)? else {
        return Ok(Vec::new());
    };
    let bounds = &state.config.bounds;
    let mut written = Vec::new();
    match bounds.dim() {
        2 => {
            let path = dir.join(format!("{prefix}_map.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
            w.write_record(["x1", "x2", "mean", "mask"]).map_err(csv_io)?;
            for x1 in linspace(bounds.lower()[0], bounds.upper()[0], GRID_2D) {
                for x2 in linspace(bounds.lower()[1], bounds.upper()[1], GRID_2D) {
                    let x = [x1, x2];
                    let mask = u8::from(models.feasibility(&x) >= MASK_THRESHOLD);
                    let mean = models.objective.predict(&x).mean;
                    w.write_record([num(x1), num(x2), num(mean), mask.to_string()])
                        .map_err(csv_io)?;
                }
            }
            w.flush()?;
            written.push(path);
        }
        d => {
            let anchor = if state.incumbent.feasible_found {
                state.incumbent.x_best.clone()
            } else {
                bounds.midpoint()
            };
            if d > 2 {
                eprintln!(
                    "notice: {d}-dimensional problem, writing slices through {:?} along each parameter",
                    anchor
                );
            }
            let surrogates: Vec<(&str, &Model)> = std::iter::once((names.objective.as_str(), &models.objective))
                .chain(names.constraints.iter().map(String::as_str).zip(models.constraints.iter().map(|(m, _)| m)))
                .collect();
            for axis in 0..d {
                for (name, model) in &surrogates {
                    let file = if d == 1 {
                        format!("{prefix}_{}.csv", file_safe(name))
                    } else {
                        format!("{prefix}_{}_{}.csv", file_safe(&names.parameters[axis]), file_safe(name))
                    };
                    let path = dir.join(file);
                    let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
                    w.write_record(["x", "mean", "lower", "upper", "cei"]).map_err(csv_io)?;
                    for t in linspace(bounds.lower()[axis], bounds.upper()[axis], GRID_1D) {
                        let mut x = anchor.clone();
                        x[axis] = t;
                        let p = model.predict(&x);
                        let s = p.var.max(0.0).sqrt();
                        w.write_record([
                            num(t),
                            num(p.mean),
                            num(p.mean - BAND * s),
                            num(p.mean + BAND * s),
                            num(models.cei(&x, state)),
                        ])
                        .map_err(csv_io)?;
                    }
                    w.flush()?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}
