//! Persisted state, iteration log, best-minimum series and summary files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use fsibo::optimizer::{CampaignState, EvaluationRecord, Outcome, StopReason};
use serde::{Deserialize, Serialize};

use crate::config::Names;
use crate::error::CliError;

pub const STATE_FORMAT: u32 = 1;
pub const LOG_FILE: &str = "log.csv";
pub const BEST_FILE: &str = "best.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STATE_FILE: &str = "state.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedState {
    pub format: u32,
    pub names: Names,
    pub campaign: CampaignState,
}

impl PersistedState {
    pub fn new(names: Names, campaign: CampaignState) -> Self {
        Self {
            format: STATE_FORMAT,
            names,
            campaign,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        let state: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: unreadable state: {e}", path.display())))?;
        if state.format != STATE_FORMAT {
            return Err(CliError::Config(format!(
                "{}: state format {} is not supported",
                path.display(),
                state.format
            )));
        }
        Ok(state)
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut f, self).map_err(std::io::Error::from)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Full round-trip decimal representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn log_header(names: &Names) -> Vec<String> {
    let mut h = vec!["Iteration".to_string()];
    h.extend(names.parameters.iter().cloned());
    h.push(names.objective.clone());
    h.extend(names.constraints.iter().cloned());
    h.push("feasible".into());
    h.push("best".into());
    h
}

/// One log row; failed evaluations leave the value columns empty.
pub fn log_row(record: &EvaluationRecord, best: Option<f64>, n_constraints: usize) -> Vec<String> {
    let mut row = vec![record.tag.to_string()];
    row.extend(record.x.iter().map(|v| num(*v)));
    match &record.outcome {
        Outcome::Observed {
            objective,
            constraints,
            feasible,
        } => {
            row.push(num(*objective));
            row.extend(constraints.iter().map(|c| num(*c)));
            row.push(if *feasible { "yes" } else { "no" }.into());
        }
        Outcome::Failed { .. } => {
            row.extend(std::iter::repeat_n(String::new(), 1 + n_constraints));
            row.push("failed".into());
        }
    }
    row.push(best.map(num).unwrap_or_default());
    row
}

/// Append-only iteration log flushed after every row.
pub struct IterationLog {
    writer: csv::Writer<File>,
    n_constraints: usize,
}

impl IterationLog {
    /// Creates the log and writes the rows of `history`.
    pub fn create(path: &Path, names: &Names, history: &[EvaluationRecord]) -> Result<Self, CliError> {
        let file = OpenOptions::new().write(true).create(true).truncate(true).open(path)?;
        let mut log = Self {
            writer: csv::Writer::from_writer(file),
            n_constraints: names.constraints.len(),
        };
        log.writer.write_record(log_header(names)).map_err(csv_io)?;
        let mut best = None;
        for rec in history {
            best = running_best(best, rec);
            log.write_row(rec, best)?;
        }
        log.writer.flush()?;
        Ok(log)
    }

    pub fn append(&mut self, rec: &EvaluationRecord, best: Option<f64>) -> Result<(), CliError> {
        self.write_row(rec, best)?;
        self.writer.flush()?;
        Ok(())
    }

    fn write_row(&mut self, rec: &EvaluationRecord, best: Option<f64>) -> Result<(), CliError> {
        self.writer
            .write_record(log_row(rec, best, self.n_constraints))
            .map_err(csv_io)
    }
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn running_best(best: Option<f64>, rec: &EvaluationRecord) -> Option<f64> {
    match (rec.is_feasible(), rec.objective(), best) {
        (true, Some(f), Some(b)) if f < b => Some(f),
        (true, Some(f), None) => Some(f),
        _ => best,
    }
}

/// Best feasible objective after the initial designs (iteration 0) and after each proposal.
pub fn write_best_series(path: &Path, state: &CampaignState) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["Iteration", "best"]).map_err(csv_io)?;
    for (t, b) in state.best_series().iter().enumerate() {
        w.write_record([t.to_string(), b.map(num).unwrap_or_default()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub family: String,
    pub stop_reason: StopReason,
    pub evaluations: usize,
    pub proposals: usize,
    pub failed: usize,
    pub feasible_found: bool,
    pub best_objective: Option<f64>,
    pub best_x: Option<Vec<f64>>,
    pub parameters: Vec<String>,
}

impl Summary {
    pub fn new(names: &Names, state: &CampaignState, reason: StopReason) -> Self {
        let inc = &state.incumbent;
        Self {
            family: names.family.clone(),
            stop_reason: reason,
            evaluations: state.history.len(),
            proposals: state.proposals,
            failed: state.history.iter().filter(|r| r.is_failed()).count(),
            feasible_found: inc.feasible_found,
            best_objective: inc.feasible_found.then_some(inc.f_best),
            best_x: inc.feasible_found.then(|| inc.x_best.clone()),
            parameters: names.parameters.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::from)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}
