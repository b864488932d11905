//! Auto mode: the campaign loop against the built-in testbed.

use std::fs;
use std::path::{Path, PathBuf};

use fsibo::optimizer::{Ask, CampaignState, Tag};

use crate::config::Campaign;
use crate::error::CliError;
use crate::output::{
    write_best_series, IterationLog, PersistedState, Summary, BEST_FILE, CONFIG_ECHO_FILE, LOG_FILE, STATE_FILE,
    SUMMARY_FILE,
};
use crate::plots::emit_plots;

pub const PLOT_DIR: &str = "plots";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the output directory of the document.
    pub out_dir: Option<PathBuf>,
    /// Continue from the state persisted in the output directory.
    pub resume: bool,
    /// Pause after this many evaluations in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Finished(Summary),
    Paused { evaluations: usize },
}

/// Loads a persisted state and checks it belongs to `campaign`.
pub fn load_matching_state(path: &Path, campaign: &Campaign) -> Result<PersistedState, CliError> {
    let state = PersistedState::load(path)?;
    if state.campaign.config != campaign.config || state.names != campaign.names {
        return Err(CliError::Config(format!(
            "{} was written for a different campaign configuration",
            path.display()
        )));
    }
    Ok(state)
}

pub fn run_auto(campaign: &Campaign, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let problem = campaign.problem.as_ref().ok_or_else(|| {
        CliError::Config("custom problems have no built-in evaluator; drive them with ask-tell".into())
    })?;
    let out = opts.out_dir.clone().unwrap_or_else(|| campaign.output_dir.clone());
    let plot_dir = out.join(PLOT_DIR);
    fs::create_dir_all(&plot_dir)?;
    fs::write(out.join(CONFIG_ECHO_FILE), campaign.echo())?;

    let state_path = out.join(STATE_FILE);
    let mut persisted = if opts.resume && state_path.exists() {
        load_matching_state(&state_path, campaign)?
    } else {
        PersistedState::new(campaign.names.clone(), CampaignState::new(campaign.config.clone())?)
    };
    let names = persisted.names.clone();
    let mut log = IterationLog::create(&out.join(LOG_FILE), &names, &persisted.campaign.history)?;
    write_best_series(&out.join(BEST_FILE), &persisted.campaign)?;

    let mut done_here = 0;
    loop {
        if opts.stop_after == Some(done_here) {
            persisted.save(&state_path)?;
            return Ok(RunOutcome::Paused {
                evaluations: persisted.campaign.history.len(),
            });
        }
        let state = &mut persisted.campaign;
        let request = match state.next_request()? {
            Ask::Done(reason) => {
                write_best_series(&out.join(BEST_FILE), state)?;
                emit_plots(state, &names, &plot_dir, "final")?;
                let summary = Summary::new(&names, state, reason);
                summary.write(&out.join(SUMMARY_FILE))?;
                persisted.save(&state_path)?;
                log::info!("campaign finished: {reason}");
                return Ok(RunOutcome::Finished(summary));
            }
            Ask::Evaluate(r) => r,
        };
        if let Tag::Iteration(k) = request.tag {
            emit_plots(state, &names, &plot_dir, &format!("iter_{k:03}"))?;
        }
        persisted.save(&state_path)?;

        let result = problem
            .evaluate(&request.x)
            .map(|o| (o.objective, o.constraints))
            .map_err(|e| {
                log::warn!("evaluation at {:?} failed: {e}", request.x);
                e.to_string()
            });
        let state = &mut persisted.campaign;
        state.tell(&request.x, result)?;
        let best = state.incumbent.feasible_found.then_some(state.incumbent.f_best);
        log.append(state.history.last().expect("just told"), best)?;
        write_best_series(&out.join(BEST_FILE), state)?;
        persisted.save(&state_path)?;
        done_here += 1;
    }
}
