//! Ask-tell mode: an external evaluator answers proposals over line-delimited JSON.
//!
//! Engine to evaluator:
//!
//! - `{"type":"hello","version":1,"family":..,"parameters":[..],"objective":..,"constraints":[..],"evaluations":n}`
//! - `{"type":"propose","iteration":n,"tag":"Init"|"k","x":[..]}` where `n`
//!   counts evaluations from 1 and `tag` is the log label
//! - `{"type":"error","message":..}` after a malformed message, followed by
//!   the same proposal again
//! - `{"type":"done","reason":"budget"|"stall","evaluations":n,"best_objective":..,"best_x":[..]}`
//!
//! Evaluator to engine:
//!
//! - `{"type":"observe","x":[..],"objective":f,"constraints":[..]}`
//! - `{"type":"failed","x":[..],"reason":".."}`
//!
//! `x` must echo the proposal within 1e-9 in every component. The state file
//! is rewritten after every message, so the session can be stopped at any
//! point (end of input) and resumed with the same command.

use std::io::{BufRead, Write};
use std::path::Path;

use fsibo::optimizer::{Ask, CampaignState, Request, StopReason, ECHO_TOLERANCE};
use serde::{Deserialize, Serialize};

use crate::config::Campaign;
use crate::error::CliError;
use crate::output::PersistedState;
use crate::run::load_matching_state;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EngineMessage {
    Hello {
        version: u32,
        family: String,
        parameters: Vec<String>,
        objective: String,
        constraints: Vec<String>,
        evaluations: usize,
    },
    Propose {
        iteration: usize,
        tag: String,
        x: Vec<f64>,
    },
    Error {
        message: String,
    },
    Done {
        reason: StopReason,
        evaluations: usize,
        best_objective: Option<f64>,
        best_x: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum EvaluatorMessage {
    Observe {
        x: Vec<f64>,
        objective: f64,
        #[serde(default)]
        constraints: Vec<f64>,
    },
    Failed {
        x: Vec<f64>,
        #[serde(default)]
        reason: Option<String>,
    },
}

impl EvaluatorMessage {
    fn x(&self) -> &[f64] {
        match self {
            EvaluatorMessage::Observe { x, .. } | EvaluatorMessage::Failed { x, .. } => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AskTellOutcome {
    Finished(StopReason),
    /// Input ended while a proposal was outstanding.
    Paused { evaluations: usize },
}

fn send<W: Write>(out: &mut W, msg: &EngineMessage) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, msg).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn propose_message(state: &CampaignState, req: &Request) -> EngineMessage {
    EngineMessage::Propose {
        iteration: state.history.len() + 1,
        tag: req.tag.to_string(),
        x: req.x.clone(),
    }
}

pub fn run_asktell<R: BufRead, W: Write>(
    campaign: &Campaign,
    state_path: &Path,
    input: R,
    mut output: W,
) -> Result<AskTellOutcome, CliError> {
    let mut persisted = if state_path.exists() {
        load_matching_state(state_path, campaign)?
    } else {
        PersistedState::new(campaign.names.clone(), CampaignState::new(campaign.config.clone())?)
    };
    let names = persisted.names.clone();
    send(
        &mut output,
        &EngineMessage::Hello {
            version: PROTOCOL_VERSION,
            family: names.family.clone(),
            parameters: names.parameters.clone(),
            objective: names.objective.clone(),
            constraints: names.constraints.clone(),
            evaluations: persisted.campaign.history.len(),
        },
    )?;
    let n_constraints = names.constraints.len();
    let mut lines = input.lines();
    loop {
        let state = &mut persisted.campaign;
        let request = match state.next_request()? {
            Ask::Done(reason) => {
                persisted.save(state_path)?;
                let inc = &persisted.campaign.incumbent;
                send(
                    &mut output,
                    &EngineMessage::Done {
                        reason,
                        evaluations: persisted.campaign.history.len(),
                        best_objective: inc.feasible_found.then_some(inc.f_best),
                        best_x: inc.feasible_found.then(|| inc.x_best.clone()),
                    },
                )?;
                return Ok(AskTellOutcome::Finished(reason));
            }
            Ask::Evaluate(r) => r,
        };
        persisted.save(state_path)?;
        send(&mut output, &propose_message(&persisted.campaign, &request))?;

        let message = loop {
            let Some(line) = lines.next() else {
                persisted.save(state_path)?;
                return Ok(AskTellOutcome::Paused {
                    evaluations: persisted.campaign.history.len(),
                });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let diagnostic = match serde_json::from_str::<EvaluatorMessage>(&line) {
                Ok(msg) => {
                    let x = msg.x();
                    if x.len() != request.x.len() {
                        Some(format!("x has {} entries, expected {}", x.len(), request.x.len()))
                    } else if let EvaluatorMessage::Observe { constraints, .. } = &msg {
                        (constraints.len() != n_constraints).then(|| {
                            format!("{} constraint values given, expected {n_constraints}", constraints.len())
                        })
                    } else {
                        None
                    }
                    .map_or(Ok(msg), Err)
                }
                Err(e) => Err(format!("cannot parse message: {e}")),
            };
            match diagnostic {
                Ok(msg) => break msg,
                Err(message) => {
                    send(&mut output, &EngineMessage::Error { message })?;
                    send(&mut output, &propose_message(&persisted.campaign, &request))?;
                }
            }
        };

        let x = message.x().to_vec();
        if x.iter().zip(&request.x).any(|(a, b)| !((a - b).abs() <= ECHO_TOLERANCE)) {
            let message = format!(
                "echoed x {:?} deviates from the proposal {:?} by more than {ECHO_TOLERANCE:e}",
                x, request.x
            );
            send(&mut output, &EngineMessage::Error { message: message.clone() })?;
            return Err(CliError::Protocol(message));
        }
        let result = match message {
            EvaluatorMessage::Observe {
                objective, constraints, ..
            } => Ok((objective, constraints)),
            EvaluatorMessage::Failed { reason, .. } => Err(reason.unwrap_or_else(|| "reported failed".into())),
        };
        persisted.campaign.tell(&x, result)?;
        persisted.save(state_path)?;
    }
}
