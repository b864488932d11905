//! Campaign documents: TOML with sections, validated into a campaign
//! configuration and an optional testbed problem.
//!
//! ```toml
//! [problem]
//! family = "example1"          # example1 | example2 | example3 | sailplane | custom
//! parameters = ["A"]           # custom only
//! objective = "f"              # custom only
//!
//! [bounds]                     # required for custom, optional override otherwise
//! lower = [-31.9088]
//! upper = [31.9088]
//!
//! [[constraints]]              # custom: any number; presets: same count as the family
//! name = "v_x"
//! sense = "<="                 # "<=" or ">="
//! threshold = 1.4
//!
//! [init]
//! n_init = 4                   # or explicit designs:
//! points = [[-20.0], [0.0]]
//!
//! [optimizer]
//! max_iters = 6                # required
//! seed = 1                     # required
//! stall_window = 3
//! stall_tol = 0.01
//! gp_restarts = 8
//! acquisition_budget = 2000
//!
//! [testbed.beam]               # partial overrides of the testbed settings
//! [testbed.sail]
//! [testbed.interface]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::PathBuf;

use fsibo::acquisition::{ConstraintSpec, Sense};
use fsibo::space::Bounds;
use fsibo::testbed::{BeamSettings, Family, InterfaceSettings, ProblemSpec, SailPlaneSettings};
use fsibo::CampaignConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESETS: [(&str, &str); 4] = [
    ("example1", include_str!("../presets/example1.toml")),
    ("example2", include_str!("../presets/example2.toml")),
    ("example3", include_str!("../presets/example3.toml")),
    ("sailplane", include_str!("../presets/sailplane.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub problem: Option<ProblemSection>,
    pub bounds: Option<BoundsSection>,
    pub constraints: Option<Vec<ConstraintSection>>,
    pub init: Option<InitSection>,
    pub optimizer: Option<OptimizerSection>,
    pub testbed: Option<TestbedSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Option<String>,
    pub parameters: Option<Vec<String>>,
    pub objective: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub name: Option<String>,
    pub sense: Option<String>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub n_init: Option<usize>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub stall_window: Option<usize>,
    pub stall_tol: Option<f64>,
    pub gp_restarts: Option<usize>,
    pub acquisition_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedSection {
    pub beam: Option<BeamSettings>,
    pub sail: Option<SailPlaneSettings>,
    pub interface: Option<InterfaceSettings>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// Column labels of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Names {
    pub family: String,
    pub parameters: Vec<String>,
    pub objective: String,
    pub constraints: Vec<String>,
}

/// A validated campaign document.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub config: CampaignConfig,
    /// Built-in evaluator; `None` for custom problems.
    pub problem: Option<ProblemSpec>,
    pub names: Names,
    pub output_dir: PathBuf,
    /// The document with every default filled in.
    pub resolved: Document,
}

impl Campaign {
    /// Text of the fully resolved document; parsing it gives back an equal campaign.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(&self.resolved).expect("documents serialize")
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_config(text: &str) -> Result<Campaign, CliError> {
    let doc: Document = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;

    let mut missing = Vec::new();
    let family_id = doc.problem.as_ref().and_then(|p| p.family.clone());
    if family_id.is_none() {
        missing.push("problem.family");
    }
    let opt = doc.optimizer.clone().unwrap_or_default();
    if opt.max_iters.is_none() {
        missing.push("optimizer.max_iters");
    }
    if opt.seed.is_none() {
        missing.push("optimizer.seed");
    }
    let family = match family_id.as_deref() {
        None | Some("custom") => None,
        Some(id) => Some(Family::parse(id).ok_or_else(|| {
            config_error(format!(
                "problem.family: unknown family `{id}` (expected example1, example2, example3, sailplane or custom)"
            ))
        })?),
    };
    let is_custom = family_id.as_deref() == Some("custom");
    let bounds_section = doc.bounds.clone().unwrap_or_default();
    if is_custom {
        if bounds_section.lower.is_none() {
            missing.push("bounds.lower");
        }
        if bounds_section.upper.is_none() {
            missing.push("bounds.upper");
        }
    }
    if !missing.is_empty() {
        return Err(config_error(format!("missing required keys: {}", missing.join(", "))));
    }

    let problem_section = doc.problem.clone().unwrap_or_default();
    let bounds = match family {
        Some(f) => {
            let preset = f.bounds();
            let lower = bounds_section.lower.unwrap_or_else(|| preset.lower().to_vec());
            let upper = bounds_section.upper.unwrap_or_else(|| preset.upper().to_vec());
            if lower.len() != preset.dim() || upper.len() != preset.dim() {
                return Err(config_error(format!(
                    "bounds: {} takes {} parameters",
                    f.id(),
                    preset.dim()
                )));
            }
            (lower, upper)
        }
        None => (
            bounds_section.lower.expect("checked"),
            bounds_section.upper.expect("checked"),
        ),
    };
    let bounds = Bounds::new(bounds.0, bounds.1).map_err(|e| config_error(format!("bounds: {e}")))?;
    let dim = bounds.dim();

    let parameters = match (family, problem_section.parameters) {
        (Some(f), None) => f.parameter_names().iter().map(|s| s.to_string()).collect(),
        (Some(f), Some(_)) => {
            return Err(config_error(format!(
                "problem.parameters: only custom problems name their parameters ({} is fixed)",
                f.id()
            )))
        }
        (None, Some(p)) => p,
        (None, None) => (1..=dim).map(|i| format!("x{i}")).collect(),
    };
    if parameters.len() != dim {
        return Err(config_error(format!(
            "problem.parameters: {} names for {dim} bounds",
            parameters.len()
        )));
    }
    let objective = match (family, problem_section.objective) {
        (Some(f), None) => f.objective_name().to_string(),
        (Some(f), Some(_)) => {
            return Err(config_error(format!(
                "problem.objective: only custom problems name their objective ({} is fixed)",
                f.id()
            )))
        }
        (None, Some(o)) => o,
        (None, None) => "objective".to_string(),
    };

    let (constraints, constraint_names) = resolve_constraints(family, doc.constraints.as_deref())?;

    let init = doc.init.clone().unwrap_or_default();
    let init_points = match (&init.points, family) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(f)) if init.n_init.is_none() => f.init_points(),
        _ => None,
    };
    let n_init = match (&init_points, init.n_init) {
        (Some(p), Some(n)) if n != p.len() => {
            return Err(config_error(format!(
                "init.n_init = {n} disagrees with the {} listed points",
                p.len()
            )))
        }
        (Some(p), _) => p.len(),
        (None, Some(n)) => n,
        (None, None) => family.map(|f| f.n_init()).unwrap_or(2 * dim + 2),
    };

    let mut config = CampaignConfig::new(bounds, constraints);
    config.n_init = n_init;
    config.init_points = init_points;
    config.max_iters = opt.max_iters.expect("checked");
    config.seed = opt.seed.expect("checked");
    if let Some(v) = opt.stall_window {
        config.stall_window = v;
    }
    if let Some(v) = opt.stall_tol {
        config.stall_tol = v;
    }
    if let Some(v) = opt.gp_restarts {
        config.gp_restarts = v;
    }
    if let Some(v) = opt.acquisition_budget {
        config.acquisition_budget = v;
    }
    config.validate().map_err(|e| match e {
        fsibo::optimizer::OptimizerError::InitOutOfBounds { index } => {
            config_error(format!("init.points[{index}] lies outside the bounds"))
        }
        other => config_error(other.to_string()),
    })?;

    let testbed = doc.testbed.clone().unwrap_or_default();
    let problem = match family {
        Some(f) => {
            let mut spec = ProblemSpec::new(f);
            if let Some(b) = testbed.beam {
                spec.beam = b;
            }
            if let Some(s) = testbed.sail {
                spec.sail = s;
            }
            if let Some(i) = testbed.interface {
                i.validate().map_err(|e| config_error(format!("testbed.interface: {e}")))?;
                spec.interface = i;
            }
            Some(spec)
        }
        None => {
            if testbed != TestbedSection::default() {
                return Err(config_error("testbed: custom problems have no built-in testbed"));
            }
            None
        }
    };

    let output_dir = doc
        .output
        .as_ref()
        .and_then(|o| o.dir.clone())
        .unwrap_or_else(|| "fsibo-out".to_string());

    let resolved = Document {
        problem: Some(ProblemSection {
            family: Some(family_id.expect("checked")),
            parameters: is_custom.then(|| parameters.clone()),
            objective: is_custom.then(|| objective.clone()),
        }),
        bounds: Some(BoundsSection {
            lower: Some(config.bounds.lower().to_vec()),
            upper: Some(config.bounds.upper().to_vec()),
        }),
        constraints: Some(
            config
                .constraints
                .iter()
                .zip(&constraint_names)
                .map(|(c, n)| ConstraintSection {
                    name: Some(n.clone()),
                    sense: Some(c.sense.symbol().to_string()),
                    threshold: Some(c.threshold),
                })
                .collect(),
        ),
        init: Some(InitSection {
            n_init: Some(config.n_init),
            points: config.init_points.clone(),
        }),
        optimizer: Some(OptimizerSection {
            max_iters: Some(config.max_iters),
            seed: Some(config.seed),
            stall_window: Some(config.stall_window),
            stall_tol: Some(config.stall_tol),
            gp_restarts: Some(config.gp_restarts),
            acquisition_budget: Some(config.acquisition_budget),
        }),
        testbed: problem.as_ref().map(|p| TestbedSection {
            beam: Some(p.beam),
            sail: Some(p.sail),
            interface: Some(p.interface),
        }),
        output: Some(OutputSection {
            dir: Some(output_dir.clone()),
        }),
    };

    Ok(Campaign {
        config,
        problem,
        names: Names {
            family: resolved.problem.as_ref().and_then(|p| p.family.clone()).expect("set"),
            parameters,
            objective,
            constraints: constraint_names,
        },
        output_dir: PathBuf::from(output_dir),
        resolved,
    })
}

fn resolve_constraints(
    family: Option<Family>,
    given: Option<&[ConstraintSection]>,
) -> Result<(Vec<ConstraintSpec>, Vec<String>), CliError> {
    let defaults: Vec<(ConstraintSpec, String)> = match family {
        Some(f) => f
            .constraints()
            .into_iter()
            .zip(f.constraint_names())
            .map(|(c, n)| (c, n.to_string()))
            .collect(),
        None => Vec::new(),
    };
    let Some(given) = given else {
        return Ok(defaults.into_iter().unzip());
    };
    if let Some(family) = family.filter(|_| given.len() != defaults.len()) {
        return Err(config_error(format!(
            "constraints: {} has {} constraints, {} given",
            family.id(),
            defaults.len(),
            given.len()
        )));
    }
    let mut specs = Vec::new();
    let mut names = Vec::new();
    for (i, c) in given.iter().enumerate() {
        let default = defaults.get(i);
        let sense = match (&c.sense, default) {
            (Some(s), _) => Sense::parse(s).ok_or_else(|| {
                config_error(format!("constraints[{i}].sense: `{s}` is not \"<=\" or \">=\""))
            })?,
            (None, Some((d, _))) => d.sense,
            (None, None) => return Err(config_error(format!("missing required keys: constraints[{i}].sense"))),
        };
        let threshold = match (c.threshold, default) {
            (Some(t), _) => t,
            (None, Some((d, _))) => d.threshold,
            (None, None) => {
                return Err(config_error(format!(
                    "missing required keys: constraints[{i}].threshold"
                )))
            }
        };
        if !threshold.is_finite() {
            return Err(config_error(format!("constraints[{i}].threshold must be finite")));
        }
        if let Some((d, _)) = default {
            if d.sense != sense {
                return Err(config_error(format!(
                    "constraints[{i}].sense: the family fixes `{}`",
                    d.sense.symbol()
                )));
            }
        }
        let name = match (&c.name, default) {
            (Some(n), _) => n.clone(),
            (None, Some((_, n))) => n.clone(),
            (None, None) => format!("c{}", i + 1),
        };
        specs.push(ConstraintSpec { threshold, sense });
        names.push(name);
    }
    Ok((specs, names))
}
