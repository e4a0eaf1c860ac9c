//! JSON environment specifications for the built-in CMDP builders.
//!
//! A spec document is `{"kind": "two_state" | "gridworld" | "random", ...}`
//! with exactly the builder's parameter names; unknown keys are rejected.

use crate::cmdp::{build_gridworld, build_random_cmdp, build_two_state, Cmdp, CmdpError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvSpecError {
    #[error("environment spec is not a JSON object")]
    NotAnObject,
    #[error("environment spec is missing the \"kind\" key")]
    MissingKind,
    #[error("unknown environment kind {0:?} (expected two_state, gridworld, or random)")]
    UnknownKind(String),
    #[error("invalid environment spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Build(#[from] CmdpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoStateSpec {
    kind: String,
    gamma: f64,
    b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridworldSpec {
    kind: String,
    width: usize,
    height: usize,
    hazard_cells: Vec<(usize, usize)>,
    goal_cell: (usize, usize),
    gamma: f64,
    b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSpec {
    kind: String,
    n_states: usize,
    n_actions: usize,
    seed: u64,
}

/// A parsed environment spec; build the concrete [`Cmdp`] with [`EnvSpec::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    TwoState {
        gamma: f64,
        b: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        hazard_cells: Vec<(usize, usize)>,
        goal_cell: (usize, usize),
        gamma: f64,
        b: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        seed: u64,
    },
}

impl EnvSpec {
    pub fn from_value(value: &serde_json::Value) -> Result<Self, EnvSpecError> {
        let obj = value.as_object().ok_or(EnvSpecError::NotAnObject)?;
        let kind = obj
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or(EnvSpecError::MissingKind)?;
        match kind {
            "two_state" => {
                let spec: TwoStateSpec = serde_json::from_value(value.clone())?;
                Ok(EnvSpec::TwoState {
                    gamma: spec.gamma,
                    b: spec.b,
                })
            }
            "gridworld" => {
                let spec: GridworldSpec = serde_json::from_value(value.clone())?;
                Ok(EnvSpec::Gridworld {
                    width: spec.width,
                    height: spec.height,
                    hazard_cells: spec.hazard_cells,
                    goal_cell: spec.goal_cell,
                    gamma: spec.gamma,
                    b: spec.b,
                })
            }
            "random" => {
                let spec: RandomSpec = serde_json::from_value(value.clone())?;
                Ok(EnvSpec::Random {
                    n_states: spec.n_states,
                    n_actions: spec.n_actions,
                    seed: spec.seed,
                })
            }
            other => Err(EnvSpecError::UnknownKind(other.to_string())),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EnvSpecError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(&value)
    }

    pub fn to_value(&self) -> serde_json::Value {
        match self {
            EnvSpec::TwoState { gamma, b } => serde_json::to_value(TwoStateSpec {
                kind: "two_state".into(),
                gamma: *gamma,
                b: *b,
            })
            .expect("two-state spec serializes"),
            EnvSpec::Gridworld {
                width,
                height,
                hazard_cells,
                goal_cell,
                gamma,
                b,
            } => serde_json::to_value(GridworldSpec {
                kind: "gridworld".into(),
                width: *width,
                height: *height,
                hazard_cells: hazard_cells.clone(),
                goal_cell: *goal_cell,
                gamma: *gamma,
                b: *b,
            })
            .expect("gridworld spec serializes"),
            EnvSpec::Random {
                n_states,
                n_actions,
                seed,
            } => serde_json::to_value(RandomSpec {
                kind: "random".into(),
                n_states: *n_states,
                n_actions: *n_actions,
                seed: *seed,
            })
            .expect("random spec serializes"),
        }
    }

    pub fn build(&self) -> Result<Cmdp, EnvSpecError> {
        match self {
            EnvSpec::TwoState { gamma, b } => Ok(build_two_state(*gamma, *b)?),
            EnvSpec::Gridworld {
                width,
                height,
                hazard_cells,
                goal_cell,
                gamma,
                b,
            } => Ok(build_gridworld(
                *width,
                *height,
                hazard_cells,
                *goal_cell,
                *gamma,
                *b,
            )?),
            EnvSpec::Random {
                n_states,
                n_actions,
                seed,
            } => Ok(build_random_cmdp(*n_states, *n_actions, *seed)?),
        }
    }
}
