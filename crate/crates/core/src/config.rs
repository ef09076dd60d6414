//! JSON configuration for models and weights.
//!
//! A single JSON document describes the kernel (either the random-walk family
//! or an explicit finite set of rows over a banded tail) and the weight
//! sequence. Unknown keys are rejected so that typos fail loudly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{DiscreteKernel, WeightSequence};
use crate::models::{solve_gamma_hat, ModelError, RandomWalkSpec};

/// Configuration errors (parsing and semantic validation).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
    #[error("config error: {0}")]
    Invalid(String),
}

/// Kernel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// The bounded-increment random walk family.
    RandomWalk {
        g: usize,
        d: usize,
        c: usize,
        increments: Vec<f64>,
        boundary: Vec<Vec<f64>>,
    },
    /// Explicit sparse rows over a homogeneous banded tail.
    Explicit {
        rows: Vec<Vec<(usize, f64)>>,
        tail_increments: Vec<f64>,
        g: usize,
        d: usize,
    },
}

/// Weight description. A geometric weight without a base uses the solved
/// drift base of the random-walk model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Geometric { gamma: Option<f64> },
    Tabulated { values: Vec<f64> },
}

/// Full model + weight configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub model: ModelConfig,
    pub weight: WeightConfig,
}

/// A resolved configuration: concrete kernel, weight, and (for the
/// random-walk family) the analytic drift data.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub kernel: DiscreteKernel,
    pub weight: WeightSequence,
    /// Present for the random-walk family.
    pub walk: Option<(RandomWalkSpec, crate::models::GammaSolution)>,
}

impl KernelConfig {
    /// Parses a JSON document, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the kernel and weight, solving for the drift base when asked.
    pub fn resolve(&self) -> Result<ResolvedModel, ConfigError> {
        let (kernel, walk) = match &self.model {
            ModelConfig::RandomWalk {
                g,
                d,
                c,
                increments,
                boundary,
            } => {
                let spec = RandomWalkSpec {
                    g: *g,
                    d: *d,
                    c: *c,
                    increments: increments.clone(),
                    boundary: boundary.clone(),
                };
                let sol = solve_gamma_hat(&spec)?;
                (spec.to_kernel()?, Some((spec, sol)))
            }
            ModelConfig::Explicit {
                rows,
                tail_increments,
                g,
                d,
            } => (
                DiscreteKernel::new(rows.clone(), tail_increments.clone(), *g, *d)?,
                None,
            ),
        };
        let weight = match &self.weight {
            WeightConfig::Geometric { gamma: Some(gm) } => WeightSequence::geometric(*gm)?,
            WeightConfig::Geometric { gamma: None } => {
                let Some((_, sol)) = &walk else {
                    return Err(ConfigError::Invalid(
                        "geometric weight without a base requires the random_walk model".into(),
                    ));
                };
                WeightSequence::geometric(sol.gamma_hat)?
            }
            WeightConfig::Tabulated { values } => WeightSequence::tabulated(values.clone())?,
        };
        Ok(ResolvedModel {
            kernel,
            weight,
            walk,
        })
    }
}

/// The worked random-walk instance as a JSON document; used as the default
/// configuration by the command-line front end.
pub const REFERENCE_CONFIG_JSON: &str = r#"{
  "model": {
    "type": "random_walk",
    "g": 2,
    "d": 1,
    "c": 2,
    "increments": [0.5, 0.3333333333333333, 0.0, 0.16666666666666666],
    "boundary": [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5]]
  },
  "weight": { "kind": "geometric", "gamma": null }
}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_resolves() {
        let cfg = KernelConfig::from_json(REFERENCE_CONFIG_JSON).unwrap();
        let resolved = cfg.resolve().unwrap();
        let (_, sol) = resolved.walk.unwrap();
        assert!((sol.gamma_hat - 2.179_981_072_158_157).abs() < 1e-9);
        assert_eq!(
            resolved.weight.geometric_base().unwrap(),
            sol.gamma_hat
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{
          "model": {"type": "random_walk", "g": 1, "d": 1, "c": 0,
                    "increments": [0.6, 0.0, 0.4], "boundary": [[1.0]],
                    "bogus": 3},
          "weight": {"kind": "geometric", "gamma": 2.0}
        }"#;
        assert!(KernelConfig::from_json(bad).is_err());
    }

    #[test]
    fn json_increments_match_float_literals() {
        // The decimal encodings of 1/3 and 1/6 round to the same doubles
        // Rust produces; drift constants from a JSON config are bit-equal to
        // those built in code.
        let cfg = KernelConfig::from_json(REFERENCE_CONFIG_JSON).unwrap();
        let ModelConfig::RandomWalk { increments, .. } = &cfg.model else {
            panic!()
        };
        assert_eq!(increments[1], 1.0 / 3.0);
        assert_eq!(increments[3], 1.0 / 6.0);
    }

    #[test]
    fn explicit_model_resolves() {
        let text = r#"{
          "model": {"type": "explicit",
                    "rows": [[[0, 0.5], [1, 0.5]]],
                    "tail_increments": [0.7, 0.3],
                    "g": 1, "d": 0},
          "weight": {"kind": "geometric", "gamma": 1.5}
        }"#;
        let cfg = KernelConfig::from_json(text).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.kernel.boundary_rows(), 1);
        assert!(resolved.walk.is_none());
    }

    #[test]
    fn tabulated_weight_roundtrip() {
        let text = r#"{
          "model": {"type": "explicit",
                    "rows": [[[0, 1.0]]],
                    "tail_increments": [1.0],
                    "g": 0, "d": 0},
          "weight": {"kind": "tabulated", "values": [1.0, 2.0, 4.0, 8.0]}
        }"#;
        let resolved = KernelConfig::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(resolved.weight.value(3), 8.0);
    }
}
