//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stackinfer_core::policy::{Architecture, OptimizerConfig};
use stackinfer_core::simulate::FollowerScheme;
use stackinfer_core::{FollowerModel, LeaderModel, TimeGrid};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub follower: FollowerModel,
    pub leader: LeaderModel,
    #[serde(default)]
    pub rng: RngConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub study: Study,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RngConfig {
    pub master_seed: u64,
    /// Reduce Monte Carlo sums in path order so output does not depend on
    /// the number of worker threads.
    pub bit_exact: bool,
}

impl Default for RngConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            bit_exact: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Study {
    BenchmarkCompare(BenchmarkCompare),
    TradeoffSweep(TradeoffSweep),
    ObjectiveCompare(ObjectiveCompare),
    EstimatorStudy(EstimatorStudy),
    MultiPeriod(MultiPeriod),
    DiscreteConvergence(DiscreteConvergence),
    Wellposedness(Wellposedness),
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::BenchmarkCompare(_) => "benchmark-compare",
            Study::TradeoffSweep(_) => "tradeoff-sweep",
            Study::ObjectiveCompare(_) => "objective-compare",
            Study::EstimatorStudy(_) => "estimator-study",
            Study::MultiPeriod(_) => "multi-period",
            Study::DiscreteConvergence(_) => "discrete-convergence",
            Study::Wellposedness(_) => "wellposedness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkCompare {
    pub inference_weight: f64,
    pub optimizer: OptimizerConfig,
    pub architecture: Architecture,
    pub eval_paths: usize,
    pub trajectory_paths: usize,
}

impl Default for BenchmarkCompare {
    fn default() -> Self {
        Self {
            inference_weight: 0.5,
            optimizer: OptimizerConfig::default(),
            architecture: Architecture::default(),
            eval_paths: 10_000,
            trajectory_paths: 5,
        }
    }
}

/// Which weight moves when the ratio `Q_L / lambda_L` is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// `lambda_L` fixed at `inference_weight`, `Q_L = ratio * lambda_L`.
    PrimaryWeight,
    /// `Q_L` fixed at the leader's `q`, `lambda_L = Q_L / ratio`.
    InferenceWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TradeoffSweep {
    pub ratios: Vec<f64>,
    pub vary: SweepAxis,
    pub inference_weight: f64,
    pub n_paths: usize,
    pub trajectory_paths: usize,
}

impl Default for TradeoffSweep {
    fn default() -> Self {
        Self {
            ratios: vec![0.5, 1.0, 10.0, 25.0, 100.0],
            vary: SweepAxis::PrimaryWeight,
            inference_weight: 1.0,
            n_paths: 10_000,
            trajectory_paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveCompare {
    /// `(lambda_L for J_Var, lambda_L for J_I)` pairs.
    pub tuples: Vec<(f64, f64)>,
    pub optimizer: OptimizerConfig,
    pub architecture: Architecture,
    pub eval_paths: usize,
    pub trajectory_paths: usize,
}

impl Default for ObjectiveCompare {
    fn default() -> Self {
        Self {
            tuples: vec![(1e-7, 0.65), (1e-6, 0.93), (1e-5, 1.13)],
            optimizer: OptimizerConfig {
                objective: stackinfer_core::policy::Objective::Variance,
                ..Default::default()
            },
            architecture: Architecture::default(),
            eval_paths: 10_000,
            trajectory_paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorStudy {
    pub inference_weights: Vec<f64>,
    pub n_replays: usize,
    /// Leader-noise stream of the fixed leader path.
    pub leader_path: u64,
    pub scheme: FollowerScheme,
}

impl Default for EstimatorStudy {
    fn default() -> Self {
        Self {
            inference_weights: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n_replays: 10_000,
            leader_path: 0,
            scheme: FollowerScheme::Euler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiPeriod {
    pub inference_weights: Vec<f64>,
    pub episodes: usize,
    /// Independent macro-replications; replication `r` uses the same seeds
    /// for every `lambda_L`.
    pub replications: usize,
    pub threshold: Option<f64>,
    pub scheme: FollowerScheme,
}

impl Default for MultiPeriod {
    fn default() -> Self {
        Self {
            inference_weights: vec![0.0, 0.65, 0.93, 1.13],
            episodes: 30,
            replications: 16,
            threshold: Some(1e-3),
            scheme: FollowerScheme::Euler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscreteConvergence {
    /// Mesh level `k` observes the path every `T / 2^k`; the grid must have
    /// a multiple of `2^max(levels)` steps.
    pub levels: Vec<u32>,
    pub replications: usize,
    pub sub_intervals: usize,
    pub leader_path: u64,
    pub scheme: FollowerScheme,
}

impl Default for DiscreteConvergence {
    fn default() -> Self {
        Self {
            levels: (4..=10).collect(),
            replications: 100,
            sub_intervals: 16,
            leader_path: 0,
            scheme: FollowerScheme::exact(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Wellposedness {
    pub inference_weights: Vec<f64>,
}

impl Default for Wellposedness {
    fn default() -> Self {
        Self {
            inference_weights: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.horizon, self.grid.n_steps)
            .map_err(|e| config_err(format!("grid: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let grid = self.grid()?;
        self.follower
            .validate_strict()
            .map_err(|e| config_err(format!("follower: {e}")))?;
        self.leader
            .validate()
            .map_err(|e| config_err(format!("leader: {e}")))?;
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("study.{what} must be positive")))
            }
        };
        let nonnegative = |v: &[f64], what: &str| {
            if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
                Ok(())
            } else {
                Err(config_err(format!("study.{what} must be nonnegative")))
            }
        };
        let nonempty = |n: usize, what: &str| {
            if n == 0 {
                Err(config_err(format!("study.{what} must not be empty")))
            } else {
                Ok(())
            }
        };
        match &self.study {
            Study::BenchmarkCompare(s) => {
                nonnegative(&[s.inference_weight], "inference_weight")?;
                s.optimizer
                    .validate()
                    .map_err(|e| config_err(format!("study.optimizer: {e}")))?;
                s.architecture
                    .validate()
                    .map_err(|e| config_err(format!("study.architecture: {e}")))?;
                nonempty(s.eval_paths.saturating_sub(1), "eval_paths (at least 2)")?;
            }
            Study::TradeoffSweep(s) => {
                nonempty(s.ratios.len(), "ratios")?;
                for r in &s.ratios {
                    positive(*r, "ratios")?;
                }
                positive(s.inference_weight, "inference_weight")?;
                nonempty(s.n_paths, "n_paths")?;
            }
            Study::ObjectiveCompare(s) => {
                nonempty(s.tuples.len(), "tuples")?;
                for (v, i) in &s.tuples {
                    positive(*v, "tuples")?;
                    positive(*i, "tuples")?;
                }
                s.optimizer
                    .validate()
                    .map_err(|e| config_err(format!("study.optimizer: {e}")))?;
                s.architecture
                    .validate()
                    .map_err(|e| config_err(format!("study.architecture: {e}")))?;
                nonempty(s.eval_paths.saturating_sub(1), "eval_paths (at least 2)")?;
            }
            Study::EstimatorStudy(s) => {
                nonempty(s.inference_weights.len(), "inference_weights")?;
                nonnegative(&s.inference_weights, "inference_weights")?;
                nonempty(s.n_replays.saturating_sub(1), "n_replays (at least 2)")?;
            }
            Study::MultiPeriod(s) => {
                nonempty(s.inference_weights.len(), "inference_weights")?;
                nonnegative(&s.inference_weights, "inference_weights")?;
                nonempty(s.episodes, "episodes")?;
                nonempty(s.replications, "replications")?;
                if let Some(t) = s.threshold {
                    positive(t, "threshold")?;
                }
            }
            Study::DiscreteConvergence(s) => {
                nonempty(s.levels.len(), "levels")?;
                nonempty(s.replications, "replications")?;
                nonempty(s.sub_intervals, "sub_intervals")?;
                let top = *s.levels.iter().max().expect("nonempty");
                if top >= usize::BITS || grid.n_steps() % (1usize << top) != 0 {
                    return Err(config_err(format!(
                        "grid.n_steps must be a multiple of 2^{top} for study.levels"
                    )));
                }
            }
            Study::Wellposedness(s) => {
                nonempty(s.inference_weights.len(), "inference_weights")?;
                nonnegative(&s.inference_weights, "inference_weights")?;
            }
        }
        Ok(())
    }
}
