//! Model coefficients for both agents and the leader's target trajectory.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lerp, TimeGrid};

/// Coefficients of the follower's entropy-regularized tracking problem.
///
/// `dilation` is the hidden truth `M`; estimators never read it, it is only
/// used to simulate the follower and to score estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerModel {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub x0: f64,
    pub q: f64,
    pub r: f64,
    pub entropy_weight: f64,
    pub dilation: f64,
}

impl FollowerModel {
    pub fn paper_defaults() -> Self {
        Self {
            a: -1.0,
            b: 1.0,
            sigma: 0.1,
            x0: 0.1,
            q: 1.0,
            r: 1.0,
            entropy_weight: 1.0,
            dilation: 1.0,
        }
    }

    /// Validation used for simulation inputs; `sigma = 0` is accepted here
    /// so that noiseless reference paths can be generated.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a,
            self.b,
            self.sigma,
            self.x0,
            self.q,
            self.r,
            self.entropy_weight,
            self.dilation,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("follower model has non-finite coefficients"));
        }
        if self.sigma < 0.0 {
            return Err(Error::invalid("follower sigma must be nonnegative"));
        }
        if self.q <= 0.0 || self.r <= 0.0 || self.entropy_weight <= 0.0 {
            return Err(Error::invalid(
                "follower q, r and entropy weight must be positive",
            ));
        }
        Ok(())
    }

    /// Strict validation: additionally requires `sigma > 0`.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        if self.sigma <= 0.0 {
            return Err(Error::invalid("follower sigma must be positive"));
        }
        Ok(())
    }

    /// `B_F^2 / R_F`, the gain of `b` in the optimally controlled drift.
    #[inline]
    pub fn drift_gain(&self) -> f64 {
        self.b * self.b / self.r
    }

    /// `B_F^4 / (sigma_F^2 R_F^2)`: converts precision into Fisher information.
    #[inline]
    pub fn information_scale(&self) -> f64 {
        let g = self.drift_gain();
        g * g / (self.sigma * self.sigma)
    }

    /// Variance of the optimal Gaussian policy, `lambda_F / R_F`.
    #[inline]
    pub fn policy_variance(&self) -> f64 {
        self.entropy_weight / self.r
    }

    /// Differential entropy of the optimal Gaussian policy.
    pub fn policy_entropy(&self) -> f64 {
        0.5 * (2.0 * PI * std::f64::consts::E * self.policy_variance()).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetTrajectory {
    /// `amplitude * sin(angular_frequency * t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    /// Values on nodes of a grid, linearly interpolated in between.
    Tabulated { grid: TimeGrid, values: Vec<f64> },
}

impl TargetTrajectory {
    pub fn paper_default(horizon: f64) -> Self {
        TargetTrajectory::Sinusoid {
            amplitude: 0.1,
            angular_frequency: 2.0 * PI / horizon,
            phase: 0.0,
        }
    }

    pub fn zero() -> Self {
        TargetTrajectory::Sinusoid {
            amplitude: 0.0,
            angular_frequency: 0.0,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetTrajectory::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => {
                if ![amplitude, angular_frequency, phase]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::invalid("sinusoid target has non-finite parameters"));
                }
            }
            TargetTrajectory::Tabulated { grid, values } => {
                grid.check_len(values.len(), "tabulated target")?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tabulated target has non-finite values"));
                }
            }
        }
        Ok(())
    }

    /// Value at time `t` of an experiment with the given horizon.
    pub fn eval(&self, t: f64, horizon: f64) -> Result<f64> {
        match self {
            TargetTrajectory::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => {
                if !(0.0..=horizon).contains(&t) {
                    return Err(Error::OutOfDomain { t, horizon });
                }
                Ok(amplitude * (angular_frequency * t + phase).sin())
            }
            TargetTrajectory::Tabulated { grid, values } => {
                grid.check_len(values.len(), "tabulated target")?;
                let (j, w) = grid.locate(t)?;
                Ok(lerp(values[j], values[j + 1], w))
            }
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        grid.nodes()
            .into_iter()
            .map(|t| self.eval(t, grid.horizon()))
            .collect()
    }
}

/// Coefficients of the leader's controlled dynamics and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderModel {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub x0: f64,
    pub q: f64,
    pub r: f64,
    pub q_terminal: f64,
    /// Inference intensity `lambda_L`.
    pub inference_weight: f64,
    pub target: TargetTrajectory,
}

impl LeaderModel {
    pub fn paper_defaults(horizon: f64) -> Self {
        Self {
            a: -1.0,
            b: 1.0,
            sigma: 0.1,
            x0: 0.1,
            q: 1.0,
            r: 1.0,
            q_terminal: 1.0,
            inference_weight: 0.0,
            target: TargetTrajectory::paper_default(horizon),
        }
    }

    pub fn with_inference_weight(mut self, weight: f64) -> Self {
        self.inference_weight = weight;
        self
    }

    /// `sigma = 0` is accepted for deterministic reference paths.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a,
            self.b,
            self.sigma,
            self.x0,
            self.q,
            self.r,
            self.q_terminal,
            self.inference_weight,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("leader model has non-finite coefficients"));
        }
        if self.sigma < 0.0 {
            return Err(Error::invalid("leader sigma must be nonnegative"));
        }
        if self.q <= 0.0 || self.r <= 0.0 || self.q_terminal <= 0.0 {
            return Err(Error::invalid(
                "leader q, r and terminal weight must be positive",
            ));
        }
        if self.inference_weight < 0.0 {
            return Err(Error::invalid("inference weight must be nonnegative"));
        }
        self.target.validate()
    }

    /// Scaled intensity `lambda_L B_F^4 / (sigma_F^2 R_F^2)`.
    pub fn scaled_intensity(&self, follower: &FollowerModel) -> f64 {
        if self.inference_weight == 0.0 {
            0.0
        } else {
            self.inference_weight * follower.information_scale()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sinusoid_values() {
        let f = TargetTrajectory::Sinusoid {
            amplitude: 0.1,
            angular_frequency: 2.0 * PI / 0.5,
            phase: 0.0,
        };
        assert_eq!(f.eval(0.0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(f.eval(0.125, 0.5).unwrap(), 0.1, epsilon = 1e-15);
        assert!(matches!(f.eval(0.6, 0.5), Err(Error::OutOfDomain { .. })));
        assert!(f.eval(-1e-9, 0.5).is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let f = TargetTrajectory::Tabulated {
            grid: g,
            values: vec![0.0, 1.0, 2.0],
        };
        assert_abs_diff_eq!(f.eval(0.25, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(1.0, 1.0).unwrap(), 2.0, epsilon = 1e-15);
        let bad = TargetTrajectory::Tabulated {
            grid: g,
            values: vec![0.0, 1.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_validation() {
        assert!(FollowerModel::paper_defaults().validate_strict().is_ok());
        let mut f = FollowerModel::paper_defaults();
        f.r = 0.0;
        assert!(f.validate().is_err());
        let mut f = FollowerModel::paper_defaults();
        f.sigma = 0.0;
        assert!(f.validate().is_ok());
        assert!(f.validate_strict().is_err());

        let mut l = LeaderModel::paper_defaults(0.5);
        assert!(l.validate().is_ok());
        l.inference_weight = -0.1;
        assert!(l.validate().is_err());
    }

    #[test]
    fn paper_scales() {
        let f = FollowerModel::paper_defaults();
        assert_abs_diff_eq!(f.information_scale(), 100.0, epsilon = 1e-9);
        let l = LeaderModel::paper_defaults(0.5).with_inference_weight(0.5);
        assert_abs_diff_eq!(l.scaled_intensity(&f), 50.0, epsilon = 1e-9);
    }
}
