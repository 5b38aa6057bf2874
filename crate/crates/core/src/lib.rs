//! Continuous-time leader/follower strategic inference.
//!
//! The follower tracks a dilated copy of the leader's path with an
//! entropy-regularized Gaussian policy; the leader steers its own path so
//! that the follower's response reveals the hidden dilation `M`, then
//! estimates `M` by maximum likelihood.
//!
//! Module map:
//! - [`grid`], [`model`], [`rng`]: shared types, quadrature, random streams.
//! - [`riccati`]: backward Riccati systems for both agents.
//! - [`simulate`]: leader/follower SDE paths, precision and cost functionals.
//! - [`infer`]: continuous and discrete MLEs, multi-period aggregation.
//! - [`policy`]: Riccati, follower, and trainable recurrent policies; SPSA.

pub mod error;
pub mod grid;
pub mod infer;
pub mod model;
pub mod policy;
pub mod riccati;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{cumtrapz, trapz, TimeGrid, Trajectory};
pub use model::{FollowerModel, LeaderModel, TargetTrajectory};
pub use rng::{RngContract, StreamPurpose};
