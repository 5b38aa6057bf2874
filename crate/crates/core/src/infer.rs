//! Estimation of the follower's dilation `M` from observed follower paths.
//!
//! With `g` the path functional of the leader trajectory, the follower's
//! closed-loop dynamics read `dX = (f X - (B^2/R) M g) dt + sigma dW`, so `M`
//! enters linearly in the drift and its maximum-likelihood estimate has a
//! closed form. Everything here is a pure function of already simulated data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FollowerModel, LeaderModel};
use crate::policy::Policy;
use crate::riccati::{DerivedCoefficients, FollowerRiccati};
use crate::rng::{RngContract, StreamPurpose};
use crate::simulate::{
    compute_g, partial_cell_transition, simulate_follower_with_noise, simulate_leader_with_noise,
    FollowerPath, FollowerScheme, GProfile, DEFAULT_DEGENERACY_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub m_hat: f64,
    /// Trapezoidal `int g^2 dt`.
    pub precision: f64,
    pub cond_variance: f64,
    pub cond_fisher: f64,
    /// `sum f_j g_j X_j h` (left endpoint).
    pub drift_term: f64,
    /// `sum g_j (X_{j+1} - X_j)` (Ito sum).
    pub increment_term: f64,
    /// `sum_{j<n} g_j^2 h`, the precision of the discretized likelihood.
    pub riemann_precision: f64,
}

impl MleReport {
    fn moments(m_hat: f64, precision: f64, model: &FollowerModel) -> (f64, f64, f64) {
        let scale = model.information_scale();
        let fisher = scale * precision;
        (m_hat, 1.0 / fisher, fisher)
    }
}

pub fn mle_continuous(
    fpath: &FollowerPath,
    gp: &GProfile,
    fr: &FollowerRiccati,
    model: &FollowerModel,
) -> Result<MleReport> {
    mle_continuous_with_floor(fpath, gp, fr, model, DEFAULT_DEGENERACY_FLOOR)
}

/// Continuous-observation MLE. All time sums use left endpoints, which makes
/// the estimate the exact maximizer of the Euler-discretized likelihood: a
/// noiseless Euler path returns the true `M` up to rounding.
pub fn mle_continuous_with_floor(
    fpath: &FollowerPath,
    gp: &GProfile,
    fr: &FollowerRiccati,
    model: &FollowerModel,
    floor: f64,
) -> Result<MleReport> {
    let grid = fpath.grid;
    if fr.grid != grid {
        return Err(Error::invalid(
            "follower path and Riccati solution live on different grids",
        ));
    }
    grid.check_len(gp.g.len(), "g profile")?;
    if !(gp.precision >= floor) {
        return Err(Error::DegeneratePath {
            precision: gp.precision,
            floor,
        });
    }
    let h = grid.step();
    let n = grid.n_steps();
    let mut drift_term = 0.0;
    let mut increment_term = 0.0;
    for j in 0..n {
        drift_term += fr.f[j] * gp.g[j] * fpath.x[j] * h;
        increment_term += gp.g[j] * (fpath.x[j + 1] - fpath.x[j]);
    }
    let riemann_precision = gp.riemann_precision(&grid);
    let m_hat = (drift_term - increment_term) / (model.drift_gain() * riemann_precision);
    let (m_hat, cond_variance, cond_fisher) = MleReport::moments(m_hat, gp.precision, model);
    Ok(MleReport {
        m_hat,
        precision: gp.precision,
        cond_variance,
        cond_fisher,
        drift_term,
        increment_term,
        riemann_precision,
    })
}

/// `M_hat - M = -sigma sum g_j dW_j / ((B^2/R) sum g_j^2 h)` evaluated with
/// recorded increments.
pub fn mle_error_representation(
    gp: &GProfile,
    dw: &[f64],
    model: &FollowerModel,
    riemann_precision: f64,
) -> f64 {
    let stoch: f64 = gp.g.iter().zip(dw).map(|(g, d)| g * d).sum();
    -model.sigma * stoch / (model.drift_gain() * riemann_precision)
}

/// `(B^4 / (sigma^2 R^2)) * mean(int g^2)`.
pub fn fisher_information_mc(profiles: &[GProfile], model: &FollowerModel) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let sum: f64 = profiles.iter().map(|p| p.precision).sum();
    Ok(model.information_scale() * sum / profiles.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVariance {
    pub variance: f64,
    pub used: usize,
    pub rejected: usize,
}

/// `(sigma^2 R^2 / B^4) * mean(1 / int g^2)` over paths above the floor.
pub fn variance_mc(
    profiles: &[GProfile],
    model: &FollowerModel,
    floor: f64,
) -> Result<EnsembleVariance> {
    let inv: Vec<f64> = profiles
        .iter()
        .filter(|p| p.precision >= floor)
        .map(|p| 1.0 / p.precision)
        .collect();
    if inv.is_empty() {
        return Err(Error::DegenerateEnsemble {
            paths: profiles.len(),
        });
    }
    let mean = inv.iter().sum::<f64>() / inv.len() as f64;
    Ok(EnsembleVariance {
        variance: mean / model.information_scale(),
        used: inv.len(),
        rejected: profiles.len() - inv.len(),
    })
}

/// Running precision-weighted aggregate of per-episode estimates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiPeriodState {
    pub episodes: usize,
    pub total_precision: f64,
    pub m_bar: f64,
    /// `(M_hat_i, precision_i)` per episode.
    pub history: Vec<(f64, f64)>,
}

impl MultiPeriodState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Weights `precision_i / P`.
    pub fn weights(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|(_, p)| p / self.total_precision)
            .collect()
    }

    /// The aggregate recomputed from the full history.
    pub fn batch_estimate(&self) -> f64 {
        let p: f64 = self.history.iter().map(|(_, p)| p).sum();
        self.history.iter().map(|(m, q)| m * q).sum::<f64>() / p
    }

    /// Plug-in conditional variance `(sigma^2 R^2 / B^4) / P`.
    pub fn variance_proxy(&self, model: &FollowerModel) -> f64 {
        1.0 / (model.information_scale() * self.total_precision)
    }
}

pub fn multi_period_update(state: &MultiPeriodState, report: &MleReport) -> MultiPeriodState {
    let p_new = state.total_precision + report.precision;
    let keep = state.total_precision / p_new;
    let mut history = state.history.clone();
    history.push((report.m_hat, report.precision));
    MultiPeriodState {
        episodes: state.episodes + 1,
        total_precision: p_new,
        m_bar: keep * state.m_bar + (1.0 - keep) * report.m_hat,
        history,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopDecision {
    Continue,
    Stop,
}

pub fn stopping_rule(
    state: &MultiPeriodState,
    threshold: f64,
    model: &FollowerModel,
) -> Result<StopDecision> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("variance threshold must be positive"));
    }
    if state.episodes == 0 {
        return Err(Error::invalid("stopping rule needs at least one episode"));
    }
    Ok(if state.variance_proxy(model) <= threshold {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    })
}

/// Follower states observed at a strictly increasing set of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteObservations {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DiscreteObservations {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::invalid(
                "need at least two observations with matching times",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]))
            || times.iter().chain(&values).any(|v| !v.is_finite())
        {
            return Err(Error::invalid(
                "observation times must be finite and strictly increasing",
            ));
        }
        Ok(Self { times, values })
    }

    /// Every `stride`-th node of a simulated path, always including node 0.
    pub fn from_path(path: &FollowerPath, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let idx: Vec<usize> = (0..=path.grid.n_steps()).step_by(stride).collect();
        Self::new(
            idx.iter().map(|&j| path.grid.node(j)).collect(),
            idx.iter().map(|&j| path.x[j]).collect(),
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest spacing between consecutive observations.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEstimate {
    pub m_hat: f64,
    pub sigma2_hat: f64,
    /// `sum G_i^2 / V_i`.
    pub information: f64,
}

/// `(E, G, V)` of the exact transition over `[t0, t1]`, composed from the
/// fine-grid cells (or parts of cells) the interval covers.
fn interval_transition(
    fr: &FollowerRiccati,
    g: &[f64],
    t0: f64,
    t1: f64,
    sub: usize,
) -> Result<(f64, f64, f64)> {
    let grid = fr.grid;
    let (c0, w0) = grid.locate(t0)?;
    let (c1, w1) = grid.locate(t1)?;
    let (mut e, mut gi, mut v) = (1.0, 0.0, 0.0);
    for cell in c0..=c1 {
        let lo = if cell == c0 { w0 } else { 0.0 };
        let hi = if cell == c1 { w1 } else { 1.0 };
        if hi <= lo {
            continue;
        }
        let (pe, pg, pv) = partial_cell_transition(fr, cell, lo, hi, g[cell], g[cell + 1], sub);
        e *= pe;
        gi = gi * pe + pg;
        v = v * pe * pe + pv;
    }
    Ok((e, gi, v))
}

pub fn mle_discrete_joint(
    obs: &DiscreteObservations,
    fr: &FollowerRiccati,
    gp: &GProfile,
    model: &FollowerModel,
) -> Result<DiscreteEstimate> {
    mle_discrete_joint_with(obs, fr, gp, model, 16, DEFAULT_DEGENERACY_FLOOR)
}

/// Joint maximum likelihood of `(M, sigma^2)` from the exact Gaussian
/// transitions between observation times. `sub` is the number of Simpson
/// pieces per fine-grid cell used for the interval integrals.
pub fn mle_discrete_joint_with(
    obs: &DiscreteObservations,
    fr: &FollowerRiccati,
    gp: &GProfile,
    model: &FollowerModel,
    sub: usize,
    floor: f64,
) -> Result<DiscreteEstimate> {
    fr.grid.check_len(gp.g.len(), "g profile")?;
    let gain = model.drift_gain();
    let parts: Vec<(f64, f64, f64)> = obs
        .times
        .windows(2)
        .map(|w| interval_transition(fr, &gp.g, w[0], w[1], sub))
        .collect::<Result<_>>()?;
    let mut num = 0.0;
    let mut info = 0.0;
    for (i, (e, g, v)) in parts.iter().enumerate() {
        num += (obs.values[i + 1] - obs.values[i] * e) * g / v;
        info += g * g / v;
    }
    if !(info >= floor) {
        return Err(Error::DegeneratePath {
            precision: info,
            floor,
        });
    }
    let m_hat = -num / (gain * info);
    let mut ss = 0.0;
    for (i, (e, g, v)) in parts.iter().enumerate() {
        let r = obs.values[i + 1] - obs.values[i] * e + m_hat * gain * g;
        ss += r * r / v;
    }
    Ok(DiscreteEstimate {
        m_hat,
        sigma2_hat: ss / parts.len() as f64,
        information: info,
    })
}

/// Realized quadratic variation per unit time, `sum (dX)^2 / T`.
pub fn sigma_quadratic_variation(fpath: &FollowerPath) -> f64 {
    let qv: f64 = fpath
        .x
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    qv / fpath.grid.horizon()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub episodes: usize,
    /// Variance threshold of the stopping rule; `None` never stops.
    pub threshold: Option<f64>,
    pub scheme: FollowerScheme,
    pub floor: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            episodes: 30,
            threshold: None,
            scheme: FollowerScheme::Euler,
            floor: DEFAULT_DEGENERACY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// `None` when the episode's precision fell below the floor and it was
    /// left out of the aggregate.
    pub m_hat: Option<f64>,
    pub precision: f64,
    pub m_bar: f64,
    pub total_precision: f64,
    pub variance_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub state: MultiPeriodState,
    pub records: Vec<EpisodeRecord>,
    /// First episode (1-based) at which the stopping rule fired.
    pub stopped_at: Option<usize>,
}

/// Repeated episodes on a common horizon: each episode starts both agents
/// where the previous one ended, draws fresh noise, and folds the new
/// estimate into the precision-weighted aggregate. All episodes run to the
/// configured count; the stopping rule is only recorded.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes<P: Policy>(
    leader: &LeaderModel,
    follower: &FollowerModel,
    fr: &FollowerRiccati,
    coeffs: &DerivedCoefficients,
    policy: &P,
    rng: &RngContract,
    cfg: &EpisodeConfig,
) -> Result<EpisodeRun> {
    if cfg.episodes == 0 {
        return Err(Error::invalid("need at least one episode"));
    }
    let grid = coeffs.grid;
    let n = grid.n_steps();
    let (mut xl0, mut xf0) = (leader.x0, follower.x0);
    let mut state = MultiPeriodState::new();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut stopped_at = None;
    for e in 0..cfg.episodes {
        let xi_l = rng.normals(StreamPurpose::LeaderNoise, e as u64, n);
        let lpath = simulate_leader_with_noise(leader, coeffs, policy, &grid, xl0, &xi_l)?;
        let gp = compute_g(fr, follower, &lpath.trajectory())?;
        let b: Vec<f64> = gp.g.iter().map(|g| follower.dilation * g).collect();
        let xi_f = rng.normals(StreamPurpose::FollowerNoise, e as u64, n);
        let fpath = simulate_follower_with_noise(follower, fr, &b, &grid, xf0, &xi_f, cfg.scheme)?;
        let m_hat = match mle_continuous_with_floor(&fpath, &gp, fr, follower, cfg.floor) {
            Ok(report) => {
                state = multi_period_update(&state, &report);
                Some(report.m_hat)
            }
            Err(Error::DegeneratePath { .. }) => None,
            Err(other) => return Err(other),
        };
        if stopped_at.is_none() && state.episodes > 0 {
            if let Some(th) = cfg.threshold {
                if stopping_rule(&state, th, follower)? == StopDecision::Stop {
                    stopped_at = Some(e + 1);
                }
            }
        }
        records.push(EpisodeRecord {
            episode: e + 1,
            m_hat,
            precision: gp.precision,
            m_bar: state.m_bar,
            total_precision: state.total_precision,
            variance_proxy: state.variance_proxy(follower),
        });
        xl0 = lpath.x[n];
        xf0 = fpath.x[n];
    }
    Ok(EpisodeRun {
        state,
        records,
        stopped_at,
    })
}
