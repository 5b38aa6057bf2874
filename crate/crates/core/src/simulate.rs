//! Forward simulation of both agents and the path functionals built on it.
//!
//! The leader is simulated by Euler-Maruyama together with its augmented
//! states `Y = -int h X` and `Z = int k Y`, updated by the trapezoid rule
//! after every step so path-dependent policies can read them online. The
//! follower is simulated either by Euler-Maruyama or by its exact Gaussian
//! transition.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumtrapz, lerp, trapz, trapz_step, TimeGrid, Trajectory};
use crate::model::{FollowerModel, LeaderModel};
use crate::policy::{Observation, Policy};
use crate::riccati::{DerivedCoefficients, FollowerRiccati};
use crate::rng::{draw_normals, RngContract, StreamPurpose};

/// Precision below which a path is treated as carrying no information.
pub const DEFAULT_DEGENERACY_FLOOR: f64 = 1e-14;

/// Leader path together with the augmented states and the noise that drove it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedLeaderPath {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Control at every node; the last one is evaluated but never applied.
    pub u: Vec<f64>,
    /// Brownian increments `sqrt(h) * xi_j`, one per step.
    pub dw: Vec<f64>,
    pub stream: Option<u64>,
}

impl AugmentedLeaderPath {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.grid, self.x.clone()).expect("simulated path is finite")
    }
}

/// Simulates the leader with standard normals drawn from `rng`.
pub fn simulate_leader<P: Policy, R: Rng + ?Sized>(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
    policy: &P,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<AugmentedLeaderPath> {
    let xi = draw_normals(rng, grid.n_steps());
    simulate_leader_with_noise(leader, coeffs, policy, grid, leader.x0, &xi)
}

/// Simulates the leader from `x0` driven by the given standard normals
/// (one per step).
pub fn simulate_leader_with_noise<P: Policy>(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
    policy: &P,
    grid: &TimeGrid,
    x0: f64,
    xi: &[f64],
) -> Result<AugmentedLeaderPath> {
    if coeffs.grid != *grid {
        return Err(Error::invalid("coefficients computed on a different grid"));
    }
    let n = grid.n_steps();
    if xi.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} normals, got {}",
            xi.len()
        )));
    }
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let mut x = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(n);
    x.push(x0);
    y.push(0.0);
    z.push(0.0);
    let mut hx_int = 0.0;
    let mut memory = policy.reset();
    for j in 0..=n {
        let obs = Observation {
            node: j,
            t: grid.node(j),
            horizon: grid.horizon(),
            history: &x,
            y: y[j],
            z: z[j],
        };
        let uj = policy.control(&mut memory, &obs)?;
        if !uj.is_finite() {
            return Err(Error::PolicyEvaluation { node: j, value: uj });
        }
        u.push(uj);
        if j == n {
            break;
        }
        let d = sqrt_h * xi[j];
        dw.push(d);
        let xn = x[j] + (leader.a * x[j] + leader.b * uj) * h + leader.sigma * d;
        hx_int = trapz_step(hx_int, h, coeffs.h[j] * x[j], coeffs.h[j + 1] * xn);
        let yn = -hx_int;
        let zn = trapz_step(z[j], h, coeffs.k[j] * y[j], coeffs.k[j + 1] * yn);
        x.push(xn);
        y.push(yn);
        z.push(zn);
    }
    Ok(AugmentedLeaderPath {
        grid: *grid,
        x,
        y,
        z,
        u,
        dw,
        stream: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FollowerScheme {
    Euler,
    /// Exact Gaussian transition; interval integrals use composite Simpson
    /// with `sub_intervals` pieces per grid cell.
    ExactTransition {
        sub_intervals: usize,
    },
}

impl FollowerScheme {
    pub fn exact() -> Self {
        FollowerScheme::ExactTransition { sub_intervals: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerPath {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    /// `sqrt(h) * xi_j`. Under the exact scheme this is the standardized
    /// draw scaled by `sqrt(h)`, not the Brownian increment itself.
    pub dw: Vec<f64>,
    pub stream: Option<u64>,
    pub scheme: FollowerScheme,
}

pub fn simulate_follower<R: Rng + ?Sized>(
    model: &FollowerModel,
    fr: &FollowerRiccati,
    b: &[f64],
    grid: &TimeGrid,
    rng: &mut R,
    scheme: FollowerScheme,
) -> Result<FollowerPath> {
    let xi = draw_normals(rng, grid.n_steps());
    simulate_follower_with_noise(model, fr, b, grid, model.x0, &xi, scheme)
}

/// Per-cell quantities of the exact follower transition on `[t_j, t_{j+1}]`:
/// `(e^{F(t_j, t_{j+1})}, int e^{F(u, t_{j+1})} v(u) du, int e^{2 F(u, t_{j+1})} du)`
/// where `v` is linearly interpolated from nodal values.
pub(crate) fn cell_transition(
    fr: &FollowerRiccati,
    cell: usize,
    v0: f64,
    v1: f64,
    sub: usize,
) -> (f64, f64, f64) {
    partial_cell_transition(fr, cell, 0.0, 1.0, v0, v1, sub)
}

/// Same as [`cell_transition`] restricted to the fractional sub-range
/// `[w_lo, w_hi]` of the cell, with `F` measured to the end of that range.
pub(crate) fn partial_cell_transition(
    fr: &FollowerRiccati,
    cell: usize,
    w_lo: f64,
    w_hi: f64,
    v0: f64,
    v1: f64,
    sub: usize,
) -> (f64, f64, f64) {
    let sub = if sub % 2 == 1 { sub + 1 } else { sub.max(2) };
    let h = fr.grid.step();
    let end = fr.cum_f_at(cell, w_hi);
    let span = (w_hi - w_lo) * h;
    let mut drift = 0.0;
    let mut var = 0.0;
    for i in 0..=sub {
        let w = w_lo + (w_hi - w_lo) * i as f64 / sub as f64;
        let weight = if i == 0 || i == sub {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let e = (end - fr.cum_f_at(cell, w)).exp();
        drift += weight * e * lerp(v0, v1, w);
        var += weight * e * e;
    }
    let scale = span / (3.0 * sub as f64);
    (
        (end - fr.cum_f_at(cell, w_lo)).exp(),
        drift * scale,
        var * scale,
    )
}

pub fn simulate_follower_with_noise(
    model: &FollowerModel,
    fr: &FollowerRiccati,
    b: &[f64],
    grid: &TimeGrid,
    x0: f64,
    xi: &[f64],
    scheme: FollowerScheme,
) -> Result<FollowerPath> {
    if fr.grid != *grid {
        return Err(Error::invalid(
            "follower Riccati solved on a different grid",
        ));
    }
    grid.check_len(b.len(), "b")?;
    let n = grid.n_steps();
    if xi.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} normals, got {}",
            xi.len()
        )));
    }
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let gain = model.drift_gain();
    let mut x = Vec::with_capacity(n + 1);
    x.push(x0);
    let dw: Vec<f64> = xi.iter().map(|v| sqrt_h * v).collect();
    for j in 0..n {
        let xn = match scheme {
            FollowerScheme::Euler => {
                x[j] + (fr.f[j] * x[j] - gain * b[j]) * h + model.sigma * dw[j]
            }
            FollowerScheme::ExactTransition { sub_intervals } => {
                let (e, drift, var) = cell_transition(fr, j, b[j], b[j + 1], sub_intervals);
                x[j] * e - gain * drift + model.sigma * var.sqrt() * xi[j]
            }
        };
        x.push(xn);
    }
    Ok(FollowerPath {
        grid: *grid,
        x,
        dw,
        stream: None,
        scheme,
    })
}

/// `g(t, x^L)` at every node together with its trapezoidal `int g^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GProfile {
    pub g: Vec<f64>,
    pub precision: f64,
}

impl GProfile {
    fn from_g(g: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
        let precision = trapz(&sq, grid)?;
        Ok(Self { g, precision })
    }

    /// Left-endpoint sum `sum_{j<n} g_j^2 h`, the precision term of the
    /// Euler-discretized likelihood.
    pub fn riemann_precision(&self, grid: &TimeGrid) -> f64 {
        let h = grid.step();
        self.g[..self.g.len() - 1].iter().map(|v| v * v * h).sum()
    }
}

/// `g(t_j) = -Q_F int_{t_j}^T e^{int_{t_j}^s f} x^L_s ds` by the trapezoid rule.
pub fn compute_g(
    fr: &FollowerRiccati,
    model: &FollowerModel,
    x_l: &Trajectory,
) -> Result<GProfile> {
    let grid = *x_l.grid();
    if grid != fr.grid {
        return Err(Error::invalid(
            "leader path and follower Riccati live on different grids",
        ));
    }
    let hx: Vec<f64> = fr
        .cum_f
        .iter()
        .zip(x_l.values())
        .map(|(c, x)| model.q * c.exp() * x)
        .collect();
    let cum = cumtrapz(&hx, &grid)?;
    let total = cum[grid.n_steps()];
    let g = fr
        .cum_f
        .iter()
        .zip(&cum)
        .map(|(c, s)| -(-c).exp() * (total - s))
        .collect();
    GProfile::from_g(g, &grid)
}

/// Same profile recovered from the leader's augmented state:
/// `g_j = e^{-int_0^{t_j} f} (Y_T - Y_j)`.
pub fn g_from_augmented(
    coeffs: &DerivedCoefficients,
    path: &AugmentedLeaderPath,
) -> Result<GProfile> {
    let n = path.grid.n_steps();
    let y_t = path.y[n];
    let g = coeffs
        .k
        .iter()
        .zip(&path.y)
        .map(|(k, y)| k.sqrt() * (y_t - y))
        .collect();
    GProfile::from_g(g, &path.grid)
}

/// `int g^2 dt` straight from the augmented state, as
/// `trapz(k (Y_T - Y)^2)`.
pub fn path_precision(coeffs: &DerivedCoefficients, path: &AugmentedLeaderPath) -> Result<f64> {
    let n = path.grid.n_steps();
    let y_t = path.y[n];
    let v: Vec<f64> = coeffs
        .k
        .iter()
        .zip(&path.y)
        .map(|(k, y)| k * (y_t - y) * (y_t - y))
        .collect();
    trapz(&v, &path.grid)
}

pub fn evaluate_primary_cost(leader: &LeaderModel, path: &AugmentedLeaderPath) -> Result<f64> {
    let grid = path.grid;
    let target = leader.target.sample(&grid)?;
    let running: Vec<f64> = path
        .x
        .iter()
        .zip(&target)
        .zip(&path.u)
        .map(|((x, f), u)| 0.5 * leader.q * (x - f) * (x - f) + 0.5 * leader.r * u * u)
        .collect();
    let n = grid.n_steps();
    let miss = path.x[n] - target[n];
    Ok(trapz(&running, &grid)? + 0.5 * leader.q_terminal * miss * miss)
}

/// Realized follower cost along one path under the optimal Gaussian policy,
/// with the control second moment and entropy in closed form.
pub fn evaluate_follower_cost(
    model: &FollowerModel,
    fpath: &FollowerPath,
    x_l: &Trajectory,
    fr: &FollowerRiccati,
    b: &[f64],
) -> Result<f64> {
    let grid = fpath.grid;
    if *x_l.grid() != grid || fr.grid != grid {
        return Err(Error::invalid(
            "follower cost inputs live on different grids",
        ));
    }
    grid.check_len(b.len(), "b")?;
    let var = model.policy_variance();
    let entropy = model.policy_entropy();
    let running: Vec<f64> = (0..grid.n_nodes())
        .map(|j| {
            let x = fpath.x[j];
            let miss = x - model.dilation * x_l.values()[j];
            let mean = -(model.b / model.r) * (2.0 * fr.a[j] * x + b[j]);
            0.5 * model.q * miss * miss + 0.5 * model.r * (mean * mean + var)
                - model.entropy_weight * entropy
        })
        .collect();
    trapz(&running, &grid)
}

/// Scalar summaries of one simulated leader path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub primary_cost: f64,
    pub precision: f64,
    /// `int u^2 dt` (trapezoid).
    pub control_effort: f64,
}

pub fn path_outcome(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
    path: &AugmentedLeaderPath,
) -> Result<PathOutcome> {
    let u2: Vec<f64> = path.u.iter().map(|u| u * u).collect();
    Ok(PathOutcome {
        primary_cost: evaluate_primary_cost(leader, path)?,
        precision: path_precision(coeffs, path)?,
        control_effort: trapz(&u2, &path.grid)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Reduce in path-index order so results do not depend on thread count.
    pub bit_exact: bool,
    pub degeneracy_floor: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            bit_exact: true,
            degeneracy_floor: DEFAULT_DEGENERACY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub n_paths: usize,
    pub j_primary: f64,
    pub j_var: f64,
    pub j_fisher: f64,
    /// Standard errors of the per-path contributions to `j_var` / `j_fisher`.
    pub j_var_stderr: f64,
    pub j_fisher_stderr: f64,
    pub mean_fisher: f64,
    pub mean_precision: f64,
    pub mean_inverse_precision: f64,
    pub mean_control_effort: f64,
    /// Paths excluded from `j_var` because their precision fell below the floor.
    pub n_degenerate: usize,
}

/// Monte Carlo estimates of `J_P`, `J_Var` and `J_I` over `n_paths` leader
/// paths; path `i` uses leader-noise stream `i` of `rng`.
pub fn estimate_objectives<P: Policy>(
    leader: &LeaderModel,
    follower: &FollowerModel,
    coeffs: &DerivedCoefficients,
    policy: &P,
    n_paths: usize,
    rng: &RngContract,
    opts: EnsembleOptions,
) -> Result<ObjectiveEstimate> {
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let grid = coeffs.grid;
    let outcomes: Vec<PathOutcome> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::LeaderNoise, i as u64, grid.n_steps());
            let path = simulate_leader_with_noise(leader, coeffs, policy, &grid, leader.x0, &xi)?;
            path_outcome(leader, coeffs, &path)
        })
        .collect::<Result<_>>()?;
    summarize_outcomes(leader, follower, &outcomes, opts)
}

/// Same as [`estimate_objectives`] on caller-supplied standard normals, one
/// row of `n_steps` draws per path.
pub fn estimate_objectives_with_noise<P: Policy>(
    leader: &LeaderModel,
    follower: &FollowerModel,
    coeffs: &DerivedCoefficients,
    policy: &P,
    noise: &[Vec<f64>],
    opts: EnsembleOptions,
) -> Result<ObjectiveEstimate> {
    if noise.is_empty() {
        return Err(Error::invalid("need at least one path"));
    }
    let grid = coeffs.grid;
    let outcomes: Vec<PathOutcome> = noise
        .par_iter()
        .map(|xi| {
            let path = simulate_leader_with_noise(leader, coeffs, policy, &grid, leader.x0, xi)?;
            path_outcome(leader, coeffs, &path)
        })
        .collect::<Result<_>>()?;
    summarize_outcomes(leader, follower, &outcomes, opts)
}

fn mean_and_stderr(values: &[f64], bit_exact: bool) -> (f64, f64) {
    let n = values.len() as f64;
    let sum: f64 = if bit_exact {
        values.iter().sum()
    } else {
        values.par_iter().sum()
    };
    let mean = sum / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = if bit_exact {
        values.iter().map(|v| (v - mean) * (v - mean)).sum()
    } else {
        values.par_iter().map(|v| (v - mean) * (v - mean)).sum()
    };
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

pub fn summarize_outcomes(
    leader: &LeaderModel,
    follower: &FollowerModel,
    outcomes: &[PathOutcome],
    opts: EnsembleOptions,
) -> Result<ObjectiveEstimate> {
    if outcomes.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let lam = leader.inference_weight;
    let scale = follower.information_scale();
    let jp: Vec<f64> = outcomes.iter().map(|o| o.primary_cost).collect();
    let prec: Vec<f64> = outcomes.iter().map(|o| o.precision).collect();
    let effort: Vec<f64> = outcomes.iter().map(|o| o.control_effort).collect();
    let (j_primary, _) = mean_and_stderr(&jp, opts.bit_exact);
    let (mean_precision, _) = mean_and_stderr(&prec, opts.bit_exact);
    let (mean_control_effort, _) = mean_and_stderr(&effort, opts.bit_exact);

    let fisher_term = if lam == 0.0 { 0.0 } else { lam * scale };
    let ji: Vec<f64> = outcomes
        .iter()
        .map(|o| -fisher_term * o.precision + o.primary_cost)
        .collect();
    let (j_fisher, j_fisher_stderr) = mean_and_stderr(&ji, opts.bit_exact);

    let kept: Vec<&PathOutcome> = outcomes
        .iter()
        .filter(|o| o.precision >= opts.degeneracy_floor)
        .collect();
    let n_degenerate = outcomes.len() - kept.len();
    let (mean_inverse_precision, j_var, j_var_stderr) = if kept.is_empty() {
        if lam > 0.0 {
            return Err(Error::DegenerateEnsemble {
                paths: outcomes.len(),
            });
        }
        (f64::NAN, j_primary, mean_and_stderr(&jp, opts.bit_exact).1)
    } else {
        let inv: Vec<f64> = kept.iter().map(|o| 1.0 / o.precision).collect();
        let (mi, _) = mean_and_stderr(&inv, opts.bit_exact);
        let var_term = if lam == 0.0 { 0.0 } else { lam / scale };
        let per_path: Vec<f64> = kept
            .iter()
            .map(|o| var_term / o.precision + o.primary_cost)
            .collect();
        let (_, se) = mean_and_stderr(&per_path, opts.bit_exact);
        (mi, var_term * mi + j_primary, se)
    };

    Ok(ObjectiveEstimate {
        n_paths: outcomes.len(),
        j_primary,
        j_var,
        j_fisher,
        j_var_stderr,
        j_fisher_stderr,
        mean_fisher: scale * mean_precision,
        mean_precision,
        mean_inverse_precision,
        mean_control_effort,
        n_degenerate,
    })
}
