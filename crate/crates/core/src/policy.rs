//! Leader control laws, the follower's Gaussian policy, and a derivative-free
//! optimizer for path-dependent leader policies.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FollowerModel, LeaderModel};
use crate::riccati::{DerivedCoefficients, FollowerRiccati, LeaderRiccati};
use crate::rng::{RngContract, StreamPurpose};
use crate::simulate::{estimate_objectives_with_noise, EnsembleOptions, ObjectiveEstimate};

/// What a leader policy sees at node `j`.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub node: usize,
    pub t: f64,
    pub horizon: f64,
    /// `X[0..=j]`.
    pub history: &'a [f64],
    pub y: f64,
    pub z: f64,
}

impl Observation<'_> {
    #[inline]
    pub fn x(&self) -> f64 {
        self.history[self.node]
    }
}

/// A closed-loop leader control law. `Memory` is per-path scratch state
/// (for example a recurrent hidden vector) created fresh at node 0.
pub trait Policy: Sync {
    type Memory: Send;

    fn reset(&self) -> Self::Memory;

    fn control(&self, memory: &mut Self::Memory, obs: &Observation<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    type Memory = ();

    fn reset(&self) {}

    fn control(&self, _: &mut (), _: &Observation<'_>) -> Result<f64> {
        Ok(0.0)
    }
}

/// Memoryless policy from a plain function of the observation.
pub struct ClosurePolicy<F>(F);

impl<F: Fn(&Observation<'_>) -> f64 + Sync> ClosurePolicy<F> {
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F: Fn(&Observation<'_>) -> f64 + Sync> Policy for ClosurePolicy<F> {
    type Memory = ();

    fn reset(&self) {}

    fn control(&self, _: &mut (), obs: &Observation<'_>) -> Result<f64> {
        Ok((self.0)(obs))
    }
}

/// Optimal leader feedback on the augmented state `Psi = (X, Y, Z)`.
#[derive(Debug, Clone)]
pub struct RiccatiPolicy {
    pub lr: LeaderRiccati,
    pub b: f64,
    pub r: f64,
}

impl RiccatiPolicy {
    pub fn new(lr: LeaderRiccati, leader: &LeaderModel) -> Self {
        Self {
            lr,
            b: leader.b,
            r: leader.r,
        }
    }
}

/// `u = -(B_L / R_L) (2 (L_j Psi)_1 + M_1(t_j))`.
pub fn riccati_policy_eval(policy: &RiccatiPolicy, j: usize, psi: [f64; 3]) -> Result<f64> {
    let lr = &policy.lr;
    if j >= lr.l.len() {
        return Err(Error::invalid(format!(
            "node {j} outside a grid of {} nodes",
            lr.l.len()
        )));
    }
    let row = lr.l[j][0];
    let l_psi = row[0] * psi[0] + row[1] * psi[1] + row[2] * psi[2];
    Ok(-(policy.b / policy.r) * (2.0 * l_psi + lr.m[j][0]))
}

impl Policy for RiccatiPolicy {
    type Memory = ();

    fn reset(&self) {}

    fn control(&self, _: &mut (), obs: &Observation<'_>) -> Result<f64> {
        riccati_policy_eval(self, obs.node, [obs.x(), obs.y, obs.z])
    }
}

/// The follower's optimal randomized policy for a given leader path.
#[derive(Debug, Clone)]
pub struct FollowerPolicyLaw<'a> {
    pub fr: &'a FollowerRiccati,
    pub b: &'a [f64],
    pub model: FollowerModel,
}

impl FollowerPolicyLaw<'_> {
    /// `(mean, variance)` of the Gaussian action at node `j` and state `x`.
    pub fn moments(&self, j: usize, x: f64) -> (f64, f64) {
        let m = &self.model;
        (
            -(m.b / m.r) * (2.0 * self.fr.a[j] * x + self.b[j]),
            m.policy_variance(),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, j: usize, x: f64, rng: &mut R) -> f64 {
        let (mean, var) = self.moments(j, x);
        Normal::new(mean, var.sqrt())
            .expect("positive variance")
            .sample(rng)
    }
}

pub fn follower_policy_moments(law: &FollowerPolicyLaw<'_>, j: usize, x: f64) -> (f64, f64) {
    law.moments(j, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Number of lagged states fed to the policy.
    pub window: usize,
    /// Geometric weight `gamma` of the lagged states.
    pub decay: f64,
    pub hidden: usize,
    /// Width of the first output stage; the second maps it to a scalar.
    pub output_width: usize,
    /// Fixed gain applied to the state features before the first layer.
    pub input_scale: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            window: 3,
            decay: 0.9,
            hidden: 16,
            output_width: 16,
            input_scale: 10.0,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("feature decay must lie in (0, 1]"));
        }
        if self.hidden == 0 || self.output_width == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::invalid("input scale must be positive"));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        1 + 2 * self.window + 3
    }

    pub fn n_params(&self) -> usize {
        let (d, h, o) = (self.n_features(), self.hidden, self.output_width);
        2 * (h * d + h * h + h) + o * (h + d) + o + o + 1
    }
}

/// Raw feature vector at the last node of `history`: current state, decayed
/// lags, plain lags (oldest first) and the three time features. Missing
/// lags are padded with `X[0]`.
pub fn param_features(arch: &Architecture, history: &[f64], t: f64, horizon: f64) -> Vec<f64> {
    let j = history.len() - 1;
    let w = arch.window;
    let mut out = Vec::with_capacity(arch.n_features());
    out.push(history[j]);
    for lag in (1..=w).rev() {
        out.push(arch.decay.powi(lag as i32) * history[j.saturating_sub(lag)]);
    }
    for lag in (1..=w).rev() {
        out.push(history[j.saturating_sub(lag)]);
    }
    let s = t / horizon;
    out.extend([
        s,
        (std::f64::consts::PI * s).sin(),
        (std::f64::consts::PI * s).cos(),
    ]);
    out
}

/// Gated recurrent policy followed by two affine output stages.
///
/// Hidden update: `g = sigmoid(Wg x + Ug s + bg)`, `c = tanh(Wc x + Uc s + bc)`,
/// `s <- (1 - g) s + g c`; output `w2 . tanh(W1 [s; x] + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPolicy {
    pub architecture: Architecture,
    pub theta: Vec<f64>,
}

struct Layout {
    wg: usize,
    ug: usize,
    bg: usize,
    wc: usize,
    uc: usize,
    bc: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl Layout {
    fn of(a: &Architecture) -> Self {
        let (d, h, o) = (a.n_features(), a.hidden, a.output_width);
        let wg = 0;
        let ug = wg + h * d;
        let bg = ug + h * h;
        let wc = bg + h;
        let uc = wc + h * d;
        let bc = uc + h * h;
        let w1 = bc + h;
        let b1 = w1 + o * (h + d);
        let w2 = b1 + o;
        let b2 = w2 + o;
        Self {
            wg,
            ug,
            bg,
            wc,
            uc,
            bc,
            w1,
            b1,
            w2,
            b2,
        }
    }
}

impl ParamPolicy {
    pub fn new(architecture: Architecture, theta: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if theta.len() != architecture.n_params() {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                architecture.n_params(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("policy parameters must be finite"));
        }
        Ok(Self {
            architecture,
            theta,
        })
    }

    pub fn zeros(architecture: Architecture) -> Result<Self> {
        Self::new(architecture, vec![0.0; architecture.n_params()])
    }

    /// Output stages zero, everything else uniform on `[-0.1, 0.1]` from the
    /// policy-initialization stream.
    pub fn initial(architecture: Architecture, rng: &RngContract) -> Result<Self> {
        architecture.validate()?;
        let lay = Layout::of(&architecture);
        let mut stream = rng.stream(StreamPurpose::PolicyInit, 0);
        let dist = Uniform::new_inclusive(-0.1, 0.1).expect("valid range");
        let mut theta: Vec<f64> = (0..architecture.n_params())
            .map(|_| dist.sample(&mut stream))
            .collect();
        for v in &mut theta[lay.w2..] {
            *v = 0.0;
        }
        Self::new(architecture, theta)
    }

    /// Control at the last node of `history`, advancing the hidden state.
    pub fn step(&self, hidden: &mut [f64], history: &[f64], t: f64, horizon: f64) -> Result<f64> {
        let a = &self.architecture;
        let (d, h, o) = (a.n_features(), a.hidden, a.output_width);
        let mut x = param_features(a, history, t, horizon);
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::PolicyEvaluation {
                node: history.len() - 1,
                value: *bad,
            });
        }
        for v in &mut x[..1 + 2 * a.window] {
            *v *= a.input_scale;
        }
        let th = &self.theta;
        let lay = Layout::of(a);
        let affine = |w: usize, u: usize, b: usize, i: usize, s: &[f64]| {
            let mut acc = th[b + i];
            let wr = &th[w + i * d..w + (i + 1) * d];
            acc += wr.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>();
            let ur = &th[u + i * h..u + (i + 1) * h];
            acc + ur.iter().zip(s).map(|(p, q)| p * q).sum::<f64>()
        };
        let prev = hidden.to_vec();
        for i in 0..h {
            let gate = 1.0 / (1.0 + (-affine(lay.wg, lay.ug, lay.bg, i, &prev)).exp());
            let cand = affine(lay.wc, lay.uc, lay.bc, i, &prev).tanh();
            hidden[i] = (1.0 - gate) * prev[i] + gate * cand;
        }
        let mut u = th[lay.b2];
        for i in 0..o {
            let row = &th[lay.w1 + i * (h + d)..lay.w1 + (i + 1) * (h + d)];
            let pre = th[lay.b1 + i]
                + row[..h]
                    .iter()
                    .zip(hidden.iter())
                    .map(|(p, q)| p * q)
                    .sum::<f64>()
                + row[h..].iter().zip(&x).map(|(p, q)| p * q).sum::<f64>();
            u += th[lay.w2 + i] * pre.tanh();
        }
        Ok(u)
    }
}

impl Policy for ParamPolicy {
    type Memory = Vec<f64>;

    fn reset(&self) -> Vec<f64> {
        vec![0.0; self.architecture.hidden]
    }

    fn control(&self, memory: &mut Vec<f64>, obs: &Observation<'_>) -> Result<f64> {
        self.step(memory, &obs.history[..=obs.node], obs.t, obs.horizon)
    }
}

/// Evaluates a parameterized policy along a whole path prefix from a fresh
/// hidden state and returns the control at the last node.
pub fn param_policy_eval(
    p: &ParamPolicy,
    prefix: &[f64],
    grid_step: f64,
    horizon: f64,
) -> Result<f64> {
    if prefix.is_empty() {
        return Err(Error::invalid("path prefix must contain the initial state"));
    }
    let mut hidden = p.reset();
    let mut u = 0.0;
    for j in 0..prefix.len() {
        u = p.step(&mut hidden, &prefix[..=j], j as f64 * grid_step, horizon)?;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `J_Var`: primary cost plus weighted mean inverse precision.
    Variance,
    /// `J_I`: primary cost minus weighted Fisher information.
    Fisher,
}

impl Objective {
    pub fn pick(self, e: &ObjectiveEstimate) -> f64 {
        match self {
            Objective::Variance => e.j_var,
            Objective::Fisher => e.j_fisher,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub objective: Objective,
    pub batch_size: usize,
    pub iterations: usize,
    /// Step-size schedule `a_k = a0 / (k + stability)^alpha`.
    pub a0: f64,
    pub stability: f64,
    pub alpha: f64,
    /// Perturbation schedule `c_k = c0 / (k + 1)^gamma`.
    pub c0: f64,
    pub gamma: f64,
    /// First and second moment decay of the normalized update.
    pub beta1: f64,
    pub beta2: f64,
    pub master_seed: u64,
    pub common_random_numbers: bool,
    /// Held-out re-evaluation cadence and size.
    pub eval_every: usize,
    pub eval_paths: usize,
    /// Paths in the final estimate reported for the returned parameters.
    pub final_paths: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Fisher,
            batch_size: 512,
            iterations: 2000,
            a0: 0.05,
            stability: 100.0,
            alpha: 0.602,
            c0: 0.005,
            gamma: 0.101,
            beta1: 0.9,
            beta2: 0.999,
            master_seed: 0,
            common_random_numbers: true,
            eval_every: 50,
            eval_paths: 2048,
            final_paths: 4096,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iteration budget must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if self.eval_every == 0 || self.eval_paths < 2 || self.final_paths < 2 {
            return Err(Error::invalid(
                "evaluation cadence and sizes must be positive",
            ));
        }
        let pos = [self.a0, self.c0, self.alpha, self.gamma];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.stability < 0.0 {
            return Err(Error::invalid(
                "step and perturbation schedules must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("moment decays must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.a0 / (k as f64 + self.stability).powf(self.alpha)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c0 / (k as f64 + 1.0).powf(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Mean of the two perturbed batch objectives.
    pub batch_objective: f64,
    /// Held-out objective of the current parameters, on iterations where it
    /// was evaluated.
    pub heldout: Option<f64>,
    /// Best held-out objective seen so far.
    pub best_heldout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub policy: ParamPolicy,
    pub best_iteration: usize,
    pub trace: Vec<TraceEntry>,
    pub final_estimate: ObjectiveEstimate,
}

fn noise_batch(
    rng: &RngContract,
    purpose: StreamPurpose,
    first: u64,
    count: usize,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|i| rng.normals(purpose, first + i, n_steps))
        .collect()
}

/// SPSA with common random numbers and moment-normalized steps.
///
/// At iteration `k` all coordinates are perturbed by `+-c_k` along a
/// Rademacher direction, the two objectives are estimated on the same
/// frozen batch of leader noise (or two independent batches when common
/// random numbers are off), and the resulting gradient estimate drives an
/// update whose per-coordinate size is `a_k` after normalization by running
/// first and second moments. Every `eval_every` iterations the current
/// parameters are scored on a fixed held-out noise set; the first parameters
/// reaching the lowest held-out score are returned.
pub fn optimize_policy(
    cfg: &OptimizerConfig,
    architecture: Architecture,
    leader: &LeaderModel,
    follower: &FollowerModel,
    coeffs: &DerivedCoefficients,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    leader.validate()?;
    let grid = coeffs.grid;
    let n_steps = grid.n_steps();
    let opts = EnsembleOptions::default();
    let root = RngContract::new(cfg.master_seed);
    let train = root.derive(1);
    let heldout_rng = root.derive(2);
    let final_rng = root.derive(3);
    let heldout = noise_batch(
        &heldout_rng,
        StreamPurpose::LeaderNoise,
        0,
        cfg.eval_paths,
        n_steps,
    );

    let mut policy = ParamPolicy::initial(architecture, &root)?;
    let score = |p: &ParamPolicy, noise: &[Vec<f64>]| -> Result<f64> {
        Ok(cfg.objective.pick(&estimate_objectives_with_noise(
            leader, follower, coeffs, p, noise, opts,
        )?))
    };
    let initial = score(&policy, &heldout).map_err(|e| Error::Initialization(e.to_string()))?;
    if !initial.is_finite() {
        return Err(Error::Initialization(format!(
            "objective at initial parameters is {initial}"
        )));
    }

    let dim = policy.theta.len();
    let mut best = (initial, 0usize, policy.theta.clone());
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut trace = Vec::with_capacity(cfg.iterations);
    for k in 1..=cfg.iterations {
        let ck = cfg.perturbation(k);
        let ak = cfg.step_size(k);
        let mut dir_rng = train.stream(StreamPurpose::Perturbation, k as u64);
        let delta: Vec<f64> = (0..dim)
            .map(|_| if dir_rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let base = (k as u64) * 2 * cfg.batch_size as u64;
        let batch_plus = noise_batch(
            &train,
            StreamPurpose::LeaderNoise,
            base,
            cfg.batch_size,
            n_steps,
        );
        let batch_minus = if cfg.common_random_numbers {
            None
        } else {
            Some(noise_batch(
                &train,
                StreamPurpose::LeaderNoise,
                base + cfg.batch_size as u64,
                cfg.batch_size,
                n_steps,
            ))
        };
        let shifted = |sign: f64| ParamPolicy {
            architecture,
            theta: policy
                .theta
                .iter()
                .zip(&delta)
                .map(|(t, d)| t + sign * ck * d)
                .collect(),
        };
        let j_plus = score(&shifted(1.0), &batch_plus)?;
        let j_minus = score(
            &shifted(-1.0),
            batch_minus.as_deref().unwrap_or(&batch_plus),
        )?;
        let diff = (j_plus - j_minus) / (2.0 * ck);
        if diff.is_finite() {
            let (b1, b2) = (cfg.beta1, cfg.beta2);
            let c1 = 1.0 - b1.powi(k as i32);
            let c2 = 1.0 - b2.powi(k as i32);
            for i in 0..dim {
                let g = diff * delta[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                policy.theta[i] -= ak * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-12);
            }
        }
        let heldout_score = if k % cfg.eval_every == 0 || k == cfg.iterations {
            let s = score(&policy, &heldout)?;
            if s < best.0 {
                best = (s, k, policy.theta.clone());
            }
            Some(s)
        } else {
            None
        };
        trace.push(TraceEntry {
            iteration: k,
            batch_objective: 0.5 * (j_plus + j_minus),
            heldout: heldout_score,
            best_heldout: best.0,
        });
    }

    let policy = ParamPolicy::new(architecture, best.2)?;
    let final_noise = noise_batch(
        &final_rng,
        StreamPurpose::LeaderNoise,
        0,
        cfg.final_paths,
        n_steps,
    );
    let final_estimate =
        estimate_objectives_with_noise(leader, follower, coeffs, &policy, &final_noise, opts)?;
    Ok(OptimizationResult {
        policy,
        best_iteration: best.1,
        trace,
        final_estimate,
    })
}
