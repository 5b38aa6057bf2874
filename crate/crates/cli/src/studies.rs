//! The experiment studies. Each returns a typed report; `into_result`
//! turns it into CSV tables plus a JSON summary.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use stackinfer_core::infer::{
    mle_continuous, mle_discrete_joint_with, run_episodes, DiscreteObservations, EpisodeConfig,
    EpisodeRun,
};
use stackinfer_core::policy::{
    optimize_policy, OptimizerConfig, ParamPolicy, Policy, RiccatiPolicy, TraceEntry,
};
use stackinfer_core::riccati::{
    compute_coefficients, solve_follower_a, solve_leader_system, wellposedness_bound,
    DerivedCoefficients, FollowerRiccati,
};
use stackinfer_core::simulate::{
    compute_g, path_outcome, simulate_follower_with_noise, simulate_leader_with_noise,
    summarize_outcomes, AugmentedLeaderPath, EnsembleOptions, FollowerPath, FollowerScheme,
    ObjectiveEstimate, PathOutcome,
};
use stackinfer_core::{Error, FollowerModel, LeaderModel, RngContract, StreamPurpose, TimeGrid};

use crate::config::{self, ExperimentConfig, Study, SweepAxis};
use crate::output::{table, StudyResult};
use crate::Result;

/// Salts for the independent random families a study may draw from.
const EVAL_SALT: u64 = 200;
const OPTIMIZER_SALT: u64 = 100;

/// Everything a study needs from the config, resolved once.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: TimeGrid,
    pub follower: FollowerModel,
    pub leader: LeaderModel,
    pub rng: RngContract,
    pub opts: EnsembleOptions,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            grid: cfg.grid()?,
            follower: cfg.follower,
            leader: cfg.leader.clone(),
            rng: RngContract::new(cfg.rng.master_seed),
            opts: EnsembleOptions {
                bit_exact: cfg.rng.bit_exact,
                ..EnsembleOptions::default()
            },
        })
    }

    pub fn seed(&self) -> u64 {
        self.rng.master_seed
    }

    /// Follower Riccati solution and the coefficient functions it induces.
    pub fn base(&self) -> Result<Base> {
        let fr = solve_follower_a(&self.follower, &self.grid)?;
        let coeffs = compute_coefficients(&fr, &self.follower, &self.grid)?;
        Ok(Base { fr, coeffs })
    }

    fn n(&self) -> usize {
        self.grid.n_steps()
    }
}

pub struct Base {
    pub fr: FollowerRiccati,
    pub coeffs: DerivedCoefficients,
}

pub fn riccati_policy(leader: &LeaderModel, base: &Base) -> Result<RiccatiPolicy> {
    let lr = solve_leader_system(leader, &base.coeffs, &base.coeffs.grid)?;
    Ok(RiccatiPolicy::new(lr, leader))
}

/// Per-path outcomes over leader-noise streams `0..n` of `rng`.
pub fn path_outcomes<P: Policy>(
    setup: &Setup,
    leader: &LeaderModel,
    base: &Base,
    policy: &P,
    rng: &RngContract,
    n: usize,
) -> Result<Vec<PathOutcome>> {
    let outcomes = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::LeaderNoise, i, setup.n());
            let path = simulate_leader_with_noise(
                leader,
                &base.coeffs,
                policy,
                &setup.grid,
                leader.x0,
                &xi,
            )?;
            path_outcome(leader, &base.coeffs, &path)
        })
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    Ok(outcomes)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Leader path `i` and the follower's best response to it.
pub struct PathPair {
    pub leader: AugmentedLeaderPath,
    pub follower: FollowerPath,
}

pub fn sample_pair<P: Policy>(
    setup: &Setup,
    leader: &LeaderModel,
    base: &Base,
    policy: &P,
    rng: &RngContract,
    i: u64,
) -> Result<PathPair> {
    let n = setup.n();
    let xi = rng.normals(StreamPurpose::LeaderNoise, i, n);
    let lp = simulate_leader_with_noise(leader, &base.coeffs, policy, &setup.grid, leader.x0, &xi)?;
    let gp = compute_g(&base.fr, &setup.follower, &lp.trajectory())?;
    let b: Vec<f64> = gp.g.iter().map(|g| setup.follower.dilation * g).collect();
    let xf = rng.normals(StreamPurpose::FollowerNoise, i, n);
    let fp = simulate_follower_with_noise(
        &setup.follower,
        &base.fr,
        &b,
        &setup.grid,
        setup.follower.x0,
        &xf,
        FollowerScheme::Euler,
    )?;
    Ok(PathPair {
        leader: lp,
        follower: fp,
    })
}

fn optimizer_for(cfg: &OptimizerConfig, root: &RngContract, salt: u64) -> OptimizerConfig {
    OptimizerConfig {
        master_seed: root.derive(salt).derive(cfg.master_seed).master_seed,
        ..*cfg
    }
}

fn fisher_stderr(setup: &Setup, outcomes: &[PathOutcome]) -> f64 {
    let fi: Vec<f64> = outcomes
        .iter()
        .map(|o| setup.follower.information_scale() * o.precision)
        .collect();
    mean_se(&fi).1
}

pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let setup = Setup::from_config(cfg)?;
    match &cfg.study {
        Study::BenchmarkCompare(s) => benchmark_compare(&setup, s)?.into_result(),
        Study::TradeoffSweep(s) => tradeoff_sweep(&setup, s)?.into_result(),
        Study::ObjectiveCompare(s) => objective_compare(&setup, s)?.into_result(),
        Study::EstimatorStudy(s) => estimator_study(&setup, s)?.into_result(),
        Study::MultiPeriod(s) => multi_period(&setup, s)?.into_result(),
        Study::DiscreteConvergence(s) => discrete_convergence(&setup, s)?.into_result(),
        Study::Wellposedness(s) => wellposedness(&setup, s)?.into_result(),
    }
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTrajectoryRow {
    pub path: u64,
    pub node: usize,
    pub t: f64,
    pub target: f64,
    pub x_riccati: f64,
    pub u_riccati: f64,
    pub x_follower_riccati: f64,
    pub x_param: f64,
    pub u_param: f64,
    pub x_follower_param: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub inference_weight: f64,
    pub riccati: ObjectiveEstimate,
    pub param: ObjectiveEstimate,
    /// Mean over common paths of `J_I(param) - J_I(riccati)`, and its standard error.
    pub paired_gap: f64,
    pub paired_gap_stderr: f64,
    pub optimizer_seed: u64,
    pub best_iteration: usize,
    pub policy: ParamPolicy,
    pub trace: Vec<TraceEntry>,
    pub trajectories: Vec<BenchmarkTrajectoryRow>,
    pub seed: u64,
}

impl BenchmarkReport {
    /// `(J_I(param) - J_I(riccati)) / |J_I(riccati)|`; positive means the benchmark is better.
    pub fn relative_gap(&self) -> f64 {
        self.paired_gap / self.riccati.j_fisher.abs()
    }

    fn into_result(self) -> Result<StudyResult> {
        let results = json!({
            "inference_weight": self.inference_weight,
            "riccati": self.riccati,
            "param": self.param,
            "paired_gap": self.paired_gap,
            "paired_gap_stderr": self.paired_gap_stderr,
            "relative_gap": self.relative_gap(),
            "optimizer_seed": self.optimizer_seed,
            "best_iteration": self.best_iteration,
            "architecture": self.policy.architecture,
            "theta": self.policy.theta,
        });
        Ok(StudyResult {
            study: "benchmark-compare",
            results,
            tables: vec![
                table("benchmark_trajectories.csv", &self.trajectories)?,
                table("benchmark_trace.csv", &self.trace)?,
            ],
        })
    }
}

pub fn benchmark_compare(setup: &Setup, s: &config::BenchmarkCompare) -> Result<BenchmarkReport> {
    let base = setup.base()?;
    let leader = setup
        .leader
        .clone()
        .with_inference_weight(s.inference_weight);
    let ric = riccati_policy(&leader, &base)?;
    let ocfg = optimizer_for(&s.optimizer, &setup.rng, OPTIMIZER_SALT);
    let opt = optimize_policy(
        &ocfg,
        s.architecture,
        &leader,
        &setup.follower,
        &base.coeffs,
    )?;

    let eval = setup.rng.derive(EVAL_SALT);
    let ric_out = path_outcomes(setup, &leader, &base, &ric, &eval, s.eval_paths)?;
    let par_out = path_outcomes(setup, &leader, &base, &opt.policy, &eval, s.eval_paths)?;
    let riccati = summarize_outcomes(&leader, &setup.follower, &ric_out, setup.opts)?;
    let param = summarize_outcomes(&leader, &setup.follower, &par_out, setup.opts)?;
    let weight = leader.inference_weight * setup.follower.information_scale();
    let ji = |o: &PathOutcome| o.primary_cost - weight * o.precision;
    let diffs: Vec<f64> = par_out
        .iter()
        .zip(&ric_out)
        .map(|(p, r)| ji(p) - ji(r))
        .collect();
    let (paired_gap, paired_gap_stderr) = mean_se(&diffs);

    let target = leader.target.sample(&setup.grid)?;
    let mut trajectories = Vec::new();
    for i in 0..s.trajectory_paths as u64 {
        let a = sample_pair(setup, &leader, &base, &ric, &eval, i)?;
        let b = sample_pair(setup, &leader, &base, &opt.policy, &eval, i)?;
        for j in 0..setup.grid.n_nodes() {
            trajectories.push(BenchmarkTrajectoryRow {
                path: i,
                node: j,
                t: setup.grid.node(j),
                target: target[j],
                x_riccati: a.leader.x[j],
                u_riccati: a.leader.u[j],
                x_follower_riccati: a.follower.x[j],
                x_param: b.leader.x[j],
                u_param: b.leader.u[j],
                x_follower_param: b.follower.x[j],
            });
        }
    }
    Ok(BenchmarkReport {
        inference_weight: leader.inference_weight,
        riccati,
        param,
        paired_gap,
        paired_gap_stderr,
        optimizer_seed: ocfg.master_seed,
        best_iteration: opt.best_iteration,
        policy: opt.policy,
        trace: opt.trace,
        trajectories,
        seed: setup.seed(),
    })
}

// ----------------------------------------------------------------- tradeoff

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub ratio: f64,
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    #[serde(rename = "Q_L")]
    pub q_l: f64,
    pub mean_fisher: f64,
    pub mean_primary_cost: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mean_fisher_stderr: f64,
    pub mean_control_effort: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTrajectoryRow {
    pub ratio: f64,
    pub path: u64,
    pub node: usize,
    pub t: f64,
    pub target: f64,
    pub x_leader: f64,
    pub u_leader: f64,
    pub x_follower: f64,
}

#[derive(Debug, Clone)]
pub struct TradeoffReport {
    pub rows: Vec<SweepRow>,
    pub trajectories: Vec<SweepTrajectoryRow>,
    pub vary: SweepAxis,
}

impl TradeoffReport {
    pub fn fisher(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_fisher).collect()
    }

    fn into_result(self) -> Result<StudyResult> {
        let fisher = self.fisher();
        let decreasing = fisher.windows(2).all(|w| w[1] < w[0]);
        let results =
            json!({ "vary": self.vary, "mean_fisher": fisher, "strictly_decreasing": decreasing });
        Ok(StudyResult {
            study: "tradeoff-sweep",
            results,
            tables: vec![
                table("tradeoff_sweep.csv", &self.rows)?,
                table("tradeoff_trajectories.csv", &self.trajectories)?,
            ],
        })
    }
}

pub fn tradeoff_sweep(setup: &Setup, s: &config::TradeoffSweep) -> Result<TradeoffReport> {
    let base = setup.base()?;
    let mut rows = Vec::with_capacity(s.ratios.len());
    let mut trajectories = Vec::new();
    for &ratio in &s.ratios {
        let mut leader = setup.leader.clone();
        match s.vary {
            SweepAxis::PrimaryWeight => {
                leader.inference_weight = s.inference_weight;
                leader.q = ratio * s.inference_weight;
            }
            SweepAxis::InferenceWeight => leader.inference_weight = leader.q / ratio,
        }
        let policy = riccati_policy(&leader, &base)?;
        let outcomes = path_outcomes(setup, &leader, &base, &policy, &setup.rng, s.n_paths)?;
        let est = summarize_outcomes(&leader, &setup.follower, &outcomes, setup.opts)?;
        rows.push(SweepRow {
            ratio,
            lambda_l: leader.inference_weight,
            q_l: leader.q,
            mean_fisher: est.mean_fisher,
            mean_primary_cost: est.j_primary,
            n_paths: s.n_paths,
            seed: setup.seed(),
            mean_fisher_stderr: fisher_stderr(setup, &outcomes),
            mean_control_effort: est.mean_control_effort,
        });
        let target = leader.target.sample(&setup.grid)?;
        for i in 0..s.trajectory_paths as u64 {
            let p = sample_pair(setup, &leader, &base, &policy, &setup.rng, i)?;
            for j in 0..setup.grid.n_nodes() {
                trajectories.push(SweepTrajectoryRow {
                    ratio,
                    path: i,
                    node: j,
                    t: setup.grid.node(j),
                    target: target[j],
                    x_leader: p.leader.x[j],
                    u_leader: p.leader.u[j],
                    x_follower: p.follower.x[j],
                });
            }
        }
    }
    Ok(TradeoffReport {
        rows,
        trajectories,
        vary: s.vary,
    })
}

// -------------------------------------------------------- objective compare

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveRow {
    pub lambda_var: f64,
    pub lambda_i: f64,
    pub fisher_var: f64,
    pub fisher_i: f64,
    pub effort_var: f64,
    pub effort_i: f64,
    pub primary_cost_var: f64,
    pub primary_cost_i: f64,
    pub var_uses_less_effort: bool,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveTrajectoryRow {
    pub lambda_var: f64,
    pub lambda_i: f64,
    pub path: u64,
    pub node: usize,
    pub t: f64,
    pub target: f64,
    pub x_var: f64,
    pub u_var: f64,
    pub x_i: f64,
    pub u_i: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    pub rows: Vec<ObjectiveRow>,
    pub trajectories: Vec<ObjectiveTrajectoryRow>,
    pub optimizer_seeds: Vec<u64>,
    pub best_iterations: Vec<usize>,
}

impl ObjectiveReport {
    fn into_result(self) -> Result<StudyResult> {
        let results = json!({
            "rows": self.rows,
            "optimizer_seeds": self.optimizer_seeds,
            "best_iterations": self.best_iterations,
        });
        Ok(StudyResult {
            study: "objective-compare",
            results,
            tables: vec![
                table("objective_compare.csv", &self.rows)?,
                table("objective_trajectories.csv", &self.trajectories)?,
            ],
        })
    }
}

pub fn objective_compare(setup: &Setup, s: &config::ObjectiveCompare) -> Result<ObjectiveReport> {
    let base = setup.base()?;
    let eval = setup.rng.derive(EVAL_SALT);
    let mut report = ObjectiveReport {
        rows: Vec::new(),
        trajectories: Vec::new(),
        optimizer_seeds: Vec::new(),
        best_iterations: Vec::new(),
    };
    for (idx, &(lambda_var, lambda_i)) in s.tuples.iter().enumerate() {
        let var_leader = setup.leader.clone().with_inference_weight(lambda_var);
        let i_leader = setup.leader.clone().with_inference_weight(lambda_i);
        let ocfg = optimizer_for(&s.optimizer, &setup.rng, OPTIMIZER_SALT + idx as u64);
        let opt = optimize_policy(
            &ocfg,
            s.architecture,
            &var_leader,
            &setup.follower,
            &base.coeffs,
        )?;
        let ric = riccati_policy(&i_leader, &base)?;
        let var_out = path_outcomes(setup, &var_leader, &base, &opt.policy, &eval, s.eval_paths)?;
        let i_out = path_outcomes(setup, &i_leader, &base, &ric, &eval, s.eval_paths)?;
        let ev = summarize_outcomes(&var_leader, &setup.follower, &var_out, setup.opts)?;
        let ei = summarize_outcomes(&i_leader, &setup.follower, &i_out, setup.opts)?;
        report.rows.push(ObjectiveRow {
            lambda_var,
            lambda_i,
            fisher_var: ev.mean_fisher,
            fisher_i: ei.mean_fisher,
            effort_var: ev.mean_control_effort,
            effort_i: ei.mean_control_effort,
            primary_cost_var: ev.j_primary,
            primary_cost_i: ei.j_primary,
            var_uses_less_effort: ev.mean_control_effort < ei.mean_control_effort,
            n_paths: s.eval_paths,
            seed: setup.seed(),
        });
        report.optimizer_seeds.push(ocfg.master_seed);
        report.best_iterations.push(opt.best_iteration);

        let target = setup.leader.target.sample(&setup.grid)?;
        for i in 0..s.trajectory_paths as u64 {
            let a = sample_pair(setup, &var_leader, &base, &opt.policy, &eval, i)?;
            let b = sample_pair(setup, &i_leader, &base, &ric, &eval, i)?;
            for j in 0..setup.grid.n_nodes() {
                report.trajectories.push(ObjectiveTrajectoryRow {
                    lambda_var,
                    lambda_i,
                    path: i,
                    node: j,
                    t: setup.grid.node(j),
                    target: target[j],
                    x_var: a.leader.x[j],
                    u_var: a.leader.u[j],
                    x_i: b.leader.x[j],
                    u_i: b.leader.u[j],
                });
            }
        }
    }
    Ok(report)
}

// --------------------------------------------------------- estimator study

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorRow {
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    pub precision: f64,
    pub cond_variance: f64,
    pub sample_variance: f64,
    pub mean_m_hat: f64,
    pub bias: f64,
    pub bias_stderr: f64,
    pub n_replays: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayRow {
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    pub replay: u64,
    pub m_hat: f64,
}

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub rows: Vec<EstimatorRow>,
    pub replays: Vec<ReplayRow>,
}

impl EstimatorReport {
    fn into_result(self) -> Result<StudyResult> {
        let results = json!({ "rows": self.rows });
        Ok(StudyResult {
            study: "estimator-study",
            results,
            tables: vec![
                table("estimator_study.csv", &self.rows)?,
                table("estimator_replays.csv", &self.replays)?,
            ],
        })
    }
}

pub fn estimator_study(setup: &Setup, s: &config::EstimatorStudy) -> Result<EstimatorReport> {
    let base = setup.base()?;
    let fm = &setup.follower;
    let n = setup.n();
    let mut report = EstimatorReport {
        rows: Vec::new(),
        replays: Vec::new(),
    };
    for &lam in &s.inference_weights {
        let leader = setup.leader.clone().with_inference_weight(lam);
        let policy = riccati_policy(&leader, &base)?;
        let xi = setup
            .rng
            .normals(StreamPurpose::LeaderNoise, s.leader_path, n);
        let lp = simulate_leader_with_noise(
            &leader,
            &base.coeffs,
            &policy,
            &setup.grid,
            leader.x0,
            &xi,
        )?;
        let gp = compute_g(&base.fr, fm, &lp.trajectory())?;
        let b: Vec<f64> = gp.g.iter().map(|g| fm.dilation * g).collect();
        let m_hat = (0..s.n_replays as u64)
            .into_par_iter()
            .map(|r| {
                let xf = setup.rng.normals(StreamPurpose::FollowerNoise, r, n);
                let fp = simulate_follower_with_noise(
                    fm,
                    &base.fr,
                    &b,
                    &setup.grid,
                    fm.x0,
                    &xf,
                    s.scheme,
                )?;
                Ok(mle_continuous(&fp, &gp, &base.fr, fm)?.m_hat)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_se(&m_hat);
        let sample_variance = se * se * s.n_replays as f64;
        report.rows.push(EstimatorRow {
            lambda_l: lam,
            precision: gp.precision,
            cond_variance: 1.0 / (fm.information_scale() * gp.precision),
            sample_variance,
            mean_m_hat: mean,
            bias: mean - fm.dilation,
            bias_stderr: se,
            n_replays: s.n_replays,
            seed: setup.seed(),
        });
        report
            .replays
            .extend(m_hat.into_iter().enumerate().map(|(r, m)| ReplayRow {
                lambda_l: lam,
                replay: r as u64,
                m_hat: m,
            }));
    }
    Ok(report)
}

// ------------------------------------------------------------- multi-period

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRow {
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    pub replication: usize,
    pub episode: usize,
    pub m_hat: Option<f64>,
    pub precision: f64,
    pub m_bar: f64,
    pub abs_error: f64,
    pub total_precision: f64,
    pub variance_proxy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSummaryRow {
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    pub episode: usize,
    pub rms_error: f64,
    pub mean_variance_proxy: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MultiPeriodReport {
    pub inference_weights: Vec<f64>,
    /// `runs[l][r]`: replication `r` at inference weight `l`.
    pub runs: Vec<Vec<EpisodeRun>>,
    pub dilation: f64,
    pub seed: u64,
}

impl MultiPeriodReport {
    pub fn rms_error(&self, l: usize, episode: usize) -> f64 {
        let runs = &self.runs[l];
        let ss: f64 = runs
            .iter()
            .map(|r| (r.records[episode].m_bar - self.dilation).powi(2))
            .sum();
        (ss / runs.len() as f64).sqrt()
    }

    fn rows(&self) -> (Vec<EpisodeRow>, Vec<EpisodeSummaryRow>) {
        let mut detail = Vec::new();
        let mut summary = Vec::new();
        for (l, runs) in self.runs.iter().enumerate() {
            let lam = self.inference_weights[l];
            for (r, run) in runs.iter().enumerate() {
                detail.extend(run.records.iter().map(|e| EpisodeRow {
                    lambda_l: lam,
                    replication: r,
                    episode: e.episode,
                    m_hat: e.m_hat,
                    precision: e.precision,
                    m_bar: e.m_bar,
                    abs_error: (e.m_bar - self.dilation).abs(),
                    total_precision: e.total_precision,
                    variance_proxy: e.variance_proxy,
                }));
            }
            for (e, rec) in runs[0].records.iter().enumerate() {
                let vp = runs
                    .iter()
                    .map(|r| r.records[e].variance_proxy)
                    .sum::<f64>()
                    / runs.len() as f64;
                summary.push(EpisodeSummaryRow {
                    lambda_l: lam,
                    episode: rec.episode,
                    rms_error: self.rms_error(l, e),
                    mean_variance_proxy: vp,
                    replications: runs.len(),
                    seed: self.seed,
                });
            }
        }
        (detail, summary)
    }

    fn into_result(self) -> Result<StudyResult> {
        let (detail, summary) = self.rows();
        let per_weight: Vec<Value> = self
            .runs
            .iter()
            .enumerate()
            .map(|(l, runs)| {
                let last = runs[0].records.len() - 1;
                json!({
                    "lambda_L": self.inference_weights[l],
                    "final_rms_error": self.rms_error(l, last),
                    "stopped_at": runs.iter().map(|r| r.stopped_at).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(StudyResult {
            study: "multi-period",
            results: json!({ "weights": per_weight }),
            tables: vec![
                table("multi_period.csv", &summary)?,
                table("multi_period_episodes.csv", &detail)?,
            ],
        })
    }
}

pub fn multi_period(setup: &Setup, s: &config::MultiPeriod) -> Result<MultiPeriodReport> {
    let base = setup.base()?;
    let ecfg = EpisodeConfig {
        episodes: s.episodes,
        threshold: s.threshold,
        scheme: s.scheme,
        ..EpisodeConfig::default()
    };
    let mut runs = Vec::with_capacity(s.inference_weights.len());
    for &lam in &s.inference_weights {
        let leader = setup.leader.clone().with_inference_weight(lam);
        let policy = riccati_policy(&leader, &base)?;
        let reps = (0..s.replications as u64)
            .into_par_iter()
            .map(|r| {
                Ok(run_episodes(
                    &leader,
                    &setup.follower,
                    &base.fr,
                    &base.coeffs,
                    &policy,
                    &setup.rng.derive(r),
                    &ecfg,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        runs.push(reps);
    }
    Ok(MultiPeriodReport {
        inference_weights: s.inference_weights.clone(),
        runs,
        dilation: setup.follower.dilation,
        seed: setup.seed(),
    })
}

// ----------------------------------------------------- discrete convergence

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub replication: u64,
    pub level: u32,
    pub n_intervals: usize,
    pub mesh: f64,
    pub m_hat_discrete: f64,
    pub m_hat_continuous: f64,
    pub abs_gap: f64,
    pub sigma2_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummaryRow {
    pub level: u32,
    pub n_intervals: usize,
    pub mesh: f64,
    /// Gap on the first replication's path.
    pub abs_gap_path0: f64,
    pub mean_abs_gap: f64,
    pub mean_sigma2_hat: f64,
    pub sigma2_stderr: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DiscreteReport {
    pub detail: Vec<LevelRow>,
    pub summary: Vec<LevelSummaryRow>,
}

impl DiscreteReport {
    fn into_result(self) -> Result<StudyResult> {
        let results = json!({ "levels": self.summary });
        Ok(StudyResult {
            study: "discrete-convergence",
            results,
            tables: vec![
                table("discrete_convergence.csv", &self.summary)?,
                table("discrete_levels.csv", &self.detail)?,
            ],
        })
    }
}

pub fn discrete_convergence(
    setup: &Setup,
    s: &config::DiscreteConvergence,
) -> Result<DiscreteReport> {
    let base = setup.base()?;
    let fm = &setup.follower;
    let n = setup.n();
    let policy = riccati_policy(&setup.leader, &base)?;
    let xi = setup
        .rng
        .normals(StreamPurpose::LeaderNoise, s.leader_path, n);
    let lp = simulate_leader_with_noise(
        &setup.leader,
        &base.coeffs,
        &policy,
        &setup.grid,
        setup.leader.x0,
        &xi,
    )?;
    let gp = compute_g(&base.fr, fm, &lp.trajectory())?;
    let b: Vec<f64> = gp.g.iter().map(|g| fm.dilation * g).collect();
    let floor = EpisodeConfig::default().floor;

    let per_rep = (0..s.replications as u64)
        .into_par_iter()
        .map(|r| {
            let xf = setup.rng.normals(StreamPurpose::FollowerNoise, r, n);
            let fp =
                simulate_follower_with_noise(fm, &base.fr, &b, &setup.grid, fm.x0, &xf, s.scheme)?;
            let cont = mle_continuous(&fp, &gp, &base.fr, fm)?.m_hat;
            s.levels
                .iter()
                .map(|&k| {
                    let obs = DiscreteObservations::from_path(&fp, n >> k)?;
                    let est =
                        mle_discrete_joint_with(&obs, &base.fr, &gp, fm, s.sub_intervals, floor)?;
                    Ok(LevelRow {
                        replication: r,
                        level: k,
                        n_intervals: 1 << k,
                        mesh: obs.mesh(),
                        m_hat_discrete: est.m_hat,
                        m_hat_continuous: cont,
                        abs_gap: (est.m_hat - cont).abs(),
                        sigma2_hat: est.sigma2_hat,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = s
        .levels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let gaps: Vec<f64> = per_rep.iter().map(|rows| rows[i].abs_gap).collect();
            let s2: Vec<f64> = per_rep.iter().map(|rows| rows[i].sigma2_hat).collect();
            let (mean_s2, se_s2) = mean_se(&s2);
            LevelSummaryRow {
                level: k,
                n_intervals: 1 << k,
                mesh: per_rep[0][i].mesh,
                abs_gap_path0: gaps[0],
                mean_abs_gap: mean_se(&gaps).0,
                mean_sigma2_hat: mean_s2,
                sigma2_stderr: se_s2,
                replications: s.replications,
                seed: setup.seed(),
            }
        })
        .collect();
    Ok(DiscreteReport {
        detail: per_rep.into_iter().flatten().collect(),
        summary,
    })
}

// ------------------------------------------------------------ wellposedness

#[derive(Debug, Clone, Serialize)]
pub struct WellposednessRow {
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    pub q: f64,
    pub beta: f64,
    pub y0: f64,
    pub t_max: f64,
    pub horizon: f64,
    /// First time (integrating backward from the horizon) at which the
    /// system exceeded the blow-up threshold; empty if it never did.
    pub blowup_time: Option<f64>,
    pub solves_on_horizon: bool,
    /// No blow-up within `0.99 * t_max` of the horizon.
    pub solves_within_bound: bool,
    /// The same game posed on `[0, 0.99 * t_max]` solves without blow-up.
    pub solves_reposed: bool,
}

#[derive(Debug, Clone)]
pub struct WellposednessReport {
    pub rows: Vec<WellposednessRow>,
}

impl WellposednessReport {
    fn into_result(self) -> Result<StudyResult> {
        Ok(StudyResult {
            study: "wellposedness",
            results: json!({ "rows": self.rows }),
            tables: vec![table("wellposedness.csv", &self.rows)?],
        })
    }
}

pub fn wellposedness(setup: &Setup, s: &config::Wellposedness) -> Result<WellposednessReport> {
    let base = setup.base()?;
    let horizon = setup.grid.horizon();
    let mut rows = Vec::with_capacity(s.inference_weights.len());
    for &lam in &s.inference_weights {
        let leader = setup.leader.clone().with_inference_weight(lam);
        let bound = wellposedness_bound(&leader, &base.coeffs)?;
        let blowup_time = match solve_leader_system(&leader, &base.coeffs, &setup.grid) {
            Ok(_) => None,
            Err(Error::FiniteTimeBlowUp { time, .. }) => Some(time),
            Err(e) => return Err(e.into()),
        };
        let window_start = horizon - 0.99 * bound.t_max;
        let short = TimeGrid::new(0.99 * bound.t_max, setup.grid.n_steps())?;
        let fr = solve_follower_a(&setup.follower, &short)?;
        let coeffs = compute_coefficients(&fr, &setup.follower, &short)?;
        let solves_reposed = match solve_leader_system(&leader, &coeffs, &short) {
            Ok(_) => true,
            Err(Error::FiniteTimeBlowUp { .. }) => false,
            Err(e) => return Err(e.into()),
        };
        rows.push(WellposednessRow {
            lambda_l: lam,
            q: bound.q,
            beta: bound.beta,
            y0: bound.y0,
            t_max: bound.t_max,
            horizon,
            blowup_time,
            solves_on_horizon: blowup_time.is_none(),
            solves_within_bound: blowup_time.is_none_or(|t| t < window_start),
            solves_reposed,
        });
    }
    Ok(WellposednessReport { rows })
}
