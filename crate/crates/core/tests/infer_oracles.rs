mod common;

use approx::assert_abs_diff_eq;
use common::{mean_and_se, sample_variance};
use rayon::prelude::*;
use stackinfer_core::infer::{
    mle_continuous, mle_discrete_joint, mle_error_representation, run_episodes,
    sigma_quadratic_variation, DiscreteObservations, EpisodeConfig,
};
use stackinfer_core::policy::RiccatiPolicy;
use stackinfer_core::riccati::{
    compute_coefficients, solve_follower_a, solve_leader_system, FollowerRiccati,
};
use stackinfer_core::simulate::{
    compute_g, simulate_follower_with_noise, FollowerScheme, GProfile,
};
use stackinfer_core::{
    FollowerModel, LeaderModel, RngContract, StreamPurpose, TimeGrid, Trajectory,
};

fn fixture(fm: &FollowerModel, n: usize) -> (TimeGrid, FollowerRiccati, GProfile, Vec<f64>) {
    let g = TimeGrid::new(0.5, n).unwrap();
    let fr = solve_follower_a(fm, &g).unwrap();
    let x_l =
        Trajectory::from_fn(g, |t| 0.1 + 0.1 * (4.0 * std::f64::consts::PI * t).sin()).unwrap();
    let gp = compute_g(&fr, fm, &x_l).unwrap();
    let b = gp.g.iter().map(|v| fm.dilation * v).collect();
    (g, fr, gp, b)
}

#[test]
fn noiseless_path_recovers_m_continuously() {
    let mut fm = FollowerModel::paper_defaults();
    fm.sigma = 0.0;
    let (g, fr, gp, b) = fixture(&fm, 5000);
    let zero = vec![0.0; 5000];
    let euler = simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &zero, FollowerScheme::Euler)
        .unwrap();
    assert_abs_diff_eq!(
        mle_continuous(&euler, &gp, &fr, &fm).unwrap().m_hat,
        fm.dilation,
        epsilon = 1e-6
    );
    // exact transitions leave only the O(h) discretization of the estimator
    let exact =
        simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &zero, FollowerScheme::exact())
            .unwrap();
    assert_abs_diff_eq!(
        mle_continuous(&exact, &gp, &fr, &fm).unwrap().m_hat,
        fm.dilation,
        epsilon = 1e-4
    );
}

#[test]
fn replay_reproduces_representation() {
    let fm = FollowerModel::paper_defaults();
    let (g, fr, gp, b) = fixture(&fm, 200);
    let rng = RngContract::new(8);
    for i in 0..50 {
        let xi = rng.normals(StreamPurpose::FollowerNoise, i, 200);
        let p = simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &xi, FollowerScheme::Euler)
            .unwrap();
        let r = mle_continuous(&p, &gp, &fr, &fm).unwrap();
        let rep = mle_error_representation(&gp, &p.dw, &fm, r.riemann_precision);
        assert_abs_diff_eq!(r.m_hat - fm.dilation, rep, epsilon = 1e-10);
    }
}

fn replay_estimates(fm: &FollowerModel, paths: u64, seed: u64) -> (Vec<f64>, f64) {
    let (g, fr, gp, b) = fixture(fm, 50);
    let rng = RngContract::new(seed);
    let est: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::FollowerNoise, i, 50);
            let p =
                simulate_follower_with_noise(fm, &fr, &b, &g, fm.x0, &xi, FollowerScheme::Euler)
                    .unwrap();
            mle_continuous(&p, &gp, &fr, fm).unwrap().m_hat
        })
        .collect();
    let cond = mle_continuous(
        &simulate_follower_with_noise(fm, &fr, &b, &g, fm.x0, &[0.0; 50], FollowerScheme::Euler)
            .unwrap(),
        &gp,
        &fr,
        fm,
    )
    .unwrap()
    .cond_variance;
    (est, cond)
}

#[test]
fn conditionally_unbiased() {
    let fm = FollowerModel::paper_defaults();
    let (est, _) = replay_estimates(&fm, 10_000, 1);
    let (mean, se) = mean_and_se(&est);
    assert!(
        (mean - fm.dilation).abs() <= 3.0 * se,
        "mean {mean} se {se}"
    );
}

#[test]
fn replay_variance_matches_conditional_variance() {
    let fm = FollowerModel::paper_defaults();
    let (est, cond) = replay_estimates(&fm, 100_000, 2);
    let var = sample_variance(&est);
    assert!(
        (var / cond - 1.0).abs() < 0.05,
        "sample {var} conditional {cond}"
    );
}

#[test]
fn discrete_estimate_converges_to_continuous() {
    let fm = FollowerModel::paper_defaults();
    let n = 1 << 10;
    let (g, fr, gp, b) = fixture(&fm, n);
    let rng = RngContract::new(12);
    let mut total_first = 0.0;
    let mut total_last = 0.0;
    for rep in 0..20 {
        let xi = rng.normals(StreamPurpose::FollowerNoise, rep, n);
        let p = simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &xi, FollowerScheme::exact())
            .unwrap();
        let cont = mle_continuous(&p, &gp, &fr, &fm).unwrap().m_hat;
        let gaps: Vec<f64> = (4..=10)
            .map(|k| {
                let stride = n >> k;
                let obs = DiscreteObservations::from_path(&p, stride).unwrap();
                (mle_discrete_joint(&obs, &fr, &gp, &fm).unwrap().m_hat - cont).abs()
            })
            .collect();
        total_first += gaps[0];
        total_last += gaps[6];
    }
    assert!(
        total_last < 0.1 * total_first,
        "coarse {total_first} fine {total_last}"
    );
}

#[test]
fn discrete_sigma_estimate_is_consistent() {
    let fm = FollowerModel::paper_defaults();
    let (g, fr, gp, b) = fixture(&fm, 5000);
    let rng = RngContract::new(21);
    let s2: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::FollowerNoise, i, 5000);
            let p =
                simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &xi, FollowerScheme::exact())
                    .unwrap();
            let obs = DiscreteObservations::from_path(&p, 1).unwrap();
            mle_discrete_joint(&obs, &fr, &gp, &fm).unwrap().sigma2_hat
        })
        .collect();
    let mean = s2.iter().sum::<f64>() / s2.len() as f64;
    let target = fm.sigma * fm.sigma;
    assert!((mean / target - 1.0).abs() < 0.05, "mean {mean}");
}

#[test]
fn quadratic_variation_of_pure_noise() {
    let mut fm = FollowerModel::paper_defaults();
    fm.a = 0.0;
    fm.q = 1e-300;
    let g = TimeGrid::new(0.5, 5000).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let b = vec![0.0; 5001];
    let rng = RngContract::new(3);
    let qv: Vec<f64> = (0..100u64)
        .map(|i| {
            let xi = rng.normals(StreamPurpose::FollowerNoise, i, 5000);
            sigma_quadratic_variation(
                &simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &xi, FollowerScheme::Euler)
                    .unwrap(),
            )
        })
        .collect();
    let mean = qv.iter().sum::<f64>() / qv.len() as f64;
    assert!((mean / 0.01 - 1.0).abs() < 0.03, "mean {mean}");
}

#[test]
fn quadratic_variation_bias_shrinks_with_refinement() {
    let mut fm = FollowerModel::paper_defaults();
    fm.x0 = 1.0;
    let bias = |n: usize| {
        let (g, fr, _, b) = fixture(&fm, n);
        let rng = RngContract::new(4);
        let qv: Vec<f64> = (0..2000u64)
            .into_par_iter()
            .map(|i| {
                let xi = rng.normals(StreamPurpose::FollowerNoise, i, n);
                sigma_quadratic_variation(
                    &simulate_follower_with_noise(
                        &fm,
                        &fr,
                        &b,
                        &g,
                        fm.x0,
                        &xi,
                        FollowerScheme::Euler,
                    )
                    .unwrap(),
                )
            })
            .collect();
        qv.iter().sum::<f64>() / qv.len() as f64 - fm.sigma * fm.sigma
    };
    let (b1, b2, b3) = (bias(50), bias(100), bias(200));
    assert!(b1 > b2 && b2 > b3 && b3 > 0.0, "biases {b1} {b2} {b3}");
}

#[test]
fn stopping_episode_is_stable_across_seeds() {
    let fm = FollowerModel::paper_defaults();
    let lm = LeaderModel::paper_defaults(0.5).with_inference_weight(0.93);
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let c = compute_coefficients(&fr, &fm, &g).unwrap();
    let policy = RiccatiPolicy::new(solve_leader_system(&lm, &c, &g).unwrap(), &lm);
    let cfg = EpisodeConfig {
        episodes: 30,
        threshold: Some(1e-3),
        ..EpisodeConfig::default()
    };
    let median_stop = |seed: u64| {
        let root = RngContract::new(seed);
        let mut stops: Vec<usize> = (0..100u64)
            .into_par_iter()
            .map(|r| {
                let run = run_episodes(&lm, &fm, &fr, &c, &policy, &root.derive(r), &cfg).unwrap();
                run.stopped_at.expect("stops within 30 episodes")
            })
            .collect();
        stops.sort_unstable();
        stops[50]
    };
    let medians: Vec<usize> = [99, 100, 101].into_iter().map(median_stop).collect();
    let (lo, hi) = (
        *medians.iter().min().unwrap(),
        *medians.iter().max().unwrap(),
    );
    assert!(hi - lo <= 2, "medians {medians:?}");
}
