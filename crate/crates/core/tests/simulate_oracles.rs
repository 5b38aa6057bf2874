mod common;

use approx::assert_abs_diff_eq;
use common::{cum_drift_fine, mean_and_se, sample_variance};
use rayon::prelude::*;
use stackinfer_core::policy::{RiccatiPolicy, ZeroPolicy};
use stackinfer_core::riccati::{
    compute_coefficients, solve_follower_a, solve_follower_bc, solve_leader_system,
};
use stackinfer_core::simulate::{
    compute_g, evaluate_follower_cost, evaluate_primary_cost, simulate_follower_with_noise,
    simulate_leader_with_noise, FollowerScheme,
};
use stackinfer_core::{
    trapz, FollowerModel, LeaderModel, RngContract, StreamPurpose, TargetTrajectory, TimeGrid,
    Trajectory,
};

fn leader_path_fixture(g: TimeGrid) -> Trajectory {
    Trajectory::from_fn(g, |t| {
        0.1 + 0.1 * (2.0 * std::f64::consts::PI * t / g.horizon()).cos()
    })
    .unwrap()
}

#[test]
fn deterministic_path_cost_matches_quadrature() {
    let fm = FollowerModel::paper_defaults();
    let mut lm = LeaderModel::paper_defaults(0.5);
    lm.sigma = 0.0;
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let c = compute_coefficients(&fr, &fm, &g).unwrap();
    let p = simulate_leader_with_noise(&lm, &c, &ZeroPolicy, &g, lm.x0, &[0.0; 50]).unwrap();
    let h: f64 = 0.01;
    let x = |j: i32| 0.1 * (1.0 - h).powi(j);
    let f = |j: i32| 0.1 * (2.0 * std::f64::consts::PI * j as f64 * h / 0.5).sin();
    let run = |j: i32| 0.5 * (x(j) - f(j)).powi(2);
    let mut oracle = 0.5 * (run(0) + run(50));
    for j in 1..50 {
        oracle += run(j);
    }
    oracle = oracle * h + 0.5 * (x(50) - f(50)).powi(2);
    assert_abs_diff_eq!(
        evaluate_primary_cost(&lm, &p).unwrap(),
        oracle,
        epsilon = 1e-8
    );
}

#[test]
fn euler_leader_mean_matches_ode() {
    let fm = FollowerModel::paper_defaults();
    let lm = LeaderModel::paper_defaults(0.5);
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let c = compute_coefficients(&fr, &fm, &g).unwrap();
    let rng = RngContract::new(2024);
    let ends: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::LeaderNoise, i, 50);
            simulate_leader_with_noise(&lm, &c, &ZeroPolicy, &g, lm.x0, &xi)
                .unwrap()
                .x[50]
        })
        .collect();
    let (mean, se) = mean_and_se(&ends);
    let ode = lm.x0 * (lm.a * 0.5).exp();
    assert!(
        (mean - ode).abs() <= 3.0 * se,
        "mean {mean} ode {ode} se {se}"
    );
}

#[test]
fn precision_identity_on_riccati_paths() {
    let fm = FollowerModel::paper_defaults();
    let lm = LeaderModel::paper_defaults(0.5).with_inference_weight(0.5);
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let c = compute_coefficients(&fr, &fm, &g).unwrap();
    let policy = RiccatiPolicy::new(solve_leader_system(&lm, &c, &g).unwrap(), &lm);
    let rng = RngContract::new(5);
    for i in 0..20 {
        let xi = rng.normals(StreamPurpose::LeaderNoise, i, 50);
        let p = simulate_leader_with_noise(&lm, &c, &policy, &g, lm.x0, &xi).unwrap();
        let gp = compute_g(&fr, &fm, &p.trajectory()).unwrap();
        let y_t = p.y[50];
        let ky2: Vec<f64> = c.k.iter().zip(&p.y).map(|(k, y)| k * y * y).collect();
        let expansion =
            y_t * y_t * trapz(&c.k, &g).unwrap() - 2.0 * y_t * p.z[50] + trapz(&ky2, &g).unwrap();
        assert_abs_diff_eq!(gp.precision, expansion, epsilon = 1e-8);
    }
}

/// Closed-form OU moments of `X_T` given the nodal `b`, from a fine
/// independent quadrature of the closed-loop drift.
fn ou_moments(fm: &FollowerModel, b: &[f64], g: TimeGrid) -> (f64, f64) {
    let per = 400;
    let pieces = g.n_steps() * per;
    let cum = cum_drift_fine(fm, g.horizon(), pieces);
    let dt = g.horizon() / pieces as f64;
    let total = cum[pieces];
    let bs = |i: usize| {
        let (cell, w) = (i / per, (i % per) as f64 / per as f64);
        if cell == g.n_steps() {
            b[cell]
        } else {
            b[cell] + (b[cell + 1] - b[cell]) * w
        }
    };
    let mut drift = 0.0;
    let mut var = 0.0;
    for i in 0..pieces {
        let l = (total - cum[i]).exp();
        let r = (total - cum[i + 1]).exp();
        drift += 0.5 * dt * (l * bs(i) + r * bs(i + 1));
        var += 0.5 * dt * (l * l + r * r);
    }
    let gain = fm.b * fm.b / fm.r;
    (
        fm.x0 * total.exp() - gain * drift,
        fm.sigma * fm.sigma * var,
    )
}

#[test]
fn follower_terminal_moments_match_ou_closed_form() {
    let fm = FollowerModel::paper_defaults();
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let x_l = leader_path_fixture(g);
    let b: Vec<f64> = compute_g(&fr, &fm, &x_l)
        .unwrap()
        .g
        .iter()
        .map(|v| fm.dilation * v)
        .collect();
    let (mean_cf, var_cf) = ou_moments(&fm, &b, g);
    let rng = RngContract::new(77);
    let ends = |scheme: FollowerScheme| -> Vec<f64> {
        (0..100_000u64)
            .into_par_iter()
            .map(|i| {
                let xi = rng.normals(StreamPurpose::FollowerNoise, i, 50);
                simulate_follower_with_noise(&fm, &fr, &b, &g, fm.x0, &xi, scheme)
                    .unwrap()
                    .x[50]
            })
            .collect()
    };
    let exact = ends(FollowerScheme::exact());
    let (mean, se) = mean_and_se(&exact);
    assert!(
        (mean - mean_cf).abs() <= 3.0 * se,
        "mean {mean} closed form {mean_cf} se {se}"
    );
    let euler = ends(FollowerScheme::Euler);
    let var = sample_variance(&euler);
    assert!(
        (var / var_cf - 1.0).abs() < 0.05,
        "variance {var} closed form {var_cf}"
    );
}

#[test]
fn follower_cost_matches_value_function() {
    let fm = FollowerModel::paper_defaults();
    let n = 1000;
    let g = TimeGrid::new(0.5, n).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let x_l = leader_path_fixture(g);
    let bc = solve_follower_bc(&fr, &fm, &x_l).unwrap();
    let value = bc.value_at_start(&fr, fm.x0);
    let rng = RngContract::new(31);
    let costs: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let xi = rng.normals(StreamPurpose::FollowerNoise, i, n);
            let p = simulate_follower_with_noise(
                &fm,
                &fr,
                &bc.b,
                &g,
                fm.x0,
                &xi,
                FollowerScheme::Euler,
            )
            .unwrap();
            evaluate_follower_cost(&fm, &p, &x_l, &fr, &bc.b).unwrap()
        })
        .collect();
    let (mean, se) = mean_and_se(&costs);
    assert!(
        mean >= value - 3.0 * se,
        "mean {mean} value {value} se {se}"
    );
    assert!(
        (mean - value).abs() <= 3.0 * se,
        "mean {mean} value {value} se {se}"
    );
}

#[test]
fn zero_target_zero_start_costs_nothing_without_noise() {
    let fm = FollowerModel::paper_defaults();
    let mut lm = LeaderModel::paper_defaults(0.5);
    lm.sigma = 0.0;
    lm.x0 = 0.0;
    lm.target = TargetTrajectory::zero();
    let g = TimeGrid::new(0.5, 50).unwrap();
    let fr = solve_follower_a(&fm, &g).unwrap();
    let c = compute_coefficients(&fr, &fm, &g).unwrap();
    let p = simulate_leader_with_noise(&lm, &c, &ZeroPolicy, &g, 0.0, &[0.0; 50]).unwrap();
    assert_eq!(evaluate_primary_cost(&lm, &p).unwrap(), 0.0);
}
