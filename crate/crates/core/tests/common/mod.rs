#![allow(dead_code)]

use stackinfer_core::FollowerModel;

/// Closed form of `y' = alpha y^2 + beta y + gamma` on `[0, T]` with `y(T) = y_t`.
pub fn scalar_riccati(alpha: f64, beta: f64, gamma: f64, y_t: f64, horizon: f64, t: f64) -> f64 {
    let disc = (beta * beta - 4.0 * alpha * gamma).sqrt();
    let r1 = (-beta + disc) / (2.0 * alpha);
    let r2 = (-beta - disc) / (2.0 * alpha);
    let rho = (y_t - r1) / (y_t - r2) * (-alpha * (r1 - r2) * (horizon - t)).exp();
    (r1 - rho * r2) / (1.0 - rho)
}

pub fn follower_a_exact(m: &FollowerModel, horizon: f64, t: f64) -> f64 {
    scalar_riccati(
        2.0 * m.b * m.b / m.r,
        -2.0 * m.a,
        -0.5 * m.q,
        0.0,
        horizon,
        t,
    )
}

/// `int_0^t f` for the closed-loop follower drift on a fine uniform mesh of
/// `pieces` intervals (Simpson per interval), sampled at every interval end.
pub fn cum_drift_fine(m: &FollowerModel, horizon: f64, pieces: usize) -> Vec<f64> {
    let dt = horizon / pieces as f64;
    let drift = |t: f64| m.a - 2.0 * m.b * m.b / m.r * follower_a_exact(m, horizon, t);
    let mut out = Vec::with_capacity(pieces + 1);
    let mut cum = 0.0;
    out.push(0.0);
    for i in 0..pieces {
        let t = i as f64 * dt;
        cum += dt / 6.0 * (drift(t) + 4.0 * drift(t + 0.5 * dt) + drift(t + dt));
        out.push(cum);
    }
    out
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
