//! Backward Riccati systems for both agents.
//!
//! The follower's value function is `a(t) x^2 + b(t) x + c(t)` with scalar
//! Riccati coefficient `a`; the leader's FI-augmented value function is
//! `psi' L(t) psi + M(t)' psi + N(t)` over `psi = (X, Y, Z)`.
//!
//! All systems are integrated with classical RK4 on the simulation grid,
//! backward from the terminal time. Time is reversed (`s = T - t`) so a
//! single forward stepper serves every system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumtrapz, lerp, TimeGrid, Trajectory};
use crate::model::{FollowerModel, LeaderModel};

/// Default magnitude at which the leader system is declared to have blown up.
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e12;

/// Position inside the cell `[t_j, t_{j+1}]` at which an RK4 stage is
/// evaluated: `w = 0` is `t_j`, `w = 1` is `t_{j+1}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stage {
    pub cell: usize,
    pub w: f64,
    pub t: f64,
}

/// Integrates `dy/dt = rhs(stage, y)` backward from `y(T) = terminal`.
///
/// `after_step(j, &mut y)` runs once `y(t_j)` is available and may
/// post-process or reject it.
pub(crate) fn rk4_backward<const N: usize>(
    grid: &TimeGrid,
    terminal: [f64; N],
    mut rhs: impl FnMut(Stage, &[f64; N]) -> [f64; N],
    mut after_step: impl FnMut(usize, &mut [f64; N]) -> Result<()>,
) -> Result<Vec<[f64; N]>> {
    let n = grid.n_steps();
    let h = grid.step();
    let mut out = vec![[0.0; N]; n + 1];
    let mut y = terminal;
    after_step(n, &mut y)?;
    out[n] = y;
    for j in (0..n).rev() {
        let t_hi = grid.node(j + 1);
        let t_mid = t_hi - 0.5 * h;
        let t_lo = grid.node(j);
        // reversed time: dy/ds = -rhs
        let hi = Stage {
            cell: j,
            w: 1.0,
            t: t_hi,
        };
        let mid = Stage {
            cell: j,
            w: 0.5,
            t: t_mid,
        };
        let lo = Stage {
            cell: j,
            w: 0.0,
            t: t_lo,
        };
        let k1 = neg(rhs(hi, &y));
        let k2 = neg(rhs(mid, &axpy(&y, 0.5 * h, &k1)));
        let k3 = neg(rhs(mid, &axpy(&y, 0.5 * h, &k2)));
        let k4 = neg(rhs(lo, &axpy(&y, h, &k3)));
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        after_step(j, &mut y)?;
        out[j] = y;
    }
    Ok(out)
}

#[inline]
fn neg<const N: usize>(mut v: [f64; N]) -> [f64; N] {
    v.iter_mut().for_each(|x| *x = -*x);
    v
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * x[i];
    }
    out
}

/// Cubic Hermite interpolation inside one cell from values and derivatives.
#[inline]
pub(crate) fn hermite(v0: f64, v1: f64, d0: f64, d1: f64, h: f64, w: f64) -> f64 {
    let w2 = w * w;
    let w3 = w2 * w;
    (2.0 * w3 - 3.0 * w2 + 1.0) * v0
        + (w3 - 2.0 * w2 + w) * h * d0
        + (-2.0 * w3 + 3.0 * w2) * v1
        + (w3 - w2) * h * d1
}

/// Solution of the follower's scalar Riccati equation and the integrated
/// closed-loop drift `f = A_F - (2 B_F^2 / R_F) a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerRiccati {
    pub grid: TimeGrid,
    pub a: Vec<f64>,
    pub f: Vec<f64>,
    /// `int_0^t f(u) du` at each node.
    pub cum_f: Vec<f64>,
}

impl FollowerRiccati {
    /// `int_0^t f` inside cell `j` at fractional position `w`, from the cubic
    /// Hermite interpolant of `cum_f` (whose derivative `f` is known at nodes).
    pub fn cum_f_at(&self, cell: usize, w: f64) -> f64 {
        hermite(
            self.cum_f[cell],
            self.cum_f[cell + 1],
            self.f[cell],
            self.f[cell + 1],
            self.grid.step(),
            w,
        )
    }

    /// `F(s, t_{j+1}) = int_s^{t_{j+1}} f` for `s` inside cell `j`.
    pub fn drift_integral_to_cell_end(&self, cell: usize, w: f64) -> f64 {
        self.cum_f[cell + 1] - self.cum_f_at(cell, w)
    }
}

/// Solves `a' = (2 B_F^2 / R_F) a^2 - 2 A_F a - Q_F / 2`, `a(T) = 0`.
pub fn solve_follower_a(model: &FollowerModel, grid: &TimeGrid) -> Result<FollowerRiccati> {
    model.validate()?;
    let p = 2.0 * model.drift_gain();
    let rhs_a = |a: f64| p * a * a - 2.0 * model.a * a - 0.5 * model.q;
    // state: [a, int_t^T f]
    let sol = rk4_backward(
        grid,
        [0.0, 0.0],
        |_, y| [rhs_a(y[0]), -(model.a - p * y[0])],
        |j, y| {
            if y.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::SolverFailure(format!(
                    "follower Riccati overflow at node {j}"
                )))
            }
        },
    )?;
    let a: Vec<f64> = sol.iter().map(|y| y[0]).collect();
    let f: Vec<f64> = a.iter().map(|&a| model.a - p * a).collect();
    let total = sol[0][1];
    let cum_f = sol.iter().map(|y| total - y[1]).collect();
    Ok(FollowerRiccati {
        grid: *grid,
        a,
        f,
        cum_f,
    })
}

/// Coefficient functions `h(t) = Q_F e^{int_0^t f}` and `k(t) = e^{-2 int_0^t f}`
/// that drive the leader's augmented states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoefficients {
    pub grid: TimeGrid,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    /// Trapezoidal running integral of `k`.
    pub cum_k: Vec<f64>,
    pub h_sup: f64,
    pub k_sup: f64,
    /// `int_0^T k` with the endpoint-corrected trapezoid rule (fourth order).
    pub k_l1: f64,
    /// `B_F^4 / (sigma_F^2 R_F^2)` of the follower these were built from.
    pub information_scale: f64,
    q_f: f64,
    cum_f: Vec<f64>,
    f: Vec<f64>,
}

impl DerivedCoefficients {
    /// `(h, k)` at an RK4 stage, using the Hermite interpolant of `int_0^t f`.
    pub(crate) fn at_stage(&self, s: Stage) -> (f64, f64) {
        if s.w == 0.0 {
            return (self.h[s.cell], self.k[s.cell]);
        }
        if s.w == 1.0 {
            return (self.h[s.cell + 1], self.k[s.cell + 1]);
        }
        let j = s.cell;
        let cf = hermite(
            self.cum_f[j],
            self.cum_f[j + 1],
            self.f[j],
            self.f[j + 1],
            self.grid.step(),
            s.w,
        );
        (self.q_f * cf.exp(), (-2.0 * cf).exp())
    }
}

pub fn compute_coefficients(
    fr: &FollowerRiccati,
    model: &FollowerModel,
    grid: &TimeGrid,
) -> Result<DerivedCoefficients> {
    if fr.grid != *grid {
        return Err(Error::invalid(
            "follower Riccati solved on a different grid",
        ));
    }
    let h: Vec<f64> = fr.cum_f.iter().map(|c| model.q * c.exp()).collect();
    let k: Vec<f64> = fr.cum_f.iter().map(|c| (-2.0 * c).exp()).collect();
    let cum_k = cumtrapz(&k, grid)?;
    let n = grid.n_steps();
    // Euler-Maclaurin end correction with the exact derivative k' = -2 f k.
    let dk0 = -2.0 * fr.f[0] * k[0];
    let dkn = -2.0 * fr.f[n] * k[n];
    let step = grid.step();
    let k_l1 = cum_k[n] - step * step / 12.0 * (dkn - dk0);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(DerivedCoefficients {
        grid: *grid,
        h_sup: sup(&h),
        k_sup: sup(&k),
        h,
        k,
        cum_k,
        k_l1,
        information_scale: model.information_scale(),
        q_f: model.q,
        cum_f: fr.cum_f.clone(),
        f: fr.f.clone(),
    })
}

/// The follower's `b` and `c` coefficients for one realized leader path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerValue {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl FollowerValue {
    /// Value function `a_0 x^2 + b_0 x + c_0` at time zero.
    pub fn value_at_start(&self, fr: &FollowerRiccati, x: f64) -> f64 {
        fr.a[0] * x * x + self.b[0] * x + self.c[0]
    }
}

/// Solves the linear `b` and `c` equations backward from zero, with the
/// leader path linearly interpolated at half steps.
pub fn solve_follower_bc(
    fr: &FollowerRiccati,
    model: &FollowerModel,
    x_l: &Trajectory,
) -> Result<FollowerValue> {
    if *x_l.grid() != fr.grid {
        return Err(Error::invalid(
            "leader path and follower Riccati live on different grids",
        ));
    }
    let p = 2.0 * model.drift_gain();
    let xs = x_l.values();
    let entropy_const = 0.5
        * model.entropy_weight
        * (2.0 * std::f64::consts::PI * std::f64::consts::E * model.policy_variance()).ln()
        - 0.5 * model.entropy_weight;
    let m = model.dilation;
    let sol = rk4_backward(
        &fr.grid,
        [0.0; 3],
        |s, y| {
            let (a, b) = (y[0], y[1]);
            let x = lerp(xs[s.cell], xs[s.cell + 1], s.w);
            [
                p * a * a - 2.0 * model.a * a - 0.5 * model.q,
                p * a * b - model.a * b + model.q * m * x,
                -0.5 * model.q * m * m * x * x + 0.5 * model.drift_gain() * b * b
                    - model.sigma * model.sigma * a
                    + entropy_const,
            ]
        },
        |j, y| {
            if y.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::SolverFailure(format!(
                    "follower value ODE overflow at node {j}"
                )))
            }
        },
    )?;
    Ok(FollowerValue {
        b: sol.iter().map(|y| y[1]).collect(),
        c: sol.iter().map(|y| y[2]).collect(),
    })
}

pub type Mat3 = [[f64; 3]; 3];

/// Solution of the leader's augmented-state Riccati system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderRiccati {
    pub grid: TimeGrid,
    pub l: Vec<Mat3>,
    pub m: Vec<[f64; 3]>,
    pub n: Vec<f64>,
    pub lam_tilde: f64,
}

impl LeaderRiccati {
    pub fn terminal_l(lam_tilde: f64, q_terminal: f64, k_l1: f64) -> Mat3 {
        [
            [0.5 * q_terminal, 0.0, 0.0],
            [0.0, -lam_tilde * k_l1, lam_tilde],
            [0.0, lam_tilde, 0.0],
        ]
    }

    /// Largest `|L_ij - L_ji|` over all nodes.
    pub fn max_asymmetry(&self) -> f64 {
        self.l
            .iter()
            .flat_map(|l| {
                [
                    (l[0][1] - l[1][0]).abs(),
                    (l[0][2] - l[2][0]).abs(),
                    (l[1][2] - l[2][1]).abs(),
                ]
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSolveOptions {
    pub blowup_threshold: f64,
}

impl Default for LeaderSolveOptions {
    fn default() -> Self {
        Self {
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }
}

pub fn solve_leader_system(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
    grid: &TimeGrid,
) -> Result<LeaderRiccati> {
    solve_leader_system_with(leader, coeffs, grid, LeaderSolveOptions::default())
}

/// State layout: `L` row-major in `[0..9]`, `M` in `[9..12]`, `N` in `[12]`.
pub fn solve_leader_system_with(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
    grid: &TimeGrid,
    opts: LeaderSolveOptions,
) -> Result<LeaderRiccati> {
    leader.validate()?;
    if coeffs.grid != *grid {
        return Err(Error::invalid("coefficients computed on a different grid"));
    }
    let lam_tilde = if leader.inference_weight == 0.0 {
        0.0
    } else {
        leader.inference_weight * coeffs.information_scale
    };
    let horizon = grid.horizon();
    let target_t = leader.target.eval(horizon, horizon)?;

    let l_t = LeaderRiccati::terminal_l(lam_tilde, leader.q_terminal, coeffs.k_l1);
    let mut terminal = [0.0; 13];
    for r in 0..3 {
        for c in 0..3 {
            terminal[3 * r + c] = l_t[r][c];
        }
    }
    terminal[9] = -leader.q_terminal * target_t;
    terminal[12] = 0.5 * leader.q_terminal * target_t * target_t;

    let (al, bl, rl, ql, sl) = (leader.a, leader.b, leader.r, leader.q, leader.sigma);
    let gain = 2.0 / rl * bl * bl;
    let mut target_err = None;

    let rhs = |s: Stage, y: &[f64; 13]| -> [f64; 13] {
        let (hc, kc) = coeffs.at_stage(s);
        let ft = match leader.target.eval(s.t.clamp(0.0, horizon), horizon) {
            Ok(v) => v,
            Err(e) => {
                target_err.get_or_insert(e);
                0.0
            }
        };
        let l = |r: usize, c: usize| y[3 * r + c];
        // A = [[al,0,0],[-h,0,0],[0,k,0]]
        // (L A)_{rc} = sum_i L_{ri} A_{ic}
        let la = |r: usize, c: usize| match c {
            0 => l(r, 0) * al - l(r, 1) * hc,
            1 => l(r, 2) * kc,
            _ => 0.0,
        };
        let q = [0.5 * ql, -lam_tilde * kc, 0.0];
        let mut out = [0.0; 13];
        for r in 0..3 {
            for c in 0..3 {
                // L A + A' L = LA + (LA)'
                let quad = gain * l(r, 0) * l(0, c);
                let qd = if r == c { q[r] } else { 0.0 };
                out[3 * r + c] = -(la(r, c) + la(c, r) - quad + qd);
            }
        }
        let m = [y[9], y[10], y[11]];
        // A' M
        let atm = [al * m[0] - hc * m[1], kc * m[2], 0.0];
        for r in 0..3 {
            let e1 = if r == 0 { ql * ft } else { 0.0 };
            out[9 + r] = -(atm[r] - gain * l(r, 0) * m[0] - e1);
        }
        let bm = bl * m[0];
        out[12] = bm * bm / (2.0 * rl) - sl * sl * l(0, 0) - 0.5 * ql * ft * ft;
        out
    };

    let after = |j: usize, y: &mut [f64; 13]| -> Result<()> {
        for (a, b) in [(1usize, 3usize), (2, 6), (5, 7)] {
            let s = 0.5 * (y[a] + y[b]);
            y[a] = s;
            y[b] = s;
        }
        let mag = y[..9].iter().fold(0.0f64, |m, v| {
            if v.is_finite() {
                m.max(v.abs())
            } else {
                f64::INFINITY
            }
        });
        if mag > opts.blowup_threshold || y[9..].iter().any(|v| !v.is_finite()) {
            return Err(Error::FiniteTimeBlowUp {
                time: grid.node(j),
                magnitude: mag,
            });
        }
        Ok(())
    };

    let sol = rk4_backward(grid, terminal, rhs, after)?;
    if let Some(e) = target_err {
        return Err(e);
    }
    Ok(LeaderRiccati {
        grid: *grid,
        l: sol
            .iter()
            .map(|y| [[y[0], y[1], y[2]], [y[3], y[4], y[5]], [y[6], y[7], y[8]]])
            .collect(),
        m: sol.iter().map(|y| [y[9], y[10], y[11]]).collect(),
        n: sol.iter().map(|y| y[12]).collect(),
        lam_tilde,
    })
}

/// Sufficient horizon for existence of the leader system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellPosednessBound {
    pub q: f64,
    pub beta: f64,
    pub y0: f64,
    pub t_max: f64,
}

impl WellPosednessBound {
    pub fn from_constants(q: f64, beta: f64, y0: f64) -> Result<Self> {
        if !(y0 > 0.0) {
            return Err(Error::invalid("y0 must be positive"));
        }
        if !(q > 0.0 && beta > 0.0) {
            return Err(Error::invalid("q and beta must be positive"));
        }
        let t_max = ((q / beta).sqrt() / y0).atan() / (beta * q).sqrt();
        Ok(Self { q, beta, y0, t_max })
    }
}

pub fn wellposedness_bound(
    leader: &LeaderModel,
    coeffs: &DerivedCoefficients,
) -> Result<WellPosednessBound> {
    let lam_tilde = if leader.inference_weight == 0.0 {
        0.0
    } else {
        leader.inference_weight * coeffs.information_scale
    };
    let al = leader.a.abs();
    let q = (0.5 * leader.q - al - coeffs.h_sup)
        .abs()
        .max((lam_tilde + 1.0) * coeffs.k_sup);
    let beta = (2.0 / leader.r * leader.b * leader.b + al)
        .max(coeffs.h_sup)
        .max(coeffs.k_sup);
    let y0 = (0.5 * leader.q_terminal).max(lam_tilde * (coeffs.k_l1 + 1.0));
    WellPosednessBound::from_constants(q, beta, y0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TargetTrajectory;
    use approx::assert_abs_diff_eq;

    fn paper(n: usize) -> (FollowerModel, LeaderModel, TimeGrid) {
        (
            FollowerModel::paper_defaults(),
            LeaderModel::paper_defaults(0.5),
            TimeGrid::new(0.5, n).unwrap(),
        )
    }

    #[test]
    fn terminal_conditions_and_sign() {
        let (fm, _, g) = paper(50);
        let fr = solve_follower_a(&fm, &g).unwrap();
        assert_eq!(fr.a[50], 0.0);
        assert_eq!(fr.cum_f[0], 0.0);
        assert!(fr.a[..50].iter().all(|&a| a > 0.0));
        for (a, f) in fr.a.iter().zip(&fr.f) {
            assert_abs_diff_eq!(*f, fm.a - 2.0 * fm.drift_gain() * a, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_source_keeps_zero() {
        // Q_F is validated positive; a tiny value checks the limit behavior.
        let (mut fm, _, g) = paper(100);
        fm.q = 1e-300;
        let fr = solve_follower_a(&fm, &g).unwrap();
        assert!(fr.a.iter().all(|a| a.abs() < 1e-290));
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        for (j, t) in g.nodes().iter().enumerate() {
            assert_abs_diff_eq!(c.k[j], (-2.0 * fm.a * t).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn coefficients_at_origin() {
        let (fm, _, g) = paper(50);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        assert_eq!(c.h[0], fm.q);
        assert_eq!(c.k[0], 1.0);
        assert!(c.k.iter().all(|&k| k > 0.0));
        assert!(c.cum_k.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn flat_drift_gives_unit_k() {
        let mut fm = FollowerModel::paper_defaults();
        fm.a = 0.0;
        fm.q = 1e-300;
        let g = TimeGrid::new(0.5, 20).unwrap();
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        assert!(c.k.iter().all(|&k| (k - 1.0).abs() < 1e-14));
        assert_abs_diff_eq!(c.k_l1, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn b_vanishes_without_forcing() {
        let (fm, _, g) = paper(50);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let zero = Trajectory::constant(g, 0.0).unwrap();
        assert!(solve_follower_bc(&fr, &fm, &zero)
            .unwrap()
            .b
            .iter()
            .all(|&b| b == 0.0));
        let mut m0 = fm;
        m0.dilation = 0.0;
        let x = Trajectory::from_fn(g, |t| (3.0 * t).sin() + 0.2).unwrap();
        assert!(solve_follower_bc(&fr, &m0, &x)
            .unwrap()
            .b
            .iter()
            .all(|&b| b == 0.0));
    }

    #[test]
    fn bc_rejects_grid_mismatch() {
        let (fm, _, g) = paper(50);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let other = Trajectory::constant(TimeGrid::new(0.5, 40).unwrap(), 1.0).unwrap();
        assert!(solve_follower_bc(&fr, &fm, &other).is_err());
    }

    #[test]
    fn leader_terminal_values_exact() {
        let (fm, lm, g) = paper(50);
        let lm = lm.with_inference_weight(0.5);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        let lr = solve_leader_system(&lm, &c, &g).unwrap();
        let ft = lm.target.eval(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(lr.lam_tilde, 50.0, epsilon = 1e-12);
        assert_eq!(
            lr.l[50],
            LeaderRiccati::terminal_l(lr.lam_tilde, 1.0, c.k_l1)
        );
        assert_eq!(lr.m[50], [-ft, 0.0, 0.0]);
        assert_eq!(lr.n[50], 0.5 * ft * ft);
        assert!(lr.max_asymmetry() <= 1e-12);
    }

    #[test]
    fn zero_intensity_decouples() {
        let (fm, lm, g) = paper(200);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        let lr = solve_leader_system(&lm, &c, &g).unwrap();
        for (l, m) in lr.l.iter().zip(&lr.m) {
            for r in 0..3 {
                for cc in 0..3 {
                    if (r, cc) != (0, 0) {
                        assert!(l[r][cc].abs() <= 1e-12);
                    }
                }
            }
            assert!(m[1].abs() <= 1e-12 && m[2].abs() <= 1e-12);
        }
    }

    #[test]
    fn blowup_is_reported() {
        let (fm, lm, g) = paper(50);
        let lm = lm.with_inference_weight(2.0);
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        match solve_leader_system(&lm, &c, &g) {
            Err(Error::FiniteTimeBlowUp { time, .. }) => assert!(time > 0.0 && time < 0.5),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn bound_monotone_in_y0() {
        let a = WellPosednessBound::from_constants(2.0, 3.0, 1.0).unwrap();
        let b = WellPosednessBound::from_constants(2.0, 3.0, 2.0).unwrap();
        assert!(a.t_max > 0.0 && b.t_max < a.t_max);
        assert!(WellPosednessBound::from_constants(2.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn tabulated_target_supported() {
        let (fm, mut lm, g) = paper(50);
        lm.target = TargetTrajectory::Tabulated {
            grid: g,
            values: lm.target.sample(&g).unwrap(),
        };
        let fr = solve_follower_a(&fm, &g).unwrap();
        let c = compute_coefficients(&fr, &fm, &g).unwrap();
        assert!(solve_leader_system(&lm, &c, &g).is_ok());
    }
}
