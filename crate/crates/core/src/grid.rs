//! Uniform time grids, sample paths, and trapezoidal quadrature.
//!
//! Every ODE, SDE and time integral in the crate is evaluated on a single
//! [`TimeGrid`] per experiment. Node `j` sits at `j * T / n_steps`, so the
//! first node is exactly `0` and the last exactly `T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Uniform spacing `T / n_steps`.
    #[inline]
    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.horizon / self.n_steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.node(j)).collect()
    }

    /// Index of the cell `[t_j, t_{j+1}]` containing `t` together with the
    /// fractional position inside it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        let s = t / self.step();
        let j = (s.floor() as usize).min(self.n_steps - 1);
        Ok((j, s - j as f64))
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n_nodes() {
            return Err(Error::invalid(format!(
                "{what} has {len} values, grid has {} nodes",
                self.n_nodes()
            )));
        }
        Ok(())
    }
}

/// A real-valued sample path on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len(), "trajectory")?;
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "trajectory value at node {j} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_nodes()])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation at an arbitrary time in `[0, T]`.
    pub fn at(&self, t: f64) -> Result<f64> {
        let (j, w) = self.grid.locate(t)?;
        Ok(lerp(self.values[j], self.values[j + 1], w))
    }
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// Cumulative trapezoidal integral: `out[0] = 0`,
/// `out[j+1] = out[j] + h/2 * (v[j] + v[j+1])`.
pub fn cumtrapz(values: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    grid.check_len(values.len(), "integrand")?;
    let h = grid.step();
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in values.windows(2) {
        acc = trapz_step(acc, h, w[0], w[1]);
        out.push(acc);
    }
    Ok(out)
}

/// Trapezoidal integral over the whole grid.
pub fn trapz(values: &[f64], grid: &TimeGrid) -> Result<f64> {
    grid.check_len(values.len(), "integrand")?;
    let h = grid.step();
    Ok(values
        .windows(2)
        .fold(0.0, |acc, w| trapz_step(acc, h, w[0], w[1])))
}

/// One trapezoid increment. Shared by [`cumtrapz`] and the online path
/// integrals in the simulator so both produce bit-identical sums.
#[inline]
pub(crate) fn trapz_step(acc: f64, h: f64, left: f64, right: f64) -> f64 {
    acc + 0.5 * h * (left + right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn paper_grid_spacing() {
        let g = TimeGrid::new(0.5, 50).unwrap();
        assert_abs_diff_eq!(g.step(), 0.01, epsilon = 1e-15);
        assert_eq!(g.nodes().len(), 51);
        assert_eq!(g.node(50), 0.5);
        let fine = TimeGrid::new(0.5, 500).unwrap();
        assert_abs_diff_eq!(fine.step(), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn minimal_grid() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            TimeGrid::new(0.0, 10),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            TimeGrid::new(-1.0, 10),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            TimeGrid::new(1.0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(TimeGrid::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn cumtrapz_exact_cases() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let ones = vec![1.0; 11];
        assert_abs_diff_eq!(cumtrapz(&ones, &g).unwrap()[10], 1.0, epsilon = 1e-14);
        let lin = g.nodes();
        assert_abs_diff_eq!(cumtrapz(&lin, &g).unwrap()[10], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cumtrapz_quadratic_against_analytic() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let sq: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
        let out = cumtrapz(&sq, &g).unwrap();
        assert_eq!(out[0], 0.0);
        assert_abs_diff_eq!(out[1000], 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn cumtrapz_length_mismatch() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(cumtrapz(&[1.0, 2.0], &g).is_err());
    }

    #[test]
    fn trajectory_validation() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(Trajectory::new(g, vec![0.0, 1.0]).is_err());
        assert!(Trajectory::new(g, vec![0.0, f64::INFINITY, 1.0]).is_err());
        let tr = Trajectory::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(tr.at(0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert!(tr.at(1.5).is_err());
    }

    proptest! {
        #[test]
        fn cumtrapz_is_linear(
            u in prop::collection::vec(-10.0f64..10.0, 21),
            v in prop::collection::vec(-10.0f64..10.0, 21),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let g = TimeGrid::new(2.0, 20).unwrap();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = cumtrapz(&mix, &g).unwrap();
            let cu = cumtrapz(&u, &g).unwrap();
            let cv = cumtrapz(&v, &g).unwrap();
            for j in 0..lhs.len() {
                let rhs = a * cu[j] + b * cv[j];
                prop_assert!((lhs[j] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn cumtrapz_monotone_for_nonnegative(u in prop::collection::vec(0.0f64..10.0, 2..40)) {
            let g = TimeGrid::new(1.0, u.len() - 1).unwrap();
            let c = cumtrapz(&u, &g).unwrap();
            prop_assert!(c.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
