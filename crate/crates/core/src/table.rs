//! Piecewise-linear lookup tables with clamped extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Argument(format!(
                "table needs matching non-empty columns (got {} and {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Argument("table contains non-finite values".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "table breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn constant(y: f64) -> Self {
        Self {
            xs: vec![0.0],
            ys: vec![y],
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Index `i` of the segment `[xs[i], xs[i+1])` containing `x`, or `None`
    /// when `x` lies outside the breakpoints.
    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if n < 2 || x < self.xs[0] || x >= self.xs[n - 1] {
            return None;
        }
        Some(self.xs.partition_point(|&b| b <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.segment(x).expect("interior point");
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let w = (x - x0) / (x1 - x0);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }

    /// Derivative of the interpolant; zero in the clamped regions.
    pub fn slope(&self, x: f64) -> f64 {
        match self.segment(x) {
            Some(i) => (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]),
            None => 0.0,
        }
    }

    pub fn min_y(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Linear interpolation over a strictly increasing grid, clamped at both ends.
/// Returns the bracketing index and weight so callers can blend arbitrary data.
pub fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&b| b <= x) - 1;
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}
