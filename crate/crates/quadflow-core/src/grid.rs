//! Uniform time grids for the integrators.

use crate::error::{Error, Result};

/// Steps per unit time used when no explicit resolution is requested.
pub const DEFAULT_STEPS_PER_UNIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::BadGrid {
                reason: "horizon must be finite and positive",
            });
        }
        if steps == 0 {
            return Err(Error::BadGrid {
                reason: "grid needs at least one step",
            });
        }
        Ok(TimeGrid { t_end, steps })
    }

    /// Default resolution of 2000 steps per unit time, always at least one step.
    pub fn default_for(t_end: f64) -> Result<Self> {
        let steps = ((t_end * DEFAULT_STEPS_PER_UNIT as f64).ceil() as usize).max(1);
        TimeGrid::new(t_end, steps)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, including both endpoints.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        self.t_end * i as f64 / self.steps as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Same horizon at double the resolution.
    pub fn refined(&self) -> Self {
        TimeGrid {
            t_end: self.t_end,
            steps: self.steps * 2,
        }
    }

    /// Trapezoid weights (dt/2 at the endpoints, dt inside).
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// Trapezoid quadrature of samples given at the grid nodes.
pub fn trapezoid(grid: &TimeGrid, samples: &[f64]) -> f64 {
    assert_eq!(samples.len(), grid.len(), "one sample per grid node");
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| grid.trapezoid_weight(i) * s)
        .sum()
}
