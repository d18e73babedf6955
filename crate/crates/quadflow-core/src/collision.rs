//! Repeated-interaction oracle for expectation flows.
//!
//! Instead of reducing to a dual-density ODE, each time step couples the
//! system to a fresh truncated mode prepared in the coherent state matching
//! the amplitude on that slice, evolves the joint density by a matrix
//! exponential, and contracts the mode.  The construction discretizes the
//! noise directly, so it shares no code path with the `flow` module and
//! converges to the same trajectories at first order in the step size.
//!
//! The step exponent is `D dt (x) I + sqrt(dt) (Phi (x) adag + Psi (x) a)`
//! with `D = F + K - Psi Phi / 2`: the explicit drift omits the
//! `Psi Phi / 2` piece because the quadratic term of the exponential
//! regenerates exactly that much drift under vacuum contraction of the mode.
//! For the unitary form this makes `D = -iH` and each step exactly unitary.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::{trace_product, ExpVectorState, HPModel, TrajectorySet};
use crate::grid::TimeGrid;
use crate::operator::{matrix_exp, CMat, CVec, Operator, ZERO};

/// Mode-population fraction at the top truncation level above which a run is
/// flagged as under-truncated.
pub const LEAKAGE_TOL: f64 = 1e-6;

fn c64(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Result of a collision run: trajectories plus truncation diagnostics.
#[derive(Debug, Clone)]
pub struct CollisionRun {
    pub trajectories: TrajectorySet,
    /// Largest per-step population fraction at the top mode level.
    pub max_leakage: f64,
    /// True when `max_leakage` exceeds [`LEAKAGE_TOL`].
    pub leakage_warning: bool,
}

/// Annihilator on an `n_max`-level mode: `a |n> = sqrt(n) |n-1>`.
fn mode_annihilator(n_max: usize) -> CMat {
    let mut a = CMat::zeros(n_max, n_max);
    for n in 1..n_max {
        a[(n - 1, n)] = c64((n as f64).sqrt());
    }
    a
}

/// Truncated unnormalized coherent vector `sum_n alpha^n / sqrt(n!) |n>`.
fn coherent_slice(alpha: Complex64, n_max: usize) -> CVec {
    let mut v = CVec::zeros(n_max);
    let mut coeff = Complex64::new(1.0, 0.0);
    for n in 0..n_max {
        v[n] = coeff;
        coeff *= alpha / c64((n + 1) as f64).sqrt();
    }
    v
}

/// Contracts the mode factor of a `(dim * n_max)`-dimensional joint density.
fn contract_mode(joint: &CMat, dim: usize, n_max: usize) -> CMat {
    let mut out = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut sum = ZERO;
            for m in 0..n_max {
                sum += joint[(i * n_max + m, j * n_max + m)];
            }
            out[(i, j)] = sum;
        }
    }
    out
}

/// Population fraction at the top mode level of a joint density.
fn top_level_fraction(joint: &CMat, dim: usize, n_max: usize) -> f64 {
    let mut top = 0.0f64;
    let mut total = 0.0f64;
    for i in 0..dim {
        top += joint[(i * n_max + n_max - 1, i * n_max + n_max - 1)].re;
        for m in 0..n_max {
            total += joint[(i * n_max + m, i * n_max + m)].re;
        }
    }
    if total.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        (top / total).abs()
    }
}

fn validate(
    model: &HPModel,
    state: &ExpVectorState,
    observables: &[Operator],
    grid: &TimeGrid,
    n_max: usize,
) -> Result<()> {
    if n_max < 2 {
        return Err(Error::Unsupported {
            context: "collision oracle",
            reason: format!("mode truncation level must be at least 2, got {n_max}"),
        });
    }
    if state.dim() != model.dim() {
        return Err(Error::DimMismatch {
            left: state.dim(),
            right: model.dim(),
            context: "collision state system part",
        });
    }
    for y in observables {
        if y.dim() != model.dim() {
            return Err(Error::DimMismatch {
                left: y.dim(),
                right: model.dim(),
                context: "collision observable",
            });
        }
    }
    let scale = model.t_end().max(1.0);
    if (grid.t_end() - model.t_end()).abs() > 1e-9 * scale {
        return Err(Error::GridMismatch {
            context: "collision grid horizon must match the model horizon",
        });
    }
    Ok(())
}

fn run_collision(
    model: &HPModel,
    gains: Option<&[Operator]>,
    state: &ExpVectorState,
    observables: &[Operator],
    grid: &TimeGrid,
    n_max: usize,
) -> Result<CollisionRun> {
    validate(model, state, observables, grid, n_max)?;
    if let Some(gains) = gains {
        if gains.len() != grid.len() {
            return Err(Error::GridMismatch {
                context: "collision gain schedule must supply one operator per grid node",
            });
        }
        for k in gains {
            if k.dim() != model.dim() {
                return Err(Error::DimMismatch {
                    left: k.dim(),
                    right: model.dim(),
                    context: "collision gain entry",
                });
            }
        }
    }
    let dim = model.dim();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let phi = model.creation_coeff();
    let psi = model.annihilation_coeff();
    // Itô drift minus the piece regenerated by noise contraction.
    let bare_drift = model.drift() - &psi * &phi * c64(0.5);
    let a = mode_annihilator(n_max);
    let mode_id = CMat::identity(n_max, n_max);
    let noise_part = phi.kronecker(&a.adjoint()) + psi.kronecker(&a);
    let exponent_for = |drift: &CMat| {
        (drift * c64(dt)).kronecker(&mode_id) + &noise_part * c64(sqrt_dt)
    };
    let cached_step = if gains.is_none() {
        Some(matrix_exp(&Operator::new(exponent_for(&bare_drift))?).into_mat())
    } else {
        None
    };

    let mut rho = {
        let xi = state.xi0();
        xi * xi.adjoint()
    };
    let mut values = vec![Vec::with_capacity(grid.len()); observables.len()];
    let mut max_leakage = 0.0f64;
    for step in 0..=grid.steps() {
        let t = grid.node(step);
        let future = c64(state.amplitude_l2_tail(t).exp());
        for (j, y) in observables.iter().enumerate() {
            values[j].push(trace_product(&rho, y.mat()) * future);
        }
        if step == grid.steps() {
            break;
        }
        let propagator = match (&cached_step, gains) {
            (Some(e), _) => e.clone(),
            (None, Some(gains)) => {
                let gain = (gains[step].mat() + gains[step + 1].mat()) * c64(0.5);
                let drift = &bare_drift + gain;
                matrix_exp(&Operator::new(exponent_for(&drift))?).into_mat()
            }
            (None, None) => unreachable!("constant generator is always cached"),
        };
        let alpha = state.amplitude(t + 0.5 * dt) * c64(sqrt_dt);
        let slice = coherent_slice(alpha, n_max);
        let joint = rho.kronecker(&(&slice * slice.adjoint()));
        let evolved = &propagator * joint * propagator.adjoint();
        max_leakage = max_leakage.max(top_level_fraction(&evolved, dim, n_max));
        rho = contract_mode(&evolved, dim, n_max);
    }
    Ok(CollisionRun {
        trajectories: TrajectorySet::new(grid.clone(), values),
        max_leakage,
        leakage_warning: max_leakage > LEAKAGE_TOL,
    })
}

/// Collision-model trajectories for the model as given (no feedback).
/// First-order accurate in the step size; truncation leakage is reported,
/// not enforced.
pub fn collision_oracle(
    model: &HPModel,
    state: &ExpVectorState,
    observables: &[Operator],
    grid: &TimeGrid,
    n_max: usize,
) -> Result<CollisionRun> {
    run_collision(model, None, state, observables, grid, n_max)
}

/// Collision-model trajectories with a feedback gain added to the drift
/// (one operator per grid node; each step uses the chord average of its
/// endpoints).  Used to certify the controlled sandwich reduction.
pub fn collision_oracle_controlled(
    model: &HPModel,
    gains: &[Operator],
    state: &ExpVectorState,
    observables: &[Operator],
    grid: &TimeGrid,
    n_max: usize,
) -> Result<CollisionRun> {
    run_collision(model, Some(gains), state, observables, grid, n_max)
}
