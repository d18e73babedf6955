//! Expectation flows of noise-driven evolutions, reduced to exact
//! finite-dimensional ODEs.
//!
//! A model carries a Hermitian energy `H` and a coupling `L`; the unitary
//! form has increment coefficients `F = -(iH + L*L/2)`, `Psi = -L*` on the
//! annihilation differential and `Phi = L` on the creation differential.
//! Expectations at exponential-vector states (system part `xi0`, scalar
//! amplitude `f`) obey a closed ODE on a `dim x dim` dual density, which is
//! what this module integrates: no Fock-space truncation is involved, so the
//! only numerical error is the RK4 truncation of the time march.
//!
//! Amplitudes are piecewise constant.  States are kept unnormalized: the
//! dual density starts at `xi0 xi0* . exp(|f|_2^2)`, so the recorded
//! expectation of the identity equals the squared state norm for all time.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::operator::{CMat, CVec, Operator, CERT_TOL, I, MAX_DIM, ZERO};

/// Unit-norm tolerance for the system part of an exponential-vector state.
pub const STATE_NORM_TOL: f64 = 1e-12;

/// Relative tolerance used when matching a grid horizon against a model.
const HORIZON_TOL: f64 = 1e-9;

fn c64(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

/// Coefficients of the general controlled increment
/// `dU = (F U + u) dt + Psi U dA + Phi U dAdag`, together with the control
/// input channel `G` that multiplies feedback terms.
#[derive(Debug, Clone)]
pub struct GeneralCoefficients {
    /// Drift coefficient `F`.
    pub drift: Operator,
    /// Control input channel `G`.
    pub input: Operator,
    /// Coefficient `Psi` of the annihilation differential.
    pub annihilation: Operator,
    /// Coefficient `Phi` of the creation differential.
    pub creation: Operator,
}

/// A noise-driven evolution on a finite-dimensional system: Hermitian `H`,
/// coupling `L`, horizon `T`, and optionally overridden general coefficients.
///
/// Without overrides the model is the unitary form, whose coefficients are
/// derived from `(H, L)`; with overrides the evolution need not be unitary
/// and operations that require unitarity reject it.
#[derive(Debug, Clone)]
pub struct HPModel {
    h: Operator,
    l: Operator,
    t_end: f64,
    general: Option<GeneralCoefficients>,
}

impl HPModel {
    /// Unitary-form model with coefficients derived from `(H, L)`.
    pub fn unitary(h: Operator, l: Operator, t_end: f64) -> Result<Self> {
        if h.dim() != l.dim() {
            return Err(Error::DimMismatch {
                left: h.dim(),
                right: l.dim(),
                context: "model energy and coupling",
            });
        }
        if h.dim() > MAX_DIM {
            return Err(Error::DimOutOfRange {
                dim: h.dim(),
                max: MAX_DIM,
            });
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::BadGrid {
                reason: "model horizon must be positive and finite",
            });
        }
        let h = h.certify_hermitian(CERT_TOL)?;
        Ok(HPModel {
            h,
            l,
            t_end,
            general: None,
        })
    }

    /// Replaces the derived coefficients with explicit `(F, G, Psi, Phi)`.
    pub fn with_coefficients(self, general: GeneralCoefficients) -> Result<Self> {
        for (op, context) in [
            (&general.drift, "model drift coefficient"),
            (&general.input, "model input channel"),
            (&general.annihilation, "model annihilation coefficient"),
            (&general.creation, "model creation coefficient"),
        ] {
            if op.dim() != self.dim() {
                return Err(Error::DimMismatch {
                    left: op.dim(),
                    right: self.dim(),
                    context,
                });
            }
        }
        Ok(HPModel {
            general: Some(general),
            ..self
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn is_unitary_form(&self) -> bool {
        self.general.is_none()
    }

    pub fn require_unitary(&self, context: &'static str) -> Result<()> {
        if self.is_unitary_form() {
            Ok(())
        } else {
            Err(Error::NonUnitaryForm { context })
        }
    }

    /// Effective drift `F`: the override, or `-(iH + L*L/2)`.
    pub fn drift(&self) -> CMat {
        match &self.general {
            Some(g) => g.drift.mat().clone(),
            None => {
                let h = self.h.mat();
                let l = self.l.mat();
                h * (-I) - l.adjoint() * l * c64(0.5)
            }
        }
    }

    /// Effective input channel `G`: the override, or the identity.
    pub fn control_input(&self) -> CMat {
        match &self.general {
            Some(g) => g.input.mat().clone(),
            None => CMat::identity(self.dim(), self.dim()),
        }
    }

    /// Effective annihilation coefficient `Psi`: the override, or `-L*`.
    pub fn annihilation_coeff(&self) -> CMat {
        match &self.general {
            Some(g) => g.annihilation.mat().clone(),
            None => -self.l.mat().adjoint(),
        }
    }

    /// Effective creation coefficient `Phi`: the override, or `L`.
    pub fn creation_coeff(&self) -> CMat {
        match &self.general {
            Some(g) => g.creation.mat().clone(),
            None => self.l.mat().clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// exponential-vector states
// ---------------------------------------------------------------------------

/// One piece of a piecewise-constant amplitude: `value` holds on
/// `[previous until, until)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSegment {
    pub until: f64,
    pub value: Complex64,
}

/// An exponential-vector state: unit system part `xi0` and a piecewise
/// constant scalar amplitude (zero past the last segment).
#[derive(Debug, Clone)]
pub struct ExpVectorState {
    xi0: CVec,
    segments: Vec<AmplitudeSegment>,
}

impl ExpVectorState {
    /// State with zero amplitude.
    pub fn vacuum(xi0: CVec) -> Result<Self> {
        Self::with_amplitude(xi0, Vec::new())
    }

    /// State with the given piecewise-constant amplitude.  Segment ends must
    /// be strictly increasing and positive.
    pub fn with_amplitude(xi0: CVec, segments: Vec<AmplitudeSegment>) -> Result<Self> {
        if xi0.is_empty() || xi0.len() > MAX_DIM {
            return Err(Error::DimOutOfRange {
                dim: xi0.len(),
                max: MAX_DIM,
            });
        }
        let norm = xi0.norm();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::BadState {
                reason: format!("system part must be a unit vector, got norm {norm:.17}"),
            });
        }
        let mut prev = 0.0;
        for seg in &segments {
            if !(seg.until > prev) || !seg.until.is_finite() {
                return Err(Error::BadState {
                    reason: format!(
                        "amplitude segment ends must be strictly increasing and positive, got {} after {}",
                        seg.until, prev
                    ),
                });
            }
            if !seg.value.re.is_finite() || !seg.value.im.is_finite() {
                return Err(Error::BadState {
                    reason: "amplitude values must be finite".into(),
                });
            }
            prev = seg.until;
        }
        Ok(ExpVectorState { xi0, segments })
    }

    pub fn dim(&self) -> usize {
        self.xi0.len()
    }

    pub fn xi0(&self) -> &CVec {
        &self.xi0
    }

    pub fn segments(&self) -> &[AmplitudeSegment] {
        &self.segments
    }

    /// True when the amplitude vanishes identically.
    pub fn is_vacuum(&self) -> bool {
        self.segments.iter().all(|s| s.value == ZERO)
    }

    /// End of the last amplitude segment (zero for the vacuum).
    pub fn amplitude_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.until)
    }

    /// Amplitude value at time `t` (zero past the last segment).
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let mut start = 0.0;
        for seg in &self.segments {
            if t >= start && t < seg.until {
                return seg.value;
            }
            start = seg.until;
        }
        ZERO
    }

    /// Exact squared L2 mass of the amplitude on `[from, infinity)`.
    pub fn amplitude_l2_tail(&self, from: f64) -> f64 {
        let mut start = 0.0f64;
        let mut total = 0.0;
        for seg in &self.segments {
            let lo = start.max(from);
            if seg.until > lo {
                total += seg.value.norm_sqr() * (seg.until - lo);
            }
            start = seg.until;
        }
        total
    }

    /// Squared norm of the full state, `exp(|f|_2^2)` for unit `xi0`.
    pub fn norm_squared(&self) -> f64 {
        self.amplitude_l2_tail(0.0).exp()
    }

    /// Initial dual density `xi0 xi0* . exp(|f|_2^2)`.
    fn initial_density(&self) -> CMat {
        let scale = c64(self.norm_squared());
        let mat = &self.xi0 * self.xi0.adjoint();
        mat * scale
    }
}

// ---------------------------------------------------------------------------
// trajectories
// ---------------------------------------------------------------------------

/// Expectation trajectories: one complex value per observable per grid node.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    grid: TimeGrid,
    values: Vec<Vec<Complex64>>,
}

impl TrajectorySet {
    pub(crate) fn new(grid: TimeGrid, values: Vec<Vec<Complex64>>) -> Self {
        debug_assert!(values.iter().all(|v| v.len() == grid.len()));
        TrajectorySet { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn observables(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, observable: usize, node: usize) -> Complex64 {
        self.values[observable][node]
    }

    pub fn observable_values(&self, observable: usize) -> &[Complex64] {
        &self.values[observable]
    }

    /// Largest absolute entrywise deviation from a trajectory set on the same
    /// grid.
    pub fn max_deviation(&self, other: &TrajectorySet) -> Result<f64> {
        if self.grid.steps() != other.grid.steps() || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch {
                context: "trajectory comparison",
            });
        }
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).norm());
            }
        }
        Ok(worst)
    }

    /// Largest deviation from a trajectory set on a refinement of this grid,
    /// compared at the shared nodes.
    pub fn max_deviation_at_shared_nodes(&self, fine: &TrajectorySet) -> Result<f64> {
        if fine.grid.steps() % self.grid.steps() != 0 || self.values.len() != fine.values.len() {
            return Err(Error::GridMismatch {
                context: "trajectory refinement comparison",
            });
        }
        let ratio = fine.grid.steps() / self.grid.steps();
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&fine.values) {
            for (i, x) in a.iter().enumerate() {
                worst = worst.max((x - b[i * ratio]).norm());
            }
        }
        Ok(worst)
    }
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

/// Heisenberg drift of the unitary form:
/// `theta0(Y) = i[H, Y] - (L*L Y + Y L*L - 2 L* Y L)/2`.
pub fn heisenberg_drift(model: &HPModel, y: &Operator) -> Result<Operator> {
    if y.dim() != model.dim() {
        return Err(Error::DimMismatch {
            left: y.dim(),
            right: model.dim(),
            context: "heisenberg drift observable",
        });
    }
    let h = model.h.mat();
    let l = model.l.mat();
    let y = y.mat();
    let ll = l.adjoint() * l;
    let mat = (h * y - y * h) * I - (&ll * y + y * &ll - l.adjoint() * y * l * c64(2.0)) * c64(0.5);
    Operator::new(mat)
}

/// Right-hand side of the dual-density ODE shared by every flow in this
/// module:
///
/// `sigma' = A sigma + sigma A* + Phi sigma Phi*
///           + f (Psi sigma + sigma Phi*) + conj(f) (Phi sigma + sigma Psi*)`
///
/// where `A` is the instantaneous drift (`F` plus any feedback gain).  The
/// amplitude terms pair the annihilation coefficient with `f`: on the domain
/// of exponential vectors the annihilation differential applied to the state
/// yields `f dt` times the state, and its adjoint yields the conjugate.  The
/// collision oracle certifies this pairing empirically (see the sign
/// validation test in the collision module).
fn dual_rhs(
    a: &CMat,
    phi: &CMat,
    phi_adj: &CMat,
    psi: &CMat,
    psi_adj: &CMat,
    f: Complex64,
    sigma: &CMat,
) -> CMat {
    let mut out = a * sigma + sigma * a.adjoint() + phi * sigma * phi_adj;
    if f != ZERO {
        out += (psi * sigma + sigma * phi_adj) * f + (phi * sigma + sigma * psi_adj) * f.conj();
    }
    out
}

struct DualMarch<'a> {
    phi: CMat,
    phi_adj: CMat,
    psi: CMat,
    psi_adj: CMat,
    state: &'a ExpVectorState,
    observables: &'a [Operator],
}

impl DualMarch<'_> {
    /// Classical RK4 on the dual density.  `drift_at` supplies the
    /// instantaneous drift at the three stage offsets of step `i` (node,
    /// midpoint, next node).  The amplitude is sampled once per step at the
    /// midpoint, which is exact when segment ends sit on grid nodes.
    fn run(
        &self,
        grid: &TimeGrid,
        drift_at: impl FnMut(usize) -> [CMat; 3],
    ) -> TrajectorySet {
        let mut values = vec![Vec::with_capacity(grid.len()); self.observables.len()];
        self.run_with(grid, drift_at, |_, sigma| {
            for (j, y) in self.observables.iter().enumerate() {
                values[j].push(trace_product(sigma, y.mat()));
            }
        });
        TrajectorySet::new(grid.clone(), values)
    }

    /// Same march, streamed: `on_node(i, density)` fires at every grid node
    /// instead of recording fixed observables, so callers can pair the
    /// density with node-dependent quantities without storing it.
    fn run_with(
        &self,
        grid: &TimeGrid,
        mut drift_at: impl FnMut(usize) -> [CMat; 3],
        mut on_node: impl FnMut(usize, &CMat),
    ) {
        let h = grid.dt();
        let mut sigma = self.state.initial_density();
        on_node(0, &sigma);
        for i in 0..grid.steps() {
            let [a0, a_half, a1] = drift_at(i);
            let f = self.state.amplitude(grid.node(i) + 0.5 * h);
            let rhs = |a: &CMat, s: &CMat| {
                dual_rhs(a, &self.phi, &self.phi_adj, &self.psi, &self.psi_adj, f, s)
            };
            let k1 = rhs(&a0, &sigma);
            let k2 = rhs(&a_half, &(&sigma + &k1 * c64(0.5 * h)));
            let k3 = rhs(&a_half, &(&sigma + &k2 * c64(0.5 * h)));
            let k4 = rhs(&a1, &(&sigma + &k3 * c64(h)));
            sigma += (k1 + k2 * c64(2.0) + k3 * c64(2.0) + k4) * c64(h / 6.0);
            on_node(i + 1, &sigma);
        }
    }
}

/// Trace of a product, `sum_ij a[i,j] b[j,i]`, without forming the product.
pub(crate) fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut total = ZERO;
    for i in 0..n {
        for j in 0..n {
            total += a[(i, j)] * b[(j, i)];
        }
    }
    total
}

fn require_horizon(model: &HPModel, grid: &TimeGrid) -> Result<()> {
    let scale = model.t_end().max(1.0);
    if (grid.t_end() - model.t_end()).abs() > HORIZON_TOL * scale {
        return Err(Error::GridMismatch {
            context: "grid horizon must match the model horizon",
        });
    }
    Ok(())
}

fn require_dims(model: &HPModel, state: &ExpVectorState, observables: &[Operator]) -> Result<()> {
    if state.dim() != model.dim() {
        return Err(Error::DimMismatch {
            left: state.dim(),
            right: model.dim(),
            context: "state system part",
        });
    }
    for y in observables {
        if y.dim() != model.dim() {
            return Err(Error::DimMismatch {
                left: y.dim(),
                right: model.dim(),
                context: "flow observable",
            });
        }
    }
    Ok(())
}

fn require_gain_schedule(model: &HPModel, gains: &[Operator], grid: &TimeGrid) -> Result<()> {
    if gains.len() != grid.len() {
        return Err(Error::GridMismatch {
            context: "gain schedule must supply one operator per grid node",
        });
    }
    for k in gains {
        if k.dim() != model.dim() {
            return Err(Error::DimMismatch {
                left: k.dim(),
                right: model.dim(),
                context: "gain schedule entry",
            });
        }
    }
    Ok(())
}

fn require_amplitude_within_horizon(model: &HPModel, state: &ExpVectorState) -> Result<()> {
    let end = state.amplitude_end();
    if end > model.t_end() * (1.0 + HORIZON_TOL) {
        return Err(Error::BadState {
            reason: format!(
                "amplitude segments end at {end} past the model horizon {}",
                model.t_end()
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// flows
// ---------------------------------------------------------------------------

/// Expectations `m_t(Y)` of the unitary-form flow at an exponential-vector
/// state, by RK4 on the dual density.  For the vacuum this is the quantum
/// dynamical semigroup in the Heisenberg picture.
pub fn flow_expectations(
    model: &HPModel,
    state: &ExpVectorState,
    observables: &[Operator],
    grid: &TimeGrid,
) -> Result<TrajectorySet> {
    model.require_unitary("flow expectations")?;
    require_dims(model, state, observables)?;
    require_horizon(model, grid)?;
    require_amplitude_within_horizon(model, state)?;
    let drift = model.drift();
    let phi = model.creation_coeff();
    let psi = model.annihilation_coeff();
    let march = DualMarch {
        phi_adj: phi.adjoint(),
        psi_adj: psi.adjoint(),
        phi,
        psi,
        state,
        observables,
    };
    Ok(march.run(grid, |_| [drift.clone(), drift.clone(), drift.clone()]))
}

/// Controlled sandwich expectations `S_t(Y)` at a vacuum state: RK4 on the
/// dual of `S_t((F+K)* Y + Y (F+K) + Phi* Y Phi)`, the exact vacuum
/// reduction of the general controlled increment (the annihilation
/// differential kills the vacuum on the right and the creation differential
/// on the left; only the cross term survives as `dt`).
///
/// The gain schedule supplies `K` at every grid node; stage values use the
/// nodes directly and the arithmetic midpoint between adjacent nodes.
pub fn controlled_sandwich_flow(
    model: &HPModel,
    gains: &[Operator],
    state: &ExpVectorState,
    grid: &TimeGrid,
    observables: &[Operator],
) -> Result<TrajectorySet> {
    if !state.is_vacuum() {
        return Err(Error::VacuumRequired {
            context: "controlled sandwich flow",
        });
    }
    controlled_sandwich_flow_driven(model, gains, state, grid, observables)
}

/// Experimental extension of [`controlled_sandwich_flow`] to driven
/// (non-vacuum) exponential-vector states, adding the amplitude terms of the
/// dual-density generator exactly as in [`flow_expectations`].  For the
/// unitary-form coefficients this reduces to `flow_expectations` with the
/// gain folded into the drift; the collision oracle cross-checks the general
/// case.
pub fn controlled_sandwich_flow_driven(
    model: &HPModel,
    gains: &[Operator],
    state: &ExpVectorState,
    grid: &TimeGrid,
    observables: &[Operator],
) -> Result<TrajectorySet> {
    require_dims(model, state, observables)?;
    require_horizon(model, grid)?;
    require_amplitude_within_horizon(model, state)?;
    require_gain_schedule(model, gains, grid)?;
    let drift = model.drift();
    let phi = model.creation_coeff();
    let psi = model.annihilation_coeff();
    let march = DualMarch {
        phi_adj: phi.adjoint(),
        psi_adj: psi.adjoint(),
        phi,
        psi,
        state,
        observables,
    };
    Ok(march.run(grid, |i| {
        let a0 = &drift + gains[i].mat();
        let a1 = &drift + gains[i + 1].mat();
        let a_half = (&a0 + &a1) * c64(0.5);
        [a0, a_half, a1]
    }))
}

/// Dual densities of the controlled evolution, streamed to `on_node` at every
/// grid node.  Identical stepping and validation to
/// [`controlled_sandwich_flow_driven`]; cost evaluators use this to pair the
/// density with node-dependent observables such as a time-varying gain.
pub(crate) fn controlled_density_march(
    model: &HPModel,
    gains: &[Operator],
    state: &ExpVectorState,
    grid: &TimeGrid,
    on_node: impl FnMut(usize, &CMat),
) -> Result<()> {
    require_dims(model, state, &[])?;
    require_horizon(model, grid)?;
    require_amplitude_within_horizon(model, state)?;
    require_gain_schedule(model, gains, grid)?;
    let drift = model.drift();
    let phi = model.creation_coeff();
    let psi = model.annihilation_coeff();
    let march = DualMarch {
        phi_adj: phi.adjoint(),
        psi_adj: psi.adjoint(),
        phi,
        psi,
        state,
        observables: &[],
    };
    march.run_with(
        grid,
        |i| {
            let a0 = &drift + gains[i].mat();
            let a1 = &drift + gains[i + 1].mat();
            let a_half = (&a0 + &a1) * c64(0.5);
            [a0, a_half, a1]
        },
        on_node,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

/// Conservation diagnostics of the unitary-form flow.
#[derive(Debug, Clone, Copy)]
pub struct UnitarityReport {
    /// `max_t |m_t(I)/m_0(I) - 1|`; the normalizer is the squared state
    /// norm, so this is `max_t |m_t(I) - 1|` at the vacuum.
    pub identity_residual: f64,
    /// Largest imaginary part of the flow of a Hermitian probe observable.
    pub hermiticity_residual: f64,
}

/// Measures how well the flow conserves the identity and Hermiticity.
pub fn unitarity_residual(
    model: &HPModel,
    state: &ExpVectorState,
    grid: &TimeGrid,
) -> Result<UnitarityReport> {
    model.require_unitary("unitarity residual")?;
    let dim = model.dim();
    // Hermitian probe: a fixed diagonal ramp plus the Hermitian parts of the
    // model, so the probe is nontrivial even for H = L = 0.
    let mut probe = CMat::zeros(dim, dim);
    for i in 0..dim {
        probe[(i, i)] = c64(i as f64 / dim as f64);
    }
    probe += model.h.mat();
    probe += (model.l.mat() + model.l.mat().adjoint()) * c64(0.5);
    let observables = [Operator::identity(dim), Operator::new(probe)?];
    let traj = flow_expectations(model, state, &observables, grid)?;
    let m0 = traj.value(0, 0).re;
    let mut identity_residual = 0.0f64;
    let mut hermiticity_residual = 0.0f64;
    for node in 0..grid.len() {
        identity_residual = identity_residual.max((traj.value(0, node).re / m0 - 1.0).abs());
        identity_residual = identity_residual.max((traj.value(0, node).im / m0).abs());
        hermiticity_residual = hermiticity_residual.max(traj.value(1, node).im.abs());
    }
    Ok(UnitarityReport {
        identity_residual,
        hermiticity_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{matrix_exp, ONE};
    use crate::rng;
    use nalgebra::DVector;

    const ONE_V: Complex64 = ONE;

    fn lowering() -> Operator {
        Operator::from_real_rows(2, &[0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    fn excited() -> CVec {
        DVector::from_column_slice(&[ZERO, ONE_V])
    }

    fn ground() -> CVec {
        DVector::from_column_slice(&[ONE_V, ZERO])
    }

    fn upper_projector() -> Operator {
        Operator::from_real_rows(2, &[0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn random_hermitian(rng: &mut impl rand::Rng, dim: usize) -> Operator {
        let g = rng::gaussian_matrix(rng, dim, dim);
        Operator::new((&g + g.adjoint()) * c64(0.5)).unwrap()
    }

    fn decay_model(t_end: f64) -> HPModel {
        HPModel::unitary(Operator::zeros(2), lowering(), t_end).unwrap()
    }

    // ---- model and state validation ----

    #[test]
    fn unitary_model_requires_hermitian_energy() {
        let h = Operator::from_real_rows(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            HPModel::unitary(h, Operator::zeros(2), 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn default_coefficients_reproduce_the_unitary_form() {
        let h = Operator::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let model = HPModel::unitary(h.clone(), lowering(), 1.0).unwrap();
        let expected = h.mat() * (-I) - lowering().mat().adjoint() * lowering().mat() * c64(0.5);
        assert!((model.drift() - expected).norm() < 1e-15);
        assert!((model.annihilation_coeff() + lowering().mat().adjoint()).norm() < 1e-15);
        assert!((model.creation_coeff() - lowering().mat()).norm() < 1e-15);
        assert!((model.control_input() - CMat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn coefficient_overrides_disable_unitary_entry_points() {
        let model = decay_model(1.0)
            .with_coefficients(GeneralCoefficients {
                drift: Operator::zeros(2),
                input: Operator::identity(2),
                annihilation: Operator::zeros(2),
                creation: Operator::zeros(2),
            })
            .unwrap();
        let state = ExpVectorState::vacuum(excited()).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let err = flow_expectations(&model, &state, &[upper_projector()], &grid);
        assert!(matches!(err, Err(Error::NonUnitaryForm { .. })));
    }

    #[test]
    fn state_rejects_unnormalized_system_part() {
        let xi = DVector::from_column_slice(&[ONE_V, ONE_V]);
        assert!(matches!(
            ExpVectorState::vacuum(xi),
            Err(Error::BadState { .. })
        ));
    }

    #[test]
    fn state_rejects_unordered_segments() {
        let segs = vec![
            AmplitudeSegment {
                until: 0.5,
                value: ONE_V,
            },
            AmplitudeSegment {
                until: 0.5,
                value: ZERO,
            },
        ];
        assert!(matches!(
            ExpVectorState::with_amplitude(ground(), segs),
            Err(Error::BadState { .. })
        ));
    }

    #[test]
    fn amplitude_lookup_and_tail_mass() {
        let segs = vec![
            AmplitudeSegment {
                until: 0.5,
                value: c64(2.0),
            },
            AmplitudeSegment {
                until: 1.0,
                value: Complex64::new(0.0, 1.0),
            },
        ];
        let state = ExpVectorState::with_amplitude(ground(), segs).unwrap();
        assert!(!state.is_vacuum());
        assert_eq!(state.amplitude(0.25), c64(2.0));
        assert_eq!(state.amplitude(0.75), Complex64::new(0.0, 1.0));
        assert_eq!(state.amplitude(1.5), ZERO);
        // 4 * 0.5 + 1 * 0.5 = 2.5 total; 4 * 0.25 + 0.5 from 0.25 on.
        assert!((state.amplitude_l2_tail(0.0) - 2.5).abs() < 1e-15);
        assert!((state.amplitude_l2_tail(0.25) - 1.5).abs() < 1e-15);
        assert!((state.norm_squared() - 2.5f64.exp()).abs() < 1e-12);
    }

    // ---- heisenberg drift ----

    #[test]
    fn drift_annihilates_the_identity() {
        let mut r = rng::seeded_rng(11);
        for dim in [2usize, 3, 5] {
            let h = random_hermitian(&mut r, dim);
            let l = Operator::new(rng::gaussian_matrix(&mut r, dim, dim)).unwrap();
            let model = HPModel::unitary(h, l.clone(), 1.0).unwrap();
            let out = heisenberg_drift(&model, &Operator::identity(dim)).unwrap();
            let scale = l.frobenius().powi(2).max(1.0);
            assert!(out.frobenius() <= 1e-14 * scale);
        }
    }

    #[test]
    fn drift_value_on_the_qubit_population_difference() {
        let model = decay_model(1.0);
        let y = Operator::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let out = heisenberg_drift(&model, &y).unwrap();
        // Direct 2x2 arithmetic: L*L = diag(0,1), L*YL = diag(0,1), giving
        // -((0,-1)+(0,-1)-2(0,1))/2 = diag(0, 2).
        let expected = Operator::from_real_rows(2, &[0.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((out.mat() - expected.mat()).norm() < 1e-15);
    }

    #[test]
    fn drift_preserves_hermiticity() {
        let mut r = rng::seeded_rng(12);
        for _ in 0..4 {
            let h = random_hermitian(&mut r, 3);
            let l = Operator::new(rng::gaussian_matrix(&mut r, 3, 3)).unwrap();
            let y = random_hermitian(&mut r, 3);
            let model = HPModel::unitary(h, l, 1.0).unwrap();
            let out = heisenberg_drift(&model, &y).unwrap();
            let scale = out.frobenius().max(1.0);
            assert!(out.asymmetry() <= 1e-14 * scale);
        }
    }

    #[test]
    fn commuting_diagonal_data_gives_zero_drift() {
        let l = Operator::from_real_rows(2, &[0.3, 0.0, 0.0, 0.7]).unwrap();
        let model = HPModel::unitary(Operator::zeros(2), l, 1.0).unwrap();
        let y = Operator::from_real_rows(2, &[2.0, 0.0, 0.0, -1.0]).unwrap();
        let out = heisenberg_drift(&model, &y).unwrap();
        assert!(out.frobenius() < 1e-15);
    }

    // ---- vacuum flows ----

    #[test]
    fn qubit_decay_matches_the_closed_form() {
        let model = decay_model(1.0);
        let state = ExpVectorState::vacuum(excited()).unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let traj =
            flow_expectations(&model, &state, &[upper_projector()], &grid).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            let expected = (-t).exp();
            assert!(
                (traj.value(0, i).re - expected).abs() < 1e-10,
                "node {i}: {} vs {expected}",
                traj.value(0, i).re
            );
        }
    }

    #[test]
    fn identity_flow_is_constant_and_zero_coupling_freezes_everything() {
        let mut r = rng::seeded_rng(13);
        let h = random_hermitian(&mut r, 3);
        let model = HPModel::unitary(h.clone(), Operator::zeros(3), 2.0).unwrap();
        let xi = DVector::from_column_slice(&[ONE_V, ZERO, ZERO]);
        let state = ExpVectorState::vacuum(xi).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        // Observable commuting with H stays constant when L = 0.
        let traj =
            flow_expectations(&model, &state, &[Operator::identity(3), h.clone()], &grid)
                .unwrap();
        for node in 0..grid.len() {
            assert!((traj.value(0, node) - ONE_V).norm() < 1e-12);
            assert!((traj.value(1, node) - traj.value(1, 0)).norm() < 1e-11);
        }
    }

    #[test]
    fn unitarity_report_is_tight_for_unitary_models_and_catches_corruption() {
        let mut r = rng::seeded_rng(14);
        let h = random_hermitian(&mut r, 2);
        let l = Operator::new(rng::gaussian_matrix(&mut r, 2, 2)).unwrap();
        let model = HPModel::unitary(h.clone(), l.clone(), 1.0).unwrap();
        let state = ExpVectorState::vacuum(ground()).unwrap();
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let report = unitarity_residual(&model, &state, &grid).unwrap();
        assert!(report.identity_residual <= 1e-8, "{report:?}");
        assert!(report.hermiticity_residual <= 1e-8, "{report:?}");

        let zero_l = HPModel::unitary(h.clone(), Operator::zeros(2), 1.0).unwrap();
        let report = unitarity_residual(&zero_l, &state, &grid).unwrap();
        assert!(report.identity_residual <= 1e-12, "{report:?}");

        // Negative control: dropping the sandwich term from the dual density
        // generator loses mass linearly in t (coupling kept weak so the
        // defect stays in the linear regime over the horizon).
        let l = l.scale(c64(0.3));
        let hm = h.mat().clone();
        let lm = l.mat().clone();
        let ll = lm.adjoint() * &lm;
        let mut sigma = {
            let xi = ground();
            &xi * xi.adjoint()
        };
        let steps = 400usize;
        let dt = 1.0 / steps as f64;
        let rhs = |s: &CMat| {
            (&hm * s - s * &hm) * (-I) - (&ll * s + s * &ll) * c64(0.5)
        };
        let mut residual_quarter = 0.0f64;
        let mut residual_full = 0.0f64;
        for i in 0..steps {
            let k1 = rhs(&sigma);
            let k2 = rhs(&(&sigma + &k1 * c64(0.5 * dt)));
            let k3 = rhs(&(&sigma + &k2 * c64(0.5 * dt)));
            let k4 = rhs(&(&sigma + &k3 * c64(dt)));
            sigma += (k1 + k2 * c64(2.0) + k3 * c64(2.0) + k4) * c64(dt / 6.0);
            let defect = (sigma.trace().re - 1.0).abs();
            if i + 1 == steps / 4 {
                residual_quarter = defect;
            }
            if i + 1 == steps {
                residual_full = defect;
            }
        }
        assert!(residual_full > 1e-3, "corruption must be visible");
        // Linear growth: the defect at t = 1 is roughly 4x the defect at
        // t = 0.25 (within a factor allowing for curvature).
        let ratio = residual_full / residual_quarter;
        assert!((2.0..8.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn flow_richardson_ratio_shows_fourth_order() {
        let model = decay_model(1.0);
        let state = ExpVectorState::vacuum(excited()).unwrap();
        let coarse = TimeGrid::new(1.0, 16).unwrap();
        let medium = coarse.refined();
        let fine = medium.refined();
        let y = [upper_projector()];
        let t_coarse = flow_expectations(&model, &state, &y, &coarse).unwrap();
        let t_medium = flow_expectations(&model, &state, &y, &medium).unwrap();
        let t_fine = flow_expectations(&model, &state, &y, &fine).unwrap();
        let d1 = t_coarse.max_deviation_at_shared_nodes(&t_medium).unwrap();
        let d2 = t_medium.max_deviation_at_shared_nodes(&t_fine).unwrap();
        let ratio = d1 / d2;
        assert!((10.0..24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn cauchy_schwarz_holds_along_random_vacuum_flows() {
        let mut r = rng::seeded_rng(15);
        for dim in [2usize, 3] {
            for _ in 0..3 {
                let h = random_hermitian(&mut r, dim);
                let l = Operator::new(rng::gaussian_matrix(&mut r, dim, dim)).unwrap();
                let y = random_hermitian(&mut r, dim);
                let y2 = Operator::new(y.mat() * y.mat()).unwrap();
                let model = HPModel::unitary(h, l, 1.0).unwrap();
                let mut xi = rng::gaussian_matrix(&mut r, dim, 1).column(0).into_owned();
                xi /= c64(xi.norm());
                let state = ExpVectorState::vacuum(xi).unwrap();
                let grid = TimeGrid::new(1.0, 200).unwrap();
                let traj = flow_expectations(&model, &state, &[y, y2], &grid).unwrap();
                for node in 0..grid.len() {
                    let m_y = traj.value(0, node).re;
                    let m_y2 = traj.value(1, node).re;
                    assert!(m_y2 >= m_y * m_y - 1e-8, "node {node}: {m_y2} vs {m_y}");
                }
            }
        }
    }

    // ---- driven flows ----

    #[test]
    fn driven_identity_expectation_equals_the_squared_state_norm() {
        let model = decay_model(1.0);
        let segs = vec![
            AmplitudeSegment {
                until: 0.5,
                value: Complex64::new(0.8, -0.4),
            },
            AmplitudeSegment {
                until: 1.0,
                value: Complex64::new(-0.2, 0.6),
            },
        ];
        let state = ExpVectorState::with_amplitude(excited(), segs).unwrap();
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let traj =
            flow_expectations(&model, &state, &[Operator::identity(2)], &grid).unwrap();
        let norm2 = state.norm_squared();
        for node in 0..grid.len() {
            assert!(
                (traj.value(0, node).re - norm2).abs() < 1e-9 * norm2,
                "node {node}"
            );
            assert!(traj.value(0, node).im.abs() < 1e-12 * norm2);
        }
    }

    #[test]
    fn constant_real_drive_on_a_qubit_matches_the_displaced_master_equation() {
        // For H = 0, L = lowering and constant amplitude f, the normalized
        // expectations solve the master equation with displaced coupling:
        // rho' = L rho L* - {L*L, rho}/2 + f [rho, L*] + conj(f) [L, rho].
        // Cross-check against dense evolution of the normalized density by a
        // very fine independent Euler scheme.
        let model = decay_model(1.0);
        let f = Complex64::new(0.6, 0.3);
        let segs = vec![AmplitudeSegment {
            until: 1.0,
            value: f,
        }];
        let state = ExpVectorState::with_amplitude(excited(), segs).unwrap();
        let grid = TimeGrid::new(1.0, 800).unwrap();
        let y = upper_projector();
        let traj = flow_expectations(&model, &state, &[y.clone()], &grid).unwrap();

        let lm = lowering().mat().clone();
        let ll = lm.adjoint() * &lm;
        let steps = 200_000usize;
        let dt = 1.0 / steps as f64;
        let xi = excited();
        let mut rho = &xi * xi.adjoint();
        for _ in 0..steps {
            let d = &lm * &rho * lm.adjoint() - (&ll * &rho + &rho * &ll) * c64(0.5)
                + (&rho * lm.adjoint() - lm.adjoint() * &rho) * f
                + (&lm * &rho - &rho * &lm) * f.conj();
            rho += d * c64(dt);
        }
        let euler_at_end = trace_product(&rho, y.mat());
        let normalized = traj.value(0, grid.len() - 1) / c64(state.norm_squared());
        assert!(
            (normalized - euler_at_end).norm() < 1e-4,
            "{normalized} vs {euler_at_end}"
        );
    }

    // ---- controlled sandwich ----

    #[test]
    fn sandwich_requires_vacuum_and_full_gain_schedule() {
        let model = decay_model(1.0);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let gains = vec![Operator::zeros(2); grid.len()];
        let segs = vec![AmplitudeSegment {
            until: 1.0,
            value: ONE_V,
        }];
        let driven = ExpVectorState::with_amplitude(excited(), segs).unwrap();
        assert!(matches!(
            controlled_sandwich_flow(&model, &gains, &driven, &grid, &[upper_projector()]),
            Err(Error::VacuumRequired { .. })
        ));
        let vacuum = ExpVectorState::vacuum(excited()).unwrap();
        let short = vec![Operator::zeros(2); grid.len() - 1];
        assert!(matches!(
            controlled_sandwich_flow(&model, &short, &vacuum, &grid, &[upper_projector()]),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn zero_gain_sandwich_reproduces_the_vacuum_flow() {
        let mut r = rng::seeded_rng(16);
        let h = random_hermitian(&mut r, 2);
        let l = Operator::new(rng::gaussian_matrix(&mut r, 2, 2)).unwrap();
        let model = HPModel::unitary(h, l, 1.0).unwrap();
        let state = ExpVectorState::vacuum(ground()).unwrap();
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let y = [upper_projector(), Operator::identity(2)];
        let gains = vec![Operator::zeros(2); grid.len()];
        let sandwich = controlled_sandwich_flow(&model, &gains, &state, &grid, &y).unwrap();
        let flow = flow_expectations(&model, &state, &y, &grid).unwrap();
        assert!(sandwich.max_deviation(&flow).unwrap() < 1e-12);
    }

    #[test]
    fn hamiltonian_sandwich_matches_closed_form_conjugation() {
        // Phi = 0, K = 0, F = -iH: S_t(Y) = <xi0, exp(iHt) Y exp(-iHt) xi0>.
        let mut r = rng::seeded_rng(17);
        let h = random_hermitian(&mut r, 3);
        let model = HPModel::unitary(h.clone(), Operator::zeros(3), 1.0)
            .unwrap()
            .with_coefficients(GeneralCoefficients {
                drift: h.scale(-I),
                input: Operator::identity(3),
                annihilation: Operator::zeros(3),
                creation: Operator::zeros(3),
            })
            .unwrap();
        let y = random_hermitian(&mut r, 3);
        let mut xi = rng::gaussian_matrix(&mut r, 3, 1).column(0).into_owned();
        xi /= c64(xi.norm());
        let state = ExpVectorState::vacuum(xi.clone()).unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let gains = vec![Operator::zeros(3); grid.len()];
        let traj = controlled_sandwich_flow(&model, &gains, &state, &grid, &[y.clone()]).unwrap();
        for (i, t) in grid.nodes().enumerate().step_by(50) {
            let u = matrix_exp(&h.scale(I * c64(t)));
            let conj = u.mat() * y.mat() * matrix_exp(&h.scale(-I * c64(t))).mat();
            let expected = (xi.adjoint() * conj * &xi)[(0, 0)];
            assert!(
                (traj.value(0, i) - expected).norm() < 1e-9,
                "t = {t}: {} vs {expected}",
                traj.value(0, i)
            );
        }
    }

    #[test]
    fn scalar_sandwich_grows_at_twice_the_total_drift() {
        // dim 1, F = f, Phi = 0, K = k: S_t(1) = exp(2 (f + k) t).
        let f = 0.35f64;
        let k = -0.1f64;
        let model = HPModel::unitary(Operator::zeros(1), Operator::zeros(1), 2.0)
            .unwrap()
            .with_coefficients(GeneralCoefficients {
                drift: Operator::from_real_rows(1, &[f]).unwrap(),
                input: Operator::identity(1),
                annihilation: Operator::zeros(1),
                creation: Operator::zeros(1),
            })
            .unwrap();
        let state = ExpVectorState::vacuum(DVector::from_column_slice(&[ONE_V])).unwrap();
        let grid = TimeGrid::new(2.0, 400).unwrap();
        let gains = vec![Operator::from_real_rows(1, &[k]).unwrap(); grid.len()];
        let traj =
            controlled_sandwich_flow(&model, &gains, &state, &grid, &[Operator::identity(1)])
                .unwrap();
        for (i, t) in grid.nodes().enumerate().step_by(40) {
            let expected = (2.0 * (f + k) * t).exp();
            assert!(
                (traj.value(0, i).re - expected).abs() < 1e-8 * expected,
                "t = {t}"
            );
        }
    }

    #[test]
    fn gain_schedule_convergence_orders_match_the_midpoint_sampling() {
        // Stage gains between nodes are chord averages.  That is exact for
        // gains linear in t (full 4th order), and an O(h^2) stage
        // perturbation for curved schedules (honest 2nd order).
        let mut r = rng::seeded_rng(18);
        let h = random_hermitian(&mut r, 2);
        let l = Operator::new(rng::gaussian_matrix(&mut r, 2, 2)).unwrap();
        let model = HPModel::unitary(h, l, 1.0).unwrap();
        let state = ExpVectorState::vacuum(ground()).unwrap();
        let y = [upper_projector()];
        let ratio_for = |gain_at: &dyn Fn(f64) -> Operator| {
            let run = |steps: usize| {
                let grid = TimeGrid::new(1.0, steps).unwrap();
                let gains: Vec<Operator> = grid.nodes().map(gain_at).collect();
                controlled_sandwich_flow(&model, &gains, &state, &grid, &y).unwrap()
            };
            let coarse = run(16);
            let medium = run(32);
            let fine = run(64);
            let d1 = coarse.max_deviation_at_shared_nodes(&medium).unwrap();
            let d2 = medium.max_deviation_at_shared_nodes(&fine).unwrap();
            d1 / d2
        };
        let linear = ratio_for(&|t: f64| {
            Operator::from_real_rows(2, &[0.4 * t, 0.1, -0.1, -0.2 * t]).unwrap()
        });
        assert!((10.0..24.0).contains(&linear), "linear gain ratio {linear}");
        let curved = ratio_for(&|t: f64| {
            Operator::from_real_rows(2, &[0.8 * (3.0 * t).sin(), 0.1, -0.1, -0.2 * t * t])
                .unwrap()
        });
        assert!((3.0..7.0).contains(&curved), "curved gain ratio {curved}");
    }
}
