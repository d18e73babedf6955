//! Experiment configuration: one JSON document per run.
//!
//! Complex scalars are written as `[re, im]` pairs, vectors as lists of
//! pairs, and matrices as row-major lists of rows, matching the operator
//! literal convention of the core crate.  Every experiment kind reads the
//! same top-level document and requires its own subset of fields; unknown
//! fields are rejected so a typo cannot silently change a run.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::Deserialize;

use quadflow_core::flow::{AmplitudeSegment, ExpVectorState, GeneralCoefficients, HPModel};
use quadflow_core::grid::TimeGrid;
use quadflow_core::operator::{CVec, Operator};
use quadflow_core::riccati::CostSpec;

use crate::experiment::{RunError, RunResult};

/// Complex matrix literal: rows of `[re, im]` entries.
pub type MatrixLiteral = Vec<Vec<[f64; 2]>>;
/// Complex vector literal: entries as `[re, im]` pairs.
pub type VectorLiteral = Vec<[f64; 2]>;

pub fn operator(literal: &MatrixLiteral) -> RunResult<Operator> {
    Ok(Operator::from_literal(literal)?)
}

pub fn vector(literal: &VectorLiteral) -> CVec {
    CVec::from_fn(literal.len(), |i, _| {
        Complex64::new(literal[i][0], literal[i][1])
    })
}

/// Time grid: a step count plus a horizon.  The horizon may be omitted when
/// the model supplies one; when both are present they must agree.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub steps: usize,
    #[serde(default)]
    pub t_end: Option<f64>,
}

impl GridConfig {
    pub fn build(&self, model_t_end: Option<f64>) -> RunResult<TimeGrid> {
        let t_end = match (self.t_end, model_t_end) {
            (Some(own), Some(model)) => {
                if (own - model).abs() > 1e-12 * model.abs().max(1.0) {
                    return Err(RunError::Validation(format!(
                        "grid t_end {own} disagrees with the model horizon {model}"
                    )));
                }
                model
            }
            (Some(own), None) => own,
            (None, Some(model)) => model,
            (None, None) => {
                return Err(RunError::Validation(
                    "grid needs a t_end when no model supplies a horizon".into(),
                ))
            }
        };
        Ok(TimeGrid::new(t_end, self.steps)?)
    }
}

/// Evolution model literal: the unitary-form operator pair plus a horizon,
/// with optional coefficient overrides for non-unitary arrangements.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub h: MatrixLiteral,
    pub l: MatrixLiteral,
    pub t_end: f64,
    #[serde(default)]
    pub coefficients: Option<CoefficientsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub drift: MatrixLiteral,
    pub input: MatrixLiteral,
    pub annihilation: MatrixLiteral,
    pub creation: MatrixLiteral,
}

impl ModelConfig {
    pub fn build(&self) -> RunResult<HPModel> {
        let model = HPModel::unitary(operator(&self.h)?, operator(&self.l)?, self.t_end)?;
        match &self.coefficients {
            None => Ok(model),
            Some(c) => Ok(model.with_coefficients(GeneralCoefficients {
                drift: operator(&c.drift)?,
                input: operator(&c.input)?,
                annihilation: operator(&c.annihilation)?,
                creation: operator(&c.creation)?,
            })?),
        }
    }
}

/// Exponential-vector state literal: a unit system vector plus an optional
/// piecewise-constant amplitude (absent or empty means the vacuum).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub xi0: VectorLiteral,
    #[serde(default)]
    pub amplitude: Vec<AmplitudeSegmentConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSegmentConfig {
    pub until: f64,
    pub value: [f64; 2],
}

impl StateConfig {
    pub fn build(&self) -> RunResult<ExpVectorState> {
        let xi0 = vector(&self.xi0);
        if self.amplitude.is_empty() {
            Ok(ExpVectorState::vacuum(xi0)?)
        } else {
            let segments = self
                .amplitude
                .iter()
                .map(|s| AmplitudeSegment {
                    until: s.until,
                    value: Complex64::new(s.value[0], s.value[1]),
                })
                .collect();
            Ok(ExpVectorState::with_amplitude(xi0, segments)?)
        }
    }
}

/// Cost data literal; the linear weights default to zero.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q: MatrixLiteral,
    pub r: MatrixLiteral,
    #[serde(default)]
    pub m: Option<MatrixLiteral>,
    #[serde(default)]
    pub eta: Option<MatrixLiteral>,
    pub q_terminal: MatrixLiteral,
    #[serde(default)]
    pub m_terminal: Option<MatrixLiteral>,
}

impl CostConfig {
    pub fn build(&self) -> RunResult<CostSpec> {
        let q = operator(&self.q)?;
        let dim = q.dim();
        let or_zeros = |lit: &Option<MatrixLiteral>| -> RunResult<Operator> {
            match lit {
                Some(rows) => operator(rows),
                None => Ok(Operator::zeros(dim)),
            }
        };
        Ok(CostSpec::new(
            q.clone(),
            operator(&self.r)?,
            or_zeros(&self.m)?,
            or_zeros(&self.eta)?,
            operator(&self.q_terminal)?,
            or_zeros(&self.m_terminal)?,
        )?)
    }
}

/// The complete run document.  `kind` selects the experiment; the remaining
/// fields are read by the kinds that need them and must otherwise be absent
/// only if unknown (extra known fields are tolerated, unknown ones are not).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub state: Option<StateConfig>,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    /// `derive`: noise table selector.
    #[serde(default)]
    pub table: Option<String>,
    /// `solve-are`, `probe-optimality`, `cost-equivalence`: state observable.
    #[serde(default)]
    pub x: Option<MatrixLiteral>,
    /// `probe-optimality`: terminal weight (defaults to zero).
    #[serde(default)]
    pub terminal_weight: Option<MatrixLiteral>,
    /// `simulate`: observables to track.
    #[serde(default)]
    pub observables: Option<Vec<MatrixLiteral>>,
    /// `simulate`: per-step mode truncation for the collision cross-check.
    #[serde(default)]
    pub collision_truncation: Option<usize>,
    /// `probe-optimality`: displacement sizes.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// `probe-optimality`: displacement schedules per size.
    #[serde(default)]
    pub trials: Option<usize>,
    /// `solve-are`: solver tolerance.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// `riccati`, `classical-lqr`: affine drift operator.
    #[serde(default)]
    pub affine_drift: Option<MatrixLiteral>,
    /// `classical-lqr`: state matrix.
    #[serde(default)]
    pub f: Option<MatrixLiteral>,
    /// `classical-lqr`: input matrix.
    #[serde(default)]
    pub g: Option<MatrixLiteral>,
}

impl ExperimentConfig {
    fn missing(&self, field: &str) -> RunError {
        RunError::Validation(format!(
            "kind `{}` requires the `{field}` field",
            self.kind
        ))
    }

    pub fn require_model(&self) -> RunResult<HPModel> {
        self.model
            .as_ref()
            .ok_or_else(|| self.missing("model"))?
            .build()
    }

    pub fn require_state(&self) -> RunResult<ExpVectorState> {
        self.state
            .as_ref()
            .ok_or_else(|| self.missing("state"))?
            .build()
    }

    pub fn require_grid(&self, model_t_end: Option<f64>) -> RunResult<TimeGrid> {
        self.grid
            .as_ref()
            .ok_or_else(|| self.missing("grid"))?
            .build(model_t_end)
    }

    pub fn require_cost(&self) -> RunResult<CostSpec> {
        self.cost
            .as_ref()
            .ok_or_else(|| self.missing("cost"))?
            .build()
    }

    pub fn require_matrix(
        &self,
        literal: &Option<MatrixLiteral>,
        field: &str,
    ) -> RunResult<Operator> {
        operator(literal.as_ref().ok_or_else(|| self.missing(field))?)
    }
}
