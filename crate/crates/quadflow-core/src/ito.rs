//! Symbolic quantum Itô calculus.
//!
//! [`expr`] holds the noncommutative expression algebra, [`table`] the noise
//! multiplication tables, and [`derive`] the mechanical derivations built on
//! top of them (flow coefficients, Riccati coefficient reduction, completion
//! of squares).

pub mod derive;
pub mod expr;
pub mod table;

pub use derive::{
    derive_flow_generator, expand_riccati_coefficients, flow_equation_text,
    printed_noise_rule_diff, unitarity_defect, unitary_increment,
    verify_completion_of_squares, CancellationReport, CoefficientReduction, CoefficientShape,
    FlowCoefficients,
};
pub use expr::{ito_product, mul_differentials, Coeff, NcExpr, OpSym, ScalarSym, Term};
pub use table::{ItoTable, NoiseBasis};
