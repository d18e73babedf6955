use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension {dim} outside supported range 1..={max}")]
    DimOutOfRange { dim: usize, max: usize },

    #[error("dimension mismatch: {left} vs {right} in {context}")]
    DimMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("matrix not Hermitian: anti-Hermitian part {asymmetry:.3e} exceeds {tol:.3e} (relative Frobenius)")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("matrix not positive semidefinite: min eigenvalue {min_eig:.3e} below -{tol:.3e} (relative)")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("matrix not invertible: min singular value ratio {ratio:.3e}")]
    Singular { ratio: f64 },

    #[error("Sylvester pencil near-singular: spectral separation {separation:.3e}")]
    SingularPencil { separation: f64 },

    #[error("linear solve residual {residual:.3e} exceeds bound {bound:.3e}")]
    ResidualBound { residual: f64, bound: f64 },

    #[error("eigenvalue iteration failed to converge")]
    EigenFailed,

    #[error("unknown noise label `{label}`")]
    UnknownLabel { label: String },

    #[error("substitution for `{symbol}` must be differential-free")]
    DifferentialInSubstitution { symbol: String },

    #[error("symbolic identity failed for `{context}`: residual has {terms} nonzero terms")]
    SymbolicResidual { context: &'static str, terms: usize },

    #[error("model must be in unitary form (no general coefficient overrides) for {context}")]
    NonUnitaryForm { context: &'static str },

    #[error("state must be the vacuum for {context}")]
    VacuumRequired { context: &'static str },

    #[error("time grid mismatch in {context}")]
    GridMismatch { context: &'static str },

    #[error("invalid grid: {reason}")]
    BadGrid { reason: &'static str },

    #[error("invalid state: {reason}")]
    BadState { reason: String },

    #[error("invalid cost data: {reason}")]
    BadCost { reason: String },

    #[error("trajectory blow-up at t={t:.6}: norm {norm:.3e}")]
    BlowUp { t: f64, norm: f64 },

    #[error("Newton iteration stagnated after {iters} steps at residual {residual:.3e}")]
    NewtonStagnation { iters: usize, residual: f64 },

    #[error("iterate lost positivity at iteration {iter}: min eigenvalue {min_eig:.3e}")]
    LostPositivity { iter: usize, min_eig: f64 },

    #[error("operators required to commute do not: commutator residual {residual:.3e}")]
    NonCommuting { residual: f64 },

    #[error("{context} has imaginary residue {residue:.3e} beyond {bound:.3e}")]
    ImaginaryResidue {
        context: &'static str,
        residue: f64,
        bound: f64,
    },

    #[error("{context}: {reason}")]
    Unsupported {
        context: &'static str,
        reason: String,
    },
}
