use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),

    #[error("signature mismatch: {left} vs {right}")]
    SignatureMismatch { left: String, right: String },

    #[error("grade {grade} out of range for {n} generators")]
    GradeOutOfRange { grade: usize, n: usize },

    #[error("expected a Cl(4,1) multivector, got {0}")]
    WrongSignature(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("multivector is not invertible (|det ρ| = {det:e})")]
    NotInvertible { det: f64 },

    #[error("Cayley map singular: 2 + B is not invertible (B has an eigenvalue of -2)")]
    CayleySingular,

    #[error(
        "Cayley map singular at step {step}: 2 + B is not invertible (B has an eigenvalue of -2)"
    )]
    CayleySingularAt { step: usize },

    #[error("degenerate state: <Ψ Ψ~>_0 = {norm:e} is not positive")]
    DegenerateState { norm: f64 },

    #[error("degenerate state at step {step}: <Ψ Ψ~>_0 = {norm:e} is not positive")]
    DegenerateStateAt { step: usize, norm: f64 },

    #[error("not a rotor: {0}")]
    NotARotor(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called on an empty tape")]
    EmptyTape,

    #[error("loss node must be scalar, has {0} components")]
    NonScalarLoss(usize),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
