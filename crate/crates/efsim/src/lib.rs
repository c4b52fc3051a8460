//! Simulation toolkit for interferometric error filtration (EF) of noisy
//! quantum operations.
//!
//! A noisy black-box apparatus is modelled as a Kraus channel. EF runs `T`
//! calls to the apparatus in superposition, steered by `log2 T` control
//! qubits, and post-selects the control register on the all-`|+>` outcome.
//! Stochastic apparatus errors are suppressed by roughly `1/T` at the price
//! of a reduced success probability.
//!
//! The crate is organised as follows:
//!
//! - [`linalg`]: dense complex linear algebra over multi-qubit registers
//!   (states, operators, tensor products, partial traces, subsystem ops).
//! - [`channels`]: Kraus channels, CPTP validation, a standard noise-channel
//!   library, dominant-Kraus decomposition and pseudo-vacuum certificates.
//! - [`engine`]: the EF circuit itself, with an exact density-matrix backend
//!   and a seeded Monte-Carlo trajectory backend, fault injection and a
//!   flag-qubit variant.
//! - [`analytics`]: closed-form evaluators for the output state, success
//!   bounds, the single-control improvement guarantee and the large-`T`
//!   limit state.
//! - [`ancilla`]: quantitative modelling of control/memory faults:
//!   location enumeration, first-order perturbative expansion, error
//!   hierarchy and optimal-`T` analysis.
//! - [`qram`]: a bucket-brigade quantum RAM circuit model used as a
//!   realistic many-qubit apparatus for EF experiments.
//!
//! All state values are immutable after construction and all operations are
//! pure functions, so everything can be called from parallel workers.

pub mod analytics;
pub mod ancilla;
pub mod channels;
pub mod engine;
pub mod linalg;
pub mod qram;
pub mod random;

pub use channels::{DominantDecomposition, KrausChannel, PseudoVacuumCertificate};
pub use engine::{Backend, EfConfig, EfResult, FaultSpec};
pub use linalg::{DensityMatrix, Operator, PureState, QubitLayout, Register, C64};

/// Errors shared across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("qubit cap exceeded: {requested} qubits requested, dense simulation is capped at {cap}")]
    QubitCapExceeded { requested: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("register {0:?} is empty in this layout")]
    EmptyRegister(Register),
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
    #[error("non-finite amplitude or matrix entry")]
    NonFinite,
    #[error("matrix is not Hermitian within tolerance {0:e}")]
    NotHermitian(f64),
    #[error("matrix is not unitary within tolerance {0:e}")]
    NotUnitary(f64),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid fault location: {0}")]
    InvalidFault(String),
    #[error("no trajectory was accepted by post-selection")]
    ZeroAcceptance,
    #[error("enumeration guard exceeded: {terms} trajectory terms (limit {limit})")]
    EnumerationGuard { terms: u128, limit: u128 },
    #[error("no valid pseudo-vacuum state for this channel: {0}")]
    NoPseudoVacuum(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
