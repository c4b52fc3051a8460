//! Dense complex linear algebra over multi-qubit registers.
//!
//! Global ordering convention, fixed once for the whole crate: registers are
//! laid out in the order control | flag | memory | active | internal, and
//! qubit 0 is the **most significant** bit of a basis index. For an
//! `n`-qubit system, qubit `q` owns bit `n - 1 - q` of the index, so
//! `|q0 q1 ... q_{n-1}>` has index `q0 * 2^{n-1} + ... + q_{n-1}`.
//! Kronecker products follow the same convention: the left factor is the
//! most significant.

mod apply;
mod layout;
mod operator;
mod state;

pub use apply::{
    apply_to_density, apply_to_pure, apply_to_state, partial_trace_qubits, permute_density,
    permute_state, project_density, project_state, sandwich,
};
pub(crate) use apply::apply_to_state_mut;
pub use layout::{QubitLayout, Register, QUBIT_CAP};
pub use operator::{
    hermiticity_deviation, kron, kron_vec, min_eigenvalue_hermitian, op_norm, Operator, Pauli,
};
pub use state::{DensityMatrix, PureState};

use num_complex::Complex;

/// Complex double-precision scalar used for all amplitudes and matrix entries.
pub type C64 = Complex<f64>;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Returns true when every entry of the slice is finite.
pub(crate) fn all_finite<'a>(entries: impl IntoIterator<Item = &'a C64>) -> bool {
    entries
        .into_iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
}
