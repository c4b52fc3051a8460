use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{all_finite, c, cr, C64};
use crate::{Error, Result};

/// Single-qubit Pauli operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> DMatrix<C64> {
        match self {
            Pauli::X => DMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
        }
    }
}

impl std::fmt::Display for Pauli {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        })
    }
}

/// Kronecker product of two square matrices; the left factor is the most
/// significant.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Kronecker product of two vectors; the left factor is the most significant.
pub fn kron_vec(a: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::from_element(a.len() * b.len(), cr(0.0));
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// A square complex matrix acting on some register, with an optional
/// unitarity marker checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
    unitary: bool,
}

impl Operator {
    /// Wraps a general (not necessarily unitary) matrix.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if !all_finite(matrix.iter()) {
            return Err(Error::NonFinite);
        }
        Ok(Operator {
            matrix,
            unitary: false,
        })
    }

    /// Wraps a matrix, verifying `||O^dag O - I||_op <= 1e-10`.
    pub fn unitary(matrix: DMatrix<C64>) -> Result<Self> {
        let mut op = Operator::new(matrix)?;
        let dev = op.unitarity_deviation();
        if dev > 1e-10 {
            return Err(Error::NotUnitary(dev));
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            matrix: DMatrix::identity(dim, dim),
            unitary: true,
        }
    }

    pub fn pauli(p: Pauli) -> Self {
        Operator {
            matrix: p.matrix(),
            unitary: true,
        }
    }

    pub fn hadamard() -> Self {
        let s = cr(std::f64::consts::FRAC_1_SQRT_2);
        Operator {
            matrix: DMatrix::from_row_slice(2, 2, &[s, s, s, -s]),
            unitary: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    /// Whether the unitary flag was set at construction.
    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            unitary: self.unitary,
        }
    }

    pub fn apply_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.matrix * v
    }

    /// `||O^dag O - I||_op`.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        let dev = self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(d, d);
        op_norm(&dev)
    }

    /// Tensor product; the left factor is most significant.
    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let qubits = (self.dim().ilog2() + other.dim().ilog2()) as usize;
        if qubits > super::QUBIT_CAP {
            return Err(Error::QubitCapExceeded {
                requested: qubits,
                cap: super::QUBIT_CAP,
            });
        }
        Ok(Operator {
            matrix: kron(&self.matrix, &other.matrix),
            unitary: self.unitary && other.unitary,
        })
    }
}

/// Spectral (operator) norm: the largest singular value.
pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue_hermitian(m: &DMatrix<C64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest Hermitian deviation `max_ij |m_ij - conj(m_ji)|`.
pub fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kron_identity_case() {
        let i2 = DMatrix::<C64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::<C64>::identity(4, 4));
    }

    #[test]
    fn kron_is_associative() {
        let x = Pauli::X.matrix();
        let z = Pauli::Z.matrix();
        let h = Operator::hadamard().into_matrix();
        let left = kron(&kron(&x, &z), &h);
        let right = kron(&x, &kron(&z, &h));
        assert_eq!(left, right);
    }

    #[test]
    fn x_tensor_x_maps_00_to_11() {
        // Hand-enumerated oracle: (X⊗X)|00> picks column 0 of the 4x4 matrix,
        // which is e_3 under the msb-first convention.
        let xx = kron(&Pauli::X.matrix(), &Pauli::X.matrix());
        let v00 = DVector::from_fn(4, |i, _| if i == 0 { cr(1.0) } else { cr(0.0) });
        let out = &xx * &v00;
        let mut expected = DVector::from_element(4, cr(0.0));
        expected[3] = cr(1.0);
        assert_eq!(out, expected);
    }

    #[test]
    fn z_tensor_proj0_fixes_00() {
        let proj0 = DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]);
        let m = kron(&Pauli::Z.matrix(), &proj0);
        let mut v = DVector::from_element(4, cr(0.0));
        v[0] = cr(1.0);
        assert_eq!(&m * &v, v);
    }

    #[test]
    fn op_norm_of_pauli_is_one() {
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            assert_relative_eq!(op_norm(&p.matrix()), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unitary_flag_rejects_non_unitary() {
        let m = DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.5)]);
        assert!(Operator::unitary(m.clone()).is_err());
        assert!(Operator::new(m).is_ok());
    }
}
