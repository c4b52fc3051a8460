//! Targeted application of operators to sub-registers, permutations,
//! projections and partial traces.
//!
//! All kernels use the global convention: qubit `q` of an `n`-qubit system
//! owns bit `n - 1 - q` of a basis index. When a `k`-qubit operator is
//! applied to `targets`, `targets[0]` is the most significant qubit of the
//! operator's own index space.

use nalgebra::{DMatrix, DVector};

use super::operator::Operator;
use super::state::{DensityMatrix, PureState};
use super::{cr, C64};
use crate::{Error, Result};

fn check_targets(targets: &[usize], n_qubits: usize, op_dim: usize) -> Result<()> {
    if op_dim != 1usize << targets.len() {
        return Err(Error::DimensionMismatch {
            expected: 1usize << targets.len(),
            found: op_dim,
        });
    }
    for (i, &q) in targets.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::InvalidTargets(format!(
                "qubit {q} out of range for {n_qubits} qubits"
            )));
        }
        if targets[..i].contains(&q) {
            return Err(Error::InvalidTargets(format!("qubit {q} listed twice")));
        }
    }
    Ok(())
}

/// Bit mask of qubit `q` in an `n`-qubit index.
#[inline]
fn qubit_mask(q: usize, n_qubits: usize) -> usize {
    1usize << (n_qubits - 1 - q)
}

/// For each sub-index `a` over the targets, the corresponding global mask.
fn scatter_table(targets: &[usize], n_qubits: usize) -> Vec<usize> {
    let k = targets.len();
    (0..1usize << k)
        .map(|a| {
            let mut mask = 0usize;
            for (t, &q) in targets.iter().enumerate() {
                if (a >> (k - 1 - t)) & 1 == 1 {
                    mask |= qubit_mask(q, n_qubits);
                }
            }
            mask
        })
        .collect()
}

/// Applies a `k`-qubit operator to the given targets of a state vector.
pub fn apply_to_state(
    op: &DMatrix<C64>,
    targets: &[usize],
    n_qubits: usize,
    v: &DVector<C64>,
) -> Result<DVector<C64>> {
    check_targets(targets, n_qubits, op.nrows())?;
    let mut out = v.clone();
    apply_to_state_mut(op, targets, n_qubits, &mut out);
    Ok(out)
}

/// In-place variant of [`apply_to_state`]; targets must already be valid.
pub(crate) fn apply_to_state_mut(
    op: &DMatrix<C64>,
    targets: &[usize],
    n_qubits: usize,
    v: &mut DVector<C64>,
) {
    let dim = 1usize << n_qubits;
    let sub = op.nrows();
    let scatter = scatter_table(targets, n_qubits);
    let union: usize = scatter.iter().fold(0, |acc, &m| acc | m);
    let mut gathered = vec![cr(0.0); sub];
    for base in 0..dim {
        if base & union != 0 {
            continue;
        }
        for (a, &mask) in scatter.iter().enumerate() {
            gathered[a] = v[base | mask];
        }
        for (row, &mask) in scatter.iter().enumerate() {
            let mut acc = cr(0.0);
            for (col, &g) in gathered.iter().enumerate() {
                acc += op[(row, col)] * g;
            }
            v[base | mask] = acc;
        }
    }
}

/// Applies `op` on the row index of every column of `m` (i.e. `op * m`
/// where `op` is embedded on the targets).
pub(crate) fn apply_left(
    op: &DMatrix<C64>,
    targets: &[usize],
    n_qubits: usize,
    m: &DMatrix<C64>,
) -> DMatrix<C64> {
    let mut out = m.clone_owned();
    let dim = 1usize << n_qubits;
    let scatter = scatter_table(targets, n_qubits);
    let union: usize = scatter.iter().fold(0, |acc, &x| acc | x);
    let sub = op.nrows();
    let mut gathered = vec![cr(0.0); sub];
    for col in 0..m.ncols() {
        for base in 0..dim {
            if base & union != 0 {
                continue;
            }
            for (a, &mask) in scatter.iter().enumerate() {
                gathered[a] = out[(base | mask, col)];
            }
            for (row, &mask) in scatter.iter().enumerate() {
                let mut acc = cr(0.0);
                for (c_idx, &g) in gathered.iter().enumerate() {
                    acc += op[(row, c_idx)] * g;
                }
                out[(base | mask, col)] = acc;
            }
        }
    }
    out
}

/// Conjugation `op . m . op^dag` with `op` embedded on the targets. Works
/// for arbitrary (not necessarily Hermitian) `m`.
pub fn sandwich(
    op: &DMatrix<C64>,
    targets: &[usize],
    n_qubits: usize,
    m: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    check_targets(targets, n_qubits, op.nrows())?;
    let a = apply_left(op, targets, n_qubits, m);
    // right-multiplication by op^dag = conjugate-apply on the column index
    let conj = op.conjugate();
    let at = a.transpose();
    let bt = apply_left(&conj, targets, n_qubits, &at);
    Ok(bt.transpose())
}

/// Applies an operator to selected qubits of a pure state.
///
/// Equals the tensor-product-embedded application; preserves the norm when
/// the operator is unitary.
pub fn apply_to_pure(op: &Operator, targets: &[usize], state: &PureState) -> Result<PureState> {
    let out = apply_to_state(
        op.matrix(),
        targets,
        state.layout().total_qubits(),
        state.amplitudes(),
    )?;
    PureState::new(state.layout().clone(), out)
}

/// Applies `op . rho . op^dag` with `op` acting on selected qubits of a
/// density matrix.
pub fn apply_to_density(
    op: &Operator,
    targets: &[usize],
    rho: &DensityMatrix,
) -> Result<DensityMatrix> {
    let out = sandwich(
        op.matrix(),
        targets,
        rho.layout().total_qubits(),
        rho.entries(),
    )?;
    DensityMatrix::new(rho.layout().clone(), out)
}

/// Relabels basis states: `out[perm[i]] = in[i]`.
pub fn permute_state(perm: &[usize], v: &mut DVector<C64>) {
    let mut out = DVector::from_element(v.len(), cr(0.0));
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i];
    }
    *v = out;
}

/// Relabels basis states of a density matrix on rows and columns.
pub fn permute_density(perm: &[usize], m: &mut DMatrix<C64>) {
    let n = m.nrows();
    let mut out = DMatrix::from_element(n, n, cr(0.0));
    for i in 0..n {
        for j in 0..n {
            out[(perm[i], perm[j])] = m[(i, j)];
        }
    }
    *m = out;
}

/// Projects onto the subspace where each listed qubit holds the given bit;
/// the result is left unnormalized.
pub fn project_state(assignments: &[(usize, bool)], n_qubits: usize, v: &mut DVector<C64>) {
    for i in 0..v.len() {
        if !matches_assignments(i, assignments, n_qubits) {
            v[i] = cr(0.0);
        }
    }
}

/// Density-matrix version of [`project_state`].
pub fn project_density(assignments: &[(usize, bool)], n_qubits: usize, m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        let keep_i = matches_assignments(i, assignments, n_qubits);
        for j in 0..n {
            if !keep_i || !matches_assignments(j, assignments, n_qubits) {
                m[(i, j)] = cr(0.0);
            }
        }
    }
}

#[inline]
fn matches_assignments(index: usize, assignments: &[(usize, bool)], n_qubits: usize) -> bool {
    assignments.iter().all(|&(q, bit)| {
        let have = index & qubit_mask(q, n_qubits) != 0;
        have == bit
    })
}

/// Traces out the listed qubits of an `n`-qubit density matrix. Kept qubits
/// retain their relative order. The trace is preserved exactly.
pub fn partial_trace_qubits(rho: &DMatrix<C64>, n_qubits: usize, traced: &[usize]) -> DMatrix<C64> {
    let kept: Vec<usize> = (0..n_qubits).filter(|q| !traced.contains(q)).collect();
    let nk = kept.len();
    let nt = traced.len();
    // expansion tables: sub-index over kept/traced qubits -> global mask
    let kept_masks = scatter_table(&kept, n_qubits);
    let traced_masks = scatter_table(traced, n_qubits);
    let mut out = DMatrix::from_element(1 << nk, 1 << nk, cr(0.0));
    for ik in 0..1usize << nk {
        for jk in 0..1usize << nk {
            let mut acc = cr(0.0);
            for a in 0..1usize << nt {
                acc += rho[(kept_masks[ik] | traced_masks[a], kept_masks[jk] | traced_masks[a])];
            }
            out[(ik, jk)] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator::{kron, Pauli};
    use crate::linalg::{QubitLayout, Register};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn basis(n: usize, i: usize) -> DVector<C64> {
        let mut v = DVector::from_element(1 << n, cr(0.0));
        v[i] = cr(1.0);
        v
    }

    #[test]
    fn x_on_qubit_one_of_00_gives_01() {
        // |00> has index 0; qubit 1 is the least significant bit.
        let v = basis(2, 0);
        let out = apply_to_state(&Pauli::X.matrix(), &[1], 2, &v).unwrap();
        assert_eq!(out, basis(2, 0b01));
    }

    #[test]
    fn identity_anywhere_is_noop() {
        let v = DVector::from_fn(8, |i, _| cr((i + 1) as f64));
        let id = DMatrix::<C64>::identity(2, 2);
        for q in 0..3 {
            let out = apply_to_state(&id, &[q], 3, &v).unwrap();
            assert_eq!(out, v);
        }
    }

    #[test]
    fn targeted_application_matches_full_embedding() {
        // Full-embedding oracle: I ⊗ op ⊗ I built with explicit kroneckers.
        let op = kron(&Pauli::X.matrix(), &Operator::hadamard().into_matrix());
        let n = 4;
        let embedded = kron(
            &kron(&DMatrix::<C64>::identity(2, 2), &op),
            &DMatrix::<C64>::identity(2, 2),
        );
        let v = DVector::from_fn(1 << n, |i, _| cr(1.0 + i as f64) * cr(0.25));
        let expected = &embedded * &v;
        let got = apply_to_state(&op, &[1, 2], n, &v).unwrap();
        for i in 0..v.len() {
            assert_relative_eq!(got[i].re, expected[i].re, epsilon = 1e-12);
            assert_relative_eq!(got[i].im, expected[i].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn hadamard_on_control_of_product_state() {
        let layout = QubitLayout::new(1, 0, 1, 0, 0).unwrap();
        let zero = DVector::from_vec(vec![cr(1.0), cr(0.0)]);
        let psi = DVector::from_vec(vec![cr(0.6), cr(0.8)]);
        let state = crate::linalg::PureState::product(
            layout,
            &[(Register::Control, &zero), (Register::Memory, &psi)],
        )
        .unwrap();
        let out = apply_to_pure(&Operator::hadamard(), &[0], &state).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // |+> ⊗ psi
        assert_relative_eq!(out.amplitudes()[0].re, s * 0.6, epsilon = 1e-12);
        assert_relative_eq!(out.amplitudes()[1].re, s * 0.8, epsilon = 1e-12);
        assert_relative_eq!(out.amplitudes()[2].re, s * 0.6, epsilon = 1e-12);
        assert_relative_eq!(out.amplitudes()[3].re, s * 0.8, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_targets_rejected() {
        let op = DMatrix::<C64>::identity(4, 4);
        let v = basis(3, 0);
        assert!(apply_to_state(&op, &[1, 1], 3, &v).is_err());
    }

    #[test]
    fn partial_trace_preserves_trace_of_random_matrix() {
        // Full-matrix summation oracle on a pseudo-random 3-qubit rho.
        let n = 3;
        let dim = 1 << n;
        let mut m = DMatrix::from_fn(dim, dim, |i, j| {
            cr(((i * 7 + j * 3) % 11) as f64 * 0.01) + cr(if i == j { 0.5 } else { 0.0 })
        });
        // hermitize
        m = (&m + &m.adjoint()) * cr(0.5);
        let full_trace = m.trace().re;
        let reduced = partial_trace_qubits(&m, n, &[1]);
        assert_relative_eq!(reduced.trace().re, full_trace, epsilon = 1e-12);
        let reduced2 = partial_trace_qubits(&m, n, &[0, 2]);
        assert_relative_eq!(reduced2.trace().re, full_trace, epsilon = 1e-12);
    }

    #[test]
    fn sandwich_matches_explicit_product() {
        let op = Pauli::Y.matrix();
        let n = 2;
        let embedded = kron(&Pauli::Y.matrix(), &DMatrix::<C64>::identity(2, 2));
        let mut m = DMatrix::from_fn(4, 4, |i, j| cr((i + 2 * j) as f64));
        m = (&m + &m.adjoint()) * cr(0.5);
        let expected = &embedded * &m * embedded.adjoint();
        let got = sandwich(&op, &[0], n, &m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(got[(i, j)].re, expected[(i, j)].re, epsilon = 1e-12);
                assert_relative_eq!(got[(i, j)].im, expected[(i, j)].im, epsilon = 1e-12);
            }
        }
    }
}
