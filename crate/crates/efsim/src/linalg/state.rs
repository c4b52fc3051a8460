use nalgebra::{DMatrix, DVector};

use super::apply::partial_trace_qubits;
use super::layout::{QubitLayout, Register};
use super::operator::{hermiticity_deviation, min_eigenvalue_hermitian};
use super::{all_finite, cr, kron_vec, C64};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-10;

/// A pure state over an explicit qubit layout.
///
/// States flagged `normalized` satisfy `sum |a_i|^2 = 1` within 1e-10;
/// unnormalized states (post-selection residues) carry the flag cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: QubitLayout,
    amplitudes: DVector<C64>,
    normalized: bool,
}

impl PureState {
    pub fn new(layout: QubitLayout, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amplitudes.len(),
            });
        }
        if !all_finite(amplitudes.iter()) {
            return Err(Error::NonFinite);
        }
        let norm_sqr: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        let normalized = (norm_sqr - 1.0).abs() <= NORM_TOL;
        Ok(PureState {
            layout,
            amplitudes,
            normalized,
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(layout: QubitLayout, index: usize) -> Result<Self> {
        if index >= layout.dim() {
            return Err(Error::InvalidTargets(format!(
                "basis index {index} out of range for dimension {}",
                layout.dim()
            )));
        }
        let mut amplitudes = DVector::from_element(layout.dim(), cr(0.0));
        amplitudes[index] = cr(1.0);
        PureState::new(layout, amplitudes)
    }

    /// State over a memory-only layout, the natural home of apparatus inputs.
    pub fn memory(amplitudes: DVector<C64>) -> Result<Self> {
        let n_qubits = amplitudes.len().trailing_zeros() as usize;
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::InvalidTargets(format!(
                "amplitude vector length {} is not a power of two",
                amplitudes.len()
            )));
        }
        PureState::new(QubitLayout::single(Register::Memory, n_qubits)?, amplitudes)
    }

    /// Builds the product state of per-register factors, given in canonical
    /// register order and covering every non-empty register of `layout`.
    pub fn product(layout: QubitLayout, parts: &[(Register, &DVector<C64>)]) -> Result<Self> {
        let mut expected = Register::ALL
            .into_iter()
            .filter(|&r| layout.count(r) > 0)
            .collect::<Vec<_>>()
            .into_iter();
        let mut amps = DVector::from_element(1, cr(1.0));
        for (reg, vec) in parts {
            match expected.next() {
                Some(r) if r == *reg => {}
                _ => {
                    return Err(Error::InvalidTargets(format!(
                        "register {reg} out of order or not in layout"
                    )))
                }
            }
            if vec.len() != 1 << layout.count(*reg) {
                return Err(Error::DimensionMismatch {
                    expected: 1 << layout.count(*reg),
                    found: vec.len(),
                });
            }
            amps = kron_vec(&amps, vec);
        }
        if expected.next().is_some() {
            return Err(Error::InvalidTargets(
                "product state does not cover all registers".into(),
            ));
        }
        PureState::new(layout, amps)
    }

    pub fn layout(&self) -> &QubitLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Explicitly rescales to unit norm.
    pub fn normalize(&self) -> Result<PureState> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::Invalid("cannot normalize the zero state".into()));
        }
        PureState::new(self.layout.clone(), &self.amplitudes / cr(n))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|self><self|` as a density matrix (unnormalized if the state is).
    pub fn outer(&self) -> DensityMatrix {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| self.amplitudes[i] * self.amplitudes[j].conj());
        DensityMatrix {
            layout: self.layout.clone(),
            entries: m,
            normalized: self.normalized,
        }
    }

    /// Tensor product. `other`'s occupied registers must all come after
    /// `self`'s in the canonical order, so the global convention is kept.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let last_self = Register::ALL
            .into_iter()
            .filter(|&r| self.layout.count(r) > 0)
            .last();
        let first_other = Register::ALL
            .into_iter()
            .find(|&r| other.layout.count(r) > 0);
        if let (Some(a), Some(b)) = (last_self, first_other) {
            if a >= b {
                return Err(Error::InvalidTargets(format!(
                    "tensor factors interleave registers ({a} vs {b})"
                )));
            }
        }
        let layout = QubitLayout::new(
            self.layout.count(Register::Control) + other.layout.count(Register::Control),
            self.layout.count(Register::Flag) + other.layout.count(Register::Flag),
            self.layout.count(Register::Memory) + other.layout.count(Register::Memory),
            self.layout.count(Register::Active) + other.layout.count(Register::Active),
            self.layout.count(Register::Internal) + other.layout.count(Register::Internal),
        )?;
        PureState::new(layout, kron_vec(&self.amplitudes, &other.amplitudes))
    }
}

/// A density matrix over an explicit qubit layout.
///
/// Stored matrices are Hermitian to 1e-10 and positive semidefinite to
/// -1e-9 on the smallest eigenvalue; the trace equals 1 within 1e-10 iff
/// `normalized` is set. Hermiticity and finiteness are checked at every
/// construction; the eigenvalue check is exposed via [`DensityMatrix::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    layout: QubitLayout,
    entries: DMatrix<C64>,
    normalized: bool,
}

impl DensityMatrix {
    pub fn new(layout: QubitLayout, entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != layout.dim() || entries.ncols() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: entries.nrows(),
            });
        }
        if !all_finite(entries.iter()) {
            return Err(Error::NonFinite);
        }
        let dev = hermiticity_deviation(&entries);
        if dev > 1e-10 {
            return Err(Error::NotHermitian(dev));
        }
        let trace = entries.trace().re;
        let normalized = (trace - 1.0).abs() <= NORM_TOL;
        Ok(DensityMatrix {
            layout,
            entries,
            normalized,
        })
    }

    pub fn from_pure(state: &PureState) -> Self {
        state.outer()
    }

    pub fn layout(&self) -> &QubitLayout {
        &self.layout
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Explicitly rescales to unit trace.
    pub fn normalize(&self) -> Result<DensityMatrix> {
        let t = self.trace();
        if t <= 0.0 {
            return Err(Error::Invalid(
                "cannot normalize a density matrix with non-positive trace".into(),
            ));
        }
        DensityMatrix::new(self.layout.clone(), &self.entries / cr(t))
    }

    /// `<psi| rho |psi>` (real part; the quadratic form is real for
    /// Hermitian `rho`).
    pub fn expectation(&self, state: &PureState) -> f64 {
        let v = state.amplitudes();
        let mut acc = cr(0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += v[i].conj() * self.entries[(i, j)] * v[j];
            }
        }
        acc.re
    }

    /// Fidelity `<psi|rho|psi> / Tr rho` against a pure target.
    pub fn fidelity(&self, target: &PureState) -> f64 {
        self.expectation(target) / self.trace()
    }

    /// Traces out every register not listed in `keep`.
    pub fn partial_trace(&self, keep: &[Register]) -> Result<DensityMatrix> {
        for &reg in keep {
            if self.layout.count(reg) == 0 {
                return Err(Error::EmptyRegister(reg));
            }
        }
        let traced: Vec<usize> = Register::ALL
            .into_iter()
            .filter(|r| !keep.contains(r))
            .flat_map(|r| self.layout.qubits(r))
            .collect();
        let reduced = partial_trace_qubits(&self.entries, self.layout.total_qubits(), &traced);
        DensityMatrix::new(self.layout.keep_only(keep), reduced)
    }

    /// Full physicality check: Hermitian, PSD within `-1e-9`, finite.
    pub fn validate(&self) -> Result<()> {
        let dev = hermiticity_deviation(&self.entries);
        if dev > 1e-10 {
            return Err(Error::NotHermitian(dev));
        }
        let min_eig = min_eigenvalue_hermitian(&self.entries);
        if min_eig < -1e-9 {
            return Err(Error::Invalid(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }
}
