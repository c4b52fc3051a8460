use std::fmt;
use std::ops::Range;

use crate::{Error, Result};

/// Hard cap on dense simulation size; all supported experiments fit well
/// below it.
pub const QUBIT_CAP: usize = 24;

/// Named register segments, in their fixed global order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Register {
    /// Ancilla qubits holding the branch superposition.
    Control,
    /// Optional parity flags paired with control qubits.
    Flag,
    /// Register carrying the input state `psi`.
    Memory,
    /// Scratch register holding `phi`, swapped in per branch.
    Active,
    /// Apparatus-internal workspace (e.g. QRAM routers).
    Internal,
}

impl Register {
    pub const ALL: [Register; 5] = [
        Register::Control,
        Register::Flag,
        Register::Memory,
        Register::Active,
        Register::Internal,
    ];

    fn ordinal(self) -> usize {
        match self {
            Register::Control => 0,
            Register::Flag => 1,
            Register::Memory => 2,
            Register::Active => 3,
            Register::Internal => 4,
        }
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Register::Control => "control",
            Register::Flag => "flag",
            Register::Memory => "memory",
            Register::Active => "active",
            Register::Internal => "internal",
        };
        f.write_str(name)
    }
}

/// Assignment of qubits to named register segments.
///
/// Segments are disjoint, contiguous, and cover `0..total_qubits()` in the
/// order control | flag | memory | active | internal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitLayout {
    counts: [usize; 5],
}

impl QubitLayout {
    pub fn new(
        control: usize,
        flag: usize,
        memory: usize,
        active: usize,
        internal: usize,
    ) -> Result<Self> {
        let counts = [control, flag, memory, active, internal];
        let total: usize = counts.iter().sum();
        if total > QUBIT_CAP {
            return Err(Error::QubitCapExceeded {
                requested: total,
                cap: QUBIT_CAP,
            });
        }
        Ok(QubitLayout { counts })
    }

    /// Layout holding a single register of `n` qubits.
    pub fn single(register: Register, n: usize) -> Result<Self> {
        let mut counts = [0usize; 5];
        counts[register.ordinal()] = n;
        QubitLayout::from_counts(counts)
    }

    fn from_counts(counts: [usize; 5]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total > QUBIT_CAP {
            return Err(Error::QubitCapExceeded {
                requested: total,
                cap: QUBIT_CAP,
            });
        }
        Ok(QubitLayout { counts })
    }

    pub fn total_qubits(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Hilbert-space dimension `2^total_qubits`.
    pub fn dim(&self) -> usize {
        1usize << self.total_qubits()
    }

    pub fn count(&self, register: Register) -> usize {
        self.counts[register.ordinal()]
    }

    /// Global qubit index range of a segment.
    pub fn range(&self, register: Register) -> Range<usize> {
        let ord = register.ordinal();
        let start: usize = self.counts[..ord].iter().sum();
        start..start + self.counts[ord]
    }

    /// Global qubit indices of a segment, ascending.
    pub fn qubits(&self, register: Register) -> Vec<usize> {
        self.range(register).collect()
    }

    /// Like [`QubitLayout::qubits`] but errors on an empty segment.
    pub fn qubits_checked(&self, register: Register) -> Result<Vec<usize>> {
        if self.count(register) == 0 {
            return Err(Error::EmptyRegister(register));
        }
        Ok(self.qubits(register))
    }

    /// Extracts the value of a contiguous segment from a basis index.
    pub fn segment_value(&self, register: Register, basis_index: usize) -> usize {
        let n = self.total_qubits();
        let r = self.range(register);
        let width = r.end - r.start;
        (basis_index >> (n - r.end)) & ((1usize << width) - 1)
    }

    /// Layout with only the listed registers kept (counts of the others zeroed).
    pub fn keep_only(&self, keep: &[Register]) -> QubitLayout {
        let mut counts = [0usize; 5];
        for &reg in keep {
            counts[reg.ordinal()] = self.count(reg);
        }
        QubitLayout { counts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_disjoint_and_cover_total() {
        let layout = QubitLayout::new(2, 2, 3, 3, 1).unwrap();
        assert_eq!(layout.total_qubits(), 11);
        let mut seen = vec![false; 11];
        for reg in Register::ALL {
            for q in layout.qubits(reg) {
                assert!(!seen[q]);
                seen[q] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(layout.range(Register::Memory), 4..7);
    }

    #[test]
    fn cap_enforced() {
        assert!(QubitLayout::new(25, 0, 0, 0, 0).is_err());
        assert!(QubitLayout::new(12, 0, 6, 6, 0).is_ok());
    }

    #[test]
    fn segment_value_uses_msb_first_ordering() {
        // control=1, memory=1, active=1: index bits are c m a with c most
        // significant. Index 0b110 -> control 1, memory 1, active 0.
        let layout = QubitLayout::new(1, 0, 1, 1, 0).unwrap();
        assert_eq!(layout.segment_value(Register::Control, 0b110), 1);
        assert_eq!(layout.segment_value(Register::Memory, 0b110), 1);
        assert_eq!(layout.segment_value(Register::Active, 0b110), 0);
    }
}
