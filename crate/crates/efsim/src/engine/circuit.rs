//! EF circuit construction and its line-oriented text form.
//!
//! The circuit for `T = 2^log_t` branches is: Hadamards on every control
//! qubit; (optionally) flag-encoding CNOTs; then for each branch
//! `t = 0..T` in ascending binary order a multi-controlled swap of the
//! memory and active registers conditioned on the control register reading
//! `|t>`, one apparatus call on the active register, and the swap back;
//! (optionally) flag-decoding CNOTs and the flag parity measurement; final
//! Hadamards; and post-selection of the control register on `|0...0>`.
//!
//! Faults are deterministic Pauli insertions at named positions: `pre(t)`
//! before branch `t`'s first swap, `mid(t)` between its swaps (commuting
//! with the apparatus call), `post(t)` after its swap back.

use std::fmt::Write as _;

use crate::linalg::{Pauli, PureState, QubitLayout, Register};
use crate::{Error, Result};

/// Position of a fault relative to branch blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultLocation {
    /// Before the branch's first controlled swap.
    PreBranch(usize),
    /// Between the branch's two controlled swaps, alongside the apparatus call.
    MidBranch(usize),
    /// After the branch's swap back.
    PostBranch(usize),
}

impl FaultLocation {
    pub fn branch(&self) -> usize {
        match *self {
            FaultLocation::PreBranch(t)
            | FaultLocation::MidBranch(t)
            | FaultLocation::PostBranch(t) => t,
        }
    }
}

impl std::fmt::Display for FaultLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultLocation::PreBranch(t) => write!(f, "pre({t})"),
            FaultLocation::MidBranch(t) => write!(f, "mid({t})"),
            FaultLocation::PostBranch(t) => write!(f, "post({t})"),
        }
    }
}

/// Qubit a fault acts on, addressed within its register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultQubit {
    Control(usize),
    Flag(usize),
    Memory(usize),
}

impl std::fmt::Display for FaultQubit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultQubit::Control(k) => write!(f, "control[{k}]"),
            FaultQubit::Flag(k) => write!(f, "flag[{k}]"),
            FaultQubit::Memory(k) => write!(f, "memory[{k}]"),
        }
    }
}

/// A located Pauli fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultSpec {
    pub location: FaultLocation,
    pub qubit: FaultQubit,
    pub pauli: Pauli,
}

impl FaultSpec {
    pub fn new(location: FaultLocation, qubit: FaultQubit, pauli: Pauli) -> Self {
        FaultSpec {
            location,
            qubit,
            pauli,
        }
    }

    fn global_qubit(&self, layout: &QubitLayout) -> Result<usize> {
        let (reg, idx) = match self.qubit {
            FaultQubit::Control(k) => (Register::Control, k),
            FaultQubit::Flag(k) => (Register::Flag, k),
            FaultQubit::Memory(k) => (Register::Memory, k),
        };
        let range = layout.range(reg);
        if idx >= range.len() {
            return Err(Error::InvalidFault(format!(
                "{} does not exist ({} has {} qubits)",
                self.qubit,
                reg,
                range.len()
            )));
        }
        Ok(range.start + idx)
    }
}

/// One element of the ordered gate list.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// Hadamard on a global qubit index.
    H(usize),
    /// Pauli fault insertion on a global qubit index.
    Pauli(Pauli, usize),
    /// CNOT with global control and target indices.
    Cnot { control: usize, target: usize },
    /// Swap of the memory and active registers conditioned on the control
    /// register reading `|branch>`, applied as one permutation.
    BranchedSwap { branch: usize },
    /// One call to the noisy apparatus on the apparatus register.
    Apparatus { slot: usize },
    /// Parity measurement of all flag qubits; odd parity rejects the run.
    FlagMeasure,
    /// Post-selection of the control register on `|0...0>`.
    ProjectControl,
}

/// Ordered gate list over a fixed layout.
#[derive(Debug, Clone)]
pub struct GateList {
    pub layout: QubitLayout,
    pub gates: Vec<Gate>,
    /// Number of apparatus calls (branches).
    pub t: usize,
    /// Register the apparatus acts on: `Active`, or `Memory` for the
    /// degenerate `log_t = 0` circuit.
    pub apparatus_register: Register,
}

impl GateList {
    /// Global qubit indices of the apparatus port.
    pub fn apparatus_targets(&self) -> Vec<usize> {
        self.layout.qubits(self.apparatus_register)
    }

    /// Line-oriented text form: one gate per line with name, targets and
    /// controls.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for gate in &self.gates {
            match gate {
                Gate::H(q) => writeln!(out, "h {q}").unwrap(),
                Gate::Pauli(p, q) => {
                    writeln!(out, "{} {q}", p.to_string().to_lowercase()).unwrap()
                }
                Gate::Cnot { control, target } => {
                    writeln!(out, "cnot {target} c {control}").unwrap()
                }
                Gate::BranchedSwap { branch } => {
                    let mem = join(&self.layout.qubits(Register::Memory));
                    let act = join(&self.layout.qubits(Register::Active));
                    let ctrl = join(&self.layout.qubits(Register::Control));
                    writeln!(out, "bswap {branch} mem {mem} act {act} c {ctrl}").unwrap()
                }
                Gate::Apparatus { slot } => {
                    writeln!(out, "call {slot} on {}", join(&self.apparatus_targets())).unwrap()
                }
                Gate::FlagMeasure => {
                    writeln!(out, "flags {}", join(&self.layout.qubits(Register::Flag))).unwrap()
                }
                Gate::ProjectControl => {
                    writeln!(
                        out,
                        "project {} value 0",
                        join(&self.layout.qubits(Register::Control))
                    )
                    .unwrap()
                }
            }
        }
        out
    }

    /// Number of `Apparatus` gates, for sanity checks.
    pub fn apparatus_calls(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g, Gate::Apparatus { .. }))
            .count()
    }
}

fn join(qubits: &[usize]) -> String {
    qubits
        .iter()
        .map(|q| q.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Everything needed to lay out and run one EF circuit, independent of the
/// apparatus realization.
#[derive(Debug, Clone)]
pub struct EfSetup {
    pub log_t: usize,
    pub psi: PureState,
    pub phi: PureState,
    /// Ideal output state on the memory register.
    pub target: PureState,
    pub samples: usize,
    pub seed: u64,
    pub flag_qubits: bool,
    pub faults: Vec<FaultSpec>,
    /// Apparatus-internal workspace qubits (e.g. QRAM routers), reset by
    /// the apparatus itself.
    pub internal_qubits: usize,
}

impl EfSetup {
    pub fn t(&self) -> usize {
        1usize << self.log_t
    }

    pub fn memory_qubits(&self) -> usize {
        self.psi.dim().ilog2() as usize
    }

    pub fn layout(&self) -> Result<QubitLayout> {
        let m = self.memory_qubits();
        if self.log_t == 0 {
            // bare apparatus call: no control, no active copy
            return QubitLayout::new(0, 0, m, 0, self.internal_qubits);
        }
        QubitLayout::new(
            self.log_t,
            if self.flag_qubits { self.log_t } else { 0 },
            m,
            m,
            self.internal_qubits,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.dim() != self.psi.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.psi.dim(),
                found: self.phi.dim(),
            });
        }
        if self.target.dim() != self.psi.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.psi.dim(),
                found: self.target.dim(),
            });
        }
        for fault in &self.faults {
            if fault.location.branch() >= self.t() {
                return Err(Error::InvalidFault(format!(
                    "fault at {} but the circuit has only {} branches",
                    fault.location,
                    self.t()
                )));
            }
            if self.log_t == 0 {
                return Err(Error::InvalidFault(
                    "fault injection needs at least one control qubit".into(),
                ));
            }
            if matches!(fault.qubit, FaultQubit::Flag(_)) && !self.flag_qubits {
                return Err(Error::InvalidFault(
                    "flag fault requested but flags are disabled".into(),
                ));
            }
            let layout = self.layout()?;
            fault.global_qubit(&layout)?;
        }
        Ok(())
    }
}

/// Builds the ordered gate list for a setup.
pub fn build_circuit(setup: &EfSetup) -> Result<GateList> {
    setup.validate()?;
    let layout = setup.layout()?;
    if setup.log_t == 0 {
        return Ok(GateList {
            layout,
            gates: vec![Gate::Apparatus { slot: 0 }],
            t: 1,
            apparatus_register: Register::Memory,
        });
    }
    let controls = layout.qubits(Register::Control);
    let flags = layout.qubits(Register::Flag);
    let mut gates = Vec::new();
    for &c in &controls {
        gates.push(Gate::H(c));
    }
    if setup.flag_qubits {
        for (k, &c) in controls.iter().enumerate() {
            gates.push(Gate::Cnot {
                control: c,
                target: flags[k],
            });
        }
    }
    let emit_faults = |gates: &mut Vec<Gate>, location: FaultLocation| -> Result<()> {
        for fault in &setup.faults {
            if fault.location == location {
                gates.push(Gate::Pauli(fault.pauli, fault.global_qubit(&layout)?));
            }
        }
        Ok(())
    };
    for t in 0..setup.t() {
        emit_faults(&mut gates, FaultLocation::PreBranch(t))?;
        gates.push(Gate::BranchedSwap { branch: t });
        gates.push(Gate::Apparatus { slot: t });
        emit_faults(&mut gates, FaultLocation::MidBranch(t))?;
        gates.push(Gate::BranchedSwap { branch: t });
        emit_faults(&mut gates, FaultLocation::PostBranch(t))?;
    }
    if setup.flag_qubits {
        for (k, &c) in controls.iter().enumerate() {
            gates.push(Gate::Cnot {
                control: c,
                target: flags[k],
            });
        }
        gates.push(Gate::FlagMeasure);
    }
    for &c in &controls {
        gates.push(Gate::H(c));
    }
    gates.push(Gate::ProjectControl);
    Ok(GateList {
        layout,
        gates,
        t: setup.t(),
        apparatus_register: Register::Active,
    })
}

/// Permutation for the multi-controlled memory/active swap of one branch.
pub(crate) fn branched_swap_perm(layout: &QubitLayout, branch: usize) -> Vec<usize> {
    let n = layout.total_qubits();
    let mem = layout.range(Register::Memory);
    let act = layout.range(Register::Active);
    debug_assert_eq!(mem.len(), act.len());
    let width = mem.len();
    let mem_shift = n - mem.end;
    let act_shift = n - act.end;
    let field = (1usize << width) - 1;
    (0..1usize << n)
        .map(|i| {
            if layout.segment_value(Register::Control, i) != branch {
                return i;
            }
            let m = (i >> mem_shift) & field;
            let a = (i >> act_shift) & field;
            let cleared = i & !(field << mem_shift) & !(field << act_shift);
            cleared | (a << mem_shift) | (m << act_shift)
        })
        .collect()
}

/// Permutation for a CNOT on global qubit indices.
pub(crate) fn cnot_perm(n_qubits: usize, control: usize, target: usize) -> Vec<usize> {
    let cmask = 1usize << (n_qubits - 1 - control);
    let tmask = 1usize << (n_qubits - 1 - target);
    (0..1usize << n_qubits)
        .map(|i| if i & cmask != 0 { i ^ tmask } else { i })
        .collect()
}
