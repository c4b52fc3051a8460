//! Exact density-matrix backend.
//!
//! Evolves the full register density matrix gate by gate; the apparatus is
//! applied as a Kraus sum on its port. Post-selection projects the control
//! register on `|0...0>` after the final Hadamards (equivalent to the
//! `|+...+>` projection before them), flags are projected on even parity,
//! and the active/control/flag registers are traced out at the end.

use nalgebra::{DMatrix, DVector};

use crate::channels::KrausChannel;
use crate::linalg::{
    kron_vec, partial_trace_qubits, permute_density, project_density, sandwich, DensityMatrix,
    Operator, PureState, QubitLayout, Register, C64,
};
use crate::{Error, Result};

use super::circuit::{branched_swap_perm, cnot_perm, EfSetup, Gate, GateList};
use super::EfResult;

/// Accepted ensembles with trace at or below this are reported as empty:
/// success probability 0 and, by convention, fidelity 1 (no accepted run
/// contradicts the ideal).
pub(crate) const EMPTY_ENSEMBLE_TRACE: f64 = 1e-14;

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Initial full-register state vector for a setup: controls and flags in
/// `|0>`, `psi` in memory, `phi` in active, internal workspace in `|0>`.
pub(crate) fn initial_state(setup: &EfSetup, layout: &QubitLayout) -> Result<DVector<C64>> {
    let mut amps = DVector::from_element(1, cr(1.0));
    for reg in Register::ALL {
        let count = layout.count(reg);
        if count == 0 {
            continue;
        }
        match reg {
            Register::Memory => amps = kron_vec(&amps, setup.psi.amplitudes()),
            Register::Active => amps = kron_vec(&amps, setup.phi.amplitudes()),
            _ => {
                let mut zero = DVector::from_element(1 << count, cr(0.0));
                zero[0] = cr(1.0);
                amps = kron_vec(&amps, &zero);
            }
        }
    }
    Ok(amps)
}

/// Runs the exact backend over a prebuilt circuit with a Kraus-channel
/// apparatus.
pub(crate) fn run_exact_circuit(
    setup: &EfSetup,
    circuit: &GateList,
    channel: &KrausChannel,
) -> Result<EfResult> {
    let layout = &circuit.layout;
    let n = layout.total_qubits();
    let apparatus_targets = circuit.apparatus_targets();
    if channel.dim() != 1usize << apparatus_targets.len() {
        return Err(Error::DimensionMismatch {
            expected: 1usize << apparatus_targets.len(),
            found: channel.dim(),
        });
    }
    let init = initial_state(setup, layout)?;
    let mut rho = DMatrix::from_fn(init.len(), init.len(), |i, j| init[i] * init[j].conj());
    let hadamard = Operator::hadamard();
    let mut flag_reject_prob = None;
    for gate in &circuit.gates {
        match gate {
            Gate::H(q) => {
                rho = sandwich(hadamard.matrix(), &[*q], n, &rho)?;
            }
            Gate::Pauli(p, q) => {
                rho = sandwich(&p.matrix(), &[*q], n, &rho)?;
            }
            Gate::Cnot { control, target } => {
                let perm = cnot_perm(n, *control, *target);
                permute_density(&perm, &mut rho);
            }
            Gate::BranchedSwap { branch } => {
                let perm = branched_swap_perm(layout, *branch);
                permute_density(&perm, &mut rho);
            }
            Gate::Apparatus { .. } => {
                let mut acc = DMatrix::from_element(rho.nrows(), rho.ncols(), cr(0.0));
                for op in channel.ops() {
                    acc += sandwich(op.matrix(), &apparatus_targets, n, &rho)?;
                }
                rho = acc;
            }
            Gate::FlagMeasure => {
                let before = rho.trace().re;
                let assignments: Vec<(usize, bool)> = layout
                    .qubits(Register::Flag)
                    .into_iter()
                    .map(|q| (q, false))
                    .collect();
                project_density(&assignments, n, &mut rho);
                let after = rho.trace().re;
                flag_reject_prob = Some(if before > 0.0 { 1.0 - after / before } else { 0.0 });
            }
            Gate::ProjectControl => {
                let assignments: Vec<(usize, bool)> = layout
                    .qubits(Register::Control)
                    .into_iter()
                    .map(|q| (q, false))
                    .collect();
                project_density(&assignments, n, &mut rho);
            }
        }
    }
    let traced: Vec<usize> = Register::ALL
        .into_iter()
        .filter(|&r| r != Register::Memory)
        .flat_map(|r| layout.qubits(r))
        .collect();
    let reduced = partial_trace_qubits(&rho, n, &traced);
    let mem_layout = layout.keep_only(&[Register::Memory]);
    let rho_mem = DensityMatrix::new(mem_layout, reduced)?;
    Ok(finish_exact(setup, rho_mem, flag_reject_prob))
}

pub(crate) fn finish_exact(
    setup: &EfSetup,
    rho_mem: DensityMatrix,
    flag_reject_prob: Option<f64>,
) -> EfResult {
    let success_prob = rho_mem.trace();
    let fidelity = if success_prob <= EMPTY_ENSEMBLE_TRACE {
        1.0
    } else {
        rho_mem.expectation(&setup.target) / success_prob
    };
    EfResult {
        rho: rho_mem,
        success_prob,
        fidelity,
        stat_error: None,
        success_error: None,
        flag_reject_prob,
    }
}

/// Direct `|+...+>` projection of the control register, used to test the
/// post-selection convention (Hadamards followed by a `|0...0>` projector).
pub(crate) fn project_control_on_plus(
    layout: &QubitLayout,
    rho: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    let controls = layout.qubits(Register::Control);
    let n = layout.total_qubits();
    let dim = 1usize << controls.len();
    let plus = DVector::from_element(dim, cr(1.0 / (dim as f64).sqrt()));
    let proj = DMatrix::from_fn(dim, dim, |i, j| plus[i] * plus[j].conj());
    sandwich(&proj, &controls, n, rho)
}

/// Ideal output state `U|psi>` on the memory register.
pub(crate) fn ideal_target(ideal: &Operator, psi: &PureState) -> Result<PureState> {
    PureState::new(psi.layout().clone(), ideal.apply_vec(psi.amplitudes()))
}
