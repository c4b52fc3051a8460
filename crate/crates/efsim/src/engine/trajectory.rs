//! Seeded Monte-Carlo trajectory backend.
//!
//! Each trajectory evolves a pure state through the circuit with one
//! sampled noise realization per apparatus call. Post-selection is handled
//! by projecting the control (and flag) registers and accumulating the
//! numerator `<U psi|rho|U psi>` and denominator `Tr rho` as separate
//! Monte-Carlo averages; the reported fidelity is their ratio with a
//! first-order error propagation.
//!
//! Determinism: trajectory `k` draws from its own counter-derived stream
//! (`splitmix64` expansion of `(seed, k)` into a ChaCha8 key), and
//! trajectories are accumulated in fixed-size chunks that are merged in
//! chunk order. Results are therefore bit-identical for a fixed
//! `(seed, samples)` regardless of the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::KrausChannel;
use crate::linalg::{
    apply_to_state_mut, permute_state, DensityMatrix, Operator, Register, C64,
};
use crate::{Error, Result};

use super::circuit::{branched_swap_perm, cnot_perm, EfSetup, Gate, GateList};
use super::exact::{initial_state, EMPTY_ENSEMBLE_TRACE};
use super::EfResult;

/// Number of trajectories per accumulation chunk; fixed so that results do
/// not depend on the worker count.
const CHUNK: usize = 256;

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// One noisy call to the black-box apparatus, acting on its port qubits
/// (plus optional internal workspace) of a full-register state vector.
pub trait TrajectoryApparatus: Sync {
    /// Apparatus-internal workspace qubits appended after the active
    /// register; the apparatus is responsible for resetting them between
    /// calls.
    fn internal_qubits(&self) -> usize {
        0
    }

    /// Applies one sampled realization of the noisy call. The state must
    /// stay normalized.
    fn apply(
        &self,
        state: &mut DVector<C64>,
        n_qubits: usize,
        port: &[usize],
        internal: &[usize],
        rng: &mut ChaCha8Rng,
    );
}

impl TrajectoryApparatus for KrausChannel {
    fn apply(
        &self,
        state: &mut DVector<C64>,
        n_qubits: usize,
        port: &[usize],
        _internal: &[usize],
        rng: &mut ChaCha8Rng,
    ) {
        // Kraus-index sampling with state-dependent probabilities
        // ||K_i |state>||^2, followed by renormalization.
        let mut weights = Vec::with_capacity(self.len());
        let mut total = 0.0;
        for op in self.ops() {
            let mut scratch = state.clone();
            apply_to_state_mut(op.matrix(), port, n_qubits, &mut scratch);
            let w: f64 = scratch.iter().map(|z| z.norm_sqr()).sum();
            weights.push(w);
            total += w;
        }
        let mut draw = rand::Rng::gen::<f64>(rng) * total;
        let mut chosen = self.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if draw < *w {
                chosen = i;
                break;
            }
            draw -= w;
        }
        apply_to_state_mut(self.ops()[chosen].matrix(), port, n_qubits, state);
        let norm = weights[chosen].sqrt();
        if norm > 0.0 {
            *state /= cr(norm);
        }
    }
}

/// Counter-derived independent RNG stream for one trajectory index.
pub(crate) fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut s = seed ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum CompiledGate {
    OneQubit(DMatrix<C64>, usize),
    Perm(Vec<usize>),
    Apparatus,
    FlagProject(Vec<(usize, bool)>),
    ControlProject(Vec<(usize, bool)>),
}

fn compile(circuit: &GateList) -> Vec<CompiledGate> {
    let layout = &circuit.layout;
    let n = layout.total_qubits();
    circuit
        .gates
        .iter()
        .map(|gate| match gate {
            Gate::H(q) => CompiledGate::OneQubit(Operator::hadamard().into_matrix(), *q),
            Gate::Pauli(p, q) => CompiledGate::OneQubit(p.matrix(), *q),
            Gate::Cnot { control, target } => {
                CompiledGate::Perm(cnot_perm(n, *control, *target))
            }
            Gate::BranchedSwap { branch } => {
                CompiledGate::Perm(branched_swap_perm(layout, *branch))
            }
            Gate::Apparatus { .. } => CompiledGate::Apparatus,
            Gate::FlagMeasure => CompiledGate::FlagProject(
                layout.qubits(Register::Flag).into_iter().map(|q| (q, false)).collect(),
            ),
            Gate::ProjectControl => CompiledGate::ControlProject(
                layout.qubits(Register::Control).into_iter().map(|q| (q, false)).collect(),
            ),
        })
        .collect()
}

/// Bivariate running moments of the (numerator, denominator) samples plus
/// the flag-rejection mean; merges associatively for chunked accumulation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct RatioStats {
    count: u64,
    mean_n: f64,
    mean_d: f64,
    m2_n: f64,
    m2_d: f64,
    c_nd: f64,
    mean_flag: f64,
}

impl RatioStats {
    fn push(&mut self, n: f64, d: f64, flag: f64) {
        self.count += 1;
        let c = self.count as f64;
        let dn = n - self.mean_n;
        self.mean_n += dn / c;
        let dd = d - self.mean_d;
        self.mean_d += dd / c;
        self.m2_n += dn * (n - self.mean_n);
        self.m2_d += dd * (d - self.mean_d);
        self.c_nd += dn * (d - self.mean_d);
        self.mean_flag += (flag - self.mean_flag) / c;
    }

    fn merge(a: RatioStats, b: RatioStats) -> RatioStats {
        if b.count == 0 {
            return a;
        }
        if a.count == 0 {
            return b;
        }
        let (ca, cb) = (a.count as f64, b.count as f64);
        let count = a.count + b.count;
        let c = count as f64;
        let dn = b.mean_n - a.mean_n;
        let dd = b.mean_d - a.mean_d;
        RatioStats {
            count,
            mean_n: a.mean_n + dn * cb / c,
            mean_d: a.mean_d + dd * cb / c,
            m2_n: a.m2_n + b.m2_n + dn * dn * ca * cb / c,
            m2_d: a.m2_d + b.m2_d + dd * dd * ca * cb / c,
            c_nd: a.c_nd + b.c_nd + dn * dd * ca * cb / c,
            mean_flag: a.mean_flag + (b.mean_flag - a.mean_flag) * cb / c,
        }
    }

    pub(crate) fn success(&self) -> f64 {
        self.mean_d
    }

    pub(crate) fn fidelity(&self) -> f64 {
        if self.mean_d <= EMPTY_ENSEMBLE_TRACE {
            1.0
        } else {
            self.mean_n / self.mean_d
        }
    }

    /// First-order (delta-method) standard error of the ratio estimator.
    pub(crate) fn fidelity_error(&self) -> f64 {
        if self.count < 2 || self.mean_d <= EMPTY_ENSEMBLE_TRACE {
            return 0.0;
        }
        let m = self.count as f64;
        let var_n = self.m2_n / (m - 1.0);
        let var_d = self.m2_d / (m - 1.0);
        let cov = self.c_nd / (m - 1.0);
        let r = self.mean_n / self.mean_d;
        let var_r = (var_n - 2.0 * r * cov + r * r * var_d).max(0.0) / (m * self.mean_d * self.mean_d);
        var_r.sqrt()
    }

    pub(crate) fn success_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let m = self.count as f64;
        (self.m2_d / (m - 1.0) / m).sqrt()
    }
}

struct MemoryContraction {
    rest_masks: Vec<usize>,
    mem_masks: Vec<usize>,
    target: DVector<C64>,
}

impl MemoryContraction {
    fn new(circuit: &GateList, target: &DVector<C64>) -> Self {
        let layout = &circuit.layout;
        let n = layout.total_qubits();
        let mem = layout.qubits(Register::Memory);
        let rest: Vec<usize> = (0..n).filter(|q| !mem.contains(q)).collect();
        MemoryContraction {
            rest_masks: masks_for(&rest, n),
            mem_masks: masks_for(&mem, n),
            target: target.clone(),
        }
    }

    /// Numerator sample `||(<target|_mem ⊗ I) |state>||^2` and accumulation
    /// of the reduced memory density matrix.
    fn contract(&self, state: &DVector<C64>, rho_acc: &mut DMatrix<C64>) -> f64 {
        let mdim = self.mem_masks.len();
        let mut num = 0.0;
        let mut mem_vec = vec![cr(0.0); mdim];
        for &rest in &self.rest_masks {
            for (s, &mm) in self.mem_masks.iter().enumerate() {
                mem_vec[s] = state[rest | mm];
            }
            let mut overlap = cr(0.0);
            for (s, &amp) in mem_vec.iter().enumerate() {
                overlap += self.target[s].conj() * amp;
            }
            num += overlap.norm_sqr();
            for i in 0..mdim {
                for j in 0..mdim {
                    rho_acc[(i, j)] += mem_vec[i] * mem_vec[j].conj();
                }
            }
        }
        num
    }
}

fn masks_for(qubits: &[usize], n: usize) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|a| {
            let mut mask = 0usize;
            for (t, &q) in qubits.iter().enumerate() {
                if (a >> (k - 1 - t)) & 1 == 1 {
                    mask |= 1usize << (n - 1 - q);
                }
            }
            mask
        })
        .collect()
}

/// Runs the trajectory backend over a prebuilt circuit and apparatus.
pub(crate) fn run_trajectory_circuit(
    setup: &EfSetup,
    circuit: &GateList,
    apparatus: &dyn TrajectoryApparatus,
) -> Result<EfResult> {
    if setup.samples == 0 {
        return Err(Error::Invalid("trajectory backend needs samples > 0".into()));
    }
    let layout = &circuit.layout;
    let n = layout.total_qubits();
    let compiled = compile(circuit);
    let init = initial_state(setup, layout)?;
    let port = circuit.apparatus_targets();
    let internal = layout.qubits(Register::Internal);
    let contraction = MemoryContraction::new(circuit, setup.target.amplitudes());
    let mdim = 1usize << layout.count(Register::Memory);

    let n_chunks = setup.samples.div_ceil(CHUNK);
    let chunks: Vec<(RatioStats, DMatrix<C64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk_idx| {
            let lo = chunk_idx * CHUNK;
            let hi = ((chunk_idx + 1) * CHUNK).min(setup.samples);
            let mut stats = RatioStats::default();
            let mut rho_acc = DMatrix::from_element(mdim, mdim, cr(0.0));
            let mut state = init.clone();
            for k in lo..hi {
                state.copy_from(&init);
                let mut rng = trajectory_rng(setup.seed, k as u64);
                let mut flag_reject = 0.0;
                for gate in &compiled {
                    match gate {
                        CompiledGate::OneQubit(m, q) => {
                            apply_to_state_mut(m, &[*q], n, &mut state)
                        }
                        CompiledGate::Perm(perm) => permute_state(perm, &mut state),
                        CompiledGate::Apparatus => {
                            apparatus.apply(&mut state, n, &port, &internal, &mut rng)
                        }
                        CompiledGate::FlagProject(assignments) => {
                            let before: f64 = state.iter().map(|z| z.norm_sqr()).sum();
                            crate::linalg::project_state(assignments, n, &mut state);
                            let after: f64 = state.iter().map(|z| z.norm_sqr()).sum();
                            flag_reject = if before > 0.0 { 1.0 - after / before } else { 0.0 };
                        }
                        CompiledGate::ControlProject(assignments) => {
                            crate::linalg::project_state(assignments, n, &mut state);
                        }
                    }
                }
                let den: f64 = state.iter().map(|z| z.norm_sqr()).sum();
                let num = contraction.contract(&state, &mut rho_acc);
                stats.push(num, den, flag_reject);
            }
            (stats, rho_acc)
        })
        .collect();

    // merge sequentially in chunk order so results are thread-count independent
    let mut stats = RatioStats::default();
    let mut rho_acc = DMatrix::from_element(mdim, mdim, cr(0.0));
    for (s, m) in chunks {
        stats = RatioStats::merge(stats, s);
        rho_acc += m;
    }
    if stats.success() <= 0.0 {
        return Err(Error::ZeroAcceptance);
    }
    rho_acc /= cr(setup.samples as f64);
    let mem_layout = layout.keep_only(&[Register::Memory]);
    let rho = DensityMatrix::new(mem_layout, rho_acc)?;
    Ok(EfResult {
        rho,
        success_prob: stats.success(),
        fidelity: stats.fidelity(),
        stat_error: Some(stats.fidelity_error()),
        success_error: Some(stats.success_error()),
        flag_reject_prob: if setup.flag_qubits {
            Some(stats.mean_flag)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_merge_matches_sequential() {
        let samples: Vec<(f64, f64)> = (0..100)
            .map(|i| (0.5 + 0.001 * (i % 7) as f64, 0.9 + 0.001 * (i % 5) as f64))
            .collect();
        let mut seq = RatioStats::default();
        for &(n, d) in &samples {
            seq.push(n, d, 0.0);
        }
        let mut left = RatioStats::default();
        let mut right = RatioStats::default();
        for &(n, d) in &samples[..37] {
            left.push(n, d, 0.0);
        }
        for &(n, d) in &samples[37..] {
            right.push(n, d, 0.0);
        }
        let merged = RatioStats::merge(left, right);
        assert!((merged.mean_n - seq.mean_n).abs() < 1e-12);
        assert!((merged.mean_d - seq.mean_d).abs() < 1e-12);
        assert!((merged.m2_n - seq.m2_n).abs() < 1e-9);
        assert!((merged.c_nd - seq.c_nd).abs() < 1e-9);
        assert!((merged.fidelity_error() - seq.fidelity_error()).abs() < 1e-12);
    }

    #[test]
    fn rng_streams_are_deterministic_and_distinct() {
        let mut a = trajectory_rng(42, 0);
        let mut a2 = trajectory_rng(42, 0);
        let mut b = trajectory_rng(42, 1);
        let xa: f64 = rand::Rng::gen(&mut a);
        let xa2: f64 = rand::Rng::gen(&mut a2);
        let xb: f64 = rand::Rng::gen(&mut b);
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
