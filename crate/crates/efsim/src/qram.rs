//! Bucket-brigade quantum RAM: a layered circuit model with per-timestep
//! depolarizing noise, used as a realistic many-qubit apparatus for EF.
//!
//! Layout of one memory of depth `n` (`N = 2^n` cells): `n` address qubits
//! and one bus qubit form the query port; `2^n - 1` router qubits form a
//! binary tree. The schedule is `n` fan-in layers that route each address
//! bit to its tree level, one data layer writing classical bits onto the
//! bus, and `n` fan-out layers undoing the fan-in: `2n + 1` timesteps.
//! After every timestep each participating qubit suffers X, Y or Z with
//! probability `p_dep/3` each. Routers are reset between queries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use crate::ancilla::{self, FaultTemplate, PerturbativeReport};
use crate::channels::KrausChannel;
use crate::engine::{run_trajectories_with, EfSetup, FaultSpec, TrajectoryApparatus};
use crate::linalg::{
    partial_trace_qubits, sandwich, Operator, Pauli, PureState, QubitLayout, Register, C64,
};
use crate::{Error, Result};

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Bucket-brigade memory specification.
#[derive(Debug, Clone)]
pub struct QramSpec {
    /// Tree depth `n`; the memory holds `2^n` classical bits.
    pub depth: usize,
    pub data: Vec<bool>,
    /// Depolarizing probability per qubit per timestep.
    pub p_dep: f64,
}

impl QramSpec {
    pub fn new(depth: usize, data: Vec<bool>, p_dep: f64) -> Result<Self> {
        if depth == 0 || depth > 5 {
            return Err(Error::Invalid(format!(
                "QRAM depth {depth} outside the supported range 1..=5"
            )));
        }
        if data.len() != 1 << depth {
            return Err(Error::DimensionMismatch {
                expected: 1 << depth,
                found: data.len(),
            });
        }
        if !(0.0..=1.0).contains(&p_dep) {
            return Err(Error::InvalidProbability(p_dep));
        }
        Ok(QramSpec { depth, data, p_dep })
    }

    /// Address + bus qubit count (the query port).
    pub fn port_qubits(&self) -> usize {
        self.depth + 1
    }

    pub fn router_qubits(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn timesteps(&self) -> usize {
        2 * self.depth + 1
    }

    pub fn cells(&self) -> usize {
        1 << self.depth
    }
}

/// Qubit addressing within the QRAM, resolved to global indices at run
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QramQubit {
    /// Address qubits `0..n`, bus at `n`.
    Port(usize),
    /// Router at tree position `2^level - 1 + node`.
    Router(usize),
}

/// One gate of the schedule. Controls are (qubit, required value) pairs.
#[derive(Debug, Clone)]
pub enum QramGate {
    ControlledSwap {
        controls: Vec<(QramQubit, bool)>,
        a: QramQubit,
        b: QramQubit,
    },
    ControlledX {
        controls: Vec<(QramQubit, bool)>,
        target: QramQubit,
    },
}

/// Timestep-layered gate schedule.
#[derive(Debug, Clone)]
pub struct QramCircuit {
    pub spec: QramSpec,
    pub layers: Vec<Vec<QramGate>>,
}

fn router_index(level: usize, node: usize) -> usize {
    (1 << level) - 1 + node
}

/// Controls selecting the path to node `v` at tree level `l`: the level-`k`
/// ancestor router must hold the `k`-th path bit.
fn path_controls(level: usize, node: usize) -> Vec<(QramQubit, bool)> {
    (0..level)
        .map(|k| {
            let ancestor = node >> (level - k);
            let bit = (node >> (level - 1 - k)) & 1 == 1;
            (QramQubit::Router(router_index(k, ancestor)), bit)
        })
        .collect()
}

/// Builds the layered bucket-brigade schedule.
pub fn build_bucket_brigade(spec: &QramSpec) -> Result<QramCircuit> {
    let n = spec.depth;
    let mut layers = Vec::with_capacity(spec.timesteps());
    // fan-in: address bit l travels to the level-l router on the selected path
    for l in 0..n {
        let layer: Vec<QramGate> = (0..1usize << l)
            .map(|v| QramGate::ControlledSwap {
                controls: path_controls(l, v),
                a: QramQubit::Port(l),
                b: QramQubit::Router(router_index(l, v)),
            })
            .collect();
        layers.push(layer);
    }
    // data retrieval: cells holding 1 flip the bus along their path
    let data_layer: Vec<QramGate> = spec
        .data
        .iter()
        .enumerate()
        .filter(|(_, bit)| **bit)
        .map(|(cell, _)| QramGate::ControlledX {
            controls: path_controls(n, cell),
            target: QramQubit::Port(n),
        })
        .collect();
    layers.push(data_layer);
    // fan-out: reverse of the fan-in (each layer is self-inverse)
    for l in (0..n).rev() {
        layers.push(layers[l].clone());
    }
    Ok(QramCircuit {
        spec: spec.clone(),
        layers,
    })
}

/// The ideal query unitary on the port: `|a>|b> -> |a>|b xor x_a>`.
pub fn ideal_query_operator(spec: &QramSpec) -> Operator {
    let dim = 1usize << spec.port_qubits();
    let mut m = DMatrix::from_element(dim, dim, cr(0.0));
    for input in 0..dim {
        let address = input >> 1;
        let flip = usize::from(spec.data[address]);
        m[(input ^ flip, input)] = cr(1.0);
    }
    Operator::unitary(m).expect("query permutation is unitary")
}

/// Fidelity of the noiseless circuit against the ideal query for a given
/// port state; 1 up to floating point for every spec.
pub fn ideal_query_fidelity(spec: &QramSpec, psi_port: &PureState) -> Result<f64> {
    let apparatus = NoisyQram::new(QramSpec {
        p_dep: 0.0,
        ..spec.clone()
    })?;
    let n_qubits = spec.port_qubits() + spec.router_qubits();
    let port: Vec<usize> = (0..spec.port_qubits()).collect();
    let internal: Vec<usize> = (spec.port_qubits()..n_qubits).collect();
    let mut state = DVector::from_element(1 << n_qubits, cr(0.0));
    let shift = spec.router_qubits();
    for (i, amp) in psi_port.amplitudes().iter().enumerate() {
        state[i << shift] = *amp;
    }
    let mut rng = crate::engine::EfSetup {
        log_t: 0,
        psi: psi_port.clone(),
        phi: psi_port.clone(),
        target: psi_port.clone(),
        samples: 1,
        seed: 0,
        flag_qubits: false,
        faults: vec![],
        internal_qubits: 0,
    };
    let _ = &mut rng;
    let mut chacha = rand::SeedableRng::seed_from_u64(0);
    apparatus.apply(&mut state, n_qubits, &port, &internal, &mut chacha);
    let ideal = ideal_query_operator(spec).apply_vec(psi_port.amplitudes());
    let mut overlap = cr(0.0);
    for (i, amp) in ideal.iter().enumerate() {
        overlap += amp.conj() * state[i << shift];
    }
    Ok(overlap.norm_sqr())
}

/// Trajectory-sampled noisy QRAM apparatus: the schedule with per-timestep
/// depolarizing noise on the port and router qubits, routers reset after
/// each query.
pub struct NoisyQram {
    circuit: QramCircuit,
    resolved: OnceLock<Vec<Vec<ResolvedGate>>>,
}

#[derive(Debug, Clone)]
enum ResolvedGate {
    Swap {
        controls: Vec<(usize, bool)>,
        a: usize,
        b: usize,
    },
    X {
        controls: Vec<(usize, bool)>,
        target: usize,
    },
}

impl NoisyQram {
    pub fn new(spec: QramSpec) -> Result<Self> {
        Ok(NoisyQram {
            circuit: build_bucket_brigade(&spec)?,
            resolved: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &QramSpec {
        &self.circuit.spec
    }

    fn resolve(&self, port: &[usize], internal: &[usize]) -> &Vec<Vec<ResolvedGate>> {
        self.resolved.get_or_init(|| {
            let map = |q: QramQubit| -> usize {
                match q {
                    QramQubit::Port(i) => port[i],
                    QramQubit::Router(i) => internal[i],
                }
            };
            self.circuit
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|gate| match gate {
                            QramGate::ControlledSwap { controls, a, b } => ResolvedGate::Swap {
                                controls: controls.iter().map(|&(q, v)| (map(q), v)).collect(),
                                a: map(*a),
                                b: map(*b),
                            },
                            QramGate::ControlledX { controls, target } => ResolvedGate::X {
                                controls: controls.iter().map(|&(q, v)| (map(q), v)).collect(),
                                target: map(*target),
                            },
                        })
                        .collect()
                })
                .collect()
        })
    }
}

#[inline]
fn bit_mask(q: usize, n_qubits: usize) -> usize {
    1usize << (n_qubits - 1 - q)
}

fn controls_match(index: usize, controls: &[(usize, bool)], n_qubits: usize) -> bool {
    controls
        .iter()
        .all(|&(q, v)| (index & bit_mask(q, n_qubits) != 0) == v)
}

fn apply_resolved(state: &mut DVector<C64>, n_qubits: usize, gate: &ResolvedGate) {
    match gate {
        ResolvedGate::Swap { controls, a, b } => {
            let am = bit_mask(*a, n_qubits);
            let bm = bit_mask(*b, n_qubits);
            for i in 0..state.len() {
                // visit each transposition once: a-bit set, b-bit clear
                if i & am != 0 && i & bm == 0 && controls_match(i, controls, n_qubits) {
                    let j = i ^ am ^ bm;
                    state.swap_rows(i, j);
                }
            }
        }
        ResolvedGate::X { controls, target } => {
            let tm = bit_mask(*target, n_qubits);
            for i in 0..state.len() {
                if i & tm == 0 && controls_match(i, controls, n_qubits) {
                    state.swap_rows(i, i | tm);
                }
            }
        }
    }
}

fn apply_pauli_inplace(state: &mut DVector<C64>, n_qubits: usize, q: usize, pauli: Pauli) {
    let mask = bit_mask(q, n_qubits);
    match pauli {
        Pauli::X => {
            for i in 0..state.len() {
                if i & mask == 0 {
                    state.swap_rows(i, i | mask);
                }
            }
        }
        Pauli::Y => {
            let im = C64::new(0.0, 1.0);
            for i in 0..state.len() {
                if i & mask == 0 {
                    let lo = state[i];
                    let hi = state[i | mask];
                    state[i] = -im * hi;
                    state[i | mask] = im * lo;
                }
            }
        }
        Pauli::Z => {
            for i in 0..state.len() {
                if i & mask != 0 {
                    state[i] = -state[i];
                }
            }
        }
    }
}

/// Measures a qubit in the Z basis (collapsing with the sampled outcome)
/// and flips it back to `|0>` if it read 1.
fn reset_qubit(state: &mut DVector<C64>, n_qubits: usize, q: usize, rng: &mut ChaCha8Rng) {
    let mask = bit_mask(q, n_qubits);
    let mut p0 = 0.0;
    for i in 0..state.len() {
        if i & mask == 0 {
            p0 += state[i].norm_sqr();
        }
    }
    let outcome_one = rng.gen::<f64>() >= p0;
    let keep_mask_set = outcome_one;
    let norm = if outcome_one { (1.0 - p0).sqrt() } else { p0.sqrt() };
    if norm <= 0.0 {
        return;
    }
    for i in 0..state.len() {
        let set = i & mask != 0;
        if set != keep_mask_set {
            state[i] = cr(0.0);
        } else {
            state[i] /= cr(norm);
        }
    }
    if outcome_one {
        apply_pauli_inplace(state, n_qubits, q, Pauli::X);
    }
}

impl TrajectoryApparatus for NoisyQram {
    fn internal_qubits(&self) -> usize {
        self.circuit.spec.router_qubits()
    }

    fn apply(
        &self,
        state: &mut DVector<C64>,
        n_qubits: usize,
        port: &[usize],
        internal: &[usize],
        rng: &mut ChaCha8Rng,
    ) {
        let layers = self.resolve(port, internal);
        let p = self.circuit.spec.p_dep;
        // fixed noise order: port qubits then routers
        let noisy: Vec<usize> = port.iter().chain(internal.iter()).copied().collect();
        for layer in layers {
            for gate in layer {
                apply_resolved(state, n_qubits, gate);
            }
            if p > 0.0 {
                for &q in &noisy {
                    if rng.gen::<f64>() < p {
                        let pauli = match rng.gen_range(0..3u8) {
                            0 => Pauli::X,
                            1 => Pauli::Y,
                            _ => Pauli::Z,
                        };
                        apply_pauli_inplace(state, n_qubits, q, pauli);
                    }
                }
            }
        }
        // fresh routers for the next branch query
        for &q in internal {
            reset_qubit(state, n_qubits, q, rng);
        }
    }
}

/// Exact Kraus channel of one noisy query on the port, obtained by evolving
/// the full port+router density matrix and eigendecomposing the Choi
/// matrix. Feasible for depth 1 and 2; used to cross-validate the
/// trajectory apparatus.
pub fn exact_kraus_channel(spec: &QramSpec) -> Result<KrausChannel> {
    if spec.depth > 2 {
        return Err(Error::Invalid(
            "exact Kraus extraction supported for depth <= 2".into(),
        ));
    }
    let circuit = build_bucket_brigade(spec)?;
    let d = 1usize << spec.port_qubits();
    let r = spec.router_qubits();
    let n_full = spec.port_qubits() + r;
    let dim_full = 1usize << n_full;
    let router_qubits: Vec<usize> = (spec.port_qubits()..n_full).collect();
    // resolve gates onto the standalone layout (port first, routers last)
    let map = |q: QramQubit| -> usize {
        match q {
            QramQubit::Port(i) => i,
            QramQubit::Router(i) => spec.port_qubits() + i,
        }
    };
    let paulis = [Pauli::X.matrix(), Pauli::Y.matrix(), Pauli::Z.matrix()];
    let evolve = |rho: &DMatrix<C64>| -> DMatrix<C64> {
        let mut rho = rho.clone();
        for layer in &circuit.layers {
            for gate in layer {
                let perm = perm_for_gate(gate, &map, n_full);
                let mut out = DMatrix::from_element(dim_full, dim_full, cr(0.0));
                for i in 0..dim_full {
                    for j in 0..dim_full {
                        out[(perm[i], perm[j])] = rho[(i, j)];
                    }
                }
                rho = out;
            }
            if spec.p_dep > 0.0 {
                for q in 0..n_full {
                    let mut mixed = &rho * cr(1.0 - spec.p_dep);
                    for pm in &paulis {
                        mixed += sandwich(pm, &[q], n_full, &rho).unwrap() * cr(spec.p_dep / 3.0);
                    }
                    rho = mixed;
                }
            }
        }
        partial_trace_qubits(&rho, n_full, &router_qubits)
    };
    // Choi matrix from the action on all port basis operators |i><j|
    let mut choi = DMatrix::from_element(d * d, d * d, cr(0.0));
    for i in 0..d {
        for j in 0..d {
            let mut basis = DMatrix::from_element(dim_full, dim_full, cr(0.0));
            basis[(i << r, j << r)] = cr(1.0);
            let out = evolve(&basis);
            for m in 0..d {
                for n in 0..d {
                    choi[(i * d + m, j * d + n)] = out[(m, n)];
                }
            }
        }
    }
    // hermitize against floating-point asymmetry before eigendecomposition
    let choi = (&choi + choi.adjoint()) * cr(0.5);
    let eig = nalgebra::SymmetricEigen::new(choi);
    let mut ops = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 1e-12 {
            let v = eig.eigenvectors.column(k);
            let mut kraus = DMatrix::from_element(d, d, cr(0.0));
            for i in 0..d {
                for m in 0..d {
                    kraus[(m, i)] = v[i * d + m] * cr(lambda.sqrt());
                }
            }
            ops.push(Operator::new(kraus)?);
        }
    }
    // largest-weight operator first so the dominant index is 0
    ops.sort_by(|a, b| {
        let na: f64 = a.matrix().iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = b.matrix().iter().map(|z| z.norm_sqr()).sum();
        nb.partial_cmp(&na).unwrap()
    });
    KrausChannel::new(ops)
}

fn perm_for_gate(
    gate: &QramGate,
    map: &dyn Fn(QramQubit) -> usize,
    n_qubits: usize,
) -> Vec<usize> {
    let dim = 1usize << n_qubits;
    match gate {
        QramGate::ControlledSwap { controls, a, b } => {
            let controls: Vec<(usize, bool)> =
                controls.iter().map(|&(q, v)| (map(q), v)).collect();
            let am = bit_mask(map(*a), n_qubits);
            let bm = bit_mask(map(*b), n_qubits);
            (0..dim)
                .map(|i| {
                    if controls_match(i, &controls, n_qubits)
                        && (i & am != 0) != (i & bm != 0)
                    {
                        i ^ am ^ bm
                    } else {
                        i
                    }
                })
                .collect()
        }
        QramGate::ControlledX { controls, target } => {
            let controls: Vec<(usize, bool)> =
                controls.iter().map(|&(q, v)| (map(q), v)).collect();
            let tm = bit_mask(map(*target), n_qubits);
            (0..dim)
                .map(|i| {
                    if controls_match(i, &controls, n_qubits) {
                        i ^ tm
                    } else {
                        i
                    }
                })
                .collect()
        }
    }
}

/// The canonical query state: uniform address superposition with the bus
/// in `|0>`.
pub fn uniform_query_state(spec: &QramSpec) -> Result<PureState> {
    let m = spec.port_qubits();
    let mut amps = DVector::from_element(1 << m, cr(0.0));
    let scale = 1.0 / (spec.cells() as f64).sqrt();
    for a in 0..spec.cells() {
        amps[a << 1] = cr(scale);
    }
    PureState::new(QubitLayout::single(Register::Memory, m)?, amps)
}

/// EF setup wrapping the QRAM as the apparatus: memory and active are
/// address+bus copies, routers sit in the internal register.
pub fn ef_setup(spec: &QramSpec, log_t: usize, samples: usize, seed: u64) -> Result<EfSetup> {
    let psi = uniform_query_state(spec)?;
    let ideal = ideal_query_operator(spec);
    let target = PureState::new(psi.layout().clone(), ideal.apply_vec(psi.amplitudes()))?;
    let m = spec.port_qubits();
    let mut phi_amps = DVector::from_element(1 << m, cr(0.0));
    phi_amps[0] = cr(1.0);
    let phi = PureState::new(psi.layout().clone(), phi_amps)?;
    Ok(EfSetup {
        log_t,
        psi,
        phi,
        target,
        samples,
        seed,
        flag_qubits: false,
        faults: vec![],
        internal_qubits: spec.router_qubits(),
    })
}

/// One row of an EF-wrapped QRAM experiment.
#[derive(Debug, Clone)]
pub struct QramExperimentRow {
    pub experiment_id: String,
    pub n: usize,
    pub p_dep: f64,
    pub log_t: usize,
    pub samples: usize,
    pub seed: u64,
    pub infidelity: f64,
    pub infidelity_err: f64,
    pub fail_prob: f64,
    pub fail_prob_err: f64,
}

impl QramExperimentRow {
    pub fn csv_header() -> &'static str {
        "experiment_id,n,p_dep,log_T,samples,seed,infidelity,infidelity_err,fail_prob,fail_prob_err"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6e},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.experiment_id,
            self.n,
            self.p_dep,
            self.log_t,
            self.samples,
            self.seed,
            self.infidelity,
            self.infidelity_err,
            self.fail_prob,
            self.fail_prob_err
        )
    }
}

fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// EF-wrapped QRAM sweep over control-register sizes.
pub fn qram_ef_experiment(
    spec: &QramSpec,
    log_t_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<QramExperimentRow>> {
    let apparatus = NoisyQram::new(spec.clone())?;
    let mut rows = Vec::new();
    for &log_t in log_t_list {
        let mut setup = ef_setup(spec, log_t, samples, 0)?;
        setup.seed = mix_seed(seed, log_t as u64 + 1);
        // a fresh apparatus per run: the resolved layout differs with log_t
        let apparatus = NoisyQram::new(apparatus.spec().clone())?;
        let r = run_trajectories_with(&setup, &apparatus)?;
        rows.push(QramExperimentRow {
            experiment_id: "qram_ef".into(),
            n: spec.depth,
            p_dep: spec.p_dep,
            log_t,
            samples,
            seed,
            infidelity: 1.0 - r.fidelity,
            infidelity_err: r.stat_error.unwrap_or(0.0),
            fail_prob: 1.0 - r.success_prob,
            fail_prob_err: r.success_error.unwrap_or(0.0),
        });
    }
    Ok(rows)
}

/// Perturbative ancilla-error sweep over the QRAM apparatus: one
/// first-order report per control-register size.
pub fn qram_ancilla_error_experiment(
    spec: &QramSpec,
    log_t_list: &[usize],
    eps_prime: f64,
    pauli: Pauli,
    samples: usize,
    seed: u64,
) -> Result<Vec<(usize, PerturbativeReport)>> {
    let mut out = Vec::new();
    for &log_t in log_t_list {
        let report = if log_t == 0 {
            // no control register: the bare apparatus is the baseline
            let setup = ef_setup(spec, 0, samples, mix_seed(seed, 1))?;
            let apparatus = NoisyQram::new(spec.clone())?;
            let r = run_trajectories_with(&setup, &apparatus)?;
            PerturbativeReport {
                infidelity_first_order: 1.0 - r.fidelity,
                fail_prob_first_order: 1.0 - r.success_prob,
                n_locations: 0,
                base_infidelity: 1.0 - r.fidelity,
                base_fail_prob: 1.0 - r.success_prob,
                eps_prime,
                expansion_parameter: 0.0,
                within_validity: true,
                per_location_terms: vec![],
            }
        } else {
            let locations: Vec<FaultTemplate> =
                ancilla::fault_locations_for(log_t, false, spec.port_qubits())
                    .into_iter()
                    .filter(|s| s.is_control())
                    .collect();
            let runner = |faults: &[FaultSpec]| -> Result<crate::engine::EfResult> {
                let mut setup = ef_setup(spec, log_t, samples, 0)?;
                setup.faults = faults.to_vec();
                let mut salt = log_t as u64 + 17;
                for f in faults {
                    salt = salt
                        .wrapping_mul(1_000_003)
                        .wrapping_add(fault_salt(f));
                }
                setup.seed = mix_seed(seed, salt);
                let apparatus = NoisyQram::new(spec.clone())?;
                run_trajectories_with(&setup, &apparatus)
            };
            ancilla::perturbative_expansion(&locations, pauli, eps_prime, runner)?
        };
        out.push((log_t, report));
    }
    Ok(out)
}

fn fault_salt(f: &FaultSpec) -> u64 {
    use crate::engine::{FaultLocation, FaultQubit};
    let loc = match f.location {
        FaultLocation::PreBranch(t) => 3 * t,
        FaultLocation::MidBranch(t) => 3 * t + 1,
        FaultLocation::PostBranch(t) => 3 * t + 2,
    } as u64;
    let qubit = match f.qubit {
        FaultQubit::Control(k) => 2 * k,
        FaultQubit::Flag(k) => 2 * k + 1,
        FaultQubit::Memory(k) => 1000 + k,
    } as u64;
    loc.wrapping_mul(8191).wrapping_add(qubit)
}
