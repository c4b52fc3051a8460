//! The gate-based EF circuit engine: configuration, exact density-matrix
//! and Monte-Carlo trajectory backends, fault injection, and the
//! flag-qubit variant.

mod circuit;
mod exact;
mod trajectory;

pub use circuit::{build_circuit, EfSetup, FaultLocation, FaultQubit, FaultSpec, Gate, GateList};
pub use trajectory::TrajectoryApparatus;

use crate::channels::KrausChannel;
use crate::linalg::{DensityMatrix, Operator, PureState};
use crate::{Error, Result};

/// Simulation backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Full density-matrix evolution; exact up to floating point.
    Exact,
    /// Seeded Monte-Carlo pure-state trajectories.
    Trajectory,
}

/// Full specification of one EF run.
#[derive(Debug, Clone)]
pub struct EfConfig {
    /// Number of control qubits; the circuit makes `T = 2^log_t` apparatus
    /// calls. `log_t = 0` is the bare apparatus with no EF.
    pub log_t: usize,
    /// Input state on the memory register.
    pub psi: PureState,
    /// Active-register initial state, same dimension as `psi`.
    pub phi: PureState,
    /// Ideal unitary the apparatus is supposed to implement.
    pub ideal: Operator,
    /// Noisy apparatus model.
    pub channel: KrausChannel,
    pub backend: Backend,
    pub trajectory_samples: usize,
    pub seed: u64,
    /// Pair each control qubit with a parity flag that detects single bit
    /// flips.
    pub flag_qubits: bool,
    pub faults: Vec<FaultSpec>,
}

impl EfConfig {
    pub fn new(
        log_t: usize,
        psi: PureState,
        phi: PureState,
        ideal: Operator,
        channel: KrausChannel,
    ) -> Result<Self> {
        if psi.dim() != channel.dim() {
            return Err(Error::DimensionMismatch {
                expected: channel.dim(),
                found: psi.dim(),
            });
        }
        if phi.dim() != channel.dim() {
            return Err(Error::DimensionMismatch {
                expected: channel.dim(),
                found: phi.dim(),
            });
        }
        if ideal.dim() != channel.dim() {
            return Err(Error::DimensionMismatch {
                expected: channel.dim(),
                found: ideal.dim(),
            });
        }
        Ok(EfConfig {
            log_t,
            psi,
            phi,
            ideal,
            channel,
            backend: Backend::Exact,
            trajectory_samples: 10_000,
            seed: 0,
            flag_qubits: false,
            faults: Vec::new(),
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.trajectory_samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_flags(mut self, flags: bool) -> Self {
        self.flag_qubits = flags;
        self
    }

    pub fn with_faults(mut self, faults: Vec<FaultSpec>) -> Self {
        self.faults = faults;
        self
    }

    pub fn t(&self) -> usize {
        1usize << self.log_t
    }

    /// Lowers the config to the apparatus-independent circuit setup.
    pub fn setup(&self) -> Result<EfSetup> {
        let target = exact::ideal_target(&self.ideal, &self.psi)?;
        let setup = EfSetup {
            log_t: self.log_t,
            psi: self.psi.clone(),
            phi: self.phi.clone(),
            target,
            samples: self.trajectory_samples,
            seed: self.seed,
            flag_qubits: self.flag_qubits,
            faults: self.faults.clone(),
            internal_qubits: 0,
        };
        setup.validate()?;
        Ok(setup)
    }
}

/// Outputs of one EF run.
#[derive(Debug, Clone)]
pub struct EfResult {
    /// Unnormalized post-selected state on the memory register; its trace
    /// is the success probability (exactly for the exact backend, as a
    /// Monte-Carlo mean for trajectories).
    pub rho: DensityMatrix,
    pub success_prob: f64,
    /// `<U psi|rho|U psi> / Tr rho`. An empty accepted ensemble
    /// (`Tr rho <= 1e-14`) is reported as fidelity 1: no accepted run
    /// contradicts the ideal.
    pub fidelity: f64,
    /// Standard error of the fidelity ratio estimator (trajectory backend).
    pub stat_error: Option<f64>,
    /// Standard error of the success probability (trajectory backend).
    pub success_error: Option<f64>,
    /// Probability that the flag parity measurement rejects the run.
    pub flag_reject_prob: Option<f64>,
}

impl EfResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// Builds the ordered gate list for a config.
pub fn build_ef_circuit(config: &EfConfig) -> Result<GateList> {
    build_circuit(&config.setup()?)
}

/// Runs the exact density-matrix backend.
pub fn run_exact(config: &EfConfig) -> Result<EfResult> {
    let setup = config.setup()?;
    let circuit = build_circuit(&setup)?;
    exact::run_exact_circuit(&setup, &circuit, &config.channel)
}

/// Runs the Monte-Carlo trajectory backend with Kraus-index unraveling of
/// the channel.
pub fn run_trajectories(config: &EfConfig) -> Result<EfResult> {
    let setup = config.setup()?;
    let circuit = build_circuit(&setup)?;
    trajectory::run_trajectory_circuit(&setup, &circuit, &config.channel)
}

/// Runs the backend selected in the config.
pub fn run(config: &EfConfig) -> Result<EfResult> {
    match config.backend {
        Backend::Exact => run_exact(config),
        Backend::Trajectory => run_trajectories(config),
    }
}

/// Runs with the faults listed in the config (they are inserted into the
/// gate list as deterministic Paulis), on the selected backend.
pub fn run_with_faults(config: &EfConfig) -> Result<EfResult> {
    if config.faults.is_empty() {
        return Err(Error::InvalidFault(
            "run_with_faults called with an empty fault list".into(),
        ));
    }
    run(config)
}

/// Runs the flag-qubit variant on the selected backend.
pub fn run_flagged(config: &EfConfig) -> Result<EfResult> {
    if !config.flag_qubits {
        return Err(Error::Invalid(
            "run_flagged needs flag_qubits enabled".into(),
        ));
    }
    run(config)
}

/// Runs the trajectory backend for an arbitrary apparatus (e.g. a noisy
/// QRAM circuit) over a custom setup.
pub fn run_trajectories_with(
    setup: &EfSetup,
    apparatus: &dyn TrajectoryApparatus,
) -> Result<EfResult> {
    let mut setup = setup.clone();
    setup.internal_qubits = apparatus.internal_qubits();
    let circuit = build_circuit(&setup)?;
    trajectory::run_trajectory_circuit(&setup, &circuit, apparatus)
}
