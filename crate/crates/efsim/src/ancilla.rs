//! Quantitative ancilla-error modelling: fault-location enumeration,
//! first-order perturbative expansion over single-fault simulations,
//! phenomenological infidelity/success models, error-hierarchy bounds and
//! optimal-`T` analysis.

use rayon::prelude::*;

use crate::engine::{EfConfig, EfResult, FaultLocation, FaultQubit, FaultSpec};
use crate::linalg::Pauli;
use crate::{Error, Result};

/// Ancilla noise rates. `eps_bf`/`eps_pf` are per-unit-time rates; the
/// per-location probability is their product with the apparatus run time
/// `tau_u` (one fault opportunity per location per branch duration).
/// `eps_prime` is a directly specified per-location probability and `p_m`
/// an independent memory-error probability.
#[derive(Debug, Clone, Copy)]
pub struct AncillaNoiseParams {
    pub eps_bf: f64,
    pub eps_pf: f64,
    pub eps_prime: f64,
    pub p_m: f64,
    pub tau_u: f64,
}

impl AncillaNoiseParams {
    pub fn new(eps_bf: f64, eps_pf: f64, eps_prime: f64, p_m: f64, tau_u: f64) -> Result<Self> {
        for v in [eps_bf, eps_pf, eps_prime, p_m] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(v));
            }
        }
        if tau_u <= 0.0 {
            return Err(Error::Invalid("tau_u must be positive".into()));
        }
        Ok(AncillaNoiseParams {
            eps_bf,
            eps_pf,
            eps_prime,
            p_m,
            tau_u,
        })
    }

    /// Per-location bit-flip probability `tau_u * eps_bf`.
    pub fn per_location_bitflip(&self) -> f64 {
        self.tau_u * self.eps_bf
    }

    /// Per-location phase-flip probability `tau_u * eps_pf`.
    pub fn per_location_phaseflip(&self) -> f64 {
        self.tau_u * self.eps_pf
    }
}

/// A fault location without a Pauli assigned yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultTemplate {
    pub location: FaultLocation,
    pub qubit: FaultQubit,
}

impl FaultTemplate {
    pub fn with(self, pauli: Pauli) -> FaultSpec {
        FaultSpec::new(self.location, self.qubit, pauli)
    }

    pub fn is_control(&self) -> bool {
        matches!(self.qubit, FaultQubit::Control(_))
    }
}

/// Enumerates the fault opportunities of one EF circuit.
///
/// Per control qubit (and per flag qubit when flags are enabled) there is
/// one location during every branch (`mid(t)`, `T` of them) and one at
/// every internal boundary between branches (`post(t)`, `T - 1` of them):
/// `2T - 1` sites, `O(T log T)` in total. The outermost gaps (before the
/// first swap and after the last) act on an unentangled control register
/// and are no-ops for X faults, so they are not enumerated. Memory qubits
/// idle between branch queries: `T - 1` boundary sites each.
pub fn fault_locations(config: &EfConfig) -> Result<Vec<FaultTemplate>> {
    if config.log_t == 0 {
        return Err(Error::Invalid(
            "fault locations need at least one control qubit".into(),
        ));
    }
    Ok(fault_locations_for(
        config.log_t,
        config.flag_qubits,
        config.channel.qubits(),
    ))
}

/// Lower-level enumeration from the circuit shape alone.
pub fn fault_locations_for(
    log_t: usize,
    flag_qubits: bool,
    memory_qubits: usize,
) -> Vec<FaultTemplate> {
    let t = 1usize << log_t;
    let mut out = Vec::new();
    for k in 0..log_t {
        push_sites(&mut out, FaultQubit::Control(k), t);
    }
    if flag_qubits {
        for k in 0..log_t {
            push_sites(&mut out, FaultQubit::Flag(k), t);
        }
    }
    for j in 0..memory_qubits {
        for b in 0..t - 1 {
            out.push(FaultTemplate {
                location: FaultLocation::PostBranch(b),
                qubit: FaultQubit::Memory(j),
            });
        }
    }
    out
}

fn push_sites(out: &mut Vec<FaultTemplate>, qubit: FaultQubit, t: usize) {
    for branch in 0..t {
        out.push(FaultTemplate {
            location: FaultLocation::MidBranch(branch),
            qubit,
        });
        if branch + 1 < t {
            out.push(FaultTemplate {
                location: FaultLocation::PostBranch(branch),
                qubit,
            });
        }
    }
}

/// Per-location single-fault simulation results.
#[derive(Debug, Clone)]
pub struct LocationTerm {
    pub template: FaultTemplate,
    pub pauli: Pauli,
    /// Fidelity of the accepted ensemble given a fault here and nowhere else.
    pub fidelity: f64,
    pub success_prob: f64,
    /// `F^(1,eta) - F^(0)`.
    pub delta_fidelity: f64,
    /// `P^(1,eta) - P^(0)`.
    pub delta_success: f64,
}

/// First-order expansion of infidelity and failure probability in the
/// per-location fault rate.
///
/// The expansion is taken on the acceptance-weighted ensemble: with
/// no-fault values `(P0, F0)` and single-fault values `(P_eta, F_eta)`,
///
/// ```text
/// P  = (1 - N eps') P0 + eps' sum_eta P_eta
/// F  = [(1 - N eps') P0 F0 + eps' sum_eta P_eta F_eta] / P
/// ```
///
/// Faults whose runs are fully rejected (e.g. control phase flips) carry
/// zero acceptance weight and drop out of the fidelity exactly, while
/// still lowering the success probability.
#[derive(Debug, Clone)]
pub struct PerturbativeReport {
    pub infidelity_first_order: f64,
    pub fail_prob_first_order: f64,
    pub n_locations: usize,
    pub base_infidelity: f64,
    pub base_fail_prob: f64,
    pub eps_prime: f64,
    /// `N_loc * eps'`; the expansion is meaningful well below 1 (a value
    /// above 0.2 is flagged).
    pub expansion_parameter: f64,
    pub within_validity: bool,
    pub per_location_terms: Vec<LocationTerm>,
}

impl PerturbativeReport {
    /// Re-evaluates the first-order combination at a different per-location
    /// rate; the per-location terms are rate-independent.
    pub fn evaluate_at(&self, eps_prime: f64) -> (f64, f64) {
        combine_first_order(
            self.base_infidelity,
            self.base_fail_prob,
            &self.per_location_terms,
            eps_prime,
        )
    }

    /// CSV rows `location,qubit,pauli,delta_fidelity,delta_success`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,qubit,pauli,delta_fidelity,delta_success\n");
        for term in &self.per_location_terms {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e}\n",
                term.template.location,
                term.template.qubit,
                term.pauli,
                term.delta_fidelity,
                term.delta_success
            ));
        }
        out
    }
}

fn combine_first_order(
    base_infidelity: f64,
    base_fail: f64,
    terms: &[LocationTerm],
    eps_prime: f64,
) -> (f64, f64) {
    let n = terms.len() as f64;
    let p0 = 1.0 - base_fail;
    let f0 = 1.0 - base_infidelity;
    let mut num = (1.0 - n * eps_prime) * p0 * f0;
    let mut den = (1.0 - n * eps_prime) * p0;
    for term in terms {
        num += eps_prime * term.success_prob * term.fidelity;
        den += eps_prime * term.success_prob;
    }
    let fidelity = if den > 0.0 { num / den } else { 1.0 };
    (1.0 - fidelity, 1.0 - den)
}

/// Runs the no-fault simulation once and one single-fault simulation per
/// location, then combines them to first order in `eps_prime`.
///
/// `runner` maps a fault list to a simulated [`EfResult`]; per-location
/// runs execute in parallel and are combined in location order.
pub fn perturbative_expansion<F>(
    locations: &[FaultTemplate],
    pauli: Pauli,
    eps_prime: f64,
    runner: F,
) -> Result<PerturbativeReport>
where
    F: Fn(&[FaultSpec]) -> Result<EfResult> + Sync,
{
    let base = runner(&[])?;
    let terms: Vec<LocationTerm> = locations
        .par_iter()
        .map(|template| {
            let r = runner(&[template.with(pauli)])?;
            Ok(LocationTerm {
                template: *template,
                pauli,
                fidelity: r.fidelity,
                success_prob: r.success_prob,
                delta_fidelity: r.fidelity - base.fidelity,
                delta_success: r.success_prob - base.success_prob,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let base_infidelity = 1.0 - base.fidelity;
    let base_fail = 1.0 - base.success_prob;
    let (infidelity_first_order, fail_prob_first_order) =
        combine_first_order(base_infidelity, base_fail, &terms, eps_prime);
    let expansion_parameter = locations.len() as f64 * eps_prime;
    Ok(PerturbativeReport {
        infidelity_first_order,
        fail_prob_first_order,
        n_locations: locations.len(),
        base_infidelity,
        base_fail_prob: base_fail,
        eps_prime,
        expansion_parameter,
        within_validity: expansion_parameter <= 0.2,
        per_location_terms: terms,
    })
}

/// Exact accepted-ensemble statistics under independent faults: enumerates
/// all `2^N` fault patterns with probability `prob` per location and mixes
/// the unnormalized accepted states. The independent oracle the first-order
/// expansion is checked against.
#[derive(Debug, Clone, Copy)]
pub struct MixtureResult {
    pub fidelity: f64,
    pub success_prob: f64,
}

pub fn fault_mixture<F>(
    locations: &[FaultTemplate],
    pauli: Pauli,
    prob: f64,
    runner: F,
) -> Result<MixtureResult>
where
    F: Fn(&[FaultSpec]) -> Result<EfResult> + Sync,
{
    if locations.len() > 20 {
        return Err(Error::Invalid(format!(
            "fault mixture over {} locations is too large to enumerate",
            locations.len()
        )));
    }
    let patterns: Vec<usize> = (0..1usize << locations.len()).collect();
    let partials: Vec<(f64, f64)> = patterns
        .par_iter()
        .map(|&pattern| {
            let faults: Vec<FaultSpec> = locations
                .iter()
                .enumerate()
                .filter(|(i, _)| pattern >> i & 1 == 1)
                .map(|(_, loc)| loc.with(pauli))
                .collect();
            let weight = prob.powi(pattern.count_ones() as i32)
                * (1.0 - prob).powi((locations.len() as u32 - pattern.count_ones()) as i32);
            let r = runner(&faults)?;
            Ok((weight * r.success_prob * r.fidelity, weight * r.success_prob))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, d) in partials {
        num += n;
        den += d;
    }
    Ok(MixtureResult {
        fidelity: if den > 0.0 { num / den } else { 1.0 },
        success_prob: den,
    })
}

/// Exact-backend runner for a channel-apparatus config.
pub fn exact_runner(config: &EfConfig) -> impl Fn(&[FaultSpec]) -> Result<EfResult> + Sync + '_ {
    move |faults: &[FaultSpec]| {
        let mut c = config.clone();
        c.faults = faults.to_vec();
        crate::engine::run_exact(&c)
    }
}

/// Phenomenological infidelity model
/// `(1 - F_0)/T + tau_u * eps_bf * T * log2(T)`. A model, not a
/// simulation; `T = 1` is the bare apparatus.
pub fn infidelity_model(f0: f64, t: usize, noise: &AncillaNoiseParams) -> f64 {
    let tf = t as f64;
    (1.0 - f0) / tf + noise.per_location_bitflip() * tf * tf.log2()
}

/// Error-hierarchy ratio bound `(T - 1) / (T^2 log2 T)`: EF helps while
/// `tau_u eps_bf / (1 - F_0)` stays below it. Equals 1/4 at `T = 2` and
/// decays like `1/(T log T)`.
pub fn hierarchy_ratio_bound(t: usize) -> f64 {
    assert!(t >= 2, "hierarchy bound needs T >= 2");
    let tf = t as f64;
    (tf - 1.0) / (tf * tf * tf.log2())
}

/// Minimizes [`infidelity_model`] over `T in {1, 2, 4, ..., t_max}`; ties
/// break toward smaller `T`.
pub fn optimal_t(f0: f64, noise: &AncillaNoiseParams, t_max: usize) -> (usize, Vec<(usize, f64)>) {
    assert!(t_max.is_power_of_two(), "t_max must be a power of two");
    let mut curve = Vec::new();
    let mut best = (1usize, f64::INFINITY);
    let mut t = 1usize;
    while t <= t_max {
        let value = infidelity_model(f0, t, noise);
        curve.push((t, value));
        if value < best.1 - 1e-15 {
            best = (t, value);
        }
        t *= 2;
    }
    (best.0, curve)
}

/// First-order success-probability reduction from control phase flips:
/// `tau_u * eps_pf * T * log2 T`.
pub fn phase_flip_penalty(t: usize, noise: &AncillaNoiseParams) -> f64 {
    assert!(t >= 2, "phase flip penalty needs T >= 2");
    let tf = t as f64;
    noise.per_location_phaseflip() * tf * tf.log2()
}

/// Bit-flip rate below which a single control qubit still improves on the
/// bare apparatus: `eps' < (1 - F_0) / (2C)` for `C` fault locations.
pub fn single_control_threshold(f0: f64, locations: usize) -> f64 {
    assert!(locations >= 1);
    (1.0 - f0) / (2.0 * locations as f64)
}

/// Least-squares power-law fit `y = a x^k` on log-log axes; returns
/// `(k, ln a)`. Points with non-positive coordinates are rejected.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid("power-law fit needs >= 2 points".into()));
    }
    let mut lx = Vec::with_capacity(x.len());
    let mut ly = Vec::with_capacity(y.len());
    for (&a, &b) in x.iter().zip(y) {
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Invalid(
                "power-law fit needs positive coordinates".into(),
            ));
        }
        lx.push(a.ln());
        ly.push(b.ln());
    }
    let n = lx.len() as f64;
    let mx: f64 = lx.iter().sum::<f64>() / n;
    let my: f64 = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("degenerate abscissas in fit".into()));
    }
    let k = sxy / sxx;
    Ok((k, my - k * mx))
}
