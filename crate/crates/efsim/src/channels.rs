//! Kraus channels: CPTP validation, a library of standard noise channels,
//! dominant-Kraus decomposition and pseudo-vacuum certificates.
//!
//! A channel is an ordered set of Kraus operators `{K_0, ..., K_R}` with
//! `sum_i K_i^dag K_i = I`. By convention `K_0` is the operator whose
//! normalized action most resembles the ideal unitary; for a channel close
//! to an ideal `U` one can write `K_0 = U - eps * xi` with `||xi||_op = 1`.
//! The norm in that decomposition is fixed to the operator (spectral) norm
//! throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    self, apply_to_state, kron, op_norm, sandwich, DensityMatrix, Operator, Pauli, PureState,
    QubitLayout, Register, C64,
};
use crate::{Error, Result};

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// An ordered set of Kraus operators with a distinguished dominant element.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<Operator>,
    dominant_index: usize,
    dim: usize,
}

impl KrausChannel {
    /// Builds a channel from raw Kraus operators, verifying completeness to
    /// 1e-9.
    pub fn new(ops: Vec<Operator>) -> Result<Self> {
        Self::with_dominant(ops, 0)
    }

    pub fn with_dominant(ops: Vec<Operator>, dominant_index: usize) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Invalid("channel needs at least one Kraus operator".into()));
        }
        let dim = ops[0].dim();
        for op in &ops {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
        }
        if dominant_index >= ops.len() {
            return Err(Error::Invalid(format!(
                "dominant index {dominant_index} out of range"
            )));
        }
        let channel = KrausChannel {
            ops,
            dominant_index,
            dim,
        };
        let deviation = channel.completeness_deviation();
        if deviation > 1e-9 {
            return Err(Error::Invalid(format!(
                "Kraus completeness violated: ||sum K^dag K - I|| = {deviation:e}"
            )));
        }
        Ok(channel)
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of memory qubits the channel acts on.
    pub fn qubits(&self) -> usize {
        self.dim.ilog2() as usize
    }

    pub fn dominant_index(&self) -> usize {
        self.dominant_index
    }

    pub fn dominant(&self) -> &Operator {
        &self.ops[self.dominant_index]
    }

    /// `||sum_i K_i^dag K_i - I||_op`.
    pub fn completeness_deviation(&self) -> f64 {
        let mut acc = DMatrix::<C64>::zeros(self.dim, self.dim);
        for op in &self.ops {
            acc += op.matrix().adjoint() * op.matrix();
        }
        acc -= DMatrix::<C64>::identity(self.dim, self.dim);
        op_norm(&acc)
    }

    /// True when the channel consists of a single unitary operator.
    pub fn is_unitary_channel(&self) -> bool {
        self.ops.len() == 1 && self.ops[0].unitarity_deviation() <= 1e-9
    }

    /// Applies the channel to a density matrix on the full register.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let targets: Vec<usize> = (0..rho.layout().total_qubits()).collect();
        self.apply_on(rho, &targets)
    }

    /// Applies the channel on a qubit subset of a larger register.
    pub fn apply_on(&self, rho: &DensityMatrix, targets: &[usize]) -> Result<DensityMatrix> {
        let n = rho.layout().total_qubits();
        let mut acc = DMatrix::<C64>::zeros(rho.dim(), rho.dim());
        for op in &self.ops {
            acc += sandwich(op.matrix(), targets, n, rho.entries())?;
        }
        DensityMatrix::new(rho.layout().clone(), acc)
    }

    /// Fidelity of the channel against an ideal unitary on input `psi`:
    /// `<U psi| C(|psi><psi|) |U psi>`.
    pub fn fidelity(&self, ideal: &Operator, psi: &PureState) -> Result<f64> {
        if ideal.dim() != self.dim || psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: ideal.dim().min(psi.dim()),
            });
        }
        let target = ideal.apply_vec(psi.amplitudes());
        let mut fid = 0.0;
        for op in &self.ops {
            let v = op.apply_vec(psi.amplitudes());
            let overlap: C64 = target.iter().zip(v.iter()).map(|(t, x)| t.conj() * x).sum();
            fid += overlap.norm_sqr();
        }
        Ok(fid)
    }

    /// Lifts the channel to a full system layout, acting as identity on all
    /// registers other than `apparatus`.
    pub fn lift_to_system(&self, layout: &QubitLayout, apparatus: Register) -> Result<KrausChannel> {
        let seg = layout.range(apparatus);
        if seg.is_empty() {
            return Err(Error::EmptyRegister(apparatus));
        }
        if 1usize << (seg.end - seg.start) != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: 1usize << (seg.end - seg.start),
            });
        }
        let n = layout.total_qubits();
        let pre = DMatrix::<C64>::identity(1 << seg.start, 1 << seg.start);
        let post = DMatrix::<C64>::identity(1 << (n - seg.end), 1 << (n - seg.end));
        let ops = self
            .ops
            .iter()
            .map(|op| Operator::new(kron(&kron(&pre, op.matrix()), &post)))
            .collect::<Result<Vec<_>>>()?;
        KrausChannel::with_dominant(ops, self.dominant_index)
    }
}

/// Report of a CPTP completeness check.
#[derive(Debug, Clone)]
pub struct CptpReport {
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `sum K_i^dag K_i = I` within `tol` and reports the deviation.
pub fn validate_cptp(channel: &KrausChannel, tol: f64) -> CptpReport {
    let deviation = channel.completeness_deviation();
    CptpReport {
        deviation,
        tolerance: tol,
        pass: deviation <= tol,
    }
}

/// Kinds of standard single-qubit noise channels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// `K_0 = sqrt(1-p) I, K_1 = sqrt(p) Z`.
    Dephasing { p: f64 },
    /// `K_0 = sqrt(1-p) I, K_1 = sqrt(p) X`.
    Bitflip { p: f64 },
    /// `rho -> (1-p) rho + (p/3)(X rho X + Y rho Y + Z rho Z)`.
    Depolarizing { p: f64 },
    /// `K_0 = |0><0| + sqrt(1-gamma)|1><1|, K_1 = sqrt(gamma)|0><1|`.
    AmplitudeDamping { gamma: f64 },
    /// `K_i = sqrt(w_i) V_i` with unitary factors and weights summing to 1.
    MixedUnitary {
        weights: Vec<f64>,
        unitaries: Vec<MatrixSpec>,
    },
    /// Explicit Kraus matrices.
    Explicit { kraus: Vec<MatrixSpec> },
}

/// Row-major complex matrix, entries as `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixSpec {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        MatrixSpec { dim, entries }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        if self.entries.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                found: self.entries.len(),
            });
        }
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let [re, im] = self.entries[i * self.dim + j];
            C64::new(re, im)
        }))
    }
}

impl ChannelSpec {
    /// Instantiates the channel; every constructed channel passes
    /// [`validate_cptp`] at 1e-10.
    pub fn build(&self) -> Result<KrausChannel> {
        match self {
            ChannelSpec::Dephasing { p } => two_kraus(*p, Pauli::Z),
            ChannelSpec::Bitflip { p } => two_kraus(*p, Pauli::X),
            ChannelSpec::Depolarizing { p } => {
                check_prob(*p)?;
                if *p == 0.0 {
                    return KrausChannel::new(vec![Operator::identity(2)]);
                }
                let mut ops = vec![Operator::new(
                    DMatrix::<C64>::identity(2, 2) * cr((1.0 - p).sqrt()),
                )?];
                for pauli in [Pauli::X, Pauli::Y, Pauli::Z] {
                    ops.push(Operator::new(pauli.matrix() * cr((p / 3.0).sqrt()))?);
                }
                KrausChannel::new(ops)
            }
            ChannelSpec::AmplitudeDamping { gamma } => {
                check_prob(*gamma)?;
                let k0 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[cr(1.0), cr(0.0), cr(0.0), cr((1.0 - gamma).sqrt())],
                );
                let k1 =
                    DMatrix::from_row_slice(2, 2, &[cr(0.0), cr(gamma.sqrt()), cr(0.0), cr(0.0)]);
                if *gamma == 0.0 {
                    return KrausChannel::new(vec![Operator::new(k0)?]);
                }
                KrausChannel::new(vec![Operator::new(k0)?, Operator::new(k1)?])
            }
            ChannelSpec::MixedUnitary { weights, unitaries } => {
                if weights.len() != unitaries.len() || weights.is_empty() {
                    return Err(Error::Invalid(
                        "mixed_unitary needs matching weights and unitaries".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
                    return Err(Error::InvalidProbability(total));
                }
                let mut ops = Vec::with_capacity(weights.len());
                for (w, u) in weights.iter().zip(unitaries) {
                    let m = u.to_matrix()?;
                    // reject non-unitary factors before scaling
                    let unit = Operator::unitary(m)?;
                    ops.push(Operator::new(unit.matrix() * cr(w.sqrt()))?);
                }
                KrausChannel::new(ops)
            }
            ChannelSpec::Explicit { kraus } => {
                let ops = kraus
                    .iter()
                    .map(|m| Operator::new(m.to_matrix()?))
                    .collect::<Result<Vec<_>>>()?;
                KrausChannel::new(ops)
            }
        }
    }
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

fn two_kraus(p: f64, pauli: Pauli) -> Result<KrausChannel> {
    check_prob(p)?;
    if p == 0.0 {
        return KrausChannel::new(vec![Operator::identity(2)]);
    }
    KrausChannel::new(vec![
        Operator::new(DMatrix::<C64>::identity(2, 2) * cr((1.0 - p).sqrt()))?,
        Operator::new(pauli.matrix() * cr(p.sqrt()))?,
    ])
}

/// Decomposition of the dominant Kraus operator as `K = U - eps * xi` with
/// `||xi||_op = 1` (spectral norm), relative to an ideal unitary `U`.
#[derive(Debug, Clone)]
pub struct DominantDecomposition {
    pub dominant_index: usize,
    pub epsilon: f64,
    pub xi: Operator,
    pub ideal: Operator,
    /// Largest spectral norm among the non-dominant Kraus operators; the
    /// completeness relation makes this O(sqrt(eps)) — reported as a
    /// diagnostic, never enforced.
    pub max_other_norm: f64,
}

/// Selects the Kraus operator closest to the ideal unitary (largest
/// `|Tr(U^dag K_i)|`, ties broken by lowest index) and decomposes it as
/// `K = U - eps * xi`.
pub fn dominant_kraus_decomposition(
    channel: &KrausChannel,
    ideal: &Operator,
) -> Result<DominantDecomposition> {
    if ideal.dim() != channel.dim() {
        return Err(Error::DimensionMismatch {
            expected: channel.dim(),
            found: ideal.dim(),
        });
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, op) in channel.ops().iter().enumerate() {
        let score = (ideal.matrix().adjoint() * op.matrix()).trace().norm();
        if score > best_score + 1e-15 {
            best = i;
            best_score = score;
        }
    }
    let k = channel.ops()[best].matrix();
    let diff = ideal.matrix() - k;
    let epsilon = op_norm(&diff);
    let xi = if epsilon > 0.0 {
        Operator::new(diff / cr(epsilon))?
    } else {
        Operator::new(DMatrix::<C64>::zeros(channel.dim(), channel.dim()))?
    };
    let max_other_norm = channel
        .ops()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, op)| op_norm(op.matrix()))
        .fold(0.0, f64::max);
    Ok(DominantDecomposition {
        dominant_index: best,
        epsilon,
        xi,
        ideal: ideal.clone(),
        max_other_norm,
    })
}

/// Certificate that a state is (or is not) a pseudo-vacuum of a channel:
/// every `K_i |phi>` is parallel to `|phi>` up to a recorded phase.
#[derive(Debug, Clone)]
pub struct PseudoVacuumCertificate {
    pub valid: bool,
    /// `q_i = <phi|K_i^dag K_i|phi>`, the occurrence probability of each
    /// Kraus operator on the pseudo-vacuum.
    pub probs: Vec<f64>,
    /// Per-operator residual `||K_i|phi> - c_i|phi>||` with
    /// `c_i = <phi|K_i|phi>`.
    pub residuals: Vec<f64>,
    /// Phase of each `c_i` (zero where `c_i` vanishes).
    pub phases: Vec<f64>,
    /// Complex projections `c_i = <phi|K_i|phi>`.
    pub overlaps: Vec<C64>,
    pub prob_sum: f64,
}

/// Checks whether `phi` is a pseudo-vacuum state of the channel within
/// `tol` and records occurrence probabilities and phases.
pub fn pseudo_vacuum_check(
    channel: &KrausChannel,
    phi: &PureState,
    tol: f64,
) -> Result<PseudoVacuumCertificate> {
    if phi.dim() != channel.dim() {
        return Err(Error::DimensionMismatch {
            expected: channel.dim(),
            found: phi.dim(),
        });
    }
    let mut probs = Vec::new();
    let mut residuals = Vec::new();
    let mut phases = Vec::new();
    let mut overlaps = Vec::new();
    for op in channel.ops() {
        let v = op.apply_vec(phi.amplitudes());
        let c: C64 = phi
            .amplitudes()
            .iter()
            .zip(v.iter())
            .map(|(p, x)| p.conj() * x)
            .sum();
        let residual: f64 = v
            .iter()
            .zip(phi.amplitudes().iter())
            .map(|(x, p)| (x - c * p).norm_sqr())
            .sum::<f64>()
            .sqrt();
        probs.push(v.iter().map(|z| z.norm_sqr()).sum());
        residuals.push(residual);
        phases.push(if c.norm() > 1e-14 { c.arg() } else { 0.0 });
        overlaps.push(c);
    }
    let prob_sum: f64 = probs.iter().sum();
    let valid = residuals.iter().all(|r| *r <= tol) && (prob_sum - 1.0).abs() <= 1e-9;
    Ok(PseudoVacuumCertificate {
        valid,
        probs,
        residuals,
        phases,
        overlaps,
        prob_sum,
    })
}

/// A two-unitary error model `K_0 = sqrt(1-p) U, K_1 = sqrt(p) V`.
#[derive(Debug, Clone)]
pub struct TwoUnitaryModel {
    pub p: f64,
    pub u: Operator,
    pub v: Operator,
}

impl TwoUnitaryModel {
    pub fn new(p: f64, u: Operator, v: Operator) -> Result<Self> {
        check_prob(p)?;
        if !u.is_unitary() || !v.is_unitary() {
            return Err(Error::NotUnitary(f64::NAN));
        }
        if u.dim() != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                found: v.dim(),
            });
        }
        Ok(TwoUnitaryModel { p, u, v })
    }

    pub fn channel(&self) -> Result<KrausChannel> {
        if self.p == 0.0 {
            return KrausChannel::new(vec![self.u.clone()]);
        }
        if self.p == 1.0 {
            return KrausChannel::new(vec![self.v.clone()]);
        }
        KrausChannel::new(vec![
            Operator::new(self.u.matrix() * cr((1.0 - self.p).sqrt()))?,
            Operator::new(self.v.matrix() * cr(self.p.sqrt()))?,
        ])
    }

    /// Decomposes `V|psi> = e^{i nu} cos(theta) |U psi> + sin(theta) |U psi_perp>`
    /// with `theta` in `[0, pi/2]`; `nu` is set to 0 at the degenerate points
    /// `theta = 0, pi/2`.
    pub fn angles(&self, psi: &PureState) -> (f64, f64) {
        let u_psi = self.u.apply_vec(psi.amplitudes());
        let v_psi = self.v.apply_vec(psi.amplitudes());
        let c: C64 = u_psi
            .iter()
            .zip(v_psi.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let cos_theta = c.norm().min(1.0);
        let theta = cos_theta.acos();
        // nu is degenerate at theta = 0 or pi/2 and fixed to 0 there
        let nu = if c.norm() <= 1e-14 || cos_theta >= 1.0 - 1e-14 {
            0.0
        } else {
            c.arg()
        };
        (theta, nu)
    }
}

/// Serializes a channel definition to the structured text format.
pub fn channel_to_json(spec: &ChannelSpec) -> String {
    serde_json::to_string_pretty(spec).expect("channel spec serialization cannot fail")
}

/// Parses a channel definition from the structured text format.
pub fn channel_from_json(text: &str) -> Result<ChannelSpec> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("channel parse error: {e}")))
}

/// Explicit-matrix spec capturing an arbitrary channel.
pub fn channel_to_spec(channel: &KrausChannel) -> ChannelSpec {
    ChannelSpec::Explicit {
        kraus: channel
            .ops()
            .iter()
            .map(|op| MatrixSpec::from_matrix(op.matrix()))
            .collect(),
    }
}

/// Applies a channel to a pure state's projector; convenience for tests and
/// analytic evaluators.
pub fn apply_to_pure_projector(channel: &KrausChannel, psi: &PureState) -> Result<DensityMatrix> {
    channel.apply(&psi.outer())
}

/// Commutator norm `||[A, B]||_op`, used for the favorable-condition check.
pub fn commutator_norm(a: &Operator, b: &Operator) -> f64 {
    let c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    op_norm(&c)
}

/// True when one of the favorable success conditions holds: all Kraus
/// operators mutually commute, or `phi` is a pseudo-vacuum of the channel.
pub fn favorable_conditions_hold(channel: &KrausChannel, phi: &PureState) -> bool {
    let commuting = channel.ops().iter().enumerate().all(|(i, a)| {
        channel.ops()[i + 1..]
            .iter()
            .all(|b| commutator_norm(a, b) <= 1e-9)
    });
    if commuting {
        return true;
    }
    pseudo_vacuum_check(channel, phi, 1e-9)
        .map(|c| c.valid)
        .unwrap_or(false)
}

/// Lifted-channel helper used in tests: applies the channel on the
/// apparatus segment of a product state and returns the reduced state on
/// that segment.
pub fn apply_lifted_and_reduce(
    channel: &KrausChannel,
    layout: &QubitLayout,
    apparatus: Register,
    full_state: &PureState,
) -> Result<DensityMatrix> {
    let lifted = channel.lift_to_system(layout, apparatus)?;
    let rho = lifted.apply(&full_state.outer())?;
    rho.partial_trace(&[apparatus])
}

/// State after one Kraus operator acts on selected qubits of a pure state
/// (unnormalized).
pub fn kraus_branch(
    op: &Operator,
    targets: &[usize],
    state: &PureState,
) -> Result<DVector<C64>> {
    apply_to_state(
        op.matrix(),
        targets,
        state.layout().total_qubits(),
        state.amplitudes(),
    )
}

pub use linalg::Pauli as PauliKind;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plus() -> PureState {
        PureState::memory(DVector::from_vec(vec![
            cr(std::f64::consts::FRAC_1_SQRT_2),
            cr(std::f64::consts::FRAC_1_SQRT_2),
        ]))
        .unwrap()
    }

    fn zero() -> PureState {
        PureState::memory(DVector::from_vec(vec![cr(1.0), cr(0.0)])).unwrap()
    }

    #[test]
    fn dephasing_zero_is_identity_channel() {
        let ch = ChannelSpec::Dephasing { p: 0.0 }.build().unwrap();
        assert_eq!(ch.len(), 1);
        assert!(ch.is_unitary_channel());
        assert!(validate_cptp(&ch, 1e-10).pass);
    }

    #[test]
    fn dephasing_completeness_holds() {
        let ch = ChannelSpec::Dephasing { p: 0.1 }.build().unwrap();
        let report = validate_cptp(&ch, 1e-10);
        assert!(report.pass, "deviation {}", report.deviation);
        assert_relative_eq!(
            ch.ops()[0].matrix()[(0, 0)].re,
            0.9f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            ch.ops()[1].matrix()[(1, 1)].re,
            -0.1f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn non_cptp_set_reports_deviation_one() {
        // {I, X}: sum K^dag K = 2I, deviation 1 by direct computation.
        let ops = vec![Operator::identity(2), Operator::pauli(Pauli::X)];
        let channel = KrausChannel {
            ops,
            dominant_index: 0,
            dim: 2,
        };
        let report = validate_cptp(&channel, 1e-9);
        assert!(!report.pass);
        assert_relative_eq!(report.deviation, 1.0, epsilon = 1e-12);
        // the public constructor rejects it outright
        assert!(
            KrausChannel::new(vec![Operator::identity(2), Operator::pauli(Pauli::X)]).is_err()
        );
    }

    #[test]
    fn depolarizing_fidelity_on_zero_matches_four_kraus_oracle() {
        // Oracle: <0|[(1-p) rho + (p/3)(X rho X + Y rho Y + Z rho Z)]|0>
        // with rho = |0><0| gives (1-p) + p/3 = 1 - 2p/3 under this
        // parameterization.
        let p = 0.12;
        let ch = ChannelSpec::Depolarizing { p }.build().unwrap();
        let f = ch.fidelity(&Operator::identity(2), &zero()).unwrap();
        assert_relative_eq!(f, 1.0 - 2.0 * p / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_channel_preserves_any_state() {
        let ch = ChannelSpec::Dephasing { p: 0.0 }.build().unwrap();
        let rho = plus().outer();
        let out = ch.apply(&rho).unwrap();
        assert_relative_eq!(out.fidelity(&plus()), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            ch.fidelity(&Operator::identity(2), &plus()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn full_dephasing_of_plus_is_maximally_mixed() {
        // Oracle: (rho + Z rho Z)/2 on |+><+| is I/2. Under the
        // K0 = sqrt(1-p) I, K1 = sqrt(p) Z convention that map is p = 1/2
        // (p = 1 is the coherent unitary Z).
        let ch = ChannelSpec::Dephasing { p: 0.5 }.build().unwrap();
        let out = ch.apply(&plus().outer()).unwrap();
        assert_relative_eq!(out.entries()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(out.entries()[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(out.entries()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dephasing_fidelity_on_plus_is_one_minus_p() {
        // Oracle: <+|(1-p) rho + p Z rho Z|+> = 1 - p for rho = |+><+|.
        let p = 0.23;
        let ch = ChannelSpec::Dephasing { p }.build().unwrap();
        let f = ch.fidelity(&Operator::identity(2), &plus()).unwrap();
        assert_relative_eq!(f, 1.0 - p, epsilon = 1e-12);
    }

    #[test]
    fn trace_preserved_on_mixed_input() {
        let ch = ChannelSpec::Depolarizing { p: 0.3 }.build().unwrap();
        // random-ish mixed state
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[cr(0.7), C64::new(0.1, 0.05), C64::new(0.1, -0.05), cr(0.3)],
        );
        let rho = DensityMatrix::new(
            QubitLayout::single(Register::Memory, 1).unwrap(),
            m,
        )
        .unwrap();
        let out = ch.apply(&rho).unwrap();
        assert_relative_eq!(out.trace(), rho.trace(), epsilon = 1e-12);
        out.validate().unwrap();
    }

    #[test]
    fn unitary_channel_fidelity_is_overlap_squared() {
        let v = Operator::unitary(Pauli::Z.matrix()).unwrap();
        let ch = KrausChannel::new(vec![v.clone()]).unwrap();
        let psi = plus();
        let f = ch.fidelity(&Operator::identity(2), &psi).unwrap();
        let overlap: C64 = psi
            .amplitudes()
            .iter()
            .zip(v.apply_vec(psi.amplitudes()).iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert_relative_eq!(f, overlap.norm_sqr(), epsilon = 1e-12);
    }

    #[test]
    fn dominant_decomposition_of_pure_unitary_has_zero_epsilon() {
        let ch = KrausChannel::new(vec![Operator::identity(2)]).unwrap();
        let d = dominant_kraus_decomposition(&ch, &Operator::identity(2)).unwrap();
        assert_eq!(d.dominant_index, 0);
        assert_relative_eq!(d.epsilon, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dominant_decomposition_of_two_unitary_model() {
        // ||K_0 - U|| = (1 - sqrt(1-p)) ||U|| = 1 - sqrt(1-p)
        let p = 0.04;
        let model = TwoUnitaryModel::new(
            p,
            Operator::identity(2),
            Operator::unitary(Pauli::Z.matrix()).unwrap(),
        )
        .unwrap();
        let d = dominant_kraus_decomposition(&model.channel().unwrap(), &Operator::identity(2))
            .unwrap();
        assert_eq!(d.dominant_index, 0);
        assert_relative_eq!(d.epsilon, 1.0 - (1.0 - p).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn dominant_decomposition_dephasing_numeric() {
        let ch = ChannelSpec::Dephasing { p: 0.01 }.build().unwrap();
        let d = dominant_kraus_decomposition(&ch, &Operator::identity(2)).unwrap();
        assert_eq!(d.dominant_index, 0);
        // 1 - sqrt(0.99) = 0.0050125...
        assert_relative_eq!(d.epsilon, 1.0 - 0.99f64.sqrt(), epsilon = 1e-12);
        assert!((d.epsilon - 0.005012).abs() < 1e-6);
        // K_i ~ O(sqrt(eps)) diagnostic
        assert!(d.max_other_norm <= 2.0 * d.epsilon.sqrt() + 1e-9);
    }

    #[test]
    fn dominant_decomposition_round_trips() {
        let ch = ChannelSpec::Dephasing { p: 0.07 }.build().unwrap();
        let u = Operator::identity(2);
        let d = dominant_kraus_decomposition(&ch, &u).unwrap();
        let rebuilt = u.matrix() - d.xi.matrix() * cr(d.epsilon);
        let diff = &rebuilt - ch.ops()[d.dominant_index].matrix();
        assert!(op_norm(&diff) <= 1e-9);
    }

    #[test]
    fn lift_identity_gives_global_identity() {
        let layout = QubitLayout::new(1, 0, 1, 1, 0).unwrap();
        let ch = KrausChannel::new(vec![Operator::identity(2)]).unwrap();
        let lifted = ch.lift_to_system(&layout, Register::Active).unwrap();
        assert!(validate_cptp(&lifted, 1e-10).pass);
        assert_eq!(lifted.dim(), 8);
        let diff = lifted.ops()[0].matrix() - DMatrix::<C64>::identity(8, 8);
        assert!(op_norm(&diff) <= 1e-12);
    }

    #[test]
    fn lifted_channel_commutes_with_control_unitaries() {
        let layout = QubitLayout::new(1, 0, 0, 1, 0).unwrap();
        let ch = ChannelSpec::Dephasing { p: 0.3 }.build().unwrap();
        let lifted = ch.lift_to_system(&layout, Register::Active).unwrap();
        let h_on_control = kron(
            &Operator::hadamard().into_matrix(),
            &DMatrix::<C64>::identity(2, 2),
        );
        for op in lifted.ops() {
            let c = op.matrix() * &h_on_control - &h_on_control * op.matrix();
            assert!(op_norm(&c) <= 1e-12);
        }
    }

    #[test]
    fn lifted_fidelity_matches_unlifted_on_product_state() {
        // partial-trace oracle
        let layout = QubitLayout::new(0, 0, 1, 1, 0).unwrap();
        let psi = plus();
        let phi = zero();
        let full = PureState::product(
            layout.clone(),
            &[
                (Register::Memory, phi.amplitudes()),
                (Register::Active, psi.amplitudes()),
            ],
        )
        .unwrap();
        let ch = ChannelSpec::Depolarizing { p: 0.2 }.build().unwrap();
        let reduced = apply_lifted_and_reduce(&ch, &layout, Register::Active, &full).unwrap();
        let direct = ch.apply(&psi.outer()).unwrap();
        let lifted_fid = reduced.fidelity(&psi);
        let direct_fid = direct.fidelity(&psi);
        assert_relative_eq!(lifted_fid, direct_fid, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_vacuum_of_dephasing_is_zero_ket() {
        let p = 0.1;
        let ch = ChannelSpec::Dephasing { p }.build().unwrap();
        let cert = pseudo_vacuum_check(&ch, &zero(), 1e-10).unwrap();
        assert!(cert.valid);
        assert_relative_eq!(cert.probs[0], 1.0 - p, epsilon = 1e-12);
        assert_relative_eq!(cert.probs[1], p, epsilon = 1e-12);
        assert_relative_eq!(cert.prob_sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bitflip_has_no_pseudo_vacuum_at_zero_ket() {
        let ch = ChannelSpec::Bitflip { p: 0.1 }.build().unwrap();
        let cert = pseudo_vacuum_check(&ch, &zero(), 1e-10).unwrap();
        assert!(!cert.valid);
        // X|0> is orthogonal to |0>: residual is the full Kraus norm sqrt(p)
        assert_relative_eq!(cert.residuals[1], 0.1f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dephasing_plus_state_is_not_pseudo_vacuum() {
        let ch = ChannelSpec::Dephasing { p: 0.1 }.build().unwrap();
        let cert = pseudo_vacuum_check(&ch, &plus(), 1e-10).unwrap();
        assert!(!cert.valid);
        assert!(cert.residuals[1] > 0.1);
    }

    #[test]
    fn favorable_conditions_for_bitflip_via_commutation() {
        // {I, X} factors commute even though |0> is not stationary.
        let ch = ChannelSpec::Bitflip { p: 0.1 }.build().unwrap();
        assert!(favorable_conditions_hold(&ch, &zero()));
    }

    #[test]
    fn channel_spec_round_trip() {
        let spec = ChannelSpec::Depolarizing { p: 0.05 };
        let text = channel_to_json(&spec);
        let parsed = channel_from_json(&text).unwrap();
        assert_eq!(spec, parsed);
        let explicit = channel_to_spec(&spec.build().unwrap());
        let rebuilt = explicit.build().unwrap();
        assert!(validate_cptp(&rebuilt, 1e-10).pass);
    }

    #[test]
    fn mixed_unitary_rejects_non_unitary_factor() {
        let bad = MatrixSpec::from_matrix(&DMatrix::from_row_slice(
            2,
            2,
            &[cr(1.0), cr(0.0), cr(0.0), cr(0.5)],
        ));
        let spec = ChannelSpec::MixedUnitary {
            weights: vec![1.0],
            unitaries: vec![bad],
        };
        assert!(spec.build().is_err());
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(ChannelSpec::Dephasing { p: 1.5 }.build().is_err());
        assert!(ChannelSpec::Depolarizing { p: -0.1 }.build().is_err());
    }

    #[test]
    fn two_unitary_angles_recover_theta_nu() {
        // V = exp(i a Z) on |+>: <U psi|V psi> = cos(a), theta = a.
        let a = 0.3f64;
        let v = Operator::unitary(DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::from_polar(1.0, a),
                cr(0.0),
                cr(0.0),
                C64::from_polar(1.0, -a),
            ],
        ))
        .unwrap();
        let model = TwoUnitaryModel::new(0.1, Operator::identity(2), v).unwrap();
        let (theta, nu) = model.angles(&plus());
        assert_relative_eq!(theta, a, epsilon = 1e-10);
        assert_relative_eq!(nu, 0.0, epsilon = 1e-10);
    }
}
