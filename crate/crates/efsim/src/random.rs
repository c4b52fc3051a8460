//! Seeded generation of Haar-random unitaries, states and stochastic
//! channels, used by property sweeps and the experiment harness.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::KrausChannel;
use crate::linalg::{Operator, C64};
use crate::Result;

fn ginibre<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase
/// convention fixed on the R diagonal.
pub fn haar_unitary<R: Rng>(rng: &mut R, dim: usize) -> Operator {
    let g = ginibre(rng, dim, dim);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Operator::unitary(q).expect("QR of a Ginibre matrix is unitary")
}

/// Uniformly random pure state vector.
pub fn state_vector<R: Rng>(rng: &mut R, dim: usize) -> DVector<C64> {
    let mut v = DVector::from_fn(dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v /= C64::new(norm, 0.0);
    v
}

/// Random stochastic (mixed-unitary) channel
/// `K_0 = sqrt(1-p) U, K_i = sqrt(p w_i) V_i` with Haar-random error
/// unitaries and Dirichlet-flat weights.
pub fn mixed_unitary_channel<R: Rng>(
    rng: &mut R,
    ideal: &Operator,
    n_errors: usize,
    p: f64,
) -> Result<KrausChannel> {
    let dim = ideal.dim();
    let mut raw: Vec<f64> = (0..n_errors).map(|_| -rng.gen::<f64>().ln()).collect();
    let total: f64 = raw.iter().sum();
    for w in &mut raw {
        *w /= total;
    }
    let mut ops = vec![Operator::new(
        ideal.matrix() * C64::new((1.0 - p).sqrt(), 0.0),
    )?];
    for w in raw {
        let v = haar_unitary(rng, dim);
        ops.push(Operator::new(v.matrix() * C64::new((p * w).sqrt(), 0.0))?);
    }
    KrausChannel::new(ops)
}

/// Random full-rank density matrix `G G^dag / Tr(G G^dag)`.
pub fn density_matrix<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<C64> {
    let g = ginibre(rng, dim, dim);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    m / C64::new(t, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::validate_cptp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2, 4] {
            let u = haar_unitary(&mut rng, dim);
            assert!(u.unitarity_deviation() <= 1e-10);
        }
    }

    #[test]
    fn random_channel_is_cptp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(&mut rng, 2);
        let ch = mixed_unitary_channel(&mut rng, &u, 3, 0.02).unwrap();
        assert!(validate_cptp(&ch, 1e-10).pass);
    }

    #[test]
    fn random_state_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = state_vector(&mut rng, 8);
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
