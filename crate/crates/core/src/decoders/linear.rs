//! Linear equalizers followed by hard slicing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{dense_of, residual_norm, DecodeResult};
use crate::error::{check_len, Error, Result};
use crate::modem::{Constellation, MatrixEntries};

/// Condition number beyond which a channel matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
const ZERO_FLOOR: f64 = 1e-12;

fn slice_all(z: &DVector<Complex64>, constellation: Constellation) -> Vec<usize> {
    z.iter().map(|&v| constellation.slice(v)).collect()
}

fn finish(y: &[Complex64], h: &DMatrix<Complex64>, idx: Vec<usize>, c: Constellation) -> DecodeResult {
    let pts = c.points();
    let x: Vec<Complex64> = idx.iter().map(|&i| pts[i]).collect();
    DecodeResult::from_indices(idx, c, residual_norm(y, h, &x))
}

/// Slices `H^{-1} Y`.
pub fn zf_decode(y: &[Complex64], h: &impl MatrixEntries, constellation: Constellation) -> Result<DecodeResult> {
    check_len(h.dim(), y.len())?;
    let hd = dense_of(h);
    let sv = hd.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    // A numerically zero matrix is well conditioned but still unusable.
    let condition = if smin > 0.0 && smax > ZERO_FLOOR { smax / smin } else { f64::INFINITY };
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularChannel { condition });
    }
    let z = hd
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(y))
        .ok_or(Error::SingularChannel { condition })?;
    Ok(finish(y, &hd, slice_all(&z, constellation), constellation))
}

/// Slices `(H^H H + sigma^2 I)^{-1} H^H Y`.
pub fn mmse_decode(
    y: &[Complex64],
    h: &impl MatrixEntries,
    sigma2: f64,
    constellation: Constellation,
) -> Result<DecodeResult> {
    check_len(h.dim(), y.len())?;
    if !(sigma2 >= 0.0) {
        return Err(crate::error::invalid(format!("noise variance {sigma2} must be >= 0")));
    }
    let hd = dense_of(h);
    let m = hd.nrows();
    let gram = hd.adjoint() * &hd + DMatrix::<Complex64>::identity(m, m) * Complex64::new(sigma2, 0.0);
    let rhs = hd.adjoint() * DVector::from_column_slice(y);
    let z = gram.lu().solve(&rhs).ok_or(Error::SingularChannel { condition: f64::INFINITY })?;
    Ok(finish(y, &hd, slice_all(&z, constellation), constellation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, sample_sparse_channel, SparseChannel};
    use crate::modem::{blocked_channel_matrix, VofdmConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn noiseless_zf_and_mmse_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = VofdmConfig::new(16, 4, 1, 15).unwrap();
        for _ in 0..50 {
            let h = sample_sparse_channel(3, 15, &mut rng, false).unwrap();
            let hm = blocked_channel_matrix(&h, rng.random_range(1..16), &cfg).unwrap();
            let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();
            let x: Vec<Complex64> = idx.iter().map(|&i| Constellation::Bpsk.points()[i]).collect();
            let y = hm.mul_vec(&x).unwrap();
            if let Ok(r) = zf_decode(&y, &hm, Constellation::Bpsk) {
                assert_eq!(r.indices, idx);
                assert!(r.distance < 1e-9);
            }
            let r = mmse_decode(&y, &hm, 0.0, Constellation::Bpsk).unwrap();
            assert_eq!(r.indices, idx);
        }
    }

    #[test]
    fn identity_channel_slices_observation() {
        let cfg = VofdmConfig::new(4, 4, 1, 0).unwrap();
        let h = SparseChannel::new(vec![(0, c(1., 0.))], 0).unwrap();
        let hm = blocked_channel_matrix(&h, 1, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let y: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let want: Vec<usize> = y.iter().map(|&v| Constellation::Bpsk.slice(v)).collect();
            assert_eq!(zf_decode(&y, &hm, Constellation::Bpsk).unwrap().indices, want);
            assert_eq!(mmse_decode(&y, &hm, 0.3, Constellation::Bpsk).unwrap().indices, want);
        }
    }

    #[test]
    fn singular_channel_reported() {
        // Two equal taps one block apart null out subchannel L/2 entirely.
        let cfg = VofdmConfig::new(4, 2, 1, 2).unwrap();
        let h = SparseChannel::new(vec![(0, c(1., 0.)), (2, c(1., 0.))], 2).unwrap();
        let hm = blocked_channel_matrix(&h, 2, &cfg).unwrap();
        let y = [c(0., 0.), c(0., 0.)];
        assert!(matches!(zf_decode(&y, &hm, Constellation::Bpsk), Err(Error::SingularChannel { .. })));
        assert!(mmse_decode(&y, &hm, 0.1, Constellation::Bpsk).is_ok());
    }
}
