//! Rank of the steering matrix that sets the achievable diversity.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::SparseChannel;
use crate::error::{invalid, Result};
use crate::modem::VofdmConfig;
use crate::numerics::root_of_unity;

/// `M x K` matrix with entries `e^{-j 2 pi (l + rL) j_c / N}` over the tap delays `j_c`.
pub fn steering_matrix(channel: &SparseChannel, cfg: &VofdmConfig, l: usize) -> DMatrix<Complex64> {
    let n = cfg.n();
    let delays = channel.delays();
    DMatrix::from_fn(cfg.block_size, delays.len(), |r, c| {
        let e = ((l + r * cfg.blocks) % n) * (delays[c] % n) % n;
        root_of_unity(-(e as i64), n)
    })
}

/// Singular values above `max(rows, cols) * eps * sigma_max` are counted.
pub fn numerical_rank(m: &DMatrix<Complex64>) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Numerical rank of the steering matrix of data subchannel `l`.
pub fn diversity_rank_check(channel: &SparseChannel, cfg: &VofdmConfig, l: usize) -> Result<usize> {
    if l >= cfg.blocks {
        return Err(invalid(format!("subchannel {l} out of range 0..{}", cfg.blocks)));
    }
    if cfg.is_pilot(l) {
        return Err(invalid(format!("subchannel {l} carries pilots")));
    }
    Ok(numerical_rank(&steering_matrix(channel, cfg, l)))
}
