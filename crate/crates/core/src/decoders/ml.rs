//! Exhaustive maximum-likelihood detection.

use num_complex::Complex64;

use super::{dense_of, DecodeResult};
use crate::error::{check_len, Error, Result};
use crate::modem::{Constellation, MatrixEntries};

/// Largest `bits_per_symbol * M` that will be enumerated.
pub const ML_BIT_BUDGET: u32 = 24;

/// `argmin ||Y - H X||` over all blocks; ties go to the lexicographically first.
pub fn ml_decode(y: &[Complex64], h: &impl MatrixEntries, constellation: Constellation) -> Result<DecodeResult> {
    let m = h.dim();
    check_len(m, y.len())?;
    let bits = constellation.bits_per_symbol() * m as u32;
    if bits > ML_BIT_BUDGET {
        return Err(Error::Budget(format!("ML search over {bits} bits exceeds {ML_BIT_BUDGET}")));
    }
    let hd = dense_of(h);
    let pts = constellation.points();
    let q = pts.len();
    let mut idx = vec![0usize; m];
    let mut best = (f64::INFINITY, idx.clone());
    let mut resid = vec![Complex64::new(0.0, 0.0); m];
    loop {
        for (r, out) in resid.iter_mut().enumerate() {
            let mut acc = y[r];
            for c in 0..m {
                acc -= hd[(r, c)] * pts[idx[c]];
            }
            *out = acc;
        }
        let d: f64 = resid.iter().map(|z| z.norm_sqr()).sum();
        if d < best.0 {
            best = (d, idx.clone());
        }
        // Odometer with the first entry most significant.
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(DecodeResult::from_indices(best.1, constellation, best.0.sqrt()));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < q {
                break;
            }
            idx[pos] = 0;
        }
    }
}
