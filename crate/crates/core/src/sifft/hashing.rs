//! HashToBins: permute, window, alias into `B` bins, then subtract taps
//! that are already known.

use std::cell::Cell;

use num_complex::Complex64;

use super::permutation::PermutationParams;
use super::window::FlatWindow;
use crate::error::{check_len, invalid, Result};
use crate::numerics::{idft, ComplexVec, Scaling};

/// Counts hashing passes so that callers can report the sample budget.
#[derive(Debug, Default)]
pub struct HashCounter(Cell<usize>);

impl HashCounter {
    pub fn get(&self) -> usize {
        self.0.get()
    }

    fn bump(&self) {
        self.0.set(self.0.get() + 1);
    }
}

/// Bin nearest to permuted position `q` and the circular offset `j n / B - q`.
pub fn nearest_bin(q: usize, w: &FlatWindow) -> (usize, i64) {
    let width = w.bin_width();
    let j = ((q + width / 2) / width) % w.bins;
    (j, offset(j, q, w))
}

fn offset(j: usize, q: usize, w: &FlatWindow) -> i64 {
    let n = w.n as i64;
    let d = (j * w.bin_width()) as i64 - q as i64;
    let d = d.rem_euclid(n);
    if d > n / 2 {
        d - n
    } else {
        d
    }
}

/// Gain with which tap `s` appears in its nearest bin, and that bin.
pub fn tap_gain(s: usize, perm: &PermutationParams, w: &FlatWindow) -> (usize, f64) {
    let (j, d) = nearest_bin(perm.position(s), w);
    (j, w.gain(d))
}

/// Bins `w_j = (f * p)_{j n / B}` of the permuted residual delay response.
///
/// `known` holds already-estimated taps whose contribution is removed; each
/// affects only the two bins bracketing its permuted position.
pub fn hash_to_bins(
    spectrum: &[Complex64],
    known: &[(usize, Complex64)],
    perm: &PermutationParams,
    w: &FlatWindow,
    counter: Option<&HashCounter>,
) -> Result<ComplexVec> {
    check_len(w.n, spectrum.len())?;
    if perm.n != w.n {
        return Err(invalid(format!("permutation length {} differs from window length {}", perm.n, w.n)));
    }
    if let Some(c) = counter {
        c.bump();
    }
    let bins = w.bins;
    let mut acc = vec![Complex64::new(0.0, 0.0); bins];
    for k in w.support() {
        let g = w.freq[k];
        acc[k % bins] += g * spectrum[perm.source_index(k)] * perm.modulation(k);
    }
    let mut out = idft(&acc, Scaling::Plain)?.into_inner();
    let width = w.bin_width();
    for &(s, v) in known {
        if s >= w.n {
            return Err(invalid(format!("known tap {s} outside [0, {})", w.n)));
        }
        let q = perm.position(s);
        let lo = q / width;
        let contribution = v * perm.tap_phase(s);
        for j in [lo % bins, (lo + 1) % bins] {
            out[j] -= contribution * w.gain(offset(j, q, w));
        }
    }
    Ok(ComplexVec::from_trusted(out))
}
