//! Sparse inverse FFT: recovers a sparse impulse response from its full
//! spectrum while touching only a few hashed bins per round.
//!
//! Two variants are provided. [`exactly_sparse_ifft`] assumes the response has
//! exactly `K` taps and locates each from the phase step between two shifted
//! hashings. [`approximately_sparse_ifft`] tolerates a noise floor and
//! narrows each tap's location by voting over randomized shifts, then takes
//! component-wise medians of gain-corrected bin values.

mod approx;
mod exact;
mod hashing;
mod permutation;
mod window;

pub use approx::{approximately_sparse_ifft, approximately_sparse_ifft_traced, ApproxSchedule};
pub use exact::{exactly_sparse_ifft, exactly_sparse_ifft_traced};
pub use hashing::{hash_to_bins, nearest_bin, tap_gain, HashCounter};
pub use permutation::{mod_inverse, PermutationKind, PermutationParams};
pub use window::FlatWindow;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{dft, norm, Scaling};
use crate::pilot::ChannelEstimate;

/// Tuning knobs shared by both variants. Unset bounds default from the input norm.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SifftParams {
    /// Smallest tap magnitude to resolve.
    pub delta: Option<f64>,
    /// Largest tap magnitude expected.
    #[serde(rename = "Delta")]
    pub big_delta: Option<f64>,
    /// Base window sharpness.
    pub alpha: f64,
    /// Bins per expected tap in the exact variant.
    #[serde(rename = "B_factor")]
    pub bin_factor: f64,
    /// Bins per expected tap in the approximate variant, first round.
    #[serde(rename = "approx_B_factor")]
    pub approx_bin_factor: f64,
    /// Extra randomized rounds allowed when verification fails.
    pub retries: usize,
    /// Extra full-width rounds run by the approximate variant while energy remains.
    pub cleanup_rounds: usize,
    /// Minimum window gain for a bin reading to be used as a tap value.
    pub min_gain: f64,
    /// Override for the number of approximate rounds.
    pub rounds: Option<usize>,
    pub regions_per_split: Option<usize>,
    pub range_reps: Option<usize>,
    pub value_reps: Option<usize>,
    pub nu: Option<f64>,
}

impl Default for SifftParams {
    fn default() -> Self {
        Self {
            delta: None,
            big_delta: None,
            alpha: 0.125,
            bin_factor: 4.0,
            approx_bin_factor: 16.0,
            retries: 8,
            cleanup_rounds: 2,
            min_gain: 0.5,
            rounds: None,
            regions_per_split: None,
            range_reps: None,
            value_reps: None,
            nu: None,
        }
    }
}

impl SifftParams {
    /// Resolution and magnitude bounds, defaulting to `0.05` and `2` times `||H_P|| / sqrt(n)`.
    pub fn bounds(&self, spectrum: &[Complex64]) -> Result<(f64, f64)> {
        let rms = norm(spectrum) / (spectrum.len() as f64).sqrt();
        let delta = self.delta.unwrap_or(0.05 * rms);
        let big = self.big_delta.unwrap_or(2.0 * rms);
        if !(delta > 0.0 && delta.is_finite()) || !(big >= delta && big.is_finite()) {
            return Err(invalid(format!("need 0 < delta <= Delta, got {delta}, {big}")));
        }
        Ok((delta, big))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("sifft.alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.bin_factor >= 1.0) || !(self.approx_bin_factor >= 1.0) {
            return Err(Error::Config("sifft bin factors must be at least 1".into()));
        }
        if !(self.min_gain > 0.0 && self.min_gain <= 1.0) {
            return Err(Error::Config(format!("sifft.min_gain = {} must lie in (0, 1]", self.min_gain)));
        }
        Ok(())
    }
}

/// Work done by one sparse IFFT call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SifftTrace {
    pub hash_calls: usize,
    pub rounds: usize,
    pub retries_used: usize,
    /// A final hashing pass found no residual above the detection threshold.
    pub verified: bool,
}

/// Power of the `k` largest entries over the power of the rest.
///
/// Returns `f64::INFINITY` when the rest is exactly zero.
pub fn eta(h_hat: &[Complex64], k: usize) -> Result<f64> {
    if h_hat.len() < k {
        return Err(invalid(format!("length {} shorter than K = {k}", h_hat.len())));
    }
    let mut p: Vec<f64> = h_hat.iter().map(|z| z.norm_sqr()).collect();
    p.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = p[..k].iter().sum();
    let rest: f64 = p[k..].iter().sum();
    Ok(if rest == 0.0 { f64::INFINITY } else { top / rest })
}

pub(crate) fn check_input(spectrum: &[Complex64], k: usize) -> Result<usize> {
    let n = spectrum.len();
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::Config(format!("sparse IFFT needs a power-of-two length >= 16, got {n}")));
    }
    if k == 0 || 4 * k > n {
        return Err(invalid(format!("sparsity K = {k} must satisfy 1 <= K <= n / 4 = {}", n / 4)));
    }
    Ok(n)
}

pub(crate) fn bins_for(k: usize, factor: f64, n: usize) -> usize {
    let want = (factor * k as f64).ceil().max(1.0) as usize;
    want.next_power_of_two().max(4).min(n / 4)
}

/// Residual norm and the energy ratio of the estimate to the residual in delay.
pub(crate) fn attach_diagnostics(est: &mut ChannelEstimate, spectrum: &[Complex64]) -> Result<()> {
    let fit = dft(&est.to_dense(), Scaling::Plain)?;
    let resid_sq: f64 = spectrum.iter().zip(fit.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let n = spectrum.len() as f64;
    let top: f64 = est.entries.iter().map(|(_, v)| v.norm_sqr()).sum();
    // Parseval: delay-domain residual power is the spectral residual over n.
    let rest = resid_sq / n;
    est.residual = Some(resid_sq.sqrt());
    est.eta = Some(if rest <= 1e-300 { f64::INFINITY } else { top / rest });
    Ok(())
}

pub(crate) fn add_tap(map: &mut std::collections::BTreeMap<usize, Complex64>, s: usize, v: Complex64) {
    let e = map.entry(s).or_insert(Complex64::new(0.0, 0.0));
    *e += v;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eta_examples() {
        let mut v = vec![c(0., 0.); 16];
        v[3] = c(1., 0.);
        v[9] = c(0., 2.);
        assert_eq!(eta(&v, 2).unwrap(), f64::INFINITY);
        let (k, n, p, q) = (3usize, 20usize, 4.0f64, 0.01f64);
        let v: Vec<_> = (0..n).map(|i| c(if i < k { p.sqrt() } else { q.sqrt() }, 0.)).collect();
        let want = k as f64 * p / ((n - k) as f64 * q);
        assert!((eta(&v, k).unwrap() - want).abs() < 1e-9);
        assert!(eta(&v[..2], 3).is_err());
    }

    #[test]
    fn bins_schedule() {
        assert_eq!(bins_for(4, 4.0, 512), 16);
        assert_eq!(bins_for(3, 4.0, 512), 16);
        assert_eq!(bins_for(1, 4.0, 512), 4);
        assert_eq!(bins_for(64, 4.0, 512), 128);
        assert_eq!(bins_for(16, 16.0, 128), 32);
    }

    #[test]
    fn default_bounds_track_norm() {
        let spec = vec![c(2., 0.); 64];
        let (d, big) = SifftParams::default().bounds(&spec).unwrap();
        assert!((d - 0.1).abs() < 1e-12 && (big - 4.0).abs() < 1e-12);
        let zero = vec![c(0., 0.); 64];
        assert!(SifftParams::default().bounds(&zero).is_err());
    }

    #[test]
    fn knobs_deserialize_from_toml() {
        let p: SifftParams = toml::from_str("alpha = 0.25\nB_factor = 8\nretries = 2\ndelta = 0.01").unwrap();
        assert_eq!(p.alpha, 0.25);
        assert_eq!(p.bin_factor, 8.0);
        assert_eq!(p.retries, 2);
        assert_eq!(p.delta, Some(0.01));
        assert!(toml::from_str::<SifftParams>("bogus = 1").is_err());
    }
}
