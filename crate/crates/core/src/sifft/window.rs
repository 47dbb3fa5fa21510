//! Flat window: a Gaussian-smoothed boxcar in delay, compact in frequency.
//!
//! Hashing multiplies the permuted spectrum by `G` and aliases it into `B`
//! bins, so bin `j` sees taps weighted by the delay response `f` centred at
//! `j n / B`. `f` is close to 1 within `(1 - alpha) n / (2B)` of the centre
//! and below `eps` beyond `n / (2B)`.

use num_complex::Complex64;
use statrs::function::erf::{erf, erfc_inv};

use crate::error::{invalid, Error, Result};
use crate::numerics::{dft, idft, ComplexVec, Scaling};

#[derive(Debug, Clone, PartialEq)]
pub struct FlatWindow {
    pub n: usize,
    pub bins: usize,
    pub alpha: f64,
    pub eps: f64,
    /// Frequency taps `G_k`, zero outside `|k| <= half_support`.
    pub freq: ComplexVec,
    pub half_support: usize,
    /// Delay response `f_t` realised by the truncated `freq`, indexed mod `n`.
    pub delay: Vec<f64>,
}

fn boxcar_gaussian(t: f64, half_width: f64, std: f64) -> f64 {
    let s = std * std::f64::consts::SQRT_2;
    0.5 * (erf((t + half_width) / s) - erf((t - half_width) / s))
}

impl FlatWindow {
    pub fn new(bins: usize, alpha: f64, eps: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("need 0 < alpha, eps < 1, got alpha = {alpha}, eps = {eps}")));
        }
        if bins == 0 || n % bins != 0 || !n.is_power_of_two() {
            return Err(invalid(format!("B = {bins} must divide n = {n}")));
        }
        let bin_width = n as f64 / bins as f64;
        if (1.0 - alpha) * bin_width < 2.0 {
            return Err(Error::Config(format!(
                "window passband narrower than one sample for n = {n}, B = {bins}, alpha = {alpha}"
            )));
        }
        // Edges sit mid-transition; each edge may leak eps / 2 into the bands.
        let half_width = (1.0 - alpha / 2.0) * bin_width / 2.0;
        let transition = alpha * bin_width / 4.0;
        let std = transition / (std::f64::consts::SQRT_2 * erfc_inv(eps));

        let mut ideal = vec![Complex64::new(0.0, 0.0); n];
        for (t, v) in ideal.iter_mut().enumerate() {
            let t = t as f64;
            let nf = n as f64;
            let r: f64 = [-nf, 0.0, nf].iter().map(|w| boxcar_gaussian(t + w, half_width, std)).sum();
            *v = Complex64::new(r, 0.0);
        }
        let scale = bins as f64 / n as f64;
        let mut freq: Vec<Complex64> =
            dft(&ideal, Scaling::Plain)?.iter().map(|z| z * scale).collect();

        // The spectrum is a Gaussian of std n / (2 pi std) times a sinc.
        let freq_std = n as f64 / (2.0 * std::f64::consts::PI * std);
        let half = (freq_std * (2.0 * (n as f64 / eps).ln()).sqrt()).ceil() as usize;
        let half_support = half.min(n / 2);
        if half_support < n / 2 {
            for (k, v) in freq.iter_mut().enumerate() {
                let dist = k.min(n - k);
                if dist > half_support {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        let delay: Vec<f64> = idft(&freq, Scaling::Plain)?.iter().map(|z| z.re / scale).collect();
        Ok(Self { n, bins, alpha, eps, freq: ComplexVec::from_trusted(freq), half_support, delay })
    }

    /// Number of samples per bin, `n / B`.
    pub fn bin_width(&self) -> usize {
        self.n / self.bins
    }

    /// Indices `k mod n` where `G_k` may be nonzero.
    pub fn support(&self) -> Vec<usize> {
        if self.half_support >= self.n / 2 {
            return (0..self.n).collect();
        }
        let h = self.half_support;
        (0..=h).chain(self.n - h..self.n).collect()
    }

    /// Delay response at circular offset `t`.
    pub fn gain(&self, t: i64) -> f64 {
        self.delay[t.rem_euclid(self.n as i64) as usize]
    }

    /// Largest deviation from 1 over the passband `|t| <= (1 - alpha) n / (2B)`.
    pub fn passband_ripple(&self) -> f64 {
        let edge = ((1.0 - self.alpha) * self.n as f64 / (2.0 * self.bins as f64)).floor() as i64;
        (-edge..=edge).map(|t| (self.gain(t) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest magnitude over the stopband `|t| >= n / (2B)`.
    pub fn stopband_peak(&self) -> f64 {
        let edge = (self.n / (2 * self.bins)) as i64;
        let n = self.n as i64;
        (edge..=n - edge).map(|t| self.gain(t).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meets_band_specs() {
        let w = FlatWindow::new(16, 0.25, 1e-6, 256).unwrap();
        assert!(w.stopband_peak() <= 1e-6, "stopband {}", w.stopband_peak());
        assert!(w.passband_ripple() <= 1e-6, "ripple {}", w.passband_ripple());
    }

    #[test]
    fn meets_specs_when_truncated() {
        let w = FlatWindow::new(8, 0.5, 1e-9, 4096).unwrap();
        assert!(w.half_support < 2048, "support {}", w.half_support);
        assert!(w.stopband_peak() <= 1e-9);
        assert!(w.passband_ripple() <= 1e-9);
        assert!(w.support().len() < 4096);
    }

    #[test]
    fn spectrum_vanishes_outside_support_and_is_real() {
        let w = FlatWindow::new(8, 0.5, 1e-9, 4096).unwrap();
        let inside: std::collections::HashSet<usize> = w.support().into_iter().collect();
        for (k, z) in w.freq.iter().enumerate() {
            if !inside.contains(&k) {
                assert_eq!(*z, Complex64::new(0.0, 0.0));
            }
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_bins_rejected() {
        assert!(FlatWindow::new(256, 0.1, 1e-6, 256).is_err());
        assert!(FlatWindow::new(3, 0.1, 1e-6, 256).is_err());
        assert!(FlatWindow::new(16, 0.0, 1e-6, 256).is_err());
        assert!(FlatWindow::new(16, 0.5, 0.0, 256).is_err());
    }

    #[test]
    fn gain_is_even() {
        let w = FlatWindow::new(32, 0.125, 1e-8, 512).unwrap();
        for t in 0..256 {
            assert!((w.gain(t) - w.gain(-t)).abs() < 1e-12);
        }
    }
}
