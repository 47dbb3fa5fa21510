//! Sparse IFFT for responses with exactly `K` taps.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use super::hashing::{hash_to_bins, tap_gain, HashCounter};
use super::permutation::{PermutationKind, PermutationParams};
use super::window::FlatWindow;
use super::{add_tap, attach_diagnostics, bins_for, check_input, SifftParams, SifftTrace};
use crate::error::Result;
use crate::pilot::{ChannelEstimate, EstimateSource};

const POLISH_PASSES: usize = 4;

struct Ctx<'a> {
    spectrum: &'a [Complex64],
    params: &'a SifftParams,
    n: usize,
    delta: f64,
    eps: f64,
    counter: HashCounter,
    windows: BTreeMap<(usize, u64), FlatWindow>,
}

impl Ctx<'_> {
    fn window(&mut self, bins: usize, alpha: f64) -> Result<&FlatWindow> {
        let key = (bins, alpha.to_bits());
        if !self.windows.contains_key(&key) {
            let w = FlatWindow::new(bins, alpha, self.eps, self.n)?;
            self.windows.insert(key, w);
        }
        Ok(&self.windows[&key])
    }

    /// One location-and-value pass; returns how many taps were updated.
    fn coordinate_value(
        &mut self,
        known: &mut BTreeMap<usize, Complex64>,
        bins: usize,
        alpha: f64,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        let n = self.n;
        let perm0 = PermutationParams::random(n, PermutationKind::Exact, rng)?;
        let perm1 = perm0.with_shift(1);
        let known_list: Vec<(usize, Complex64)> = known.iter().map(|(&s, &v)| (s, v)).collect();
        let (spectrum, delta, min_gain) = (self.spectrum, self.delta, self.params.min_gain);
        self.window(bins, alpha)?;
        let w = &self.windows[&(bins, alpha.to_bits())];
        let w0 = hash_to_bins(spectrum, &known_list, &perm0, w, Some(&self.counter))?;
        let w1 = hash_to_bins(spectrum, &known_list, &perm1, w, Some(&self.counter))?;

        let mut updates: BTreeMap<usize, (f64, Complex64)> = BTreeMap::new();
        for j in 0..bins {
            let (z0, z1) = (w0[j], w1[j]);
            if z0.norm() < delta / 2.0 {
                continue;
            }
            // A lone tap keeps its magnitude under the unit shift.
            if (z1.norm() - z0.norm()).abs() > 1e-3 * z0.norm() + delta / 8.0 {
                continue;
            }
            let frac = (z1 / z0).arg() / (2.0 * std::f64::consts::PI);
            let s = ((n as f64 * frac).round() as i64).rem_euclid(n as i64) as usize;
            let (home, gain) = tap_gain(s, &perm0, w);
            if home != j || gain < min_gain {
                continue;
            }
            let value = z0 / gain;
            match updates.get(&s) {
                Some(&(g, _)) if g >= gain => {}
                _ => {
                    updates.insert(s, (gain, value));
                }
            }
        }
        for (&s, &(_, v)) in &updates {
            add_tap(known, s, v);
        }
        known.retain(|_, v| v.norm() > 1e-14 * delta.max(1e-300));
        Ok(updates.len())
    }

    /// Re-reads each known tap that sits alone in its bin, with every other
    /// known tap subtracted, so leakage from neighbours no longer biases it.
    fn polish(&mut self, known: &mut BTreeMap<usize, Complex64>, bins: usize, rng: &mut impl Rng) -> Result<()> {
        let perm = PermutationParams::random(self.n, PermutationKind::Exact, rng)?;
        let alpha = self.params.alpha;
        let known_list: Vec<(usize, Complex64)> = known.iter().map(|(&s, &v)| (s, v)).collect();
        let spectrum = self.spectrum;
        self.window(bins, alpha)?;
        let w = &self.windows[&(bins, alpha.to_bits())];
        let resid = hash_to_bins(spectrum, &known_list, &perm, w, Some(&self.counter))?;
        let homes: Vec<(usize, f64)> = known_list.iter().map(|&(s, _)| tap_gain(s, &perm, w)).collect();
        // Count taps that reach each bin with more than negligible gain.
        let width = w.bin_width();
        let mut occupancy = vec![0usize; bins];
        for &(s, _) in &known_list {
            let q = perm.position(s);
            for j in [q / width % bins, (q / width + 1) % bins] {
                let d = (j * width) as i64 - q as i64;
                if w.gain(d) > 1e-4 {
                    occupancy[j] += 1;
                }
            }
        }
        for (&(s, _), &(j, gain)) in known_list.iter().zip(&homes) {
            if occupancy[j] == 1 && gain >= self.params.min_gain {
                add_tap(known, s, resid[j] / gain);
            }
        }
        Ok(())
    }

    /// Hashes the residual twice, the second time shifted by half a bin.
    ///
    /// A tap midway between two bin centres is in the stopband of both, so a
    /// single hash can miss it; the shifted hash puts it at a bin centre.
    fn residual_clear(&mut self, known: &BTreeMap<usize, Complex64>, bins: usize, rng: &mut impl Rng) -> Result<bool> {
        let perm = PermutationParams::random(self.n, PermutationKind::Exact, rng)?;
        let alpha = self.params.alpha;
        let known_list: Vec<(usize, Complex64)> = known.iter().map(|(&s, &v)| (s, v)).collect();
        let spectrum = self.spectrum;
        self.window(bins, alpha)?;
        let w = &self.windows[&(bins, alpha.to_bits())];
        let half = PermutationParams::new(self.n, perm.sigma, perm.a, (perm.b + w.bin_width() / 2) % self.n, perm.kind)?;
        for p in [perm, half] {
            let bins_out = hash_to_bins(spectrum, &known_list, &p, w, Some(&self.counter))?;
            if bins_out.iter().any(|z| z.norm() >= self.delta / 2.0) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Exactly sparse recovery of `h = F^{-1} spectrum` with `k` taps.
pub fn exactly_sparse_ifft(
    spectrum: &[Complex64],
    k: usize,
    params: &SifftParams,
    rng: &mut impl Rng,
) -> Result<ChannelEstimate> {
    exactly_sparse_ifft_traced(spectrum, k, params, rng).map(|(e, _)| e)
}

/// [`exactly_sparse_ifft`] plus a count of the hashing work done.
pub fn exactly_sparse_ifft_traced(
    spectrum: &[Complex64],
    k: usize,
    params: &SifftParams,
    rng: &mut impl Rng,
) -> Result<(ChannelEstimate, SifftTrace)> {
    let n = check_input(spectrum, k)?;
    params.validate()?;
    let (delta, big_delta) = params.bounds(spectrum)?;
    let eps = (delta / (4.0 * (n * n) as f64 * big_delta)).min(0.5);
    let mut ctx = Ctx {
        spectrum,
        params,
        n,
        delta,
        eps,
        counter: HashCounter::default(),
        windows: BTreeMap::new(),
    };
    let mut known = BTreeMap::new();
    let mut trace = SifftTrace::default();

    let last = usize::BITS - 1 - k.leading_zeros();
    for t in 0..=last {
        let kt = (k >> t).max(1);
        let bins = bins_for(kt, params.bin_factor, n);
        let alpha = params.alpha / f64::from(1u32 << t);
        ctx.coordinate_value(&mut known, bins, alpha, rng)?;
        trace.rounds += 1;
    }

    let full_bins = bins_for(k, params.bin_factor, n);
    let mut verified = ctx.residual_clear(&known, full_bins, rng)?;
    while !verified && trace.retries_used < params.retries {
        ctx.coordinate_value(&mut known, full_bins, params.alpha, rng)?;
        trace.retries_used += 1;
        trace.rounds += 1;
        verified = ctx.residual_clear(&known, full_bins, rng)?;
    }
    if verified {
        for _ in 0..POLISH_PASSES {
            ctx.polish(&mut known, full_bins, rng)?;
        }
    } else {
        log::debug!("exact sparse IFFT left residual after {} retries", trace.retries_used);
    }

    let all = ChannelEstimate::new(known.into_iter().collect(), n, EstimateSource::SifftExact)?;
    let mut est = all.top_k(k);
    est.low_confidence = !verified;
    attach_diagnostics(&mut est, spectrum)?;
    trace.verified = verified;
    trace.hash_calls = ctx.counter.get();
    Ok((est, trace))
}
