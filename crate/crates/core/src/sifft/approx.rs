//! Sparse IFFT tolerant of a noise floor.
//!
//! Each round hashes the residual, then for every loud bin narrows the tap
//! location inside the bin's delay region: the region is split into
//! `regions_per_split` parts, and each part collects a vote whenever the phase
//! step under a random shift `tau` agrees with its centre. Values are medians
//! of gain-corrected readings over independent hashings.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use super::hashing::{hash_to_bins, tap_gain, HashCounter};
use super::permutation::{PermutationKind, PermutationParams};
use super::window::FlatWindow;
use super::{add_tap, attach_diagnostics, bins_for, check_input, SifftParams, SifftTrace};
use crate::error::Result;
use crate::pilot::{ChannelEstimate, EstimateSource};

use std::f64::consts::PI;

/// Loop counts and sizes used in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSchedule {
    pub bins: usize,
    pub alpha: f64,
    /// Entries kept from the round are `3 * expected`.
    pub expected: usize,
    pub regions_per_split: usize,
    pub narrowing_steps: usize,
    pub range_reps: usize,
    pub value_reps: usize,
    pub nu: f64,
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Number of main rounds, `ceil(log K / log log K)` and at least 1.
pub fn round_count(k: usize, params: &SifftParams) -> usize {
    if let Some(r) = params.rounds {
        return r.max(1);
    }
    if k <= 2 {
        return 1;
    }
    let lk = log2(k as f64);
    let llk = log2(lk);
    if llk <= 0.0 {
        1
    } else {
        ((lk / llk).ceil() as usize).max(1)
    }
}

impl ApproxSchedule {
    /// Round `t` of a recovery of `k` taps from `n` samples.
    pub fn for_round(t: usize, k: usize, n: usize, params: &SifftParams) -> Self {
        let tf = (t + 1) as f64;
        let alpha = params.alpha / tf.powi(4);
        let bins = bins_for(1, params.approx_bin_factor * k as f64 / tf.powi(6), n);
        let shrink: f64 = (1..=t).map(|i| 1.0 / (i * i) as f64).product();
        let expected = ((k as f64 * shrink).ceil() as usize).max(1);
        let regions = params.regions_per_split.unwrap_or_else(|| (log2(n as f64) as usize).max(5));
        let lambda = (n / bins) as f64;
        let base = regions as f64 / 4.0;
        let narrowing_steps = (lambda.ln() / base.ln()).ceil().max(1.0) as usize;
        let range_reps = params.range_reps.unwrap_or_else(|| log2(log2(n as f64)).ceil().max(1.0) as usize);
        let value_reps = params.value_reps.unwrap_or_else(|| {
            log2(bins as f64 / (expected as f64 * alpha)).ceil().max(1.0) as usize
        });
        let nu = params.nu.unwrap_or_else(|| alpha.cbrt());
        Self { bins, alpha, expected, regions_per_split: regions, narrowing_steps, range_reps, value_reps, nu }
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Lower median of a non-empty list.
fn lower_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

struct Ctx<'a> {
    spectrum: &'a [Complex64],
    n: usize,
    eps: f64,
    counter: HashCounter,
    windows: BTreeMap<(usize, u64), FlatWindow>,
}

impl Ctx<'_> {
    fn window(&mut self, bins: usize, alpha: f64) -> Result<FlatWindow> {
        let key = (bins, alpha.to_bits());
        if !self.windows.contains_key(&key) {
            let w = FlatWindow::new(bins, alpha, self.eps, self.n)?;
            self.windows.insert(key, w);
        }
        Ok(self.windows[&key].clone())
    }

    fn hash(&self, known: &[(usize, Complex64)], perm: &PermutationParams, w: &FlatWindow) -> Result<Vec<Complex64>> {
        Ok(hash_to_bins(self.spectrum, known, perm, w, Some(&self.counter))?.into_inner())
    }

    /// Narrows the permuted location of the tap in each of `loud` bins.
    fn locate(
        &self,
        known: &[(usize, Complex64)],
        perm: &PermutationParams,
        base: &[Complex64],
        loud: &[usize],
        w: &FlatWindow,
        sched: &ApproxSchedule,
        rng: &mut impl Rng,
    ) -> Result<Vec<Option<usize>>> {
        let n = self.n as i64;
        let nf = self.n as f64;
        let width = w.bin_width() as i64;
        let parts = sched.regions_per_split as i64;
        let sigma_b = ((perm.sigma as u128 * perm.b as u128) % self.n as u128) as f64;
        // Each region is [start, start + len) in permuted coordinates.
        let mut regions: Vec<Option<(i64, i64)>> =
            loud.iter().map(|&j| Some((j as i64 * width - width / 2, width))).collect();

        for _ in 0..sched.narrowing_steps {
            let len = match regions.iter().flatten().map(|r| r.1).max() {
                Some(l) if l > 1 => l,
                _ => break,
            };
            let part = (len + parts - 1) / parts;
            let count = (len + part - 1) / part;
            let lo = (nf * parts as f64 * sched.nu / (4.0 * len as f64)).ceil().max(1.0) as usize;
            let hi = ((nf * parts as f64 * sched.nu / (2.0 * len as f64)).floor() as usize).max(lo);
            let mut votes = vec![vec![0usize; count as usize]; loud.len()];
            let mut miss = vec![vec![0f64; count as usize]; loud.len()];
            for _ in 0..sched.range_reps {
                let tau = rng.random_range(lo..=hi);
                let shifted = perm.with_shift(perm.a + tau);
                let alt = self.hash(known, &shifted, w)?;
                for (i, &j) in loud.iter().enumerate() {
                    let Some((start, _)) = regions[i] else { continue };
                    let measured = (alt[j] / base[j]).arg();
                    for p in 0..count {
                        let centre = start as f64 + (p * part) as f64 + (part - 1) as f64 / 2.0;
                        let pos = (centre + sigma_b).rem_euclid(nf);
                        let predicted = 2.0 * PI * ((tau as f64 * pos) % nf) / nf;
                        let err = wrap_phase(measured - predicted).abs();
                        miss[i][p as usize] += err;
                        if err <= PI * sched.nu {
                            votes[i][p as usize] += 1;
                        }
                    }
                }
            }
            for i in 0..loud.len() {
                let Some((start, _)) = regions[i] else { continue };
                let best = (0..count as usize)
                    .max_by(|&a, &b| votes[i][a].cmp(&votes[i][b]).then(miss[i][b].total_cmp(&miss[i][a])))
                    .expect("at least one part");
                if 2 * votes[i][best] <= sched.range_reps {
                    regions[i] = None;
                    continue;
                }
                let pad = part / 2;
                regions[i] = Some((start + best as i64 * part - pad, part + 2 * pad));
            }
        }
        Ok(regions
            .into_iter()
            .map(|r| r.map(|(start, len)| ((start as f64 + (len - 1) as f64 / 2.0).round() as i64).rem_euclid(n) as usize))
            .collect())
    }

    /// Median of gain-corrected bin readings for each candidate.
    fn values(
        &self,
        known: &[(usize, Complex64)],
        candidates: &[usize],
        w: &FlatWindow,
        sched: &ApproxSchedule,
        min_gain: f64,
        rng: &mut impl Rng,
    ) -> Result<Vec<Option<Complex64>>> {
        let mut re = vec![Vec::new(); candidates.len()];
        let mut im = vec![Vec::new(); candidates.len()];
        for _ in 0..sched.value_reps {
            let perm = PermutationParams::random(self.n, PermutationKind::Approx, rng)?;
            let bins = self.hash(known, &perm, w)?;
            for (i, &s) in candidates.iter().enumerate() {
                let (j, gain) = tap_gain(s, &perm, w);
                if gain < min_gain {
                    continue;
                }
                let v = bins[j] / (perm.tap_phase(s) * gain);
                re[i].push(v.re);
                im[i].push(v.im);
            }
        }
        Ok(re
            .into_iter()
            .zip(im)
            .map(|(r, i)| (!r.is_empty()).then(|| Complex64::new(lower_median(r), lower_median(i))))
            .collect())
    }
}

/// Approximately sparse recovery of the `k` dominant taps of `F^{-1} spectrum`.
pub fn approximately_sparse_ifft(
    spectrum: &[Complex64],
    k: usize,
    params: &SifftParams,
    rng: &mut impl Rng,
) -> Result<ChannelEstimate> {
    approximately_sparse_ifft_traced(spectrum, k, params, rng).map(|(e, _)| e)
}

/// [`approximately_sparse_ifft`] plus a count of the hashing work done.
pub fn approximately_sparse_ifft_traced(
    spectrum: &[Complex64],
    k: usize,
    params: &SifftParams,
    rng: &mut impl Rng,
) -> Result<(ChannelEstimate, SifftTrace)> {
    let n = check_input(spectrum, k)?;
    params.validate()?;
    let (delta, _) = params.bounds(spectrum)?;
    let mut ctx = Ctx {
        spectrum,
        n,
        eps: 1.0 / (4.0 * (n * n) as f64),
        counter: HashCounter::default(),
        windows: BTreeMap::new(),
    };
    let mut known: BTreeMap<usize, Complex64> = BTreeMap::new();
    let mut trace = SifftTrace::default();
    let mut low_confidence = false;

    let main = round_count(k, params);
    let full = ApproxSchedule::for_round(0, k, n, params);
    for t in 0..main + params.cleanup_rounds {
        let sched = if t < main { ApproxSchedule::for_round(t, k, n, params) } else { full.clone() };
        let w = ctx.window(sched.bins, sched.alpha)?;
        let known_list: Vec<(usize, Complex64)> = known.iter().map(|(&s, &v)| (s, v)).collect();
        let perm = PermutationParams::random(n, PermutationKind::Approx, rng)?;
        let base = ctx.hash(&known_list, &perm, &w)?;

        // Bins well above the residual floor; a noise-only bin's power is
        // exponential, so its median is ln 2 times the mean.
        let mut powers: Vec<f64> = base.iter().map(|z| z.norm_sqr()).collect();
        powers.sort_by(f64::total_cmp);
        let floor = powers[(powers.len() - 1) / 2] / std::f64::consts::LN_2;
        let threshold = (delta * delta / 4.0).max(4.0 * floor);
        let loud: Vec<usize> = (0..sched.bins).filter(|&j| base[j].norm_sqr() >= threshold).collect();
        trace.rounds += 1;
        if loud.is_empty() {
            if t >= main {
                break;
            }
            continue;
        }

        let located = ctx.locate(&known_list, &perm, &base, &loud, &w, &sched, rng)?;
        if located.iter().all(Option::is_none) {
            low_confidence = true;
            continue;
        }
        let mut candidates: Vec<usize> = located.into_iter().flatten().map(|q| perm.preimage(q)).collect();
        candidates.sort_unstable();
        candidates.dedup();

        let values = ctx.values(&known_list, &candidates, &w, &sched, params.min_gain, rng)?;
        let mut found: Vec<(usize, Complex64)> =
            candidates.into_iter().zip(values).filter_map(|(s, v)| v.map(|v| (s, v))).collect();
        found.sort_by(|a, b| b.1.norm_sqr().total_cmp(&a.1.norm_sqr()));
        found.truncate(3 * sched.expected);
        for (s, v) in found {
            add_tap(&mut known, s, v);
        }
    }

    let all = ChannelEstimate::new(known.into_iter().collect(), n, EstimateSource::SifftApprox)?;
    let mut est = all.top_k(k);
    est.low_confidence = low_confidence || est.entries.is_empty();
    attach_diagnostics(&mut est, spectrum)?;
    trace.verified = !est.low_confidence;
    trace.hash_calls = ctx.counter.get();
    Ok((est, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, sample_sparse_channel};
    use crate::numerics::{dft, Scaling};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spectrum_of(taps: &[(usize, Complex64)], n: usize) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0., 0.); n];
        for &(j, v) in taps {
            h[j] = v;
        }
        dft(&h, Scaling::Plain).unwrap().into_inner()
    }

    #[test]
    fn schedule_knobs() {
        let p = SifftParams::default();
        assert_eq!(round_count(4, &p), 2);
        assert_eq!(round_count(2, &p), 1);
        assert_eq!(round_count(16, &p), 2);
        let s = ApproxSchedule::for_round(0, 4, 512, &p);
        assert_eq!(s.bins, 64);
        assert_eq!(s.regions_per_split, 9);
        assert_eq!(s.range_reps, 4);
        assert_eq!(s.value_reps, 7);
        assert!((s.nu - 0.5).abs() < 1e-12);
        let s1 = ApproxSchedule::for_round(1, 4, 512, &p);
        assert_eq!(s1.bins, 4);
        assert_eq!(s1.expected, 4);
        assert!((s1.alpha - 0.125 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn lower_median_picks_lower() {
        assert_eq!(lower_median(vec![3.0, 1.0, 2.0, 4.0]), 2.0);
        assert_eq!(lower_median(vec![5.0]), 5.0);
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 512;
        let mut ok = 0;
        for _ in 0..30 {
            let ch = sample_sparse_channel(4, 63, &mut rng, true).unwrap();
            let est = approximately_sparse_ifft(&spectrum_of(ch.taps(), n), 4, &SifftParams::default(), &mut rng).unwrap();
            let strong: Vec<usize> =
                ch.taps().iter().filter(|(_, v)| v.norm() > 0.05).map(|&(j, _)| j).collect();
            ok += usize::from(strong.iter().all(|j| est.support().contains(j)));
        }
        assert!(ok >= 28, "{ok} of 30");
    }

    #[test]
    fn noisy_recovery_tracks_dense_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 512;
        let mut ok = 0;
        for _ in 0..40 {
            let ch = sample_sparse_channel(4, 63, &mut rng, true).unwrap();
            let mut spec = spectrum_of(ch.taps(), n);
            // Per-bin LS error of variance sigma^2 * 1.5 at 20 dB.
            for z in spec.iter_mut() {
                *z += complex_gaussian(&mut rng, 0.015);
            }
            let dense = crate::numerics::idft(&spec, Scaling::Plain).unwrap();
            let dense_est = ChannelEstimate::new(dense.iter().copied().enumerate().collect(), n, EstimateSource::DenseIfft)
                .unwrap();
            let est = approximately_sparse_ifft(&spec, 4, &SifftParams::default(), &mut rng).unwrap();
            ok += usize::from(est.support() == dense_est.top_k_support(4));
        }
        assert!(ok >= 36, "{ok} of 40");
    }
}
