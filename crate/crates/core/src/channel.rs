//! Sparse Rayleigh multipath channels, AWGN transmission, and the residue
//! statistic `kappa` that sets the achievable diversity.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{invalid, Error, Result};
use crate::numerics::{dft, ComplexVec, Scaling};

/// Draws one `CN(0, variance)` sample.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// A `K`-sparse channel impulse response with maximum delay `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannel {
    /// Sorted by delay.
    taps: Vec<(usize, Complex64)>,
    max_delay: usize,
    normalized: bool,
}

impl SparseChannel {
    /// Builds a channel; delays must be distinct and `<= max_delay`, values nonzero.
    pub fn new(mut taps: Vec<(usize, Complex64)>, max_delay: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(invalid("a channel needs at least one tap"));
        }
        taps.sort_by_key(|&(j, _)| j);
        for w in taps.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(invalid(format!("duplicate delay {}", w[0].0)));
            }
        }
        for &(j, v) in &taps {
            if j > max_delay {
                return Err(invalid(format!("delay {j} exceeds maximum delay {max_delay}")));
            }
            if !(v.re.is_finite() && v.im.is_finite()) || v.norm_sqr() == 0.0 {
                return Err(invalid(format!("tap at delay {j} must be finite and nonzero")));
            }
        }
        Ok(Self { taps, max_delay, normalized: false })
    }

    pub fn taps(&self) -> &[(usize, Complex64)] {
        &self.taps
    }

    pub fn delays(&self) -> Vec<usize> {
        self.taps.iter().map(|&(j, _)| j).collect()
    }

    /// Declared maximum delay `D`.
    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Tap count `K`.
    pub fn k(&self) -> usize {
        self.taps.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Scales to unit energy.
    pub fn normalize(&mut self) {
        let n = self.norm();
        self.taps.iter_mut().for_each(|(_, v)| *v /= n);
        self.normalized = true;
    }

    pub fn smallest_magnitude(&self) -> f64 {
        self.taps.iter().map(|(_, v)| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn largest_magnitude(&self) -> f64 {
        self.taps.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Zero-padded length-`n` impulse response.
    pub fn to_dense(&self, n: usize) -> Result<ComplexVec> {
        if self.taps.iter().any(|&(j, _)| j >= n) {
            return Err(invalid(format!("delays do not fit in length {n}")));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for &(j, v) in &self.taps {
            out[j] = v;
        }
        ComplexVec::new(out)
    }

    /// Plain (unscaled) length-`n` DFT of the zero-padded response.
    pub fn frequency_response(&self, n: usize) -> Result<ComplexVec> {
        dft(&self.to_dense(n)?, Scaling::Plain)
    }

    /// Residue set and `kappa` for block size `m`.
    pub fn kappa(&self, m: usize) -> Result<(BTreeSet<usize>, usize)> {
        kappa(&self.delays(), m)
    }

    /// Plain-text record: a `D K` header then one `j re im` line per tap.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.max_delay, self.k());
        for &(j, v) in &self.taps {
            let _ = writeln!(s, "{j} {:e} {:e}", v.re, v.im);
        }
        s
    }

    /// Parses [`SparseChannel::to_text`] output. Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Config("empty channel file".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 2 {
            return Err(Error::Config(format!("channel header must be `D K`, got `{header}`")));
        }
        let d = parse_field::<usize>(head[0], "D")?;
        let k = parse_field::<usize>(head[1], "K")?;
        let mut taps = Vec::with_capacity(k);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Config(format!("tap line must be `j re im`, got `{line}`")));
            }
            let j = parse_field::<usize>(f[0], "delay")?;
            let re = parse_field::<f64>(f[1], "re")?;
            let im = parse_field::<f64>(f[2], "im")?;
            taps.push((j, Complex64::new(re, im)));
        }
        if taps.len() != k {
            return Err(Error::Config(format!("header declares {k} taps, found {}", taps.len())));
        }
        Self::new(taps, d).map_err(|e| Error::Config(e.to_string()))
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("cannot parse {what} from `{s}`")))
}

/// Draws `k` distinct delays uniformly from `0..=d` with i.i.d. `CN(0, 1)` values.
pub fn sample_sparse_channel(
    k: usize,
    d: usize,
    rng: &mut impl Rng,
    normalize: bool,
) -> Result<SparseChannel> {
    sample_channel_inner(k, d, rng, normalize, false)
}

/// Like [`sample_sparse_channel`] but always places one tap at delay 0.
pub fn sample_sparse_channel_anchored(
    k: usize,
    d: usize,
    rng: &mut impl Rng,
    normalize: bool,
) -> Result<SparseChannel> {
    sample_channel_inner(k, d, rng, normalize, true)
}

fn sample_channel_inner(
    k: usize,
    d: usize,
    rng: &mut impl Rng,
    normalize: bool,
    anchored: bool,
) -> Result<SparseChannel> {
    if k == 0 || k > d + 1 {
        return Err(invalid(format!("need 1 <= K <= D + 1, got K = {k}, D = {d}")));
    }
    let delays: Vec<usize> = if anchored {
        std::iter::once(0)
            .chain(rand::seq::index::sample(rng, d, k - 1).into_iter().map(|j| j + 1))
            .collect()
    } else {
        rand::seq::index::sample(rng, d + 1, k).into_vec()
    };
    let taps = delays
        .into_iter()
        .map(|j| {
            // Exact zeros have probability zero but would break the invariant.
            let mut v = complex_gaussian(rng, 1.0);
            while v.norm_sqr() == 0.0 {
                v = complex_gaussian(rng, 1.0);
            }
            (j, v)
        })
        .collect();
    let mut ch = SparseChannel::new(taps, d)?;
    if normalize {
        ch.normalize();
    }
    Ok(ch)
}

/// AWGN level, kept consistent as `snr * variance = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    variance: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    pub fn from_variance(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(invalid(format!("noise variance {variance} must be finite and >= 0")));
        }
        Ok(Self { variance })
    }

    /// Linear SNR `rho = 1 / sigma^2`; infinity means noiseless.
    pub fn from_snr(snr: f64) -> Result<Self> {
        if !(snr > 0.0) {
            return Err(invalid(format!("SNR {snr} must be positive")));
        }
        Ok(Self { variance: 1.0 / snr })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::from_snr(db_to_linear(snr_db))
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn snr(&self) -> f64 {
        1.0 / self.variance
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Passes a CP-extended frame through `h` and AWGN, then strips the prefix.
///
/// The output has `x_cp.len() - cp_len` samples.
pub fn transmit(
    x_cp: &[Complex64],
    cp_len: usize,
    h: &SparseChannel,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<ComplexVec> {
    if cp_len < h.max_delay() {
        return Err(Error::Config(format!(
            "cyclic prefix {cp_len} shorter than maximum delay {}: inter-block interference",
            h.max_delay()
        )));
    }
    if x_cp.len() <= cp_len {
        return Err(invalid(format!("frame of {} samples has no payload past the prefix", x_cp.len())));
    }
    let n = x_cp.len() - cp_len;
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (i, out) in y.iter_mut().enumerate() {
        let t = i + cp_len;
        for &(j, v) in h.taps() {
            *out += v * x_cp[t - j];
        }
    }
    if noise.variance() > 0.0 {
        for out in y.iter_mut() {
            *out += complex_gaussian(rng, noise.variance());
        }
    }
    ComplexVec::new(y)
}

/// Residues `j mod m` of the tap coordinates and their count.
pub fn kappa(coords: &[usize], m: usize) -> Result<(BTreeSet<usize>, usize)> {
    if m == 0 {
        return Err(invalid("block size must be at least 1"));
    }
    if coords.is_empty() {
        return Err(invalid("coordinate set is empty"));
    }
    let set: BTreeSet<usize> = coords.iter().map(|j| j % m).collect();
    let k = set.len();
    Ok((set, k))
}

/// Distribution of `kappa` when `k` coordinates fall uniformly on `m` residues.
///
/// Entry `i` is `P(kappa = i + 1)` for `i < min(k, m)`. This is the classical
/// occupancy law `C(m, j) S(k, j) j! / m^k`, evaluated by recursion over taps.
pub fn kappa_pmf(k: usize, m: usize) -> Vec<f64> {
    let top = k.min(m);
    if top == 0 {
        return Vec::new();
    }
    // occ[j] = P(j residues occupied) after the taps placed so far.
    let mut occ = vec![0.0; top + 1];
    occ[1] = 1.0;
    let mf = m as f64;
    for _ in 1..k {
        let mut next = vec![0.0; top + 1];
        for j in 1..=top {
            next[j] += occ[j] * j as f64 / mf;
            if j < top {
                next[j + 1] += occ[j] * (mf - j as f64) / mf;
            }
        }
        occ = next;
    }
    occ[1..].to_vec()
}

/// The product-form expression `C(M,k) C(K,k) (k/M)^K k^{-k} k!`, evaluated as written.
///
/// It does not in general sum to one; [`kappa_pmf`] is the normalized law.
pub fn kappa_pmf_product_form(k: usize, m: usize) -> Vec<f64> {
    (1..=k.min(m))
        .map(|kap| {
            let kf = kap as f64;
            let ln = ln_binomial(m as u64, kap as u64) + ln_binomial(k as u64, kap as u64)
                + k as f64 * (kf / m as f64).ln()
                - kf * kf.ln()
                + ln_factorial(kap as u64);
            ln.exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{circular_convolve, max_abs_diff};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn channel_invariants_enforced() {
        assert!(SparseChannel::new(vec![], 3).is_err());
        assert!(SparseChannel::new(vec![(1, c(1., 0.)), (1, c(2., 0.))], 3).is_err());
        assert!(SparseChannel::new(vec![(4, c(1., 0.))], 3).is_err());
        assert!(SparseChannel::new(vec![(2, c(0., 0.))], 3).is_err());
        let ch = SparseChannel::new(vec![(3, c(1., 0.)), (0, c(0., 1.))], 3).unwrap();
        assert_eq!(ch.delays(), vec![0, 3]);
    }

    #[test]
    fn full_support_draw_uses_every_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = sample_sparse_channel(8, 7, &mut rng, false).unwrap();
        assert_eq!(ch.delays(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_taps_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_sparse_channel(9, 7, &mut rng, false), Err(Error::InvalidArgument(_))));
        assert!(sample_sparse_channel(0, 7, &mut rng, false).is_err());
    }

    #[test]
    fn tap_variance_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = 0.0;
        let mut count = 0;
        for _ in 0..10_000 {
            let ch = sample_sparse_channel(1, 63, &mut rng, false).unwrap();
            acc += ch.taps()[0].1.norm_sqr();
            count += 1;
        }
        let var = acc / count as f64;
        assert!((0.95..=1.05).contains(&var), "variance {var}");
    }

    #[test]
    fn normalized_draws_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let ch = sample_sparse_channel(4, 63, &mut rng, true).unwrap();
            assert!((ch.norm() - 1.0).abs() < 1e-12);
            assert!(ch.is_normalized());
        }
    }

    #[test]
    fn anchored_draw_contains_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let ch = sample_sparse_channel_anchored(4, 31, &mut rng, false).unwrap();
            assert_eq!(ch.delays()[0], 0);
            assert_eq!(ch.k(), 4);
        }
    }

    #[test]
    fn delays_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hist = [0usize; 8];
        for _ in 0..20_000 {
            let ch = sample_sparse_channel(2, 7, &mut rng, false).unwrap();
            for j in ch.delays() {
                hist[j] += 1;
            }
        }
        for &h in &hist {
            assert!((h as f64 / 5_000.0 - 1.0).abs() < 0.05, "{hist:?}");
        }
    }

    #[test]
    fn identity_channel_passes_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<_> = (0..20).map(|i| c(i as f64, -(i as f64))).collect();
        let h = SparseChannel::new(vec![(0, c(1., 0.))], 0).unwrap();
        let y = transmit(&x, 4, &h, &NoiseSpec::noiseless(), &mut rng).unwrap();
        assert!(max_abs_diff(&y, &x[4..]) < 1e-15);
    }

    #[test]
    fn short_prefix_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = SparseChannel::new(vec![(5, c(1., 0.))], 5).unwrap();
        let x = vec![c(1., 0.); 20];
        assert!(matches!(
            transmit(&x, 4, &h, &NoiseSpec::noiseless(), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn noise_variance_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = vec![c(0., 0.); 10_001];
        let h = SparseChannel::new(vec![(0, c(1., 0.))], 0).unwrap();
        let y = transmit(&x, 1, &h, &NoiseSpec::from_snr(1.0).unwrap(), &mut rng).unwrap();
        let var = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((0.9..=1.1).contains(&var), "variance {var}");
    }

    #[test]
    fn noise_is_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let x = vec![c(0., 0.); n + 1];
        let h = SparseChannel::new(vec![(0, c(1., 0.))], 0).unwrap();
        let y = transmit(&x, 1, &h, &NoiseSpec::from_snr(1.0).unwrap(), &mut rng).unwrap();
        let power = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        for lag in 1..=5 {
            let r: Complex64 = (lag..n).map(|i| y[i] * y[i - lag].conj()).sum::<Complex64>() / n as f64;
            assert!(r.norm() / power < 0.05, "lag {lag}");
        }
    }

    #[test]
    fn snr_and_variance_consistent() {
        let ns = NoiseSpec::from_snr_db(20.0).unwrap();
        assert!((ns.snr() * ns.variance() - 1.0).abs() < 1e-12);
        assert!((ns.variance() - 0.01).abs() < 1e-15);
        assert!(NoiseSpec::from_snr(0.0).is_err());
        assert!(NoiseSpec::from_variance(-1.0).is_err());
    }

    #[test]
    fn kappa_examples() {
        let (set, k) = kappa(&[0, 3, 8], 8).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(k, 2);
        let (set, k) = kappa(&[0, 3, 9, 22], 8).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![0, 1, 3, 6]);
        assert_eq!(k, 4);
        assert_eq!(kappa(&[0], 16).unwrap().1, 1);
        assert!(kappa(&[], 4).is_err());
        assert!(kappa(&[1], 0).is_err());
    }

    #[test]
    fn pmf_trivial_cases() {
        assert_eq!(kappa_pmf(1, 8), vec![1.0]);
        assert_eq!(kappa_pmf(5, 1), vec![1.0]);
    }

    fn stirling2(n: usize, k: usize) -> f64 {
        let mut s = vec![vec![0.0; k + 1]; n + 1];
        s[0][0] = 1.0;
        for i in 1..=n {
            for j in 1..=k.min(i) {
                s[i][j] = j as f64 * s[i - 1][j] + s[i - 1][j - 1];
            }
        }
        s[n][k]
    }

    #[test]
    fn pmf_matches_stirling_closed_form() {
        for (k, m) in [(4, 4), (6, 8), (8, 3), (10, 16)] {
            let pmf = kappa_pmf(k, m);
            for (i, p) in pmf.iter().enumerate() {
                let kap = i + 1;
                let closed = ln_binomial(m as u64, kap as u64).exp()
                    * stirling2(k, kap)
                    * ln_factorial(kap as u64).exp()
                    / (m as f64).powi(k as i32);
                assert!((p - closed).abs() < 1e-12, "K={k} M={m} kappa={kap}");
            }
        }
    }

    #[test]
    fn pmf_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (k, m) = (4, 4);
        let draws = 100_000;
        let mut hist = vec![0usize; 4];
        for _ in 0..draws {
            let coords: Vec<usize> = (0..k).map(|_| rng.random_range(0..m)).collect();
            hist[kappa(&coords, m).unwrap().1 - 1] += 1;
        }
        let pmf = kappa_pmf(k, m);
        let tv: f64 = pmf
            .iter()
            .zip(&hist)
            .map(|(p, &h)| (p - h as f64 / draws as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn product_form_is_not_normalized() {
        let pf = kappa_pmf_product_form(4, 4);
        // kappa = 2: C(4,2) C(4,2) (1/2)^4 / 4 * 2 = 1.125.
        assert!((pf[1] - 1.125).abs() < 1e-12);
        assert!(pf.iter().sum::<f64>() > 1.5);
        assert!((kappa_pmf_product_form(1, 8)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = sample_sparse_channel(5, 40, &mut rng, false).unwrap();
        let back = SparseChannel::from_text(&ch.to_text()).unwrap();
        assert_eq!(back.delays(), ch.delays());
        assert_eq!(back.max_delay(), 40);
        for (a, b) in back.taps().iter().zip(ch.taps()) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn malformed_text_is_config_error() {
        assert!(matches!(SparseChannel::from_text(""), Err(Error::Config(_))));
        assert!(matches!(SparseChannel::from_text("3 2\n0 1 0\n"), Err(Error::Config(_))));
        assert!(matches!(SparseChannel::from_text("3 1\n5 1 0\n"), Err(Error::Config(_))));
        assert!(matches!(SparseChannel::from_text("3 1\nx 1 0\n"), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn noiseless_transmit_is_circular_convolution(seed in any::<u64>(), k in 1usize..6, d in 5usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = sample_sparse_channel(k, d, &mut rng, false).unwrap();
            let n = 64;
            let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let gamma = d + (seed % 3) as usize;
            let mut x_cp = x[n - gamma..].to_vec();
            x_cp.extend_from_slice(&x);
            let y = transmit(&x_cp, gamma, &ch, &NoiseSpec::noiseless(), &mut rng).unwrap();
            let oracle = circular_convolve(&x, &ch.to_dense(n).unwrap()).unwrap();
            prop_assert!(max_abs_diff(&y, &oracle) < 1e-10);
        }

        #[test]
        fn kappa_bounded(coords in proptest::collection::btree_set(0usize..200, 1..12), log_m in 0u32..6) {
            let m = 1usize << log_m;
            let coords: Vec<usize> = coords.into_iter().collect();
            let (_, kap) = kappa(&coords, m).unwrap();
            prop_assert!(kap >= 1 && kap <= coords.len().min(m));
            // A finer residue grid never merges fewer coordinates.
            let (_, finer) = kappa(&coords, 2 * m).unwrap();
            prop_assert!(finer >= kap && finer <= coords.len());
        }

        #[test]
        fn pmf_sums_to_one(k in 1usize..40, m in 1usize..40) {
            let s: f64 = kappa_pmf(k, m).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
        }
    }
}
