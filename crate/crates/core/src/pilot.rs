//! Pilot layout, least-squares CFR estimation, pilot design, and the dense
//! IFFT channel estimate used as the baseline.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::modem::{rotate, Constellation, VectorBlock, VofdmConfig};
use crate::numerics::{idft, ComplexVec, Scaling};

/// Magnitude below which a rotated pilot entry counts as a spectral null.
pub const SPECTRAL_NULL_THRESHOLD: f64 = 1e-12;

/// Largest block size searched exhaustively by [`design_pilots`].
pub const EXHAUSTIVE_LIMIT: usize = 16;

const SEARCH_RESTARTS: usize = 32;
const SEARCH_SEED: u64 = 0x5eed_0f_b10c;

/// Evenly spaced pilot subchannels `p L / P`.
pub fn pilot_indices(blocks: usize, pilots: usize) -> Result<Vec<usize>> {
    if pilots == 0 || blocks % pilots != 0 {
        return Err(invalid(format!("P = {pilots} must divide L = {blocks}")));
    }
    let step = blocks / pilots;
    Ok((0..pilots).map(|p| p * step).collect())
}

fn rotated_pilot(x: &[Complex64], l: usize, cfg: &VofdmConfig) -> Result<ComplexVec> {
    let xt = rotate(x, l, cfg)?;
    if let Some((index, z)) = xt.iter().enumerate().find(|(_, z)| z.norm() < SPECTRAL_NULL_THRESHOLD) {
        return Err(Error::SpectralNull { index, magnitude: z.norm() });
    }
    Ok(xt)
}

/// Least-squares estimate of `H_l, H_{l+L}, ..., H_{l+(M-1)L}` from one known block.
pub fn ls_estimate_cfr(
    y: &VectorBlock,
    x: &VectorBlock,
    l: usize,
    cfg: &VofdmConfig,
) -> Result<ComplexVec> {
    check_len(cfg.block_size, y.len())?;
    check_len(cfg.block_size, x.len())?;
    let xt = rotated_pilot(&x.symbols, l, cfg)?;
    let yt = rotate(&y.symbols, l, cfg)?;
    Ok(ComplexVec::from_trusted(yt.iter().zip(xt.iter()).map(|(a, b)| a / b).collect()))
}

/// Normalized estimator MSE `(1/M) sum_m |[U_l X]_m|^{-2}`.
pub fn pilot_mse(x: &[Complex64], l: usize, cfg: &VofdmConfig) -> Result<f64> {
    check_len(cfg.block_size, x.len())?;
    let xt = rotated_pilot(x, l, cfg)?;
    Ok(xt.iter().map(|z| 1.0 / z.norm_sqr()).sum::<f64>() / cfg.block_size as f64)
}

/// Pilot blocks with their subchannel indices and normalized MSEs.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub indices: Vec<usize>,
    pub blocks: Vec<ComplexVec>,
    pub mse: Vec<f64>,
}

impl PilotPlan {
    /// Builds a plan from explicit pilot symbols, computing each MSE.
    pub fn from_symbols(blocks: Vec<ComplexVec>, cfg: &VofdmConfig) -> Result<Self> {
        let indices = cfg.pilot_indices();
        check_len(indices.len(), blocks.len())?;
        let mse = indices
            .iter()
            .zip(&blocks)
            .map(|(&l, x)| pilot_mse(x, l, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { indices, blocks, mse })
    }

    /// Pilot symbols for subchannel `l`, if it carries one.
    pub fn block_for(&self, l: usize) -> Option<&ComplexVec> {
        self.indices.iter().position(|&i| i == l).map(|p| &self.blocks[p])
    }

    /// Mean normalized MSE over the pilots.
    pub fn mean_mse(&self) -> f64 {
        self.mse.iter().sum::<f64>() / self.mse.len() as f64
    }

    /// One line per pilot: `l_p s_0 ... s_{M-1} sigma2`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for ((l, x), m) in self.indices.iter().zip(&self.blocks).zip(&self.mse) {
            let _ = write!(s, "{l}");
            for z in x.iter() {
                let _ = write!(s, " {:+}", z.re);
            }
            let _ = writeln!(s, " {m:.6}");
        }
        s
    }

    /// Parses [`PilotPlan::to_text`] output and checks it against `cfg`.
    ///
    /// The stored MSE column is recomputed rather than trusted.
    pub fn from_text(text: &str, cfg: &VofdmConfig) -> Result<Self> {
        let m = cfg.block_size;
        let mut rows = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != m + 2 {
                return Err(Error::Config(format!(
                    "pilot line needs `l_p`, {m} symbols and `sigma2`, got `{line}`"
                )));
            }
            let l: usize = f[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad pilot index `{}`", f[0])))?;
            let mut syms = Vec::with_capacity(m);
            for tok in &f[1..=m] {
                let v: f64 =
                    tok.parse().map_err(|_| Error::Config(format!("bad pilot symbol `{tok}`")))?;
                let z = Complex64::new(v, 0.0);
                if cfg.constellation.index_of(z).is_none() {
                    return Err(Error::Config(format!("pilot symbol {v} is not a constellation point")));
                }
                syms.push(z);
            }
            rows.push((l, ComplexVec::from_trusted(syms)));
        }
        let expected = cfg.pilot_indices();
        let got: Vec<usize> = rows.iter().map(|(l, _)| *l).collect();
        if got != expected {
            return Err(Error::Config(format!("pilot indices {got:?} do not match layout {expected:?}")));
        }
        Self::from_symbols(rows.into_iter().map(|(_, x)| x).collect(), cfg)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

fn bpsk_from_mask(mask: u64, m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|i| Complex64::new(if mask >> i & 1 == 1 { -1.0 } else { 1.0 }, 0.0))
        .collect()
}

fn mse_or_inf(x: &[Complex64], l: usize, cfg: &VofdmConfig) -> f64 {
    pilot_mse(x, l, cfg).unwrap_or(f64::INFINITY)
}

/// Exhaustive search with the first symbol pinned to `+1` (the MSE is sign-invariant).
fn exhaustive_pilot(l: usize, cfg: &VofdmConfig) -> Vec<Complex64> {
    let m = cfg.block_size;
    let mut best = (f64::INFINITY, 0u64);
    for half in 0..(1u64 << (m - 1)) {
        let mask = half << 1;
        let v = mse_or_inf(&bpsk_from_mask(mask, m), l, cfg);
        if v < best.0 - 1e-12 {
            best = (v, mask);
        }
    }
    bpsk_from_mask(best.1, m)
}

/// Single-flip hill climbing with random restarts from a fixed seed.
fn local_search_pilot(l: usize, cfg: &VofdmConfig) -> Vec<Complex64> {
    let m = cfg.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ l as u64);
    let mut best: (f64, Vec<Complex64>) = (f64::INFINITY, vec![Complex64::new(1.0, 0.0); m]);
    for _ in 0..SEARCH_RESTARTS {
        let mut x: Vec<Complex64> =
            (0..m).map(|_| Complex64::new(if rng.random() { 1.0 } else { -1.0 }, 0.0)).collect();
        let mut cur = mse_or_inf(&x, l, cfg);
        loop {
            let mut improved = false;
            for i in 0..m {
                x[i] = -x[i];
                let v = mse_or_inf(&x, l, cfg);
                if v < cur - 1e-12 {
                    cur = v;
                    improved = true;
                } else {
                    x[i] = -x[i];
                }
            }
            if !improved {
                break;
            }
        }
        if cur < best.0 {
            best = (cur, x);
        }
    }
    best.1
}

/// Chooses, per pilot subchannel, a BPSK block minimizing the LS estimator MSE.
pub fn design_pilots(cfg: &VofdmConfig) -> Result<PilotPlan> {
    match cfg.constellation {
        Constellation::Bpsk => {}
    }
    let indices = cfg.pilot_indices();
    let blocks: Vec<ComplexVec> = indices
        .par_iter()
        .map(|&l| {
            let x = if cfg.block_size <= EXHAUSTIVE_LIMIT {
                exhaustive_pilot(l, cfg)
            } else {
                local_search_pilot(l, cfg)
            };
            ComplexVec::from_trusted(x)
        })
        .collect();
    PilotPlan::from_symbols(blocks, cfg)
}

/// Position in the pilot spectrum of entry `m` of pilot `p`'s CFR estimate.
///
/// Pilot `p` observes bins `l_p + mL` of the length-`N` CFR, which are bins
/// `p + mP` of the length-`MP` spectrum.
pub fn pilot_spectrum_index(p: usize, m: usize, pilots: usize) -> usize {
    p + m * pilots
}

/// Interleaves per-pilot CFR estimates into the natural-order length-`MP` spectrum.
pub fn assemble_pilot_spectrum(per_pilot: &[ComplexVec], cfg: &VofdmConfig) -> Result<ComplexVec> {
    check_len(cfg.pilots, per_pilot.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.pilot_span()];
    for (p, est) in per_pilot.iter().enumerate() {
        check_len(cfg.block_size, est.len())?;
        for (m, &v) in est.iter().enumerate() {
            out[pilot_spectrum_index(p, m, cfg.pilots)] = v;
        }
    }
    ComplexVec::new(out)
}

/// LS estimates at every pilot subchannel, assembled into the pilot spectrum.
pub fn estimate_pilot_spectrum(
    received: &[VectorBlock],
    plan: &PilotPlan,
    cfg: &VofdmConfig,
) -> Result<ComplexVec> {
    check_len(cfg.blocks, received.len())?;
    let per_pilot = plan
        .indices
        .iter()
        .zip(&plan.blocks)
        .map(|(&l, x)| {
            ls_estimate_cfr(&received[l], &VectorBlock::new(l, x.clone()), l, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_pilot_spectrum(&per_pilot, cfg)
}

/// Which estimator produced a [`ChannelEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    DenseIfft,
    SifftExact,
    SifftApprox,
    /// The true channel, supplied for genie-aided runs.
    Genie,
}

/// A channel impulse response estimate on `[0, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Distinct coordinates, sorted.
    pub entries: Vec<(usize, Complex64)>,
    pub n: usize,
    pub source: EstimateSource,
    pub eta: Option<f64>,
    /// `||H_P - DFT(h_hat)||_2`, when computed.
    pub residual: Option<f64>,
    /// Set when a sparse estimator could not complete all of its rounds.
    pub low_confidence: bool,
}

impl ChannelEstimate {
    pub fn new(mut entries: Vec<(usize, Complex64)>, n: usize, source: EstimateSource) -> Result<Self> {
        entries.sort_by_key(|&(j, _)| j);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("duplicate estimate coordinate"));
        }
        if let Some(&(j, _)) = entries.iter().find(|&&(j, _)| j >= n) {
            return Err(invalid(format!("coordinate {j} outside [0, {n})")));
        }
        Ok(Self { entries, n, source, eta: None, residual: None, low_confidence: false })
    }

    pub fn to_dense(&self) -> ComplexVec {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for &(j, v) in &self.entries {
            out[j] = v;
        }
        ComplexVec::from_trusted(out)
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(j, _)| j).collect()
    }

    /// Keeps the `k` largest-magnitude entries.
    pub fn top_k(&self, k: usize) -> ChannelEstimate {
        let mut e = self.entries.clone();
        e.sort_by(|a, b| b.1.norm_sqr().total_cmp(&a.1.norm_sqr()).then(a.0.cmp(&b.0)));
        e.truncate(k);
        e.sort_by_key(|&(j, _)| j);
        ChannelEstimate { entries: e, ..self.clone() }
    }

    /// Sorted support of the `k` largest entries.
    pub fn top_k_support(&self, k: usize) -> Vec<usize> {
        self.top_k(k).support()
    }
}

/// Dense estimate `h_hat = F^{-1} H_P` over all `MP` coordinates.
pub fn dense_ifft_estimate(h_p: &[Complex64], cfg: &VofdmConfig) -> Result<ChannelEstimate> {
    check_len(cfg.pilot_span(), h_p.len())?;
    let h = idft(h_p, Scaling::Plain)?;
    let mut est = ChannelEstimate::new(h.iter().copied().enumerate().collect(), h.len(), EstimateSource::DenseIfft)?;
    est.residual = Some(0.0);
    Ok(est)
}
