//! Per-block detectors: zero forcing, MMSE, exhaustive ML, and the
//! partial-intersection sphere (PIS) decoder that exploits row sparsity.

mod diversity;
mod linear;
mod ml;
mod pis;

pub use diversity::{diversity_rank_check, numerical_rank, steering_matrix};
pub use linear::{mmse_decode, zf_decode, SINGULAR_CONDITION};
pub use ml::{ml_decode, ML_BIT_BUDGET};
pub use pis::{pis_candidates, pis_decode, CandidateSet, CountingEntries};

use std::collections::BTreeSet;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::NoiseSpec;
use crate::error::{invalid, Error, Result};
use crate::modem::{Constellation, MatrixEntries};
use crate::numerics::ComplexVec;

/// Which detector to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Zf,
    Mmse,
    Ml,
    Pis,
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf" => Ok(Self::Zf),
            "mmse" => Ok(Self::Mmse),
            "ml" => Ok(Self::Ml),
            "pis" => Ok(Self::Pis),
            other => Err(Error::Config(format!("unknown decoder `{other}`"))),
        }
    }
}

impl DecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zf => "zf",
            Self::Mmse => "mmse",
            Self::Ml => "ml",
            Self::Pis => "pis",
        }
    }
}

/// SNR below which the robust radius stops shrinking (20 dB).
pub const ROBUST_FLOOR_SNR: f64 = 100.0;

/// How the PIS sphere radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusPolicy {
    Fixed(f64),
    /// `sqrt((kappa / rho) ln rho)`.
    Formula,
    /// The formula value, but never below its value at `floor_snr`.
    Robust { floor_snr: f64 },
}

impl FromStr for RadiusPolicy {
    type Err = Error;

    /// Accepts `formula`, `robust`, or `fixed:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "formula" => Ok(Self::Formula),
            "robust" => Ok(Self::Robust { floor_snr: ROBUST_FLOOR_SNR }),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => {
                    let r: f64 = v.parse().map_err(|_| Error::Config(format!("bad radius `{v}`")))?;
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::Config(format!("fixed radius {r} must be positive")));
                    }
                    Ok(Self::Fixed(r))
                }
                None => Err(Error::Config(format!("unknown radius policy `{s}`"))),
            },
        }
    }
}

/// Sphere radius for SNR `rho` and residue count `kappa`.
pub fn sphere_radius(rho: f64, kappa: usize, policy: RadiusPolicy) -> Result<f64> {
    let formula = |rho: f64| -> Result<f64> {
        if !(rho > 1.0) {
            return Err(invalid(format!("radius formula needs rho > 1, got {rho}")));
        }
        Ok((kappa as f64 / rho * rho.ln()).sqrt())
    };
    match policy {
        RadiusPolicy::Fixed(r) if r > 0.0 => Ok(r),
        RadiusPolicy::Fixed(r) => Err(invalid(format!("radius {r} must be positive"))),
        RadiusPolicy::Formula => formula(rho),
        RadiusPolicy::Robust { floor_snr } => Ok(formula(rho)?.max(formula(floor_snr)?)),
    }
}

/// Behaviour when the PIS candidate set empties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasurePolicy {
    /// Radius multiplier per retry.
    pub factor: f64,
    /// Retries before declaring an erasure; 0 declares at once.
    pub max_retries: usize,
}

impl Default for ErasurePolicy {
    fn default() -> Self {
        Self { factor: 2.0, max_retries: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    pub radius: RadiusPolicy,
    pub noise: NoiseSpec,
    pub erasure: ErasurePolicy,
    pub constellation: Constellation,
    /// Cap on PIS partial sequences held at once.
    pub candidate_budget: usize,
}

impl DecoderConfig {
    pub fn new(kind: DecoderKind, noise: NoiseSpec) -> Self {
        Self {
            kind,
            radius: RadiusPolicy::Formula,
            noise,
            erasure: ErasurePolicy::default(),
            constellation: Constellation::Bpsk,
            candidate_budget: 1 << 20,
        }
    }

    pub fn with_radius(mut self, radius: RadiusPolicy) -> Self {
        self.radius = radius;
        self
    }
}

/// Outcome of decoding one vector block.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Constellation indices, one per block entry.
    pub indices: Vec<usize>,
    pub symbols: ComplexVec,
    /// `|X^(m)|` after each PIS iteration.
    pub candidate_trace: Vec<usize>,
    pub radius_used: Option<f64>,
    pub erasure: bool,
    /// `||Y - H X_hat||_2`.
    pub distance: f64,
}

impl DecodeResult {
    pub(crate) fn from_indices(
        indices: Vec<usize>,
        constellation: Constellation,
        distance: f64,
    ) -> Self {
        let pts = constellation.points();
        let symbols = ComplexVec::from_trusted(indices.iter().map(|&i| pts[i]).collect());
        Self { indices, symbols, candidate_trace: Vec::new(), radius_used: None, erasure: false, distance }
    }

    /// Bit errors against the transmitted indices.
    pub fn bit_errors(&self, truth: &[usize], constellation: Constellation) -> u32 {
        self.indices.iter().zip(truth).map(|(&a, &b)| constellation.bit_errors(a, b)).sum()
    }
}

/// Dispatches to the configured detector. `residues` is used only by PIS.
pub fn decode(
    y: &[Complex64],
    h: &impl MatrixEntries,
    residues: &BTreeSet<usize>,
    cfg: &DecoderConfig,
) -> Result<DecodeResult> {
    match cfg.kind {
        DecoderKind::Zf => zf_decode(y, h, cfg.constellation),
        DecoderKind::Mmse => mmse_decode(y, h, cfg.noise.variance(), cfg.constellation),
        DecoderKind::Ml => ml_decode(y, h, cfg.constellation),
        DecoderKind::Pis => pis_decode(y, h, residues, cfg),
    }
}

/// Model symbol error rate of PIS given the conditional error inside the candidate set.
pub fn ser_pis_model(r: f64, sigma2: f64, m: usize, p_cond: f64) -> f64 {
    let inside = (1.0 - (-r * r / sigma2).exp()).powi(m as i32);
    inside * p_cond + 1.0 - inside
}

pub(crate) fn dense_of(h: &impl MatrixEntries) -> DMatrix<Complex64> {
    let m = h.dim();
    DMatrix::from_fn(m, m, |r, c| h.entry(r, c))
}

pub(crate) fn residual_norm(y: &[Complex64], h: &DMatrix<Complex64>, x: &[Complex64]) -> f64 {
    let yv = DVector::from_column_slice(y);
    let xv = DVector::from_column_slice(x);
    (yv - h * xv).norm()
}
