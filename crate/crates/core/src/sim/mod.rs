//! Monte Carlo experiment harness with deterministic per-trial RNG streams
//! and CSV output.

mod ber;
mod chain;
mod diversity;
mod rmse;
mod spec;
mod stats;

pub use ber::{run_ber_experiment, run_joint_experiment};
pub use chain::channel_from_estimate;
pub use diversity::run_diversity_experiment;
pub use rmse::run_rmse_experiment;
pub use spec::{Estimator, ExperimentSpec, GridBlock, GridPoint, Mode, OneOrMany, PowerNorm};
pub use stats::{mean_and_se, wilson_half_width};

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{complex_gaussian, sample_sparse_channel, sample_sparse_channel_anchored, SparseChannel};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "mode,label,L,M,P,K,D,snr_db,decoder,estimator,metric,value,trials,std_err";

/// One Monte Carlo estimate at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub label: String,
    pub l: usize,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub d: usize,
    pub snr_db: f64,
    pub decoder: String,
    pub estimator: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub std_err: f64,
}

impl MetricsRecord {
    pub(crate) fn at(mode: Mode, pt: &GridPoint, trials: usize) -> RecordBuilder<'_> {
        RecordBuilder { mode, pt, trials, decoder: "", estimator: "" }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode.name(),
            self.label,
            self.l,
            self.m,
            self.p,
            self.k,
            self.d,
            self.snr_db,
            self.decoder,
            self.estimator,
            self.metric,
            self.value,
            self.trials,
            self.std_err
        )
    }
}

pub(crate) struct RecordBuilder<'a> {
    mode: Mode,
    pt: &'a GridPoint,
    trials: usize,
    decoder: &'a str,
    estimator: &'a str,
}

impl<'a> RecordBuilder<'a> {
    pub(crate) fn decoder(mut self, d: &'a str) -> Self {
        self.decoder = d;
        self
    }

    pub(crate) fn estimator(mut self, e: &'a str) -> Self {
        self.estimator = e;
        self
    }

    pub(crate) fn metric(&self, name: &str, value: f64, std_err: f64) -> MetricsRecord {
        let pt = self.pt;
        MetricsRecord {
            mode: self.mode,
            label: pt.label.clone(),
            l: pt.l,
            m: pt.m,
            p: pt.p,
            k: pt.k,
            d: pt.d,
            snr_db: pt.snr_db,
            decoder: self.decoder.to_string(),
            estimator: self.estimator.to_string(),
            metric: name.to_string(),
            value,
            trials: self.trials,
            std_err,
        }
    }
}

/// Rows from one run plus the grid points that were skipped and why.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<MetricsRecord>,
    pub skipped: Vec<(usize, String)>,
}

impl ExperimentReport {
    pub fn find(&self, label: &str, decoder: &str, estimator: &str, metric: &str) -> Vec<&MetricsRecord> {
        self.records
            .iter()
            .filter(|r| r.label == label && r.decoder == decoder && r.estimator == estimator && r.metric == metric)
            .collect()
    }

    pub fn to_csv(&self, spec: &ExperimentSpec) -> String {
        let mut out = String::new();
        writeln!(out, "# seed={}", spec.seed).unwrap();
        writeln!(out, "# version={}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "# config_sha256={}", config_hash(spec)).unwrap();
        for (i, why) in &self.skipped {
            writeln!(out, "# skipped grid point {i}: {}", why.replace('\n', " ")).unwrap();
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Digest of the parsed spec, independent of TOML formatting.
pub fn config_hash(spec: &ExperimentSpec) -> String {
    Sha256::digest(format!("{spec:?}").as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs whichever experiment `spec.mode` names.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    match spec.mode {
        Mode::RmseExact | Mode::RmseApprox => run_rmse_experiment(spec),
        Mode::BerSweep | Mode::DecoderCompare => run_ber_experiment(spec),
        Mode::Joint => run_joint_experiment(spec),
        Mode::Diversity => run_diversity_experiment(spec),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for trial `trial` of grid point `point`.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(point as u64)));
    rng.set_stream(trial as u64);
    rng
}

/// Prepares a context per feasible point, then runs its trials in parallel,
/// keeping results in trial order.
pub(crate) fn for_each_point<C, T, G, F>(
    spec: &ExperimentSpec,
    prepare: G,
    trial: F,
) -> Result<(Vec<(GridPoint, C, Vec<T>)>, Vec<(usize, String)>)>
where
    C: Sync,
    T: Send,
    G: Fn(&GridPoint) -> Result<C>,
    F: Fn(&GridPoint, &C, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (i, pt) in spec.points()?.into_iter().enumerate() {
        if let Some(why) = pt.infeasibility(spec.mode) {
            log::warn!("skipping grid point {i}: {why}");
            skipped.push((i, why));
            continue;
        }
        let ctx = match prepare(&pt) {
            Ok(c) => c,
            Err(e @ (Error::SpectralNull { .. } | Error::Infeasible(_))) => {
                log::warn!("skipping grid point {i}: {e}");
                skipped.push((i, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let results = (0..spec.trials)
            .into_par_iter()
            .map(|t| trial(&pt, &ctx, &mut trial_rng(spec.seed, i, t)))
            .collect::<Result<Vec<T>>>();
        match results {
            Ok(r) => done.push((pt, ctx, r)),
            Err(e @ (Error::Infeasible(_) | Error::Budget(_))) => {
                log::warn!("skipping grid point {i}: {e}");
                skipped.push((i, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((done, skipped))
}

/// Draws the grid point's channel: fixed delays or random support, then the power rule.
pub fn sample_channel(pt: &GridPoint, rng: &mut impl Rng) -> Result<SparseChannel> {
    let mut ch = match &pt.delays {
        Some(delays) => {
            let taps = delays
                .iter()
                .map(|&j| {
                    let mut v = complex_gaussian(rng, 1.0);
                    while v.norm_sqr() == 0.0 {
                        v = complex_gaussian(rng, 1.0);
                    }
                    (j, v)
                })
                .collect();
            SparseChannel::new(taps, pt.d)?
        }
        None if pt.anchored => sample_sparse_channel_anchored(pt.k, pt.d, rng, false)?,
        None => sample_sparse_channel(pt.k, pt.d, rng, false)?,
    };
    match pt.power {
        PowerNorm::Unit => ch.normalize(),
        PowerNorm::Average => {
            let s = 1.0 / (ch.k() as f64).sqrt();
            let taps: Vec<(usize, Complex64)> = ch.taps().iter().map(|&(j, v)| (j, v * s)).collect();
            ch = SparseChannel::new(taps, ch.max_delay())?;
        }
        PowerNorm::Raw => {}
    }
    Ok(ch)
}
