//! Single-link commands: one channel, explicit pilots, direct output.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sparse_vofdm::channel::{sample_sparse_channel, transmit, NoiseSpec, SparseChannel};
use sparse_vofdm::decoders::{self, mmse_decode, DecoderConfig, DecoderKind, RadiusPolicy};
use sparse_vofdm::modem::{blocked_channel_matrix, demodulate, modulate, VectorBlock, VofdmConfig};
use sparse_vofdm::pilot::{dense_ifft_estimate, design_pilots, estimate_pilot_spectrum, ChannelEstimate, PilotPlan};
use sparse_vofdm::sifft::{approximately_sparse_ifft, exactly_sparse_ifft, SifftParams};
use sparse_vofdm::sim::{channel_from_estimate, trial_rng, wilson_half_width, Estimator, MetricsRecord, Mode, CSV_HEADER};

use crate::{emit, read_text, Failure, Layout, Outcome};

#[derive(Args, Debug)]
pub struct LinkArgs {
    #[command(flatten)]
    layout: Layout,
    /// Nonzero taps of a random channel.
    #[arg(short = 'K', long)]
    taps: Option<usize>,
    /// Maximum delay of a random channel.
    #[arg(short = 'D', long)]
    max_delay: Option<usize>,
    /// Cyclic prefix length; defaults to the maximum delay.
    #[arg(long)]
    cp: Option<usize>,
    /// Per-sample SNR in dB; `inf` for a noiseless link.
    #[arg(long, default_value_t = f64::INFINITY)]
    snr_db: f64,
    /// Fixed channel in `D K` / `j re im` text form instead of a random one.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    /// Pilot blocks as written by `pilot-design`; designed on the fly if absent.
    #[arg(long)]
    pilot_file: Option<PathBuf>,
    /// Random taps include delay 0.
    #[arg(long)]
    anchored: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    link: LinkArgs,
    /// dense, sifft-exact or sifft-approx.
    #[arg(long, default_value = "sifft-approx")]
    estimator: String,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// zf, mmse, ml or pis.
    #[arg(long, default_value = "pis")]
    decoder: String,
    /// formula, robust or fixed:<r>.
    #[arg(long, default_value = "formula")]
    radius_policy: String,
    /// Decode with the true channel instead of a pilot estimate.
    #[arg(long)]
    genie_channel: bool,
    /// Estimator used when not running with the genie channel.
    #[arg(long, default_value = "sifft-approx")]
    estimator: String,
}

struct Link {
    cfg: VofdmConfig,
    fixed: Option<SparseChannel>,
    k: usize,
    d: usize,
    noise: NoiseSpec,
    anchored: bool,
}

struct Frame {
    truth: SparseChannel,
    data: Vec<(usize, Vec<usize>)>,
    received: Vec<VectorBlock>,
}

impl Link {
    fn new(a: &LinkArgs) -> Outcome<Self> {
        let fixed = match &a.channel_file {
            Some(p) => Some(SparseChannel::from_text(&read_text(p)?)?),
            None => None,
        };
        let (k, d) = match &fixed {
            Some(h) => (h.k(), h.max_delay()),
            None => match (a.taps, a.max_delay) {
                (Some(k), Some(d)) => (k, d),
                _ => return Err(Failure::Config(anyhow!("need --taps and --max-delay, or --channel-file"))),
            },
        };
        let cfg = a.layout.config(a.cp.unwrap_or(d))?;
        if cfg.cp_len < d {
            return Err(Failure::Infeasible(anyhow!("cyclic prefix {} shorter than maximum delay {d}", cfg.cp_len)));
        }
        if d >= cfg.n() {
            return Err(Failure::Infeasible(anyhow!("maximum delay {d} must be below N = {}", cfg.n())));
        }
        Ok(Self { cfg, fixed, k, d, noise: NoiseSpec::from_snr_db(a.snr_db)?, anchored: a.anchored })
    }

    fn plan(&self, a: &LinkArgs) -> Outcome<PilotPlan> {
        if self.d >= self.cfg.pilot_span() {
            return Err(Failure::Infeasible(anyhow!(
                "estimation needs D < MP, got D = {} and MP = {}",
                self.d,
                self.cfg.pilot_span()
            )));
        }
        Ok(match &a.pilot_file {
            Some(p) => PilotPlan::from_text(&read_text(p)?, &self.cfg)?,
            None => design_pilots(&self.cfg)?,
        })
    }

    /// Random channels get `CN(0, 1/K)` taps, matching the sweep default.
    fn channel(&self, rng: &mut ChaCha8Rng) -> Outcome<SparseChannel> {
        if let Some(h) = &self.fixed {
            return Ok(h.clone());
        }
        let h = if self.anchored {
            sparse_vofdm::channel::sample_sparse_channel_anchored(self.k, self.d, rng, false)?
        } else {
            sample_sparse_channel(self.k, self.d, rng, false)?
        };
        let s = 1.0 / (self.k as f64).sqrt();
        Ok(SparseChannel::new(h.taps().iter().map(|&(j, v)| (j, v * s)).collect(), self.d)?)
    }

    fn frame(&self, plan: Option<&PilotPlan>, rng: &mut ChaCha8Rng) -> Outcome<Frame> {
        let truth = self.channel(rng)?;
        let (cfg, m) = (&self.cfg, self.cfg.block_size);
        let pts = cfg.constellation.points();
        let mut symbols = Vec::with_capacity(cfg.n());
        let mut data = Vec::new();
        for l in 0..cfg.blocks {
            match plan.and_then(|p| p.block_for(l)) {
                Some(x) => symbols.extend_from_slice(x),
                None if cfg.is_pilot(l) => symbols.extend(std::iter::repeat_n(pts[0], m)),
                None => {
                    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..pts.len())).collect();
                    symbols.extend(idx.iter().map(|&i| pts[i]));
                    data.push((l, idx));
                }
            }
        }
        let rx = transmit(&modulate(&symbols, cfg)?, cfg.cp_len, &truth, &self.noise, rng)?;
        Ok(Frame { truth, data, received: demodulate(&rx, cfg)? })
    }

    fn estimate(&self, which: Estimator, frame: &Frame, plan: &PilotPlan, rng: &mut ChaCha8Rng) -> Outcome<ChannelEstimate> {
        let h_p = estimate_pilot_spectrum(&frame.received, plan, &self.cfg)?;
        let params = SifftParams::default();
        Ok(match which {
            Estimator::Dense => dense_ifft_estimate(&h_p, &self.cfg)?,
            Estimator::SifftExact => exactly_sparse_ifft(&h_p, self.k, &params, rng)?.top_k(self.k),
            Estimator::SifftApprox => approximately_sparse_ifft(&h_p, self.k, &params, rng)?.top_k(self.k),
            Estimator::Genie => return Err(Failure::Config(anyhow!("choose a pilot-based estimator"))),
        })
    }
}

pub fn estimate(a: &EstimateArgs) -> Outcome<()> {
    let which: Estimator = a.estimator.parse()?;
    let link = Link::new(&a.link)?;
    let plan = link.plan(&a.link)?;
    let mut rng = trial_rng(a.link.seed, 0, 0);
    let frame = link.frame(Some(&plan), &mut rng)?;
    let est = link.estimate(which, &frame, &plan, &mut rng)?;
    let mp = link.cfg.pilot_span();
    let truth = frame.truth.to_dense(mp)?;
    let err: f64 = est.to_dense().iter().zip(truth.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let text = format!(
        "# estimator={}\n# rmse={:.6e}\n# true_delays={:?}\n{}",
        which.name(),
        (err / mp as f64).sqrt(),
        frame.truth.delays(),
        channel_from_estimate(&est)?.to_text()
    );
    emit(a.link.out.as_deref(), &text)
}

#[derive(Default)]
struct Tally {
    bit_errors: u64,
    bits: u64,
    block_errors: u64,
    blocks: u64,
    erasures: u64,
}

pub fn decode(a: &DecodeArgs) -> Outcome<()> {
    let kind: DecoderKind = a.decoder.parse()?;
    let radius: RadiusPolicy = a.radius_policy.parse()?;
    let which: Estimator = if a.genie_channel { Estimator::Genie } else { a.estimator.parse()? };
    if a.frames == 0 {
        return Err(Failure::Config(anyhow!("--frames must be positive")));
    }
    let link = Link::new(&a.link)?;
    let plan = if which == Estimator::Genie { None } else { Some(link.plan(&a.link)?) };
    let dcfg = DecoderConfig::new(kind, link.noise).with_radius(radius);
    let bps = u64::from(link.cfg.constellation.bits_per_symbol());
    let m = link.cfg.block_size;
    let mut t = Tally::default();
    for f in 0..a.frames {
        let mut rng = trial_rng(a.link.seed, 0, f);
        let frame = link.frame(plan.as_ref(), &mut rng)?;
        let believed = match &plan {
            None => frame.truth.clone(),
            Some(p) => channel_from_estimate(&link.estimate(which, &frame, p, &mut rng)?)?,
        };
        let (residues, _) = believed.kappa(m)?;
        for (l, truth) in &frame.data {
            let hm = blocked_channel_matrix(&believed, *l, &link.cfg)?;
            let y = &frame.received[*l].symbols;
            let (res, erased) = match decoders::decode(y, &hm, &residues, &dcfg) {
                Ok(r) => {
                    let erased = r.erasure;
                    (r, erased)
                }
                Err(_) => (mmse_decode(y, &hm, link.noise.variance(), link.cfg.constellation)?, true),
            };
            let errs = u64::from(res.bit_errors(truth, link.cfg.constellation));
            t.bit_errors += errs;
            t.bits += bps * m as u64;
            t.block_errors += u64::from(errs > 0);
            t.blocks += 1;
            t.erasures += u64::from(erased);
        }
    }
    if t.blocks == 0 {
        return Err(Failure::Infeasible(anyhow!("layout has no data subchannels")));
    }
    let record = |metric: &str, k: u64, n: u64| MetricsRecord {
        mode: Mode::BerSweep,
        label: "decode".into(),
        l: link.cfg.blocks,
        m,
        p: link.cfg.pilots,
        k: link.k,
        d: link.d,
        snr_db: a.link.snr_db,
        decoder: kind.name().into(),
        estimator: which.name().into(),
        metric: metric.into(),
        value: k as f64 / n as f64,
        trials: a.frames,
        std_err: wilson_half_width(k, n),
    };
    let mut text = format!("# seed={}\n# version={}\n{CSV_HEADER}\n", a.link.seed, env!("CARGO_PKG_VERSION"));
    for r in [
        record("ber", t.bit_errors, t.bits),
        record("bler", t.block_errors, t.blocks),
        record("erasure_rate", t.erasures, t.blocks),
    ] {
        text += &r.csv_line();
        text.push('\n');
    }
    emit(a.link.out.as_deref(), &text)
}
