//! One transmitted frame and the receiver-side channel estimates built from it.

use num_complex::Complex64;
use rand::Rng;

use super::spec::{Estimator, GridPoint};
use super::sample_channel;
use crate::channel::{transmit, NoiseSpec, SparseChannel};
use crate::error::{Error, Result};
use crate::modem::{demodulate, modulate, VectorBlock, VofdmConfig};
use crate::pilot::{dense_ifft_estimate, estimate_pilot_spectrum, ChannelEstimate, PilotPlan};
use crate::sifft::{approximately_sparse_ifft_traced, exactly_sparse_ifft_traced, SifftParams, SifftTrace};

pub(crate) struct Frame {
    pub truth: SparseChannel,
    /// Transmitted constellation indices of each data block, by subchannel.
    pub data: Vec<(usize, Vec<usize>)>,
    pub received: Vec<VectorBlock>,
}

pub(crate) fn simulate_frame(
    pt: &GridPoint,
    cfg: &VofdmConfig,
    plan: Option<&PilotPlan>,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<Frame> {
    let truth = sample_channel(pt, rng)?;
    let c = cfg.constellation;
    let pts = c.points();
    let m = cfg.block_size;
    let mut symbols = Vec::with_capacity(cfg.n());
    let mut data = Vec::new();
    for l in 0..cfg.blocks {
        if cfg.is_pilot(l) {
            // Genie-only runs need no estimator-grade pilots; any known block will do.
            match plan.and_then(|p| p.block_for(l)) {
                Some(x) => symbols.extend_from_slice(x),
                None => symbols.extend(std::iter::repeat_n(pts[0], m)),
            }
        } else {
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..c.size())).collect();
            symbols.extend(idx.iter().map(|&i| pts[i]));
            data.push((l, idx));
        }
    }
    let tx = modulate(&symbols, cfg)?;
    let rx = transmit(&tx, cfg.cp_len, &truth, noise, rng)?;
    let received = demodulate(&rx, cfg)?;
    Ok(Frame { truth, data, received })
}

pub(crate) struct Estimated {
    pub estimate: ChannelEstimate,
    pub trace: Option<SifftTrace>,
}

/// Runs a pilot-based estimator on the frame. Not defined for the genie.
pub(crate) fn estimate(
    which: Estimator,
    frame: &Frame,
    plan: &PilotPlan,
    cfg: &VofdmConfig,
    k: usize,
    params: &SifftParams,
    rng: &mut impl Rng,
) -> Result<Estimated> {
    let h_p = estimate_pilot_spectrum(&frame.received, plan, cfg)?;
    Ok(match which {
        Estimator::Dense => Estimated { estimate: dense_ifft_estimate(&h_p, cfg)?, trace: None },
        Estimator::SifftExact => {
            let (estimate, t) = exactly_sparse_ifft_traced(&h_p, k, params, rng)?;
            Estimated { estimate, trace: Some(t) }
        }
        Estimator::SifftApprox => {
            let (estimate, t) = approximately_sparse_ifft_traced(&h_p, k, params, rng)?;
            Estimated { estimate, trace: Some(t) }
        }
        Estimator::Genie => return Err(Error::Infeasible("the genie has no pilot estimate".into())),
    })
}

/// The channel the receiver believes in, built from an estimate's nonzero entries.
pub fn channel_from_estimate(est: &ChannelEstimate) -> Result<SparseChannel> {
    let taps: Vec<(usize, Complex64)> = est.entries.iter().copied().filter(|(_, v)| v.norm_sqr() > 0.0).collect();
    if taps.is_empty() {
        // A zero estimate still has to be decodable; keep one vanishing tap.
        return SparseChannel::new(vec![(0, Complex64::new(f64::MIN_POSITIVE, 0.0))], 0);
    }
    let d = taps.iter().map(|&(j, _)| j).max().unwrap_or(0);
    SparseChannel::new(taps, d)
}
