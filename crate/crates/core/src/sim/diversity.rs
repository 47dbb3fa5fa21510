use rand::Rng;

use super::spec::{ExperimentSpec, Mode};
use super::stats::{mean_and_se, wilson_half_width};
use super::{for_each_point, sample_channel, ExperimentReport, MetricsRecord};
use crate::channel::kappa_pmf;
use crate::decoders::diversity_rank_check;
use crate::error::{invalid, Result};

/// Compares the steering-matrix rank with kappa on random channels and data subchannels.
pub fn run_diversity_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.mode != Mode::Diversity {
        return Err(invalid(format!("{} is not the diversity mode", spec.mode.name())));
    }
    let (done, skipped) = for_each_point(
        spec,
        |pt| pt.config(),
        |pt, cfg, rng| {
            let ch = sample_channel(pt, rng)?;
            let data = cfg.data_indices();
            let l = data[rng.random_range(0..data.len())];
            let rank = diversity_rank_check(&ch, cfg, l)?;
            let (_, kappa) = ch.kappa(cfg.block_size)?;
            Ok((rank, kappa))
        },
    )?;
    let mut records = Vec::new();
    for (pt, _, trials) in done {
        let n = trials.len();
        let rb = MetricsRecord::at(spec.mode, &pt, n);
        let agree = trials.iter().filter(|(r, k)| r == k).count() as u64;
        records.push(rb.metric("rank_equals_kappa", agree as f64 / n as f64, wilson_half_width(agree, n as u64)));
        let kappas: Vec<f64> = trials.iter().map(|&(_, k)| k as f64).collect();
        let (m, se) = mean_and_se(&kappas);
        records.push(rb.metric("kappa_mean", m, se));
        if pt.delays.is_none() {
            // The occupancy law assumes residues spread uniformly, i.e. D large next to M.
            let model = kappa_pmf(pt.k, pt.m);
            for (kappa, &p) in model.iter().enumerate().skip(1) {
                let hits = trials.iter().filter(|&&(_, k)| k == kappa).count() as u64;
                records.push(rb.metric(&format!("kappa_pmf_{kappa}"), hits as f64 / n as f64, wilson_half_width(hits, n as u64)));
                records.push(rb.metric(&format!("kappa_pmf_model_{kappa}"), p, 0.0));
            }
        }
    }
    Ok(ExperimentReport { records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_always_matches_kappa() {
        let spec = ExperimentSpec::from_toml(
            "mode = \"diversity\"\ntrials = 200\n[[grid]]\nL = 64\nM = 8\nP = 4\nK = [1, 3, 6]\nD = 63\n",
        )
        .unwrap();
        let rep = run_diversity_experiment(&spec).unwrap();
        let agree = rep.find("", "", "", "rank_equals_kappa");
        assert_eq!(agree.len(), 3);
        assert!(agree.iter().all(|r| r.value == 1.0));
    }
}
