//! Whole-chain checks across module boundaries.

use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_vofdm::channel::{sample_sparse_channel, transmit, NoiseSpec, SparseChannel};
use sparse_vofdm::decoders::{pis_decode, DecoderConfig, DecoderKind};
use sparse_vofdm::modem::{blocked_channel_matrix, demodulate, modulate, Constellation, VofdmConfig};
use sparse_vofdm::pilot::{design_pilots, estimate_pilot_spectrum, PilotPlan};
use sparse_vofdm::sifft::{exactly_sparse_ifft, SifftParams};
use sparse_vofdm::sim::{channel_from_estimate, run_experiment, ExperimentSpec};

/// Transmits designed pilots plus random data and returns (plan, data, received blocks).
fn send(
    cfg: &VofdmConfig,
    h: &SparseChannel,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> (PilotPlan, Vec<(usize, Vec<usize>)>, Vec<sparse_vofdm::modem::VectorBlock>) {
    let plan = design_pilots(cfg).unwrap();
    let pts = Constellation::Bpsk.points();
    let mut symbols = Vec::new();
    let mut data = Vec::new();
    for l in 0..cfg.blocks {
        match plan.block_for(l) {
            Some(x) => symbols.extend_from_slice(x),
            None => {
                let idx: Vec<usize> = (0..cfg.block_size).map(|_| rng.random_range(0..2)).collect();
                symbols.extend(idx.iter().map(|&i| pts[i]));
                data.push((l, idx));
            }
        }
    }
    let rx = transmit(&modulate(&symbols, cfg).unwrap(), cfg.cp_len, h, noise, rng).unwrap();
    (plan, data, demodulate(&rx, cfg).unwrap())
}

#[test]
fn noiseless_estimate_then_decode_recovers_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = VofdmConfig::new(64, 4, 16, 40).unwrap();
    for _ in 0..10 {
        let h = sample_sparse_channel(3, 40, &mut rng, true).unwrap();
        let (plan, data, rx) = send(&cfg, &h, &NoiseSpec::noiseless(), &mut rng);
        let h_p = estimate_pilot_spectrum(&rx, &plan, &cfg).unwrap();
        let est = exactly_sparse_ifft(&h_p, 3, &SifftParams::default(), &mut rng).unwrap();
        let believed = channel_from_estimate(&est).unwrap();
        assert_eq!(believed.delays(), h.delays());
        let (res, _) = believed.kappa(4).unwrap();
        let dcfg = DecoderConfig::new(DecoderKind::Pis, NoiseSpec::from_snr_db(40.0).unwrap());
        for (l, truth) in data {
            let hm = blocked_channel_matrix(&believed, l, &cfg).unwrap();
            assert_eq!(pis_decode(&rx[l].symbols, &hm, &res, &dcfg).unwrap().indices, truth);
        }
    }
}

#[test]
fn text_formats_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = sample_sparse_channel(4, 30, &mut rng, false).unwrap();
    assert_eq!(SparseChannel::from_text(&h.to_text()).unwrap().taps(), h.taps());
    let cfg = VofdmConfig::new(32, 8, 4, 0).unwrap();
    let plan = design_pilots(&cfg).unwrap();
    let back = PilotPlan::from_text(&plan.to_text(), &cfg).unwrap();
    assert_eq!(back.blocks, plan.blocks);
}

#[test]
fn every_mode_runs_from_toml_and_repeats() {
    let base = |mode: &str, extra: &str| {
        format!("mode = \"{mode}\"\ntrials = 6\nseed = 5\n[[grid]]\nL = 64\nM = 4\nP = 16\nK = 3\nD = 30\n{extra}")
    };
    for text in [
        base("rmse-exact", ""),
        base("rmse-approx", "snr_db = 20\n"),
        base("ber-sweep", "snr_db = 12\n"),
        base("decoder-compare", "snr_db = 12\n"),
        base("diversity", ""),
        base("joint", "snr_db = 15\n"),
    ] {
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        let a = run_experiment(&spec).unwrap();
        assert!(a.skipped.is_empty(), "{text}: {:?}", a.skipped);
        assert!(!a.records.is_empty());
        assert!(a.records.iter().all(|r| r.trials == 6 && r.std_err.is_finite() || r.std_err.is_nan()));
        assert_eq!(a.to_csv(&spec), run_experiment(&spec).unwrap().to_csv(&spec));
    }
}

#[test]
fn diversity_mode_reports_rank_law() {
    let spec = ExperimentSpec::from_toml(
        "mode = \"diversity\"\ntrials = 50\nseed = 9\n[[grid]]\nL = 32\nM = [2, 4, 8]\nP = 4\nK = 4\nD = 31\n",
    )
    .unwrap();
    let rep = run_experiment(&spec).unwrap();
    let rows = rep.find("", "", "", "rank_equals_kappa");
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.value == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Noiseless blocks satisfy the block model for arbitrary channels.
    #[test]
    fn blocks_follow_the_model(seed in any::<u64>(), m_exp in 0u32..4, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 1usize << m_exp;
        let cfg = VofdmConfig::new(8, m, 1, 7).unwrap();
        let h = sample_sparse_channel(k, 7, &mut rng, false).unwrap();
        let x: Vec<Complex64> = (0..cfg.n()).map(|_| Constellation::Bpsk.points()[rng.random_range(0..2)]).collect();
        let rx = transmit(&modulate(&x, &cfg).unwrap(), 7, &h, &NoiseSpec::noiseless(), &mut rng).unwrap();
        for (l, b) in demodulate(&rx, &cfg).unwrap().iter().enumerate() {
            let pred = blocked_channel_matrix(&h, l, &cfg).unwrap().mul_vec(&x[l * m..(l + 1) * m]).unwrap();
            for (a, b) in pred.iter().zip(b.symbols.iter()) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }

    /// Residues of the taps bound the number of nonzero entries in every matrix row.
    #[test]
    fn rows_have_kappa_nonzeros(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = VofdmConfig::new(16, 8, 1, 40).unwrap();
        let h = sample_sparse_channel(k, 40, &mut rng, false).unwrap();
        let (res, kappa) = h.kappa(8).unwrap();
        let l = rng.random_range(0..16);
        let dense = blocked_channel_matrix(&h, l, &cfg).unwrap().to_dense();
        for r in 0..8 {
            let nz: BTreeSet<usize> = (0..8).filter(|&c| dense[(r, c)].norm() > 1e-12).map(|c| (r + 8 - c) % 8).collect();
            prop_assert!(nz.len() <= kappa);
            prop_assert!(nz.is_subset(&res));
        }
    }
}
