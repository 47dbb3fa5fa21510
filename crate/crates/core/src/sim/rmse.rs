use super::chain::{estimate, simulate_frame};
use super::spec::{Estimator, ExperimentSpec, Mode};
use super::stats::{mean_and_se, wilson_half_width};
use super::{for_each_point, ExperimentReport, MetricsRecord};
use crate::channel::NoiseSpec;
use crate::error::{invalid, Result};
use crate::pilot::design_pilots;
use crate::sifft::eta;

struct EstimatorOutcome {
    sq_err: f64,
    eta: f64,
    support_ok: bool,
    hash_calls: Option<usize>,
}

/// Channel estimation accuracy: RMSE `||h_hat - h|| / sqrt(MP)`, eta, and support recovery.
pub fn run_rmse_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if !matches!(spec.mode, Mode::RmseExact | Mode::RmseApprox) {
        return Err(invalid(format!("{} is not an RMSE mode", spec.mode.name())));
    }
    let (done, skipped) = for_each_point(
        spec,
        |pt| {
            let cfg = pt.config()?;
            let plan = design_pilots(&cfg)?;
            Ok((cfg, plan))
        },
        |pt, (cfg, plan), rng| {
            let noise = NoiseSpec::from_snr_db(pt.snr_db)?;
            let frame = simulate_frame(pt, cfg, Some(plan), &noise, rng)?;
            let mp = cfg.pilot_span();
            let truth = frame.truth.to_dense(mp)?;
            let mut out = Vec::new();
            for &which in &pt.estimators {
                if which == Estimator::Genie {
                    continue;
                }
                let est = estimate(which, &frame, plan, cfg, pt.k, &spec.sifft, rng)?;
                let dense = est.estimate.to_dense();
                let sq_err = dense.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / mp as f64;
                let support = match which {
                    Estimator::SifftExact => est.estimate.support(),
                    _ => est.estimate.top_k_support(pt.k),
                };
                out.push(EstimatorOutcome {
                    sq_err,
                    eta: est.estimate.eta.map_or_else(|| eta(&dense, pt.k), Ok)?,
                    support_ok: support == frame.truth.delays(),
                    hash_calls: est.trace.map(|t| t.hash_calls),
                });
            }
            Ok(out)
        },
    )?;

    let mut records = Vec::new();
    for (pt, (_, plan), trials) in done {
        let n = trials.len();
        let zeta = plan.mean_mse();
        records.push(MetricsRecord::at(spec.mode, &pt, n).estimator("pilots").metric("zeta", zeta, 0.0));
        let names: Vec<Estimator> = pt.estimators.iter().copied().filter(|&e| e != Estimator::Genie).collect();
        for (e, which) in names.iter().enumerate() {
            let col: Vec<&EstimatorOutcome> = trials.iter().map(|t| &t[e]).collect();
            let rb = MetricsRecord::at(spec.mode, &pt, n).estimator(which.name());
            let sq: Vec<f64> = col.iter().map(|o| o.sq_err).collect();
            let (mse, mse_se) = mean_and_se(&sq);
            let rmse = mse.sqrt();
            let rmse_se = if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 };
            records.push(rb.metric("rmse", rmse, rmse_se));
            let ok = col.iter().filter(|o| o.support_ok).count() as u64;
            records.push(rb.metric("support_match", ok as f64 / n as f64, wilson_half_width(ok, n as u64)));
            let etas: Vec<f64> = col.iter().map(|o| o.eta).collect();
            if etas.iter().all(|v| v.is_finite()) {
                let (m, se) = mean_and_se(&etas);
                records.push(rb.metric("eta", m, se));
                if pt.snr_db.is_finite() {
                    // eta is expected near rho / zeta under designed pilots.
                    let scale = zeta / crate::channel::db_to_linear(pt.snr_db);
                    records.push(rb.metric("eta_ratio", m * scale, se * scale));
                }
            }
            if col.iter().all(|o| o.hash_calls.is_some()) {
                let calls: Vec<f64> = col.iter().map(|o| o.hash_calls.unwrap_or(0) as f64).collect();
                let (m, se) = mean_and_se(&calls);
                records.push(rb.metric("hash_calls", m, se));
            }
        }
    }
    Ok(ExperimentReport { records, skipped })
}
