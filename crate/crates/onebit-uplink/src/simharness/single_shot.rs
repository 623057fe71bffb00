//! Single-shot offset-estimation evaluation: random pathloss-compensation
//! errors, one multi-amplitude pilot reception each, and the least-squares
//! fit against the stored reference curve.

use crate::channel::{apply_uplink, rayleigh_channel};
use crate::numerics::{quantize_1bit, RngStream};
use crate::receiver::pair_pmse_estimates;
use crate::reftables::ReferenceTable;
use crate::simharness::config::{fmt_full, CsvArtifact, Experiment, ExperimentConfig};
use crate::simharness::HarnessError;
use crate::powerctl::single_shot_offset;
use crate::waveforms::{build_multiamp_pilot, composite_pairs, zadoff_chu, PilotSpec};
use rand::Rng;

/// Mean squared offset-estimation error for each configured (L, tau)
/// combination. Offsets are drawn uniformly from the search span's inner
/// half (the paper's +-5 dB for a 10 dB span); each trial receives one
/// fresh multi-amplitude pilot at the offset power and fits it against the
/// matching reference table.
pub fn run_single_shot_eval(
    cfg: &ExperimentConfig,
    tables: &[ReferenceTable],
) -> Result<String, HarnessError> {
    cfg.validate()?;
    if cfg.combos.is_empty() {
        return Err(HarnessError::Config("no (L, tau) combos configured".into()));
    }
    let mut csv = CsvArtifact::new(
        Experiment::SingleShotEval,
        cfg,
        &[],
        &["num_levels", "tau", "mean_squared_offset_error_db2"],
    );
    for (combo_index, &(num_levels, tau)) in cfg.combos.iter().enumerate() {
        let table = tables
            .iter()
            .find(|t| t.meta.tau == tau && t.meta.m == cfg.m)
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "no reference table for M={} tau={tau}; pass --table",
                    cfg.m
                ))
            })?;
        table.check_compat(cfg.m, tau, cfg.gap_db)?;

        let base = zadoff_chu(tau, 1)?;
        let spec = PilotSpec::ladder(base, num_levels, cfg.rho_start_db, cfg.gap_db)?;
        let pairing = composite_pairs(spec.levels_db())?;
        let q = build_multiamp_pilot(&spec);

        let mut sq_err_sum = 0.0;
        for trial in 0..cfg.trials {
            let mut rng = RngStream::new(cfg.seed, (combo_index as u64) << 32 | trial).rng();
            let true_offset: f64 = rng.gen_range(-cfg.search_span_db / 2.0..cfg.search_span_db / 2.0);
            let h = rayleigh_channel(cfg.m, &mut rng);
            // the UE's power error scales the whole pilot
            let y = apply_uplink(&h, &q, true_offset, &mut rng);
            let ests = pair_pmse_estimates(&quantize_1bit(&y), &spec, &pairing)?;
            let values: Vec<f64> = ests.iter().map(|e| e.value).collect();
            let estimated = single_shot_offset(
                &values,
                &pairing.composite_powers_db,
                table,
                cfg.search_span_db,
                cfg.search_step_db,
            )?;
            let err = estimated - true_offset;
            sq_err_sum += err * err;
        }
        csv.push_row(&[
            num_levels.to_string(),
            tau.to_string(),
            fmt_full(sq_err_sum / cfg.trials as f64),
        ]);
    }
    Ok(csv.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reftables::gen_tables;
    use crate::simharness::config::GridSpec;

    #[test]
    fn eval_runs_and_reports_one_row_per_combo() {
        let table = gen_tables(
            16,
            7,
            3,
            5.0,
            &(0..25).map(|i| -18.0 + 1.5 * i as f64).collect::<Vec<_>>(),
            1500,
            4,
            42,
        )
        .unwrap();
        let cfg = ExperimentConfig {
            m: 16,
            tau: 7,
            num_levels: 3,
            constellation_order: 4,
            grid: GridSpec::List(vec![0.0]),
            trials: 40,
            seed: 9,
            combos: vec![(3, 7), (5, 7)],
            ..ExperimentConfig::default()
        };
        let out = run_single_shot_eval(&cfg, std::slice::from_ref(&table)).unwrap();
        let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            let mse: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
            assert!(mse.is_finite() && mse >= 0.0);
            // offsets live in [-5, 5]; even a broken fit cannot exceed the
            // squared span
            assert!(mse < 15.0_f64 * 15.0, "mse {mse}");
        }
        // determinism
        assert_eq!(out, run_single_shot_eval(&cfg, std::slice::from_ref(&table)).unwrap());
    }

    #[test]
    fn eval_requires_matching_table() {
        let table = gen_tables(16, 7, 3, 5.0, &[-10.0, 0.0, 10.0], 1000, 4, 1).unwrap();
        let cfg = ExperimentConfig {
            m: 16,
            combos: vec![(3, 31)],
            trials: 5,
            constellation_order: 4,
            ..ExperimentConfig::default()
        };
        assert!(run_single_shot_eval(&cfg, std::slice::from_ref(&table)).is_err());
    }
}
