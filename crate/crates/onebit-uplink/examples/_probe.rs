use onebit_uplink::reftables::*;
use onebit_uplink::simharness::*;
use std::path::Path;

fn main() {
    let path = Path::new("/tmp/t7.csv");
    let table = if path.exists() {
        load(path).unwrap()
    } else {
        let grid: Vec<f64> = (0..38).map(|i| -25.5 + 1.5 * i as f64).collect();
        let t = gen_tables(256, 7, 3, 5.0, &grid, 6000, 16, 20260810).unwrap();
        save(&t, path).unwrap();
        t
    };
    let cfg = ExperimentConfig {
        m: 256, tau: 7, num_levels: 3, constellation_order: 16,
        trials: 6000, seed: 20260810, epsilon_db: 10.0,
        ..ExperimentConfig::default()
    };
    let result = scenario_records(&cfg, &table).unwrap();
    // longest run of consecutive conventional power increases with
    // non-improving genie SER
    let mut best = 0usize;
    let mut cur = 0usize;
    let recs = &result.records;
    for k in 1..recs.len() {
        let up = recs[k].conventional.tx_power_db > recs[k - 1].conventional.tx_power_db;
        let non_improving = recs[k].conventional.genie_ser >= recs[k - 1].conventional.genie_ser;
        if up && non_improving { cur += 1; best = best.max(cur); } else { cur = 0; }
    }
    println!("conventional eps=+10: longest up-and-non-improving run = {best}");
    for k in [0, 20, 50, 100, 150, 200, 249] {
        let r = &recs[k];
        println!("t={:.2} | conv tx={:>+6.1} eff={:>+6.1} genie={:.3e}",
            r.link.t_s, r.conventional.tx_power_db, r.conventional.effective_rho_db, r.conventional.genie_ser);
    }
}
