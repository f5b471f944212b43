//! Shared fixtures for the benchmarks.

use v2v_core::{FerTable, Scenario, ScenarioConfig};

/// Default scenario at the given density (veh/m) and packet rate (Hz).
pub fn scenario(beta: f64, lambda: f64) -> Scenario {
    let cfg = ScenarioConfig { beta, lambda, ..Default::default() };
    let fer = FerTable::builtin(cfg.data_rate).expect("shipped FER table");
    Scenario::new(cfg, fer).expect("valid scenario")
}
