use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::config::{packet_airtime, ScenarioConfig};
use crate::error::Result;
use crate::fer::FerTable;
use crate::grid::DbGrid;
use crate::pathloss::{self, PathlossModel};

/// A validated scenario: configuration plus the pathloss model, FER table
/// and dB grid every model evaluates against.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ScenarioConfig,
    pathloss: Arc<dyn PathlossModel>,
    fer: FerTable,
    grid: DbGrid,
    airtime: f64,
    ebn0_offset: f64,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig, fer: FerTable) -> Result<Self> {
        let pl: Arc<dyn PathlossModel> = pathloss::from_config(&cfg).into();
        Self::with_pathloss(cfg, pl, fer)
    }

    pub fn with_pathloss(
        cfg: ScenarioConfig,
        pathloss: Arc<dyn PathlossModel>,
        fer: FerTable,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = DbGrid::new(cfg.grid_lo_db, cfg.grid_hi_db, cfg.grid_step_db)?;
        let (lo, hi) = fer.domain();
        grid.check_covers(lo, hi)?;
        let airtime = packet_airtime(&cfg)?;
        let ebn0_offset = 10.0 * (cfg.bandwidth_hz / cfg.data_rate).log10();
        Ok(Self { cfg, pathloss, fer, grid, airtime, ebn0_offset })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn pathloss(&self) -> &dyn PathlossModel {
        self.pathloss.as_ref()
    }

    pub fn fer_table(&self) -> &FerTable {
        &self.fer
    }

    pub fn grid(&self) -> &DbGrid {
        &self.grid
    }

    /// Packet duration T, seconds.
    pub fn airtime(&self) -> f64 {
        self.airtime
    }

    /// Fraction of time one vehicle spends transmitting, λ·T.
    pub fn duty_cycle(&self) -> f64 {
        self.cfg.lambda * self.airtime
    }

    pub fn sigma(&self) -> f64 {
        self.cfg.effective_sigma()
    }

    /// Median received power `P_t - PL(d)`, dBm.
    pub fn mean_rx_power(&self, distance_m: f64) -> f64 {
        self.cfg.p_t - self.pathloss.eval(distance_m)
    }

    /// SNR to Eb/N0 offset, `10 log10(B / DR)` dB.
    pub fn ebn0_offset_db(&self) -> f64 {
        self.ebn0_offset
    }

    /// Frame error probability at a given SNR (or SINR), dB.
    ///
    /// With the fading LUT disabled this is a hard decode threshold.
    pub fn fer_at_snr(&self, snr_db: f64) -> f64 {
        if self.cfg.fading_lut_enabled {
            self.fer.fer(snr_db + self.ebn0_offset)
        } else if snr_db < self.cfg.snr_threshold_db {
            1.0
        } else {
            0.0
        }
    }

    /// Short hex digest of the configuration and FER table.
    ///
    /// Knobs that only shape the analytic model (compression polynomial,
    /// collision weights, dB grid) are left out, so a simulation stays
    /// comparable with curves recomputed under different settings.
    pub fn fingerprint(&self) -> String {
        let d = ScenarioConfig::default();
        let physical = ScenarioConfig {
            cbr_p1: d.cbr_p1,
            cbr_p2: d.cbr_p2,
            cbr_p3: d.cbr_p3,
            col_weight_first: d.col_weight_first,
            col_weight_second: d.col_weight_second,
            grid_lo_db: d.grid_lo_db,
            grid_hi_db: d.grid_hi_db,
            grid_step_db: d.grid_step_db,
            ..self.cfg.clone()
        };
        let mut h = Sha256::new();
        h.update(physical.to_toml_string().as_bytes());
        for (x, f) in self.fer.rows() {
            h.update(x.to_le_bytes());
            h.update(f.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
