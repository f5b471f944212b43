//! Scenario parameters and the radio constants derived from them.
//!
//! Every physical constant the models use lives here. The scenario file is
//! flat TOML with one key per [`ScenarioConfig`] field; unknown keys are
//! rejected so that typos never silently fall back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// SERVICE field length of an OFDM PPDU, bits.
pub const OFDM_SERVICE_BITS: u32 = 16;

/// Convolutional encoder tail, bits.
pub const OFDM_TAIL_BITS: u32 = 6;

/// Data rates of a 10 MHz 802.11p channel, bits per second.
pub const DATA_RATES_BPS: [f64; 8] = [
    3.0e6, 4.5e6, 6.0e6, 9.0e6, 12.0e6, 18.0e6, 24.0e6, 27.0e6,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathlossKind {
    LogDistance,
    WinnerB1,
}

/// All scenario and radio parameters.
///
/// Units are SI unless the field name says otherwise; powers are dBm and
/// ratios dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Traffic density, vehicles per meter.
    pub beta: f64,
    /// Packet transmission frequency, Hz.
    pub lambda: f64,
    /// Transmission power, dBm.
    pub p_t: f64,
    /// Payload size, bytes.
    pub payload_b: u32,
    /// PHY data rate, bits per second.
    pub data_rate: f64,
    /// Shadowing standard deviation, dB.
    pub sigma_sh: f64,
    /// Sensing power threshold, dBm.
    pub p_sen: f64,
    /// Noise power, dBm.
    pub n0: f64,
    /// aSlotTime, seconds.
    pub slot_time: f64,
    /// MAC header + LLC + FCS, bytes.
    pub mac_overhead_bytes: u32,
    /// PHY preamble plus SIGNAL field, seconds.
    pub phy_preamble_s: f64,
    /// OFDM symbol duration, seconds.
    pub symbol_s: f64,
    /// Occupied channel bandwidth used for the SNR to Eb/N0 conversion, Hz.
    pub bandwidth_hz: f64,

    pub shadowing_enabled: bool,
    pub fading_lut_enabled: bool,
    /// Decode threshold on the SNR, used only with `fading_lut_enabled = false`.
    pub snr_threshold_db: f64,

    /// CBR compression polynomial, `cbr = p1 u^2 + p2 u + p3`.
    pub cbr_p1: f64,
    pub cbr_p2: f64,
    pub cbr_p3: f64,

    /// Weight of the "victim packet arrives first" hidden-terminal collision term.
    pub col_weight_first: f64,
    /// Weight of the "interfering packet arrives first" hidden-terminal collision term.
    pub col_weight_second: f64,

    pub grid_lo_db: f64,
    pub grid_hi_db: f64,
    pub grid_step_db: f64,

    pub pathloss_model: PathlossKind,
    /// Distances below this clamp to it before evaluating the pathloss, m.
    pub pl_d_min_m: f64,

    pub ld_pl0_db: f64,
    pub ld_exponent: f64,
    pub ld_d0_m: f64,

    pub wb1_fc_ghz: f64,
    pub wb1_h_tx_m: f64,
    pub wb1_h_rx_m: f64,
    /// Effective environment height subtracted from both antenna heights, m.
    pub wb1_h_env_m: f64,
    pub wb1_near_slope: f64,
    pub wb1_near_intercept: f64,
    pub wb1_near_freq_coeff: f64,
    pub wb1_far_slope: f64,
    pub wb1_far_intercept: f64,
    pub wb1_far_height_coeff: f64,
    pub wb1_far_freq_coeff: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            beta: 0.06,
            lambda: 10.0,
            p_t: 23.0,
            payload_b: 190,
            data_rate: 6.0e6,
            sigma_sh: 3.0,
            p_sen: -85.0,
            n0: -95.0,
            slot_time: 13e-6,
            mac_overhead_bytes: 36,
            phy_preamble_s: 40e-6,
            symbol_s: 8e-6,
            bandwidth_hz: 10e6,
            shadowing_enabled: true,
            fading_lut_enabled: true,
            snr_threshold_db: 10.0,
            cbr_p1: -0.2481,
            cbr_p2: 0.913,
            cbr_p3: 0.003844,
            col_weight_first: 1.0,
            col_weight_second: 1.0,
            grid_lo_db: -250.0,
            grid_hi_db: 150.0,
            grid_step_db: 0.1,
            pathloss_model: PathlossKind::WinnerB1,
            pl_d_min_m: 1.0,
            ld_pl0_db: 47.86,
            ld_exponent: 2.75,
            ld_d0_m: 1.0,
            wb1_fc_ghz: 5.9,
            wb1_h_tx_m: 1.5,
            wb1_h_rx_m: 1.5,
            wb1_h_env_m: 0.0,
            wb1_near_slope: 22.7,
            wb1_near_intercept: 27.0,
            wb1_near_freq_coeff: 20.0,
            wb1_far_slope: 40.0,
            wb1_far_intercept: 7.56,
            wb1_far_height_coeff: 17.3,
            wb1_far_freq_coeff: 2.7,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(msg) => Error::Toml(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Returns a copy with `key = value` pairs from `overrides` applied.
    ///
    /// Keys are validated exactly like a config file.
    pub fn with_overrides(&self, overrides: &toml::Table) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Toml(e.to_string()))?;
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let cfg: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        }
        check(self.beta > 0.0 && self.beta.is_finite(), "beta must be > 0")?;
        check(self.lambda > 0.0 && self.lambda.is_finite(), "lambda must be > 0")?;
        check(self.sigma_sh >= 0.0 && self.sigma_sh.is_finite(), "sigma_sh must be >= 0")?;
        check(self.slot_time > 0.0, "slot_time must be > 0")?;
        check(self.symbol_s > 0.0, "symbol_s must be > 0")?;
        check(self.phy_preamble_s >= 0.0, "phy_preamble_s must be >= 0")?;
        check(self.bandwidth_hz > 0.0, "bandwidth_hz must be > 0")?;
        check(self.p_sen < self.p_t, "p_sen must be below p_t")?;
        check(
            self.p_t.is_finite() && self.p_sen.is_finite() && self.n0.is_finite(),
            "powers must be finite",
        )?;
        check(
            self.grid_step_db > 0.0 && self.grid_lo_db < self.grid_hi_db,
            "grid needs lo < hi and step > 0",
        )?;
        check(
            self.col_weight_first >= 0.0 && self.col_weight_second >= 0.0,
            "collision weights must be >= 0",
        )?;
        check(self.pl_d_min_m > 0.0, "pl_d_min_m must be > 0")?;
        check(
            [self.cbr_p1, self.cbr_p2, self.cbr_p3].iter().all(|p| p.is_finite()),
            "cbr coefficients must be finite",
        )?;
        data_bits_per_symbol(self)?;
        match self.pathloss_model {
            PathlossKind::LogDistance => {
                check(self.ld_d0_m > 0.0, "ld_d0_m must be > 0")?;
                check(self.ld_exponent >= 0.0, "ld_exponent must be >= 0")?;
            }
            PathlossKind::WinnerB1 => {
                check(self.wb1_fc_ghz > 0.0, "wb1_fc_ghz must be > 0")?;
                check(
                    self.wb1_h_tx_m - self.wb1_h_env_m > 0.0
                        && self.wb1_h_rx_m - self.wb1_h_env_m > 0.0,
                    "effective antenna heights must be > 0",
                )?;
            }
        }
        Ok(())
    }

    /// Shadowing deviation actually applied, 0 when shadowing is disabled.
    pub fn effective_sigma(&self) -> f64 {
        if self.shadowing_enabled {
            self.sigma_sh
        } else {
            0.0
        }
    }
}

/// Data bits carried per OFDM symbol for the configured rate.
pub fn data_bits_per_symbol(cfg: &ScenarioConfig) -> Result<u32> {
    let known = DATA_RATES_BPS
        .iter()
        .any(|r| (r - cfg.data_rate).abs() < 1.0);
    if !known {
        return Err(Error::Config(format!(
            "data rate {} bps is not an 802.11p rate",
            cfg.data_rate
        )));
    }
    let n_dbps = cfg.data_rate * cfg.symbol_s;
    if n_dbps < 1.0 || (n_dbps - n_dbps.round()).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "data rate {} bps with symbol {} s gives a fractional {n_dbps} bits/symbol",
            cfg.data_rate, cfg.symbol_s
        )));
    }
    Ok(n_dbps.round() as u32)
}

/// Airtime of one packet, seconds.
pub fn packet_airtime(cfg: &ScenarioConfig) -> Result<f64> {
    let n_dbps = data_bits_per_symbol(cfg)?;
    let psdu_bits = 8 * (cfg.payload_b + cfg.mac_overhead_bytes);
    let symbols = (OFDM_SERVICE_BITS + OFDM_TAIL_BITS + psdu_bits).div_ceil(n_dbps);
    Ok(cfg.phy_preamble_s + f64::from(symbols) * cfg.symbol_s)
}
