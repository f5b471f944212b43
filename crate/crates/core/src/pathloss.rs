//! Distance-dependent pathloss models.

use crate::config::{PathlossKind, ScenarioConfig, SPEED_OF_LIGHT};

/// Median pathloss as a function of distance.
///
/// Implementations must be non-decreasing in `distance_m`. Callers go through
/// [`PathlossModel::eval`], which clamps short distances.
pub trait PathlossModel: Send + Sync + std::fmt::Debug {
    /// Pathloss in dB for `distance_m >= self.min_distance()`.
    fn pathloss_db(&self, distance_m: f64) -> f64;

    fn min_distance(&self) -> f64;

    fn eval(&self, distance_m: f64) -> f64 {
        self.pathloss_db(distance_m.max(self.min_distance()))
    }
}

/// `PL(d) = PL0 + 10 n log10(d / d0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDistance {
    pub pl0_db: f64,
    pub exponent: f64,
    pub d0_m: f64,
    pub d_min_m: f64,
}

impl PathlossModel for LogDistance {
    fn pathloss_db(&self, d: f64) -> f64 {
        self.pl0_db + 10.0 * self.exponent * (d / self.d0_m).log10()
    }

    fn min_distance(&self) -> f64 {
        self.d_min_m
    }
}

/// Dual-slope LOS urban-microcell model with a height-dependent breakpoint.
///
/// Below the breakpoint `near_slope log10(d) + near_intercept + near_freq_coeff log10(fc)`;
/// above it `far_slope log10(d) + far_intercept - far_height_coeff (log10 h'tx + log10 h'rx)
/// + far_freq_coeff log10(fc)`, with `fc` in GHz and `h' = h - h_env`.
#[derive(Debug, Clone, PartialEq)]
pub struct WinnerB1 {
    pub fc_ghz: f64,
    pub h_tx_eff_m: f64,
    pub h_rx_eff_m: f64,
    pub near_slope: f64,
    pub near_intercept: f64,
    pub near_freq_coeff: f64,
    pub far_slope: f64,
    pub far_intercept: f64,
    pub far_height_coeff: f64,
    pub far_freq_coeff: f64,
    pub d_min_m: f64,
}

impl WinnerB1 {
    pub fn breakpoint_m(&self) -> f64 {
        4.0 * self.h_tx_eff_m * self.h_rx_eff_m * self.fc_ghz * 1e9 / SPEED_OF_LIGHT
    }

    fn near(&self, d: f64) -> f64 {
        self.near_slope * d.log10() + self.near_intercept + self.near_freq_coeff * self.fc_ghz.log10()
    }

    fn far(&self, d: f64) -> f64 {
        self.far_slope * d.log10() + self.far_intercept
            - self.far_height_coeff * (self.h_tx_eff_m.log10() + self.h_rx_eff_m.log10())
            + self.far_freq_coeff * self.fc_ghz.log10()
    }
}

impl PathlossModel for WinnerB1 {
    fn pathloss_db(&self, d: f64) -> f64 {
        let bp = self.breakpoint_m();
        if d < bp {
            self.near(d)
        } else {
            // The two slopes need not meet exactly at the breakpoint.
            self.far(d).max(self.near(bp))
        }
    }

    fn min_distance(&self) -> f64 {
        self.d_min_m
    }
}

/// Builds the pathloss model selected by `cfg.pathloss_model`.
pub fn from_config(cfg: &ScenarioConfig) -> Box<dyn PathlossModel> {
    match cfg.pathloss_model {
        PathlossKind::LogDistance => Box::new(LogDistance {
            pl0_db: cfg.ld_pl0_db,
            exponent: cfg.ld_exponent,
            d0_m: cfg.ld_d0_m,
            d_min_m: cfg.pl_d_min_m,
        }),
        PathlossKind::WinnerB1 => Box::new(WinnerB1 {
            fc_ghz: cfg.wb1_fc_ghz,
            h_tx_eff_m: cfg.wb1_h_tx_m - cfg.wb1_h_env_m,
            h_rx_eff_m: cfg.wb1_h_rx_m - cfg.wb1_h_env_m,
            near_slope: cfg.wb1_near_slope,
            near_intercept: cfg.wb1_near_intercept,
            near_freq_coeff: cfg.wb1_near_freq_coeff,
            far_slope: cfg.wb1_far_slope,
            far_intercept: cfg.wb1_far_intercept,
            far_height_coeff: cfg.wb1_far_height_coeff,
            far_freq_coeff: cfg.wb1_far_freq_coeff,
            d_min_m: cfg.pl_d_min_m,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_distance_reference_point() {
        let pl = LogDistance { pl0_db: 40.0, exponent: 3.0, d0_m: 10.0, d_min_m: 1.0 };
        assert!((pl.eval(10.0) - 40.0).abs() < 1e-12);
        assert!((pl.eval(100.0) - 70.0).abs() < 1e-12);
        // below d_min clamps
        assert_eq!(pl.eval(0.0), pl.eval(1.0));
        assert_eq!(pl.eval(0.3), pl.eval(1.0));
    }

    #[test]
    fn winner_b1_slopes_nearly_meet() {
        let cfg = ScenarioConfig::default();
        let PathlossKind::WinnerB1 = cfg.pathloss_model else { unreachable!() };
        let pl = from_config(&cfg);
        let wb = WinnerB1 {
            fc_ghz: 5.9,
            h_tx_eff_m: 1.5,
            h_rx_eff_m: 1.5,
            near_slope: 22.7,
            near_intercept: 27.0,
            near_freq_coeff: 20.0,
            far_slope: 40.0,
            far_intercept: 7.56,
            far_height_coeff: 17.3,
            far_freq_coeff: 2.7,
            d_min_m: 1.0,
        };
        let bp = wb.breakpoint_m();
        assert!((bp - 177.1).abs() < 0.5, "{bp}");
        assert!((wb.near(bp) - wb.far(bp)).abs() < 0.2);
        assert_eq!(pl.eval(300.0), wb.eval(300.0));
    }

    #[test]
    fn both_models_non_decreasing() {
        for kind in [PathlossKind::LogDistance, PathlossKind::WinnerB1] {
            let cfg = ScenarioConfig { pathloss_model: kind, ..Default::default() };
            let pl = from_config(&cfg);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..20_000 {
                let d = i as f64 * 0.5;
                let v = pl.eval(d);
                assert!(v.is_finite());
                assert!(v >= prev, "{kind:?} at {d}");
                prev = v;
            }
        }
    }
}
