//! Received power, sensing errors and propagation (SNR) errors.

use statrs::function::erf::erfc;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::grid::{DbGrid, DiscretePdf};
use crate::scenario::Scenario;

/// A power (dBm) that is either known exactly or spread over the dB grid.
///
/// The exact form appears when shadowing is disabled; keeping it exact lets
/// the threshold ablation produce clean 0/1 outcomes instead of grid-snapped
/// ones.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerPdf {
    Exact(f64),
    Grid(DiscretePdf),
}

impl PowerPdf {
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            PowerPdf::Exact(x) => f(*x),
            PowerPdf::Grid(pdf) => pdf.expect(f),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            PowerPdf::Exact(_) => 1.0,
            PowerPdf::Grid(pdf) => pdf.total_mass(),
        }
    }

    /// Largest value carrying mass, dB.
    pub fn upper(&self) -> f64 {
        match self {
            PowerPdf::Exact(x) => *x,
            PowerPdf::Grid(pdf) => pdf.support().1,
        }
    }
}

/// Log-normal received power: Gaussian in dB around `P_t - PL(d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDistribution {
    pub mean_dbm: f64,
    pub sigma: f64,
}

impl PowerDistribution {
    pub fn at(sc: &Scenario, distance_m: f64) -> Self {
        Self { mean_dbm: sc.mean_rx_power(distance_m), sigma: sc.sigma() }
    }

    /// Probability of falling below `threshold_dbm`.
    pub fn cdf(&self, threshold_dbm: f64) -> f64 {
        let margin = self.mean_dbm - threshold_dbm;
        if self.sigma == 0.0 {
            return step_limit(margin, false);
        }
        0.5 * erfc(margin / (self.sigma * std::f64::consts::SQRT_2))
    }

    /// Probability of exceeding `threshold_dbm`.
    pub fn sf(&self, threshold_dbm: f64) -> f64 {
        let margin = self.mean_dbm - threshold_dbm;
        if self.sigma == 0.0 {
            return step_limit(margin, true);
        }
        0.5 * erfc(-margin / (self.sigma * std::f64::consts::SQRT_2))
    }

    pub fn to_pdf(&self, grid: &DbGrid) -> Result<PowerPdf> {
        if self.sigma == 0.0 {
            return Ok(PowerPdf::Exact(self.mean_dbm));
        }
        grid.gaussian(self.mean_dbm, self.sigma).map(PowerPdf::Grid)
    }

    /// Conditioned on exceeding `floor_dbm`; `None` if that has no mass.
    pub fn truncated(&self, grid: &DbGrid, floor_dbm: f64) -> Result<Option<PowerPdf>> {
        if self.sigma == 0.0 {
            return Ok((self.mean_dbm > floor_dbm).then_some(PowerPdf::Exact(self.mean_dbm)));
        }
        Ok(grid
            .truncated_gaussian(self.mean_dbm, self.sigma, floor_dbm)?
            .map(PowerPdf::Grid))
    }
}

fn step_limit(margin: f64, above: bool) -> f64 {
    if margin == 0.0 {
        0.5
    } else if (margin > 0.0) == above {
        1.0
    } else {
        0.0
    }
}

/// SNR of a sensed packet: the received power conditioned on `P_r > P_SEN`,
/// expressed relative to the noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSnrPdf {
    power: PowerPdf,
    noise_dbm: f64,
}

impl TruncatedSnrPdf {
    pub fn at(sc: &Scenario, distance_m: f64) -> Result<Option<Self>> {
        let cfg = sc.config();
        Ok(PowerDistribution::at(sc, distance_m)
            .truncated(sc.grid(), cfg.p_sen)?
            .map(|power| Self { power, noise_dbm: cfg.n0 }))
    }

    /// The conditioned received-power PDF, dBm.
    pub fn power(&self) -> &PowerPdf {
        &self.power
    }

    pub fn total_mass(&self) -> f64 {
        self.power.total_mass()
    }

    pub fn expect_over_snr(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.power.expect(|p| f(p - self.noise_dbm))
    }
}

/// Probability that the received power is below the sensing threshold.
pub fn delta_sen(sc: &Scenario, distance_m: f64) -> f64 {
    PowerDistribution::at(sc, distance_m).cdf(sc.config().p_sen)
}

/// Packet sensing ratio, `1 - delta_sen`.
pub fn psr(sc: &Scenario, distance_m: f64) -> f64 {
    PowerDistribution::at(sc, distance_m).sf(sc.config().p_sen)
}

pub fn snr_to_ebn0(cfg: &ScenarioConfig, snr_db: f64) -> f64 {
    snr_db + 10.0 * (cfg.bandwidth_hz / cfg.data_rate).log10()
}

/// Probability that a sensed, undisturbed packet fails on SNR alone.
///
/// Zero when nothing is sensed at this distance.
pub fn delta_pro(sc: &Scenario, distance_m: f64) -> Result<f64> {
    Ok(match TruncatedSnrPdf::at(sc, distance_m)? {
        None => 0.0,
        Some(snr) => snr.expect_over_snr(|s| sc.fer_at_snr(s)).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fer::FerTable;
    use crate::grid::std_normal_cdf;
    use crate::pathloss::LogDistance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Constant pathloss so the mean received power is exactly `p_t - pl`.
    #[derive(Debug)]
    struct Flat(f64);
    impl crate::pathloss::PathlossModel for Flat {
        fn pathloss_db(&self, _: f64) -> f64 {
            self.0
        }
        fn min_distance(&self) -> f64 {
            1.0
        }
    }

    fn flat(cfg: ScenarioConfig, pl: f64, fer: FerTable) -> Scenario {
        Scenario::with_pathloss(cfg, Arc::new(Flat(pl)), fer).unwrap()
    }

    fn zero_fer() -> FerTable {
        FerTable::constant(0.0).unwrap()
    }

    #[test]
    fn sen_at_threshold_is_half() {
        // 23 - 108 = -85 = P_SEN
        let sc = flat(ScenarioConfig::default(), 108.0, zero_fer());
        assert_eq!(delta_sen(&sc, 100.0), 0.5);
        assert_eq!(psr(&sc, 100.0), 0.5);
    }

    #[test]
    fn sen_one_sigma_margin() {
        let sc = flat(ScenarioConfig::default(), 105.0, zero_fer());
        let expected = std_normal_cdf(-1.0);
        assert!((delta_sen(&sc, 100.0) - expected).abs() < 1e-12);
        assert!((expected - 0.158655).abs() < 1e-6);
    }

    #[test]
    fn sen_without_shadowing_is_a_step() {
        let cfg = ScenarioConfig { shadowing_enabled: false, ..Default::default() };
        assert_eq!(delta_sen(&flat(cfg.clone(), 100.0, zero_fer()), 1.0), 0.0);
        assert_eq!(delta_sen(&flat(cfg.clone(), 120.0, zero_fer()), 1.0), 1.0);
        assert_eq!(delta_sen(&flat(cfg, 108.0, zero_fer()), 1.0), 0.5);
    }

    #[test]
    fn psr_complements_sen() {
        let sc = Scenario::new(ScenarioConfig::default(), zero_fer()).unwrap();
        for d in [10.0, 100.0, 1000.0] {
            assert!((psr(&sc, d) + delta_sen(&sc, d) - 1.0).abs() < 1e-15);
        }
        assert!(psr(&sc, 0.0) > 1.0 - 1e-12);
    }

    #[test]
    fn psr_non_increasing_in_distance() {
        let sc = Scenario::new(ScenarioConfig::default(), zero_fer()).unwrap();
        let mut prev = 1.0;
        for i in 0..3000 {
            let v = psr(&sc, i as f64);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn ebn0_conversion() {
        let cfg = ScenarioConfig::default();
        assert!((snr_to_ebn0(&cfg, 10.0) - 12.218487496163564).abs() < 1e-12);
        let unit = ScenarioConfig { bandwidth_hz: 6e6, ..Default::default() };
        assert_eq!(snr_to_ebn0(&unit, 10.0), 10.0);
        let fast = ScenarioConfig { data_rate: 18e6, ..Default::default() };
        assert!(snr_to_ebn0(&fast, 0.0) < snr_to_ebn0(&cfg, 0.0));
    }

    #[test]
    fn pro_bounds_for_constant_tables() {
        let cfg = ScenarioConfig::default();
        let zero = Scenario::new(cfg.clone(), zero_fer()).unwrap();
        let one = Scenario::new(cfg, FerTable::constant(1.0).unwrap()).unwrap();
        for d in [5.0, 200.0, 400.0, 700.0] {
            assert_eq!(delta_pro(&zero, d).unwrap(), 0.0);
            assert!((delta_pro(&one, d).unwrap() - 1.0).abs() < 1e-12, "{d}");
        }
        // nothing sensed that far out
        assert_eq!(delta_pro(&one, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn truncated_snr_pdf_mass() {
        let sc = Scenario::new(ScenarioConfig::default(), zero_fer()).unwrap();
        let t = TruncatedSnrPdf::at(&sc, 400.0).unwrap().unwrap();
        assert!((t.total_mass() - 1.0).abs() < 1e-6);
        let PowerPdf::Grid(pdf) = t.power() else { panic!() };
        let step = sc.grid().step;
        for (x, m) in pdf.iter() {
            if x + step / 2.0 <= sc.config().p_sen {
                assert_eq!(m, 0.0);
            }
        }
    }

    /// Gaussian SNR N(15, 3^2) truncated at 0 dB against a sampling oracle.
    #[test]
    fn pro_matches_rejection_sampling() {
        let cfg = ScenarioConfig {
            p_t: 0.0,
            n0: -95.0,
            p_sen: -95.0,
            // unit Eb/N0 offset keeps the table indexed by SNR directly
            bandwidth_hz: 6e6,
            ..Default::default()
        };
        let fer = FerTable::new(vec![(0.0, 1.0), (10.0, 0.5), (20.0, 0.0)]).unwrap();
        // mean P_r = -80 dBm -> mean SNR 15 dB
        let sc = flat(cfg, 80.0, fer.clone());
        let analytic = delta_pro(&sc, 50.0).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(15.0, 3.0).unwrap();
        let (mut acc, mut kept) = (0.0, 0u64);
        for _ in 0..1_000_000 {
            let s: f64 = normal.sample(&mut rng);
            if s > 0.0 {
                acc += fer.fer(s);
                kept += 1;
            }
        }
        let oracle = acc / kept as f64;
        assert!((analytic - oracle).abs() < 0.003, "{analytic} vs {oracle}");
    }

    #[test]
    fn exact_power_when_unshadowed() {
        let cfg = ScenarioConfig { shadowing_enabled: false, ..Default::default() };
        let sc = Scenario::with_pathloss(
            cfg,
            Arc::new(LogDistance { pl0_db: 40.0, exponent: 3.0, d0_m: 1.0, d_min_m: 1.0 }),
            zero_fer(),
        )
        .unwrap();
        let t = TruncatedSnrPdf::at(&sc, 100.0).unwrap().unwrap();
        assert_eq!(t.power(), &PowerPdf::Exact(23.0 - 100.0));
    }
}
