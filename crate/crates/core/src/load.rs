//! Channel load and channel busy ratio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::propagation::psr;
use crate::scenario::Scenario;

/// Lattice sums stop once the sensing ratio drops below this.
pub const LATTICE_PSR_CUTOFF: f64 = 1e-4;

/// Hard cap on the lattice index for sums truncated by [`LATTICE_PSR_CUTOFF`].
pub const LATTICE_MAX_INDEX: u64 = 100_000;

/// Quadratic map from the collision-free CBR bound to the observed CBR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrCoefficients {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl Default for CbrCoefficients {
    fn default() -> Self {
        Self { p1: -0.2481, p2: 0.913, p3: 0.003844 }
    }
}

impl CbrCoefficients {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { p1: cfg.cbr_p1, p2: cfg.cbr_p2, p3: cfg.cbr_p3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrEstimate {
    pub cbr_u: f64,
    pub cbr: f64,
    pub coefficients: CbrCoefficients,
}

/// Channel load a vehicle at `distance_m` puts on the ego vehicle, `λ T PSR(d)`.
pub fn load_at(sc: &Scenario, distance_m: f64) -> f64 {
    sc.duty_cycle() * psr(sc, distance_m)
}

/// Sum of `duty * psr(|i| / beta)` over `i != 0`, symmetric about the ego
/// vehicle, stopping at the first index whose sensing ratio is below
/// [`LATTICE_PSR_CUTOFF`] (that index included).
pub fn lattice_load_sum(beta: f64, duty: f64, psr_at: impl Fn(f64) -> f64) -> f64 {
    let mut one_side = 0.0;
    for i in 1..=LATTICE_MAX_INDEX {
        let p = psr_at(i as f64 / beta);
        one_side += duty * p;
        if p < LATTICE_PSR_CUTOFF {
            break;
        }
    }
    2.0 * one_side
}

/// Collision-free upper bound of the channel busy ratio, clamped to [0, 1].
pub fn cbr_upper(sc: &Scenario) -> f64 {
    let raw = lattice_load_sum(sc.config().beta, sc.duty_cycle(), |d| psr(sc, d));
    if raw > 1.0 {
        log::warn!("offered channel load {raw:.3} exceeds 1; clamping CBR_u");
    }
    raw.clamp(0.0, 1.0)
}

pub fn cbr_from_upper(cbr_u: f64, c: &CbrCoefficients) -> f64 {
    (c.p1 * cbr_u * cbr_u + c.p2 * cbr_u + c.p3).clamp(0.0, 1.0)
}

pub fn estimate_cbr(sc: &Scenario) -> CbrEstimate {
    let coefficients = CbrCoefficients::from_config(sc.config());
    let cbr_u = cbr_upper(sc);
    CbrEstimate { cbr_u, cbr: cbr_from_upper(cbr_u, &coefficients), coefficients }
}

/// Least-squares quadratic through `(cbr_u, cbr_measured)` samples.
pub fn fit_compression(samples: &[(f64, f64)]) -> Result<CbrCoefficients> {
    if samples.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 samples to fit a quadratic, got {}",
            samples.len()
        )));
    }
    let a = DMatrix::from_fn(samples.len(), 3, |r, c| samples[r].0.powi(2 - c as i32));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Domain(format!("compression fit failed: {e}")))?;
    Ok(CbrCoefficients { p1: x[0], p2: x[1], p3: x[2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fer::FerTable;
    use proptest::prelude::*;

    fn rect(range: f64) -> impl Fn(f64) -> f64 {
        move |d| if d < range { 1.0 } else { 0.0 }
    }

    #[test]
    fn stock_polynomial_values() {
        let c = CbrCoefficients::default();
        assert!((cbr_from_upper(0.0, &c) - 0.003844).abs() < 1e-12);
        assert!((cbr_from_upper(0.5, &c) - 0.398319).abs() < 1e-12);
        assert!((cbr_from_upper(1.0, &c) - 0.668744).abs() < 1e-12);
    }

    #[test]
    fn polynomial_strictly_increasing_on_unit_interval() {
        let c = CbrCoefficients::default();
        let mut prev = -1.0;
        for i in 0..=1000 {
            let v = cbr_from_upper(i as f64 / 1000.0, &c);
            assert!(v > prev);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn compression_property(x in 0.0f64..=1.0) {
            let c = CbrCoefficients::default();
            let y = cbr_from_upper(x, &c);
            if x >= 0.06 {
                prop_assert!(y <= x);
            } else {
                prop_assert!((y - x).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn load_full_and_zero() {
        let sc = Scenario::new(ScenarioConfig::default(), FerTable::constant(0.0).unwrap()).unwrap();
        assert!((load_at(&sc, 0.0) - 3.52e-3).abs() < 1e-9);
        assert!(load_at(&sc, 1e6) < 1e-30);
        assert_eq!(lattice_load_sum(0.06, 0.0, rect(500.0)), 0.0);
    }

    #[test]
    fn rectangular_lattice_count() {
        // closed form 2 * 500 * 0.06 * 10 * 0.0005 = 0.30, one lattice point per side of slack
        let duty = 10.0 * 0.0005;
        let v = lattice_load_sum(0.06, duty, rect(500.0));
        assert!((v - 0.30).abs() <= 2.0 * duty + 1e-12, "{v}");
        let brute: f64 = (-20_000i64..=20_000)
            .filter(|&i| i != 0)
            .map(|i| duty * rect(500.0)((i.abs() as f64) / 0.06))
            .sum();
        assert!((v - brute).abs() < 1e-12);
    }

    #[test]
    fn doubling_density_doubles_bound() {
        let duty = 10.0 * 0.0005;
        let range = 510.0; // keep lattice points off the boundary
        let a = lattice_load_sum(0.05, duty, rect(range));
        let b = lattice_load_sum(0.10, duty, rect(range));
        // 2*25 vs 2*50 points
        assert!((a - 2.0 * 25.0 * duty).abs() < 1e-12);
        assert!((b - 2.0 * a).abs() < 1e-12);
        let c = lattice_load_sum(0.04, duty, rect(500.0 + 12.5));
        let d = lattice_load_sum(0.08, duty, rect(500.0 + 6.25));
        assert!((d - 2.0 * c).abs() < 1e-12, "{c} {d}");
    }

    #[test]
    fn upper_bound_matches_brute_force() {
        let sc = Scenario::new(ScenarioConfig::default(), FerTable::constant(0.0).unwrap()).unwrap();
        let beta = sc.config().beta;
        let brute: f64 = (1..=10_000).map(|i| 2.0 * load_at(&sc, i as f64 / beta)).sum();
        assert!((cbr_upper(&sc) - brute).abs() < 1e-4 * sc.duty_cycle() * 10.0);
    }

    #[test]
    fn fit_recovers_exact_quadratic() {
        let truth = CbrCoefficients { p1: -0.3, p2: 0.9, p3: 0.01 };
        let samples: Vec<_> = (0..10)
            .map(|i| {
                let u = i as f64 / 10.0;
                (u, truth.p1 * u * u + truth.p2 * u + truth.p3)
            })
            .collect();
        let fit = fit_compression(&samples).unwrap();
        assert!((fit.p1 - truth.p1).abs() < 1e-9);
        assert!((fit.p2 - truth.p2).abs() < 1e-9);
        assert!((fit.p3 - truth.p3).abs() < 1e-9);
        assert!(fit_compression(&samples[..2]).is_err());
    }
}
