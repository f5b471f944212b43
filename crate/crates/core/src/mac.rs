//! Receiver-busy (RXB) and collision (COL) errors caused by other vehicles on
//! the lattice.
//!
//! Every interferer `i` contributes a per-vehicle probability built from two
//! overlap mechanisms: hidden-terminal overlap (the transmitter cannot sense
//! `i`) and concurrent transmission (both backoffs expire in the same slot).
//! Per-vehicle terms combine as `1 - prod(1 - delta_i)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{grid_value, std_normal_cdf, DbGrid, DiscretePdf, TAIL_SIGMAS};
use crate::load::{LATTICE_MAX_INDEX, LATTICE_PSR_CUTOFF};
use crate::propagation::{psr, PowerDistribution, PowerPdf, TruncatedSnrPdf};
use crate::scenario::Scenario;

/// The truncated lattice walk stops once the receiver senses an interferer
/// with probability below this and its interference has vanished into the
/// noise floor.
pub const WALK_PSR_EPS: f64 = 1e-12;

/// Without shadowing, an interferer whose noise rise is below this (dB)
/// counts as absent from the noise floor.
pub const EXACT_RISE_EPS_DB: f64 = 1e-6;

/// Transmitter at `x = 0`, receiver at `x = d_tr`, interferers at `positions`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    d_tr: f64,
    positions: Vec<f64>,
}

impl LinkGeometry {
    pub fn new(d_tr: f64, positions: Vec<f64>) -> Result<Self> {
        if !(d_tr.is_finite() && d_tr >= 0.0) {
            return Err(Error::Domain(format!("d_tr must be a non-negative distance, got {d_tr}")));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("interferer positions must be finite".into()));
        }
        Ok(Self { d_tr, positions })
    }

    /// Lattice nodes `i / beta` for `0 < |i| <= max_index`.
    pub fn lattice(beta: f64, d_tr: f64, max_index: u64) -> Result<Self> {
        let k = max_index as i64;
        let positions = (-k..=k).filter(|&i| i != 0).map(|i| i as f64 / beta).collect();
        Self::new(d_tr, positions)
    }

    pub fn empty(d_tr: f64) -> Result<Self> {
        Self::new(d_tr, Vec::new())
    }

    pub fn d_tr(&self) -> f64 {
        self.d_tr
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `(d_ti, d_ir)` for every interferer.
    pub fn distances(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().map(move |&x| (x.abs(), (x - self.d_tr).abs()))
    }
}

/// Normalized lattice autocorrelation of `psr_at`:
/// `sum_j f(|j/beta + d|) f(|j/beta|) / sum_j f(|j/beta|)^2`, with `j`
/// running over the indices where `f(|j/beta|)` is not below
/// [`LATTICE_PSR_CUTOFF`] (plus the first one that is).
pub fn lattice_autocorrelation(beta: f64, d: f64, psr_at: impl Fn(f64) -> f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let mut weights = Vec::new();
    for j in 0..=LATTICE_MAX_INDEX {
        let w = psr_at(j as f64 / beta);
        weights.push(w);
        if w < LATTICE_PSR_CUTOFF {
            break;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = j as f64 / beta;
        if j == 0 {
            num += w * psr_at(d);
            den += w * w;
        } else {
            num += w * (psr_at((x + d).abs()) + psr_at((d - x).abs()));
            den += 2.0 * w * w;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// PSR autocorrelation at lag `d`; 1 at zero lag, 0 beyond twice the range.
pub fn r_psr(sc: &Scenario, d: f64) -> f64 {
    lattice_autocorrelation(sc.config().beta, d, |x| psr(sc, x))
}

/// `1 - cbr * r`: share of time two vehicles with correlation `r` both see
/// the channel idle.
pub fn omega_from(cbr: f64, r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&cbr) {
        return Err(Error::Domain(format!("CBR must lie in [0, 1), got {cbr}")));
    }
    Ok(1.0 - cbr * r)
}

pub fn omega(sc: &Scenario, d: f64, cbr: f64) -> Result<f64> {
    omega_from(cbr, r_psr(sc, d))
}

/// Hidden-terminal overlap probability `duty (1 - psr_ti) / omega`.
pub fn hidden_overlap(duty: f64, psr_ti: f64, omega: f64) -> f64 {
    (duty * (1.0 - psr_ti) / omega).clamp(0.0, 1.0)
}

/// Same-slot start probability `lambda tau psr_ti / omega`.
pub fn concurrent_start(lambda_tau: f64, psr_ti: f64, omega: f64) -> f64 {
    (lambda_tau * psr_ti / omega).clamp(0.0, 1.0)
}

pub fn p_sim_ht(sc: &Scenario, d_ti: f64, cbr: f64) -> Result<f64> {
    Ok(LagTerms::at(sc, d_ti, cbr)?.p_ht)
}

pub fn p_sim_ct(sc: &Scenario, d_ti: f64, cbr: f64) -> Result<f64> {
    Ok(LagTerms::at(sc, d_ti, cbr)?.p_ct)
}

/// Everything about an interferer that depends only on its distance to the
/// transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagTerms {
    pub psr: f64,
    pub r_psr: f64,
    pub omega: f64,
    pub p_ht: f64,
    pub p_ct: f64,
}

impl LagTerms {
    pub fn at(sc: &Scenario, d_ti: f64, cbr: f64) -> Result<Self> {
        let cfg = sc.config();
        let p = psr(sc, d_ti);
        let r = r_psr(sc, d_ti);
        let omega = omega_from(cbr, r)?;
        Ok(Self {
            psr: p,
            r_psr: r,
            omega,
            p_ht: hidden_overlap(sc.duty_cycle(), p, omega),
            p_ct: concurrent_start(cfg.lambda * cfg.slot_time, p, omega),
        })
    }
}

/// Per-interferer RXB term. `closer` is `d_ir < d_tr`.
pub fn rxb_term(lag: &LagTerms, psr_ir: f64, closer: bool) -> f64 {
    let ct = if closer { lag.p_ct } else { 0.0 };
    ((lag.p_ht + ct) * psr_ir).clamp(0.0, 1.0)
}

/// Per-interferer COL term with arrival-order weights `w`.
pub fn col_term(lag: &LagTerms, w: (f64, f64), p_int: f64, psr_ir: f64, closer: bool) -> f64 {
    let ht = w.0 * lag.p_ht * p_int + w.1 * lag.p_ht * p_int * (1.0 - psr_ir);
    let ct = if closer { 0.0 } else { lag.p_ct * p_int };
    (ht + ct).clamp(0.0, 1.0)
}

/// `1 - prod(1 - t)` over the per-vehicle terms.
pub fn combine(terms: impl IntoIterator<Item = f64>) -> f64 {
    let survive: f64 = terms.into_iter().map(|t| 1.0 - t.clamp(0.0, 1.0)).product();
    (1.0 - survive).clamp(0.0, 1.0)
}

/// `max(0, (p_sinr - d_pro) / (1 - d_pro))`; 0 when `d_pro = 1`.
pub fn normalize_interference(p_sinr: f64, d_pro: f64) -> f64 {
    if d_pro >= 1.0 {
        return 0.0;
    }
    ((p_sinr - d_pro) / (1.0 - d_pro)).clamp(0.0, 1.0)
}

fn col_weights(sc: &Scenario) -> (f64, f64) {
    (sc.config().col_weight_first, sc.config().col_weight_second)
}

pub fn delta_rxb(sc: &Scenario, geom: &LinkGeometry, cbr: f64) -> Result<f64> {
    let mut terms = Vec::with_capacity(geom.len());
    for (d_ti, d_ir) in geom.distances() {
        let lag = LagTerms::at(sc, d_ti, cbr)?;
        terms.push(rxb_term(&lag, psr(sc, d_ir), d_ir < geom.d_tr()));
    }
    Ok(combine(terms))
}

pub fn delta_col(sc: &Scenario, geom: &LinkGeometry, cbr: f64) -> Result<f64> {
    let d_tr = geom.d_tr();
    let w = col_weights(sc);
    let mut terms = Vec::with_capacity(geom.len());
    for (d_ti, d_ir) in geom.distances() {
        let lag = LagTerms::at(sc, d_ti, cbr)?;
        let pi = p_int(sc, d_tr, d_ir)?;
        terms.push(col_term(&lag, w, pi, psr(sc, d_ir), d_ir < d_tr));
    }
    Ok(combine(terms))
}

/// Interference-plus-noise power from one interferer, stored as the rise
/// above the noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferencePdf {
    noise_dbm: f64,
    rise: PowerPdf,
}

/// `10 log10(1 + 10^((p - n0) / 10))`, the noise-floor rise in dB.
pub fn noise_rise_db(power_dbm: f64, noise_dbm: f64) -> f64 {
    10.0 * (10f64.powf((power_dbm - noise_dbm) / 10.0)).ln_1p() / std::f64::consts::LN_10
}

impl InterferencePdf {
    pub fn at(sc: &Scenario, d_ir: f64) -> Result<Self> {
        let noise = sc.config().n0;
        let pd = PowerDistribution::at(sc, d_ir);
        let rise = if pd.sigma == 0.0 {
            PowerPdf::Exact(noise_rise_db(pd.mean_dbm, noise))
        } else {
            PowerPdf::Grid(rise_pdf(sc.grid(), pd.mean_dbm, pd.sigma, noise)?)
        };
        Ok(Self { noise_dbm: noise, rise })
    }

    /// Rise above the noise floor, dB.
    pub fn rise(&self) -> &PowerPdf {
        &self.rise
    }

    /// Interference-plus-noise power, dBm.
    pub fn power(&self) -> PowerPdf {
        match &self.rise {
            PowerPdf::Exact(r) => PowerPdf::Exact(self.noise_dbm + r),
            PowerPdf::Grid(pdf) => PowerPdf::Grid(pdf.shifted(self.noise_dbm)),
        }
    }

    /// True when this interferer cannot move the noise floor.
    pub fn is_noise_only(&self) -> bool {
        match &self.rise {
            PowerPdf::Exact(r) => *r < EXACT_RISE_EPS_DB,
            PowerPdf::Grid(pdf) => pdf.is_point_mass() && pdf.first_index() == 0,
        }
    }
}

/// The grid Gaussian `N(mean, sigma)` pushed through [`noise_rise_db`].
///
/// Same result as mapping [`DbGrid::gaussian`] bin by bin, but every bin
/// that lands on the noise floor is folded into one CDF difference.
fn rise_pdf(grid: &DbGrid, mean: f64, sigma: f64, noise: f64) -> Result<DiscretePdf> {
    let h = grid.step;
    let first = grid.index_of(mean - TAIL_SIGMAS * sigma);
    let last = grid.index_of(mean + TAIL_SIGMAS * sigma);
    let cdf = |x: f64| std_normal_cdf((x - mean) / sigma);
    let bottom = cdf(grid.value(first) - h / 2.0);
    let total = cdf(grid.value(last) + h / 2.0) - bottom;
    grid.check_covers(grid.value(first) - h / 2.0, grid.value(last) + h / 2.0)?;

    // Walk down from the top bin until the rise rounds to zero.
    let mut targets: Vec<(i64, f64)> = Vec::new();
    let mut upper_cdf = cdf(grid.value(last) + h / 2.0);
    let mut k = last;
    while k >= first {
        let center = grid.value(k);
        let t = grid.index_of(noise_rise_db(center, noise));
        if t == 0 {
            break;
        }
        let lower_cdf = cdf(center - h / 2.0);
        targets.push((t, upper_cdf - lower_cdf));
        upper_cdf = lower_cdf;
        k -= 1;
    }
    let floor_mass = if k >= first { upper_cdf - bottom } else { 0.0 };

    let top = targets.first().map_or(0, |t| t.0);
    let mut mass = vec![0.0; top as usize + 1];
    mass[0] = floor_mass;
    for (t, m) in targets {
        mass[t as usize] += m;
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(DiscretePdf::from_masses(h, 0.0, 0, mass))
}

pub fn interference_pdf(sc: &Scenario, d_ir: f64) -> Result<InterferencePdf> {
    InterferencePdf::at(sc, d_ir)
}

/// SINR distribution of a sensed packet: the truncated received power minus
/// the interference-plus-noise power. `None` if no packet is sensed.
pub fn sinr_pdf(sc: &Scenario, d_tr: f64, d_ir: f64) -> Result<Option<PowerPdf>> {
    let Some(rx) = TruncatedSnrPdf::at(sc, d_tr)? else {
        return Ok(None);
    };
    sinr_from(sc, rx.power(), &InterferencePdf::at(sc, d_ir)?).map(Some)
}

fn sinr_from(sc: &Scenario, rx: &PowerPdf, interf: &InterferencePdf) -> Result<PowerPdf> {
    let noise = sc.config().n0;
    Ok(match (rx, &interf.rise) {
        (PowerPdf::Exact(p), PowerPdf::Exact(r)) => PowerPdf::Exact((p - noise) - r),
        (PowerPdf::Grid(p), PowerPdf::Grid(r)) => {
            PowerPdf::Grid(sc.grid().difference(&p.shifted(-noise), r)?)
        }
        (PowerPdf::Exact(p), PowerPdf::Grid(r)) => {
            let g = sc.grid().point(0.0)?.shifted(p - noise);
            PowerPdf::Grid(sc.grid().difference(&g, r)?)
        }
        (PowerPdf::Grid(p), PowerPdf::Exact(r)) => PowerPdf::Grid(p.shifted(-noise - r)),
    })
}

/// Probability that a sensed packet at `d_tr` fails on SINR with one
/// interferer at `d_ir` (noise included).
pub fn p_sinr(sc: &Scenario, d_tr: f64, d_ir: f64) -> Result<f64> {
    Ok(match sinr_pdf(sc, d_tr, d_ir)? {
        None => 0.0,
        Some(pdf) => pdf.expect(|s| sc.fer_at_snr(s)).clamp(0.0, 1.0),
    })
}

/// Share of SINR failures attributable to the interferer alone.
pub fn p_int(sc: &Scenario, d_tr: f64, d_ir: f64) -> Result<f64> {
    let d_pro = crate::propagation::delta_pro(sc, d_tr)?;
    Ok(normalize_interference(p_sinr(sc, d_tr, d_ir)?, d_pro))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacErrors {
    pub rxb: f64,
    pub col: f64,
}

/// Evaluates RXB and COL on the infinite lattice, cutting the walk once
/// further interferers can no longer matter.
///
/// Distance-to-transmitter terms are tabulated once per lattice index. For
/// the SINR sum the receiver-side work is folded into a table
/// `g(k) = sum_r m_r FER(snr_r - k step)` over noise-rise bins, so each
/// interferer costs one dot product.
#[derive(Debug)]
pub struct LatticeEvaluator<'a> {
    sc: &'a Scenario,
    cbr: f64,
    lags: Vec<LagTerms>,
}

impl<'a> LatticeEvaluator<'a> {
    /// Tabulates lag terms for receivers up to `max_distance` away.
    pub fn new(sc: &'a Scenario, cbr: f64, max_distance: f64) -> Result<Self> {
        omega_from(cbr, 0.0)?;
        let beta = sc.config().beta;
        let reach = walk_reach(sc)?;
        let top = (((max_distance.max(0.0) + reach) * beta).ceil() as u64 + 2).min(LATTICE_MAX_INDEX);
        let lags = (0..=top)
            .into_par_iter()
            .map(|i| LagTerms::at(sc, i as f64 / beta, cbr))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sc, cbr, lags })
    }

    pub fn cbr(&self) -> f64 {
        self.cbr
    }

    fn lag(&self, index: i64) -> Result<LagTerms> {
        let k = index.unsigned_abs() as usize;
        match self.lags.get(k) {
            Some(l) => Ok(*l),
            None => LagTerms::at(self.sc, k as f64 / self.sc.config().beta, self.cbr),
        }
    }

    pub fn evaluate(&self, d_tr: f64) -> Result<MacErrors> {
        let sc = self.sc;
        let beta = sc.config().beta;
        let rx = TruncatedSnrPdf::at(sc, d_tr)?;
        let mut sinr = rx.as_ref().map(|r| SinrTable::new(sc, r.power()));
        let w = col_weights(sc);

        let mut survive_rxb = 1.0;
        let mut survive_col = 1.0;
        let mut visit = |i: i64| -> Result<bool> {
            let x = i as f64 / beta;
            let d_ir = (x - d_tr).abs();
            let closer = d_ir < d_tr;
            let lag = self.lag(i)?;
            let psr_ir = psr(sc, d_ir);
            let interf = InterferencePdf::at(sc, d_ir)?;
            let quiet = interf.is_noise_only();
            survive_rxb *= 1.0 - rxb_term(&lag, psr_ir, closer);
            if let Some(table) = sinr.as_mut() {
                if !quiet {
                    let pi = table.p_int(sc, &interf)?;
                    survive_col *= 1.0 - col_term(&lag, w, pi, psr_ir, closer);
                }
            }
            Ok(psr_ir < WALK_PSR_EPS && quiet)
        };

        // Walk outward from the receiver on both sides, skipping the transmitter.
        let split = (d_tr * beta).floor() as i64;
        let cap = LATTICE_MAX_INDEX as i64;
        let mut i = split + 1;
        while i <= cap {
            if i != 0 && visit(i)? {
                break;
            }
            i += 1;
        }
        let mut i = split;
        while i >= -cap {
            if i != 0 && visit(i)? {
                break;
            }
            i -= 1;
        }
        Ok(MacErrors {
            rxb: (1.0 - survive_rxb).clamp(0.0, 1.0),
            col: (1.0 - survive_col).clamp(0.0, 1.0),
        })
    }
}

/// Distance at which an interferer stops mattering: undetectable at the
/// [`WALK_PSR_EPS`] level and unable to raise the noise floor.
fn walk_reach(sc: &Scenario) -> Result<f64> {
    let step = 1.0 / sc.config().beta;
    let mut d = 0.0;
    for _ in 0..=LATTICE_MAX_INDEX {
        if psr(sc, d) < WALK_PSR_EPS && InterferencePdf::at(sc, d)?.is_noise_only() {
            return Ok(d);
        }
        d += step;
    }
    Ok(d)
}

/// FER expectations for one receiver PDF against arbitrary noise rises.
struct SinrTable {
    d_pro: f64,
    rx: PowerPdf,
    /// `g[k]` for grid receivers, filled on demand.
    g: Vec<f64>,
}

impl SinrTable {
    fn new(sc: &Scenario, rx: &PowerPdf) -> Self {
        let noise = sc.config().n0;
        let d_pro = rx.expect(|p| sc.fer_at_snr(p - noise)).clamp(0.0, 1.0);
        Self { d_pro, rx: rx.clone(), g: Vec::new() }
    }

    fn g_at(&mut self, sc: &Scenario, k: i64) -> f64 {
        let PowerPdf::Grid(rx) = &self.rx else { unreachable!() };
        let noise = sc.config().n0;
        while self.g.len() as i64 <= k {
            let shift = self.g.len() as i64;
            let v: f64 = (rx.first_index()..=rx.last_index())
                .map(|kr| {
                    let m = rx.mass_at(kr);
                    if m == 0.0 {
                        0.0
                    } else {
                        m * sc.fer_at_snr(grid_value(-noise, kr - shift, rx.step()))
                    }
                })
                .sum();
            self.g.push(v);
        }
        self.g[k as usize]
    }

    fn p_sinr(&mut self, sc: &Scenario, interf: &InterferencePdf) -> Result<f64> {
        let noise = sc.config().n0;
        let v = match (&self.rx, &interf.rise) {
            (PowerPdf::Exact(p), PowerPdf::Exact(r)) => sc.fer_at_snr((p - noise) - r),
            (PowerPdf::Grid(_), PowerPdf::Grid(rise)) => {
                let mut acc = 0.0;
                for k in rise.first_index()..=rise.last_index() {
                    let m = rise.mass_at(k);
                    if m != 0.0 {
                        acc += m * self.g_at(sc, k);
                    }
                }
                acc
            }
            (rx, _) => sinr_from(sc, rx, interf)?.expect(|s| sc.fer_at_snr(s)),
        };
        Ok(v.clamp(0.0, 1.0))
    }

    fn p_int(&mut self, sc: &Scenario, interf: &InterferencePdf) -> Result<f64> {
        let p = self.p_sinr(sc, interf)?;
        Ok(normalize_interference(p, self.d_pro))
    }
}

/// SINR failure probability via the explicit cross-correlation, for checking
/// the tabulated route.
pub fn p_sinr_reference(sc: &Scenario, rx: &DiscretePdf, interf: &InterferencePdf) -> Result<f64> {
    Ok(sinr_from(sc, &PowerPdf::Grid(rx.clone()), interf)?
        .expect(|s| sc.fer_at_snr(s))
        .clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::config::ScenarioConfig;
    use crate::fer::FerTable;
    use crate::load::estimate_cbr;
    use crate::pathloss::PathlossModel;
    use crate::propagation::delta_pro;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn fer18() -> FerTable {
        FerTable::new((0..=80).map(|i| {
            let x = -5.0 + 0.5 * i as f64;
            (x, 1.0 / (1.0 + 10f64.powf((x - 7.0) / 2.5)))
        }).collect())
        .unwrap()
    }

    fn baseline() -> Scenario {
        Scenario::new(ScenarioConfig::default(), fer18()).unwrap()
    }

    /// PSR is 1 below `range` and 0 beyond (no shadowing, flat then infinite loss).
    #[derive(Debug)]
    struct Cliff(f64);
    impl PathlossModel for Cliff {
        fn pathloss_db(&self, d: f64) -> f64 {
            if d < self.0 { 60.0 } else { 400.0 }
        }
        fn min_distance(&self) -> f64 {
            1.0
        }
    }

    fn cliff(range: f64, beta: f64) -> Scenario {
        let cfg = ScenarioConfig { beta, shadowing_enabled: false, ..Default::default() };
        Scenario::with_pathloss(cfg, Arc::new(Cliff(range)), fer18()).unwrap()
    }

    #[test]
    fn r_psr_boundaries() {
        let sc = baseline();
        assert_eq!(r_psr(&sc, 0.0), 1.0);
        assert!(r_psr(&sc, 5000.0) < 1e-3);
        let mut prev = 1.0;
        for d in (0..60).map(|i| i as f64 * 25.0) {
            let r = r_psr(&sc, d);
            assert!((0.0..=1.0).contains(&r));
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn r_psr_triangular_for_rectangular_psr() {
        let range = 500.0;
        let beta = 0.06;
        let sc = cliff(range, beta);
        let rect = |d: f64| if d < range { 1.0 } else { 0.0 };
        for d in [0.0, range / 2.0, range, 2.0 * range] {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in -2000i64..=2000 {
                let x = j as f64 / beta;
                num += rect((x + d).abs()) * rect(x.abs());
                den += rect(x.abs()) * rect(x.abs());
            }
            let brute = num / den;
            let got = r_psr(&sc, d);
            assert!((got - brute).abs() < 1e-12, "{d}: {got} vs {brute}");
            let tri = (1.0 - d / (2.0 * range)).max(0.0);
            assert!((got - tri).abs() < 0.04, "{d}: {got} vs {tri}");
        }
    }

    #[test]
    fn omega_cases() {
        let sc = baseline();
        assert_eq!(omega(&sc, 300.0, 0.0).unwrap(), 1.0);
        assert_eq!(omega(&sc, 0.0, 0.3).unwrap(), 0.7);
        assert!((omega(&sc, 1e5, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(omega(&sc, 10.0, 1.0).is_err());
        assert!(omega_from(-0.1, 0.5).is_err());
    }

    #[test]
    fn overlap_kernels() {
        assert_eq!(hidden_overlap(3.52e-3, 1.0, 0.8), 0.0);
        assert_eq!(hidden_overlap(3.52e-3, 0.0, 1.0), 3.52e-3);
        let o = omega_from(0.2, 0.5).unwrap();
        assert!((hidden_overlap(10.0 * 3.52e-4, 0.5, o) - 1.955_555_6e-3).abs() < 1e-9);
        assert_eq!(concurrent_start(1.3e-4, 0.0, 0.9), 0.0);
        assert!((concurrent_start(10.0 * 13e-6, 1.0, 1.0) - 1.3e-4).abs() < 1e-18);
    }

    #[test]
    fn ct_below_ht_when_ratio_holds() {
        let (lambda, tau, t) = (10.0, 13e-6, 352e-6);
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let o = 0.9;
            let ht = hidden_overlap(lambda * t, p, o);
            let ct = concurrent_start(lambda * tau, p, o);
            if p * tau <= (1.0 - p) * t {
                assert!(ct <= ht + 1e-18);
            }
        }
    }

    #[test]
    fn scenario_level_overlaps() {
        let sc = baseline();
        assert!(p_sim_ht(&sc, 1.0, 0.2).unwrap() < 1e-9);
        assert!((p_sim_ht(&sc, 1e5, 0.0).unwrap() - sc.duty_cycle()).abs() < 1e-12);
        assert!(p_sim_ct(&sc, 1e5, 0.0).unwrap() < 1e-30);
        assert!((p_sim_ct(&sc, 1.0, 0.0).unwrap() - 1.3e-4).abs() < 1e-12);
    }

    fn lag(p_ht: f64, p_ct: f64) -> LagTerms {
        LagTerms { psr: 0.0, r_psr: 0.0, omega: 1.0, p_ht, p_ct }
    }

    #[test]
    fn rxb_product_rule() {
        assert_eq!(rxb_term(&lag(0.3, 0.1), 0.0, true), 0.0);
        let t = rxb_term(&lag(0.1, 0.0), 1.0, false);
        assert!((combine([t, t]) - 0.19).abs() < 1e-15);
        // CT only counts for interferers closer to the receiver
        assert!((rxb_term(&lag(0.1, 0.05), 1.0, true) - 0.15).abs() < 1e-15);
        assert!((rxb_term(&lag(0.1, 0.05), 1.0, false) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn col_weights_and_gating() {
        let q = 0.01;
        assert_eq!(col_term(&lag(q, 0.2), (0.5, 0.5), 0.0, 0.0, false), 0.0);
        assert!((col_term(&lag(q, 0.0), (0.5, 0.5), 1.0, 0.0, true) - q).abs() < 1e-18);
        assert!((col_term(&lag(q, 0.0), (1.0, 1.0), 1.0, 0.0, true) - 2.0 * q).abs() < 1e-18);
        // a fully detected hidden interferer only collides when it comes second
        assert!((col_term(&lag(q, 0.0), (1.0, 1.0), 1.0, 1.0, true) - q).abs() < 1e-18);
        assert!((col_term(&lag(0.0, 0.2), (1.0, 1.0), 0.5, 1.0, false) - 0.1).abs() < 1e-18);
        assert_eq!(col_term(&lag(0.0, 0.2), (1.0, 1.0), 0.5, 1.0, true), 0.0);
    }

    #[test]
    fn ct_branches_partition() {
        let l = lag(0.0, 0.3);
        for closer in [true, false] {
            let r = rxb_term(&l, 1.0, closer);
            let c = col_term(&l, (1.0, 1.0), 1.0, 1.0, closer);
            assert!(r == 0.0 || c == 0.0);
            assert!(r + c > 0.0);
        }
    }

    #[test]
    fn p_int_normalization() {
        assert_eq!(normalize_interference(0.2, 0.2), 0.0);
        assert_eq!(normalize_interference(1.0, 0.3), 1.0);
        assert!((normalize_interference(0.5, 0.2) - 0.375).abs() < 1e-15);
        assert_eq!(normalize_interference(0.1, 0.2), 0.0);
        assert_eq!(normalize_interference(0.9, 1.0), 0.0);
    }

    #[test]
    fn empty_geometry_is_lossless() {
        let sc = baseline();
        let g = LinkGeometry::empty(200.0).unwrap();
        assert_eq!(delta_rxb(&sc, &g, 0.2).unwrap(), 0.0);
        assert_eq!(delta_col(&sc, &g, 0.2).unwrap(), 0.0);
        assert!(LinkGeometry::new(-1.0, vec![]).is_err());
    }

    #[test]
    fn interference_pdf_limits() {
        let cfg = ScenarioConfig { shadowing_enabled: false, ..Default::default() };
        let sc = Scenario::new(cfg, fer18()).unwrap();
        let near = interference_pdf(&sc, 20.0).unwrap();
        let PowerPdf::Exact(p) = near.power() else { panic!() };
        assert!((p - sc.mean_rx_power(20.0)).abs() < sc.grid().step);
        let far = interference_pdf(&sc, 50_000.0).unwrap();
        let PowerPdf::Exact(p) = far.power() else { panic!() };
        assert!((p - sc.config().n0).abs() < 1e-6);
        assert!(far.is_noise_only());
    }

    #[test]
    fn interference_pdf_matches_sampling() {
        let sc = baseline();
        let d = 350.0;
        let pdf = interference_pdf(&sc, d).unwrap();
        let PowerPdf::Grid(grid) = pdf.power() else { panic!() };
        assert!((grid.total_mass() - 1.0).abs() < 1e-6);
        assert!(grid.support().0 >= sc.config().n0 - 1e-9);

        let mu = sc.mean_rx_power(d);
        let n0 = sc.config().n0;
        let normal = Normal::new(mu, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = normal.sample(&mut rng);
                n0 + noise_rise_db(x, n0)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((grid.mean() - mean).abs() < 0.05, "{} {}", grid.mean(), mean);
        assert!((grid.variance().sqrt() - sd).abs() < 0.05);
    }

    #[test]
    fn folded_rise_matches_binwise_map() {
        let sc = baseline();
        let n0 = sc.config().n0;
        for d in [2.0, 150.0, 700.0, 2500.0, 9000.0] {
            let mu = sc.mean_rx_power(d);
            let g = sc.grid().gaussian(mu, 3.0).unwrap();
            let slow = sc.grid().map(&g, 0.0, |x| noise_rise_db(x, n0)).unwrap();
            let fast = rise_pdf(sc.grid(), mu, 3.0, n0).unwrap();
            assert_eq!(fast.first_index(), slow.first_index(), "{d}");
            assert_eq!(fast.last_index(), slow.last_index(), "{d}");
            for k in slow.first_index()..=slow.last_index() {
                assert!((fast.mass_at(k) - slow.mass_at(k)).abs() < 1e-12, "{d} {k}");
            }
        }
    }

    #[test]
    fn p_sinr_point_masses() {
        let cfg = ScenarioConfig { shadowing_enabled: false, ..Default::default() };
        let sc = Scenario::new(cfg, fer18()).unwrap();
        let (d_tr, d_ir) = (150.0, 260.0);
        let pr = sc.mean_rx_power(d_tr);
        let pi = sc.config().n0 + noise_rise_db(sc.mean_rx_power(d_ir), sc.config().n0);
        let want = sc.fer_at_snr(pr - pi);
        assert!((p_sinr(&sc, d_tr, d_ir).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn interference_free_limit_recovers_pro() {
        let sc = baseline();
        for d in [50.0, 300.0, 450.0] {
            let a = p_sinr(&sc, d, 1e6).unwrap();
            let b = delta_pro(&sc, d).unwrap();
            assert!((a - b).abs() < 1e-3, "{a} {b}");
            assert_eq!(p_int(&sc, d, 1e6).unwrap(), 0.0);
        }
    }

    #[test]
    fn untruncated_sinr_is_gaussian_difference() {
        let cfg = ScenarioConfig { p_sen: -400.0, grid_lo_db: -500.0, ..Default::default() };
        let sc = Scenario::new(cfg, fer18()).unwrap();
        let (d_tr, d_ir) = (100.0, 120.0);
        let Some(PowerPdf::Grid(s)) = sinr_pdf(&sc, d_tr, d_ir).unwrap() else { panic!() };
        let mu_r = sc.mean_rx_power(d_tr);
        let mu_i = sc.mean_rx_power(d_ir);
        let n0 = sc.config().n0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nr = Normal::new(mu_r, 3.0).unwrap();
        let ni = Normal::new(mu_i, 3.0).unwrap();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let r: f64 = nr.sample(&mut rng);
            let i: f64 = ni.sample(&mut rng);
            acc += r - (n0 + noise_rise_db(i, n0));
        }
        let oracle = acc / n as f64;
        assert!((s.mean() - oracle).abs() < 0.05, "{} vs {oracle}", s.mean());
        // the interferer is ~40 dB above noise so the rise is the power itself
        assert!((s.mean() - (mu_r - mu_i)).abs() < 0.05);
        assert!((s.variance() / 18.0 - 1.0).abs() < 0.02, "{}", s.variance());
    }

    #[test]
    fn g_table_matches_cross_correlation() {
        let sc = baseline();
        for (d_tr, d_ir) in [(100.0, 40.0), (380.0, 250.0), (200.0, 900.0), (10.0, 3.0)] {
            let Some(rx) = TruncatedSnrPdf::at(&sc, d_tr).unwrap() else { panic!() };
            let PowerPdf::Grid(rx_pdf) = rx.power().clone() else { panic!() };
            let interf = InterferencePdf::at(&sc, d_ir).unwrap();
            let mut table = SinrTable::new(&sc, rx.power());
            let fast = table.p_sinr(&sc, &interf).unwrap();
            let slow = p_sinr_reference(&sc, &rx_pdf, &interf).unwrap();
            assert!((fast - slow).abs() < 1e-12, "{fast} {slow}");
            assert!((table.d_pro - delta_pro(&sc, d_tr).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn lattice_walk_matches_brute_force() {
        let sc = baseline();
        let cbr = estimate_cbr(&sc).cbr;
        let ev = LatticeEvaluator::new(&sc, cbr, 600.0).unwrap();
        let k = (12_000.0 * sc.config().beta) as u64;
        for d in [5.0, 230.0, 510.0] {
            let geom = LinkGeometry::lattice(sc.config().beta, d, k).unwrap();
            let got = ev.evaluate(d).unwrap();
            let rxb = delta_rxb(&sc, &geom, cbr).unwrap();
            let col = delta_col(&sc, &geom, cbr).unwrap();
            assert!((got.rxb - rxb).abs() < 1e-6, "{d}: {} {rxb}", got.rxb);
            assert!((got.col - col).abs() < 1e-6, "{d}: {} {col}", got.col);
        }
    }
}
