//! Packet delivery ratio and the normalized error breakdown versus distance.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::load::estimate_cbr;
use crate::mac::{LatticeEvaluator, MacErrors};
use crate::propagation::{delta_pro, delta_sen};
use crate::scenario::Scenario;
use crate::table;

/// Raw error probabilities, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub sen: f64,
    pub rxb: f64,
    pub pro: f64,
    pub col: f64,
}

/// PDR and the share of packets lost to each error type, taken in the order
/// SEN, RXB, PRO, COL. The five values sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub pdr: f64,
    pub sen_hat: f64,
    pub rxb_hat: f64,
    pub pro_hat: f64,
    pub col_hat: f64,
}

impl Composition {
    pub fn hat_sum(&self) -> f64 {
        self.sen_hat + self.rxb_hat + self.pro_hat + self.col_hat
    }
}

pub fn compose_pdr(d: &Deltas) -> Result<Composition> {
    for (name, v) in [("sen", d.sen), ("rxb", d.rxb), ("pro", d.pro), ("col", d.col)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("delta_{name} = {v} outside [0, 1]")));
        }
    }
    let s1 = 1.0 - d.sen;
    let s2 = s1 * (1.0 - d.rxb);
    let s3 = s2 * (1.0 - d.pro);
    Ok(Composition {
        pdr: s3 * (1.0 - d.col),
        sen_hat: d.sen,
        rxb_hat: s1 * d.rxb,
        pro_hat: s2 * d.pro,
        col_hat: s3 * d.col,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    pub distance_m: f64,
    pub pdr: f64,
    pub dsen: f64,
    pub drxb: f64,
    pub dpro: f64,
    pub dcol: f64,
    pub dsen_hat: f64,
    pub drxb_hat: f64,
    pub dpro_hat: f64,
    pub dcol_hat: f64,
}

impl LinkPoint {
    fn new(distance_m: f64, d: &Deltas) -> Result<Self> {
        let c = compose_pdr(d)?;
        Ok(Self {
            distance_m,
            pdr: c.pdr,
            dsen: d.sen,
            drxb: d.rxb,
            dpro: d.pro,
            dcol: d.col,
            dsen_hat: c.sen_hat,
            drxb_hat: c.rxb_hat,
            dpro_hat: c.pro_hat,
            dcol_hat: c.col_hat,
        })
    }

    pub fn deltas(&self) -> Deltas {
        Deltas { sen: self.dsen, rxb: self.drxb, pro: self.dpro, col: self.dcol }
    }

    /// Linear interpolation between two points at `distance_m`.
    fn lerp(a: &LinkPoint, b: &LinkPoint, distance_m: f64) -> LinkPoint {
        let t = if b.distance_m == a.distance_m {
            0.0
        } else {
            (distance_m - a.distance_m) / (b.distance_m - a.distance_m)
        };
        let f = |x: f64, y: f64| x + t * (y - x);
        LinkPoint {
            distance_m,
            pdr: f(a.pdr, b.pdr),
            dsen: f(a.dsen, b.dsen),
            drxb: f(a.drxb, b.drxb),
            dpro: f(a.dpro, b.dpro),
            dcol: f(a.dcol, b.dcol),
            dsen_hat: f(a.dsen_hat, b.dsen_hat),
            drxb_hat: f(a.drxb_hat, b.drxb_hat),
            dpro_hat: f(a.dpro_hat, b.dpro_hat),
            dcol_hat: f(a.dcol_hat, b.dcol_hat),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCurve {
    pub fingerprint: String,
    pub cbr_u: f64,
    pub cbr: f64,
    pub points: Vec<LinkPoint>,
}

/// Which vehicles other than the transmitter take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interferers {
    Lattice,
    /// Nobody else transmits: RXB and COL vanish.
    None,
}

/// 0 to 1000 m in 10 m steps.
pub fn default_distances() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 10.0).collect()
}

pub fn sweep(sc: &Scenario, distances: &[f64]) -> Result<LinkCurve> {
    sweep_with(sc, distances, Interferers::Lattice)
}

pub fn sweep_with(sc: &Scenario, distances: &[f64], interferers: Interferers) -> Result<LinkCurve> {
    if distances.is_empty() {
        return Err(Error::Domain("empty distance grid".into()));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Domain(format!("bad distance {d}")));
    }
    let est = estimate_cbr(sc);
    let max_d = distances.iter().cloned().fold(0.0, f64::max);
    let evaluator = match interferers {
        Interferers::Lattice => Some(LatticeEvaluator::new(sc, est.cbr, max_d)?),
        Interferers::None => None,
    };
    let points = distances
        .par_iter()
        .map(|&d| {
            let mac = match &evaluator {
                Some(ev) => ev.evaluate(d)?,
                None => MacErrors { rxb: 0.0, col: 0.0 },
            };
            let deltas = Deltas { sen: delta_sen(sc, d), rxb: mac.rxb, pro: delta_pro(sc, d)?, col: mac.col };
            LinkPoint::new(d, &deltas)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkCurve { fingerprint: sc.fingerprint(), cbr_u: est.cbr_u, cbr: est.cbr, points })
}

impl LinkCurve {
    /// Curve values at `distance_m`: the stored point if there is one,
    /// otherwise linear interpolation between neighbours (clamped at the ends).
    pub fn at(&self, distance_m: f64) -> Option<LinkPoint> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if distance_m <= first.distance_m {
            return Some(LinkPoint { distance_m, ..*first });
        }
        if distance_m >= last.distance_m {
            return Some(LinkPoint { distance_m, ..*last });
        }
        let j = pts.partition_point(|p| p.distance_m < distance_m);
        if pts[j].distance_m == distance_m {
            return Some(pts[j]);
        }
        Some(LinkPoint::lerp(&pts[j - 1], &pts[j], distance_m))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        table::write_table(
            &self.points,
            &[
                ("fingerprint", self.fingerprint.clone()),
                ("cbr_u", format!("{}", self.cbr_u)),
                ("cbr", format!("{}", self.cbr)),
            ],
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        table::write_file(path, &self.to_csv_string()?)
    }

    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let (points, meta): (Vec<LinkPoint>, _) = table::read_table(text, origin)?;
        if points.windows(2).any(|w| w[1].distance_m <= w[0].distance_m) {
            return Err(Error::Csv {
                origin: origin.to_string(),
                message: "distances must be strictly increasing".into(),
            });
        }
        let num = |k: &str| -> Result<f64> {
            meta.get(k)
                .ok_or_else(|| Error::Csv { origin: origin.into(), message: format!("missing footer field {k}") })?
                .parse()
                .map_err(|_| Error::Csv { origin: origin.into(), message: format!("bad footer field {k}") })
        };
        Ok(Self {
            fingerprint: meta.get("fingerprint").cloned().unwrap_or_default(),
            cbr_u: num("cbr_u")?,
            cbr: num("cbr")?,
            points,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&table::read_file(path)?, &path.display().to_string())
    }
}
