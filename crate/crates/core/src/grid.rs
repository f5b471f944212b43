//! Probability densities discretized on a uniform dB lattice.
//!
//! Grid point `k` sits at `offset + k * step` dB and owns the bin of width
//! `step` centred on it. The offset is 0 for absolute powers; derived
//! quantities (noise rise above a floor, SINR) carry the floor as offset so
//! that it lands exactly on a grid point. A [`DiscretePdf`] stores the
//! probability mass of each bin over a contiguous run of indices, so the
//! density is `mass / step` and "sum times step" of the density is the plain
//! mass sum.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Gaussian supports are cut at `mean ± TAIL_SIGMAS * sigma`.
pub const TAIL_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for DbGrid {
    fn default() -> Self {
        Self { lo: -250.0, hi: 150.0, step: 0.1 }
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl DbGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && lo < hi) {
            return Err(Error::Config(format!("bad grid lo={lo} hi={hi} step={step}")));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn index_of(&self, value: f64) -> i64 {
        (value / self.step).round() as i64
    }

    pub fn value(&self, index: i64) -> f64 {
        index as f64 * self.step
    }

    pub fn check_covers(&self, lo: f64, hi: f64) -> Result<()> {
        if lo < self.lo || hi > self.hi {
            Err(Error::GridCoverage {
                lo: self.lo,
                hi: self.hi,
                need_lo: lo,
                need_hi: hi,
            })
        } else {
            Ok(())
        }
    }

    fn check_pdf(&self, pdf: &DiscretePdf) -> Result<()> {
        let (a, b) = pdf.support();
        self.check_covers(a - self.step / 2.0, b + self.step / 2.0)
    }

    /// All mass in the bin nearest to `value`.
    pub fn point(&self, value: f64) -> Result<DiscretePdf> {
        let pdf = DiscretePdf {
            step: self.step,
            offset: 0.0,
            first: self.index_of(value),
            mass: vec![1.0],
        };
        self.check_pdf(&pdf)?;
        Ok(pdf)
    }

    /// Gaussian with the given mean and deviation (dB), cut at ±6σ and
    /// renormalized. `sigma == 0` gives a point mass.
    pub fn gaussian(&self, mean: f64, sigma: f64) -> Result<DiscretePdf> {
        self.truncated_gaussian(mean, sigma, f64::NEG_INFINITY)?
            .ok_or_else(|| Error::Domain("empty Gaussian".into()))
    }

    /// Gaussian conditioned on exceeding `floor`: zero mass in every bin that
    /// lies entirely below `floor`, the straddling bin keeps only its upper
    /// part, then the whole is renormalized. No mass sits on a grid value
    /// below `floor`: a straddling bin whose centre is below it hands its
    /// share to the next bin. `None` when no mass survives.
    pub fn truncated_gaussian(
        &self,
        mean: f64,
        sigma: f64,
        floor: f64,
    ) -> Result<Option<DiscretePdf>> {
        if sigma == 0.0 {
            return if mean > floor {
                self.point(mean).map(Some)
            } else {
                Ok(None)
            };
        }
        let half = self.step / 2.0;
        let first = self.index_of(mean - TAIL_SIGMAS * sigma);
        let last = self.index_of(mean + TAIL_SIGMAS * sigma);
        let cdf = |x: f64| std_normal_cdf((x - mean) / sigma);
        let mut mass = Vec::with_capacity((last - first + 1) as usize);
        let mut prev: Option<f64> = None;
        let mut carry = 0.0;
        for k in first..=last {
            let center = self.value(k);
            let upper = center + half;
            if upper <= floor {
                mass.push(0.0);
                continue;
            }
            let lower = center - half;
            let lo_cdf = match prev {
                Some(c) if lower >= floor => c,
                _ => cdf(lower.max(floor)),
            };
            let up_cdf = cdf(upper);
            prev = Some(up_cdf);
            if center < floor {
                carry = up_cdf - lo_cdf;
                mass.push(0.0);
            } else {
                mass.push(up_cdf - lo_cdf + carry);
                carry = 0.0;
            }
        }
        if carry > 0.0 {
            // the floor sits in the topmost bin
            mass.push(carry);
        }
        let mut pdf = DiscretePdf { step: self.step, offset: 0.0, first, mass };
        pdf.trim();
        let total = pdf.total_mass();
        if pdf.mass.is_empty() || total <= 0.0 {
            return Ok(None);
        }
        pdf.scale(1.0 / total);
        self.check_pdf(&pdf)?;
        Ok(Some(pdf))
    }

    /// Pushes `pdf` through `f`, assigning each bin's mass to the point of the
    /// grid shifted by `offset` nearest to `f(value)`.
    pub fn map(
        &self,
        pdf: &DiscretePdf,
        offset: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<DiscretePdf> {
        let targets: Vec<i64> = pdf
            .iter()
            .map(|(x, _)| self.index_of(f(x) - offset))
            .collect();
        let lo = *targets.iter().min().expect("non-empty pdf");
        let hi = *targets.iter().max().expect("non-empty pdf");
        let mut mass = vec![0.0; (hi - lo + 1) as usize];
        for (t, m) in targets.iter().zip(&pdf.mass) {
            mass[(t - lo) as usize] += m;
        }
        let mut out = DiscretePdf { step: self.step, offset, first: lo, mass };
        out.trim();
        self.check_pdf(&out)?;
        Ok(out)
    }

    /// Distribution of `X - Y` for independent `X ~ a`, `Y ~ b`: the
    /// cross-correlation of the two mass vectors.
    pub fn difference(&self, a: &DiscretePdf, b: &DiscretePdf) -> Result<DiscretePdf> {
        let out = cross_correlate(a, b);
        self.check_pdf(&out)?;
        Ok(out)
    }
}

/// Probability masses on consecutive grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePdf {
    step: f64,
    offset: f64,
    first: i64,
    mass: Vec<f64>,
}

impl DiscretePdf {
    /// Masses on consecutive points starting at `first`; zero-mass ends are
    /// trimmed.
    pub fn from_masses(step: f64, offset: f64, first: i64, mass: Vec<f64>) -> Self {
        let mut pdf = Self { step, offset, first, mass };
        pdf.trim();
        pdf
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Value of grid point 0, dB.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Value of grid point `index`, dB.
    pub fn value(&self, index: i64) -> f64 {
        grid_value(self.offset, index, self.step)
    }

    pub fn first_index(&self) -> i64 {
        self.first
    }

    pub fn last_index(&self) -> i64 {
        self.first + self.mass.len() as i64 - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_at(&self, index: i64) -> f64 {
        let i = index - self.first;
        if i < 0 || i as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[i as usize]
        }
    }

    /// Density at grid point `index`, 1/dB.
    pub fn density_at(&self, index: i64) -> f64 {
        self.mass_at(index) / self.step
    }

    /// Values of the first and last stored grid points, dB.
    pub fn support(&self) -> (f64, f64) {
        (self.value(self.first), self.value(self.last_index()))
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `(value, mass)` for every stored grid point.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.value(self.first + i as i64), m))
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, m)| m * f(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x) / self.total_mass()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.expect(|x| (x - mu) * (x - mu)) / self.total_mass()
    }

    /// True when every bit of mass sits on one grid point.
    pub fn is_point_mass(&self) -> bool {
        self.mass.len() == 1
    }

    /// The same masses with every value moved by `delta` dB.
    pub fn shifted(&self, delta: f64) -> DiscretePdf {
        DiscretePdf { offset: self.offset + delta, ..self.clone() }
    }

    fn scale(&mut self, factor: f64) {
        self.mass.iter_mut().for_each(|m| *m *= factor);
    }

    fn trim(&mut self) {
        let Some(start) = self.mass.iter().position(|&m| m > 0.0) else {
            self.mass.clear();
            return;
        };
        let end = self.mass.iter().rposition(|&m| m > 0.0).unwrap();
        self.mass.truncate(end + 1);
        self.mass.drain(..start);
        self.first += start as i64;
    }
}

/// `offset + index * step`; every grid value in the crate goes through here
/// so equal quantities computed along different routes are bit-identical.
#[inline]
pub fn grid_value(offset: f64, index: i64, step: f64) -> f64 {
    offset + index as f64 * step
}

fn cross_correlate(a: &DiscretePdf, b: &DiscretePdf) -> DiscretePdf {
    debug_assert!((a.step - b.step).abs() < 1e-15);
    let first = a.first - b.last_index();
    let len = a.mass.len() + b.mass.len() - 1;
    let mut mass = vec![0.0; len];
    let nb = b.mass.len();
    for (i, &ma) in a.mass.iter().enumerate() {
        if ma == 0.0 {
            continue;
        }
        // index of (a_i - b_j) relative to `first` is i + (nb - 1 - j)
        for (j, &mb) in b.mass.iter().enumerate() {
            mass[i + nb - 1 - j] += ma * mb;
        }
    }
    DiscretePdf { step: a.step, offset: a.offset - b.offset, first, mass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_normalized_and_centered() {
        let g = DbGrid::default();
        let pdf = g.gaussian(-71.234, 3.0).unwrap();
        assert!((pdf.total_mass() - 1.0).abs() < 1e-12);
        assert!((pdf.mean() + 71.234).abs() < 1e-3);
        // bin-width broadening adds step^2 / 12
        assert!((pdf.variance() - 9.0 - 0.01 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn zero_sigma_is_point_mass() {
        let g = DbGrid::default();
        let pdf = g.gaussian(-80.04, 0.0).unwrap();
        assert!(pdf.is_point_mass());
        assert!((pdf.support().0 + 80.0).abs() < 1e-9);
    }

    #[test]
    fn truncation_zeroes_lower_bins() {
        let g = DbGrid::default();
        let floor = -85.03;
        let pdf = g.truncated_gaussian(-84.0, 3.0, floor).unwrap().unwrap();
        assert!((pdf.total_mass() - 1.0).abs() < 1e-12);
        for (x, m) in pdf.iter() {
            if x + g.step / 2.0 <= floor {
                assert_eq!(m, 0.0);
            }
        }
        assert!(pdf.support().0 >= floor - g.step / 2.0);
    }

    #[test]
    fn truncation_far_above_mean_is_empty() {
        let g = DbGrid::default();
        assert!(g.truncated_gaussian(-120.0, 3.0, -85.0).unwrap().is_none());
        assert!(g.truncated_gaussian(-86.0, 0.0, -85.0).unwrap().is_none());
    }

    #[test]
    fn coverage_failure_reported() {
        let g = DbGrid::new(-100.0, 0.0, 0.1).unwrap();
        assert!(matches!(g.gaussian(-99.0, 3.0), Err(Error::GridCoverage { .. })));
    }

    #[test]
    fn difference_of_point_masses() {
        let g = DbGrid::default();
        let a = g.point(-60.0).unwrap();
        let b = g.point(-95.0).unwrap();
        let d = g.difference(&a, &b).unwrap();
        assert!(d.is_point_mass());
        assert!((d.support().0 - 35.0).abs() < 1e-9);
    }

    #[test]
    fn difference_moments_add() {
        let g = DbGrid::default();
        let a = g.gaussian(-70.0, 3.0).unwrap();
        let b = g.gaussian(-80.0, 2.0).unwrap();
        let d = g.difference(&a, &b).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - (a.mean() - b.mean())).abs() < 1e-9);
        assert!((d.variance() - (a.variance() + b.variance())).abs() < 1e-9);
    }

    #[test]
    fn map_preserves_mass() {
        let g = DbGrid::default();
        let a = g.gaussian(-100.0, 3.0).unwrap();
        let noise = -95.0;
        let m = g
            .map(&a, noise, |x| 10.0 * (10f64.powf(x / 10.0) + 10f64.powf(noise / 10.0)).log10())
            .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(m.offset(), noise);
        assert!(m.first_index() >= 0);
    }
}
