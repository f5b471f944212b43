//! Frame error rate lookup table indexed by Eb/N0.

use std::path::Path;

use crate::error::{Error, Result};

/// FER vs. Eb/N0 (dB), linearly interpolated and clamped outside its range.
#[derive(Debug, Clone, PartialEq)]
pub struct FerTable {
    ebn0_db: Vec<f64>,
    fer: Vec<f64>,
}

impl FerTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Domain("FER table needs at least 2 rows".into()));
        }
        for (i, &(x, f)) in rows.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::Domain(format!("row {}: non-finite Eb/N0", i + 1)));
            }
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Domain(format!("row {}: FER {f} outside [0, 1]", i + 1)));
            }
            if i > 0 && x <= rows[i - 1].0 {
                return Err(Error::Domain(format!(
                    "row {}: Eb/N0 {x} not strictly increasing",
                    i + 1
                )));
            }
        }
        let (ebn0_db, fer) = rows.into_iter().unzip();
        Ok(Self { ebn0_db, fer })
    }

    /// Reads a two-column `ebn0_db,fer` CSV. A non-numeric first data line is
    /// taken as a header; `#` lines and blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rows: Vec<(f64, f64)> = Vec::new();
        let mut seen_data = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(Error::parse(origin, line_no, "expected two columns"));
            }
            let parsed = (cols[0].parse::<f64>(), cols[1].parse::<f64>());
            let (x, f) = match parsed {
                (Ok(x), Ok(f)) => (x, f),
                _ if !seen_data => {
                    // header
                    seen_data = true;
                    continue;
                }
                _ => return Err(Error::parse(origin, line_no, "non-numeric value")),
            };
            seen_data = true;
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::parse(origin, line_no, format!("FER {f} outside [0, 1]")));
            }
            if let Some(&(prev, _)) = rows.last() {
                if x <= prev {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        format!("Eb/N0 {x} dB does not increase (previous {prev} dB)"),
                    ));
                }
            }
            rows.push((x, f));
        }
        Self::new(rows).map_err(|e| match e {
            Error::Domain(msg) => Error::parse(origin, 0, msg),
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.fer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fer.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ebn0_db.iter().copied().zip(self.fer.iter().copied())
    }

    /// Eb/N0 span covered by the table, dB.
    pub fn domain(&self) -> (f64, f64) {
        (self.ebn0_db[0], *self.ebn0_db.last().unwrap())
    }

    pub fn fer(&self, ebn0_db: f64) -> f64 {
        let n = self.ebn0_db.len();
        if ebn0_db <= self.ebn0_db[0] {
            return self.fer[0];
        }
        if ebn0_db >= self.ebn0_db[n - 1] {
            return self.fer[n - 1];
        }
        let hi = self.ebn0_db.partition_point(|&x| x <= ebn0_db);
        let lo = hi - 1;
        let (x0, x1) = (self.ebn0_db[lo], self.ebn0_db[hi]);
        let (f0, f1) = (self.fer[lo], self.fer[hi]);
        f0 + (f1 - f0) * (ebn0_db - x0) / (x1 - x0)
    }

    /// Shipped table for a 10 MHz data rate (bits/s), if one exists.
    pub fn builtin(data_rate: f64) -> Option<Self> {
        let (name, text) = match data_rate {
            6.0e6 => ("fer_6mbps.csv", include_str!("../data/fer_6mbps.csv")),
            18.0e6 => ("fer_18mbps.csv", include_str!("../data/fer_18mbps.csv")),
            27.0e6 => ("fer_27mbps.csv", include_str!("../data/fer_27mbps.csv")),
            _ => return None,
        };
        Some(Self::parse(text, Path::new(name)).expect("shipped FER tables parse"))
    }

    /// Constant-FER table, handy for bounding cases.
    pub fn constant(fer: f64) -> Result<Self> {
        Self::new(vec![(-100.0, fer), (100.0, fer)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tables() {
        for r in [6.0e6, 18.0e6, 27.0e6] {
            let t = FerTable::builtin(r).unwrap();
            assert!(t.len() > 10);
            assert!(t.fer(-5.0) > 0.99 && t.fer(40.0) < 1e-3);
        }
        assert!(FerTable::builtin(9.0e6).is_none());
    }
    use proptest::prelude::*;

    fn three_rows() -> FerTable {
        FerTable::parse("0,1.0\n10,0.5\n20,0.0", Path::new("t.csv")).unwrap()
    }

    #[test]
    fn interpolates_and_clamps() {
        let t = three_rows();
        assert_eq!(t.len(), 3);
        assert!((t.fer(5.0) - 0.75).abs() < 1e-15);
        assert_eq!(t.fer(-5.0), 1.0);
        assert_eq!(t.fer(30.0), 0.0);
        assert_eq!(t.fer(10.0), 0.5);
    }

    #[test]
    fn header_and_comments_are_skipped() {
        let t = FerTable::parse("# link table\nebn0_db,fer\n\n0,1\n# mid\n4,0\n", Path::new("x")).unwrap();
        assert_eq!(t.len(), 2);
        assert!((t.fer(1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn non_monotone_row_is_named() {
        let err = FerTable::parse("0,1\n10,0.5\n5,0.2\n", Path::new("bad.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fer_out_of_range_rejected() {
        let err = FerTable::parse("0,1.2\n10,0.5\n", Path::new("bad.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn single_row_rejected() {
        assert!(FerTable::parse("0,1\n", Path::new("x")).is_err());
    }

    #[test]
    fn shipped_tables_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        for rate in [6, 18, 27] {
            let t = FerTable::load(dir.join(format!("fer_{rate}mbps.csv"))).unwrap();
            assert!(t.len() > 10);
        }
    }

    proptest! {
        #[test]
        fn interpolation_stays_in_unit_interval(
            fers in proptest::collection::vec(0.0f64..=1.0, 2..20),
            q in -50.0f64..80.0,
        ) {
            let rows = fers.iter().enumerate().map(|(i, &f)| (i as f64 * 1.7, f)).collect();
            let t = FerTable::new(rows).unwrap();
            let v = t.fer(q);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
