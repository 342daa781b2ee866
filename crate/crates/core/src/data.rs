//! Observational data model: covariates `x`, arm `a`, outcome `y`.
//!
//! Arms are contiguous integers `0..m`; in the binary case arm 1 is
//! "treated". Covariates pass through unscaled.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub a: usize,
    pub y: f64,
}

/// Sensitivity parameter of the marginal sensitivity model, `lambda >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SensitivityParam(f64);

impl SensitivityParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda >= 1.0 {
            Ok(Self(lambda))
        } else {
            Err(Error::BadLambda(lambda))
        }
    }

    /// Builds from `log(lambda)`; negative logs are rejected.
    pub fn from_log(log_lambda: f64) -> Result<Self> {
        Self::new(log_lambda.exp())
    }

    /// Unconfoundedness.
    pub fn one() -> Self {
        Self(1.0)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Quantile level `1 / (1 + lambda)` used by the lower bounds.
    #[inline]
    pub fn lower_level(self) -> f64 {
        1.0 / (1.0 + self.0)
    }

    /// Quantile level `lambda / (1 + lambda)` used by the upper bounds.
    #[inline]
    pub fn upper_level(self) -> f64 {
        self.0 / (1.0 + self.0)
    }
}

impl TryFrom<f64> for SensitivityParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SensitivityParam> for f64 {
    fn from(p: SensitivityParam) -> f64 {
        p.0
    }
}

/// A validated sample of `n` observations with `d` covariates and `m` arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Observation>,
    d: usize,
    m: usize,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }
    pub fn n(&self) -> usize {
        self.rows.len()
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Names of the covariate columns only.
    pub fn covariate_names(&self) -> &[String] {
        &self.column_names[2..]
    }

    /// Renames the covariate columns.
    pub fn with_covariate_names(mut self, names: &[&str]) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: names.len() });
        }
        self.column_names.truncate(2);
        self.column_names.extend(names.iter().map(|s| s.to_string()));
        Ok(self)
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m];
        for r in &self.rows {
            counts[r.a] += 1;
        }
        counts
    }

    /// Subset by row indices, keeping `d`, `m` and names.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            d: self.d,
            m: self.m,
            column_names: self.column_names.clone(),
        }
    }

    /// Returns a copy with `offset` subtracted from the outcomes of units
    /// receiving `arm` (e.g. a per-participant program cost).
    pub fn with_arm_cost(&self, arm: usize, offset: f64) -> Dataset {
        let mut out = self.clone();
        for r in &mut out.rows {
            if r.a == arm {
                r.y -= offset;
            }
        }
        out
    }

    pub fn read_csv<P: AsRef<Path>>(path: P, m: usize) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, m)
    }

    /// Parses `y,a,x1,...,xd` CSV with a header row.
    pub fn from_csv_reader<R: Read>(reader: R, m: usize) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.len() < 3 || headers[0] != "y" || headers[1] != "a" {
            return Err(Error::Csv(format!(
                "header must start with `y,a` followed by covariates, got `{}`",
                headers.join(",")
            )));
        }
        let mut raw = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let parse = |s: &str, col: usize| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::Csv(format!("row {row}, column `{}`: cannot parse `{s}`", headers[col]))
                })
            };
            let y = parse(&rec[0], 0)?;
            let a_raw = parse(&rec[1], 1)?;
            if a_raw.fract() != 0.0 || a_raw < 0.0 {
                return Err(Error::Csv(format!("row {row}: arm `{}` is not a non-negative integer", &rec[1])));
            }
            let x = (2..rec.len()).map(|c| parse(&rec[c], c)).collect::<Result<Vec<_>>>()?;
            raw.push(Observation { x, a: a_raw as usize, y });
        }
        let mut ds = validate_dataset(raw, m)?;
        ds.column_names = headers;
        Ok(ds)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names).map_err(|e| Error::Csv(e.to_string()))?;
        for r in &self.rows {
            let mut rec = Vec::with_capacity(2 + self.d);
            rec.push(fmt_f64(r.y));
            rec.push(r.a.to_string());
            rec.extend(r.x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Checks raw rows and builds a [`Dataset`] with default column names
/// `y,a,x1..xd`.
pub fn validate_dataset(rows: Vec<Observation>, m: usize) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    if m < 2 {
        return Err(Error::BadConfig(format!("arm count must be at least 2, got {m}")));
    }
    let d = rows[0].x.len();
    for (i, r) in rows.iter().enumerate() {
        if r.x.len() != d {
            return Err(Error::RaggedRows { row: i, got: r.x.len(), expected: d });
        }
        if !r.y.is_finite() {
            return Err(Error::NonFinite { row: i, column: "y".into() });
        }
        if let Some(j) = r.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, column: format!("x{}", j + 1) });
        }
        if r.a >= m {
            return Err(Error::ArmOutOfRange { row: i, arm: r.a, m });
        }
    }
    let mut column_names = vec!["y".to_string(), "a".to_string()];
    column_names.extend((1..=d).map(|j| format!("x{j}")));
    Ok(Dataset { rows, d, m, column_names })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(x: &[f64], a: usize, y: f64) -> Observation {
        Observation { x: x.to_vec(), a, y }
    }

    #[test]
    fn accepts_valid_rows() {
        let ds = validate_dataset(
            vec![obs(&[0.0, 1.0], 0, 1.0), obs(&[1.0, 2.0], 1, 2.0), obs(&[2.0, 3.0], 1, 0.5)],
            2,
        )
        .unwrap();
        assert_eq!((ds.n(), ds.d(), ds.m()), (3, 2, 2));
        assert_eq!(ds.column_names(), ["y", "a", "x1", "x2"]);
    }

    #[test]
    fn rejects_nan_outcome() {
        let err = validate_dataset(vec![obs(&[0.0], 0, f64::NAN)], 2).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, .. }));
    }

    #[test]
    fn rejects_arm_out_of_range() {
        let err = validate_dataset(vec![obs(&[0.0], 2, 1.0)], 2).unwrap_err();
        assert!(matches!(err, Error::ArmOutOfRange { arm: 2, m: 2, .. }));
    }

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(matches!(validate_dataset(vec![], 2), Err(Error::EmptyData)));
        let err = validate_dataset(vec![obs(&[0.0, 1.0], 0, 1.0), obs(&[0.0], 1, 1.0)], 2).unwrap_err();
        assert!(matches!(err, Error::RaggedRows { row: 1, got: 1, expected: 2 }));
    }

    #[test]
    fn csv_round_trip_keeps_names() {
        let text = "y,a,edu,earn\n1.5,1,12,3000\n-0.25,0,9,1200.5\n";
        let ds = Dataset::from_csv_reader(text.as_bytes(), 2).unwrap();
        assert_eq!(ds.covariate_names(), ["edu", "earn"]);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), 2).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_rejects_bad_header_and_fractional_arm() {
        assert!(Dataset::from_csv_reader("a,y,x1\n0,1,2\n".as_bytes(), 2).is_err());
        assert!(Dataset::from_csv_reader("y,a,x1\n1,0.5,2\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn lambda_levels() {
        let l = SensitivityParam::new(2.0).unwrap();
        assert!((l.lower_level() - 1.0 / 3.0).abs() < 1e-15);
        assert!((l.upper_level() - 2.0 / 3.0).abs() < 1e-15);
        let one = SensitivityParam::one();
        assert_eq!(one.lower_level(), 0.5);
        assert_eq!(one.upper_level(), 0.5);
        assert!(SensitivityParam::new(0.9).is_err());
        assert!(SensitivityParam::new(f64::INFINITY).is_err());
    }
}
