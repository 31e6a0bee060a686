//! Right-censored survival data and its CSV form.
//!
//! A dataset CSV has a header row with `time`, `event` and one column per
//! covariate. Simulated data additionally carries `true_event_time` and
//! `true_censor_time`; every other column is treated as a covariate.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TIME_COLUMN: &str = "time";
pub const EVENT_COLUMN: &str = "event";
pub const TRUE_EVENT_COLUMN: &str = "true_event_time";
pub const TRUE_CENSOR_COLUMN: &str = "true_censor_time";

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Matrix::new(rows.len(), n_cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on zero width.
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    /// Observed time `min(T, U)`.
    pub time: Vec<f64>,
    /// `true` when the event was observed.
    pub event: Vec<bool>,
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub true_event_time: Option<Vec<f64>>,
    pub true_censor_time: Option<Vec<f64>>,
}

impl SurvivalDataset {
    pub fn new(time: Vec<f64>, event: Vec<bool>, features: Matrix) -> Result<Self> {
        let feature_names = (1..=features.n_cols()).map(|j| format!("x{j}")).collect();
        let ds = SurvivalDataset {
            time,
            event,
            features,
            feature_names,
            true_event_time: None,
            true_censor_time: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    pub fn has_oracle(&self) -> bool {
        self.true_event_time.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.time.len();
        if self.event.len() != n || self.features.n_rows() != n {
            return Err(Error::Shape(format!(
                "time ({n}), event ({}) and feature ({}) row counts differ",
                self.event.len(),
                self.features.n_rows()
            )));
        }
        if self.feature_names.len() != self.features.n_cols() {
            return Err(Error::Shape("feature name count does not match columns".into()));
        }
        for oracle in [&self.true_event_time, &self.true_censor_time].into_iter().flatten() {
            if oracle.len() != n {
                return Err(Error::Shape("oracle column length differs from data".into()));
            }
        }
        if let Some(i) = self.time.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Data(format!(
                "row {i}: time must be positive, got {}",
                self.time[i]
            )));
        }
        for i in 0..n {
            if self.features.row(i).iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("row {i}: non-finite covariate")));
            }
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> SurvivalDataset {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        SurvivalDataset {
            time: pick(&self.time),
            event: idx.iter().map(|&i| self.event[i]).collect(),
            features: self.features.select_rows(idx),
            feature_names: self.feature_names.clone(),
            true_event_time: self.true_event_time.as_ref().map(pick),
            true_censor_time: self.true_censor_time.as_ref().map(pick),
        }
    }

    /// Parse a dataset from CSV text.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let time_col =
            find(TIME_COLUMN).ok_or_else(|| Error::Data("missing column \"time\"".into()))?;
        let event_col =
            find(EVENT_COLUMN).ok_or_else(|| Error::Data("missing column \"event\"".into()))?;
        let te_col = find(TRUE_EVENT_COLUMN);
        let tc_col = find(TRUE_CENSOR_COLUMN);
        let reserved = [Some(time_col), Some(event_col), te_col, tc_col];
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|j| !reserved.contains(&Some(*j)))
            .collect();
        if feature_cols.is_empty() {
            return Err(Error::Data("dataset has no covariate columns".into()));
        }

        let mut time = Vec::new();
        let mut event = Vec::new();
        let mut values = Vec::new();
        let mut te = Vec::new();
        let mut tc = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // Header is line 1.
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            if rec.len() != headers.len() {
                return Err(Error::Data(format!(
                    "line {line}: expected {} fields, found {}",
                    headers.len(),
                    rec.len()
                )));
            }
            let num = |j: usize| -> Result<f64> {
                let raw = rec[j].trim();
                raw.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "line {line}: column {:?} is not a number: {raw:?}",
                        headers[j]
                    ))
                })
            };
            let t = num(time_col)?;
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Data(format!("line {line}: time must be positive, got {t}")));
            }
            time.push(t);
            event.push(match rec[event_col].trim() {
                "1" | "1.0" | "true" => true,
                "0" | "0.0" | "false" => false,
                other => {
                    return Err(Error::Data(format!(
                        "line {line}: event must be 0 or 1, got {other:?}"
                    )))
                }
            });
            for &j in &feature_cols {
                let x = num(j)?;
                if !x.is_finite() {
                    return Err(Error::Data(format!(
                        "line {line}: covariate {:?} is not finite",
                        headers[j]
                    )));
                }
                values.push(x);
            }
            if let Some(j) = te_col {
                te.push(num(j)?);
            }
            if let Some(j) = tc_col {
                tc.push(num(j)?);
            }
        }
        let n = time.len();
        let ds = SurvivalDataset {
            time,
            event,
            features: Matrix::new(n, feature_cols.len(), values)?,
            feature_names: feature_cols.iter().map(|&j| headers[j].clone()).collect(),
            true_event_time: te_col.map(|_| te),
            true_censor_time: tc_col.map(|_| tc),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Data(format!("CSV write failed: {e}"));
        let mut header = vec![TIME_COLUMN.to_string(), EVENT_COLUMN.to_string()];
        header.extend(self.feature_names.iter().cloned());
        if self.true_event_time.is_some() {
            header.push(TRUE_EVENT_COLUMN.into());
        }
        if self.true_censor_time.is_some() {
            header.push(TRUE_CENSOR_COLUMN.into());
        }
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec = vec![fmt_f64(self.time[i]), (self.event[i] as u8).to_string()];
            rec.extend(self.features.row(i).iter().map(|&x| fmt_f64(x)));
            if let Some(v) = &self.true_event_time {
                rec.push(fmt_f64(v[i]));
            }
            if let Some(v) = &self.true_censor_time {
                rec.push(fmt_f64(v[i]));
            }
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::Data(format!("CSV flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
