//! IV datasets and their on-disk form.
//!
//! A dataset is written as a CSV table with header `x_0..x_{d-1}, z, t, y`
//! and a JSON sidecar:
//!
//! ```json
//! {"seed": 7, "d": 5, "n": 2048, "y_scale": {"min": 0.0, "max": 1.0},
//!  "labels": {"sate": 0.1, "lower": -0.2, "upper": 0.3},
//!  "provenance": "binary-benchmark"}
//! ```
//!
//! `labels` is optional, as are its `lower`/`upper` entries. Generators that
//! know the exact per-row strata distributions add them under `strata`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strata::{StrataDist, NUM_STRATA};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub x: Vec<f64>,
    pub z: u8,
    pub t: u8,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub sate: f64,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

/// Affine map applied to outcomes at ingestion: `y01 = (y_raw - min) / (max - min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YScale {
    pub min: f64,
    pub max: f64,
}

impl YScale {
    pub const UNIT: YScale = YScale { min: 0.0, max: 1.0 };

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn to_unit(&self, raw: f64) -> f64 {
        if self.range() == 0.0 {
            0.0
        } else {
            (raw - self.min) / self.range()
        }
    }

    pub fn to_raw(&self, unit: f64) -> f64 {
        self.min + unit * self.range()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvDataset {
    pub d: usize,
    pub rows: Vec<Row>,
    pub labels: Option<Labels>,
    pub seed: u64,
    pub y_scale: YScale,
    pub provenance: String,
    /// Exact per-row strata distributions, when the generator knows them.
    pub strata: Option<Vec<StrataDist>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub y_scale: YScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<[f64; NUM_STRATA]>>,
}

impl IvDataset {
    pub fn new(d: usize, rows: Vec<Row>, seed: u64, provenance: impl Into<String>) -> Result<Self> {
        let ds = Self {
            d,
            rows,
            labels: None,
            seed,
            y_scale: YScale::UNIT,
            provenance: provenance.into(),
            strata: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from raw outcomes, min-max rescaling them into `[0, 1]`
    /// when any fall outside it.
    pub fn from_raw_outcomes(d: usize, mut rows: Vec<Row>, seed: u64, provenance: impl Into<String>) -> Result<Self> {
        let scale = if rows.iter().all(|r| (0.0..=1.0).contains(&r.y)) {
            YScale::UNIT
        } else {
            let (min, max) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.y), hi.max(r.y))
            });
            YScale { min, max }
        };
        for r in &mut rows {
            r.y = scale.to_unit(r.y).clamp(0.0, 1.0);
        }
        let mut ds = Self::new(d, rows, seed, provenance)?;
        ds.y_scale = scale;
        Ok(ds)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (labels.lower, labels.upper) {
            if lo > hi {
                return Err(Error::Data(format!("label bounds crossed: {lo} > {hi}")));
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.x.len() != self.d {
                return Err(Error::Data(format!(
                    "row {i} has {} covariates, expected {}",
                    r.x.len(),
                    self.d
                )));
            }
            if r.z > 1 || r.t > 1 {
                return Err(Error::Data(format!("row {i}: z and t must be 0 or 1")));
            }
            if !(0.0..=1.0).contains(&r.y) {
                return Err(Error::Data(format!("row {i}: y = {} outside [0, 1]", r.y)));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i}: non-finite covariate")));
            }
        }
        if let Some(strata) = &self.strata {
            if strata.len() != self.rows.len() {
                return Err(Error::Data("strata length does not match row count".into()));
            }
        }
        Ok(())
    }

    pub fn is_binary_outcome(&self) -> bool {
        self.rows.iter().all(|r| r.y == 0.0 || r.y == 1.0)
    }

    /// Replaces outcomes with `1{y >= threshold}`.
    pub fn binarized(&self, threshold: f64) -> IvDataset {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.y = if r.y >= threshold { 1.0 } else { 0.0 };
        }
        out
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            seed: self.seed,
            d: self.d,
            n: self.n(),
            y_scale: self.y_scale,
            labels: self.labels,
            provenance: self.provenance.clone(),
            strata: self.strata.as_ref().map(|v| v.iter().map(|q| *q.probs()).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.d).map(|j| format!("x_{j}")).collect();
        header.extend(["z", "t", "y"].map(String::from));
        wr.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(self.d + 3);
        for r in &self.rows {
            rec.clear();
            rec.extend(r.x.iter().map(|v| format!("{v:?}")));
            rec.push(r.z.to_string());
            rec.push(r.t.to_string());
            rec.push(format!("{:?}", r.y));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<(usize, Vec<Row>)> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let d = cols
            .len()
            .checked_sub(3)
            .ok_or_else(|| Error::Data("CSV needs at least the columns z, t, y".into()))?;
        for (j, c) in cols[..d].iter().enumerate() {
            if *c != format!("x_{j}") {
                return Err(Error::Data(format!("expected column x_{j}, found {c}")));
            }
        }
        if cols[d..] != ["z", "t", "y"] {
            return Err(Error::Data(format!(
                "last columns must be z, t, y, found {}",
                cols[d..].join(", ")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {i}, column {}: {e}", cols[k])))
            };
            let x = (0..d).map(parse).collect::<Result<Vec<_>>>()?;
            let bit = |k: usize| -> Result<u8> {
                match rec[k].trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Data(format!(
                        "row {i}, column {}: expected 0 or 1, got {other}",
                        cols[k]
                    ))),
                }
            };
            rows.push(Row {
                x,
                z: bit(d)?,
                t: bit(d + 1)?,
                y: parse(d + 2)?,
            });
        }
        Ok((d, rows))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        let mut f = fs::File::create(&json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.sidecar())?;
        f.write_all(b"\n")?;
        Ok((csv_path, json_path))
    }

    /// Loads a dataset from its CSV path; the sidecar is read from the same
    /// stem with a `.json` extension when present.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let (d, rows) = Self::read_csv(fs::File::open(csv_path)?)?;
        let json_path = csv_path.with_extension("json");
        if !json_path.exists() {
            return Self::from_raw_outcomes(d, rows, 0, format!("file:{}", csv_path.display()));
        }
        let side: Sidecar = serde_json::from_reader(fs::File::open(&json_path)?)?;
        if side.d != d || side.n != rows.len() {
            return Err(Error::Data(format!(
                "sidecar declares d={}, n={} but CSV has d={d}, n={}",
                side.d,
                side.n,
                rows.len()
            )));
        }
        let strata = side
            .strata
            .map(|v| v.into_iter().map(StrataDist::new).collect::<Result<Vec<_>>>())
            .transpose()?;
        let ds = IvDataset {
            d,
            rows,
            labels: side.labels,
            seed: side.seed,
            y_scale: side.y_scale,
            provenance: side.provenance,
            strata,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> IvDataset {
        let rows = vec![
            Row {
                x: vec![0.1, -2.5],
                z: 0,
                t: 1,
                y: 0.25,
            },
            Row {
                x: vec![1.0 / 3.0, 7.0],
                z: 1,
                t: 0,
                y: 1.0,
            },
        ];
        IvDataset::new(2, rows, 9, "toy").unwrap()
    }

    #[test]
    fn csv_header_and_full_precision() {
        let mut buf = Vec::new();
        toy().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x_0,x_1,z,t,y\n"));
        assert!(text.contains("0.3333333333333333"));
        let (d, rows) = IvDataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(d, 2);
        assert_eq!(rows, toy().rows);
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy()
            .with_labels(Labels {
                sate: 0.1,
                lower: Some(-0.2),
                upper: Some(0.3),
            })
            .unwrap();
        let (csv_path, json_path) = ds.save(dir.path(), "toy").unwrap();
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(json_path).unwrap()).unwrap();
        assert_eq!(side["n"], 2);
        assert_eq!(side["y_scale"]["max"], 1.0);
        let back = IvDataset::load(&csv_path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn out_of_range_outcomes_are_rescaled() {
        let rows = vec![
            Row {
                x: vec![],
                z: 0,
                t: 0,
                y: 2.5,
            },
            Row {
                x: vec![],
                z: 1,
                t: 1,
                y: 10.1,
            },
            Row {
                x: vec![],
                z: 1,
                t: 0,
                y: 6.3,
            },
        ];
        let ds = IvDataset::from_raw_outcomes(0, rows, 0, "raw").unwrap();
        assert_eq!(ds.y_scale, YScale { min: 2.5, max: 10.1 });
        assert_eq!(ds.rows[0].y, 0.0);
        assert_eq!(ds.rows[1].y, 1.0);
        assert!((ds.y_scale.to_raw(ds.rows[2].y) - 6.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        let rows = vec![Row {
            x: vec![1.0],
            z: 2,
            t: 0,
            y: 0.0,
        }];
        assert!(IvDataset::new(1, rows, 0, "bad").is_err());
        let rows = vec![Row {
            x: vec![1.0, 2.0],
            z: 0,
            t: 0,
            y: 0.0,
        }];
        assert!(IvDataset::new(1, rows, 0, "bad").is_err());
        assert!(IvDataset::read_csv("x_0,z,t,y\n1.0,0,3,0.5\n".as_bytes()).is_err());
        assert!(IvDataset::read_csv("a,z,t,y\n1.0,0,1,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn crossed_labels_rejected() {
        let r = toy().with_labels(Labels {
            sate: 0.0,
            lower: Some(0.2),
            upper: Some(0.1),
        });
        assert!(r.is_err());
    }
}
