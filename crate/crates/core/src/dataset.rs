//! Data points, data sets and their CSV representation.
//!
//! Labels are zero-based inside the library and one-based in files and on the
//! command line.
//!
//! CSV layout: a header row, then one point per row. Position columns are `x`
//! for one-dimensional data or `x1..xd` otherwise, an optional `y` column holds
//! the label (blank cell = unlabeled) and an optional `xprime` column holds the
//! extra feature.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: position, optional label, optional extra feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: Option<usize>,
    pub x_prime: Option<f64>,
}

impl LabeledPoint {
    pub fn unlabeled(x: Vec<f64>) -> Self {
        Self {
            x,
            y: None,
            x_prime: None,
        }
    }

    pub fn labeled(x: Vec<f64>, y: usize) -> Self {
        Self {
            x,
            y: Some(y),
            x_prime: None,
        }
    }

    pub fn with_feature(x: Vec<f64>, x_prime: f64) -> Self {
        Self {
            x,
            y: None,
            x_prime: Some(x_prime),
        }
    }

    pub fn shape(&self) -> PointShape {
        PointShape {
            dim: self.x.len(),
            labeled: self.y.is_some(),
            extra_feature: self.x_prime.is_some(),
        }
    }
}

/// What every point of a data set looks like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointShape {
    pub dim: usize,
    pub labeled: bool,
    pub extra_feature: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Initial,
    Additional,
}

/// An ordered, nonempty collection of identically shaped points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<LabeledPoint>,
    kind: DatasetKind,
}

impl Dataset {
    pub fn new(points: Vec<LabeledPoint>, kind: DatasetKind) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("dataset"))?.shape();
        if first.dim == 0 {
            return Err(Error::InvalidDataset("points have no coordinates".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.shape() != first {
                return Err(Error::InvalidDataset(format!(
                    "point {i} has shape {:?}, expected {:?}",
                    p.shape(),
                    first
                )));
            }
            if p.x.iter().any(|v| !v.is_finite()) || p.x_prime.is_some_and(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("point {i} is not finite")));
            }
        }
        Ok(Self { points, kind })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<LabeledPoint> {
        self.points
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn shape(&self) -> PointShape {
        self.points[0].shape()
    }

    /// Checks every label against a `k`-component model.
    pub fn check_labels(&self, k: usize) -> Result<()> {
        for p in &self.points {
            if let Some(y) = p.y {
                if y >= k {
                    return Err(Error::LabelOutOfRange { label: y + 1, k });
                }
            }
        }
        Ok(())
    }

    /// Copy of the data set with labels removed.
    pub fn without_labels(&self) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| LabeledPoint { y: None, ..p.clone() })
                .collect(),
            kind: self.kind,
        }
    }

    pub fn with_kind(mut self, kind: DatasetKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn read_csv<R: Read>(reader: R, source: &str, kind: DatasetKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let columns = Columns::from_headers(&headers, source)?;
        let mut points = Vec::new();
        let mut labeled: Option<bool> = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line,
                message,
            };
            let number = |idx: usize, name: &str| -> Result<f64> {
                let cell = record.get(idx).unwrap_or("");
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(format!("column `{name}`: `{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(err(format!("column `{name}`: value is not finite")));
                }
                Ok(v)
            };
            let mut x = Vec::with_capacity(columns.x.len());
            for (idx, name) in columns.x.iter().zip(&columns.x_names) {
                x.push(number(*idx, name)?);
            }
            let y = match columns.y {
                Some(idx) => {
                    let cell = record.get(idx).unwrap_or("");
                    if cell.is_empty() {
                        None
                    } else {
                        let label: usize = cell
                            .parse()
                            .map_err(|_| err(format!("column `y`: `{cell}` is not a label")))?;
                        if label == 0 {
                            return Err(err("labels are numbered from 1".into()));
                        }
                        Some(label - 1)
                    }
                }
                None => None,
            };
            match labeled {
                None => labeled = Some(y.is_some()),
                Some(l) if l != y.is_some() => {
                    return Err(err("labeled and unlabeled rows are mixed".into()));
                }
                _ => {}
            }
            let x_prime = match columns.x_prime {
                Some(idx) => Some(number(idx, "xprime")?),
                None => None,
            };
            points.push(LabeledPoint { x, y, x_prime });
        }
        if points.is_empty() {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                message: "no data rows".into(),
            });
        }
        Self::new(points, kind)
    }

    /// Reads a data set and validates its labels against `k` components,
    /// naming the offending line on failure.
    pub fn read_csv_path(path: &Path, kind: DatasetKind, k: usize) -> Result<Self> {
        let source = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::Parse {
            path: source.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        let data = Self::read_csv(file, &source, kind)?;
        for (i, p) in data.points.iter().enumerate() {
            if let Some(y) = p.y {
                if y >= k {
                    return Err(Error::Parse {
                        path: source,
                        // header occupies line 1
                        line: i as u64 + 2,
                        message: format!("label {} out of range 1..={k}", y + 1),
                    });
                }
            }
        }
        Ok(data)
    }

    /// Writes the data set as CSV. Values use the shortest representation that
    /// parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let shape = self.shape();
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = if shape.dim == 1 {
            vec!["x".into()]
        } else {
            (1..=shape.dim).map(|i| format!("x{i}")).collect()
        };
        if shape.labeled {
            header.push("y".into());
        }
        if shape.extra_feature {
            header.push("xprime".into());
        }
        wtr.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            if let Some(y) = p.y {
                row.push((y + 1).to_string());
            }
            if let Some(v) = p.x_prime {
                row.push(v.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct Columns {
    x: Vec<usize>,
    x_names: Vec<String>,
    y: Option<usize>,
    x_prime: Option<usize>,
}

impl Columns {
    fn from_headers(headers: &csv::StringRecord, source: &str) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: 1,
            message,
        };
        let find = |name: &str| headers.iter().position(|h| h == name);
        let (x, x_names) = if let Some(idx) = find("x") {
            (vec![idx], vec!["x".to_string()])
        } else {
            let mut idx = Vec::new();
            let mut names = Vec::new();
            while let Some(i) = find(&format!("x{}", idx.len() + 1)) {
                names.push(format!("x{}", idx.len() + 1));
                idx.push(i);
            }
            if idx.is_empty() {
                return Err(err("header has no `x` or `x1` column".into()));
            }
            (idx, names)
        };
        for h in headers.iter() {
            let known = h == "y" || h == "xprime" || x_names.iter().any(|n| n == h);
            if !known {
                return Err(err(format!("unknown column `{h}`")));
            }
        }
        Ok(Self {
            x,
            x_names,
            y: find("y"),
            x_prime: find("xprime"),
        })
    }
}
