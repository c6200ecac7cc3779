use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Portfolio;
use crate::error::{Error, Result};
use crate::model::Response;

/// Reporting year × development year aggregate of one layer.
///
/// `cells[i][j]` is `None` in the unobserved region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub layer: String,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Number of reported claims per row.
    pub exposure: Vec<f64>,
}

impl Triangle {
    /// Triangle from rows of observed values; each row's observed cells are
    /// the leading entries, missing trailing cells are unobserved.
    pub fn from_rows(layer: impl Into<String>, rows: &[Vec<f64>], n_cols: usize) -> Result<Self> {
        let cells = rows
            .iter()
            .map(|r| {
                if r.len() > n_cols {
                    return Err(Error::Input(format!("row with {} cells exceeds {n_cols} columns", r.len())));
                }
                let mut v: Vec<Option<f64>> = r.iter().map(|&x| Some(x)).collect();
                v.resize(n_cols, None);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layer, cells, vec![1.0; rows.len()])
    }

    pub fn new(layer: impl Into<String>, cells: Vec<Vec<Option<f64>>>, exposure: Vec<f64>) -> Result<Self> {
        let n_cols = cells.first().map_or(0, |r| r.len());
        if cells.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Input("triangle rows have different lengths".into()));
        }
        if exposure.len() != cells.len() {
            return Err(Error::Input("triangle exposure length differs from the number of rows".into()));
        }
        for (i, row) in cells.iter().enumerate() {
            let observed = row.iter().take_while(|c| c.is_some()).count();
            if row[observed..].iter().any(|c| c.is_some()) {
                return Err(Error::Input(format!("row {} has an observed cell after an unobserved one", i + 1)));
            }
            if row.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("row {} has a non-finite cell", i + 1)));
            }
        }
        Ok(Self { layer: layer.into(), cells, exposure })
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cells.first().map_or(0, |r| r.len())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i][j]
    }

    /// Number of observed development years of row `i`.
    pub fn observed_len(&self, i: usize) -> usize {
        self.cells[i].iter().take_while(|c| c.is_some()).count()
    }

    pub fn cumulative(&self) -> Triangle {
        let cells = self
            .cells
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                r.iter()
                    .map(|c| {
                        c.map(|x| {
                            acc += x;
                            acc
                        })
                    })
                    .collect()
            })
            .collect();
        Triangle { layer: self.layer.clone(), cells, exposure: self.exposure.clone() }
    }

    pub fn scaled(&self, factor: f64) -> Triangle {
        let cells = self.cells.iter().map(|r| r.iter().map(|c| c.map(|x| x * factor)).collect()).collect();
        Triangle { layer: self.layer.clone(), cells, exposure: self.exposure.clone() }
    }

    /// Write as a CSV matrix, blank for unobserved cells.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for row in &self.cells {
            let fields: Vec<String> = row.iter().map(|c| c.map(|x| format!("{x}")).unwrap_or_default()).collect();
            writeln!(writer, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Read a CSV matrix; a non-numeric first line is taken as a header and
    /// short rows are padded with unobserved cells.
    pub fn read_csv<R: Read>(layer: impl Into<String>, reader: R) -> Result<Triangle> {
        let mut cells = Vec::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<Option<f64>>, String> = line
                .split(',')
                .map(|f| {
                    let f = f.trim();
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|_| f.to_string())
                    }
                })
                .collect();
            match parsed {
                Ok(row) => cells.push(row),
                Err(_) if n == 0 => continue,
                Err(field) => {
                    return Err(Error::Schema(format!("triangle line {}: `{field}` is not a number", n + 1)))
                }
            }
        }
        let width = cells.iter().map(Vec::len).max().unwrap_or(0);
        for row in &mut cells {
            row.resize(width, None);
        }
        let n = cells.len();
        Triangle::new(layer, cells, vec![1.0; n])
    }
}

/// Aggregate `response` by reporting year and development year.
///
/// Rows are the `tau` reporting years, columns the `d` development years;
/// cell `(i, j)` is observed when `i + j - 1 <= tau`.
pub fn build_triangle(portfolio: &Portfolio, response: Response) -> Triangle {
    let w = portfolio.window;
    let (tau, d) = (w.tau as usize, w.d as usize);
    let mut cells: Vec<Vec<Option<f64>>> =
        (0..tau).map(|i| (0..d).map(|j| (i + j < tau).then_some(0.0)).collect()).collect();
    for claim in &portfolio.claims {
        let i = claim.reporting_year as usize - 1;
        for r in &claim.records {
            if let Some(c) = cells[i][r.dev_year as usize - 1].as_mut() {
                *c += response.value(&r.outcome());
            }
        }
    }
    let exposure = portfolio.reported_counts.iter().map(|&n| n as f64).collect();
    Triangle { layer: format!("{response:?}").to_lowercase(), cells, exposure }
}
