use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{bin_continuous, Claim, CovariateValue, DevelopmentRecord, ObservationWindow, Portfolio};
use crate::error::{Error, Result};

const REQUIRED: [&str; 6] = ["claim_id", "reporting_year", "dev_year", "close", "payment", "size"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    /// ISO `YYYY-MM-DD`; exposes a `<name>_month` categorical covariate.
    Date,
}

/// Declaration of one static covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateColumn {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ColumnKind,
    /// Numeric columns with breakpoints also expose `<name>_bin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl CovariateColumn {
    pub fn categorical(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Categorical, breakpoints: None, labels: None }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numeric, breakpoints: None, labels: None }
    }
}

fn default_na() -> String {
    "NA".to_string()
}

/// Schema of a long-format claims file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Inferred from the data when absent (`d = tau`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<ObservationWindow>,
    #[serde(default = "default_na")]
    pub na_label: String,
    #[serde(default)]
    pub covariates: Vec<CovariateColumn>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self { window: None, na_label: default_na(), covariates: Vec::new() }
    }
}

pub fn read_schema(path: impl AsRef<Path>) -> Result<SchemaConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_schema(schema: &SchemaConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(schema)?)?;
    Ok(())
}

struct PendingClaim {
    reporting_calendar: i32,
    covariates: BTreeMap<String, CovariateValue>,
    records: Vec<DevelopmentRecord>,
    first_row: usize,
}

/// Read a long-format claims CSV.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Portfolio> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Read long-format claims from any reader; see [`ingest_csv`].
pub fn read_csv<R: Read>(reader: R, schema: &SchemaConfig) -> Result<Portfolio> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| -> Result<usize> {
        position.get(name).copied().ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let required: Vec<usize> = REQUIRED.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let covariate_idx: Vec<usize> = schema.covariates.iter().map(|c| col(&c.name)).collect::<Result<_>>()?;

    let mut pending: BTreeMap<String, PendingClaim> = BTreeMap::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(n + 2);
        let field = |i: usize| row.get(i).unwrap_or("");
        let claim_id = field(required[0]).to_string();
        if claim_id.is_empty() {
            return Err(consistency(line, "empty claim_id"));
        }
        let reporting: i32 = parse_int(field(required[1]), "reporting_year", line)?;
        let dev_year: i64 = parse_int(field(required[2]), "dev_year", line)?;
        if dev_year < 1 {
            return Err(consistency(line, "dev_year must be >= 1"));
        }
        let close = parse_flag(field(required[3]), "close", line)?;
        let payment = parse_flag(field(required[4]), "payment", line)?;
        let size: f64 = field(required[5])
            .parse()
            .map_err(|_| consistency(line, &format!("invalid size `{}`", field(required[5]))))?;
        if !(size.is_finite() && size >= 0.0) {
            return Err(consistency(line, &format!("size {size} must be finite and nonnegative")));
        }
        if size > 0.0 && !payment {
            return Err(consistency(line, &format!("size {size} > 0 with payment = 0")));
        }
        if size == 0.0 && payment {
            return Err(consistency(line, "payment = 1 with size 0"));
        }

        let mut covariates = BTreeMap::new();
        for (spec, &i) in schema.covariates.iter().zip(&covariate_idx) {
            covariates.insert(spec.name.clone(), parse_covariate(field(i), spec, &schema.na_label, line)?);
        }

        let entry = pending.entry(claim_id.clone()).or_insert_with(|| PendingClaim {
            reporting_calendar: reporting,
            covariates: covariates.clone(),
            records: Vec::new(),
            first_row: line,
        });
        if entry.reporting_calendar != reporting {
            return Err(consistency(
                line,
                &format!("claim `{claim_id}` has reporting year {reporting}, earlier rows say {}", entry.reporting_calendar),
            ));
        }
        if entry.covariates != covariates {
            return Err(consistency(
                line,
                &format!("static covariates of claim `{claim_id}` differ from row {}", entry.first_row),
            ));
        }
        if entry.records.iter().any(|r| r.dev_year == dev_year as u32) {
            return Err(Error::DuplicateRecord { claim_id, dev_year: dev_year as u32 });
        }
        entry.records.push(DevelopmentRecord::new(claim_id.clone(), dev_year as u32, close, payment, size));
    }

    let window = match schema.window {
        Some(w) => w,
        None => infer_window(&pending)?,
    };
    let mut claims = Vec::with_capacity(pending.len());
    for (id, p) in pending {
        let Some(r) = window.index_of(p.reporting_calendar) else {
            return Err(consistency(
                p.first_row,
                &format!("reporting year {} outside the observation window", p.reporting_calendar),
            ));
        };
        let mut claim = Claim::new(id, r, p.covariates, p.records);
        claim.derived_covariates = derive_static(&claim.static_covariates, schema)?;
        claims.push(claim);
    }
    Portfolio::new(window, schema.covariates.clone(), claims)
}

fn infer_window(pending: &BTreeMap<String, PendingClaim>) -> Result<ObservationWindow> {
    let Some(start) = pending.values().map(|p| p.reporting_calendar).min() else {
        return ObservationWindow::square(1, 1);
    };
    let end = pending
        .values()
        .flat_map(|p| {
            let r = p.reporting_calendar;
            std::iter::once(r).chain(p.records.iter().map(move |rec| r + rec.dev_year as i32 - 1))
        })
        .max()
        .unwrap_or(start);
    ObservationWindow::square(start, (end - start + 1) as u32)
}

fn derive_static(
    covariates: &BTreeMap<String, CovariateValue>,
    schema: &SchemaConfig,
) -> Result<BTreeMap<String, CovariateValue>> {
    let mut out = BTreeMap::new();
    for spec in &schema.covariates {
        let value = &covariates[&spec.name];
        match spec.kind {
            ColumnKind::Numeric => {
                if let Some(bp) = &spec.breakpoints {
                    let x = match value {
                        CovariateValue::Numeric(x) => Some(*x),
                        _ => None,
                    };
                    let label = bin_continuous(&[x], bp, spec.labels.as_deref(), &schema.na_label)?.remove(0);
                    out.insert(format!("{}_bin", spec.name), CovariateValue::Categorical(label));
                }
            }
            ColumnKind::Date => {
                let month = match value {
                    CovariateValue::Date(d) => CovariateValue::Categorical(d.month().to_string()),
                    _ => CovariateValue::Missing,
                };
                out.insert(format!("{}_month", spec.name), month);
            }
            ColumnKind::Categorical => {}
        }
    }
    Ok(out)
}

fn consistency(row: usize, message: &str) -> Error {
    Error::Consistency { row, message: message.to_string() }
}

fn parse_int<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| consistency(line, &format!("invalid {name} `{s}`")))
}

fn parse_flag(s: &str, name: &str, line: usize) -> Result<bool> {
    match s {
        "1" | "true" | "TRUE" => Ok(true),
        "0" | "false" | "FALSE" => Ok(false),
        _ => Err(consistency(line, &format!("invalid {name} flag `{s}`"))),
    }
}

fn parse_covariate(s: &str, spec: &CovariateColumn, na: &str, line: usize) -> Result<CovariateValue> {
    if s.is_empty() || s == na {
        return Ok(CovariateValue::Missing);
    }
    Ok(match spec.kind {
        ColumnKind::Categorical => CovariateValue::Categorical(s.to_string()),
        ColumnKind::Numeric => CovariateValue::Numeric(
            s.parse().map_err(|_| consistency(line, &format!("invalid numeric `{s}` in column `{}`", spec.name)))?,
        ),
        ColumnKind::Date => CovariateValue::Date(
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| consistency(line, &format!("invalid date `{s}` in column `{}`", spec.name)))?,
        ),
    })
}

fn format_covariate(v: &CovariateValue) -> String {
    match v {
        CovariateValue::Categorical(s) => s.clone(),
        CovariateValue::Numeric(x) => x.to_string(),
        CovariateValue::Date(d) => d.format("%Y-%m-%d").to_string(),
        CovariateValue::Missing => String::new(),
    }
}

/// Write a portfolio in the long-format CSV schema.
///
/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every value exactly.
pub fn write_csv<W: Write>(portfolio: &Portfolio, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(portfolio.covariate_columns.iter().map(|c| c.name.as_str()));
    w.write_record(&header)?;
    for claim in &portfolio.claims {
        let reporting = portfolio.window.calendar_year(claim.reporting_year).to_string();
        let covs: Vec<String> = portfolio
            .covariate_columns
            .iter()
            .map(|c| claim.static_covariates.get(&c.name).map(format_covariate).unwrap_or_default())
            .collect();
        for r in &claim.records {
            let mut row = vec![
                claim.claim_id.clone(),
                reporting.clone(),
                r.dev_year.to_string(),
                (r.close as u8).to_string(),
                (r.payment as u8).to_string(),
                r.size.to_string(),
            ];
            row.extend(covs.iter().cloned());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(portfolio: &Portfolio, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(portfolio, std::io::BufWriter::new(file))
}
