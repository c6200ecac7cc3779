//! Claim development data: the observation window, reported claims and their
//! yearly development records.
//!
//! Development is recorded in long format, one record per claim and
//! development year. A development year without a record carries no events
//! (no settlement, no payment). Settlement is absorbing: a claim has no
//! records after the year in which `close` is set.

mod binning;
mod io;

pub use binning::{bin_continuous, default_bin_labels};
pub use io::{
    emit_csv, ingest_csv, read_csv, read_schema, write_csv, write_schema, ColumnKind, CovariateColumn, SchemaConfig,
};

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar span of the observed data.
///
/// `tau` observed years starting at `start_year`; every claim settles within
/// `d` years after reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start_year: i32,
    pub tau: u32,
    pub d: u32,
}

impl ObservationWindow {
    pub fn new(start_year: i32, tau: u32, d: u32) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Config("observation window needs tau >= 1".into()));
        }
        if d == 0 {
            return Err(Error::Config("maximum settlement delay d must be >= 1".into()));
        }
        Ok(Self { start_year, tau, d })
    }

    /// Window with `d = tau`.
    pub fn square(start_year: i32, tau: u32) -> Result<Self> {
        Self::new(start_year, tau, tau)
    }

    /// Number of observed development years for a claim reported in
    /// (1-based) reporting year `r`.
    pub fn observed_years(&self, reporting_year: u32) -> u32 {
        self.d.min(self.tau + 1 - reporting_year)
    }

    pub fn calendar_year(&self, index: u32) -> i32 {
        self.start_year + index as i32 - 1
    }

    /// 1-based index of a calendar year inside the window, if it falls inside.
    pub fn index_of(&self, calendar_year: i32) -> Option<u32> {
        let idx = calendar_year - self.start_year + 1;
        (idx >= 1 && idx as u32 <= self.tau).then_some(idx as u32)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.start_year, self.tau, self.d).map(|_| ())
    }
}

/// Value of a static claim covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CovariateValue {
    Categorical(String),
    Numeric(f64),
    Date(NaiveDate),
    Missing,
}

impl CovariateValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, CovariateValue::Missing)
    }
}

/// One (claim, development year) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevelopmentRecord {
    pub claim_id: String,
    pub dev_year: u32,
    pub close: bool,
    pub payment: bool,
    pub size: f64,
    /// Calendar year `start_year + r_k + j - 2`.
    pub calendar_year: i32,
    /// Size paid in development year `j - 1` (0 without a record).
    pub size_last_year: f64,
    /// Total paid over development years before `j`.
    pub total_amount_paid: f64,
}

impl DevelopmentRecord {
    /// Record with derived fields zeroed; they are filled by
    /// [`derive_development_covariates`].
    pub fn new(claim_id: impl Into<String>, dev_year: u32, close: bool, payment: bool, size: f64) -> Self {
        Self {
            claim_id: claim_id.into(),
            dev_year,
            close,
            payment,
            size,
            calendar_year: 0,
            size_last_year: 0.0,
            total_amount_paid: 0.0,
        }
    }

    pub fn outcome(&self) -> YearOutcome {
        YearOutcome { close: self.close, payment: self.payment, size: self.size }
    }
}

/// The update vector of one development year: settlement, payment, size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct YearOutcome {
    pub close: bool,
    pub payment: bool,
    pub size: f64,
}

/// Development history of a claim before some development year.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct History {
    pub size_last_year: f64,
    pub total_amount_paid: f64,
    pub payment_last_year: bool,
    pub payment_dev1: bool,
    pub size_dev1: f64,
}

impl History {
    /// History after appending the outcome of development year `dev_year`.
    pub fn advance(&self, dev_year: u32, outcome: &YearOutcome) -> History {
        let mut next = History {
            size_last_year: outcome.size,
            total_amount_paid: self.total_amount_paid + outcome.size,
            payment_last_year: outcome.payment,
            payment_dev1: self.payment_dev1,
            size_dev1: self.size_dev1,
        };
        if dev_year == 1 {
            next.payment_dev1 = outcome.payment;
            next.size_dev1 = outcome.size;
        }
        next
    }
}

/// A reported claim with its static covariates and observed development.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    /// 1-based reporting year index within the window.
    pub reporting_year: u32,
    pub static_covariates: BTreeMap<String, CovariateValue>,
    /// Covariates computed from static ones at ingestion (bins, months).
    #[serde(default)]
    pub derived_covariates: BTreeMap<String, CovariateValue>,
    /// Number of observed development years, `min(d, tau - r + 1)`.
    pub observed_years: u32,
    pub records: Vec<DevelopmentRecord>,
}

impl Claim {
    pub fn new(
        claim_id: impl Into<String>,
        reporting_year: u32,
        static_covariates: BTreeMap<String, CovariateValue>,
        records: Vec<DevelopmentRecord>,
    ) -> Self {
        Self {
            claim_id: claim_id.into(),
            reporting_year,
            static_covariates,
            derived_covariates: BTreeMap::new(),
            observed_years: 0,
            records,
        }
    }

    /// Development year in which the claim settled, if observed.
    pub fn settlement_year(&self) -> Option<u32> {
        self.records.iter().find(|r| r.close).map(|r| r.dev_year)
    }

    pub fn is_settled(&self) -> bool {
        self.settlement_year().is_some()
    }

    /// Last development year with observed information: the settlement year
    /// or the last observed year.
    pub fn last_observed_year(&self) -> u32 {
        self.settlement_year().unwrap_or(self.observed_years)
    }

    /// Outcome of development year `j`; years without a record carry no events.
    pub fn outcome(&self, dev_year: u32) -> YearOutcome {
        self.records
            .binary_search_by_key(&dev_year, |r| r.dev_year)
            .map(|i| self.records[i].outcome())
            .unwrap_or_default()
    }

    /// Dense outcomes for development years `1..=last_observed_year()`.
    pub fn dense_outcomes(&self) -> Vec<YearOutcome> {
        let last = self.last_observed_year() as usize;
        let mut out = vec![YearOutcome::default(); last];
        for r in &self.records {
            if (r.dev_year as usize) <= last {
                out[r.dev_year as usize - 1] = r.outcome();
            }
        }
        out
    }

    /// History state at the start of development year `dev_year`.
    pub fn history_before(&self, dev_year: u32) -> History {
        let mut h = History::default();
        for j in 1..dev_year {
            h = h.advance(j, &self.outcome(j));
        }
        h
    }

    pub fn covariate(&self, name: &str) -> Option<&CovariateValue> {
        self.static_covariates.get(name).or_else(|| self.derived_covariates.get(name))
    }
}

/// A reserving data set: window, claims, and per-reporting-year claim counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Portfolio {
    pub window: ObservationWindow,
    /// Static covariate columns in file order.
    pub covariate_columns: Vec<CovariateColumn>,
    pub claims: Vec<Claim>,
    /// `reported_counts[i - 1]` = number of claims reported in year `i`.
    pub reported_counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Portfolio {
    fn eq(&self, other: &Self) -> bool {
        self.window == other.window
            && self.covariate_columns == other.covariate_columns
            && self.claims == other.claims
            && self.reported_counts == other.reported_counts
    }
}

impl Portfolio {
    /// Validate claims against the window and derive development covariates.
    ///
    /// Claims are sorted by id and records by development year.
    pub fn new(window: ObservationWindow, covariate_columns: Vec<CovariateColumn>, mut claims: Vec<Claim>) -> Result<Self> {
        window.validate()?;
        claims.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        let mut index = HashMap::with_capacity(claims.len());
        let mut reported_counts = vec![0usize; window.tau as usize];
        for (pos, claim) in claims.iter_mut().enumerate() {
            if index.insert(claim.claim_id.clone(), pos).is_some() {
                return Err(Error::InvalidPortfolio(format!("claim id `{}` appears twice", claim.claim_id)));
            }
            if claim.reporting_year == 0 || claim.reporting_year > window.tau {
                return Err(Error::InvalidPortfolio(format!(
                    "claim `{}` has reporting year {} outside 1..={}",
                    claim.claim_id, claim.reporting_year, window.tau
                )));
            }
            claim.observed_years = window.observed_years(claim.reporting_year);
            claim.records.sort_by_key(|r| r.dev_year);
            validate_records(claim)?;
            reported_counts[claim.reporting_year as usize - 1] += 1;
        }
        let mut portfolio = Self { window, covariate_columns, claims, reported_counts, index };
        derive_in_place(&mut portfolio);
        Ok(portfolio)
    }

    pub fn n_claims(&self) -> usize {
        self.claims.len()
    }

    pub fn n_records(&self) -> usize {
        self.claims.iter().map(|c| c.records.len()).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &DevelopmentRecord> {
        self.claims.iter().flat_map(|c| c.records.iter())
    }

    pub fn claim(&self, claim_id: &str) -> Option<&Claim> {
        self.claim_index(claim_id).map(|i| &self.claims[i])
    }

    pub fn claim_index(&self, claim_id: &str) -> Option<usize> {
        if self.index.len() == self.claims.len() {
            self.index.get(claim_id).copied()
        } else {
            self.claims.iter().position(|c| c.claim_id == claim_id)
        }
    }

    /// Restrict to data known at the end of window year `tau`: claims reported
    /// by then and records from calendar years up to it.
    pub fn truncate(&self, tau: u32) -> Result<Portfolio> {
        if tau == 0 || tau > self.window.tau {
            return Err(Error::Config(format!(
                "truncation year {tau} outside the observed window 1..={}",
                self.window.tau
            )));
        }
        let window = ObservationWindow { tau, ..self.window };
        let claims = self
            .claims
            .iter()
            .filter(|c| c.reporting_year <= tau)
            .map(|c| {
                let last = window.observed_years(c.reporting_year);
                let mut claim = c.clone();
                claim.records.retain(|r| r.dev_year <= last);
                claim
            })
            .collect();
        Portfolio::new(window, self.covariate_columns.clone(), claims)
    }

    /// Same data with the window moved by `years` calendar years.
    pub fn shift_calendar(&self, years: i32) -> Result<Portfolio> {
        let window = ObservationWindow { start_year: self.window.start_year + years, ..self.window };
        Portfolio::new(window, self.covariate_columns.clone(), self.claims.clone())
    }
}

fn validate_records(claim: &Claim) -> Result<()> {
    let mut previous: Option<u32> = None;
    let mut closed = false;
    for r in &claim.records {
        if r.claim_id != claim.claim_id {
            return Err(Error::InvalidPortfolio(format!(
                "record for `{}` attached to claim `{}`",
                r.claim_id, claim.claim_id
            )));
        }
        if previous == Some(r.dev_year) {
            return Err(Error::DuplicateRecord { claim_id: claim.claim_id.clone(), dev_year: r.dev_year });
        }
        if r.dev_year == 0 || r.dev_year > claim.observed_years {
            return Err(Error::InvalidPortfolio(format!(
                "claim `{}` has a record in development year {} outside 1..={}",
                claim.claim_id, r.dev_year, claim.observed_years
            )));
        }
        if closed {
            return Err(Error::InvalidPortfolio(format!(
                "claim `{}` reopens in development year {} after settlement",
                claim.claim_id, r.dev_year
            )));
        }
        if !(r.size.is_finite() && r.size >= 0.0) {
            return Err(Error::InvalidPortfolio(format!(
                "claim `{}` has invalid size {} in development year {}",
                claim.claim_id, r.size, r.dev_year
            )));
        }
        if (r.size > 0.0) != r.payment {
            return Err(Error::InvalidPortfolio(format!(
                "claim `{}`: payment flag {} inconsistent with size {} in development year {}",
                claim.claim_id, r.payment as u8, r.size, r.dev_year
            )));
        }
        closed = r.close;
        previous = Some(r.dev_year);
    }
    Ok(())
}

fn derive_in_place(portfolio: &mut Portfolio) {
    let window = portfolio.window;
    for claim in &mut portfolio.claims {
        let mut total = 0.0;
        let mut prev: Option<(u32, f64)> = None;
        for r in &mut claim.records {
            r.calendar_year = window.calendar_year(claim.reporting_year + r.dev_year - 1);
            r.size_last_year = match prev {
                Some((j, size)) if j + 1 == r.dev_year => size,
                _ => 0.0,
            };
            r.total_amount_paid = total;
            total += r.size;
            prev = Some((r.dev_year, r.size));
        }
    }
}

/// Fill `calendar_year`, `size_last_year` and `total_amount_paid` on every
/// record. Records must be sorted per claim by development year.
pub fn derive_development_covariates(portfolio: &Portfolio) -> Portfolio {
    let mut out = portfolio.clone();
    derive_in_place(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(id: &str, r: u32, sizes: &[(u32, f64)], close_at: Option<u32>) -> Claim {
        let records = sizes
            .iter()
            .map(|&(j, s)| DevelopmentRecord::new(id, j, close_at == Some(j), s > 0.0, s))
            .collect();
        Claim::new(id, r, BTreeMap::new(), records)
    }

    #[test]
    fn derived_covariates_follow_definitions() {
        let w = ObservationWindow::square(2011, 3).unwrap();
        let p = Portfolio::new(w, vec![], vec![claim("a", 1, &[(1, 100.0), (2, 50.0)], None)]).unwrap();
        let recs = &p.claims[0].records;
        assert_eq!(recs[0].size_last_year, 0.0);
        assert_eq!(recs[0].total_amount_paid, 0.0);
        assert_eq!(recs[0].calendar_year, 2011);
        assert_eq!(recs[1].size_last_year, 100.0);
        assert_eq!(recs[1].total_amount_paid, 100.0);
        assert_eq!(recs[1].calendar_year, 2012);
    }

    #[test]
    fn derived_covariates_with_zero_year() {
        let w = ObservationWindow::square(2011, 3).unwrap();
        let p = Portfolio::new(w, vec![], vec![claim("a", 1, &[(1, 10.0), (2, 0.0), (3, 5.0)], None)]).unwrap();
        let r3 = &p.claims[0].records[2];
        assert_eq!(r3.size_last_year, 0.0);
        assert_eq!(r3.total_amount_paid, 10.0);
        // a gap behaves like a zero year
        let p = Portfolio::new(w, vec![], vec![claim("b", 1, &[(1, 10.0), (3, 5.0)], None)]).unwrap();
        let r3 = &p.claims[0].records[1];
        assert_eq!(r3.size_last_year, 0.0);
        assert_eq!(r3.total_amount_paid, 10.0);
        assert_eq!(p.claims[0].history_before(3).total_amount_paid, 10.0);
    }

    #[test]
    fn observed_years_and_counts() {
        let w = ObservationWindow::square(2011, 4).unwrap();
        let p = Portfolio::new(
            w,
            vec![],
            vec![claim("a", 1, &[(1, 1.0)], None), claim("b", 3, &[], None), claim("c", 3, &[], None)],
        )
        .unwrap();
        assert_eq!(p.reported_counts, vec![1, 0, 2, 0]);
        assert_eq!(p.claims[0].observed_years, 4);
        assert_eq!(p.claims[1].observed_years, 2);
        assert_eq!(p.reported_counts.iter().sum::<usize>(), p.n_claims());
    }

    #[test]
    fn rejects_reopening_and_late_records() {
        let w = ObservationWindow::square(2011, 3).unwrap();
        let err = Portfolio::new(w, vec![], vec![claim("a", 1, &[(1, 0.0), (2, 5.0)], Some(1))]).unwrap_err();
        assert!(err.to_string().contains("reopens"));
        let err = Portfolio::new(w, vec![], vec![claim("a", 3, &[(1, 0.0), (2, 5.0)], None)]).unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn rejects_duplicate_years() {
        let w = ObservationWindow::square(2011, 3).unwrap();
        let err = Portfolio::new(w, vec![], vec![claim("a", 1, &[(1, 1.0), (1, 2.0)], None)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateRecord { dev_year: 1, .. }));
    }

    #[test]
    fn truncation_drops_future_calendar_years() {
        let w = ObservationWindow::new(2011, 4, 3).unwrap();
        let p = Portfolio::new(
            w,
            vec![],
            vec![claim("a", 1, &[(1, 1.0), (2, 2.0), (3, 3.0)], Some(3)), claim("b", 4, &[(1, 4.0)], None)],
        )
        .unwrap();
        let t = p.truncate(2).unwrap();
        assert_eq!(t.n_claims(), 1);
        assert_eq!(t.claims[0].records.len(), 2);
        assert_eq!(t.claims[0].observed_years, 2);
        assert!(!t.claims[0].is_settled());
    }
}
