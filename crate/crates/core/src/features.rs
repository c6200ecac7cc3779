//! Named covariates of a claim-year as seen by the layer engines.
//!
//! Training rows and simulated rows go through the same [`FeatureRow`], so a
//! fitted layer sees identical covariates in both settings.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Claim, CovariateValue, History};
use crate::error::{Error, Result};

/// Level used for categorical covariates without a registered value.
pub const NA_LEVEL: &str = "NA";

/// A resolved covariate reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureRef {
    DevYear,
    ReportingYear,
    CalendarYear,
    SizeLastYear,
    TotalAmountPaid,
    PaymentLastYear,
    /// Current-year settlement outcome (layer covariate).
    Close,
    Payment,
    Size,
    PaymentDev1,
    SizeDev1,
    Static(String),
    /// `a:b` — categorical interaction of two or more covariates.
    Interaction(Vec<FeatureRef>),
}

impl FeatureRef {
    pub fn parse(name: &str) -> Result<FeatureRef> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Config("empty covariate name".into()));
        }
        if name.contains(':') {
            let parts = name.split(':').map(FeatureRef::parse).collect::<Result<Vec<_>>>()?;
            if parts.iter().any(|p| matches!(p, FeatureRef::Interaction(_))) {
                return Err(Error::Config(format!("nested interaction `{name}`")));
            }
            return Ok(FeatureRef::Interaction(parts));
        }
        Ok(match name {
            "dev_year" => FeatureRef::DevYear,
            "reporting_year" => FeatureRef::ReportingYear,
            "calendar_year" => FeatureRef::CalendarYear,
            "size_last_year" => FeatureRef::SizeLastYear,
            "total_amount_paid" => FeatureRef::TotalAmountPaid,
            "payment_last_year" => FeatureRef::PaymentLastYear,
            "close" => FeatureRef::Close,
            "payment" => FeatureRef::Payment,
            "size" => FeatureRef::Size,
            "payment_dev1" => FeatureRef::PaymentDev1,
            "size_dev1" => FeatureRef::SizeDev1,
            other => FeatureRef::Static(other.to_string()),
        })
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Layer outcomes of the current year referenced by this covariate.
    pub fn current_outcomes(&self) -> Vec<FeatureRef> {
        match self {
            FeatureRef::Close | FeatureRef::Payment | FeatureRef::Size => vec![self.clone()],
            FeatureRef::Interaction(parts) => parts.iter().flat_map(|p| p.current_outcomes()).collect(),
            _ => Vec::new(),
        }
    }

    /// Whether the covariate depends on year-1 outcomes copied into the
    /// static information.
    pub fn uses_dev1(&self) -> bool {
        match self {
            FeatureRef::PaymentDev1 | FeatureRef::SizeDev1 => true,
            FeatureRef::Interaction(parts) => parts.iter().any(|p| p.uses_dev1()),
            _ => false,
        }
    }
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureRef::DevYear => "dev_year",
            FeatureRef::ReportingYear => "reporting_year",
            FeatureRef::CalendarYear => "calendar_year",
            FeatureRef::SizeLastYear => "size_last_year",
            FeatureRef::TotalAmountPaid => "total_amount_paid",
            FeatureRef::PaymentLastYear => "payment_last_year",
            FeatureRef::Close => "close",
            FeatureRef::Payment => "payment",
            FeatureRef::Size => "size",
            FeatureRef::PaymentDev1 => "payment_dev1",
            FeatureRef::SizeDev1 => "size_dev1",
            FeatureRef::Static(name) => name,
            FeatureRef::Interaction(parts) => {
                let names: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                return f.write_str(&names.join(":"));
            }
        };
        f.write_str(s)
    }
}

impl TryFrom<String> for FeatureRef {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        FeatureRef::parse(&s)
    }
}

impl From<FeatureRef> for String {
    fn from(f: FeatureRef) -> String {
        f.to_string()
    }
}

/// Value of one covariate for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature<'a> {
    Level(Cow<'a, str>),
    Number(f64),
    Missing,
}

/// Current-year layer outcomes known so far (lower layers only).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PartialOutcome {
    pub close: Option<bool>,
    pub payment: Option<bool>,
    pub size: Option<f64>,
}

/// Covariates of claim `claim` in development year `dev_year`.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRow<'a> {
    pub claim: &'a Claim,
    pub dev_year: u32,
    pub history: History,
    pub current: PartialOutcome,
}

fn flag(b: bool) -> Feature<'static> {
    Feature::Level(Cow::Borrowed(if b { "1" } else { "0" }))
}

fn int_level(i: u32) -> Feature<'static> {
    Feature::Level(Cow::Owned(i.to_string()))
}

impl<'a> FeatureRow<'a> {
    pub fn new(claim: &'a Claim, dev_year: u32, history: History, current: PartialOutcome) -> Self {
        Self { claim, dev_year, history, current }
    }

    pub fn get(&self, feature: &FeatureRef) -> Result<Feature<'a>> {
        let missing = || Error::MissingCovariate(feature.to_string());
        Ok(match feature {
            FeatureRef::DevYear => int_level(self.dev_year),
            FeatureRef::ReportingYear => int_level(self.claim.reporting_year),
            FeatureRef::CalendarYear => int_level(self.claim.reporting_year + self.dev_year - 1),
            FeatureRef::SizeLastYear => Feature::Number(self.history.size_last_year),
            FeatureRef::TotalAmountPaid => Feature::Number(self.history.total_amount_paid),
            FeatureRef::PaymentLastYear => {
                if self.dev_year == 1 {
                    flag(false)
                } else {
                    flag(self.history.payment_last_year)
                }
            }
            FeatureRef::Close => flag(self.current.close.ok_or_else(missing)?),
            FeatureRef::Payment => flag(self.current.payment.ok_or_else(missing)?),
            FeatureRef::Size => Feature::Number(self.current.size.ok_or_else(missing)?),
            FeatureRef::PaymentDev1 => flag(self.history.payment_dev1),
            FeatureRef::SizeDev1 => Feature::Number(self.history.size_dev1),
            FeatureRef::Static(name) => match self.claim.covariate(name).ok_or_else(missing)? {
                CovariateValue::Categorical(s) => Feature::Level(Cow::Borrowed(s.as_str())),
                CovariateValue::Numeric(x) => Feature::Number(*x),
                CovariateValue::Date(d) => Feature::Number(chrono::Datelike::num_days_from_ce(d) as f64),
                CovariateValue::Missing => Feature::Missing,
            },
            FeatureRef::Interaction(parts) => {
                let mut level = String::new();
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        level.push(':');
                    }
                    match self.get(p)? {
                        Feature::Level(s) => level.push_str(&s),
                        Feature::Number(x) => level.push_str(&x.to_string()),
                        Feature::Missing => level.push_str(NA_LEVEL),
                    }
                }
                Feature::Level(Cow::Owned(level))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn names_round_trip() {
        for name in ["dev_year", "close", "coverage", "dev_year:rep_month", "size_dev1"] {
            assert_eq!(FeatureRef::parse(name).unwrap().to_string(), name);
        }
        assert!(FeatureRef::parse("").is_err());
    }

    #[test]
    fn missing_current_outcome_is_an_error() {
        let claim = Claim::new("a", 1, BTreeMap::new(), vec![]);
        let row = FeatureRow::new(&claim, 2, History::default(), PartialOutcome::default());
        let err = row.get(&FeatureRef::Close).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate(n) if n == "close"));
        let err = row.get(&FeatureRef::parse("coverage").unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate(n) if n == "coverage"));
    }

    #[test]
    fn interaction_levels() {
        let mut cov = BTreeMap::new();
        cov.insert("rep_month".to_string(), CovariateValue::Categorical("12".into()));
        let claim = Claim::new("a", 3, cov, vec![]);
        let row = FeatureRow::new(&claim, 2, History::default(), PartialOutcome::default());
        let f = row.get(&FeatureRef::parse("dev_year:rep_month").unwrap()).unwrap();
        assert_eq!(f, Feature::Level(Cow::Owned("2:12".into())));
        assert_eq!(row.get(&FeatureRef::CalendarYear).unwrap(), Feature::Level(Cow::Owned("4".into())));
    }
}
