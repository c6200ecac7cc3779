//! Encoding of named covariates into numeric rows.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureRef, FeatureRow, NA_LEVEL};

/// Logs the first occurrence of an event per owner.
#[derive(Debug, Default)]
pub(crate) struct WarnOnce(AtomicBool);

impl WarnOnce {
    pub(crate) fn warn(&self, message: impl FnOnce() -> String) {
        if !self.0.swap(true, AtomicOrdering::Relaxed) {
            log::warn!("{}", message());
        }
    }
}

impl Clone for WarnOnce {
    fn clone(&self) -> Self {
        WarnOnce::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    Numeric,
    /// `levels[0]` is the reference level.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub feature: FeatureRef,
    #[serde(flatten)]
    pub kind: TermKind,
    #[serde(skip)]
    lookup: OnceLock<HashMap<String, usize>>,
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.feature == other.feature && self.kind == other.kind
    }
}

impl Term {
    pub fn new(feature: FeatureRef, kind: TermKind) -> Self {
        Self { feature, kind, lookup: OnceLock::new() }
    }

    fn level_index(&self, level: &str) -> Option<usize> {
        let TermKind::Categorical { levels } = &self.kind else { return None };
        self.lookup
            .get_or_init(|| levels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect())
            .get(level)
            .copied()
    }

    /// Encoded value of this term: a level index for categorical terms
    /// (unseen levels map to the reference, flagged by `unseen`), or the raw
    /// number.
    fn value(&self, row: &FeatureRow<'_>, unseen: &mut bool) -> Result<TermValue> {
        let f = row.get(&self.feature)?;
        match (&self.kind, f) {
            (TermKind::Numeric, Feature::Number(x)) => Ok(TermValue::Number(x)),
            (TermKind::Numeric, Feature::Missing) => Ok(TermValue::Number(f64::NAN)),
            (TermKind::Numeric, Feature::Level(l)) => Err(Error::Evaluation(format!(
                "covariate `{}` was numeric in training but has level `{l}`",
                self.feature
            ))),
            (TermKind::Categorical { .. }, f) => {
                let level = match f {
                    Feature::Level(l) => l.into_owned(),
                    Feature::Number(x) => x.to_string(),
                    Feature::Missing => NA_LEVEL.to_string(),
                };
                Ok(TermValue::Level(self.level_index(&level).unwrap_or_else(|| {
                    *unseen = true;
                    0
                })))
            }
        }
    }

    fn n_columns(&self) -> usize {
        match &self.kind {
            TermKind::Numeric => 1,
            TermKind::Categorical { levels } => levels.len().saturating_sub(1),
        }
    }
}

enum TermValue {
    Number(f64),
    Level(usize),
}

/// Numbers before strings, numbers by value.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a == NA_LEVEL, b == NA_LEVEL) {
        (true, true) => return Ordering::Equal,
        (true, false) => return Ordering::Greater,
        (false, true) => return Ordering::Less,
        _ => {}
    }
    let key = |s: &str| -> Vec<std::result::Result<f64, String>> {
        s.split(':').map(|p| p.parse::<f64>().map_err(|_| p.to_string())).collect()
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        let o = match (x, y) {
            (Ok(x), Ok(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
            (Ok(_), Err(_)) => Ordering::Less,
            (Err(_), Ok(_)) => Ordering::Greater,
            (Err(x), Err(y)) => x.cmp(y),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    ka.len().cmp(&kb.len())
}

/// Infer term kinds from training rows.
///
/// Categorical levels are ordered naturally; the first becomes the reference.
pub fn infer_terms(features: &[FeatureRef], rows: &[FeatureRow<'_>]) -> Result<Vec<Term>> {
    let mut terms = Vec::with_capacity(features.len());
    for feature in features {
        let mut levels = BTreeSet::new();
        let mut numeric = false;
        let mut missing_numeric = false;
        for row in rows {
            match row.get(feature)? {
                Feature::Level(l) => {
                    if !levels.contains(l.as_ref()) {
                        levels.insert(l.into_owned());
                    }
                }
                Feature::Number(_) => numeric = true,
                Feature::Missing => missing_numeric = true,
            }
        }
        if numeric && !levels.is_empty() {
            return Err(Error::Config(format!("covariate `{feature}` mixes numeric values and levels")));
        }
        let kind = if numeric || (levels.is_empty() && missing_numeric) {
            TermKind::Numeric
        } else {
            let mut levels: Vec<String> = levels.into_iter().collect();
            if missing_numeric {
                levels.push(NA_LEVEL.to_string());
            }
            levels.sort_by(|a, b| natural_cmp(a, b));
            TermKind::Categorical { levels }
        };
        terms.push(Term::new(feature.clone(), kind));
    }
    Ok(terms)
}

/// Dummy-coded GLM design: intercept, treatment contrasts for categorical
/// terms, raw values for numeric terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignEncoder {
    pub terms: Vec<Term>,
    pub columns: Vec<String>,
    #[serde(skip)]
    unseen_warning: WarnOnce,
}

impl PartialEq for DesignEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && self.columns == other.columns
    }
}

impl DesignEncoder {
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut columns = vec!["(Intercept)".to_string()];
        for t in &terms {
            match &t.kind {
                TermKind::Numeric => columns.push(t.feature.to_string()),
                TermKind::Categorical { levels } => {
                    columns.extend(levels.iter().skip(1).map(|l| format!("{}={}", t.feature, l)))
                }
            }
        }
        Self { terms, columns, unseen_warning: WarnOnce::default() }
    }

    pub fn build(features: &[FeatureRef], rows: &[FeatureRow<'_>]) -> Result<Self> {
        Ok(Self::from_terms(infer_terms(features, rows)?))
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Write the design row into `out` (length `n_columns()`).
    pub fn encode_into(&self, row: &FeatureRow<'_>, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        out[0] = 1.0;
        let mut col = 1;
        for t in &self.terms {
            let mut unseen = false;
            match t.value(row, &mut unseen)? {
                TermValue::Number(x) => {
                    if x.is_nan() {
                        return Err(Error::Evaluation(format!("numeric covariate `{}` is missing", t.feature)));
                    }
                    out[col] = x;
                }
                TermValue::Level(i) => {
                    if i > 0 {
                        out[col + i - 1] = 1.0;
                    }
                }
            }
            if unseen {
                self.unseen_warning.warn(|| {
                    format!("unseen level of covariate `{}` mapped to its reference level", t.feature)
                });
            }
            col += t.n_columns();
        }
        Ok(())
    }

    pub fn encode(&self, row: &FeatureRow<'_>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_columns()];
        self.encode_into(row, &mut out)?;
        Ok(out)
    }

    pub fn design(&self, rows: &[FeatureRow<'_>]) -> Result<super::glm::Design> {
        let p = self.n_columns();
        let mut data = vec![0.0; rows.len() * p];
        for (row, chunk) in rows.iter().zip(data.chunks_mut(p.max(1))) {
            self.encode_into(row, chunk)?;
        }
        Ok(super::glm::Design::new(self.columns.clone(), rows.len(), data))
    }
}

/// Raw-valued encoding for trees: numeric values as-is (NaN when missing),
/// categorical levels as their index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEncoder {
    pub terms: Vec<Term>,
    #[serde(skip)]
    unseen_warning: WarnOnce,
}

impl PartialEq for TreeEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl TreeEncoder {
    pub fn build(features: &[FeatureRef], rows: &[FeatureRow<'_>]) -> Result<Self> {
        Ok(Self { terms: infer_terms(features, rows)?, unseen_warning: WarnOnce::default() })
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.feature.to_string()).collect()
    }

    pub fn kinds(&self) -> Vec<super::gbm::FeatureKind> {
        self.terms
            .iter()
            .map(|t| match &t.kind {
                TermKind::Numeric => super::gbm::FeatureKind::Numeric,
                TermKind::Categorical { levels } => super::gbm::FeatureKind::Categorical { n_levels: levels.len() },
            })
            .collect()
    }

    pub fn encode(&self, row: &FeatureRow<'_>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut unseen = false;
            out.push(match t.value(row, &mut unseen)? {
                TermValue::Number(x) => x,
                TermValue::Level(i) => i as f64,
            });
            if unseen {
                self.unseen_warning.warn(|| {
                    format!("unseen level of covariate `{}` mapped to its reference level", t.feature)
                });
            }
        }
        Ok(out)
    }

    pub fn data(&self, rows: &[FeatureRow<'_>]) -> Result<super::gbm::GbmData> {
        let mut columns = vec![Vec::with_capacity(rows.len()); self.terms.len()];
        for row in rows {
            for (c, v) in columns.iter_mut().zip(self.encode(row)?) {
                c.push(v);
            }
        }
        if columns.is_empty() {
            return Ok(super::gbm::GbmData::empty(rows.len()));
        }
        super::gbm::GbmData::new(self.names(), self.kinds(), columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Claim, CovariateValue, History};
    use crate::features::PartialOutcome;
    use std::collections::BTreeMap;

    fn claim(cov: &str) -> Claim {
        let mut m = BTreeMap::new();
        m.insert("coverage".to_string(), CovariateValue::Categorical(cov.into()));
        Claim::new(cov, 1, m, vec![])
    }

    #[test]
    fn natural_level_order() {
        let mut v = vec!["10", "2", "NA", "1", "b", "a"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, vec!["1", "2", "10", "a", "b", "NA"]);
    }

    #[test]
    fn dummy_coding_and_unseen_levels() {
        let claims = [claim("theft"), claim("building"), claim("contents")];
        let rows: Vec<_> = claims
            .iter()
            .map(|c| FeatureRow::new(c, 1, History::default(), PartialOutcome::default()))
            .collect();
        let enc = DesignEncoder::build(&[FeatureRef::parse("coverage").unwrap()], &rows).unwrap();
        assert_eq!(enc.columns, vec!["(Intercept)", "coverage=contents", "coverage=theft"]);
        assert_eq!(enc.encode(&rows[0]).unwrap(), vec![1.0, 0.0, 1.0]);
        assert_eq!(enc.encode(&rows[1]).unwrap(), vec![1.0, 0.0, 0.0]);
        let other = claim("fire");
        let row = FeatureRow::new(&other, 1, History::default(), PartialOutcome::default());
        assert_eq!(enc.encode(&row).unwrap(), vec![1.0, 0.0, 0.0]);
    }
}
