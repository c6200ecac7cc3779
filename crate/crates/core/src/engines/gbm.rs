//! Gradient-boosted regression trees with Bernoulli and gamma losses.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::density::{logistic, Family};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbmLoss {
    Bernoulli,
    Gamma,
}

impl GbmLoss {
    pub fn family(self) -> Family {
        match self {
            GbmLoss::Bernoulli => Family::Bernoulli,
            GbmLoss::Gamma => Family::Gamma,
        }
    }

    pub fn from_family(family: Family) -> Result<Self> {
        match family {
            Family::Bernoulli => Ok(GbmLoss::Bernoulli),
            Family::Gamma => Ok(GbmLoss::Gamma),
            Family::Poisson => Err(Error::Config("GBM engine supports bernoulli and gamma losses only".into())),
        }
    }

    fn unit_deviance(self, y: f64, f: f64) -> f64 {
        match self {
            // -2 (y f - log(1 + e^f))
            GbmLoss::Bernoulli => -2.0 * (y * f - softplus(f)),
            GbmLoss::Gamma => 2.0 * (y * (-f).exp() + f - y.ln() - 1.0),
        }
    }

    /// Negative gradient of the unit loss on the link scale.
    fn residual(self, y: f64, f: f64) -> f64 {
        match self {
            GbmLoss::Bernoulli => y - logistic(f),
            GbmLoss::Gamma => y * (-f).exp() - 1.0,
        }
    }
}

fn softplus(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub bag_fraction: f64,
    /// Minimum total observation weight in every leaf.
    pub min_node_weight: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: 2, shrinkage: 0.05, bag_fraction: 0.75, min_node_weight: 10.0 }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("GBM depth must be at least 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!("GBM shrinkage {} outside (0, 1]", self.shrinkage)));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::Config(format!("GBM bag fraction {} outside (0, 1]", self.bag_fraction)));
        }
        if !(self.min_node_weight >= 0.0 && self.min_node_weight.is_finite()) {
            return Err(Error::Config(format!("GBM minimum node weight {} invalid", self.min_node_weight)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { n_levels: usize },
}

/// Column-major training data; categorical values are level indices,
/// missing numeric values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmData {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl GbmData {
    pub fn new(names: Vec<String>, kinds: Vec<FeatureKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != kinds.len() || names.len() != columns.len() {
            return Err(Error::Input("GBM data: names, kinds and columns differ in length".into()));
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Input("GBM data: columns differ in length".into()));
        }
        for (c, k) in columns.iter().zip(&kinds) {
            if let FeatureKind::Categorical { n_levels } = k {
                if c.iter().any(|&v| !(v >= 0.0 && (v as usize) < *n_levels && v.fract() == 0.0)) {
                    return Err(Error::Input("GBM data: invalid categorical code".into()));
                }
            }
        }
        Ok(Self { names, kinds, columns, n_rows })
    }

    /// Data without covariates.
    pub fn empty(n_rows: usize) -> Self {
        Self { names: vec![], kinds: vec![], columns: vec![], n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when `x < threshold` or missing.
    Below { threshold: f64 },
    /// Left when the level index is in `levels`.
    InSet { levels: Vec<u32> },
}

impl SplitRule {
    fn goes_left(&self, x: f64) -> bool {
        match self {
            SplitRule::Below { threshold } => x.is_nan() || x < *threshold,
            SplitRule::InSet { levels } => levels.binary_search(&(x as u32)).is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, rule: SplitRule, left: usize, right: usize, improvement: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, rule, left, right, .. } => {
                    at = if rule.goes_left(row[*feature]) { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmFit {
    pub loss: GbmLoss,
    pub initial_value: f64,
    pub shrinkage: f64,
    pub params: GbmParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Weighted training deviance after 0, 1, ... trees.
    pub deviance_trace: Vec<f64>,
    /// Pearson dispersion of the gamma loss, when estimated.
    #[serde(default)]
    pub dispersion: Option<f64>,
}

impl GbmFit {
    pub fn predict_link(&self, row: &[f64]) -> f64 {
        self.initial_value + self.shrinkage * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let f = self.predict_link(row);
        match self.loss {
            GbmLoss::Bernoulli => logistic(f).clamp(1e-15, 1.0 - 1e-15),
            GbmLoss::Gamma => f.exp().clamp(f64::MIN_POSITIVE, f64::MAX),
        }
    }

    /// Prediction using only the first `n` trees.
    pub fn predict_link_truncated(&self, row: &[f64], n: usize) -> f64 {
        self.initial_value + self.shrinkage * self.trees.iter().take(n).map(|t| t.predict(row)).sum::<f64>()
    }

    /// Total split improvement per covariate, scaled to sum to 100.
    pub fn importance(&self) -> Result<Vec<(String, f64)>> {
        if self.trees.is_empty() {
            return Err(Error::UndefinedImportance);
        }
        let mut totals = vec![0.0; self.feature_names.len()];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, improvement, .. } = n {
                    totals[*feature] += improvement;
                }
            }
        }
        let sum: f64 = totals.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::UndefinedImportance);
        }
        Ok(self.feature_names.iter().cloned().zip(totals.into_iter().map(|t| 100.0 * t / sum)).collect())
    }
}

pub fn gbm_importance(fit: &GbmFit) -> Result<Vec<(String, f64)>> {
    fit.importance()
}

struct Grower<'a> {
    data: &'a GbmData,
    sorted: &'a [Vec<usize>],
    params: &'a GbmParams,
    /// Node id per row; `usize::MAX` when out of bag.
    node_of: Vec<usize>,
    residual: &'a [f64],
    weight: &'a [f64],
}

struct Candidate {
    feature: usize,
    rule: SplitRule,
    gain: f64,
}

impl Grower<'_> {
    fn best_split(&self, node: usize, members: &[usize]) -> Option<Candidate> {
        let (mut s_tot, mut w_tot) = (0.0, 0.0);
        for &i in members {
            s_tot += self.weight[i] * self.residual[i];
            w_tot += self.weight[i];
        }
        if w_tot <= 0.0 {
            return None;
        }
        let parent = s_tot * s_tot / w_tot;
        let min_w = self.params.min_node_weight.max(1e-12);
        let mut best: Option<Candidate> = None;
        let mut consider = |feature: usize, rule: SplitRule, s_l: f64, w_l: f64| {
            let (s_r, w_r) = (s_tot - s_l, w_tot - w_l);
            if w_l < min_w || w_r < min_w {
                return;
            }
            let gain = s_l * s_l / w_l + s_r * s_r / w_r - parent;
            let threshold = 1e-12 * (parent.abs() + 1e-300);
            if gain > threshold && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate { feature, rule, gain });
            }
        };
        for (f, kind) in self.data.kinds.iter().enumerate() {
            let col = &self.data.columns[f];
            match kind {
                FeatureKind::Numeric => {
                    let (mut s_l, mut w_l) = (0.0, 0.0);
                    for &i in members {
                        if col[i].is_nan() {
                            s_l += self.weight[i] * self.residual[i];
                            w_l += self.weight[i];
                        }
                    }
                    let mut prev: Option<f64> = None;
                    for &i in &self.sorted[f] {
                        if self.node_of[i] != node {
                            continue;
                        }
                        let x = col[i];
                        if let Some(p) = prev {
                            if x > p {
                                consider(f, SplitRule::Below { threshold: p + (x - p) / 2.0 }, s_l, w_l);
                            }
                        }
                        s_l += self.weight[i] * self.residual[i];
                        w_l += self.weight[i];
                        prev = Some(x);
                    }
                }
                FeatureKind::Categorical { n_levels } => {
                    let mut s = vec![0.0; *n_levels];
                    let mut w = vec![0.0; *n_levels];
                    for &i in members {
                        let l = col[i] as usize;
                        s[l] += self.weight[i] * self.residual[i];
                        w[l] += self.weight[i];
                    }
                    let mut present: Vec<usize> = (0..*n_levels).filter(|&l| w[l] > 0.0).collect();
                    present.sort_by(|&a, &b| (s[a] / w[a]).total_cmp(&(s[b] / w[b])).then(a.cmp(&b)));
                    let (mut s_l, mut w_l) = (0.0, 0.0);
                    for k in 0..present.len().saturating_sub(1) {
                        s_l += s[present[k]];
                        w_l += w[present[k]];
                        let mut levels: Vec<u32> = present[..=k].iter().map(|&l| l as u32).collect();
                        levels.sort_unstable();
                        consider(f, SplitRule::InSet { levels }, s_l, w_l);
                    }
                }
            }
        }
        best
    }
}

fn leaf_value(loss: GbmLoss, members: &[usize], y: &[f64], w: &[f64], f: &[f64]) -> f64 {
    match loss {
        GbmLoss::Bernoulli => {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in members {
                let p = logistic(f[i]);
                num += w[i] * (y[i] - p);
                den += w[i] * p * (1.0 - p);
            }
            if den > 1e-12 {
                num / den
            } else {
                0.0
            }
        }
        GbmLoss::Gamma => {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in members {
                num += w[i] * y[i] * (-f[i]).exp();
                den += w[i];
            }
            if num > 0.0 && den > 0.0 {
                (num / den).ln()
            } else {
                0.0
            }
        }
    }
}

fn total_deviance(loss: GbmLoss, y: &[f64], w: &[f64], f: &[f64]) -> f64 {
    (0..y.len()).filter(|&i| w[i] > 0.0).map(|i| w[i] * loss.unit_deviance(y[i], f[i])).sum()
}

/// Fit a boosted ensemble.
///
/// Leaf values are Newton steps (Bernoulli) or exact minimizers (gamma) on
/// the bag; a tree that would increase the full training deviance has its
/// leaves halved until it does not.
pub fn fit_gbm(data: &GbmData, y: &[f64], loss: GbmLoss, w: &[f64], params: &GbmParams, seed: u64) -> Result<GbmFit> {
    params.validate()?;
    let n = data.n_rows();
    if y.len() != n || w.len() != n {
        return Err(Error::Input(format!("GBM data has {n} rows but {} responses and {} weights", y.len(), w.len())));
    }
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::Input("weights must be nonnegative with a positive total".into()));
    }
    for &v in y {
        match loss {
            GbmLoss::Bernoulli if v != 0.0 && v != 1.0 => {
                return Err(Error::Domain(format!("Bernoulli response {v} not in {{0, 1}}")))
            }
            GbmLoss::Gamma if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::Domain(format!("gamma response {v} must be positive")))
            }
            _ => {}
        }
    }
    let total_w: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;
    let initial_value = match loss {
        GbmLoss::Bernoulli => {
            if ybar <= 0.0 || ybar >= 1.0 {
                return Err(Error::Separation(format!("all weighted responses equal {}", ybar.round())));
            }
            (ybar / (1.0 - ybar)).ln()
        }
        GbmLoss::Gamma => ybar.ln(),
    };

    let sorted: Vec<Vec<usize>> = data
        .columns
        .iter()
        .zip(&data.kinds)
        .map(|(col, kind)| match kind {
            FeatureKind::Numeric => {
                let mut idx: Vec<usize> = (0..n).filter(|&i| !col[i].is_nan()).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            }
            FeatureKind::Categorical { .. } => Vec::new(),
        })
        .collect();

    let mut f = vec![initial_value; n];
    let mut deviance = total_deviance(loss, y, w, &f);
    let mut trace = vec![deviance];
    let mut trees = Vec::with_capacity(params.n_trees);
    let n_bag = ((params.bag_fraction * n as f64).round() as usize).clamp(1, n.max(1));
    let mut residual = vec![0.0; n];

    for t in 0..params.n_trees {
        let mut rng = crate::rng::substream(seed, 0x6b6d, t as u64);
        let mut in_bag: Vec<usize> = if n_bag >= n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, n_bag).into_vec()
        };
        in_bag.sort_unstable();
        in_bag.retain(|&i| w[i] > 0.0);
        for &i in &in_bag {
            residual[i] = loss.residual(y[i], f[i]);
        }
        let mut node_of = vec![usize::MAX; n];
        for &i in &in_bag {
            node_of[i] = 0;
        }
        let mut grower = Grower { data, sorted: &sorted, params, node_of, residual: &residual, weight: w };

        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut members_of: Vec<Vec<usize>> = vec![in_bag];
        let mut depth_of = vec![0usize];
        let mut queue = vec![0usize];
        let mut leaves = Vec::new();
        while let Some(node) = queue.pop() {
            let members = std::mem::take(&mut members_of[node]);
            let split = if depth_of[node] < params.max_depth { grower.best_split(node, &members) } else { None };
            match split {
                Some(c) => {
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    let col = &data.columns[c.feature];
                    let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                        members.iter().partition(|&&i| c.rule.goes_left(col[i]));
                    for &i in &l_rows {
                        grower.node_of[i] = left;
                    }
                    for &i in &r_rows {
                        grower.node_of[i] = right;
                    }
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    members_of.push(l_rows);
                    members_of.push(r_rows);
                    depth_of.push(depth_of[node] + 1);
                    depth_of.push(depth_of[node] + 1);
                    nodes[node] = Node::Split { feature: c.feature, rule: c.rule, left, right, improvement: c.gain };
                    // Right pushed first so the left subtree is grown first.
                    queue.push(right);
                    queue.push(left);
                }
                None => {
                    leaves.push((node, members));
                }
            }
        }
        for (node, members) in &leaves {
            nodes[*node] = Node::Leaf { value: leaf_value(loss, members, y, w, &f) };
        }
        let mut tree = Tree { nodes };

        let mut contribution: Vec<f64> = (0..n).map(|i| tree.predict(&data.row(i))).collect();
        let mut new_f: Vec<f64> = (0..n).map(|i| f[i] + params.shrinkage * contribution[i]).collect();
        let mut new_dev = total_deviance(loss, y, w, &new_f);
        let mut halvings = 0;
        while !(new_dev <= deviance) && halvings < 50 {
            tree.scale_leaves(0.5);
            contribution.iter_mut().for_each(|c| *c *= 0.5);
            new_f = (0..n).map(|i| f[i] + params.shrinkage * contribution[i]).collect();
            new_dev = total_deviance(loss, y, w, &new_f);
            halvings += 1;
        }
        if !(new_dev <= deviance) {
            tree.scale_leaves(0.0);
            for node in &mut tree.nodes {
                if let Node::Split { improvement, .. } = node {
                    *improvement = 0.0;
                }
            }
            new_f.clone_from(&f);
            new_dev = deviance;
        }
        f = new_f;
        deviance = new_dev;
        trace.push(deviance);
        trees.push(tree);
    }

    Ok(GbmFit {
        loss,
        initial_value,
        shrinkage: params.shrinkage,
        params: *params,
        feature_names: data.names.clone(),
        trees,
        deviance_trace: trace,
        dispersion: None,
    })
}

/// Weighted Pearson estimate `Σ w (y − μ)² / μ² / Σ w` for a gamma fit.
pub fn pearson_dispersion(fit: &GbmFit, data: &GbmData, y: &[f64], w: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        if w[i] > 0.0 {
            let mu = fit.predict(&data.row(i));
            num += w[i] * ((y[i] - mu) / mu).powi(2);
            den += w[i];
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump_params() -> GbmParams {
        GbmParams { n_trees: 1, max_depth: 1, shrinkage: 1.0, bag_fraction: 1.0, min_node_weight: 1.0 }
    }

    #[test]
    fn empty_ensemble_is_baseline() {
        let data = GbmData::empty(3);
        let params = GbmParams { n_trees: 0, ..GbmParams::default() };
        let fit = fit_gbm(&data, &[2.0, 5.0, 8.0], GbmLoss::Gamma, &[1.0; 3], &params, 1).unwrap();
        assert!((fit.predict(&[]) - 5.0).abs() < 1e-12);
        assert!(matches!(fit.importance(), Err(Error::UndefinedImportance)));
        let fit = fit_gbm(&data, &[1.0, 0.0, 1.0], GbmLoss::Bernoulli, &[1.0, 1.0, 2.0], &params, 1).unwrap();
        assert!((fit.predict(&[]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_stump_gamma() {
        let g = vec![0.0, 0.0, 1.0, 1.0];
        let data = GbmData::new(vec!["g".into()], vec![FeatureKind::Categorical { n_levels: 2 }], vec![g]).unwrap();
        let y = [1.0, 3.0, 6.0, 10.0];
        let fit = fit_gbm(&data, &y, GbmLoss::Gamma, &[1.0; 4], &stump_params(), 7).unwrap();
        assert!((fit.predict(&[0.0]) - 2.0).abs() < 1e-6);
        assert!((fit.predict(&[1.0]) - 8.0).abs() < 1e-6);
        let imp = fit.importance().unwrap();
        assert_eq!(imp[0].0, "g");
        assert!((imp[0].1 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn numeric_stump_and_missing_left() {
        let x = vec![f64::NAN, 1.0, 2.0, 3.0];
        let data = GbmData::new(vec!["x".into()], vec![FeatureKind::Numeric], vec![x]).unwrap();
        let y = [2.0, 2.0, 8.0, 8.0];
        let fit = fit_gbm(&data, &y, GbmLoss::Gamma, &[1.0; 4], &stump_params(), 7).unwrap();
        assert!((fit.predict(&[f64::NAN]) - 2.0).abs() < 1e-6);
        assert!((fit.predict(&[1.2]) - 2.0).abs() < 1e-6);
        assert!((fit.predict(&[2.5]) - 8.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_params() {
        let data = GbmData::empty(2);
        let params = GbmParams { shrinkage: 0.0, ..GbmParams::default() };
        assert!(matches!(
            fit_gbm(&data, &[1.0, 2.0], GbmLoss::Gamma, &[1.0; 2], &params, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            fit_gbm(&data, &[0.0, 2.0], GbmLoss::Gamma, &[1.0; 2], &GbmParams::default(), 1),
            Err(Error::Domain(_))
        ));
    }
}
