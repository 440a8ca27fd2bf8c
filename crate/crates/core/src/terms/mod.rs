//! ERGM term specifications and their statistics.
//!
//! Seven term kinds are supported: edges, mutuality, GWESP with a fixed
//! decay, attribute match, sender and receiver covariate effects, and
//! absolute covariate difference. A [`ModelSpec`] lists terms in order and
//! flags each as homogeneous (one parameter) or heterogeneous (one parameter
//! per latent class). [`ParamLayout`] fixes how the parameter vector is laid
//! out: the homogeneous block first, then one block per class.

mod state;
mod stats;

pub use state::{change_stat_fast, NetworkState};
pub use stats::{change_stat_oracle, gwesp_weight, sufficient_stats, CompiledModel, CompiledTerm};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariates::{ColumnType, CovariateSchema, CovariateTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Edges,
    Mutual,
    Gwesp,
    NodeMatch,
    SenderCov,
    ReceiverCov,
    AbsDiff,
}

impl TermKind {
    pub fn needs_covariate(self) -> Option<ColumnType> {
        match self {
            TermKind::Edges | TermKind::Mutual | TermKind::Gwesp => None,
            TermKind::NodeMatch => Some(ColumnType::Categorical),
            TermKind::SenderCov | TermKind::ReceiverCov | TermKind::AbsDiff => Some(ColumnType::Continuous),
        }
    }

    /// Whether a dyad's change statistic depends on the rest of the network.
    pub fn is_dyad_dependent(self) -> bool {
        matches!(self, TermKind::Mutual | TermKind::Gwesp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub kind: TermKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default)]
    pub heterogeneous: bool,
}

impl TermSpec {
    pub fn edges() -> Self {
        Self::bare(TermKind::Edges)
    }

    pub fn mutual() -> Self {
        Self::bare(TermKind::Mutual)
    }

    pub fn gwesp(decay: f64) -> Self {
        TermSpec {
            decay: Some(decay),
            ..Self::bare(TermKind::Gwesp)
        }
    }

    pub fn node_match(cov: &str) -> Self {
        Self::with_cov(TermKind::NodeMatch, cov)
    }

    pub fn sender(cov: &str) -> Self {
        Self::with_cov(TermKind::SenderCov, cov)
    }

    pub fn receiver(cov: &str) -> Self {
        Self::with_cov(TermKind::ReceiverCov, cov)
    }

    pub fn abs_diff(cov: &str) -> Self {
        Self::with_cov(TermKind::AbsDiff, cov)
    }

    pub fn heterogeneous(mut self) -> Self {
        self.heterogeneous = true;
        self
    }

    fn bare(kind: TermKind) -> Self {
        TermSpec {
            kind,
            covariate: None,
            decay: None,
            heterogeneous: false,
        }
    }

    fn with_cov(kind: TermKind, cov: &str) -> Self {
        TermSpec {
            covariate: Some(cov.to_string()),
            ..Self::bare(kind)
        }
    }

    /// Short stable name, e.g. `edges`, `gwesp.0.1`, `sender.alcohol`.
    pub fn label(&self) -> String {
        let cov = self.covariate.as_deref().unwrap_or("?");
        match self.kind {
            TermKind::Edges => "edges".into(),
            TermKind::Mutual => "mutual".into(),
            TermKind::Gwesp => format!("gwesp.{}", self.decay.unwrap_or(f64::NAN)),
            TermKind::NodeMatch => format!("nodematch.{cov}"),
            TermKind::SenderCov => format!("sender.{cov}"),
            TermKind::ReceiverCov => format!("receiver.{cov}"),
            TermKind::AbsDiff => format!("absdiff.{cov}"),
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.kind, &self.decay) {
            (TermKind::Gwesp, None) => return Err(Error::Spec("gwesp requires a decay".into())),
            (TermKind::Gwesp, Some(d)) if !(d.is_finite() && *d >= 0.0) => {
                return Err(Error::Spec(format!("gwesp decay must be finite and >= 0, got {d}")))
            }
            (k, Some(_)) if k != TermKind::Gwesp => {
                return Err(Error::Spec(format!("{} does not take a decay", self.label())))
            }
            _ => {}
        }
        match (self.kind.needs_covariate(), &self.covariate) {
            (Some(_), None) => Err(Error::Spec(format!("{:?} requires a covariate", self.kind))),
            (None, Some(c)) => Err(Error::Spec(format!("{:?} does not take a covariate (got `{c}`)", self.kind))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sender,
    Receiver,
}

impl Mode {
    /// The node whose latent class governs dyad `(i, j)`.
    #[inline]
    pub fn classifier(self, i: usize, j: usize) -> usize {
        match self {
            Mode::Sender => i,
            Mode::Receiver => j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub mode: Mode,
    #[serde(rename = "classes", default = "one")]
    pub n_classes: usize,
    pub terms: Vec<TermSpec>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn new(terms: Vec<TermSpec>, n_classes: usize, mode: Mode) -> Result<Self> {
        let spec = ModelSpec { mode, n_classes, terms };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-class model with every term homogeneous.
    pub fn homogeneous(terms: Vec<TermSpec>) -> Result<Self> {
        let terms = terms
            .into_iter()
            .map(|t| TermSpec { heterogeneous: false, ..t })
            .collect();
        Self::new(terms, 1, Mode::Sender)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Spec("a model needs at least one term".into()));
        }
        if self.n_classes == 0 {
            return Err(Error::Spec("classes must be >= 1".into()));
        }
        if self.terms.iter().filter(|t| t.kind == TermKind::Edges).count() > 1 {
            return Err(Error::Spec("at most one edges term".into()));
        }
        if self.n_classes == 1 && self.terms.iter().any(|t| t.heterogeneous) {
            return Err(Error::Spec("heterogeneous terms need classes >= 2".into()));
        }
        for t in &self.terms {
            t.validate()?;
        }
        let mut labels: Vec<String> = self.terms.iter().map(TermSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Spec("duplicate term".into()));
        }
        Ok(())
    }

    /// Checks that every referenced covariate exists with the right type.
    pub fn validate_against(&self, cov: &CovariateTable) -> Result<()> {
        for t in &self.terms {
            if let (Some(ty), Some(name)) = (t.kind.needs_covariate(), &t.covariate) {
                match ty {
                    ColumnType::Categorical => cov.categorical_codes(name).map(|_| ())?,
                    ColumnType::Continuous => cov.continuous_values(name).map(|_| ())?,
                }
            }
        }
        Ok(())
    }

    /// Columns a covariate file must provide for this model.
    pub fn covariate_schema(&self) -> Result<CovariateSchema> {
        let mut schema = CovariateSchema::new();
        for t in &self.terms {
            if let (Some(ty), Some(name)) = (t.kind.needs_covariate(), &t.covariate) {
                match schema.columns.iter().find(|(n, _)| n == name) {
                    Some((_, prev)) if *prev != ty => {
                        return Err(Error::Spec(format!(
                            "covariate `{name}` used both as categorical and continuous"
                        )))
                    }
                    Some(_) => {}
                    None => schema.columns.push((name.clone(), ty)),
                }
            }
        }
        Ok(schema)
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn has_heterogeneous(&self) -> bool {
        self.terms.iter().any(|t| t.heterogeneous)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::label).collect()
    }
}

/// Maps `(term, class)` to a position in the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    n_classes: usize,
    kinds: Vec<TermKind>,
    heterogeneous: Vec<bool>,
    columns: Vec<Vec<usize>>,
    names: Vec<String>,
    n_homogeneous: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let q = spec.n_classes;
        let n_hom = spec.terms.iter().filter(|t| !t.heterogeneous).count();
        let n_het = spec.terms.len() - n_hom;
        let mut columns = vec![Vec::new(); spec.terms.len()];
        let mut names = vec![String::new(); n_hom + q * n_het];
        let mut hom_pos = 0;
        let mut het_pos = 0;
        for (k, t) in spec.terms.iter().enumerate() {
            if t.heterogeneous {
                for (class, name) in (0..q).map(|c| (c, format!("{}.class{}", t.label(), c))) {
                    let col = n_hom + class * n_het + het_pos;
                    columns[k].push(col);
                    names[col] = name;
                }
                het_pos += 1;
            } else {
                columns[k] = vec![hom_pos; q];
                names[hom_pos] = t.label();
                hom_pos += 1;
            }
        }
        ParamLayout {
            n_classes: q,
            kinds: spec.terms.iter().map(|t| t.kind).collect(),
            heterogeneous: spec.terms.iter().map(|t| t.heterogeneous).collect(),
            columns,
            names,
            n_homogeneous: n_hom,
        }
    }

    #[inline]
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn n_terms(&self) -> usize {
        self.kinds.len()
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_homogeneous(&self) -> usize {
        self.n_homogeneous
    }

    pub fn n_heterogeneous(&self) -> usize {
        self.n_terms() - self.n_homogeneous
    }

    #[inline]
    pub fn column(&self, term: usize, class: usize) -> usize {
        self.columns[term][class]
    }

    pub fn is_heterogeneous(&self, term: usize) -> bool {
        self.heterogeneous[term]
    }

    pub fn kind(&self, term: usize) -> TermKind {
        self.kinds[term]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Full per-term parameter vector seen by members of `class`.
    pub fn class_theta(&self, theta: &[f64], class: usize) -> Vec<f64> {
        (0..self.n_terms()).map(|k| theta[self.column(k, class)]).collect()
    }

    /// Column of the edges parameter for `class`, if the model has edges.
    pub fn edges_column(&self, class: usize) -> Option<usize> {
        self.kinds
            .iter()
            .position(|&k| k == TermKind::Edges)
            .map(|k| self.column(k, class))
    }

    /// Column permutation induced by relabelling classes: new class `c` is old
    /// class `order[c]`. Returns `src` with `new[col] = old[src[col]]`.
    pub fn class_permutation(&self, order: &[usize]) -> Vec<usize> {
        let mut src: Vec<usize> = (0..self.n_params()).collect();
        for k in 0..self.n_terms() {
            if self.heterogeneous[k] {
                for (new_c, &old_c) in order.iter().enumerate() {
                    src[self.column(k, new_c)] = self.column(k, old_c);
                }
            }
        }
        src
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"mode":"sender","classes":2,"terms":[
            {"kind":"gwesp","decay":0.1,"heterogeneous":false},
            {"kind":"edges","heterogeneous":true},
            {"kind":"sendercov","covariate":"alc","heterogeneous":true},
            {"kind":"nodematch","covariate":"gender"}]}"#;
        let spec = ModelSpec::from_json(text).unwrap();
        assert_eq!(spec.n_classes, 2);
        assert_eq!(spec.terms[0].decay, Some(0.1));
        assert!(!spec.terms[3].heterogeneous);
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        let schema = spec.covariate_schema().unwrap();
        assert_eq!(schema.columns.len(), 2);
    }

    #[test]
    fn invalid_specs() {
        assert!(ModelSpec::new(vec![], 1, Mode::Sender).is_err());
        assert!(ModelSpec::new(vec![TermSpec::edges(), TermSpec::edges()], 1, Mode::Sender).is_err());
        assert!(ModelSpec::new(vec![TermSpec::edges().heterogeneous()], 1, Mode::Sender).is_err());
        assert!(ModelSpec::new(vec![TermSpec::gwesp(-1.0)], 1, Mode::Sender).is_err());
        let mut bad = TermSpec::edges();
        bad.decay = Some(0.5);
        assert!(ModelSpec::new(vec![bad], 1, Mode::Sender).is_err());
        let mut bad = TermSpec::sender("x");
        bad.covariate = None;
        assert!(ModelSpec::new(vec![bad], 1, Mode::Sender).is_err());
        assert!(ModelSpec::from_json("{\"terms\": [").is_err());
    }

    #[test]
    fn covariate_type_checked() {
        let cov = CovariateTable::empty(3)
            .continuous("alc", vec![0.0, 1.0, 2.0])
            .unwrap()
            .categorical("g", &["a", "b", "a"])
            .unwrap();
        let ok = ModelSpec::homogeneous(vec![TermSpec::sender("alc"), TermSpec::node_match("g")]).unwrap();
        ok.validate_against(&cov).unwrap();
        let bad = ModelSpec::homogeneous(vec![TermSpec::node_match("alc")]).unwrap();
        assert!(bad.validate_against(&cov).is_err());
        let bad = ModelSpec::homogeneous(vec![TermSpec::abs_diff("g")]).unwrap();
        assert!(bad.validate_against(&cov).is_err());
        let missing = ModelSpec::homogeneous(vec![TermSpec::receiver("zzz")]).unwrap();
        assert!(missing.validate_against(&cov).is_err());
    }

    #[test]
    fn layout_blocks() {
        let spec = ModelSpec::new(
            vec![
                TermSpec::gwesp(0.1),
                TermSpec::sender("alc").heterogeneous(),
                TermSpec::mutual(),
                TermSpec::edges().heterogeneous(),
            ],
            2,
            Mode::Sender,
        )
        .unwrap();
        let l = spec.layout();
        assert_eq!(l.n_params(), 2 + 2 * 2);
        assert_eq!(
            l.names(),
            &["gwesp.0.1", "mutual", "sender.alc.class0", "edges.class0", "sender.alc.class1", "edges.class1"]
        );
        assert_eq!(l.column(0, 1), 0);
        assert_eq!(l.column(3, 1), 5);
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(l.class_theta(&theta, 1), vec![1.0, 5.0, 2.0, 6.0]);
        assert_eq!(l.edges_column(0), Some(3));
        let src = l.class_permutation(&[1, 0]);
        assert_eq!(src, vec![0, 1, 4, 5, 2, 3]);
    }
}
