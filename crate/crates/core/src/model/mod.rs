//! Tree-ensemble classifiers: feature domains, trees, and the vote rule.

mod generate;
mod json;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{Rational, RationalError};

pub use generate::{generate_random_model, random_point, GeneratorConfig};
pub use json::{load_model, load_model_file, save_model, save_model_string};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: unknown feature {feature} (model has {num_features})")]
    UnknownFeature {
        path: String,
        feature: i64,
        num_features: usize,
    },
    #[error("{path}: threshold {threshold} outside the domain of feature {feature}")]
    ThresholdOutsideDomain {
        path: String,
        feature: usize,
        threshold: Rational,
    },
    #[error("point has {got} coordinates, model has {expected} features")]
    Dimension { expected: usize, got: usize },
    #[error("value {value} is outside the domain of feature {feature}")]
    DomainViolation { feature: usize, value: Rational },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] RationalError),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Domain of a single feature. Interval bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Real { lo: Rational, hi: Rational },
    Int { lo: Rational, hi: Rational },
    Bool,
}

impl Domain {
    pub fn lo(&self) -> Rational {
        match self {
            Domain::Real { lo, .. } | Domain::Int { lo, .. } => *lo,
            Domain::Bool => Rational::ZERO,
        }
    }

    pub fn hi(&self) -> Rational {
        match self {
            Domain::Real { hi, .. } | Domain::Int { hi, .. } => *hi,
            Domain::Bool => Rational::ONE,
        }
    }

    pub fn contains(&self, value: &Rational) -> bool {
        match self {
            Domain::Real { lo, hi } => lo <= value && value <= hi,
            Domain::Int { lo, hi } => value.is_integer() && lo <= value && value <= hi,
            Domain::Bool => *value == Rational::ZERO || *value == Rational::ONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    /// 1-based.
    pub id: usize,
    pub name: String,
    pub domain: Domain,
}

/// Split comparison. The left child is taken when `x op threshold` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl SplitOp {
    pub fn holds(self, value: &Rational, threshold: &Rational) -> bool {
        match self {
            SplitOp::Lt => value < threshold,
            SplitOp::Le => value <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            SplitOp::Lt => "<",
            SplitOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leaf {
    Class(u32),
    Score(Rational),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Split {
        /// 1-based feature id.
        feature: usize,
        op: SplitOp,
        threshold: Rational,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// A decision tree stored as an arena; the root is node 0 and every child
/// index is larger than its parent's, so the tree is acyclic by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(leaf: Leaf) -> Self {
        Tree {
            nodes: vec![Node::Leaf(leaf)],
        }
    }

    pub fn split(feature: usize, op: SplitOp, threshold: Rational, left: Tree, right: Tree) -> Self {
        let left_offset = 1;
        let right_offset = 1 + left.nodes.len();
        let mut nodes = Vec::with_capacity(right_offset + right.nodes.len());
        nodes.push(Node::Split {
            feature,
            op,
            threshold,
            left: left_offset,
            right: right_offset,
        });
        for (offset, sub) in [(left_offset, left), (right_offset, right)] {
            nodes.extend(sub.nodes.into_iter().map(|node| match node {
                Node::Split {
                    feature,
                    op,
                    threshold,
                    left,
                    right,
                } => Node::Split {
                    feature,
                    op,
                    threshold,
                    left: left + offset,
                    right: right + offset,
                },
                leaf => leaf,
            }));
        }
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    /// Leaf reached by `point`. Coordinates are not domain-checked here.
    pub fn evaluate(&self, point: &[Rational]) -> Leaf {
        let mut index = 0;
        loop {
            match &self.nodes[index] {
                Node::Leaf(leaf) => return *leaf,
                Node::Split {
                    feature,
                    op,
                    threshold,
                    left,
                    right,
                } => {
                    index = if op.holds(&point[feature - 1], threshold) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(tree: &Tree, index: usize) -> usize {
            match tree.node(index) {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(tree, *left).max(go(tree, *right)),
            }
        }
        go(self, 0)
    }

    /// Every `(feature, op, threshold)` test in the tree.
    pub fn splits(&self) -> impl Iterator<Item = (usize, SplitOp, Rational)> + '_ {
        self.nodes.iter().filter_map(|node| match node {
            Node::Split {
                feature,
                op,
                threshold,
                ..
            } => Some((*feature, *op, *threshold)),
            Node::Leaf(_) => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "rf-majority")]
    RfMajority,
    #[serde(rename = "bt-binary")]
    BtBinary,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::RfMajority => "rf-majority",
            ModelKind::BtBinary => "bt-binary",
        })
    }
}

/// Per-tree leaf payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeOutput {
    Vote(u32),
    Score(Rational),
}

/// A tree ensemble with majority voting (RF) or summed scores (binary BT).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEnsembleModel {
    kind: ModelKind,
    features: Vec<FeatureSpec>,
    trees: Vec<Tree>,
    num_classes: u32,
    base_margin: Rational,
}

impl TreeEnsembleModel {
    /// Builds a model and checks structural invariants.
    pub fn new(
        kind: ModelKind,
        features: Vec<FeatureSpec>,
        trees: Vec<Tree>,
        num_classes: u32,
        base_margin: Rational,
    ) -> Result<Self, ModelError> {
        let model = TreeEnsembleModel {
            kind,
            features,
            trees,
            num_classes,
            base_margin,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let schema = |path: &str, message: String| ModelError::Schema {
            path: path.to_string(),
            message,
        };
        for (index, spec) in self.features.iter().enumerate() {
            if spec.id != index + 1 {
                return Err(schema(
                    &format!("$.features[{index}].id"),
                    format!("expected id {}, found {}", index + 1, spec.id),
                ));
            }
            if let Domain::Real { lo, hi } | Domain::Int { lo, hi } = spec.domain {
                if lo > hi {
                    return Err(schema(
                        &format!("$.features[{index}].domain"),
                        format!("lo {lo} exceeds hi {hi}"),
                    ));
                }
            }
            if let Domain::Int { lo, hi } = spec.domain {
                if lo.ceil() > hi.floor() {
                    return Err(schema(
                        &format!("$.features[{index}].domain"),
                        "integer domain contains no integer".to_string(),
                    ));
                }
            }
        }
        if self.trees.is_empty() {
            return Err(schema("$.trees", "ensemble has no trees".to_string()));
        }
        match self.kind {
            ModelKind::RfMajority if self.num_classes < 1 => {
                return Err(schema("$.classes", "at least one class required".to_string()))
            }
            ModelKind::BtBinary if self.num_classes != 2 => {
                return Err(schema("$.classes", "bt-binary models have exactly 2 classes".to_string()))
            }
            _ => {}
        }
        for (t, tree) in self.trees.iter().enumerate() {
            for (n, node) in tree.nodes.iter().enumerate() {
                let path = format!("$.trees[{t}] node {n}");
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        if *feature == 0 || *feature > self.features.len() {
                            return Err(ModelError::UnknownFeature {
                                path,
                                feature: *feature as i64,
                                num_features: self.features.len(),
                            });
                        }
                        let domain = self.features[feature - 1].domain;
                        if *threshold < domain.lo() || *threshold > domain.hi() {
                            return Err(ModelError::ThresholdOutsideDomain {
                                path,
                                feature: *feature,
                                threshold: *threshold,
                            });
                        }
                        let len = tree.nodes.len();
                        if *left <= n || *right <= n || *left >= len || *right >= len {
                            return Err(schema(&path, "malformed child index".to_string()));
                        }
                    }
                    Node::Leaf(Leaf::Class(k)) => {
                        if self.kind != ModelKind::RfMajority || *k >= self.num_classes {
                            return Err(schema(&path, format!("invalid class leaf {k}")));
                        }
                    }
                    Node::Leaf(Leaf::Score(_)) => {
                        if self.kind != ModelKind::BtBinary {
                            return Err(schema(&path, "score leaf in a voting model".to_string()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, id: usize) -> &FeatureSpec {
        &self.features[id - 1]
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn base_margin(&self) -> Rational {
        self.base_margin
    }

    pub fn all_features(&self) -> FeatureSet {
        FeatureSet::full(self.num_features())
    }

    /// Checks dimension and per-coordinate domain membership.
    pub fn check_point(&self, point: &[Rational]) -> Result<(), ModelError> {
        if point.len() != self.features.len() {
            return Err(ModelError::Dimension {
                expected: self.features.len(),
                got: point.len(),
            });
        }
        for (spec, value) in self.features.iter().zip(point) {
            if !spec.domain.contains(value) {
                return Err(ModelError::DomainViolation {
                    feature: spec.id,
                    value: *value,
                });
            }
        }
        Ok(())
    }

    pub fn per_tree_outputs(&self, point: &[Rational]) -> Result<Vec<TreeOutput>, ModelError> {
        self.check_point(point)?;
        Ok(self
            .trees
            .iter()
            .map(|tree| match tree.evaluate(point) {
                Leaf::Class(k) => TreeOutput::Vote(k),
                Leaf::Score(s) => TreeOutput::Score(s),
            })
            .collect())
    }

    /// Aggregated BT margin: base margin plus every tree's leaf score.
    pub fn score(&self, point: &[Rational]) -> Result<Rational, ModelError> {
        self.check_point(point)?;
        let mut total = self.base_margin;
        for tree in &self.trees {
            if let Leaf::Score(s) = tree.evaluate(point) {
                total = total.checked_add(&s)?;
            }
        }
        Ok(total)
    }

    /// RF: majority vote, smallest class id on ties. BT: 1 iff the margin is positive.
    pub fn predict(&self, point: &[Rational]) -> Result<u32, ModelError> {
        match self.kind {
            ModelKind::RfMajority => {
                self.check_point(point)?;
                let mut votes = vec![0usize; self.num_classes as usize];
                for tree in &self.trees {
                    if let Leaf::Class(k) = tree.evaluate(point) {
                        votes[k as usize] += 1;
                    }
                }
                Ok(majority(&votes))
            }
            ModelKind::BtBinary => Ok(u32::from(self.score(point)?.is_positive())),
        }
    }

    /// Collected thresholds of feature `id` across all trees, sorted and deduplicated.
    pub fn thresholds(&self, id: usize) -> Vec<Rational> {
        let set: BTreeSet<Rational> = self
            .trees
            .iter()
            .flat_map(|tree| tree.splits())
            .filter(|(feature, _, _)| *feature == id)
            .map(|(_, _, thr)| thr)
            .collect();
        set.into_iter().collect()
    }

    /// Same model with only the first `n` trees.
    pub fn truncated(&self, n: usize) -> Result<Self, ModelError> {
        TreeEnsembleModel::new(
            self.kind,
            self.features.clone(),
            self.trees.iter().take(n).cloned().collect(),
            self.num_classes,
            self.base_margin,
        )
    }
}

/// Index of the largest count; the first (smallest id) wins ties.
pub(crate) fn majority(votes: &[usize]) -> u32 {
    let mut best = 0;
    for (class, &count) in votes.iter().enumerate() {
        if count > votes[best] {
            best = class;
        }
    }
    best as u32
}

/// A point in feature space plus the class the model assigns to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub point: Vec<Rational>,
    pub klass: u32,
}

impl Instance {
    /// Pairs `point` with its prediction.
    pub fn predicted(model: &TreeEnsembleModel, point: Vec<Rational>) -> Result<Self, ModelError> {
        let klass = model.predict(&point)?;
        Ok(Instance { point, klass })
    }
}

/// A point together with the class some explainer claims it receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<Rational>,
    pub klass: u32,
}

/// A set of 1-based feature ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(BTreeSet<usize>);

impl FeatureSet {
    pub fn empty() -> Self {
        FeatureSet(BTreeSet::new())
    }

    pub fn full(m: usize) -> Self {
        FeatureSet((1..=m).collect())
    }

    /// Features `i` with bit `i - 1` set.
    pub fn from_mask(mask: u64, m: usize) -> Self {
        FeatureSet((1..=m).filter(|i| mask >> (i - 1) & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0, |acc, i| acc | 1 << (i - 1))
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.contains(&id)
    }

    pub fn insert(&mut self, id: usize) -> bool {
        self.0.insert(id)
    }

    pub fn remove(&mut self, id: usize) -> bool {
        self.0.remove(&id)
    }

    pub fn without(&self, id: usize) -> Self {
        let mut out = self.clone();
        out.remove(id);
        out
    }

    pub fn with(&self, id: usize) -> Self {
        let mut out = self.clone();
        out.insert(id);
        out
    }

    /// `{1..m} \ self`.
    pub fn complement(&self, m: usize) -> Self {
        FeatureSet((1..=m).filter(|i| !self.0.contains(i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &FeatureSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersects(&self, other: &FeatureSet) -> bool {
        !self.0.is_disjoint(&other.0)
    }

    /// Checks every id is within `1..=m`.
    pub fn within(&self, m: usize) -> bool {
        self.0.iter().all(|&i| i >= 1 && i <= m)
    }
}

impl FromIterator<usize> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        FeatureSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for FeatureSet {
    fn from(ids: [usize; N]) -> Self {
        ids.into_iter().collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, id) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("}")
    }
}

/// Parses a comma-separated list of coordinates.
pub fn parse_point(text: &str) -> Result<Vec<Rational>, RationalError> {
    text.split(',').map(|part| part.trim().parse()).collect()
}
