//! Alloy compositions and their local-environment (LE) graph-set form.
//!
//! An alloy with `n` element types becomes `n` star graphs. The graph for
//! element `e` has `e` as its center node and one neighbor node per other
//! element, joined by an undirected edge whose weight is that neighbor's
//! molar fraction. The set is weighted by the center fractions.

use std::collections::HashSet;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elemtable::{featurize_element, ElementTable, TableError, FEATURE_DIM};

/// Sums of explicit fractions inside this band are renormalized silently.
pub const FRACTION_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ReprError {
    #[error("empty composition")]
    Empty,
    #[error("cannot parse composition `{text}` at byte {pos}: {reason}")]
    Parse {
        text: String,
        pos: usize,
        reason: &'static str,
    },
    #[error("repeated element {0}")]
    RepeatedSymbol(String),
    #[error("fraction of {symbol} must be a positive finite number, got {value}")]
    BadFraction { symbol: String, value: f64 },
    #[error("fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("center element {0} is not part of the composition")]
    CenterNotInComposition(String),
    #[error("inconsistent graph set: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("invalid graph-set JSON: {0}")]
    Json(String),
}

/// Molar fractions in appearance order; fractions are positive and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    entries: Vec<(String, f64)>,
}

impl Composition {
    /// Builds a composition from stoichiometric amounts of any scale.
    pub fn from_amounts(entries: Vec<(String, f64)>) -> Result<Self, ReprError> {
        Self::check_entries(&entries)?;
        let total: f64 = entries.iter().map(|(_, a)| a).sum();
        if !total.is_finite() {
            return Err(ReprError::FractionSum(total));
        }
        let entries = entries.into_iter().map(|(s, a)| (s, a / total)).collect();
        Ok(Composition { entries })
    }

    /// Builds a composition from molar fractions that should already sum to 1.
    pub fn from_fractions(entries: Vec<(String, f64)>) -> Result<Self, ReprError> {
        Self::check_entries(&entries)?;
        let total: f64 = entries.iter().map(|(_, a)| a).sum();
        if (total - 1.0).abs() > FRACTION_SUM_TOLERANCE {
            return Err(ReprError::FractionSum(total));
        }
        if (total - 1.0).abs() <= 1e-12 {
            return Ok(Composition { entries });
        }
        let entries = entries.into_iter().map(|(s, a)| (s, a / total)).collect();
        Ok(Composition { entries })
    }

    fn check_entries(entries: &[(String, f64)]) -> Result<(), ReprError> {
        if entries.is_empty() {
            return Err(ReprError::Empty);
        }
        let mut seen = HashSet::new();
        for (symbol, amount) in entries {
            if !seen.insert(symbol.as_str()) {
                return Err(ReprError::RepeatedSymbol(symbol.clone()));
            }
            if !(amount.is_finite() && *amount > 0.0) {
                return Err(ReprError::BadFraction {
                    symbol: symbol.clone(),
                    value: *amount,
                });
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(s, _)| s.as_str())
    }

    pub fn fraction(&self, symbol: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(s, _)| s == symbol)
            .map(|&(_, f)| f)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.fraction(symbol).is_some()
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, x) in &self.entries {
            write!(f, "{s}{x}")?;
        }
        Ok(())
    }
}

/// Parses a formula such as `Fe2CoCrNi` or `Al0.5CoCrFeNi`.
///
/// Amounts are stoichiometric and get normalized; a missing amount means 1.
/// Symbols are not checked against any element table here.
pub fn parse_composition(text: &str) -> Result<Composition, ReprError> {
    let bytes = text.as_bytes();
    let err = |pos: usize, reason: &'static str| ReprError::Parse {
        text: text.to_string(),
        pos,
        reason,
    };
    let mut entries: Vec<(String, f64)> = Vec::new();
    let mut pos = 0;
    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };
    skip_ws(&mut pos);
    if pos == bytes.len() {
        return Err(ReprError::Empty);
    }
    while pos < bytes.len() {
        if !bytes[pos].is_ascii_uppercase() {
            return Err(err(pos, "expected an element symbol"));
        }
        let start = pos;
        pos += 1;
        while pos < bytes.len() && bytes[pos].is_ascii_lowercase() {
            pos += 1;
        }
        if pos - start > 3 {
            return Err(err(start, "element symbol too long"));
        }
        let symbol = &text[start..pos];
        let num_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'.' {
            pos += 1;
            let frac_start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if frac_start == pos {
                return Err(err(pos, "expected digits after decimal point"));
            }
        }
        let amount = if num_start == pos {
            1.0
        } else {
            let value: f64 = text[num_start..pos]
                .parse()
                .map_err(|_| err(num_start, "invalid number"))?;
            if !(value.is_finite() && value > 0.0) {
                return Err(err(num_start, "amount must be positive"));
            }
            value
        };
        if entries.iter().any(|(s, _)| s == symbol) {
            return Err(ReprError::RepeatedSymbol(symbol.to_string()));
        }
        entries.push((symbol.to_string(), amount));
        skip_ws(&mut pos);
    }
    Composition::from_amounts(entries)
}

/// Star graph of one center element and every other element in the alloy.
///
/// Node 0 is the center; neighbors follow in composition order. Each edge is
/// stored once as `(center, neighbor)` and is treated as undirected.
#[derive(Debug, Clone, PartialEq)]
pub struct LEGraph {
    pub center_index: usize,
    pub node_symbols: Vec<String>,
    /// `[k x FEATURE_DIM]`.
    pub node_features: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_weights: Vec<f64>,
}

impl LEGraph {
    pub fn node_count(&self) -> usize {
        self.node_symbols.len()
    }

    pub fn center_symbol(&self) -> &str {
        &self.node_symbols[self.center_index]
    }

    /// Returns the same graph with its neighbor nodes listed in `order`
    /// (a permutation of `1..k` expressed as indices into the current nodes).
    pub fn with_neighbor_order(&self, order: &[usize]) -> LEGraph {
        let mut idx = vec![self.center_index];
        idx.extend_from_slice(order);
        let mut features = Array2::zeros(self.node_features.raw_dim());
        let mut symbols = Vec::with_capacity(idx.len());
        for (new, &old) in idx.iter().enumerate() {
            features.row_mut(new).assign(&self.node_features.row(old));
            symbols.push(self.node_symbols[old].clone());
        }
        let weight_of = |node: usize| {
            self.edges
                .iter()
                .zip(&self.edge_weights)
                .find(|((_, n), _)| *n == node)
                .map(|(_, &w)| w)
                .expect("every neighbor has an edge")
        };
        let edges = (1..idx.len()).map(|n| (0, n)).collect();
        let edge_weights = idx[1..].iter().map(|&old| weight_of(old)).collect();
        LEGraph {
            center_index: 0,
            node_symbols: symbols,
            node_features: features,
            edges,
            edge_weights,
        }
    }
}

/// Builds the LE graph centered at `center`.
pub fn build_le_graph(
    center: &str,
    comp: &Composition,
    table: &ElementTable,
) -> Result<LEGraph, ReprError> {
    if !comp.contains(center) {
        return Err(ReprError::CenterNotInComposition(center.to_string()));
    }
    let mut symbols = vec![center.to_string()];
    let mut edge_weights = Vec::with_capacity(comp.len() - 1);
    for (s, f) in comp.entries() {
        if s != center {
            symbols.push(s.clone());
            edge_weights.push(*f);
        }
    }
    let mut features = Array2::zeros((symbols.len(), FEATURE_DIM));
    for (i, s) in symbols.iter().enumerate() {
        let f = featurize_element(s, table)?;
        features
            .row_mut(i)
            .iter_mut()
            .zip(f)
            .for_each(|(d, v)| *d = v);
    }
    let edges = (1..symbols.len()).map(|n| (0, n)).collect();
    Ok(LEGraph {
        center_index: 0,
        node_symbols: symbols,
        node_features: features,
        edges,
        edge_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "GPa")]
    Gpa,
    #[serde(rename = "angstrom")]
    Angstrom,
    #[serde(rename = "none")]
    Dimensionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub graph: LEGraph,
    /// Molar fraction of the center element.
    pub weight: f64,
}

/// Weighted set of LE graphs, one per element of an alloy.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet {
    pub members: Vec<Member>,
    pub target: Option<Target>,
}

pub fn build_graph_set(comp: &Composition, table: &ElementTable) -> Result<GraphSet, ReprError> {
    let members = comp
        .entries()
        .iter()
        .map(|(s, f)| {
            Ok(Member {
                graph: build_le_graph(s, comp, table)?,
                weight: *f,
            })
        })
        .collect::<Result<Vec<_>, ReprError>>()?;
    Ok(GraphSet {
        members,
        target: None,
    })
}

#[derive(Serialize, Deserialize)]
struct MemberJson {
    center: String,
    nodes: Vec<String>,
    edge_weights: Vec<f64>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphSetJson {
    members: Vec<MemberJson>,
    target: Option<Target>,
}

impl GraphSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn with_target(mut self, target: Option<Target>) -> Self {
        self.target = target;
        self
    }

    pub fn target_value(&self) -> Option<f64> {
        self.target.map(|t| t.value)
    }

    pub fn composition(&self) -> Result<Composition, ReprError> {
        Composition::from_fractions(
            self.members
                .iter()
                .map(|m| (m.graph.center_symbol().to_string(), m.weight))
                .collect(),
        )
    }

    /// Same set with members reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> GraphSet {
        GraphSet {
            members: order.iter().map(|&i| self.members[i].clone()).collect(),
            target: self.target,
        }
    }

    pub fn to_json(&self) -> String {
        let json = GraphSetJson {
            members: self
                .members
                .iter()
                .map(|m| MemberJson {
                    center: m.graph.center_symbol().to_string(),
                    nodes: m.graph.node_symbols.clone(),
                    edge_weights: m.graph.edge_weights.clone(),
                    weight: m.weight,
                })
                .collect(),
            target: self.target,
        };
        serde_json::to_string(&json).expect("graph set serializes")
    }

    /// Reloads the JSON form, rebuilding node features from `table`.
    ///
    /// The structure is validated against the composition implied by the
    /// member weights; any graph that is not the LE graph of that alloy is
    /// rejected.
    pub fn from_json(text: &str, table: &ElementTable) -> Result<GraphSet, ReprError> {
        let json: GraphSetJson =
            serde_json::from_str(text).map_err(|e| ReprError::Json(e.to_string()))?;
        if json.members.is_empty() {
            return Err(ReprError::Empty);
        }
        let total: f64 = json.members.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ReprError::FractionSum(total));
        }
        let comp = Composition::from_fractions(
            json.members
                .iter()
                .map(|m| (m.center.clone(), m.weight))
                .collect(),
        )?;
        let mut members = Vec::with_capacity(json.members.len());
        for m in &json.members {
            if m.nodes.first() != Some(&m.center) {
                return Err(ReprError::Inconsistent(format!(
                    "member {} must list its center first",
                    m.center
                )));
            }
            if m.nodes.len() != comp.len() || m.edge_weights.len() + 1 != m.nodes.len() {
                return Err(ReprError::Inconsistent(format!(
                    "member {} must have {} nodes and {} edge weights",
                    m.center,
                    comp.len(),
                    comp.len() - 1
                )));
            }
            let mut seen = HashSet::new();
            for (node, w) in m.nodes[1..].iter().zip(&m.edge_weights) {
                let expected = comp.fraction(node).ok_or_else(|| {
                    ReprError::Inconsistent(format!("node {node} is not a set member"))
                })?;
                if node == &m.center || !seen.insert(node) {
                    return Err(ReprError::Inconsistent(format!(
                        "member {} lists node {node} twice",
                        m.center
                    )));
                }
                if !(w.is_finite() && (w - expected).abs() <= 1e-9) {
                    return Err(ReprError::Inconsistent(format!(
                        "edge weight {w} to {node} differs from its fraction {expected}"
                    )));
                }
            }
            let mut features = Array2::zeros((m.nodes.len(), FEATURE_DIM));
            for (i, s) in m.nodes.iter().enumerate() {
                let f = featurize_element(s, table)?;
                features
                    .row_mut(i)
                    .iter_mut()
                    .zip(f)
                    .for_each(|(d, v)| *d = v);
            }
            members.push(Member {
                graph: LEGraph {
                    center_index: 0,
                    node_symbols: m.nodes.clone(),
                    node_features: features,
                    edges: (1..m.nodes.len()).map(|n| (0, n)).collect(),
                    edge_weights: m.edge_weights.clone(),
                },
                weight: m.weight,
            });
        }
        if let Some(t) = json.target {
            if !t.value.is_finite() {
                return Err(ReprError::Json("target must be finite".into()));
            }
        }
        Ok(GraphSet {
            members,
            target: json.target,
        })
    }
}
