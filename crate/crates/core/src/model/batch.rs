use std::rc::Rc;

use ndarray::Array2;

use crate::elemtable::FEATURE_DIM;
use crate::repr::GraphSet;

use super::ModelError;

/// Directed message list derived from undirected star edges.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub weight: Rc<[f64]>,
}

impl EdgeList {
    /// Expands each undirected `(a, b, w)` into `a -> b` and `b -> a`.
    pub fn from_undirected(edges: &[(usize, usize)], weights: &[f64]) -> Self {
        let mut src = Vec::with_capacity(edges.len() * 2);
        let mut dst = Vec::with_capacity(edges.len() * 2);
        let mut weight = Vec::with_capacity(edges.len() * 2);
        for (&(a, b), &w) in edges.iter().zip(weights) {
            src.extend([b, a]);
            dst.extend([a, b]);
            weight.extend([w, w]);
        }
        EdgeList {
            src: src.into(),
            dst: dst.into(),
            weight: weight.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn weight_column(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.len(), 1), self.weight.to_vec()).expect("column shape")
    }
}

/// A mini-batch of graph sets flattened into one disjoint node array.
///
/// Graphs of a set occupy a contiguous range of graph indices, and nodes of
/// a graph occupy a contiguous range of node rows.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub node_features: Array2<f64>,
    pub edges: EdgeList,
    /// Graph index of every node row.
    pub node_graph: Rc<[usize]>,
    /// Node row of every graph's center.
    pub center_rows: Rc<[usize]>,
    /// Set index of every graph.
    pub graph_set: Rc<[usize]>,
    /// Set weight (center fraction) of every graph.
    pub graph_weight: Rc<[f64]>,
    /// `(first graph, graph count)` per set.
    pub set_ranges: Vec<(usize, usize)>,
}

impl GraphBatch {
    pub fn new(sets: &[&GraphSet]) -> Result<Self, ModelError> {
        if sets.is_empty() {
            return Err(ModelError::EmptyInput("batch"));
        }
        let n_nodes: usize = sets
            .iter()
            .flat_map(|s| &s.members)
            .map(|m| m.graph.node_count())
            .sum();
        let mut features = Array2::zeros((n_nodes, FEATURE_DIM));
        let mut node_graph = Vec::with_capacity(n_nodes);
        let mut center_rows = Vec::new();
        let mut graph_set = Vec::new();
        let mut graph_weight = Vec::new();
        let mut set_ranges = Vec::with_capacity(sets.len());
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut row = 0;
        for (si, set) in sets.iter().enumerate() {
            if set.members.is_empty() {
                return Err(ModelError::EmptyInput("graph set"));
            }
            set_ranges.push((graph_set.len(), set.members.len()));
            for m in &set.members {
                let g = &m.graph;
                if g.node_features.ncols() != FEATURE_DIM {
                    return Err(ModelError::FeatureWidth {
                        expected: FEATURE_DIM,
                        got: g.node_features.ncols(),
                    });
                }
                let gi = graph_set.len();
                let k = g.node_count();
                features
                    .slice_mut(ndarray::s![row..row + k, ..])
                    .assign(&g.node_features);
                node_graph.extend(std::iter::repeat_n(gi, k));
                center_rows.push(row + g.center_index);
                for (&(a, b), &w) in g.edges.iter().zip(&g.edge_weights) {
                    edges.push((row + a, row + b));
                    weights.push(w);
                }
                graph_set.push(si);
                graph_weight.push(m.weight);
                row += k;
            }
        }
        Ok(GraphBatch {
            node_features: features,
            edges: EdgeList::from_undirected(&edges, &weights),
            node_graph: node_graph.into(),
            center_rows: center_rows.into(),
            graph_set: graph_set.into(),
            graph_weight: graph_weight.into(),
            set_ranges,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn n_graphs(&self) -> usize {
        self.graph_set.len()
    }

    pub fn n_sets(&self) -> usize {
        self.set_ranges.len()
    }
}
