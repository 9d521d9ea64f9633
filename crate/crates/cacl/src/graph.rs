//! Heterogeneous social graph: typed nodes and edges, JSON-lines
//! persistence, user-graph extraction, and subgraph induction.
//!
//! Node ids are dense indices. A graph is immutable once constructed;
//! augmentation works on copies of induced subgraphs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::{CaclError, Result};

/// Name of the node type that carries labels and forms the user graph.
pub const USER_TYPE: &str = "user";
/// Edge type added by link-prediction augmentation.
pub const PREDICTED_EDGE_TYPE: &str = "predicted";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeDef {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTypeDef {
    pub name: String,
    /// Source node type index.
    pub src: usize,
    /// Destination node type index.
    pub dst: usize,
}

/// Raw per-node observations before any encoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawFeature {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub numeric: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<usize>,
    /// Token-id sequences, one per attached text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub ty: usize,
    pub feature: RawFeature,
    /// 0 = human, 1 = bot; only user nodes may be labeled.
    pub label: Option<u8>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub ty: usize,
}

/// Per-type feature dimensions, fixed at construction so that every induced
/// subgraph materializes identically shaped feature blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeLayout {
    pub numeric_dim: usize,
    /// Cardinality of each categorical slot (one-hot width).
    pub cat_cards: Vec<usize>,
    /// Whether any node of this type carries token sequences.
    pub has_tokens: bool,
}

impl TypeLayout {
    /// Width of the numeric-plus-one-hot block.
    pub fn static_dim(&self) -> usize {
        self.numeric_dim + self.cat_cards.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    node_types: Vec<NodeTypeDef>,
    edge_types: Vec<EdgeTypeDef>,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    layouts: Vec<TypeLayout>,
    vocab_size: usize,
}

impl HeteroGraph {
    /// Validates and freezes a graph. Layouts and vocabulary are derived from
    /// the data itself.
    pub fn new(
        node_types: Vec<NodeTypeDef>,
        edge_types: Vec<EdgeTypeDef>,
        nodes: Vec<NodeRecord>,
        edges: Vec<EdgeRecord>,
    ) -> Result<Self> {
        let layouts = derive_layouts(&node_types, &nodes)?;
        let vocab_size = nodes
            .iter()
            .flat_map(|n| n.feature.tokens.iter().flatten())
            .max()
            .map_or(0, |m| m + 1);
        let g = HeteroGraph {
            node_types,
            edge_types,
            nodes,
            edges,
            layouts,
            vocab_size,
        };
        g.validate()?;
        Ok(g)
    }

    /// As [`HeteroGraph::new`] but with layouts and vocabulary inherited from
    /// a parent graph, so induced subgraphs keep the parent's feature dims.
    pub fn with_layouts(
        node_types: Vec<NodeTypeDef>,
        edge_types: Vec<EdgeTypeDef>,
        nodes: Vec<NodeRecord>,
        edges: Vec<EdgeRecord>,
        layouts: Vec<TypeLayout>,
        vocab_size: usize,
    ) -> Result<Self> {
        let g = HeteroGraph {
            node_types,
            edge_types,
            nodes,
            edges,
            layouts,
            vocab_size,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let nt = self.node_types.len();
        for et in &self.edge_types {
            if et.src >= nt || et.dst >= nt {
                return Err(CaclError::Graph(format!(
                    "edge type {:?} references unknown node type",
                    et.name
                )));
            }
        }
        let user_ty = self.user_type_id();
        for (id, node) in self.nodes.iter().enumerate() {
            if node.ty >= nt {
                return Err(CaclError::Graph(format!(
                    "node {id} has unknown type {}",
                    node.ty
                )));
            }
            if node.label.is_some() && Some(node.ty) != user_ty {
                return Err(CaclError::Graph(format!(
                    "node {id} is labeled but not a user",
                )));
            }
            if let Some(l) = node.label {
                if l > 1 {
                    return Err(CaclError::Graph(format!("node {id} has label {l}")));
                }
            }
            let layout = &self.layouts[node.ty];
            if node.feature.numeric.len() != layout.numeric_dim {
                return Err(CaclError::Graph(format!(
                    "node {id}: numeric dim {} vs layout {}",
                    node.feature.numeric.len(),
                    layout.numeric_dim
                )));
            }
            if node.feature.categorical.len() != layout.cat_cards.len() {
                return Err(CaclError::Graph(format!(
                    "node {id}: {} categorical slots vs layout {}",
                    node.feature.categorical.len(),
                    layout.cat_cards.len()
                )));
            }
            for (slot, (&v, &card)) in node
                .feature
                .categorical
                .iter()
                .zip(&layout.cat_cards)
                .enumerate()
            {
                if v >= card {
                    return Err(CaclError::Graph(format!(
                        "node {id}: categorical slot {slot} value {v} >= cardinality {card}"
                    )));
                }
            }
            for t in node.feature.tokens.iter().flatten() {
                if *t >= self.vocab_size {
                    return Err(CaclError::Graph(format!(
                        "node {id}: token {t} outside vocabulary of {}",
                        self.vocab_size
                    )));
                }
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.ty >= self.edge_types.len() {
                return Err(CaclError::Graph(format!("edge {i} has unknown type {}", e.ty)));
            }
            let et = &self.edge_types[e.ty];
            let n = self.nodes.len();
            if e.src >= n || e.dst >= n {
                return Err(CaclError::Graph(format!(
                    "edge {i} endpoint out of range ({} nodes)",
                    n
                )));
            }
            if self.nodes[e.src].ty != et.src || self.nodes[e.dst].ty != et.dst {
                return Err(CaclError::Graph(format!(
                    "edge {i} endpoint types do not match edge type {:?}",
                    et.name
                )));
            }
        }
        Ok(())
    }

    pub fn node_types(&self) -> &[NodeTypeDef] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeTypeDef] {
        &self.edge_types
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn layouts(&self) -> &[TypeLayout] {
        &self.layouts
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_types.iter().position(|t| t.name == name)
    }

    pub fn user_type_id(&self) -> Option<usize> {
        self.node_type_id(USER_TYPE)
    }

    /// Ids of all user nodes, ascending.
    pub fn user_ids(&self) -> Vec<usize> {
        match self.user_type_id() {
            Some(u) => (0..self.nodes.len()).filter(|&i| self.nodes[i].ty == u).collect(),
            None => Vec::new(),
        }
    }

    /// Materializes the numeric-plus-one-hot block for one node type, one row
    /// per node of that type in id order.
    pub fn static_features(&self, ty: usize) -> Matrix {
        let layout = &self.layouts[ty];
        let ids: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].ty == ty)
            .collect();
        let mut m = Matrix::zeros(ids.len(), layout.static_dim());
        for (row, &id) in ids.iter().enumerate() {
            let f = &self.nodes[id].feature;
            let out = m.row_mut(row);
            out[..f.numeric.len()].copy_from_slice(&f.numeric);
            let mut off = layout.numeric_dim;
            for (&v, &card) in f.categorical.iter().zip(&layout.cat_cards) {
                out[off + v] = 1.0;
                off += card;
            }
        }
        m
    }

    /// Node ids of one type, ascending; row order of per-type matrices.
    pub fn nodes_of_type(&self, ty: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].ty == ty).collect()
    }

    /// Replaces one node's token sequences. Sequence count and lengths may
    /// change; ids must stay within the vocabulary.
    pub(crate) fn set_tokens(&mut self, node: usize, tokens: Vec<Vec<usize>>) -> Result<()> {
        for seq in &tokens {
            for &t in seq {
                if t >= self.vocab_size {
                    return Err(CaclError::Graph(format!(
                        "token {t} outside vocabulary of {}",
                        self.vocab_size
                    )));
                }
            }
        }
        self.nodes[node].feature.tokens = tokens;
        Ok(())
    }

    /// Index of the named edge type, appending a definition if absent.
    pub(crate) fn ensure_edge_type(&mut self, name: &str, src: usize, dst: usize) -> usize {
        if let Some(id) = self.edge_type_id(name) {
            return id;
        }
        self.edge_types.push(EdgeTypeDef {
            name: name.to_string(),
            src,
            dst,
        });
        self.edge_types.len() - 1
    }

    pub(crate) fn add_edge(&mut self, e: EdgeRecord) -> Result<()> {
        let def = self
            .edge_types
            .get(e.ty)
            .ok_or_else(|| CaclError::Graph(format!("edge references unknown type {}", e.ty)))?;
        if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
            return Err(CaclError::Graph(format!(
                "edge ({}, {}) endpoint out of range",
                e.src, e.dst
            )));
        }
        if self.nodes[e.src].ty != def.src || self.nodes[e.dst].ty != def.dst {
            return Err(CaclError::Graph(format!(
                "edge ({}, {}) endpoint types do not match \"{}\"",
                e.src, e.dst, def.name
            )));
        }
        self.edges.push(e);
        Ok(())
    }
}

fn derive_layouts(node_types: &[NodeTypeDef], nodes: &[NodeRecord]) -> Result<Vec<TypeLayout>> {
    let mut layouts: Vec<Option<TypeLayout>> = vec![None; node_types.len()];
    for (id, node) in nodes.iter().enumerate() {
        if node.ty >= node_types.len() {
            return Err(CaclError::Graph(format!(
                "node {id} has unknown type {}",
                node.ty
            )));
        }
        let entry = &mut layouts[node.ty];
        match entry {
            None => {
                *entry = Some(TypeLayout {
                    numeric_dim: node.feature.numeric.len(),
                    cat_cards: node.feature.categorical.iter().map(|&v| v + 1).collect(),
                    has_tokens: !node.feature.tokens.is_empty(),
                });
            }
            Some(l) => {
                if node.feature.numeric.len() != l.numeric_dim {
                    return Err(CaclError::Graph(format!(
                        "node {id}: numeric dim {} differs from earlier nodes of its type",
                        node.feature.numeric.len()
                    )));
                }
                if node.feature.categorical.len() != l.cat_cards.len() {
                    return Err(CaclError::Graph(format!(
                        "node {id}: categorical arity differs from earlier nodes of its type"
                    )));
                }
                for (slot, &v) in node.feature.categorical.iter().enumerate() {
                    l.cat_cards[slot] = l.cat_cards[slot].max(v + 1);
                }
                l.has_tokens |= !node.feature.tokens.is_empty();
            }
        }
    }
    Ok(layouts
        .into_iter()
        .map(|l| {
            l.unwrap_or(TypeLayout {
                numeric_dim: 0,
                cat_cards: Vec::new(),
                has_tokens: false,
            })
        })
        .collect())
}

// --- JSON-lines dataset format ------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    NodeType {
        name: String,
    },
    EdgeType {
        name: String,
        src: String,
        dst: String,
    },
    Node {
        id: usize,
        #[serde(rename = "type")]
        ty: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        numeric: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        categorical: Vec<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tokens: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<Split>,
    },
    Edge {
        src: usize,
        dst: usize,
        #[serde(rename = "type")]
        ty: String,
    },
}

/// Reads a JSON-lines dataset. Type records must precede their first use;
/// node ids must be dense `0..n-1` (any order).
pub fn load_dataset(path: &Path) -> Result<HeteroGraph> {
    let reader = BufReader::new(File::open(path)?);
    load_dataset_reader(reader)
}

pub fn load_dataset_reader(reader: impl BufRead) -> Result<HeteroGraph> {
    let mut node_types: Vec<NodeTypeDef> = Vec::new();
    let mut edge_types: Vec<EdgeTypeDef> = Vec::new();
    let mut nodes: Vec<(usize, NodeRecord)> = Vec::new();
    let mut edges: Vec<EdgeRecord> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CaclError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        match rec {
            Record::NodeType { name } => {
                if node_types.iter().any(|t| t.name == name) {
                    return Err(CaclError::Parse {
                        line: lineno,
                        msg: format!("duplicate node type {name:?}"),
                    });
                }
                node_types.push(NodeTypeDef { name });
            }
            Record::EdgeType { name, src, dst } => {
                if edge_types.iter().any(|t| t.name == name) {
                    return Err(CaclError::Parse {
                        line: lineno,
                        msg: format!("duplicate edge type {name:?}"),
                    });
                }
                let lookup = |n: &str| {
                    node_types
                        .iter()
                        .position(|t| t.name == n)
                        .ok_or_else(|| CaclError::Parse {
                            line: lineno,
                            msg: format!("unknown node type {n:?}"),
                        })
                };
                edge_types.push(EdgeTypeDef {
                    name,
                    src: lookup(&src)?,
                    dst: lookup(&dst)?,
                });
            }
            Record::Node {
                id,
                ty,
                numeric,
                categorical,
                tokens,
                label,
                split,
            } => {
                let ty = node_types
                    .iter()
                    .position(|t| t.name == ty)
                    .ok_or_else(|| CaclError::Parse {
                        line: lineno,
                        msg: format!("unknown node type {ty:?}"),
                    })?;
                nodes.push((
                    id,
                    NodeRecord {
                        ty,
                        feature: RawFeature {
                            numeric,
                            categorical,
                            tokens,
                        },
                        label,
                        split,
                    },
                ));
            }
            Record::Edge { src, dst, ty } => {
                let ty = edge_types
                    .iter()
                    .position(|t| t.name == ty)
                    .ok_or_else(|| CaclError::Parse {
                        line: lineno,
                        msg: format!("unknown edge type {ty:?}"),
                    })?;
                edges.push(EdgeRecord { src, dst, ty });
            }
        }
    }

    nodes.sort_by_key(|(id, _)| *id);
    for (pos, (id, _)) in nodes.iter().enumerate() {
        if *id != pos {
            return Err(CaclError::Graph(format!(
                "node ids must be dense 0..n-1; found {id} at position {pos}"
            )));
        }
    }
    let nodes: Vec<NodeRecord> = nodes.into_iter().map(|(_, n)| n).collect();
    HeteroGraph::new(node_types, edge_types, nodes, edges)
}

/// Writes the canonical JSON-lines form: type records, then nodes by id,
/// then edges in stored order.
pub fn save_dataset(g: &HeteroGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_dataset_writer(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_dataset_writer(g: &HeteroGraph, w: &mut impl Write) -> Result<()> {
    let ser = |rec: &Record| serde_json::to_string(rec).expect("record serialization");
    for t in &g.node_types {
        writeln!(w, "{}", ser(&Record::NodeType { name: t.name.clone() }))?;
    }
    for t in &g.edge_types {
        writeln!(
            w,
            "{}",
            ser(&Record::EdgeType {
                name: t.name.clone(),
                src: g.node_types[t.src].name.clone(),
                dst: g.node_types[t.dst].name.clone(),
            })
        )?;
    }
    for (id, n) in g.nodes.iter().enumerate() {
        writeln!(
            w,
            "{}",
            ser(&Record::Node {
                id,
                ty: g.node_types[n.ty].name.clone(),
                numeric: n.feature.numeric.clone(),
                categorical: n.feature.categorical.clone(),
                tokens: n.feature.tokens.clone(),
                label: n.label,
                split: n.split,
            })
        )?;
    }
    for e in &g.edges {
        writeln!(
            w,
            "{}",
            ser(&Record::Edge {
                src: e.src,
                dst: e.dst,
                ty: g.edge_types[e.ty].name.clone(),
            })
        )?;
    }
    Ok(())
}

// --- User graph ----------------------------------------------------------

/// Undirected, unweighted view of user-to-user connectivity. Any directed
/// user-user edge of any type contributes the undirected pair; multi-edges
/// collapse; self-loops are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGraph {
    /// Parent node id of each user vertex, ascending.
    pub user_ids: Vec<usize>,
    /// Sorted neighbor lists over user-vertex indices.
    pub adj: Vec<Vec<usize>>,
    pub degrees: Vec<usize>,
    /// Number of undirected edges.
    pub edge_count: usize,
}

impl UserGraph {
    pub fn n(&self) -> usize {
        self.user_ids.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Undirected edges as (i, j) with i < j, lexicographic.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (i, nbrs) in self.adj.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn extract_user_graph(g: &HeteroGraph) -> Result<UserGraph> {
    let user_ty = g
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("graph has no user node type".into()))?;
    let user_ids = g.nodes_of_type(user_ty);
    let index_of: std::collections::HashMap<usize, usize> = user_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut pairs = BTreeSet::new();
    for e in &g.edges {
        let et = &g.edge_types[e.ty];
        if et.src == user_ty && et.dst == user_ty && e.src != e.dst {
            let a = index_of[&e.src];
            let b = index_of[&e.dst];
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut adj = vec![Vec::new(); user_ids.len()];
    for &(a, b) in &pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    let degrees = adj.iter().map(Vec::len).collect();
    Ok(UserGraph {
        user_ids,
        adj,
        degrees,
        edge_count: pairs.len(),
    })
}

// --- Subgraphs -----------------------------------------------------------

/// An induced subgraph: the chosen users, every non-user node adjacent to
/// them, and all edges among included nodes. Local node ids put the chosen
/// users first (ascending parent id), then the other nodes (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub graph: HeteroGraph,
    /// Local id -> parent id for every included node.
    pub parent_ids: Vec<usize>,
    /// Local ids `0..user_count` are the chosen users.
    pub user_count: usize,
    /// Per node type, the static feature block (rows follow
    /// `graph.nodes_of_type`). Augmentation rewrites these copies.
    pub features: Vec<Matrix>,
}

impl Subgraph {
    /// Labels of the chosen users by local user index.
    pub fn user_labels(&self) -> Vec<Option<u8>> {
        (0..self.user_count)
            .map(|i| self.graph.nodes()[i].label)
            .collect()
    }

    /// Splits of the chosen users by local user index.
    pub fn user_splits(&self) -> Vec<Option<Split>> {
        (0..self.user_count)
            .map(|i| self.graph.nodes()[i].split)
            .collect()
    }
}

pub fn induce_subgraph(g: &HeteroGraph, users: &[usize]) -> Result<Subgraph> {
    if users.is_empty() {
        return Err(CaclError::InvalidArgument(
            "induce_subgraph: empty user list".into(),
        ));
    }
    let user_ty = g
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("graph has no user node type".into()))?;
    let mut chosen = BTreeSet::new();
    for &u in users {
        if u >= g.nodes.len() || g.nodes[u].ty != user_ty {
            return Err(CaclError::InvalidArgument(format!(
                "induce_subgraph: {u} is not a user node"
            )));
        }
        if !chosen.insert(u) {
            return Err(CaclError::InvalidArgument(format!(
                "induce_subgraph: duplicate user {u}"
            )));
        }
    }
    let mut others = BTreeSet::new();
    for e in &g.edges {
        let (s, d) = (e.src, e.dst);
        if chosen.contains(&s) && g.nodes[d].ty != user_ty {
            others.insert(d);
        }
        if chosen.contains(&d) && g.nodes[s].ty != user_ty {
            others.insert(s);
        }
    }
    let mut parent_ids: Vec<usize> = chosen.iter().copied().collect();
    parent_ids.extend(others.iter().copied());
    let local_of: std::collections::HashMap<usize, usize> = parent_ids
        .iter()
        .enumerate()
        .map(|(l, &p)| (p, l))
        .collect();
    let nodes: Vec<NodeRecord> = parent_ids.iter().map(|&p| g.nodes[p].clone()).collect();
    let mut edges = Vec::new();
    for e in &g.edges {
        if let (Some(&s), Some(&d)) = (local_of.get(&e.src), local_of.get(&e.dst)) {
            edges.push(EdgeRecord {
                src: s,
                dst: d,
                ty: e.ty,
            });
        }
    }
    let graph = HeteroGraph::with_layouts(
        g.node_types.clone(),
        g.edge_types.clone(),
        nodes,
        edges,
        g.layouts.clone(),
        g.vocab_size,
    )?;
    let features = (0..graph.node_types().len())
        .map(|t| graph.static_features(t))
        .collect();
    Ok(Subgraph {
        graph,
        parent_ids,
        user_count: users.len(),
        features,
    })
}

// --- Normalization -------------------------------------------------------

/// Z-scores each numeric column per node type over the whole graph,
/// population variance. Constant columns become zero.
pub fn zscore_normalize(g: &HeteroGraph) -> Result<HeteroGraph> {
    let mut nodes = g.nodes.clone();
    for ty in 0..g.node_types.len() {
        let dim = g.layouts[ty].numeric_dim;
        if dim == 0 {
            continue;
        }
        let ids = g.nodes_of_type(ty);
        if ids.is_empty() {
            continue;
        }
        let n = ids.len() as f64;
        for col in 0..dim {
            let mean = ids
                .iter()
                .map(|&i| g.nodes[i].feature.numeric[col])
                .sum::<f64>()
                / n;
            let var = ids
                .iter()
                .map(|&i| {
                    let d = g.nodes[i].feature.numeric[col] - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            for &i in &ids {
                let v = &mut nodes[i].feature.numeric[col];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
    }
    HeteroGraph::with_layouts(
        g.node_types.clone(),
        g.edge_types.clone(),
        nodes,
        g.edges.clone(),
        g.layouts.clone(),
        g.vocab_size,
    )
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;

    /// Builds a users-only graph from an undirected edge list.
    pub fn users_only(n: usize, undirected: &[(usize, usize)]) -> HeteroGraph {
        let node_types = vec![NodeTypeDef {
            name: USER_TYPE.into(),
        }];
        let edge_types = vec![EdgeTypeDef {
            name: "follow".into(),
            src: 0,
            dst: 0,
        }];
        let nodes = (0..n)
            .map(|_| NodeRecord {
                ty: 0,
                feature: RawFeature::default(),
                label: None,
                split: None,
            })
            .collect();
        let mut edges = Vec::new();
        for &(a, b) in undirected {
            edges.push(EdgeRecord { src: a, dst: b, ty: 0 });
            edges.push(EdgeRecord { src: b, dst: a, ty: 0 });
        }
        HeteroGraph::new(node_types, edge_types, nodes, edges).unwrap()
    }

    pub fn user_graph(n: usize, undirected: &[(usize, usize)]) -> UserGraph {
        extract_user_graph(&users_only(n, undirected)).unwrap()
    }

    /// Two triangles joined by one bridge edge.
    pub fn two_triangles_bridge() -> UserGraph {
        user_graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
    }
}
