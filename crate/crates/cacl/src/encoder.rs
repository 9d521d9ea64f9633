//! Heterogeneous GNN backbone, projection head, and classifier.
//!
//! Every node is projected by its type's input matrix (users share theirs
//! with the community-aware encoder, so updates from either module flow to
//! both), then runs through message-passing layers. Two backbones: `rsage`
//! aggregates a per-edge-type neighbor mean plus a shared self transform;
//! `gcn` collapses edge types onto one normalized adjacency.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::community::CaEncoder;
use crate::graph::{HeteroGraph, Subgraph, PREDICTED_EDGE_TYPE};
use crate::numeric::{Matrix, ParamId, ParamStore, SparseMap, SplitRng, Tape, TapeId};
use crate::{CaclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gcn,
    Rsage,
}

impl std::str::FromStr for Backbone {
    type Err = CaclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Backbone::Gcn),
            "rsage" => Ok(Backbone::Rsage),
            other => Err(CaclError::InvalidArgument(format!(
                "unknown backbone \"{other}\" (expected gcn or rsage)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    /// Per-relation message weights, aligned with `edge_type_names`; empty
    /// for the gcn backbone.
    rel: Vec<ParamId>,
    /// Self transform (rsage) or the sole convolution weight (gcn).
    selfw: ParamId,
}

#[derive(Debug, Clone)]
pub struct HeteroEncoder {
    node_type_names: Vec<String>,
    /// All relations the encoder owns weights for: the dataset's declared
    /// edge types plus the predicted-edge type.
    edge_type_names: Vec<String>,
    /// Per-node-type input projections; the user entry aliases the
    /// community encoder's projection.
    w_q: Vec<ParamId>,
    /// Which types append a mean token embedding to their static block.
    has_tokens: Vec<bool>,
    token_embedding: ParamId,
    pub backbone: Backbone,
    layers: Vec<LayerParams>,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Per-entry drop probability when the forward pass runs with dropout.
    pub dropout: f64,
}

impl HeteroEncoder {
    /// Builds the backbone for a dataset. The user projection is the
    /// community encoder's `w_p`, so the community encoder must have been
    /// created for the same user feature block and hidden width.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        graph: &HeteroGraph,
        ca: &CaEncoder,
        backbone: Backbone,
        embed_dim: usize,
        n_layers: usize,
        dropout: f64,
        rng: &mut SplitRng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(CaclError::InvalidArgument(format!(
                "dropout={dropout} outside [0,1)"
            )));
        }
        let user_ty = graph
            .user_type_id()
            .ok_or_else(|| CaclError::Graph("dataset has no user node type".into()))?;
        let hidden = ca.hidden;
        let mut node_type_names = Vec::new();
        let mut w_q = Vec::new();
        let mut has_tokens = Vec::new();
        for (ty, def) in graph.node_types().iter().enumerate() {
            let layout = &graph.layouts()[ty];
            let in_dim = layout.static_dim() + if layout.has_tokens { embed_dim } else { 0 };
            let id = if ty == user_ty {
                if layout.has_tokens {
                    return Err(CaclError::InvalidArgument(
                        "user nodes carry token features; the shared user projection \
                         covers the static block only"
                            .into(),
                    ));
                }
                if ca.in_dim != in_dim {
                    return Err(CaclError::Shape(format!(
                        "community encoder expects {} user features, dataset has {in_dim}",
                        ca.in_dim
                    )));
                }
                ca.w_p
            } else {
                store.register(&format!("enc.w_q.{}", def.name), Matrix::glorot(in_dim, hidden, rng))
            };
            node_type_names.push(def.name.clone());
            w_q.push(id);
            has_tokens.push(layout.has_tokens);
        }

        let mut edge_type_names: Vec<String> = graph
            .edge_types()
            .iter()
            .map(|d| d.name.clone())
            .collect();
        if !edge_type_names.iter().any(|n| n == PREDICTED_EDGE_TYPE) {
            edge_type_names.push(PREDICTED_EDGE_TYPE.to_string());
        }

        let token_embedding = store.register(
            "enc.token_embed",
            Matrix::glorot(graph.vocab_size(), embed_dim, rng),
        );

        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let rel = match backbone {
                Backbone::Gcn => Vec::new(),
                Backbone::Rsage => edge_type_names
                    .iter()
                    .map(|name| {
                        store.register(
                            &format!("enc.l{l}.rel.{name}"),
                            Matrix::glorot(hidden, hidden, rng),
                        )
                    })
                    .collect(),
            };
            let selfw = store.register(&format!("enc.l{l}.self"), Matrix::glorot(hidden, hidden, rng));
            layers.push(LayerParams { rel, selfw });
        }

        Ok(HeteroEncoder {
            node_type_names,
            edge_type_names,
            w_q,
            has_tokens,
            token_embedding,
            backbone,
            layers,
            hidden,
            embed_dim,
            dropout,
        })
    }

    /// Every parameter the backbone owns, the shared user projection
    /// included.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.w_q.clone();
        ids.push(self.token_embedding);
        for l in &self.layers {
            ids.extend(&l.rel);
            ids.push(l.selfw);
        }
        ids.sort_by_key(|id| id.0);
        ids.dedup();
        ids
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Mean token embedding per entry; an empty list yields a zero row.
    pub fn encode_text(&self, store: &ParamStore, token_lists: &[Vec<usize>]) -> Result<Matrix> {
        let emb = store.value(self.token_embedding);
        let mut out = Matrix::zeros(token_lists.len(), self.embed_dim);
        for (row, tokens) in token_lists.iter().enumerate() {
            if tokens.is_empty() {
                continue;
            }
            for &t in tokens {
                if t >= emb.rows() {
                    return Err(CaclError::InvalidArgument(format!(
                        "token {t} outside vocabulary of {}",
                        emb.rows()
                    )));
                }
                for (o, e) in out.row_mut(row).iter_mut().zip(emb.row(t)) {
                    *o += e;
                }
            }
            let inv = 1.0 / tokens.len() as f64;
            out.row_mut(row).iter_mut().for_each(|v| *v *= inv);
        }
        Ok(out)
    }

    /// Differentiable forward pass over a subgraph. Returns hidden states of
    /// the subgraph's users (local user order). With `dropout_on`, each layer
    /// output is masked Bernoulli(1-p) and rescaled by 1/(1-p), drawn from
    /// `rng`.
    pub fn forward_t(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sub: &Subgraph,
        dropout_on: bool,
        rng: &mut SplitRng,
    ) -> Result<TapeId> {
        let g = &sub.graph;
        let n_nodes = g.nodes().len();
        for def in g.node_types() {
            if !self.node_type_names.contains(&def.name) {
                return Err(CaclError::Graph(format!(
                    "encoder has no projection for node type \"{}\"",
                    def.name
                )));
            }
        }
        for def in g.edge_types() {
            if !self.edge_type_names.contains(&def.name) {
                return Err(CaclError::Graph(format!(
                    "encoder has no weights for edge type \"{}\"",
                    def.name
                )));
            }
        }

        // Input projection per type, scattered into one matrix over nodes.
        let mut h0: Option<TapeId> = None;
        for (sub_ty, def) in g.node_types().iter().enumerate() {
            let enc_ty = self
                .node_type_names
                .iter()
                .position(|n| n == &def.name)
                .expect("checked above");
            let rows = g.nodes_of_type(sub_ty);
            if rows.is_empty() {
                continue;
            }
            let static_block = tape.constant(sub.features[sub_ty].clone());
            let x = if self.has_tokens[enc_ty] {
                let groups: Vec<Vec<usize>> = rows
                    .iter()
                    .map(|&id| flatten_tokens(&g.nodes()[id].feature.tokens))
                    .collect();
                let emb = tape.param(store, self.token_embedding);
                let means = tape.mean_agg(emb, Rc::new(groups))?;
                tape.concat_cols(static_block, means)?
            } else {
                static_block
            };
            let w = tape.param(store, self.w_q[enc_ty]);
            let proj = tape.matmul(x, w)?;
            let act = tape.leaky_relu(proj);
            let scatter = SparseMap {
                n_out: n_nodes,
                entries: rows
                    .iter()
                    .enumerate()
                    .map(|(r, &id)| (id, r, 1.0))
                    .collect(),
            };
            let placed = tape.weighted_agg(act, Rc::new(scatter))?;
            h0 = Some(match h0 {
                None => placed,
                Some(acc) => tape.add(acc, placed)?,
            });
        }
        let mut h = h0.ok_or_else(|| CaclError::Graph("subgraph has no nodes".into()))?;

        // Message passing.
        let rel_groups = match self.backbone {
            Backbone::Rsage => Some(self.relation_groups(g)?),
            Backbone::Gcn => None,
        };
        let collapsed = match self.backbone {
            Backbone::Gcn => Some(Rc::new(collapsed_adjacency(g))),
            Backbone::Rsage => None,
        };
        for layer in &self.layers {
            let mut out = match self.backbone {
                Backbone::Gcn => {
                    let agg = tape.weighted_agg(h, Rc::clone(collapsed.as_ref().unwrap()))?;
                    let w = tape.param(store, layer.selfw);
                    tape.matmul(agg, w)?
                }
                Backbone::Rsage => {
                    let w_self = tape.param(store, layer.selfw);
                    let mut acc = tape.matmul(h, w_self)?;
                    for (rel, groups) in rel_groups.as_ref().unwrap() {
                        let m = tape.mean_agg(h, Rc::clone(groups))?;
                        let w = tape.param(store, layer.rel[*rel]);
                        let t = tape.matmul(m, w)?;
                        acc = tape.add(acc, t)?;
                    }
                    acc
                }
            };
            out = tape.leaky_relu(out);
            if dropout_on && self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let mut mask = Matrix::zeros(n_nodes, self.hidden);
                for v in mask.data_mut() {
                    *v = if rng.gen_range(0.0..1.0) < self.dropout {
                        0.0
                    } else {
                        1.0 / keep
                    };
                }
                let mask = tape.constant(mask);
                out = tape.hadamard(out, mask)?;
            }
            h = out;
        }

        // Keep only the user rows (local ids 0..user_count).
        let take = SparseMap {
            n_out: sub.user_count,
            entries: (0..sub.user_count).map(|i| (i, i, 1.0)).collect(),
        };
        tape.weighted_agg(h, Rc::new(take))
    }

    /// Untracked forward pass.
    pub fn forward(
        &self,
        store: &ParamStore,
        sub: &Subgraph,
        dropout_on: bool,
        rng: &mut SplitRng,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let h = self.forward_t(&mut tape, store, sub, dropout_on, rng)?;
        Ok(tape.value(h).clone())
    }

    /// Neighbor groups per owned relation present in the subgraph:
    /// `groups[dst]` lists the source endpoints of that relation's edges.
    fn relation_groups(&self, g: &HeteroGraph) -> Result<Vec<(usize, Rc<Vec<Vec<usize>>>)>> {
        let n_nodes = g.nodes().len();
        let mut by_rel: Vec<Option<Vec<Vec<usize>>>> = vec![None; self.edge_type_names.len()];
        for e in g.edges() {
            let name = &g.edge_types()[e.ty].name;
            let rel = self
                .edge_type_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    CaclError::Graph(format!("encoder has no weights for edge type \"{name}\""))
                })?;
            by_rel[rel]
                .get_or_insert_with(|| vec![Vec::new(); n_nodes])[e.dst]
                .push(e.src);
        }
        Ok(by_rel
            .into_iter()
            .enumerate()
            .filter_map(|(rel, g)| g.map(|g| (rel, Rc::new(g))))
            .collect())
    }
}

fn flatten_tokens(tokens: &[Vec<usize>]) -> Vec<usize> {
    tokens.iter().flatten().copied().collect()
}

/// Symmetric normalized adjacency over all subgraph nodes with edge types
/// collapsed: entries of D^{-1/2} (A + I) D^{-1/2}.
fn collapsed_adjacency(g: &HeteroGraph) -> SparseMap {
    let n = g.nodes().len();
    let mut pairs = std::collections::BTreeSet::new();
    for e in g.edges() {
        if e.src != e.dst {
            pairs.insert((e.src.min(e.dst), e.src.max(e.dst)));
        }
    }
    let mut degree = vec![1.0f64; n];
    for &(a, b) in &pairs {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let mut entries = Vec::with_capacity(n + 2 * pairs.len());
    for (i, &d) in degree.iter().enumerate() {
        entries.push((i, i, 1.0 / d));
    }
    for &(a, b) in &pairs {
        let w = 1.0 / (degree[a] * degree[b]).sqrt();
        entries.push((a, b, w));
        entries.push((b, a, w));
    }
    SparseMap { n_out: n, entries }
}

// --- Projection head ------------------------------------------------------

/// Two-layer projection `z = H W1^T W2^T`, linear by default; the optional
/// hidden nonlinearity is a configuration switch.
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    pub w1: ParamId,
    pub w2: ParamId,
    pub nonlinear: bool,
}

impl ProjectionHead {
    pub fn new(
        store: &mut ParamStore,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        nonlinear: bool,
        rng: &mut SplitRng,
    ) -> Self {
        ProjectionHead {
            w1: store.register("proj.w1", Matrix::glorot(hidden, in_dim, rng)),
            w2: store.register("proj.w2", Matrix::glorot(out_dim, hidden, rng)),
            nonlinear,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.w2]
    }

    pub fn project_t(&self, tape: &mut Tape, store: &ParamStore, h: TapeId) -> Result<TapeId> {
        let w1 = tape.param(store, self.w1);
        let w1t = tape.transpose(w1);
        let mut t = tape.matmul(h, w1t)?;
        if self.nonlinear {
            t = tape.leaky_relu(t);
        }
        let w2 = tape.param(store, self.w2);
        let w2t = tape.transpose(w2);
        tape.matmul(t, w2t)
    }

    pub fn project(&self, store: &ParamStore, h: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let hid = tape.constant(h.clone());
        let z = self.project_t(&mut tape, store, hid)?;
        Ok(tape.value(z).clone())
    }
}

// --- Classifier -----------------------------------------------------------

/// Linear two-class head over user hidden states.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub w_c: ParamId,
}

impl Classifier {
    pub fn new(store: &mut ParamStore, in_dim: usize, rng: &mut SplitRng) -> Self {
        Classifier {
            w_c: store.register("clf.w_c", Matrix::glorot(2, in_dim, rng)),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_c]
    }

    pub fn logits_t(&self, tape: &mut Tape, store: &ParamStore, h: TapeId) -> Result<TapeId> {
        let w = tape.param(store, self.w_c);
        let wt = tape.transpose(w);
        tape.matmul(h, wt)
    }

    /// Mean cross-entropy over rows with a label; errors if none has one.
    pub fn classify_t(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: TapeId,
        labels: Rc<Vec<Option<usize>>>,
    ) -> Result<(TapeId, TapeId)> {
        let logits = self.logits_t(tape, store, h)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok((logits, loss))
    }

    pub fn logits(&self, store: &ParamStore, h: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let hid = tape.constant(h.clone());
        let l = self.logits_t(&mut tape, store, hid)?;
        Ok(tape.value(l).clone())
    }
}
