//! Community detection and the community-aware encoder.
//!
//! Communities come from two cooperating routines: Louvain picks how many
//! communities the user graph naturally has, and `cluster_to_k` re-partitions
//! users into exactly that many groups by merging along edges in descending
//! embedding similarity. The encoder behind those embeddings is pretrained on
//! link prediction plus a soft modularity objective.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::graph::UserGraph;
use crate::numeric::{
    cosine, Matrix, ParamId, ParamStore, SparseMap, SplitRng, Tape, TapeId,
};
use crate::{CaclError, Result};

/// Minimum modularity gain for a Louvain move; smaller gains count as noise.
const MOVE_TOL: f64 = 1e-12;
/// Probability clamp for link-prediction cross-entropy.
const PROB_EPS: f64 = 1e-7;
/// Attempts per negative sample before giving up on a dense neighborhood.
const NEG_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community id per user vertex, ids `0..k` ordered by smallest member.
    pub assignment: Vec<usize>,
    pub k: usize,
}

impl CommunityPartition {
    /// Renumbers arbitrary labels into canonical form.
    fn from_labels(labels: &[usize]) -> Self {
        let mut remap: Vec<Option<usize>> = vec![None; labels.len()];
        let mut next = 0;
        let mut assignment = Vec::with_capacity(labels.len());
        for &l in labels {
            let id = *remap[l].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            assignment.push(id);
        }
        CommunityPartition {
            assignment,
            k: next,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }

    /// Member lists per community, each ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: CommunityPartition =
            serde_json::from_str(s).map_err(|e| CaclError::InvalidArgument(e.to_string()))?;
        if p.assignment.iter().any(|&c| c >= p.k) {
            return Err(CaclError::InvalidArgument(
                "partition assignment exceeds k".into(),
            ));
        }
        Ok(p)
    }
}

// --- Modularity and Louvain ---------------------------------------------

/// Newman modularity of a partition of an unweighted undirected graph.
pub fn modularity(ug: &UserGraph, partition: &CommunityPartition) -> Result<f64> {
    if ug.edge_count == 0 {
        return Err(CaclError::InvalidArgument(
            "modularity undefined for an edgeless graph".into(),
        ));
    }
    if partition.assignment.len() != ug.n() {
        return Err(CaclError::InvalidArgument(format!(
            "partition over {} users vs graph with {}",
            partition.assignment.len(),
            ug.n()
        )));
    }
    let m = ug.edge_count as f64;
    let mut intra = vec![0.0; partition.k];
    for (i, j) in ug.edge_list() {
        if partition.assignment[i] == partition.assignment[j] {
            intra[partition.assignment[i]] += 1.0;
        }
    }
    let mut deg_sum = vec![0.0; partition.k];
    for (i, &c) in partition.assignment.iter().enumerate() {
        deg_sum[c] += ug.degrees[i] as f64;
    }
    let mut q = 0.0;
    for c in 0..partition.k {
        q += intra[c] / m - (deg_sum[c] / (2.0 * m)).powi(2);
    }
    Ok(q)
}

/// Weighted multigraph state for the aggregation phases. `adj[i][j]` holds
/// A_ij; self-loops store the doubled internal weight so degrees stay
/// consistent under aggregation.
struct LouvainGraph {
    adj: Vec<std::collections::BTreeMap<usize, f64>>,
    degrees: Vec<f64>,
    two_m: f64,
}

impl LouvainGraph {
    fn from_user_graph(ug: &UserGraph) -> Self {
        let n = ug.n();
        let mut adj = vec![std::collections::BTreeMap::new(); n];
        for (i, j) in ug.edge_list() {
            adj[i].insert(j, 1.0);
            adj[j].insert(i, 1.0);
        }
        let degrees: Vec<f64> = adj.iter().map(|m| m.values().sum()).collect();
        let two_m = degrees.iter().sum();
        LouvainGraph {
            adj,
            degrees,
            two_m,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// One round of local moving, deterministic ascending node order.
    /// Returns community labels and whether anything moved.
    fn local_moving(&self) -> (Vec<usize>, bool) {
        let n = self.n();
        let m = self.two_m / 2.0;
        let mut community: Vec<usize> = (0..n).collect();
        let mut sigma_tot: Vec<f64> = self.degrees.clone();
        let mut any_move = false;
        loop {
            let mut moved = false;
            for i in 0..n {
                let old = community[i];
                sigma_tot[old] -= self.degrees[i];
                // Weight from i into each neighboring community, self-loop
                // excluded.
                let mut k_to: std::collections::BTreeMap<usize, f64> =
                    std::collections::BTreeMap::new();
                for (&j, &w) in &self.adj[i] {
                    if j != i {
                        *k_to.entry(community[j]).or_insert(0.0) += w;
                    }
                }
                let gain = |c: usize| {
                    let k = k_to.get(&c).copied().unwrap_or(0.0);
                    k / m - self.degrees[i] * sigma_tot[c] / (2.0 * m * m)
                };
                let stay = gain(old);
                let mut best_c = old;
                let mut best_gain = stay;
                for &c in k_to.keys() {
                    let g = gain(c);
                    if g > best_gain + MOVE_TOL || (g > best_gain - MOVE_TOL && c < best_c) {
                        best_c = c;
                        best_gain = g;
                    }
                }
                if best_gain <= stay + MOVE_TOL {
                    best_c = old;
                }
                community[i] = best_c;
                sigma_tot[best_c] += self.degrees[i];
                if best_c != old {
                    moved = true;
                    any_move = true;
                }
            }
            if !moved {
                break;
            }
        }
        (community, any_move)
    }

    /// Collapses communities into super-nodes, labels renumbered by first
    /// appearance in node order.
    fn aggregate(&self, community: &[usize]) -> (LouvainGraph, Vec<usize>) {
        let mut remap: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
        let mut compact = Vec::with_capacity(community.len());
        for &c in community {
            let next = remap.len();
            let id = *remap.entry(c).or_insert(next);
            compact.push(id);
        }
        let k = remap.len();
        let mut adj = vec![std::collections::BTreeMap::new(); k];
        for (i, nbrs) in self.adj.iter().enumerate() {
            for (&j, &w) in nbrs {
                let (ci, cj) = (compact[i], compact[j]);
                *adj[ci].entry(cj).or_insert(0.0) += w;
            }
        }
        let degrees: Vec<f64> = adj.iter().map(|m| m.values().sum()).collect();
        let two_m = self.two_m;
        (
            LouvainGraph {
                adj,
                degrees,
                two_m,
            },
            compact,
        )
    }
}

/// Full Louvain partition of the user graph; an edgeless graph yields
/// singletons.
pub fn louvain_partition(ug: &UserGraph) -> CommunityPartition {
    let n = ug.n();
    if ug.edge_count == 0 {
        return CommunityPartition {
            assignment: (0..n).collect(),
            k: n,
        };
    }
    let mut graph = LouvainGraph::from_user_graph(ug);
    // node_to_super[i] is the super-node currently containing original i.
    let mut node_to_super: Vec<usize> = (0..n).collect();
    loop {
        let (community, any_move) = graph.local_moving();
        if !any_move {
            break;
        }
        let (aggregated, compact) = graph.aggregate(&community);
        for s in node_to_super.iter_mut() {
            *s = compact[*s];
        }
        graph = aggregated;
    }
    CommunityPartition::from_labels(&node_to_super)
}

/// Number of communities Louvain settles on.
pub fn louvain_k(ug: &UserGraph) -> usize {
    louvain_partition(ug).k
}

// --- Similarity-constrained clustering ----------------------------------

/// Partitions users into exactly `k` communities by merging across edges in
/// descending cosine similarity of the rows of `h` (ties broken by ascending
/// endpoint pair). If the graph has more than `k` connected components the
/// merge runs out of edges early and the result keeps one community per
/// component, with a warning on stderr.
pub fn cluster_to_k(ug: &UserGraph, h: &Matrix, k: usize) -> Result<CommunityPartition> {
    let n = ug.n();
    if k < 1 || k > n {
        return Err(CaclError::InvalidArgument(format!(
            "cluster_to_k: k = {k} outside 1..={n}"
        )));
    }
    if h.rows() != n {
        return Err(CaclError::Shape(format!(
            "cluster_to_k: {} embedding rows for {n} users",
            h.rows()
        )));
    }
    let mut edges: Vec<(f64, usize, usize)> = ug
        .edge_list()
        .into_iter()
        .map(|(i, j)| (cosine(h.row(i), h.row(j)), i, j))
        .collect();
    edges.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut uf = UnionFind::new(n);
    let mut count = n;
    for &(_, i, j) in &edges {
        if count == k {
            break;
        }
        if uf.union(i, j) {
            count -= 1;
        }
    }
    if count > k {
        eprintln!(
            "warning: cluster_to_k stopped at {count} communities (requested {k}); \
             the graph has {count} connected components"
        );
    }
    let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    Ok(CommunityPartition::from_labels(&labels))
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    /// Returns true if two components were joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

// --- Community-aware encoder --------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaConfig {
    /// Weight of the modularity term.
    pub beta: f64,
    /// Sharpness of the embedding-distance kernel.
    pub gamma: f64,
    /// Sampled non-edges per observed edge in the link-prediction loss;
    /// zero disables negative sampling.
    pub neg_samples_per_edge: usize,
}

impl Default for CaConfig {
    fn default() -> Self {
        CaConfig {
            beta: 1.0,
            gamma: 0.5,
            neg_samples_per_edge: 1,
        }
    }
}

/// GCN over the user graph: an input projection followed by `layers` graph
/// convolutions, all activations leaky-ReLU.
#[derive(Debug, Clone)]
pub struct CaEncoder {
    pub w_p: ParamId,
    pub layers: Vec<ParamId>,
    pub in_dim: usize,
    pub hidden: usize,
}

impl CaEncoder {
    pub fn new(
        store: &mut ParamStore,
        in_dim: usize,
        hidden: usize,
        n_layers: usize,
        rng: &mut SplitRng,
    ) -> Self {
        let w_p = store.register("ca.w_p", Matrix::glorot(in_dim, hidden, rng));
        let layers = (0..n_layers)
            .map(|l| store.register(&format!("ca.w_h{l}"), Matrix::glorot(hidden, hidden, rng)))
            .collect();
        CaEncoder {
            w_p,
            layers,
            in_dim,
            hidden,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.w_p];
        ids.extend(&self.layers);
        ids
    }

    /// Differentiable forward pass; `features` rows align with `ug` users.
    pub fn encode_t(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ug: &UserGraph,
        features: TapeId,
    ) -> Result<TapeId> {
        let a_hat = Rc::new(normalized_adjacency(ug));
        let w_p = tape.param(store, self.w_p);
        let x = tape.matmul(features, w_p)?;
        let mut h = tape.leaky_relu(x);
        for &w in &self.layers {
            let agg = tape.weighted_agg(h, Rc::clone(&a_hat))?;
            let w = tape.param(store, w);
            let hw = tape.matmul(agg, w)?;
            h = tape.leaky_relu(hw);
        }
        Ok(h)
    }

    /// Untracked forward pass for pool building and augmentation.
    pub fn encode(&self, store: &ParamStore, ug: &UserGraph, features: &Matrix) -> Result<Matrix> {
        let a_hat = normalized_adjacency(ug);
        let mut h = features.matmul(store.value(self.w_p))?.leaky_relu();
        for &w in &self.layers {
            h = apply_sparse(&a_hat, &h).matmul(store.value(w))?.leaky_relu();
        }
        Ok(h)
    }
}

/// Symmetric GCN normalization with self-loops:
/// entries of D^{-1/2} (A + I) D^{-1/2}.
pub fn normalized_adjacency(ug: &UserGraph) -> SparseMap {
    let n = ug.n();
    let dtilde: Vec<f64> = ug.degrees.iter().map(|&d| (d + 1) as f64).collect();
    let mut entries = Vec::with_capacity(n + 2 * ug.edge_count);
    for i in 0..n {
        entries.push((i, i, 1.0 / dtilde[i]));
        for &j in &ug.adj[i] {
            entries.push((i, j, 1.0 / (dtilde[i] * dtilde[j]).sqrt()));
        }
    }
    SparseMap { n_out: n, entries }
}

pub fn apply_sparse(map: &SparseMap, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(map.n_out, x.cols());
    for &(o, i, w) in &map.entries {
        for (ov, xv) in out.row_mut(o).iter_mut().zip(x.row(i)) {
            *ov += w * xv;
        }
    }
    out
}

// --- Pretraining losses --------------------------------------------------

/// The modularity matrix `A_ij - d_i d_j / 2m`, all ordered pairs including
/// the diagonal.
pub fn modularity_matrix(ug: &UserGraph) -> Result<Matrix> {
    if ug.edge_count == 0 {
        return Err(CaclError::InvalidArgument(
            "modularity matrix undefined for an edgeless graph".into(),
        ));
    }
    let n = ug.n();
    let two_m = 2.0 * ug.edge_count as f64;
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = if i != j && ug.has_edge(i, j) { 1.0 } else { 0.0 };
            b.set(i, j, a - ug.degrees[i] as f64 * ug.degrees[j] as f64 / two_m);
        }
    }
    Ok(b)
}

/// Samples `per_edge` non-adjacent pairs for each observed edge by
/// re-drawing the second endpoint. Dense neighborhoods may yield fewer.
fn sample_negative_pairs(
    ug: &UserGraph,
    per_edge: usize,
    rng: &mut SplitRng,
) -> Vec<(usize, usize)> {
    use rand::Rng;
    let n = ug.n();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for (i, _) in ug.edge_list() {
        for _ in 0..per_edge {
            for _ in 0..NEG_ATTEMPTS {
                let j = rng.gen_range(0..n);
                if j != i && !ug.has_edge(i, j) {
                    out.push((i.min(j), i.max(j)));
                    break;
                }
            }
        }
    }
    out
}

/// Differentiable community-aware loss; returns (link, modularity, total)
/// nodes. The link term is cross-entropy on edge scores `sigma(h_i . h_j)`
/// over all edges plus sampled non-edges, scaled by 1/n^2; the modularity
/// term weights the modularity matrix by a Gaussian kernel of embedding
/// distance.
pub fn ca_loss_t(
    tape: &mut Tape,
    ug: &UserGraph,
    h: TapeId,
    cfg: &CaConfig,
    rng: &mut SplitRng,
) -> Result<(TapeId, TapeId, TapeId)> {
    let n = ug.n();
    if ug.edge_count == 0 {
        return Err(CaclError::InvalidArgument(
            "community-aware loss undefined for an edgeless graph".into(),
        ));
    }
    if tape.value(h).rows() != n {
        return Err(CaclError::Shape(format!(
            "ca_loss: {} embedding rows for {n} users",
            tape.value(h).rows()
        )));
    }

    // Link prediction.
    let pos_pairs = Rc::new(ug.edge_list());
    let neg_pairs = sample_negative_pairs(ug, cfg.neg_samples_per_edge, rng);
    let pos_scores = tape.pair_dots(h, pos_pairs)?;
    let pos_p = tape.sigmoid(pos_scores);
    let pos_p = tape.clamp(pos_p, PROB_EPS, 1.0 - PROB_EPS);
    let pos_ln = tape.ln(pos_p);
    let mut ll = tape.sum(pos_ln);
    if !neg_pairs.is_empty() {
        let neg_scores = tape.pair_dots(h, Rc::new(neg_pairs))?;
        let neg_p = tape.sigmoid(neg_scores);
        let neg_p = tape.clamp(neg_p, PROB_EPS, 1.0 - PROB_EPS);
        let neg_flip = tape.scale(neg_p, -1.0);
        let one_minus = tape.add_scalar(neg_flip, 1.0);
        let neg_ln = tape.ln(one_minus);
        let neg_sum = tape.sum(neg_ln);
        ll = tape.add(ll, neg_sum)?;
    }
    let l_g = tape.scale(ll, -1.0 / (n * n) as f64);

    // Soft modularity.
    let b = tape.constant(modularity_matrix(ug)?);
    let hh = tape.hadamard(h, h)?;
    let sq = tape.row_sums(hh);
    let ones_row = tape.constant(Matrix::from_vec(1, n, vec![1.0; n])?);
    let ones_col = tape.constant(Matrix::from_vec(n, 1, vec![1.0; n])?);
    let r1 = tape.matmul(sq, ones_row)?;
    let sq_t = tape.transpose(sq);
    let r2 = tape.matmul(ones_col, sq_t)?;
    let ht = tape.transpose(h);
    let gram = tape.matmul(h, ht)?;
    let gram2 = tape.scale(gram, -2.0);
    let d1 = tape.add(r1, r2)?;
    let dist = tape.add(d1, gram2)?;
    let kernel_arg = tape.scale(dist, -cfg.gamma);
    let kernel = tape.exp(kernel_arg);
    let weighted = tape.hadamard(b, kernel)?;
    let total = tape.sum(weighted);
    let l_m = tape.scale(total, -cfg.beta / (2.0 * ug.edge_count as f64));

    let l_ca = tape.add(l_g, l_m)?;
    Ok((l_g, l_m, l_ca))
}

/// Untracked total community-aware loss for given embeddings.
pub fn ca_loss(ug: &UserGraph, h: &Matrix, cfg: &CaConfig, rng: &mut SplitRng) -> Result<f64> {
    let mut tape = Tape::new();
    let h = tape.constant(h.clone());
    let (_, _, l_ca) = ca_loss_t(&mut tape, ug, h, cfg, rng)?;
    Ok(tape.scalar(l_ca))
}

/// Per-epoch pretraining log row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainRow {
    pub epoch: usize,
    pub l_g: f64,
    pub l_m: f64,
    pub l_ca: f64,
}

const TAG_CA_NEG: u64 = 0x6361_6e65_67; // "caneg"

/// Adam pretraining of the encoder on the community-aware loss. Negative
/// samples are redrawn each epoch from a per-epoch fork of `rng`.
pub fn pretrain_ca(
    store: &mut ParamStore,
    enc: &CaEncoder,
    ug: &UserGraph,
    features: &Matrix,
    cfg: &CaConfig,
    epochs: usize,
    lr: f64,
    rng: &SplitRng,
) -> Result<Vec<PretrainRow>> {
    let mut opt = crate::numeric::Adam::new(store, enc.param_ids(), lr);
    let mut rows = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut tape = Tape::new();
        let f = tape.constant(features.clone());
        let h = enc.encode_t(&mut tape, store, ug, f)?;
        let mut neg_rng = rng.fork2(TAG_CA_NEG, epoch as u64);
        let (l_g, l_m, l_ca) = ca_loss_t(&mut tape, ug, h, cfg, &mut neg_rng)?;
        let row = PretrainRow {
            epoch,
            l_g: tape.scalar(l_g),
            l_m: tape.scalar(l_m),
            l_ca: tape.scalar(l_ca),
        };
        if !row.l_ca.is_finite() {
            return Err(CaclError::NonFinite {
                context: "community-aware pretraining".into(),
                step: epoch,
            });
        }
        store.zero_grads();
        tape.backward(l_ca)?;
        tape.accumulate_param_grads(store)?;
        opt.step(store)?;
        rows.push(row);
    }
    Ok(rows)
}
