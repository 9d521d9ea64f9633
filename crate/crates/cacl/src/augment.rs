//! Adaptive augmentations that derive a second view of a subgraph: centrality
//! weighted feature masking, link prediction with the community-aware
//! encoder, and synonym substitution on token sequences.
//!
//! Every operation is pure given its inputs and RNG, so independent subgraphs
//! can be augmented in parallel from split streams.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::community::CaEncoder;
use crate::graph::{EdgeRecord, Subgraph, UserGraph, PREDICTED_EDGE_TYPE};
use crate::numeric::{edge_score, Matrix, ParamStore, SplitRng};
use crate::{CaclError, Result};

const MAX_PAGERANK_ITERS: usize = 1000;
/// RNG stream tags for the independent augmentation stages.
const TAG_MASK: u64 = 0x6d61_736b;
const TAG_SYN: u64 = 0x7379_6e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    /// Base masking probability before truncation.
    pub p_f: f64,
    /// Ceiling on any per-dimension masking probability.
    pub p_tau: f64,
    /// Edge-score threshold above which a missing edge is predicted.
    pub p_e: f64,
    /// Per-token synonym substitution probability.
    pub p_s: f64,
    /// PageRank damping factor.
    pub damping: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            p_f: 0.3,
            p_tau: 0.2,
            p_e: 0.95,
            p_s: 0.1,
            damping: 0.85,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.p_f) || !unit(self.p_tau) || !unit(self.p_s) {
            return Err(CaclError::InvalidArgument(format!(
                "masking and substitution probabilities must lie in [0,1]: \
                 p_f={}, p_tau={}, p_s={}",
                self.p_f, self.p_tau, self.p_s
            )));
        }
        if !(self.p_e > 0.0 && self.p_e <= 1.0) {
            return Err(CaclError::InvalidArgument(format!(
                "p_e={} outside (0,1]",
                self.p_e
            )));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(CaclError::InvalidArgument(format!(
                "damping={} outside (0,1)",
                self.damping
            )));
        }
        Ok(())
    }

    /// Knob values under which augmentation is the identity.
    pub fn neutral() -> Self {
        AugConfig {
            p_f: 0.0,
            p_tau: 0.0,
            p_e: 1.0,
            p_s: 0.0,
            damping: 0.85,
        }
    }
}

// --- PageRank -------------------------------------------------------------

/// PageRank by power iteration on the column-stochastic walk matrix with
/// uniform teleport. Dangling nodes redistribute their mass uniformly.
/// Converges when the L1 change drops below `tol`.
pub fn pagerank(ug: &UserGraph, damping: f64, tol: f64) -> Result<Vec<f64>> {
    let n = ug.n();
    if n == 0 {
        return Err(CaclError::InvalidArgument("pagerank on empty graph".into()));
    }
    if !(damping > 0.0 && damping < 1.0) {
        return Err(CaclError::InvalidArgument(format!(
            "damping={damping} outside (0,1)"
        )));
    }
    let teleport = (1.0 - damping) / n as f64;
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_PAGERANK_ITERS {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for i in 0..n {
            if ug.degrees[i] == 0 {
                dangling += x[i];
                continue;
            }
            let share = x[i] / ug.degrees[i] as f64;
            for &j in &ug.adj[i] {
                next[j] += share;
            }
        }
        let spread = dangling / n as f64;
        for v in next.iter_mut() {
            *v = teleport + damping * (*v + spread);
        }
        residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
        x = next;
        if residual < tol {
            return Ok(x);
        }
    }
    Err(CaclError::Graph(format!(
        "pagerank did not converge after {MAX_PAGERANK_ITERS} iterations (residual {residual:e})"
    )))
}

/// Centrality entries for a subgraph's users, gathered from a vector aligned
/// with the full user graph.
pub fn gather_rho(full: &UserGraph, rho: &[f64], sub: &Subgraph) -> Result<Vec<f64>> {
    if rho.len() != full.n() {
        return Err(CaclError::Shape(format!(
            "centrality vector of {} entries for {} users",
            rho.len(),
            full.n()
        )));
    }
    (0..sub.user_count)
        .map(|i| {
            let parent = sub.parent_ids[i];
            let pos = full
                .user_ids
                .binary_search(&parent)
                .map_err(|_| CaclError::Graph(format!("user {parent} missing from user graph")))?;
            Ok(rho[pos])
        })
        .collect()
}

// --- Feature shifting -----------------------------------------------------

/// Per-dimension salience `w_o = ln(sum_i |x_io| * rho_i)`; an all-zero
/// column gets a negative-infinity sentinel that later maps to the maximal
/// masking probability.
pub fn feature_weights(features: &Matrix, rho: &[f64]) -> Result<Vec<f64>> {
    if features.rows() != rho.len() {
        return Err(CaclError::Shape(format!(
            "{} feature rows vs {} centrality entries",
            features.rows(),
            rho.len()
        )));
    }
    let mut out = Vec::with_capacity(features.cols());
    for o in 0..features.cols() {
        let mut s = 0.0;
        for i in 0..features.rows() {
            s += features.get(i, o).abs() * rho[i];
        }
        out.push(if s > 0.0 { s.ln() } else { f64::NEG_INFINITY });
    }
    Ok(out)
}

/// Truncated masking probabilities
/// `p_o = min((w_max - w_o) / (w_max - w_mean) * p_f, p_tau)`, with the mean
/// and max taken over finite weights. Sentinel weights map straight to
/// `p_tau`; if all finite weights are equal no finite dimension is masked.
pub fn mask_probabilities(weights: &[f64], p_f: f64, p_tau: f64) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Ok(Vec::new());
    }
    let finite: Vec<f64> = weights.iter().copied().filter(|w| w.is_finite()).collect();
    if finite.is_empty() {
        return Err(CaclError::InvalidArgument(
            "every feature column is zero; masking weights undefined".into(),
        ));
    }
    let w_max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w_mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let spread = w_max - w_mean;
    Ok(weights
        .iter()
        .map(|&w| {
            if !w.is_finite() {
                p_tau
            } else if spread <= 0.0 {
                0.0
            } else {
                ((w_max - w) / spread * p_f).min(p_tau)
            }
        })
        .collect())
}

/// One keep/drop vector, entry `o` drawn from Bern(1 - probs[o]).
pub fn sample_mask(probs: &[f64], rng: &mut SplitRng) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| if rng.gen_range(0.0..1.0) < p { 0.0 } else { 1.0 })
        .collect()
}

/// Masks static feature columns, one mask vector per node type shared by all
/// of its nodes. User salience comes from `rho_users` (aligned with local
/// user rows); other types weight their columns uniformly.
pub fn shift_features(
    sub: &Subgraph,
    cfg: &AugConfig,
    rho_users: &[f64],
    rng: &SplitRng,
) -> Result<Subgraph> {
    let user_ty = sub
        .graph
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("subgraph has no user node type".into()))?;
    let mut out = sub.clone();
    let mut mask_rng = rng.fork(TAG_MASK);
    for ty in 0..out.features.len() {
        let m = &mut out.features[ty];
        if m.rows() == 0 || m.cols() == 0 {
            continue;
        }
        let rho: Vec<f64> = if ty == user_ty {
            if rho_users.len() != m.rows() {
                return Err(CaclError::Shape(format!(
                    "{} centrality entries for {} subgraph users",
                    rho_users.len(),
                    m.rows()
                )));
            }
            rho_users.to_vec()
        } else {
            vec![1.0 / m.rows() as f64; m.rows()]
        };
        let weights = feature_weights(m, &rho)?;
        let probs = mask_probabilities(&weights, cfg.p_f, cfg.p_tau)?;
        let mask = sample_mask(&probs, &mut mask_rng);
        for i in 0..m.rows() {
            for (v, keep) in m.row_mut(i).iter_mut().zip(&mask) {
                *v *= keep;
            }
        }
    }
    Ok(out)
}

// --- Link prediction ------------------------------------------------------

/// Non-adjacent user pairs whose decoded edge probability exceeds `p_e`,
/// as local user index pairs `(i, j)` with `i < j`. Scores come from the
/// community-aware encoder run on the subgraph's current user features.
pub fn predict_links(
    sub: &Subgraph,
    enc: &CaEncoder,
    store: &ParamStore,
    p_e: f64,
) -> Result<Vec<(usize, usize)>> {
    if !(p_e > 0.0 && p_e <= 1.0) {
        return Err(CaclError::InvalidArgument(format!("p_e={p_e} outside (0,1]")));
    }
    let user_ty = sub
        .graph
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("subgraph has no user node type".into()))?;
    let ug = crate::graph::extract_user_graph(&sub.graph)?;
    let feats = &sub.features[user_ty];
    let h = enc.encode(store, &ug, feats)?;
    let mut out = Vec::new();
    for i in 0..ug.n() {
        for j in (i + 1)..ug.n() {
            if !ug.has_edge(i, j) && edge_score(h.row(i), h.row(j)) > p_e {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// Appends predicted pairs as typed edges, both directions each.
fn add_predicted_edges(sub: &mut Subgraph, pairs: &[(usize, usize)]) -> Result<()> {
    if pairs.is_empty() {
        return Ok(());
    }
    let user_ty = sub
        .graph
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("subgraph has no user node type".into()))?;
    let ty = sub
        .graph
        .ensure_edge_type(PREDICTED_EDGE_TYPE, user_ty, user_ty);
    for &(i, j) in pairs {
        sub.graph.add_edge(EdgeRecord { src: i, dst: j, ty })?;
        sub.graph.add_edge(EdgeRecord { src: j, dst: i, ty })?;
    }
    Ok(())
}

// --- Synonym substitution -------------------------------------------------

/// Token substitution table. Keys and substitutes must fit the vocabulary
/// and no token may map to itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymDict {
    map: BTreeMap<usize, Vec<usize>>,
}

impl SynonymDict {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(map: BTreeMap<usize, Vec<usize>>, vocab_size: usize) -> Result<Self> {
        for (&token, subs) in &map {
            if token >= vocab_size {
                return Err(CaclError::InvalidArgument(format!(
                    "synonym key {token} outside vocabulary of {vocab_size}"
                )));
            }
            if subs.is_empty() {
                return Err(CaclError::InvalidArgument(format!(
                    "synonym key {token} has no substitutes"
                )));
            }
            for &s in subs {
                if s >= vocab_size {
                    return Err(CaclError::InvalidArgument(format!(
                        "substitute {s} outside vocabulary of {vocab_size}"
                    )));
                }
                if s == token {
                    return Err(CaclError::InvalidArgument(format!(
                        "token {token} maps to itself"
                    )));
                }
            }
        }
        Ok(SynonymDict { map })
    }

    /// Parses `{"token_id": [substitute ids...]}`.
    pub fn from_json(s: &str, vocab_size: usize) -> Result<Self> {
        let raw: BTreeMap<String, Vec<usize>> =
            serde_json::from_str(s).map_err(|e| CaclError::InvalidArgument(e.to_string()))?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let token: usize = k.parse().map_err(|_| {
                CaclError::InvalidArgument(format!("synonym key \"{k}\" is not a token id"))
            })?;
            if map.insert(token, v).is_some() {
                return Err(CaclError::InvalidArgument(format!(
                    "duplicate synonym key {token}"
                )));
            }
        }
        Self::new(map, vocab_size)
    }

    pub fn get(&self, token: usize) -> Option<&[usize]> {
        self.map.get(&token).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }
}

/// Independently replaces each token that has a dictionary entry with
/// probability `p_s` by a uniformly chosen substitute. Sequence lengths are
/// preserved.
pub fn substitute_synonyms(
    sub: &Subgraph,
    dict: &SynonymDict,
    p_s: f64,
    rng: &SplitRng,
) -> Result<Subgraph> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(CaclError::InvalidArgument(format!("p_s={p_s} outside [0,1]")));
    }
    let mut out = sub.clone();
    if p_s == 0.0 || dict.is_empty() {
        return Ok(out);
    }
    let mut syn_rng = rng.fork(TAG_SYN);
    for node in 0..out.graph.nodes().len() {
        if out.graph.nodes()[node].feature.tokens.is_empty() {
            continue;
        }
        let mut tokens = out.graph.nodes()[node].feature.tokens.clone();
        for seq in tokens.iter_mut() {
            for t in seq.iter_mut() {
                if let Some(subs) = dict.get(*t) {
                    if syn_rng.gen_range(0.0..1.0) < p_s {
                        *t = subs[syn_rng.gen_range(0..subs.len())];
                    }
                }
            }
        }
        out.graph.set_tokens(node, tokens)?;
    }
    Ok(out)
}

// --- Composition ----------------------------------------------------------

/// Builds the augmented view: feature masking, then link prediction on the
/// masked features, then synonym substitution. Node ids are preserved, so
/// original and augmented nodes correspond by position.
pub fn augment_subgraph(
    sub: &Subgraph,
    enc: &CaEncoder,
    store: &ParamStore,
    dict: &SynonymDict,
    cfg: &AugConfig,
    rho_users: &[f64],
    rng: &SplitRng,
) -> Result<Subgraph> {
    cfg.validate()?;
    let mut out = shift_features(sub, cfg, rho_users, rng)?;
    let pairs = predict_links(&out, enc, store, cfg.p_e)?;
    add_predicted_edges(&mut out, &pairs)?;
    substitute_synonyms(&out, dict, cfg.p_s, rng)
}
