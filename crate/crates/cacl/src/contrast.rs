//! Subgraph pool, matched-subgraph selection, and the community-aware
//! contrastive loss.
//!
//! Positives for a node come from the matched (least similar) community's
//! two views; hard negatives are the differently labeled users inside the
//! node's own community, in both views. The same masked kernel also serves
//! the ablation modes: all-pairs supervised and label-free cross-view
//! InfoNCE.

use serde::{Deserialize, Serialize};

use crate::graph::Subgraph;
use crate::numeric::{cosine, Matrix, Tape, TapeId};
use crate::{CaclError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// Weight of the contrastive term in the combined loss.
    pub lambda: f64,
    /// Softmax temperature on cosine similarities.
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            lambda: 0.9,
            temperature: 0.07,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CaclError::InvalidArgument(format!(
                "lambda={} outside [0,1]",
                self.lambda
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(CaclError::InvalidArgument(format!(
                "temperature={} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Which positive/negative sets the loss kernel uses. The two cacl variants
/// differ upstream only (which parameters build the pool and predict links);
/// their masks are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    CaclDynamic,
    CaclStatic,
    SupervisedAll,
    Unsupervised,
}

impl LossMode {
    pub fn uses_labels(self) -> bool {
        !matches!(self, LossMode::Unsupervised)
    }

    pub fn uses_matched_views(self) -> bool {
        matches!(self, LossMode::CaclDynamic | LossMode::CaclStatic)
    }
}

impl std::str::FromStr for LossMode {
    type Err = CaclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cacl_dynamic" => Ok(LossMode::CaclDynamic),
            "cacl_static" => Ok(LossMode::CaclStatic),
            "supervised_all" => Ok(LossMode::SupervisedAll),
            "unsupervised" => Ok(LossMode::Unsupervised),
            other => Err(CaclError::InvalidArgument(format!(
                "unknown loss mode \"{other}\""
            ))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::CaclDynamic => "cacl_dynamic",
            LossMode::CaclStatic => "cacl_static",
            LossMode::SupervisedAll => "supervised_all",
            LossMode::Unsupervised => "unsupervised",
        })
    }
}

// --- Subgraph pool --------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub sub: Subgraph,
    /// Mean of the community's user rows of z; must be refreshed whenever
    /// parameters change.
    pub mean_z: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SubgraphPool {
    pub entries: Vec<PoolEntry>,
}

impl SubgraphPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that the pool's communities partition `total_users` users.
    pub fn validate_partition(&self, total_users: usize) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            for local in 0..e.sub.user_count {
                if !seen.insert(e.sub.parent_ids[local]) {
                    return Err(CaclError::Graph(format!(
                        "user {} appears in two pool subgraphs",
                        e.sub.parent_ids[local]
                    )));
                }
            }
        }
        if seen.len() != total_users {
            return Err(CaclError::Graph(format!(
                "pool covers {} of {total_users} users",
                seen.len()
            )));
        }
        Ok(())
    }

    /// The least similar other community by cosine of mean embeddings; ties
    /// break toward the lowest index.
    pub fn match_subgraph(&self, alpha: usize) -> Result<usize> {
        if self.entries.len() < 2 {
            return Err(CaclError::InvalidArgument(
                "matching needs a pool of at least two subgraphs".into(),
            ));
        }
        if alpha >= self.entries.len() {
            return Err(CaclError::InvalidArgument(format!(
                "subgraph index {alpha} outside pool of {}",
                self.entries.len()
            )));
        }
        let mut best = None;
        let mut best_cos = f64::INFINITY;
        for (idx, e) in self.entries.iter().enumerate() {
            if idx == alpha {
                continue;
            }
            let c = cosine(&self.entries[alpha].mean_z, &e.mean_z);
            if c < best_cos {
                best_cos = c;
                best = Some(idx);
            }
        }
        Ok(best.expect("pool has a second entry"))
    }
}

// --- Per-node loss, scalar reference --------------------------------------

/// The per-node loss, anchored at node `i` of the original view (or the
/// augmented view when `anchor_augmented`). Positives are same-class users
/// of the matched community's two views; negatives are differently classed
/// users of the node's own two views. Direct translation used as an oracle
/// for the batched kernel.
#[allow(clippy::too_many_arguments)]
pub fn contrastive_node_loss(
    z_a: &Matrix,
    z_at: &Matrix,
    z_b: &Matrix,
    z_bt: &Matrix,
    labels_own: &[Option<usize>],
    labels_matched: &[Option<usize>],
    i: usize,
    anchor_augmented: bool,
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    cfg.validate()?;
    let class = labels_own
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| CaclError::InvalidArgument(format!("anchor {i} is not labeled")))?;
    let anchor = if anchor_augmented { z_at.row(i) } else { z_a.row(i) };
    let sim = |v: &[f64]| (cosine(anchor, v) / cfg.temperature).exp();

    let s_self = sim(if anchor_augmented { z_a.row(i) } else { z_at.row(i) });
    let mut s_pos = 0.0;
    for view in [z_b, z_bt] {
        for (j, l) in labels_matched.iter().enumerate() {
            if *l == Some(class) {
                s_pos += sim(view.row(j));
            }
        }
    }
    s_pos *= 0.5;
    let mut s_neg = 0.0;
    for view in [z_a, z_at] {
        for (j, l) in labels_own.iter().enumerate() {
            if j != i && l.is_some() && *l != Some(class) {
                s_neg += sim(view.row(j));
            }
        }
    }
    s_neg *= 0.5;

    let num = s_self + s_pos;
    Ok(-(num / (num + s_neg)).ln())
}

/// `lambda * contrastive + (1 - lambda) * classification`.
pub fn total_loss(l_contrast: f64, l_classify: f64, cfg: &ContrastiveConfig) -> f64 {
    cfg.lambda * l_contrast + (1.0 - cfg.lambda) * l_classify
}

pub fn total_loss_t(
    tape: &mut Tape,
    l_contrast: TapeId,
    l_classify: TapeId,
    cfg: &ContrastiveConfig,
) -> Result<TapeId> {
    let c = tape.scale(l_contrast, cfg.lambda);
    let k = tape.scale(l_classify, 1.0 - cfg.lambda);
    tape.add(c, k)
}

// --- Batched kernel -------------------------------------------------------

/// The four projected views of one anchor/matched community pair, plus
/// effective labels (`None` for users excluded from the label-dependent
/// sets, e.g. validation and test users during training).
pub struct AnchorPair<'a> {
    pub z_a: TapeId,
    pub z_at: TapeId,
    pub z_b: TapeId,
    pub z_bt: TapeId,
    pub labels_own: &'a [Option<usize>],
    pub labels_matched: &'a [Option<usize>],
}

/// One community's contribution to the total contrastive loss:
/// `1/(2 N) * sum_i [L_i(original anchor) + L_i(augmented anchor)]`,
/// where `N` counts all of the community's users and the anchor sum runs
/// over labeled users (all users in the label-free mode).
pub fn anchor_pair_loss_t(
    tape: &mut Tape,
    cfg: &ContrastiveConfig,
    mode: LossMode,
    pair: &AnchorPair,
) -> Result<TapeId> {
    cfg.validate()?;
    let n = tape.value(pair.z_a).rows();
    if tape.value(pair.z_at).rows() != n || pair.labels_own.len() != n {
        return Err(CaclError::Shape(format!(
            "anchor views and labels disagree on user count {n}"
        )));
    }
    let m = tape.value(pair.z_b).rows();
    if tape.value(pair.z_bt).rows() != m || pair.labels_matched.len() != m {
        return Err(CaclError::Shape(format!(
            "matched views and labels disagree on user count {m}"
        )));
    }
    if n == 0 {
        return Err(CaclError::InvalidArgument("empty anchor community".into()));
    }

    let inv_t = 1.0 / cfg.temperature;
    let na = tape.normalize_rows(pair.z_a);
    let nat = tape.normalize_rows(pair.z_at);
    let sim = |tape: &mut Tape, x: TapeId, y: TapeId| -> Result<TapeId> {
        let yt = tape.transpose(y);
        let c = tape.matmul(x, yt)?;
        let s = tape.scale(c, inv_t);
        Ok(tape.exp(s))
    };

    // Similarities against the own views, shared by every mode.
    let e_a_at = sim(tape, na, nat)?;
    let e_a_a = sim(tape, na, na)?;
    let e_at_at = sim(tape, nat, nat)?;
    let e_at_a = tape.transpose(e_a_at);

    // Label masks.
    let same_own = tape.constant(pair_mask(pair.labels_own, pair.labels_own, true, true));
    let diff_own = tape.constant(match mode {
        LossMode::Unsupervised => off_diagonal_ones(n),
        _ => pair_mask(pair.labels_own, pair.labels_own, false, true),
    });
    let eye = tape.constant(Matrix::identity(n));

    // Positive sources per anchor view.
    let (pos_a, pos_at) = match mode {
        LossMode::CaclDynamic | LossMode::CaclStatic => {
            let nb = tape.normalize_rows(pair.z_b);
            let nbt = tape.normalize_rows(pair.z_bt);
            let e_a_b = sim(tape, na, nb)?;
            let e_a_bt = sim(tape, na, nbt)?;
            let e_at_b = sim(tape, nat, nb)?;
            let e_at_bt = sim(tape, nat, nbt)?;
            let cross = tape.constant(pair_mask(
                pair.labels_own,
                pair.labels_matched,
                true,
                false,
            ));
            let pa = masked_half_sum(tape, &[(e_a_b, cross), (e_a_bt, cross)])?;
            let pat = masked_half_sum(tape, &[(e_at_b, cross), (e_at_bt, cross)])?;
            (Some(pa), Some(pat))
        }
        LossMode::SupervisedAll => {
            let pa = masked_half_sum(tape, &[(e_a_a, same_own), (e_a_at, same_own)])?;
            let pat = masked_half_sum(tape, &[(e_at_a, same_own), (e_at_at, same_own)])?;
            (Some(pa), Some(pat))
        }
        LossMode::Unsupervised => (None, None),
    };

    let neg_a = masked_half_sum(tape, &[(e_a_a, diff_own), (e_a_at, diff_own)])?;
    let neg_at = masked_half_sum(tape, &[(e_at_a, diff_own), (e_at_at, diff_own)])?;

    let self_a = diagonal(tape, e_a_at, eye)?;
    let self_at = diagonal(tape, e_at_a, eye)?;

    let anchors: Vec<f64> = pair
        .labels_own
        .iter()
        .map(|l| {
            if !mode.uses_labels() || l.is_some() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let eligible = tape.constant(Matrix::from_vec(n, 1, anchors)?);

    let term_a = view_loss(tape, self_a, pos_a, neg_a, eligible)?;
    let term_at = view_loss(tape, self_at, pos_at, neg_at, eligible)?;
    let both = tape.add(term_a, term_at)?;
    Ok(tape.scale(both, 1.0 / (2.0 * n as f64)))
}

/// `0.5 * sum_views row_sums(E (.) mask)` as an n-by-1 column.
fn masked_half_sum(tape: &mut Tape, parts: &[(TapeId, TapeId)]) -> Result<TapeId> {
    let mut acc: Option<TapeId> = None;
    for &(e, mask) in parts {
        let masked = tape.hadamard(e, mask)?;
        let sums = tape.row_sums(masked);
        acc = Some(match acc {
            None => sums,
            Some(a) => tape.add(a, sums)?,
        });
    }
    Ok(tape.scale(acc.expect("at least one part"), 0.5))
}

fn diagonal(tape: &mut Tape, e: TapeId, eye: TapeId) -> Result<TapeId> {
    let d = tape.hadamard(e, eye)?;
    Ok(tape.row_sums(d))
}

/// `sum_i eligible_i * [ln(self+pos+neg) - ln(self+pos)]_i`.
fn view_loss(
    tape: &mut Tape,
    s_self: TapeId,
    s_pos: Option<TapeId>,
    s_neg: TapeId,
    eligible: TapeId,
) -> Result<TapeId> {
    let num = match s_pos {
        Some(p) => tape.add(s_self, p)?,
        None => s_self,
    };
    let den = tape.add(num, s_neg)?;
    let ln_den = tape.ln(den);
    let ln_num = tape.ln(num);
    let per_node = tape.sub(ln_den, ln_num)?;
    let masked = tape.hadamard(per_node, eligible)?;
    Ok(tape.sum(masked))
}

/// 0/1 matrix over label pairs: same class (`same`) or explicitly different
/// classes; unlabeled entries never match. `zero_diag` clears the diagonal
/// for own-view candidate sets.
fn pair_mask(
    rows: &[Option<usize>],
    cols: &[Option<usize>],
    same: bool,
    zero_diag: bool,
) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        let Some(a) = a else { continue };
        for (j, b) in cols.iter().enumerate() {
            let Some(b) = b else { continue };
            if zero_diag && i == j {
                continue;
            }
            let hit = if same { a == b } else { a != b };
            if hit {
                m.set(i, j, 1.0);
            }
        }
    }
    m
}

fn off_diagonal_ones(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.set(i, j, 1.0);
            }
        }
    }
    m
}
