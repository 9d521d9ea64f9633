//! Classification metrics, community label entropy, and the cosine
//! similarity tracks used to monitor training.

use serde::{Deserialize, Serialize};

use crate::contrast::SubgraphPool;
use crate::numeric::{cosine, Matrix};
use crate::{CaclError, Result};

/// Binary confusion counts with bot (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, pred: u8, truth: u8) {
        match (pred, truth) {
            (1, 1) => self.tp += 1,
            (1, 0) => self.fp += 1,
            (0, 0) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Binary F1 with bot as positive; no positives anywhere and none
    /// predicted counts as perfect.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 1.0;
        }
        2.0 * self.tp as f64 / denom as f64
    }

    /// Matthews correlation; a zero row or column in the confusion matrix
    /// yields 0.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (
            self.tp as f64,
            self.fp as f64,
            self.tn as f64,
            self.fn_ as f64,
        );
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CosineTracks {
    /// Same-class pairs across matched communities.
    pub pos: Option<f64>,
    /// Different-class pairs within a community.
    pub neg: Option<f64>,
    /// All labeled pairs within a community.
    pub within: Option<f64>,
    /// All labeled pairs across matched communities.
    pub between: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Mean community label entropy per epoch.
    pub entropy: Vec<f64>,
    pub cos_pos: Vec<Option<f64>>,
    pub cos_neg: Vec<Option<f64>>,
    pub cos_within: Vec<Option<f64>>,
    pub cos_between: Vec<Option<f64>>,
}

impl MetricsReport {
    pub fn from_confusion(c: &Confusion) -> Self {
        MetricsReport {
            accuracy: c.accuracy(),
            f1: c.f1(),
            mcc: c.mcc(),
            ..MetricsReport::default()
        }
    }
}

/// Mean base-2 Shannon entropy of the label distribution per community,
/// skipping communities without labeled users.
pub fn community_entropy(pool: &SubgraphPool) -> Result<f64> {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for e in &pool.entries {
        let mut counts = [0usize; 2];
        for l in e.sub.user_labels().into_iter().flatten() {
            counts[l as usize] += 1;
        }
        let total = counts[0] + counts[1];
        if total == 0 {
            continue;
        }
        let mut h = 0.0;
        for c in counts {
            if c > 0 {
                let p = c as f64 / total as f64;
                h -= p * p.log2();
            }
        }
        sum += h;
        counted += 1;
    }
    if counted == 0 {
        return Err(CaclError::InvalidArgument(
            "no labeled users in any pool community".into(),
        ));
    }
    Ok(sum / counted as f64)
}

/// Average cosines over hard-positive, hard-negative, within-community, and
/// between-matched-community labeled pairs. `zs[c]` holds community `c`'s
/// user embeddings by local index. Each community contributes its
/// within-pairs once and its cross-pairs once as anchor of its own match; an
/// empty pair class is reported as `None`.
pub fn cosine_tracks(pool: &SubgraphPool, zs: &[Matrix]) -> Result<CosineTracks> {
    if pool.len() < 2 {
        return Err(CaclError::InvalidArgument(
            "cosine tracks need at least two communities".into(),
        ));
    }
    if zs.len() != pool.len() {
        return Err(CaclError::Shape(format!(
            "{} embedding matrices for {} communities",
            zs.len(),
            pool.len()
        )));
    }
    let labels: Vec<Vec<Option<u8>>> = pool.entries.iter().map(|e| e.sub.user_labels()).collect();
    for (c, e) in pool.entries.iter().enumerate() {
        if zs[c].rows() != e.sub.user_count {
            return Err(CaclError::Shape(format!(
                "community {c}: {} embedding rows for {} users",
                zs[c].rows(),
                e.sub.user_count
            )));
        }
    }

    let mut acc = [(0.0f64, 0usize); 4];
    let mut add = |slot: usize, v: f64| {
        acc[slot].0 += v;
        acc[slot].1 += 1;
    };
    for alpha in 0..pool.len() {
        for (i, li) in labels[alpha].iter().enumerate() {
            let Some(li) = li else { continue };
            for (j, lj) in labels[alpha].iter().enumerate().skip(i + 1) {
                let Some(lj) = lj else { continue };
                let c = cosine(zs[alpha].row(i), zs[alpha].row(j));
                add(2, c);
                if li != lj {
                    add(1, c);
                }
            }
        }
        let beta = pool.match_subgraph(alpha)?;
        for (i, li) in labels[alpha].iter().enumerate() {
            let Some(li) = li else { continue };
            for (j, lj) in labels[beta].iter().enumerate() {
                let Some(lj) = lj else { continue };
                let c = cosine(zs[alpha].row(i), zs[beta].row(j));
                add(3, c);
                if li == lj {
                    add(0, c);
                }
            }
        }
    }
    let take = |slot: (f64, usize)| {
        if slot.1 == 0 {
            None
        } else {
            Some(slot.0 / slot.1 as f64)
        }
    };
    Ok(CosineTracks {
        pos: take(acc[0]),
        neg: take(acc[1]),
        within: take(acc[2]),
        between: take(acc[3]),
    })
}
