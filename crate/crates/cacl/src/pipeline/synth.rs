//! Synthetic bot-detection benchmark: a stochastic-block-model user graph
//! with planted communities, class-conditional Gaussian features, and
//! class/block-biased token streams.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::{
    EdgeRecord, EdgeTypeDef, HeteroGraph, NodeRecord, NodeTypeDef, RawFeature, Split, USER_TYPE,
};
use crate::numeric::SplitRng;
use crate::{CaclError, Result};

const TAG_LABELS: u64 = 0x6c61_6273;
const TAG_EDGES: u64 = 0x6564_6765;
const TAG_FEATURES: u64 = 0x6665_6174;
const TAG_TOKENS: u64 = 0x746f_6b73;
const TAG_SPLITS: u64 = 0x7370_6c74;

pub const TEXT_TYPE: &str = "text";
pub const FOLLOW_EDGE: &str = "follow";
pub const POST_EDGE: &str = "post";
pub const POSTED_BY_EDGE: &str = "posted_by";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Planted communities.
    pub blocks: usize,
    pub users_per_block: usize,
    /// Intra-block edge probability; must exceed `p_out`.
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of each block labeled bot, rounded to a count per block.
    pub bot_fraction: f64,
    pub numeric_dim: usize,
    /// Magnitude of the per-block feature mean offset.
    pub block_scale: f64,
    /// Magnitude of the bot-class feature offset.
    pub class_scale: f64,
    /// Feature noise standard deviation.
    pub noise: f64,
    pub texts_per_user: usize,
    pub tokens_per_text: usize,
    pub vocab_size: usize,
    /// Probability a token is drawn from the author's class region.
    pub class_token_bias: f64,
    /// Probability a token is drawn from the author's block region.
    pub block_token_bias: f64,
    /// Within-block boost for bot-bot edges: their probability becomes
    /// `p_in * (1 + class_homophily)` while bot-human pairs are thinned so
    /// the expected intra-block edge count stays `p_in * C(users_per_block, 2)`.
    /// 0 disables; bots then mix uniformly into their block.
    pub class_homophily: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            blocks: 4,
            users_per_block: 250,
            p_in: 0.05,
            p_out: 0.002,
            bot_fraction: 0.2,
            numeric_dim: 8,
            block_scale: 1.0,
            class_scale: 0.8,
            noise: 1.0,
            texts_per_user: 2,
            tokens_per_text: 8,
            vocab_size: 60,
            class_token_bias: 0.1,
            block_token_bias: 0.3,
            class_homophily: 3.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.users_per_block == 0 {
            return Err(CaclError::InvalidArgument(
                "blocks and users_per_block must be positive".into(),
            ));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("bot_fraction", self.bot_fraction),
            ("class_token_bias", self.class_token_bias),
            ("block_token_bias", self.block_token_bias),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CaclError::InvalidArgument(format!(
                    "{name}={p} outside [0,1]"
                )));
            }
        }
        if self.p_in <= self.p_out {
            return Err(CaclError::InvalidArgument(format!(
                "p_in={} must exceed p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.class_token_bias + self.block_token_bias > 1.0 {
            return Err(CaclError::InvalidArgument(
                "class_token_bias + block_token_bias exceeds 1".into(),
            ));
        }
        if self.numeric_dim == 0 {
            return Err(CaclError::InvalidArgument("numeric_dim must be positive".into()));
        }
        if !(self.noise >= 0.0) || self.block_scale < 0.0 || self.class_scale < 0.0 {
            return Err(CaclError::InvalidArgument(
                "noise, block_scale, class_scale must be nonnegative".into(),
            ));
        }
        if self.vocab_size < self.blocks + 2 {
            return Err(CaclError::InvalidArgument(format!(
                "vocab_size={} too small for {} block regions plus 2 class regions",
                self.vocab_size, self.blocks
            )));
        }
        if self.class_homophily < 0.0 {
            return Err(CaclError::InvalidArgument(
                "class_homophily must be nonnegative".into(),
            ));
        }
        let (p_bb, p_bh, _) = self.intra_block_probabilities();
        if p_bb > 1.0 {
            return Err(CaclError::InvalidArgument(format!(
                "bot-bot edge probability {p_bb} exceeds 1; lower class_homophily or p_in"
            )));
        }
        if p_bh < 0.0 {
            return Err(CaclError::InvalidArgument(format!(
                "bot-human edge probability {p_bh} is negative; lower class_homophily"
            )));
        }
        Ok(())
    }

    /// Intra-block edge probabilities per pair class: (bot-bot, bot-human,
    /// human-human). The bot-human thinning keeps the pair-weighted mean at
    /// `p_in` for the configured `bot_fraction`.
    pub fn intra_block_probabilities(&self) -> (f64, f64, f64) {
        let q = self.bot_fraction;
        let h = self.class_homophily;
        let thin = if q > 0.0 && q < 1.0 { q * h / (2.0 * (1.0 - q)) } else { 0.0 };
        (self.p_in * (1.0 + h), self.p_in * (1.0 - thin), self.p_in)
    }

    pub fn user_count(&self) -> usize {
        self.blocks * self.users_per_block
    }

    pub fn bots_per_block(&self) -> usize {
        (self.bot_fraction * self.users_per_block as f64).round() as usize
    }
}

/// Deterministic in the rng: equal seeds produce equal graphs.
pub fn generate_synth(spec: &SynthSpec, rng: &SplitRng) -> Result<HeteroGraph> {
    spec.validate()?;
    let n = spec.user_count();
    let upb = spec.users_per_block;

    // Labels: an exact count of bots per block, positions shuffled.
    let bots = spec.bots_per_block();
    let mut labels = vec![0u8; n];
    for b in 0..spec.blocks {
        let mut order: Vec<usize> = (0..upb).collect();
        order.shuffle(&mut rng.fork2(TAG_LABELS, b as u64));
        for &local in order.iter().take(bots) {
            labels[b * upb + local] = 1;
        }
    }

    // Splits: 70/10/20 over a global shuffle.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.fork(TAG_SPLITS));
    let n_train = ((n as f64) * 0.7).round() as usize;
    let n_val = (((n as f64) * 0.1).round() as usize).min(n - n_train.min(n));
    let mut splits = vec![Split::Test; n];
    for (rank, &u) in order.iter().enumerate() {
        splits[u] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    // Features: block mean offset + bot offset + Gaussian noise.
    let noise = Normal::new(0.0, spec.noise)
        .map_err(|e| CaclError::InvalidArgument(format!("feature noise: {e}")))?;
    let dim = spec.numeric_dim;
    let class_dir: Vec<f64> = (0..dim)
        .map(|d| if d % 2 == 0 { 1.0 } else { -1.0 } / (dim as f64).sqrt())
        .collect();
    let mut nodes = Vec::with_capacity(n * (1 + spec.texts_per_user));
    for u in 0..n {
        let block = u / upb;
        let mut frng = rng.fork2(TAG_FEATURES, u as u64);
        let mut x = vec![0.0; dim];
        for (d, v) in x.iter_mut().enumerate() {
            if d == block % dim {
                *v += spec.block_scale;
            }
            if labels[u] == 1 {
                *v += spec.class_scale * class_dir[d];
            }
            *v += noise.sample(&mut frng);
        }
        nodes.push(NodeRecord {
            ty: 0,
            feature: RawFeature {
                numeric: x,
                categorical: Vec::new(),
                tokens: Vec::new(),
            },
            label: Some(labels[u]),
            split: Some(splits[u]),
        });
    }

    // Follow edges: SBM over unordered pairs, emitted in both directions.
    // Within a block the pair probability depends on the label pair so bots
    // cluster among themselves at class_homophily > 0.
    let (p_bb, p_bh, p_hh) = spec.intra_block_probabilities();
    let mut edges = Vec::new();
    let mut erng = rng.fork(TAG_EDGES);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if i / upb == j / upb {
                match labels[i] + labels[j] {
                    2 => p_bb,
                    1 => p_bh,
                    _ => p_hh,
                }
            } else {
                spec.p_out
            };
            if erng.gen_range(0.0..1.0) < p {
                edges.push(EdgeRecord { src: i, dst: j, ty: 0 });
                edges.push(EdgeRecord { src: j, dst: i, ty: 0 });
            }
        }
    }

    // Texts: token regions are `blocks + 2` equal chunks, classes first.
    let region = spec.vocab_size / (spec.blocks + 2);
    for u in 0..n {
        let block = u / upb;
        for t in 0..spec.texts_per_user {
            let mut trng = rng.fork2(TAG_TOKENS, (u * spec.texts_per_user + t) as u64);
            let seq: Vec<usize> = (0..spec.tokens_per_text)
                .map(|_| {
                    let r: f64 = trng.gen_range(0.0..1.0);
                    if r < spec.class_token_bias {
                        let start = labels[u] as usize * region;
                        start + trng.gen_range(0..region)
                    } else if r < spec.class_token_bias + spec.block_token_bias {
                        let start = (2 + block) * region;
                        start + trng.gen_range(0..region)
                    } else {
                        trng.gen_range(0..spec.vocab_size)
                    }
                })
                .collect();
            let text_id = nodes.len();
            nodes.push(NodeRecord {
                ty: 1,
                feature: RawFeature {
                    numeric: Vec::new(),
                    categorical: Vec::new(),
                    tokens: vec![seq],
                },
                label: None,
                split: None,
            });
            edges.push(EdgeRecord { src: u, dst: text_id, ty: 1 });
            edges.push(EdgeRecord { src: text_id, dst: u, ty: 2 });
        }
    }

    HeteroGraph::new(
        vec![
            NodeTypeDef { name: USER_TYPE.into() },
            NodeTypeDef { name: TEXT_TYPE.into() },
        ],
        vec![
            EdgeTypeDef { name: FOLLOW_EDGE.into(), src: 0, dst: 0 },
            EdgeTypeDef { name: POST_EDGE.into(), src: 0, dst: 1 },
            EdgeTypeDef { name: POSTED_BY_EDGE.into(), src: 1, dst: 0 },
        ],
        nodes,
        edges,
    )
}
