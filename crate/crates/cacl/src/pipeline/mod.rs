//! End-to-end training: configuration, model assembly, batch sampling,
//! community pool construction, the contrastive training loop, and
//! evaluation.

pub mod metrics;
pub mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_subgraph, gather_rho, pagerank, AugConfig, SynonymDict};
use crate::community::{
    cluster_to_k, louvain_k, pretrain_ca, CaConfig, CaEncoder, PretrainRow,
};
use crate::contrast::{
    anchor_pair_loss_t, total_loss_t, AnchorPair, ContrastiveConfig, LossMode, PoolEntry,
    SubgraphPool,
};
use crate::encoder::{Backbone, Classifier, HeteroEncoder, ProjectionHead};
use crate::graph::{
    extract_user_graph, induce_subgraph, HeteroGraph, Split, Subgraph, UserGraph,
};
use crate::numeric::{
    dump_params, restore_params, Adam, Matrix, ParamDump, ParamStore, SplitRng, Tape,
};
use crate::{CaclError, Result};

use metrics::{community_entropy, cosine_tracks, Confusion, CosineTracks, MetricsReport};

const TAG_INIT: u64 = 0x696e_6974;
const TAG_PRETRAIN: u64 = 0x7072_6574;
const TAG_BATCH: u64 = 0x6261_7463;
const TAG_AUG: u64 = 0x6175_67;
const TAG_DROP: u64 = 0x6472_6f70;

pub const PAGERANK_TOL: f64 = 1e-10;

// --- Configuration --------------------------------------------------------

/// Every knob of the training run. Deserializes from JSON with unspecified
/// fields at their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the contrastive term in the combined loss.
    pub lambda: f64,
    /// Softmax temperature on cosine similarities.
    pub temperature: f64,
    pub lr: f64,
    /// Backbone message-passing layers.
    pub layers: usize,
    pub dropout: f64,
    /// Users per sampled training subgraph.
    pub batch_users: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub seed: u64,
    pub backbone: Backbone,
    pub hidden: usize,
    /// Token embedding width.
    pub embed_dim: usize,
    /// Projection head output width.
    pub proj_dim: usize,
    pub proj_nonlinear: bool,
    /// Community encoder graph convolutions.
    pub ca_layers: usize,
    /// Weight of the modularity term in community pretraining.
    pub beta: f64,
    /// Sharpness of the embedding-distance kernel in pretraining.
    pub gamma: f64,
    pub neg_samples_per_edge: usize,
    /// Base feature masking probability.
    pub p_f: f64,
    /// Masking probability spread across feature salience ranks.
    pub p_tau: f64,
    /// Confidence threshold for predicted edges.
    pub p_e: f64,
    /// Synonym substitution probability per token.
    pub p_s: f64,
    /// Pagerank damping for the centrality used by augmentation.
    pub damping: f64,
    pub loss_mode: LossMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.9,
            temperature: 0.07,
            lr: 1e-4,
            layers: 2,
            dropout: 0.5,
            batch_users: 1000,
            epochs: 50,
            pretrain_epochs: 100,
            pretrain_lr: 0.01,
            seed: 0,
            backbone: Backbone::Rsage,
            hidden: 32,
            embed_dim: 16,
            proj_dim: 16,
            proj_nonlinear: false,
            ca_layers: 2,
            beta: 1.0,
            gamma: 0.5,
            neg_samples_per_edge: 1,
            p_f: 0.3,
            p_tau: 0.2,
            p_e: 0.95,
            p_s: 0.1,
            damping: 0.85,
            loss_mode: LossMode::CaclDynamic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.contrastive_config().validate()?;
        self.aug_config().validate()?;
        if self.lr <= 0.0 || self.pretrain_lr <= 0.0 {
            return Err(CaclError::InvalidArgument(
                "learning rates must be positive".into(),
            ));
        }
        if self.batch_users == 0 {
            return Err(CaclError::InvalidArgument(
                "batch_users must be positive".into(),
            ));
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.proj_dim == 0 {
            return Err(CaclError::InvalidArgument(
                "hidden, embed_dim, proj_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CaclError::InvalidArgument(format!(
                "dropout={} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            lambda: self.lambda,
            temperature: self.temperature,
        }
    }

    pub fn aug_config(&self) -> AugConfig {
        AugConfig {
            p_f: self.p_f,
            p_tau: self.p_tau,
            p_e: self.p_e,
            p_s: self.p_s,
            damping: self.damping,
        }
    }

    pub fn ca_config(&self) -> CaConfig {
        CaConfig {
            beta: self.beta,
            gamma: self.gamma,
            neg_samples_per_edge: self.neg_samples_per_edge,
        }
    }
}

// --- Model ----------------------------------------------------------------

/// All trainable parts over one shared parameter store. The community
/// encoder's input projection and the backbone's user projection are the
/// same parameter.
pub struct Model {
    pub store: ParamStore,
    pub ca: CaEncoder,
    pub encoder: HeteroEncoder,
    pub head: ProjectionHead,
    pub classifier: Classifier,
}

impl Model {
    /// Deterministic in `cfg.seed`: equal configs and datasets produce equal
    /// initial parameters.
    pub fn new(g: &HeteroGraph, cfg: &TrainConfig) -> Result<Model> {
        cfg.validate()?;
        let user_ty = g
            .user_type_id()
            .ok_or_else(|| CaclError::Graph("dataset has no user node type".into()))?;
        let in_dim = g.layouts()[user_ty].static_dim();
        let mut store = ParamStore::new();
        let mut rng = SplitRng::new(cfg.seed).fork(TAG_INIT);
        let ca = CaEncoder::new(&mut store, in_dim, cfg.hidden, cfg.ca_layers, &mut rng);
        let encoder = HeteroEncoder::new(
            &mut store,
            g,
            &ca,
            cfg.backbone,
            cfg.embed_dim,
            cfg.layers,
            cfg.dropout,
            &mut rng,
        )?;
        let head = ProjectionHead::new(
            &mut store,
            cfg.hidden,
            cfg.proj_dim,
            cfg.proj_dim,
            cfg.proj_nonlinear,
            &mut rng,
        );
        let classifier = Classifier::new(&mut store, cfg.hidden, &mut rng);
        Ok(Model {
            store,
            ca,
            encoder,
            head,
            classifier,
        })
    }
}

/// A trained (or pretrained) model on disk: the full configuration plus
/// every parameter by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: Vec<ParamDump>,
}

impl Checkpoint {
    pub fn capture(cfg: &TrainConfig, store: &ParamStore) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            params: dump_params(store),
        }
    }

    /// Writes the stored values into a store with the same parameter set.
    /// Both missing and unexpected parameters are errors.
    pub fn install(&self, store: &mut ParamStore) -> Result<()> {
        for d in &self.params {
            if store.find(&d.name).is_none() {
                return Err(CaclError::Checkpoint(format!(
                    "checkpoint has unexpected param {}",
                    d.name
                )));
            }
        }
        restore_params(store, &self.params)
    }

    /// Rebuilds the model for a dataset and installs the stored parameters.
    pub fn build_model(&self, g: &HeteroGraph) -> Result<Model> {
        let mut model = Model::new(g, &self.config)?;
        self.install(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self).map_err(|e| CaclError::Checkpoint(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let r = BufReader::new(File::open(path)?);
        serde_json::from_reader(r).map_err(|e| CaclError::Checkpoint(e.to_string()))
    }
}

// --- Batch sampling -------------------------------------------------------

/// Samples a connected-where-possible batch of exactly `n_users` users by
/// breadth-first expansion from a random labeled seed, restarting from a new
/// seed whenever the frontier empties. Neighbors enqueue in ascending order,
/// so the walk is deterministic given the seed sequence.
pub fn sample_batch(
    g: &HeteroGraph,
    ug: &UserGraph,
    n_users: usize,
    rng: &mut SplitRng,
) -> Result<Subgraph> {
    use rand::Rng;
    let n = ug.n();
    if n_users == 0 || n_users > n {
        return Err(CaclError::InvalidArgument(format!(
            "batch of {n_users} users from a graph with {n}"
        )));
    }
    let labeled: Vec<bool> = ug
        .user_ids
        .iter()
        .map(|&id| g.nodes()[id].label.is_some())
        .collect();
    let mut visited = vec![false; n];
    let mut chosen = Vec::with_capacity(n_users);
    let mut queue = std::collections::VecDeque::new();
    while chosen.len() < n_users {
        let unvisited_labeled: Vec<usize> =
            (0..n).filter(|&v| !visited[v] && labeled[v]).collect();
        let candidates = if unvisited_labeled.is_empty() {
            (0..n).filter(|&v| !visited[v]).collect()
        } else {
            unvisited_labeled
        };
        let seed = candidates[rng.gen_range(0..candidates.len())];
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            chosen.push(v);
            if chosen.len() == n_users {
                queue.clear();
                break;
            }
            for &w in &ug.adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let ids: Vec<usize> = chosen.iter().map(|&v| ug.user_ids[v]).collect();
    induce_subgraph(g, &ids)
}

// --- Pool construction ----------------------------------------------------

/// Partitions a batch into communities: the community count comes from
/// modularity maximization on the batch's user graph, the assignment from
/// similarity-constrained merging of community encoder embeddings computed
/// with `store`'s parameters. Mean embeddings start empty; refresh them
/// before matching.
pub fn build_pool(batch: &Subgraph, ca: &CaEncoder, store: &ParamStore) -> Result<SubgraphPool> {
    let user_ty = batch
        .graph
        .user_type_id()
        .ok_or_else(|| CaclError::Graph("batch has no user node type".into()))?;
    let batch_ug = extract_user_graph(&batch.graph)?;
    let k = louvain_k(&batch_ug);
    let h = ca.encode(store, &batch_ug, &batch.features[user_ty])?;
    let partition = cluster_to_k(&batch_ug, &h, k)?;
    let mut entries = Vec::with_capacity(partition.k);
    for members in partition.members() {
        let ids: Vec<usize> = members.iter().map(|&v| batch_ug.user_ids[v]).collect();
        entries.push(PoolEntry {
            sub: induce_subgraph(&batch.graph, &ids)?,
            mean_z: Vec::new(),
        });
    }
    Ok(SubgraphPool { entries })
}

/// Projected user embeddings per pool community under the current
/// parameters, dropout off.
pub fn pool_embeddings(pool: &SubgraphPool, model: &Model) -> Result<Vec<Matrix>> {
    pool.entries
        .iter()
        .map(|e| {
            let h = model
                .encoder
                .forward(&model.store, &e.sub, false, &mut SplitRng::new(0))?;
            model.head.project(&model.store, &h)
        })
        .collect()
}

pub fn refresh_pool_means(pool: &mut SubgraphPool, zs: &[Matrix]) {
    for (e, z) in pool.entries.iter_mut().zip(zs) {
        e.mean_z = z.mean_row();
    }
}

/// Labels visible to the label-dependent contrastive sets: training-split
/// labeled users only.
pub fn contrast_labels(sub: &Subgraph) -> Vec<Option<usize>> {
    sub.user_labels()
        .iter()
        .zip(sub.user_splits())
        .map(|(l, s)| match (l, s) {
            (Some(l), Some(Split::Train)) => Some(*l as usize),
            _ => None,
        })
        .collect()
}

// --- Training -------------------------------------------------------------

/// Builds a fresh model and pretrains its community encoder, exactly as the
/// start of [`train`] would. The returned model carries the pretrained
/// parameters; capture it as a checkpoint to reuse across runs.
pub fn pretrain(g: &HeteroGraph, cfg: &TrainConfig) -> Result<(Model, Vec<PretrainRow>)> {
    let mut model = Model::new(g, cfg)?;
    let full_ug = extract_user_graph(g)?;
    let user_ty = g.user_type_id().expect("checked by Model::new");
    let features = g.static_features(user_ty);
    let rows = pretrain_ca(
        &mut model.store,
        &model.ca,
        &full_ug,
        &features,
        &cfg.ca_config(),
        cfg.pretrain_epochs,
        cfg.pretrain_lr,
        &SplitRng::new(cfg.seed).fork(TAG_PRETRAIN),
    )?;
    Ok((model, rows))
}

/// One optimizer step's losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub l_contrast: f64,
    pub l_classify: f64,
    pub l_total: f64,
}

pub struct TrainOutcome {
    pub report: MetricsReport,
    pub checkpoint: Checkpoint,
    pub loss_log: Vec<LossRow>,
    pub pretrain_log: Vec<PretrainRow>,
}

/// Full training run: community encoder pretraining (skipped when `ca_init`
/// supplies parameters), then per epoch one pass of batch sampling, pool
/// construction, matching, augmentation, and a combined contrastive plus
/// classification step per anchor community. The best validation-MCC
/// parameters are restored before the final test evaluation.
pub fn train(
    g: &HeteroGraph,
    cfg: &TrainConfig,
    dict: &SynonymDict,
    ca_init: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let full_ug = extract_user_graph(g)?;

    let mut has_train = false;
    let mut has_val = false;
    for &id in &full_ug.user_ids {
        let node = &g.nodes()[id];
        if node.label.is_some() {
            match node.split {
                Some(Split::Train) => has_train = true,
                Some(Split::Val) => has_val = true,
                _ => {}
            }
        }
    }
    if !has_train {
        return Err(CaclError::InvalidArgument(
            "dataset has no labeled training users".into(),
        ));
    }
    if !has_val {
        return Err(CaclError::InvalidArgument(
            "dataset has no labeled validation users".into(),
        ));
    }

    let root = SplitRng::new(cfg.seed);
    let (mut model, pretrain_log) = match ca_init {
        Some(ck) => {
            let mut m = Model::new(g, cfg)?;
            ck.install(&mut m.store)?;
            (m, Vec::new())
        }
        None => pretrain(g, cfg)?,
    };

    // In static mode the pool and the augmenter read a copy of the
    // pretrained parameters; in dynamic mode they follow the live ones.
    let frozen: Option<ParamStore> =
        (cfg.loss_mode == LossMode::CaclStatic).then(|| model.store.clone());

    let rho_full = pagerank(&full_ug, cfg.damping, PAGERANK_TOL)?;
    let eval_sub = induce_subgraph(g, &full_ug.user_ids)?;
    let mut opt = Adam::new(&model.store, model.store.ids(), cfg.lr);
    let con_cfg = cfg.contrastive_config();
    let aug_cfg = cfg.aug_config();
    let batch_size = cfg.batch_users.min(full_ug.n());
    let n_batches = full_ug.n().div_ceil(batch_size);

    let mut report = MetricsReport::default();
    let mut loss_log = Vec::new();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut step = 0usize;
    let mut aug_counter = 0u64;
    let mut warned_single = false;

    for epoch in 0..cfg.epochs {
        let mut last_pool: Option<SubgraphPool> = None;
        for b in 0..n_batches {
            let mut brng = root.fork2(TAG_BATCH, (epoch * n_batches + b) as u64);
            let batch = sample_batch(g, &full_ug, batch_size, &mut brng)?;
            let rho_batch = gather_rho(&full_ug, &rho_full, &batch)?;
            let pool_store = frozen.as_ref().unwrap_or(&model.store);
            let mut pool = build_pool(&batch, &model.ca, pool_store)?;
            if pool.len() < 2 && !warned_single {
                eprintln!(
                    "warning: a batch produced a single community; its steps \
                     carry no contrastive signal"
                );
                warned_single = true;
            }

            for alpha in 0..pool.len() {
                // Means must reflect the parameters as of this step.
                let zs = pool_embeddings(&pool, &model)?;
                refresh_pool_means(&mut pool, &zs);

                let sub_a = pool.entries[alpha].sub.clone();
                let rho_of = |sub: &Subgraph| -> Vec<f64> {
                    (0..sub.user_count)
                        .map(|i| rho_batch[sub.parent_ids[i]])
                        .collect()
                };
                let mut tape = Tape::new();
                let mut drng = root.fork2(TAG_DROP, step as u64);
                let h_a = model
                    .encoder
                    .forward_t(&mut tape, &model.store, &sub_a, true, &mut drng)?;

                let l_con = if pool.len() >= 2 {
                    let beta = pool.match_subgraph(alpha)?;
                    let sub_b = pool.entries[beta].sub.clone();
                    let aug_store = frozen.as_ref().unwrap_or(&model.store);
                    let sub_at = augment_subgraph(
                        &sub_a,
                        &model.ca,
                        aug_store,
                        dict,
                        &aug_cfg,
                        &rho_of(&sub_a),
                        &root.fork2(TAG_AUG, aug_counter),
                    )?;
                    aug_counter += 1;
                    let sub_bt = augment_subgraph(
                        &sub_b,
                        &model.ca,
                        aug_store,
                        dict,
                        &aug_cfg,
                        &rho_of(&sub_b),
                        &root.fork2(TAG_AUG, aug_counter),
                    )?;
                    aug_counter += 1;

                    let h_at = model
                        .encoder
                        .forward_t(&mut tape, &model.store, &sub_at, true, &mut drng)?;
                    let h_b = model
                        .encoder
                        .forward_t(&mut tape, &model.store, &sub_b, true, &mut drng)?;
                    let h_bt = model
                        .encoder
                        .forward_t(&mut tape, &model.store, &sub_bt, true, &mut drng)?;
                    let pair = AnchorPair {
                        z_a: model.head.project_t(&mut tape, &model.store, h_a)?,
                        z_at: model.head.project_t(&mut tape, &model.store, h_at)?,
                        z_b: model.head.project_t(&mut tape, &model.store, h_b)?,
                        z_bt: model.head.project_t(&mut tape, &model.store, h_bt)?,
                        labels_own: &contrast_labels(&sub_a),
                        labels_matched: &contrast_labels(&sub_b),
                    };
                    anchor_pair_loss_t(&mut tape, &con_cfg, cfg.loss_mode, &pair)?
                } else {
                    tape.constant(Matrix::zeros(1, 1))
                };

                let class_labels: Vec<Option<usize>> = sub_a
                    .user_labels()
                    .iter()
                    .zip(sub_a.user_splits())
                    .map(|(l, s)| match (l, s) {
                        (Some(l), Some(Split::Train)) => Some(*l as usize),
                        _ => None,
                    })
                    .collect();
                let l_cls = if class_labels.iter().any(Option::is_some) {
                    let (_, loss) = model.classifier.classify_t(
                        &mut tape,
                        &model.store,
                        h_a,
                        Rc::new(class_labels),
                    )?;
                    loss
                } else {
                    tape.constant(Matrix::zeros(1, 1))
                };

                let l_total = total_loss_t(&mut tape, l_con, l_cls, &con_cfg)?;
                let row = LossRow {
                    step,
                    l_contrast: tape.scalar(l_con),
                    l_classify: tape.scalar(l_cls),
                    l_total: tape.scalar(l_total),
                };
                if !row.l_total.is_finite() {
                    return Err(CaclError::NonFinite {
                        context: "contrastive training".into(),
                        step,
                    });
                }
                model.store.zero_grads();
                tape.backward(l_total)?;
                tape.accumulate_param_grads(&mut model.store)?;
                opt.step(&mut model.store)?;
                loss_log.push(row);
                step += 1;
            }
            last_pool = Some(pool);
        }

        // Epoch diagnostics on the last batch's pool, means refreshed to the
        // post-update parameters.
        let mut pool = last_pool.expect("at least one batch per epoch");
        let zs = pool_embeddings(&pool, &model)?;
        refresh_pool_means(&mut pool, &zs);
        report.entropy.push(community_entropy(&pool)?);
        let tracks = if pool.len() >= 2 {
            cosine_tracks(&pool, &zs)?
        } else {
            CosineTracks::default()
        };
        report.cos_pos.push(tracks.pos);
        report.cos_neg.push(tracks.neg);
        report.cos_within.push(tracks.within);
        report.cos_between.push(tracks.between);

        let val = evaluate_on(&model, &eval_sub, Split::Val)?;
        if best.as_ref().is_none_or(|(mcc, _)| val.mcc > *mcc) {
            best = Some((val.mcc, model.store.clone()));
        }
    }

    if let Some((_, store)) = best {
        model.store = store;
    }
    let test = evaluate_on(&model, &eval_sub, Split::Test)?;
    report.accuracy = test.accuracy;
    report.f1 = test.f1;
    report.mcc = test.mcc;
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint::capture(cfg, &model.store),
        loss_log,
        pretrain_log,
    })
}

// --- Evaluation -----------------------------------------------------------

fn evaluate_on(model: &Model, eval_sub: &Subgraph, split: Split) -> Result<MetricsReport> {
    let h = model
        .encoder
        .forward(&model.store, eval_sub, false, &mut SplitRng::new(0))?;
    let logits = model.classifier.logits(&model.store, &h)?;
    let labels = eval_sub.user_labels();
    let splits = eval_sub.user_splits();
    let mut conf = Confusion::default();
    for i in 0..eval_sub.user_count {
        if splits[i] != Some(split) {
            continue;
        }
        if let Some(truth) = labels[i] {
            let pred = u8::from(logits.get(i, 1) > logits.get(i, 0));
            conf.record(pred, truth);
        }
    }
    if conf.total() == 0 {
        return Err(CaclError::InvalidArgument(format!(
            "no labeled users in the {split:?} split"
        )));
    }
    Ok(MetricsReport::from_confusion(&conf))
}

/// Classifies every user with dropout off and scores the labeled users of
/// one split.
pub fn evaluate(model: &Model, g: &HeteroGraph, split: Split) -> Result<MetricsReport> {
    let full_ug = extract_user_graph(g)?;
    let eval_sub = induce_subgraph(g, &full_ug.user_ids)?;
    evaluate_on(model, &eval_sub, split)
}

// --- Logs on disk ---------------------------------------------------------

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_loss_csv(rows: &[LossRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step,loss_contrast,loss_classify,loss_total")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.step, r.l_contrast, r.l_classify, r.l_total)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_epoch_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,entropy,cos_pos,cos_neg,cos_within,cos_between")?;
    for (e, h) in report.entropy.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e,
            h,
            opt_field(report.cos_pos[e]),
            opt_field(report.cos_neg[e]),
            opt_field(report.cos_within[e]),
            opt_field(report.cos_between[e]),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pretrain_csv(rows: &[PretrainRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,loss_link,loss_modularity,loss_total")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.epoch, r.l_g, r.l_m, r.l_ca)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::users_only;
    use crate::pipeline::synth::{generate_synth, SynthSpec};

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            blocks: 2,
            users_per_block: 12,
            p_in: 0.5,
            p_out: 0.05,
            bot_fraction: 0.25,
            numeric_dim: 4,
            noise: 0.5,
            texts_per_user: 1,
            tokens_per_text: 3,
            vocab_size: 12,
            class_homophily: 0.5,
            ..SynthSpec::default()
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            pretrain_epochs: 4,
            batch_users: 24,
            hidden: 8,
            embed_dim: 4,
            proj_dim: 4,
            layers: 1,
            ca_layers: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_json_fills_missing_fields_with_defaults() {
        let cfg: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"lambda":0.0,"loss_mode":"unsupervised"}"#).unwrap();
        assert_eq!(cfg.lambda, 0.0);
        assert_eq!(cfg.loss_mode, LossMode::Unsupervised);
        assert_eq!(cfg.epochs, TrainConfig::default().epochs);
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lambda: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_users: 0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn batch_covers_whole_graph_when_asked_for_all_users() {
        let g = users_only(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let ug = extract_user_graph(&g).unwrap();
        let mut rng = SplitRng::new(1);
        let batch = sample_batch(&g, &ug, 5, &mut rng).unwrap();
        assert_eq!(batch.user_count, 5);
        assert_eq!(batch.parent_ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn batch_has_exactly_the_requested_users() {
        let g = users_only(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let ug = extract_user_graph(&g).unwrap();
        for seed in 0..5 {
            let mut rng = SplitRng::new(seed);
            let batch = sample_batch(&g, &ug, 3, &mut rng).unwrap();
            assert_eq!(batch.user_count, 3);
        }
    }

    #[test]
    fn batch_restarts_across_components() {
        let g = users_only(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let ug = extract_user_graph(&g).unwrap();
        let mut rng = SplitRng::new(9);
        let batch = sample_batch(&g, &ug, 6, &mut rng).unwrap();
        assert_eq!(batch.user_count, 6);
    }

    #[test]
    fn batch_sampling_is_deterministic() {
        let g = users_only(8, &[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)]);
        let ug = extract_user_graph(&g).unwrap();
        let run = |seed: u64| {
            let mut rng = SplitRng::new(seed);
            sample_batch(&g, &ug, 4, &mut rng).unwrap().parent_ids
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn batch_size_bounds_are_enforced() {
        let g = users_only(3, &[(0, 1)]);
        let ug = extract_user_graph(&g).unwrap();
        let mut rng = SplitRng::new(0);
        assert!(sample_batch(&g, &ug, 0, &mut rng).is_err());
        assert!(sample_batch(&g, &ug, 4, &mut rng).is_err());
    }

    #[test]
    fn seeding_prefers_labeled_users() {
        // Only user 3, isolated, carries a label; a size-1 batch must start
        // there no matter the seed.
        let mut nodes: Vec<crate::graph::NodeRecord> = (0..5)
            .map(|_| crate::graph::NodeRecord {
                ty: 0,
                feature: crate::graph::RawFeature::default(),
                label: None,
                split: None,
            })
            .collect();
        nodes[3].label = Some(1);
        let g = HeteroGraph::new(
            vec![crate::graph::NodeTypeDef { name: "user".into() }],
            vec![crate::graph::EdgeTypeDef { name: "follow".into(), src: 0, dst: 0 }],
            nodes,
            vec![],
        )
        .unwrap();
        let ug = extract_user_graph(&g).unwrap();
        for seed in 0..10 {
            let mut rng = SplitRng::new(seed);
            let batch = sample_batch(&g, &ug, 1, &mut rng).unwrap();
            assert_eq!(batch.parent_ids, vec![3]);
        }
    }

    #[test]
    fn pool_partitions_the_batch() {
        let spec = tiny_spec();
        let g = generate_synth(&spec, &SplitRng::new(5)).unwrap();
        let ug = extract_user_graph(&g).unwrap();
        let cfg = tiny_config();
        let model = Model::new(&g, &cfg).unwrap();
        let mut rng = SplitRng::new(2);
        let batch = sample_batch(&g, &ug, spec.user_count(), &mut rng).unwrap();
        let pool = build_pool(&batch, &model.ca, &model.store).unwrap();
        assert!(!pool.is_empty());
        pool.validate_partition(batch.user_count).unwrap();
        let batch_ug = extract_user_graph(&batch.graph).unwrap();
        assert_eq!(pool.len(), louvain_k(&batch_ug));
    }

    #[test]
    fn training_runs_and_is_deterministic() {
        let g = generate_synth(&tiny_spec(), &SplitRng::new(11)).unwrap();
        let cfg = tiny_config();
        let dict = SynonymDict::empty();
        let run = || train(&g, &cfg, &dict, None).unwrap();
        let a = run();
        assert_eq!(a.report.entropy.len(), cfg.epochs);
        assert_eq!(a.report.cos_pos.len(), cfg.epochs);
        assert!(!a.loss_log.is_empty());
        assert_eq!(a.pretrain_log.len(), cfg.pretrain_epochs);
        for row in &a.loss_log {
            assert!(row.l_total.is_finite());
            assert!(row.l_contrast >= 0.0);
        }
        assert!((0.0..=1.0).contains(&a.report.accuracy));
        assert!((-1.0..=1.0).contains(&a.report.mcc));

        let b = run();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.loss_log, b.loss_log);
        for (pa, pb) in a.checkpoint.params.iter().zip(&b.checkpoint.params) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.data, pb.data);
        }
    }

    #[test]
    fn zero_contrast_weight_makes_temperature_irrelevant() {
        let g = generate_synth(&tiny_spec(), &SplitRng::new(13)).unwrap();
        let dict = SynonymDict::empty();
        let mut cfg = tiny_config();
        cfg.lambda = 0.0;
        cfg.epochs = 1;
        cfg.temperature = 0.07;
        let a = train(&g, &cfg, &dict, None).unwrap();
        cfg.temperature = 1.0;
        let b = train(&g, &cfg, &dict, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        for (pa, pb) in a.checkpoint.params.iter().zip(&b.checkpoint.params) {
            assert_eq!(pa.data, pb.data);
        }
    }

    #[test]
    fn first_step_is_identical_across_pool_update_modes() {
        let g = generate_synth(&tiny_spec(), &SplitRng::new(17)).unwrap();
        let dict = SynonymDict::empty();
        let mut cfg = tiny_config();
        cfg.epochs = 1;
        cfg.loss_mode = LossMode::CaclDynamic;
        let a = train(&g, &cfg, &dict, None).unwrap();
        cfg.loss_mode = LossMode::CaclStatic;
        let b = train(&g, &cfg, &dict, None).unwrap();
        assert_eq!(a.loss_log[0], b.loss_log[0]);
    }

    #[test]
    fn checkpoints_round_trip_through_disk() {
        let g = generate_synth(&tiny_spec(), &SplitRng::new(19)).unwrap();
        let cfg = tiny_config();
        let out = train(&g, &cfg, &SynonymDict::empty(), None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        out.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config, cfg);

        let model = loaded.build_model(&g).unwrap();
        let direct = evaluate(&model, &g, Split::Test).unwrap();
        assert_eq!(direct.accuracy, out.report.accuracy);
        assert_eq!(direct.f1, out.report.f1);
        assert_eq!(direct.mcc, out.report.mcc);
    }

    #[test]
    fn foreign_checkpoint_params_are_rejected() {
        let g = generate_synth(&tiny_spec(), &SplitRng::new(23)).unwrap();
        let cfg = tiny_config();
        let model = Model::new(&g, &cfg).unwrap();
        let mut ck = Checkpoint::capture(&cfg, &model.store);
        ck.params.push(ParamDump {
            name: "not.a.param".into(),
            rows: 1,
            cols: 1,
            data: vec![0.0],
        });
        let mut store = Model::new(&g, &cfg).unwrap().store;
        assert!(ck.install(&mut store).is_err());
    }

    #[test]
    fn single_community_batches_carry_no_contrastive_loss() {
        // A complete block: every split of a clique lowers modularity, so
        // the pool holds one community and the contrastive term is zero.
        let spec = SynthSpec {
            blocks: 1,
            users_per_block: 10,
            p_in: 1.0,
            p_out: 0.0,
            numeric_dim: 3,
            texts_per_user: 1,
            tokens_per_text: 2,
            vocab_size: 6,
            class_homophily: 0.0,
            ..SynthSpec::default()
        };
        let g = generate_synth(&spec, &SplitRng::new(29)).unwrap();
        let mut cfg = tiny_config();
        cfg.batch_users = 10;
        cfg.epochs = 1;
        let out = train(&g, &cfg, &SynonymDict::empty(), None).unwrap();
        assert!(!out.loss_log.is_empty());
        for row in &out.loss_log {
            assert_eq!(row.l_contrast, 0.0);
            assert!(row.l_classify > 0.0);
        }
    }

    #[test]
    fn evaluate_rejects_a_split_with_no_labels() {
        let g = users_only(4, &[(0, 1), (1, 2), (2, 3)]);
        let cfg = tiny_config();
        let model = Model::new(&g, &cfg).unwrap();
        assert!(matches!(
            evaluate(&model, &g, Split::Val),
            Err(CaclError::InvalidArgument(_))
        ));
    }

    #[test]
    fn csv_writers_produce_aligned_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            LossRow { step: 0, l_contrast: 1.5, l_classify: 0.7, l_total: 1.42 },
            LossRow { step: 1, l_contrast: 1.2, l_classify: 0.6, l_total: 1.14 },
        ];
        let path = dir.path().join("loss.csv");
        write_loss_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("step,loss_contrast,loss_classify,loss_total"));

        let report = MetricsReport {
            entropy: vec![0.9, 0.4],
            cos_pos: vec![Some(0.5), None],
            cos_neg: vec![Some(0.1), Some(0.2)],
            cos_within: vec![None, None],
            cos_between: vec![Some(0.3), Some(0.4)],
            ..MetricsReport::default()
        };
        let path = dir.path().join("epochs.csv");
        write_epoch_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0.9,0.5,0.1,,0.3");
        assert_eq!(lines[2], "1,0.4,,0.2,,0.4");
    }
}
