//! Acceptance gate: one test per release criterion, each asserting a pinned
//! tolerance and printing a single summary line. Run with `--nocapture` to
//! see the lines for passing tests.

use std::rc::Rc;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use cacl::augment::{
    augment_subgraph, mask_probabilities, predict_links, sample_mask, substitute_synonyms,
    AugConfig, SynonymDict,
};
use cacl::community::{
    ca_loss_t, louvain_k, louvain_partition, modularity, CaConfig, CaEncoder, CommunityPartition,
};
use cacl::contrast::{anchor_pair_loss_t, total_loss_t, AnchorPair, ContrastiveConfig, LossMode};
use cacl::encoder::Classifier;
use cacl::graph::{
    induce_subgraph, EdgeRecord, EdgeTypeDef, HeteroGraph, NodeRecord, NodeTypeDef, RawFeature,
    Split, Subgraph, UserGraph,
};
use cacl::numeric::{grad_check, Matrix, ParamStore, SplitRng, Tape};
use cacl::pipeline::metrics::MetricsReport;
use cacl::pipeline::synth::{generate_synth, SynthSpec};
use cacl::pipeline::{train, write_epoch_csv, write_loss_csv, write_pretrain_csv, TrainConfig};

const GRAD_TOL: f64 = 1e-4;
const FD_EPS: f64 = 1e-5;
const EXACT_TOL: f64 = 1e-12;
const TOY_TOL: f64 = 1e-9;

// --- small-graph helpers --------------------------------------------------

fn user_graph(n: usize, edges: &[(usize, usize)]) -> UserGraph {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    let degrees: Vec<usize> = adj.iter().map(Vec::len).collect();
    let edge_count = degrees.iter().sum::<usize>() / 2;
    UserGraph { user_ids: (0..n).collect(), adj, degrees, edge_count }
}

/// Ring plus seeded random chords: connected, never edgeless.
fn random_graph(n: usize, chord_p: f64, seed: u64) -> UserGraph {
    let mut rng = SplitRng::new(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.gen_range(0.0..1.0) < chord_p {
                edges.push((i, j));
            }
        }
    }
    user_graph(n, &edges)
}

// --- criterion 1: gradient suite ------------------------------------------

/// Finite differences against the backward pass for every analytic loss:
/// the link, modularity, and combined community terms, the contrastive
/// kernel in both pool modes, and the full combined objective with the
/// classifier. All instances have at most 10 nodes.
#[test]
fn criterion_1_gradient_suite() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;

    // Community losses, each term separately.
    for (trial, &n) in [5usize, 8, 10].iter().enumerate() {
        let ug = random_graph(n, 0.3, 40 + trial as u64);
        let mut store = ParamStore::new();
        let mut rng = SplitRng::new(50 + trial as u64);
        store.register("h", Matrix::glorot(n, 3, &mut rng));
        let cfg = CaConfig::default();
        for target in 0..3usize {
            let run = |s: &ParamStore, want_grad: bool| {
                let mut tape = Tape::new();
                let h = tape.param(s, s.find("h").unwrap());
                // Fixed seed so both evaluations see the same negatives.
                let mut rng = SplitRng::new(99);
                let (l_g, l_m, l_ca) = ca_loss_t(&mut tape, &ug, h, &cfg, &mut rng).unwrap();
                let loss = [l_g, l_m, l_ca][target];
                let value = tape.scalar(loss);
                if want_grad {
                    tape.backward(loss).unwrap();
                    let mut grads = s.clone();
                    grads.zero_grads();
                    tape.accumulate_param_grads(&mut grads).unwrap();
                    (value, Some(grads))
                } else {
                    (value, None)
                }
            };
            let err = grad_check(&store, |s| run(s, false).0, |s| run(s, true).1.unwrap(), FD_EPS);
            assert!(err < GRAD_TOL, "community term {target} trial {trial}: rel err {err}");
            worst = worst.max(err);
        }
    }

    // Contrastive kernel over all four projected views.
    let labels_own = vec![Some(0), Some(1), None, Some(0)];
    let labels_matched = vec![Some(1), Some(0), None];
    for (trial, mode) in [LossMode::CaclDynamic, LossMode::CaclStatic].into_iter().enumerate() {
        let mut store = ParamStore::new();
        let mut rng = SplitRng::new(60 + trial as u64);
        store.register("z_a", Matrix::glorot(4, 6, &mut rng));
        store.register("z_at", Matrix::glorot(4, 6, &mut rng));
        store.register("z_b", Matrix::glorot(3, 6, &mut rng));
        store.register("z_bt", Matrix::glorot(3, 6, &mut rng));
        let cfg = ContrastiveConfig { lambda: 0.9, temperature: 0.5 };
        let run = |s: &ParamStore, want_grad: bool| {
            let mut tape = Tape::new();
            let pair = AnchorPair {
                z_a: tape.param(s, s.find("z_a").unwrap()),
                z_at: tape.param(s, s.find("z_at").unwrap()),
                z_b: tape.param(s, s.find("z_b").unwrap()),
                z_bt: tape.param(s, s.find("z_bt").unwrap()),
                labels_own: &labels_own,
                labels_matched: &labels_matched,
            };
            let loss = anchor_pair_loss_t(&mut tape, &cfg, mode, &pair).unwrap();
            let value = tape.scalar(loss);
            if want_grad {
                tape.backward(loss).unwrap();
                let mut grads = s.clone();
                grads.zero_grads();
                tape.accumulate_param_grads(&mut grads).unwrap();
                (value, Some(grads))
            } else {
                (value, None)
            }
        };
        let err = grad_check(&store, |s| run(s, false).0, |s| run(s, true).1.unwrap(), FD_EPS);
        assert!(err < GRAD_TOL, "contrastive {mode:?}: rel err {err}");
        worst = worst.max(err);
    }

    // Combined objective: contrastive term plus classification through the
    // classifier parameters, mixed by lambda.
    {
        let mut store = ParamStore::new();
        let mut rng = SplitRng::new(70);
        store.register("z_a", Matrix::glorot(4, 6, &mut rng));
        store.register("z_at", Matrix::glorot(4, 6, &mut rng));
        store.register("z_b", Matrix::glorot(3, 6, &mut rng));
        store.register("z_bt", Matrix::glorot(3, 6, &mut rng));
        store.register("h", Matrix::glorot(6, 4, &mut rng));
        let clf = Classifier::new(&mut store, 4, &mut rng);
        let cls_labels = Rc::new(vec![Some(0), Some(1), None, Some(1), Some(0), None]);
        let cfg = ContrastiveConfig { lambda: 0.9, temperature: 0.5 };
        let run = |s: &ParamStore, want_grad: bool| {
            let mut tape = Tape::new();
            let pair = AnchorPair {
                z_a: tape.param(s, s.find("z_a").unwrap()),
                z_at: tape.param(s, s.find("z_at").unwrap()),
                z_b: tape.param(s, s.find("z_b").unwrap()),
                z_bt: tape.param(s, s.find("z_bt").unwrap()),
                labels_own: &labels_own,
                labels_matched: &labels_matched,
            };
            let l_con = anchor_pair_loss_t(&mut tape, &cfg, LossMode::CaclDynamic, &pair).unwrap();
            let h = tape.param(s, s.find("h").unwrap());
            let (_, l_cls) = clf.classify_t(&mut tape, s, h, cls_labels.clone()).unwrap();
            let total = total_loss_t(&mut tape, l_con, l_cls, &cfg).unwrap();
            let value = tape.scalar(total);
            if want_grad {
                tape.backward(total).unwrap();
                let mut grads = s.clone();
                grads.zero_grads();
                tape.accumulate_param_grads(&mut grads).unwrap();
                (value, Some(grads))
            } else {
                (value, None)
            }
        };
        let err = grad_check(&store, |s| run(s, false).0, |s| run(s, true).1.unwrap(), FD_EPS);
        assert!(err < GRAD_TOL, "combined objective: rel err {err}");
        worst = worst.max(err);
    }

    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 60.0, "gradient suite took {secs:.1}s");
    println!("criterion 1 (gradient suite): PASS, max rel err {worst:.2e} in {secs:.1}s");
}

// --- criterion 2: community detection oracle ------------------------------

/// All set partitions of n items as restricted-growth strings, which are
/// exactly the canonical community assignments.
fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    loop {
        out.push(a.clone());
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let max_prefix = *a[..i].iter().max().unwrap();
            if a[i] <= max_prefix {
                a[i] += 1;
                for v in a[i + 1..].iter_mut() {
                    *v = 0;
                }
                break;
            }
            a[i] = 0;
            i -= 1;
        }
    }
}

/// Textbook modularity from the dense adjacency: ordered pairs, diagonal
/// included, normalized by 2m. Independent of the production implementation.
fn reference_modularity(g: &UserGraph, assign: &[usize]) -> f64 {
    let two_m = (2 * g.edge_count) as f64;
    let mut q = 0.0;
    for i in 0..g.n() {
        for j in 0..g.n() {
            if assign[i] != assign[j] {
                continue;
            }
            let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
            q += a - (g.degrees[i] * g.degrees[j]) as f64 / two_m;
        }
    }
    q / two_m
}

/// Exhaustive maximum-modularity search on structured graphs of at most 8
/// nodes, checked against both the modularity function (every partition)
/// and the greedy community detector (optimum value and community count).
#[test]
fn criterion_2_community_detection_oracle() {
    // Named families where the greedy detector provably lands on the
    // global optimum; Q values fixed by the exhaustive search.
    let graphs: Vec<(&str, UserGraph)> = vec![
        ("two_triangles_bridge", user_graph(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)])),
        ("two_triangles_apart", user_graph(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)])),
        ("path_4", user_graph(4, &[(0, 1), (1, 2), (2, 3)])),
        ("cycle_5", user_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])),
        ("star_6", user_graph(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)])),
        (
            "complete_5",
            user_graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]),
        ),
        (
            "barbell_8",
            user_graph(
                8,
                &[
                    (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
                    (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7),
                    (3, 4),
                ],
            ),
        ),
        ("kite_7", user_graph(7, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6)])),
        (
            "two_squares_bridge",
            user_graph(
                8,
                &[
                    (0, 1), (1, 2), (2, 3), (3, 0),
                    (4, 5), (5, 6), (6, 7), (7, 4),
                    (3, 4),
                ],
            ),
        ),
        ("clique_plus_pendant", user_graph(5, &[(0, 1), (0, 2), (1, 2), (0, 3), (3, 4)])),
    ];

    let mut max_impl_dev: f64 = 0.0;
    let mut max_dq: f64 = 0.0;
    for (name, g) in &graphs {
        let mut best_q = f64::NEG_INFINITY;
        let mut best_ks: Vec<usize> = Vec::new();
        for assign in all_partitions(g.n()) {
            let k = assign.iter().max().unwrap() + 1;
            let q_ref = reference_modularity(g, &assign);
            let part = CommunityPartition { assignment: assign, k };
            let q_impl = modularity(g, &part).unwrap();
            max_impl_dev = max_impl_dev.max((q_ref - q_impl).abs());
            assert!(
                (q_ref - q_impl).abs() < EXACT_TOL,
                "{name}: modularity deviates from the dense reference"
            );
            if q_ref > best_q + EXACT_TOL {
                best_q = q_ref;
                best_ks = vec![k];
            } else if (q_ref - best_q).abs() <= EXACT_TOL && !best_ks.contains(&k) {
                best_ks.push(k);
            }
        }
        let part = louvain_partition(g);
        let q_detected = modularity(g, &part).unwrap();
        let dq = (q_detected - best_q).abs();
        max_dq = max_dq.max(dq);
        assert!(dq < EXACT_TOL, "{name}: detected Q {q_detected} vs optimum {best_q}");
        assert_eq!(louvain_k(g), part.k, "{name}: community count disagrees with partition");
        assert!(
            best_ks.contains(&part.k),
            "{name}: detected {} communities, optima have {best_ks:?}",
            part.k
        );
    }

    // Hand-checked anchor: two triangles joined by one bridge edge split
    // into the two triangles, Q = 5/14.
    let bridge = &graphs[0].1;
    let part = louvain_partition(bridge);
    let q = modularity(bridge, &part).unwrap();
    assert!((q - 5.0 / 14.0).abs() < EXACT_TOL);
    assert!((q - 0.3571).abs() < 1e-4);
    assert_eq!(part.k, 2);

    println!(
        "criterion 2 (community detection oracle): PASS, {} graphs exhaustive, max |Q - reference| {max_impl_dev:.2e}, max |Q - optimum| {max_dq:.2e}",
        graphs.len()
    );
}

// --- criterion 3: modularity term vanishes for identical embeddings -------

/// With every embedding row equal, the distance kernel is exactly 1 and the
/// weighted modularity-matrix sum telescopes to zero on any graph.
#[test]
fn criterion_3_identical_embeddings_zero_modularity_loss() {
    let cfg = CaConfig::default();
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let n = 3 + (trial as usize % 8);
        let ug = random_graph(n, 0.4, 300 + trial);
        let mut rng = SplitRng::new(400 + trial);
        let row: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = Matrix::from_rows(&vec![row; n]).unwrap();
        let mut tape = Tape::new();
        let hid = tape.constant(h);
        let (_, l_m, _) = ca_loss_t(&mut tape, &ug, hid, &cfg, &mut rng).unwrap();
        let v = tape.scalar(l_m).abs();
        worst = worst.max(v);
        assert!(v <= EXACT_TOL, "trial {trial}: modularity term {v}");
    }
    println!(
        "criterion 3 (identical embeddings): PASS, 20 random graphs, max |modularity term| {worst:.2e}"
    );
}

// --- criterion 4: hand-computed loss values -------------------------------

/// Two symmetric anchors with one positive and one negative each evaluate
/// to -ln(2/3) at any temperature (the similarity factors cancel), and the
/// lambda mix of ln(3/2) and ln(2) reproduces its hand value.
#[test]
fn criterion_4_contrastive_hand_values() {
    let u = vec![3.0, 4.0];
    let rows = Matrix::from_rows(&[u.clone(), u]).unwrap();
    let labels = vec![Some(0), Some(1)];
    let expect = -(2.0f64 / 3.0).ln();
    for tau in [0.07, 0.5, 1.0] {
        let cfg = ContrastiveConfig { lambda: 0.9, temperature: tau };
        let mut tape = Tape::new();
        let pair = AnchorPair {
            z_a: tape.constant(rows.clone()),
            z_at: tape.constant(rows.clone()),
            z_b: tape.constant(rows.clone()),
            z_bt: tape.constant(rows.clone()),
            labels_own: &labels,
            labels_matched: &labels,
        };
        let l = anchor_pair_loss_t(&mut tape, &cfg, LossMode::CaclDynamic, &pair).unwrap();
        let got = tape.scalar(l);
        assert!((got - expect).abs() < TOY_TOL, "tau={tau}: {got} vs {expect}");
        assert!((got - 0.405465).abs() < 1e-6);
    }

    // 0.9 * ln(1.5) + 0.1 * ln(2) = 0.43423..., quoted to four digits.
    let cfg = ContrastiveConfig { lambda: 0.9, temperature: 0.07 };
    let mut tape = Tape::new();
    let l_con = tape.constant(Matrix::from_vec(1, 1, vec![1.5f64.ln()]).unwrap());
    let l_cls = tape.constant(Matrix::from_vec(1, 1, vec![2.0f64.ln()]).unwrap());
    let total = total_loss_t(&mut tape, l_con, l_cls, &cfg).unwrap();
    let got = tape.scalar(total);
    let expect_mix = 0.9 * 1.5f64.ln() + 0.1 * 2.0f64.ln();
    assert!((got - expect_mix).abs() < 1e-6);
    assert!((got - 0.4343).abs() < 1e-4);

    println!(
        "criterion 4 (hand values): PASS, anchor loss -ln(2/3) at tau in {{0.07, 0.5, 1.0}}, mix {got:.6}"
    );
}

// --- criterion 5: augmentation statistics ---------------------------------

fn text_heavy_graph(seqs_per_text: usize, tokens_per_seq: usize) -> HeteroGraph {
    let node_types = vec![
        NodeTypeDef { name: "user".into() },
        NodeTypeDef { name: "text".into() },
    ];
    let edge_types = vec![
        EdgeTypeDef { name: "follow".into(), src: 0, dst: 0 },
        EdgeTypeDef { name: "post".into(), src: 0, dst: 1 },
    ];
    let user = NodeRecord {
        ty: 0,
        feature: RawFeature { numeric: vec![0.5, 1.5], categorical: vec![], tokens: vec![] },
        label: Some(0),
        split: Some(Split::Train),
    };
    let text = |token: usize| NodeRecord {
        ty: 1,
        feature: RawFeature {
            numeric: vec![],
            categorical: vec![],
            tokens: vec![vec![token; tokens_per_seq]; seqs_per_text],
        },
        label: None,
        split: None,
    };
    // Two texts full of token 5 (has synonyms) and one of token 9 (none).
    let nodes = vec![user, text(5), text(5), text(9)];
    let edges = vec![
        EdgeRecord { src: 0, dst: 1, ty: 1 },
        EdgeRecord { src: 0, dst: 2, ty: 1 },
        EdgeRecord { src: 0, dst: 3, ty: 1 },
    ];
    HeteroGraph::new(node_types, edge_types, nodes, edges).unwrap()
}

fn two_user_subgraph() -> (Subgraph, CaEncoder, ParamStore) {
    let node_types = vec![
        NodeTypeDef { name: "user".into() },
        NodeTypeDef { name: "text".into() },
    ];
    let edge_types = vec![
        EdgeTypeDef { name: "follow".into(), src: 0, dst: 0 },
        EdgeTypeDef { name: "post".into(), src: 0, dst: 1 },
    ];
    let mk_user = |v: f64, label: u8| NodeRecord {
        ty: 0,
        feature: RawFeature { numeric: vec![v, v + 1.0], categorical: vec![], tokens: vec![] },
        label: Some(label),
        split: Some(Split::Train),
    };
    let mk_text = |tokens: Vec<Vec<usize>>| NodeRecord {
        ty: 1,
        feature: RawFeature { numeric: vec![], categorical: vec![], tokens },
        label: None,
        split: None,
    };
    let nodes = vec![
        mk_user(0.5, 0),
        mk_user(1.5, 1),
        mk_text(vec![vec![5, 6, 7]]),
        mk_text(vec![vec![5, 5], vec![8]]),
    ];
    let edges = vec![
        EdgeRecord { src: 0, dst: 1, ty: 0 },
        EdgeRecord { src: 1, dst: 0, ty: 0 },
        EdgeRecord { src: 0, dst: 2, ty: 1 },
        EdgeRecord { src: 1, dst: 3, ty: 1 },
    ];
    let g = HeteroGraph::new(node_types, edge_types, nodes, edges).unwrap();
    let sub = induce_subgraph(&g, &[0, 1]).unwrap();
    let mut store = ParamStore::new();
    let mut rng = SplitRng::new(3);
    let in_dim = sub.features[0].cols();
    let enc = CaEncoder::new(&mut store, in_dim, 4, 1, &mut rng);
    (sub, enc, store)
}

/// Empirical masking and substitution frequencies against their binomial
/// models over 1e5 draws, the closed edge-prediction gate, and the neutral
/// configuration acting as the identity.
#[test]
fn criterion_5_augmentation_statistics() {
    const DRAWS: usize = 100_000;
    let mut max_sigmas: f64 = 0.0;

    // Masking: component o is dropped with probability
    // min(p_f * (w_max - w_o) / (w_max - w_mean), p_tau).
    let weights = [0.9, 0.5, 0.1, 0.7];
    let (p_f, p_tau) = (0.3, 0.2);
    let probs = mask_probabilities(&weights, p_f, p_tau).unwrap();
    let w_max = 0.9;
    let w_mean = 0.55;
    for (o, &w) in weights.iter().enumerate() {
        let expect = (p_f * (w_max - w) / (w_max - w_mean)).min(p_tau);
        assert!((probs[o] - expect).abs() < EXACT_TOL);
    }
    let mut rng = SplitRng::new(505);
    let mut dropped = [0usize; 4];
    for _ in 0..DRAWS {
        let mask = sample_mask(&probs, &mut rng);
        for (o, &m) in mask.iter().enumerate() {
            if m == 0.0 {
                dropped[o] += 1;
            }
        }
    }
    for o in 0..4 {
        let freq = dropped[o] as f64 / DRAWS as f64;
        if probs[o] == 0.0 {
            assert_eq!(dropped[o], 0, "component {o} can never be dropped");
            continue;
        }
        let sigma = (probs[o] * (1.0 - probs[o]) / DRAWS as f64).sqrt();
        let dev = (freq - probs[o]).abs() / sigma;
        max_sigmas = max_sigmas.max(dev);
        assert!(dev <= 3.0, "mask component {o}: freq {freq} vs p {}", probs[o]);
    }

    // Substitution: 1e5 eligible tokens, each replaced with p_s = 0.1;
    // tokens without an entry never change.
    let g = text_heavy_graph(50, 1000);
    let sub = induce_subgraph(&g, &[0]).unwrap();
    let dict = SynonymDict::from_json(r#"{"5":[6,7]}"#, 16).unwrap();
    let p_s = 0.1;
    let out = substitute_synonyms(&sub, &dict, p_s, &SplitRng::new(606)).unwrap();
    let mut eligible = 0usize;
    let mut replaced = 0usize;
    for (node, orig) in out.graph.nodes().iter().zip(sub.graph.nodes()) {
        for (seq, orig_seq) in node.feature.tokens.iter().zip(&orig.feature.tokens) {
            for (&t, &t0) in seq.iter().zip(orig_seq) {
                match t0 {
                    5 => {
                        eligible += 1;
                        if t != 5 {
                            assert!(t == 6 || t == 7, "substitute {t} not in the entry");
                            replaced += 1;
                        }
                    }
                    _ => assert_eq!(t, t0, "token without an entry changed"),
                }
            }
        }
    }
    assert_eq!(eligible, DRAWS);
    let freq = replaced as f64 / eligible as f64;
    let sigma = (p_s * (1.0 - p_s) / eligible as f64).sqrt();
    let dev = (freq - p_s).abs() / sigma;
    max_sigmas = max_sigmas.max(dev);
    assert!(dev <= 3.0, "substitution freq {freq} vs p_s {p_s}");

    // A fully closed edge gate predicts nothing: sigmoid scores are < 1.
    let (sub2, enc, store) = two_user_subgraph();
    let predicted = predict_links(&sub2, &enc, &store, 1.0).unwrap();
    assert!(predicted.is_empty(), "p_e = 1.0 still predicted {predicted:?}");

    // Neutral knobs reproduce the input exactly, even with a live dictionary.
    let neutral = augment_subgraph(
        &sub2,
        &enc,
        &store,
        &dict,
        &AugConfig::neutral(),
        &[0.5, 0.5],
        &SplitRng::new(707),
    )
    .unwrap();
    assert_eq!(neutral, sub2, "neutral augmentation must be the identity");

    println!(
        "criterion 5 (augmentation statistics): PASS, worst deviation {max_sigmas:.2} sigma over {DRAWS} draws"
    );
}

// --- criteria 6 and 7: training trends and uplift -------------------------

/// Seeds for the trend and uplift runs; datasets are generated per seed.
const TREND_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Learning rate for the 50-epoch acceptance runs. Full-graph batches take
/// about 4 optimizer steps per epoch, so the default rate cannot move the
/// encoder measurably inside the epoch budget; this one converges.
const TREND_LR: f64 = 0.01;

fn trend_config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 50, lr: TREND_LR, seed, ..TrainConfig::default() }
}

struct TrendData {
    dynamic: Vec<MetricsReport>,
    zero_lambda: Vec<MetricsReport>,
    static_pool: Vec<MetricsReport>,
    dynamic_secs: f64,
}

static TREND: OnceLock<TrendData> = OnceLock::new();

/// Shared fixture: 5 paired seeds x {dynamic, lambda=0, static} on the
/// default synthetic dataset. Only the dynamic runs count toward the
/// trend-criterion time budget.
fn trend_data() -> &'static TrendData {
    TREND.get_or_init(|| {
        let dict = SynonymDict::empty();
        let dataset = |seed: u64| {
            generate_synth(&SynthSpec::default(), &SplitRng::new(1000 + seed)).unwrap()
        };
        let t0 = Instant::now();
        let dynamic: Vec<MetricsReport> = TREND_SEEDS
            .iter()
            .map(|&seed| train(&dataset(seed), &trend_config(seed), &dict, None).unwrap().report)
            .collect();
        let dynamic_secs = t0.elapsed().as_secs_f64();
        let zero_lambda: Vec<MetricsReport> = TREND_SEEDS
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig { lambda: 0.0, ..trend_config(seed) };
                train(&dataset(seed), &cfg, &dict, None).unwrap().report
            })
            .collect();
        let static_pool: Vec<MetricsReport> = TREND_SEEDS
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig { loss_mode: LossMode::CaclStatic, ..trend_config(seed) };
                train(&dataset(seed), &cfg, &dict, None).unwrap().report
            })
            .collect();
        TrendData { dynamic, zero_lambda, static_pool, dynamic_secs }
    })
}

fn ends(series: &[Option<f64>]) -> (f64, f64) {
    let first = series.first().copied().flatten().expect("empty cosine track");
    let last = series.last().copied().flatten().expect("empty cosine track");
    (first, last)
}

/// Over 50 epochs of the dynamic mode, community label entropy falls and
/// the mined hard-positive cosine rises while the hard-negative cosine
/// falls, in at least 4 of 5 seeds, within the time budget.
#[test]
fn criterion_6_trend_reproduction() {
    let data = trend_data();
    let mut joint = 0usize;
    let mut lines = Vec::new();
    for (i, r) in data.dynamic.iter().enumerate() {
        let e0 = *r.entropy.first().expect("no entropy track");
        let e1 = *r.entropy.last().unwrap();
        let (p0, p1) = ends(&r.cos_pos);
        let (n0, n1) = ends(&r.cos_neg);
        let ok = e1 < e0 && p1 > p0 && n1 < n0;
        joint += ok as usize;
        lines.push(format!(
            "seed {i}: entropy {e0:.3}->{e1:.3} pos {p0:.3}->{p1:.3} neg {n0:.3}->{n1:.3} {}",
            if ok { "ok" } else { "MISS" }
        ));
    }
    let secs = data.dynamic_secs;
    assert!(
        joint >= 4,
        "trends hold in {joint}/5 seeds:\n{}",
        lines.join("\n")
    );
    assert!(secs < 1200.0, "dynamic runs took {secs:.0}s");
    println!(
        "criterion 6 (trend reproduction): PASS, {joint}/5 seeds, dynamic runs {secs:.0}s"
    );
}

/// Paired over 5 seeds: the dynamic mode beats the lambda=0 baseline by at
/// least 2 accuracy points on average, and does not trail the static-pool
/// variant on mean MCC.
#[test]
fn criterion_7_contrastive_uplift() {
    let data = trend_data();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let acc_dyn = mean(&data.dynamic.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let acc_zero = mean(&data.zero_lambda.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let mcc_dyn = mean(&data.dynamic.iter().map(|r| r.mcc).collect::<Vec<_>>());
    let mcc_static = mean(&data.static_pool.iter().map(|r| r.mcc).collect::<Vec<_>>());
    let uplift = acc_dyn - acc_zero;
    assert!(
        uplift >= 0.02 - 1e-9,
        "accuracy uplift {uplift:.4} (dynamic {acc_dyn:.4} vs lambda=0 {acc_zero:.4})"
    );
    assert!(
        mcc_dyn >= mcc_static - 1e-12,
        "mean MCC {mcc_dyn:.4} trails the static pool {mcc_static:.4}"
    );
    println!(
        "criterion 7 (contrastive uplift): PASS, accuracy +{:.1} points ({acc_dyn:.4} vs {acc_zero:.4}), MCC {mcc_dyn:.4} vs static {mcc_static:.4}",
        100.0 * uplift
    );
}

// --- criterion 8: determinism ---------------------------------------------

/// Two runs with the same configuration and seed produce byte-identical
/// metrics files.
#[test]
fn criterion_8_determinism() {
    let spec = SynthSpec {
        blocks: 2,
        users_per_block: 30,
        p_in: 0.2,
        p_out: 0.02,
        numeric_dim: 4,
        class_homophily: 1.0,
        texts_per_user: 1,
        tokens_per_text: 3,
        vocab_size: 12,
        ..SynthSpec::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        pretrain_epochs: 5,
        batch_users: 60,
        hidden: 8,
        embed_dim: 4,
        proj_dim: 4,
        lr: 0.01,
        seed: 9,
        ..TrainConfig::default()
    };
    let dict = SynonymDict::from_json(r#"{"1":[2,3]}"#, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let g = generate_synth(&spec, &SplitRng::new(77)).unwrap();
        let out = train(&g, &cfg, &dict, None).unwrap();
        let epoch = dir.path().join(format!("epoch_{tag}.csv"));
        let loss = dir.path().join(format!("loss_{tag}.csv"));
        let pre = dir.path().join(format!("pretrain_{tag}.csv"));
        write_epoch_csv(&out.report, &epoch).unwrap();
        write_loss_csv(&out.loss_log, &loss).unwrap();
        write_pretrain_csv(&out.pretrain_log, &pre).unwrap();
        let report_json = serde_json::to_vec_pretty(&out.report).unwrap();
        (
            std::fs::read(epoch).unwrap(),
            std::fs::read(loss).unwrap(),
            std::fs::read(pre).unwrap(),
            report_json,
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.0, b.0, "per-epoch metrics differ");
    assert_eq!(a.1, b.1, "loss logs differ");
    assert_eq!(a.2, b.2, "pretraining logs differ");
    assert_eq!(a.3, b.3, "metrics reports differ");
    println!(
        "criterion 8 (determinism): PASS, {} + {} + {} csv bytes identical across runs",
        a.0.len(),
        a.1.len(),
        a.2.len()
    );
}
