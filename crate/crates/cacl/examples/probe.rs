//! Scratch probe: criterion-style trend and uplift measurements across seeds.

use std::time::Instant;

use cacl::augment::SynonymDict;
use cacl::contrast::LossMode;
use cacl::encoder::Backbone;
use cacl::numeric::SplitRng;
use cacl::graph::Split;
use cacl::pipeline::synth::{generate_synth, SynthSpec};
use cacl::pipeline::{evaluate, train, Checkpoint, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(50);
    let seeds: Vec<u64> = args
        .get(2)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![0, 1]);
    let modes: Vec<String> = args
        .get(3)
        .map(|s| s.split(',').map(|x| x.to_string()).collect())
        .unwrap_or_else(|| vec!["dyn".into(), "lam0".into()]);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let homophily: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.5);
    let ctb: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.4);
    let cscale: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.8);
    let ca_layers: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(2);
    let noise: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let p_f: f64 = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let p_s: f64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let backbone: Backbone =
        args.get(12).map(|s| s.parse().unwrap()).unwrap_or(Backbone::Rsage);
    let batch_users: usize = args.get(13).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let dropout: f64 = args.get(14).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let bscale: f64 = args.get(15).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let tpt: usize = args.get(16).map(|s| s.parse().unwrap()).unwrap_or(8);

    for seed in &seeds {
        let spec = SynthSpec {
            class_homophily: homophily,
            class_token_bias: ctb,
            class_scale: cscale,
            block_scale: bscale,
            tokens_per_text: tpt,
            noise,
            ..SynthSpec::default()
        };
        let g = generate_synth(&spec, &SplitRng::new(1000 + seed)).unwrap();
        for mode in &modes {
            let mut cfg = TrainConfig {
                epochs,
                seed: *seed,
                lr,
                ca_layers,
                p_f,
                p_s,
                backbone,
                batch_users,
                dropout,
                ..TrainConfig::default()
            };
            match mode.as_str() {
                "dyn" => {}
                "lam0" => cfg.lambda = 0.0,
                "static" => cfg.loss_mode = LossMode::CaclStatic,
                other => panic!("unknown mode {other}"),
            }
            let t = Instant::now();
            let out = train(&g, &cfg, &SynonymDict::empty(), None).unwrap();
            let best = Checkpoint::load(&{
                let tmp = std::env::temp_dir().join("probe.ckpt");
                out.checkpoint.save(&tmp).unwrap();
                tmp
            })
            .unwrap();
            let model = best.build_model(&g).unwrap();
            let train_acc = evaluate(&model, &g, Split::Train).unwrap().accuracy;
            let r = &out.report;
            let ent0 = r.entropy.first().copied().unwrap_or(f64::NAN);
            let ent1 = r.entropy.last().copied().unwrap_or(f64::NAN);
            let track = |v: &Vec<Option<f64>>| {
                let f = v.first().copied().flatten().unwrap_or(f64::NAN);
                let l = v.last().copied().flatten().unwrap_or(f64::NAN);
                (f, l)
            };
            let (p0, p1) = track(&r.cos_pos);
            let (n0, n1) = track(&r.cos_neg);
            println!(
                "seed {seed} {mode:>6}: ent {ent0:.4}->{ent1:.4} pos {p0:.4}->{p1:.4} neg {n0:.4}->{n1:.4} acc {:.4} f1 {:.4} mcc {:.4} tracc {train_acc:.4} ({:.0?})",
                r.accuracy, r.f1, r.mcc, t.elapsed()
            );
        }
    }
}
