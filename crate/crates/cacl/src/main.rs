//! Command-line entry points: synthetic dataset generation, community
//! encoder pretraining, contrastive training, evaluation, and the
//! loss-mode ablation table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cacl::augment::SynonymDict;
use cacl::contrast::LossMode;
use cacl::graph::{load_dataset, save_dataset, HeteroGraph, Split};
use cacl::numeric::SplitRng;
use cacl::pipeline::synth::{generate_synth, SynthSpec};
use cacl::pipeline::{
    evaluate, pretrain, train, write_epoch_csv, write_loss_csv, write_pretrain_csv, Checkpoint,
    TrainConfig,
};
use cacl::{CaclError, Result};

#[derive(Parser)]
#[command(
    name = "cacl",
    about = "Community-aware contrastive learning for social bot detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic benchmark dataset.
    GenerateSynth {
        /// Generator spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output dataset path (JSON lines).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain the community encoder and save its checkpoint.
    PretrainCa {
        #[arg(long)]
        data: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch pretraining loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train end to end and write metrics and a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from a pretrained checkpoint instead of pretraining.
        #[arg(long)]
        ca: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics JSON output path; per-epoch CSV lands next to it.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Optional per-step loss CSV.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        /// Synonym dictionary JSON for token substitution.
        #[arg(long)]
        synonyms: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// cacl_dynamic, cacl_static, supervised_all, or unsupervised.
        #[arg(long)]
        loss_mode: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// gcn or rsage.
        #[arg(long)]
        backbone: Option<String>,
    },
    /// Score a saved checkpoint on one split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train once per loss mode and tabulate test metrics.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated loss modes.
        #[arg(long, default_value = "cacl_dynamic,cacl_static,supervised_all,unsupervised")]
        modes: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        synonyms: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CaclError::InvalidArgument(format!("{what} {}: {e}", path.display())))
}

fn load_config(path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => read_json(p, "config"),
        None => Ok(TrainConfig::default()),
    }
}

fn load_synonyms(path: Option<&PathBuf>, g: &HeteroGraph) -> Result<SynonymDict> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            SynonymDict::from_json(&text, g.vocab_size())
        }
        None => Ok(SynonymDict::empty()),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CaclError::InvalidArgument(format!(
            "unknown split \"{other}\""
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenerateSynth { spec, out, seed } => {
            let spec: SynthSpec = match spec {
                Some(p) => read_json(&p, "spec")?,
                None => SynthSpec::default(),
            };
            let g = generate_synth(&spec, &SplitRng::new(seed))?;
            save_dataset(&g, &out)?;
            println!(
                "wrote {} nodes, {} edges to {}",
                g.nodes().len(),
                g.edges().len(),
                out.display()
            );
        }
        Cmd::PretrainCa {
            data,
            config,
            out,
            log,
            seed,
        } => {
            let g = load_dataset(&data)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (model, rows) = pretrain(&g, &cfg)?;
            if let Some(p) = log {
                write_pretrain_csv(&rows, &p)?;
            }
            Checkpoint::capture(&cfg, &model.store).save(&out)?;
            let last = rows.last().map(|r| r.l_ca).unwrap_or(f64::NAN);
            println!(
                "pretrained {} epochs (final loss {last:.6}), checkpoint at {}",
                rows.len(),
                out.display()
            );
        }
        Cmd::Train {
            data,
            config,
            ca,
            out,
            metrics,
            loss_log,
            synonyms,
            seed,
            epochs,
            loss_mode,
            lambda,
            backbone,
        } => {
            let g = load_dataset(&data)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(m) = loss_mode {
                cfg.loss_mode = m.parse()?;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if let Some(b) = backbone {
                cfg.backbone = b.parse()?;
            }
            let dict = load_synonyms(synonyms.as_ref(), &g)?;
            let ca_ckpt = ca.as_ref().map(|p| Checkpoint::load(p)).transpose()?;
            let outcome = train(&g, &cfg, &dict, ca_ckpt.as_ref())?;
            if let Some(p) = &out {
                outcome.checkpoint.save(p)?;
            }
            if let Some(p) = &metrics {
                let mut w = BufWriter::new(File::create(p)?);
                serde_json::to_writer_pretty(&mut w, &outcome.report)
                    .map_err(|e| CaclError::InvalidArgument(e.to_string()))?;
                writeln!(w)?;
                w.flush()?;
                write_epoch_csv(&outcome.report, &p.with_extension("epochs.csv"))?;
            }
            if let Some(p) = &loss_log {
                write_loss_csv(&outcome.loss_log, p)?;
            }
            println!(
                "mode {} test accuracy {:.4} f1 {:.4} mcc {:.4}",
                cfg.loss_mode,
                outcome.report.accuracy,
                outcome.report.f1,
                outcome.report.mcc
            );
        }
        Cmd::Evaluate { data, ckpt, split } => {
            let g = load_dataset(&data)?;
            let split = parse_split(&split)?;
            let ck = Checkpoint::load(&ckpt)?;
            let model = ck.build_model(&g)?;
            let report = evaluate(&model, &g, split)?;
            println!(
                "accuracy {:.4} f1 {:.4} mcc {:.4}",
                report.accuracy, report.f1, report.mcc
            );
        }
        Cmd::Ablate {
            data,
            config,
            modes,
            out,
            synonyms,
            seed,
        } => {
            let g = load_dataset(&data)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dict = load_synonyms(synonyms.as_ref(), &g)?;
            let modes: Vec<LossMode> = modes
                .split(',')
                .map(|m| m.trim().parse())
                .collect::<Result<_>>()?;
            let mut w = BufWriter::new(File::create(&out)?);
            writeln!(w, "mode,accuracy,f1,mcc")?;
            for mode in modes {
                let mut run_cfg = cfg.clone();
                run_cfg.loss_mode = mode;
                let outcome = train(&g, &run_cfg, &dict, None)?;
                writeln!(
                    w,
                    "{mode},{},{},{}",
                    outcome.report.accuracy, outcome.report.f1, outcome.report.mcc
                )?;
                println!(
                    "{mode}: accuracy {:.4} f1 {:.4} mcc {:.4}",
                    outcome.report.accuracy, outcome.report.f1, outcome.report.mcc
                );
            }
            w.flush()?;
            println!("ablation table at {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
