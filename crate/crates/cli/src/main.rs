//! `fas`: command-line front end for the face anti-spoofing toolkit.
//!
//! Exit codes: 0 on success, 2 on validation failures (bad arguments,
//! malformed manifests or configs), 3 on runtime failures (I/O, segmenter
//! transport, training divergence).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use fas_core::annotator::{export_preview, read_map, write_map, LabelingPolicy};
use fas_core::decision::{self, DecisionConfig};
use fas_core::error::{Error, Result};
use fas_core::evalkit::{loo_to_csv, reports_to_csv};
use fas_core::mcrea::{mcrea_augment, AugmentConfig, Batch, BatchItem};
use fas_core::network::load_checkpoint;
use fas_core::pipeline::{
    annotate_corpus, attach_pseudo_depth, evaluate_with_model, ingest, load_labels, run_training,
    synth_corpus, MixSpec, Protocol, ProtocolOutcome, TrainJob,
};
use fas_core::sample::TruthLabel;
use fas_core::segmenter::mock::MockSegmenter;
use fas_core::segmenter::service::ServiceSegmenter;
use fas_core::segmenter::SegmenterBackend;
use fas_core::ThreeChannelMap;

#[derive(Parser)]
#[command(name = "fas", version, about = "Face anti-spoofing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a corpus and cache three-channel label maps as FGA1 files.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        /// Labeling policy JSON; defaults apply when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// `mock` or `service` (service reads FAS_SEGMENTER_URL).
        #[arg(long, default_value = "mock")]
        segmenter: String,
    },
    /// Apply region exchanges to a corpus and write the result for review.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        rho: u32,
        /// `overlay`, `integrated_attack` or `clipping_exchange`.
        #[arg(long, default_value = "overlay")]
        scheme: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "augmented")]
        out: PathBuf,
        /// Directory of cached FGA1 label maps; without it, labels start as
        /// all-background so only the image side of the exchange is visible.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train from a job config JSON (manifest, label cache, output dir).
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a corpus with a checkpoint and run an evaluation protocol.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// `intra`, `cross` or `loo`.
        #[arg(long)]
        protocol: String,
        /// Source-corpus manifest whose dev split fixes the cross threshold.
        #[arg(long)]
        dev_manifest: Option<PathBuf>,
        /// Write per-sample score records as JSON.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Write the report JSON here as well as to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fuse a predicted map into an attack/bona-fide verdict.
    Decide {
        /// Predicted three-channel map (FGA1).
        #[arg(long)]
        pred: PathBuf,
        /// Landmark JSON for the same frame.
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Comma-separated key regions (default eyes,nose,mouth).
        #[arg(long)]
        key_regions: Option<String>,
    },
    /// Render an FGA1 map to a PNG for inspection.
    Preview {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with landmarks, depth and a manifest.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth_corpus")]
        out: PathBuf,
        /// Class weights as `bona,print,replay,patch` (default equal).
        #[arg(long)]
        mix: Option<String>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_validation() { 2 } else { 3 });
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn pick_backend(name: &str) -> Result<Box<dyn SegmenterBackend>> {
    match name {
        "mock" => Ok(Box::new(MockSegmenter::default())),
        "service" => {
            let url = std::env::var("FAS_SEGMENTER_URL").map_err(|_| {
                Error::invalid("--segmenter service requires FAS_SEGMENTER_URL to be set")
            })?;
            if url.is_empty() {
                return Err(Error::invalid("FAS_SEGMENTER_URL is empty"));
            }
            Ok(Box::new(ServiceSegmenter::new(&url)))
        }
        other => Err(Error::invalid(format!("unknown segmenter backend {other}"))),
    }
}

fn parse_mix(spec: &str) -> Result<MixSpec> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::invalid(
            "--mix needs four comma-separated weights: bona,print,replay,patch",
        ));
    }
    let mut w = [0.0f64; 4];
    for (slot, part) in w.iter_mut().zip(parts.iter()) {
        *slot = part
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("bad mix weight {part}")))?;
    }
    Ok(MixSpec { bona: w[0], print: w[1], replay: w[2], patch: w[3] })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Annotate { manifest, policy, out, segmenter } => {
            let policy: LabelingPolicy = match policy {
                Some(path) => read_json(&path)?,
                None => LabelingPolicy::default(),
            };
            policy.check()?;
            let backend = pick_backend(&segmenter)?;
            let mut samples = ingest(&manifest)?;
            for sample in &mut samples {
                attach_pseudo_depth(sample)?;
            }
            let paths = annotate_corpus(&samples, &policy, backend.as_ref(), &out)?;
            println!("wrote {} label maps to {}", paths.len(), out.display());
            Ok(())
        }
        Command::Augment { manifest, gamma, rho, scheme, seed, out, labels } => {
            let cfg = AugmentConfig {
                gamma,
                rho,
                scheme: scheme.parse()?,
                seed,
                ..AugmentConfig::default()
            };
            cfg.check()?;
            let samples = ingest(&manifest)?;
            if samples.is_empty() {
                return Err(Error::invalid("nothing to augment: the manifest is empty"));
            }
            let label_maps = match &labels {
                Some(dir) => Some(load_labels(dir, &samples)?),
                None => None,
            };
            let items: Vec<BatchItem> = samples
                .iter()
                .map(|s| {
                    let label = match &label_maps {
                        Some(maps) => maps[&s.id].clone(),
                        None => {
                            let (h, w) = s.frame_dims();
                            let mut map = ThreeChannelMap::zeros(h, w);
                            map.background.fill(1.0);
                            map
                        }
                    };
                    BatchItem {
                        image: s.image.clone(),
                        label,
                        landmarks: s.landmarks.clone(),
                    }
                })
                .collect();
            let (augmented, draw_log) = mcrea_augment(&Batch { items }, &cfg)?;

            fs::create_dir_all(out.join("images"))?;
            fs::create_dir_all(out.join("labels"))?;
            for (sample, item) in samples.iter().zip(augmented.items.iter()) {
                fas_core::pipeline::io::write_image(
                    &out.join(format!("images/{}.png", sample.id)),
                    &item.image,
                )?;
                write_map(&item.label, &out.join(format!("labels/{}.fga1", sample.id)))?;
            }
            let log_json =
                serde_json::to_string_pretty(&draw_log).expect("draw log serializes");
            fs::write(out.join("draw_log.json"), log_json)?;
            let applied = draw_log.records.iter().filter(|r| r.applied).count();
            println!(
                "augmented {} samples ({} exchanges applied), wrote {}",
                augmented.items.len(),
                applied,
                out.display()
            );
            Ok(())
        }
        Command::Train { config } => {
            let job: TrainJob = read_json(&config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let (checkpoint_dir, log) = run_training(&job, base)?;
            if let Some(last) = log.epochs.last() {
                println!(
                    "trained {} epochs, final loss {:.6}{}",
                    log.epochs.len(),
                    last.loss,
                    last.dev_acer
                        .map(|a| format!(", dev ACER {a:.4}"))
                        .unwrap_or_default()
                );
            }
            println!("checkpoint: {}", checkpoint_dir.display());
            Ok(())
        }
        Command::Eval { checkpoint, manifest, protocol, dev_manifest, scores, report, csv } => {
            let protocol: Protocol = protocol.parse()?;
            let (model, _loss, _seed) = load_checkpoint(&checkpoint)?;
            let samples = ingest(&manifest)?;
            let source = match (&protocol, dev_manifest) {
                (Protocol::Cross, Some(path)) => Some(ingest(&path)?),
                (Protocol::Cross, None) => {
                    return Err(Error::invalid(
                        "cross protocol requires --dev-manifest for the source corpus",
                    ))
                }
                (_, Some(_)) => {
                    return Err(Error::invalid("--dev-manifest only applies to --protocol cross"))
                }
                (_, None) => None,
            };
            let (records, outcome) =
                evaluate_with_model(&model, &samples, protocol, source.as_deref())?;
            if let Some(path) = scores {
                let json =
                    serde_json::to_string_pretty(&records).expect("score records serialize");
                fs::write(path, json)?;
            }
            let json = outcome.to_json();
            if let Some(path) = report {
                fs::write(path, &json)?;
            }
            if let Some(path) = csv {
                let text = match &outcome {
                    ProtocolOutcome::Single(r) => reports_to_csv(std::slice::from_ref(r)),
                    ProtocolOutcome::Loo(o) => loo_to_csv(o),
                };
                fs::write(path, text)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Decide { pred, landmarks, epsilon, key_regions } => {
            let map = read_map(&pred)?;
            let lm = fas_core::pipeline::io::read_landmarks(&landmarks)?;
            let mut cfg = DecisionConfig::default();
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(spec) = key_regions {
                cfg.key_regions = spec.split(',').map(|s| s.trim().to_string()).collect();
            }
            cfg.check()?;
            let (h, w) = map.dims();
            let areas = decision::compute_areas(&lm, h, w, &cfg)?;
            let attack = decision::attack_intensity(&map, &areas)?;
            let living = decision::living_intensity(&map, &areas)?;
            let verdict = decision::predict(&map, &areas, &cfg)?;
            let out = serde_json::json!({
                "attack_intensity": attack,
                "living_intensity": living,
                "score": attack - living,
                "epsilon": cfg.epsilon,
                "verdict": match verdict {
                    TruthLabel::Attack => "attack",
                    TruthLabel::BonaFide => "bona_fide",
                },
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("verdict serializes"));
            Ok(())
        }
        Command::Preview { map, out } => {
            let map = read_map(&map)?;
            export_preview(&map, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Synth { count, seed, out, mix } => {
            let mix = match mix {
                Some(spec) => parse_mix(&spec)?,
                None => MixSpec::default(),
            };
            let manifest = synth_corpus(&out, count, &mix, seed)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}
