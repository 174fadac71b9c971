//! `simulate`: batches of full grasp-to-sort episodes.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use tactsort::classifier::{self, Classifier, ClassifierModel, TrainConfig};
use tactsort::formats::ArtifactHeader;
use tactsort::fsm::{self, BatchSummary, EpisodeContext, EpisodeReport};

use crate::config::{self, World};
use crate::output::{Out, Stamped};
use crate::{plots, Common, WorldArgs};

pub struct SimulateArgs {
    pub world: WorldArgs,
    pub common: Common,
    pub controller_config: Option<PathBuf>,
    pub episodes: usize,
    pub classifier: Option<PathBuf>,
    pub plots: bool,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let world = World::load(&args.world)?;
    let controller = config::load_controller(args.controller_config.as_deref(), &world.gripper)?;

    // A supplied model enters the hash by content; an inline one is fully
    // determined by the other inputs.
    let supplied = match &args.classifier {
        Some(p) => {
            if !p.is_file() {
                bail!("model not found: {}", p.display());
            }
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Some((ClassifierModel::load(p)?, hex::encode(Sha256::digest(&bytes))))
        }
        None => None,
    };
    let mut parts = world.hash_parts();
    parts.push(("controller", controller.to_toml_string()));
    parts.push(("episodes", args.episodes.to_string()));
    parts.push((
        "classifier",
        supplied.as_ref().map_or_else(|| "inline".to_string(), |(_, h)| h.clone()),
    ));
    let hash = config::hash("simulate", &parts);
    let header = |kind: &str| ArtifactHeader::new(kind, &hash, world.seed);

    let out = Out::create(&args.common.out)?;
    let pool = config::pool(&args.common)?;

    let model = match supplied {
        Some((m, _)) => m,
        None => {
            eprintln!("training classifier on the scenario dataset");
            let (mut m, ds, _) = pool.install(|| {
                classifier::train_for_scenario(
                    &world.scenario,
                    world.gripper.fingertip_radius,
                    world.seed,
                    &TrainConfig::default(),
                )
            })?;
            m.metadata.config_hash = hash.clone();
            out.write_json("classifier.json", &m)?;
            eprintln!("trained on {} samples", ds.entries.len());
            m
        }
    };
    let clf = Classifier::from_model(model)?;

    let ctx = EpisodeContext {
        scenario: &world.scenario,
        model: &world.gripper,
        controller: &controller,
        classifier: &clf,
    };
    let results = fsm::run_batch(&ctx, args.episodes, world.seed, config::workers(&args.common))?;

    let reports: Vec<&EpisodeReport> = results.iter().map(|r| &r.report).collect();
    out.write_jsonl("episodes.jsonl", &header("episode-reports"), &reports)?;
    for r in &results {
        if let Some(rel) = &r.report.trace {
            out.write_jsonl(rel, &header("control-trace"), &r.traces)?;
        }
    }

    let summary = BatchSummary::from_reports(reports.iter().copied());
    let h = header("batch-summary");
    out.write_json("summary.json", &Stamped { header: &h, body: &summary })?;
    out.write_text("summary.txt", &h, &summary.to_text())?;
    out.write_text("confusion.txt", &header("confusion-matrix"), &summary.confusion.to_text())?;

    if args.plots {
        let traces: Vec<Vec<f64>> = results
            .iter()
            .flat_map(|r| &r.traces)
            .map(|t| t.records.iter().map(|rec| rec.theta_ab).collect())
            .collect();
        out.write_bytes("plots/theta.png", &plots::theta_png(&traces, controller.convergence_angle)?)?;
        out.write_bytes("plots/confusion.png", &plots::confusion_png(&summary.confusion)?)?;
    }

    print!("{}", summary.to_text());
    println!("config hash {hash}");
    println!("wrote {}", out.root().display());
    Ok(())
}
