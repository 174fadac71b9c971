//! `dataset`, `train` and `eval`: the offline classification workflow.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use tactsort::classifier::dataset::{generate as generate_samples, stratified_split, GenerationStats};
use tactsort::classifier::{self, features, Classifier, ClassifierModel, Dataset, DatasetEntry, Split, TrainConfig};
use tactsort::formats::{
    read_frame, record_to_sample, sample_to_record, write_frame, ArtifactHeader, DatasetManifest, ManifestEntry,
    SampleSidecar,
};
use tactsort::simworld::catalog::NUM_CLASSES;

use crate::config::{self, World};
use crate::output::{Out, Stamped};
use crate::{plots, Common, SplitArg, WorldArgs};

struct Stored {
    file: String,
    sidecar: String,
    class_id: u8,
    press: usize,
    frame: usize,
    pca_center: [f64; 2],
    pca_angle: f64,
    shape: [usize; 3],
}

pub fn generate(args: &WorldArgs, common: &Common) -> Result<()> {
    let world = World::load(args)?;
    let hash = config::hash("dataset", &world.hash_parts());
    let header = ArtifactHeader::new("dataset-sample", &hash, world.seed);
    let out = Out::create(&common.out)?;
    let pool = config::pool(common)?;
    let params = &world.scenario.dataset;
    let radius = world.gripper.fingertip_radius;

    let mut stored: Vec<Stored> = Vec::new();
    let stats: GenerationStats = pool.install(|| {
        generate_samples(params, &world.scenario.classes(), radius, world.seed, |g| {
            let i = stored.len();
            let file = format!("samples/sample-{i:05}.tfrm");
            let path = out.path(&file).map_err(|e| tactsort::Error::InvalidParameter(e.to_string()))?;
            write_frame(&path, &sample_to_record(&g.sample.tensor, radius))?;
            stored.push(Stored {
                sidecar: format!("samples/sample-{i:05}.json"),
                file,
                class_id: g.sample.class_id,
                press: g.press,
                frame: g.frame,
                pca_center: g.sample.pca_center,
                pca_angle: g.sample.pca_angle,
                shape: g.sample.tensor.shape(),
            });
            Ok(())
        })
    })?;
    if stored.is_empty() {
        bail!("the scenario produced no samples");
    }

    let labels: Vec<u8> = stored.iter().map(|s| s.class_id).collect();
    let splits = stratified_split(&labels, params.test_fraction, world.seed);
    let mut per_class = vec![0; NUM_CLASSES];
    let mut test = vec![0; NUM_CLASSES];
    let mut samples = Vec::with_capacity(stored.len());
    for (s, split) in stored.iter().zip(&splits) {
        per_class[s.class_id as usize - 1] += 1;
        if *split == Split::Test {
            test[s.class_id as usize - 1] += 1;
        }
        let sidecar = SampleSidecar {
            header: header.clone(),
            // Relative to the sidecar, which sits next to the container.
            tensor_file: Path::new(&s.file).file_name().unwrap().to_string_lossy().into_owned(),
            class_id: s.class_id,
            split: *split,
            press: s.press,
            frame: s.frame,
            pca_center: s.pca_center,
            pca_angle: s.pca_angle,
            tensor_shape: s.shape,
            channel_order: SampleSidecar::channel_order(),
        };
        out.write_json(&s.sidecar, &sidecar)?;
        samples.push(ManifestEntry {
            file: s.file.clone(),
            sidecar: s.sidecar.clone(),
            class_id: s.class_id,
            split: *split,
            press: s.press,
            frame: s.frame,
        });
    }
    let manifest = DatasetManifest {
        header: ArtifactHeader::new("dataset-manifest", &hash, world.seed),
        split_seed: world.seed,
        test_fraction: params.test_fraction,
        fingertip_radius: radius,
        per_class_counts: per_class,
        test_counts: test,
        stats,
        samples,
    };
    let path = out.write_json("manifest.json", &manifest)?;
    let digest = hex::encode(Sha256::digest(std::fs::read(&path)?));
    println!(
        "{} samples from {} presses ({} frames, {} without contact)",
        manifest.samples.len(),
        stats.presses,
        stats.frames,
        stats.no_contact
    );
    for (i, n) in manifest.per_class_counts.iter().enumerate().filter(|(_, n)| **n > 0) {
        println!("  class {:>2}: {n} ({} test)", i + 1, manifest.test_counts[i]);
    }
    println!("manifest sha256 {digest}");
    println!("config hash {hash}");
    Ok(())
}

fn manifest_path(dataset: &Path) -> PathBuf {
    if dataset.is_dir() {
        dataset.join("manifest.json")
    } else {
        dataset.to_path_buf()
    }
}

/// Read the manifest and featurise every stored sample.
fn load_dataset(dataset: &Path, pool: &rayon::ThreadPool) -> Result<(DatasetManifest, Dataset)> {
    let mpath = manifest_path(dataset);
    if !mpath.is_file() {
        bail!("dataset manifest not found: {}", mpath.display());
    }
    let manifest = DatasetManifest::load(&mpath)?;
    let base = mpath.parent().unwrap_or(Path::new("."));
    let entries: Vec<Result<DatasetEntry>> = pool.install(|| {
        manifest
            .samples
            .par_iter()
            .map(|e| {
                let side: SampleSidecar = tactsort::formats::read_json(&base.join(&e.sidecar))?;
                let rec = read_frame(base.join(&e.file))?;
                let tensor = record_to_sample(&rec).with_context(|| format!("sample {}", e.file))?;
                Ok(DatasetEntry {
                    class_id: e.class_id,
                    split: e.split,
                    press: e.press,
                    frame: e.frame,
                    pca_center: side.pca_center,
                    pca_angle: side.pca_angle,
                    features: features(&tensor),
                })
            })
            .collect()
    });
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let seed = manifest.header.seed;
    Ok((manifest, Dataset { entries, seed }))
}

pub fn train(dataset: &Path, common: &Common, seed: Option<u64>) -> Result<()> {
    let pool = config::pool(common)?;
    let (manifest, mut ds) = load_dataset(dataset, &pool)?;
    if let Some(s) = seed {
        ds.seed = s;
    }
    let cfg = TrainConfig::default();
    let cfg_text = toml::to_string(&cfg).context("serialising train config")?;
    let hash = config::hash(
        "train",
        &[
            ("dataset", manifest.header.config_hash.clone()),
            ("train", cfg_text),
            ("seed", ds.seed.to_string()),
        ],
    );
    let mut model = pool.install(|| classifier::train(&ds, &cfg))?;
    model.metadata.config_hash = hash.clone();
    let out = Out::create(&common.out)?;
    let path = out.write_json("model.json", &model)?;

    let clf = Classifier::from_model(model)?;
    let fit = classifier::evaluate(&clf, &ds, Split::Train)?;
    println!(
        "trained on {} samples, train accuracy {:.4}",
        fit.predictions.len(),
        fit.accuracy
    );
    println!("config hash {hash}");
    println!("wrote {}", path.display());
    Ok(())
}

pub fn eval(dataset: &Path, model: Option<&Path>, split: SplitArg, common: &Common, plots_on: bool) -> Result<()> {
    let default_model = common.out.join("model.json");
    let mpath = model.unwrap_or(&default_model);
    if !mpath.is_file() {
        bail!("model not found: {}", mpath.display());
    }
    let model = ClassifierModel::load(mpath)?;
    let pool = config::pool(common)?;
    let (manifest, ds) = load_dataset(dataset, &pool)?;
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let hash = config::hash(
        "eval",
        &[
            ("dataset", manifest.header.config_hash.clone()),
            ("model", model.metadata.config_hash.clone()),
            ("split", format!("{split:?}")),
        ],
    );
    let header = ArtifactHeader::new("evaluation", &hash, manifest.header.seed);
    let clf = Classifier::from_model(model)?;
    let ev = classifier::evaluate(&clf, &ds, split)?;

    let out = Out::create(&common.out)?;
    out.write_json("metrics.json", &Stamped { header: &header, body: &ev })?;
    out.write_text("eval_confusion.txt", &header, &ev.confusion.to_text())?;
    if plots_on {
        out.write_bytes("plots/eval_confusion.png", &plots::confusion_png(&ev.confusion)?)?;
    }
    print!("{}", ev.confusion.to_text());
    println!("config hash {hash}");
    Ok(())
}
