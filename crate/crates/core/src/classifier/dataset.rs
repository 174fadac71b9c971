//! Synthetic tactile datasets, stratified splits and class weights.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::{label_frame, TactileFrame};
use super::preprocess::{extract_samples, ExtractedSample};
use super::ClassSample;
use crate::error::{Error, Result};
use crate::kinematics::Side;
use crate::perception::{cloud_from_deformation, control_pixels, segment, DbscanParams};
use crate::rng;
use crate::simworld::catalog::{self, NUM_CLASSES, TWO_OBJECTS};
use crate::simworld::press::{place_pressed, Press, PressParams};
use crate::simworld::tactile::render_frame;

pub const DEFAULT_TEST_FRACTION: f64 = 0.12;
/// A ground-truth object must own this many pixels of a cluster to count
/// as present in it.
pub const MIN_OBJECT_PIXELS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    /// Classes to press; empty means the scenario's classes.
    pub classes: Vec<u8>,
    pub presses_per_class: usize,
    pub frames_per_press: usize,
    /// Presses with two objects side by side, labeled as two objects.
    pub two_object_presses: usize,
    pub press: PressParams,
    pub perception: DbscanParams,
    /// Largest distance from a full-resolution pixel to a labeled control
    /// point for the label to carry over, mm.
    pub label_eps: f64,
    pub test_fraction: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            classes: Vec::new(),
            presses_per_class: 1,
            frames_per_press: 50,
            two_object_presses: 0,
            press: PressParams::default(),
            perception: DbscanParams::default(),
            label_eps: 1.5,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.classes.iter().find(|c| catalog::shape(**c).is_none()) {
            return Err(Error::InvalidParameter(format!("class {c} cannot be pressed")));
        }
        if self.frames_per_press == 0 {
            return Err(Error::InvalidParameter("frames_per_press must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidParameter("test_fraction must lie in (0, 1)".into()));
        }
        if !(self.label_eps > 0.0) {
            return Err(Error::InvalidParameter("label_eps must be positive".into()));
        }
        self.press.validate()?;
        self.perception.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A sample reduced to its feature vector, with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub class_id: u8,
    pub split: Split,
    pub press: usize,
    pub frame: usize,
    pub pca_center: [f64; 2],
    pub pca_angle: f64,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    pub seed: u64,
}

impl Dataset {
    pub fn per_class_counts(&self) -> [usize; NUM_CLASSES] {
        counts(self.entries.iter().map(|e| e.class_id))
    }

    pub fn split_counts(&self, split: Split) -> [usize; NUM_CLASSES] {
        counts(self.entries.iter().filter(|e| e.split == split).map(|e| e.class_id))
    }

    /// Assign splits; see [`stratified_split`].
    pub fn split(&mut self, test_fraction: f64, seed: u64) {
        let labels: Vec<u8> = self.entries.iter().map(|e| e.class_id).collect();
        for (e, s) in self.entries.iter_mut().zip(stratified_split(&labels, test_fraction, seed)) {
            e.split = s;
        }
    }
}

fn counts(ids: impl Iterator<Item = u8>) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    for id in ids {
        c[id as usize - 1] += 1;
    }
    c
}

/// Per class, `max(1, round(fraction * n))` randomly chosen samples go to
/// test, so every class in the data appears in the test split.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Vec<Split> {
    let mut out = vec![Split::Train; labels.len()];
    let mut rng = rng::stream(seed, "split");
    for class in 1..=NUM_CLASSES as u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        for &i in &idx[..n_test] {
            out[i] = Split::Test;
        }
    }
    out
}

/// Inverse-frequency weights `N / (K * n_c)` over the `K` classes present;
/// zero for absent classes. Index = class id - 1.
pub fn class_weights(labels: &[u8]) -> [f64; NUM_CLASSES] {
    let c = counts(labels.iter().copied());
    let present = c.iter().filter(|n| **n > 0).count();
    let n = labels.len() as f64;
    std::array::from_fn(|i| {
        if c[i] == 0 {
            0.0
        } else {
            n / (present as f64 * c[i] as f64)
        }
    })
}

/// Label a rendered frame from its control-resolution segmentation and cut
/// out one sample per cluster, largest first. Empty when nothing is in
/// contact.
pub fn perceive_frame(
    frame: &mut TactileFrame,
    perception: &DbscanParams,
    label_eps: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ExtractedSample>> {
    let cloud = cloud_from_deformation(&frame.depth, control_pixels(), frame.fingertip_radius, Side::Right);
    let seg = match segment(&cloud, perception, rng) {
        Ok(s) => s,
        Err(Error::NoContact) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    label_frame(frame, &cloud, &seg, perception.deform_threshold, label_eps);
    Ok(extract_samples(frame))
}

/// One press to simulate.
#[derive(Clone, Debug, PartialEq)]
struct PressJob {
    index: usize,
    classes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub press: usize,
    pub frame: usize,
    pub sample: ClassSample,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub presses: usize,
    pub frames: usize,
    pub samples: usize,
    /// Frames without any detected contact.
    pub no_contact: usize,
    /// Two-object frames whose largest cluster did not span both objects.
    pub unmerged_pairs: usize,
}

fn jobs(params: &DatasetParams, classes: &[u8], seed: u64) -> Vec<PressJob> {
    let mut out = Vec::new();
    for &c in classes {
        for _ in 0..params.presses_per_class {
            out.push(PressJob {
                index: out.len(),
                classes: vec![c],
            });
        }
    }
    let mut rng = rng::stream(seed, "pairs");
    for _ in 0..params.two_object_presses {
        let a = classes[rng.random_range(0..classes.len())];
        let b = classes[rng.random_range(0..classes.len())];
        out.push(PressJob {
            index: out.len(),
            classes: vec![a, b],
        });
    }
    out
}

fn run_press(job: &PressJob, params: &DatasetParams, radius: f64, seed: u64) -> Result<(Vec<GeneratedSample>, GenerationStats)> {
    let mut rng = rng::stream(seed, &format!("press-{}", job.index));
    let press = Press::sample(&params.press, &mut rng);
    let shapes: Vec<_> = job
        .classes
        .iter()
        .map(|&c| (c, catalog::shape(c).expect("validated class")))
        .collect();
    let mut stats = GenerationStats {
        presses: 1,
        ..Default::default()
    };
    let mut out = Vec::new();
    for k in 0..params.frames_per_press {
        stats.frames += 1;
        let objects = place_pressed(&shapes, &press, press.frame_depth(k, params.frames_per_press), radius);
        let mut render = render_frame(&objects, radius);
        let samples = perceive_frame(&mut render.frame, &params.perception, params.label_eps, &mut rng)?;
        let Some(primary) = samples.into_iter().next() else {
            stats.no_contact += 1;
            continue;
        };
        let class_id = if job.classes.len() == 1 {
            job.classes[0]
        } else {
            let mut owners = std::collections::BTreeMap::<u32, usize>::new();
            for (l, id) in render.frame.labels.iter().zip(&render.object_ids) {
                if *l == primary.label && *id > 0 {
                    *owners.entry(*id).or_default() += 1;
                }
            }
            if owners.values().filter(|n| **n >= MIN_OBJECT_PIXELS).count() < 2 {
                stats.unmerged_pairs += 1;
                continue;
            }
            TWO_OBJECTS
        };
        stats.samples += 1;
        out.push(GeneratedSample {
            press: job.index,
            frame: k,
            sample: ClassSample::new(primary, class_id),
        });
    }
    Ok((out, stats))
}

/// Simulate every press and hand samples to `sink` in a fixed order
/// (presses by class, then two-object presses; frames in order). Presses run
/// on the rayon pool a batch at a time so memory stays bounded.
pub fn generate(
    params: &DatasetParams,
    classes: &[u8],
    fingertip_radius: f64,
    seed: u64,
    mut sink: impl FnMut(GeneratedSample) -> Result<()>,
) -> Result<GenerationStats> {
    params.validate()?;
    let classes: Vec<u8> = if params.classes.is_empty() {
        classes.to_vec()
    } else {
        params.classes.clone()
    };
    if classes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(c) = classes.iter().find(|c| catalog::shape(**c).is_none()) {
        return Err(Error::InvalidParameter(format!("class {c} cannot be pressed")));
    }
    let all = jobs(params, &classes, seed);
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut total = GenerationStats::default();
    for chunk in all.chunks(batch) {
        let results: Vec<Result<(Vec<GeneratedSample>, GenerationStats)>> = chunk
            .par_iter()
            .map(|j| run_press(j, params, fingertip_radius, seed))
            .collect();
        for r in results {
            let (samples, s) = r?;
            total.presses += s.presses;
            total.frames += s.frames;
            total.samples += s.samples;
            total.no_contact += s.no_contact;
            total.unmerged_pairs += s.unmerged_pairs;
            for g in samples {
                sink(g)?;
            }
        }
    }
    Ok(total)
}

/// Generate, featurise and split in memory.
pub fn build_dataset(params: &DatasetParams, classes: &[u8], fingertip_radius: f64, seed: u64) -> Result<(Dataset, GenerationStats)> {
    let mut entries = Vec::new();
    let stats = generate(params, classes, fingertip_radius, seed, |g| {
        entries.push(DatasetEntry {
            class_id: g.sample.class_id,
            split: Split::Train,
            press: g.press,
            frame: g.frame,
            pca_center: g.sample.pca_center,
            pca_angle: g.sample.pca_angle,
            features: super::features(&g.sample.tensor),
        });
        Ok(())
    })?;
    let mut ds = Dataset { entries, seed };
    ds.split(params.test_fraction, seed);
    Ok((ds, stats))
}
