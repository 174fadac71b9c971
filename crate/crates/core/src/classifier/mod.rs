//! Tactile sample extraction and classification.
//!
//! Frames are labeled by perception, every labeled cluster is cropped into a
//! PCA-aligned 300x300x5 sample, and a classifier backend maps samples to a
//! distribution over the 22 labels (20 objects, two objects, plane / none).
//! The reference backend is class-weighted multinomial logistic regression
//! on pooled features; other backends plug in through [`Backend`].

pub mod dataset;
pub mod features;
pub mod frame;
pub mod logreg;
pub mod metrics;
pub mod preprocess;

pub use dataset::{Dataset, DatasetEntry, DatasetParams, GenerationStats, Split};
pub use features::{features, FEATURE_DIM};
pub use frame::{label_frame, project_labels, rotate_frame, TactileFrame};
pub use metrics::{ClassMetrics, ConfusionMatrix};
pub use preprocess::{
    crop_rotate, extract_samples, pca_pose, ExtractedSample, PcaPose, SampleTensor, SAMPLE_CHANNELS,
    SAMPLE_SIZE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::catalog::NUM_CLASSES;
use logreg::{LogRegConfig, LogRegParams};

pub const LOGREG_KIND: &str = "logreg";
pub const MODEL_VERSION: u32 = 1;

/// A PCA-normalised sample with its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSample {
    pub tensor: SampleTensor,
    pub class_id: u8,
    pub pca_center: [f64; 2],
    pub pca_angle: f64,
}

impl ClassSample {
    pub fn new(extracted: ExtractedSample, class_id: u8) -> Self {
        Self {
            tensor: extracted.tensor,
            class_id,
            pca_center: extracted.pose.center,
            pca_angle: extracted.pose.angle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=NUM_CLASSES as u8).contains(&self.class_id) {
            return Err(Error::InvalidParameter(format!("class id {} outside 1..=22", self.class_id)));
        }
        if !self.tensor.is_finite() {
            return Err(Error::InvalidParameter("sample tensor is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: u8,
    /// Softmax over the 22 labels, index = class id - 1.
    pub confidence: Vec<f64>,
}

impl Prediction {
    /// Argmax with the lowest class id winning ties.
    pub fn from_probabilities(p: &[f64]) -> Self {
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        Self {
            class_id: best as u8 + 1,
            confidence: p.to_vec(),
        }
    }
}

/// A trained classifier implementation.
pub trait Backend: Send + Sync {
    fn kind(&self) -> &str;
    /// Class probabilities for a sample, index = class id - 1.
    fn probabilities(&self, sample: &SampleTensor) -> Vec<f64>;
    fn parameters(&self) -> serde_json::Value;
}

/// Logistic regression on the pooled feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegBackend {
    pub params: LogRegParams,
}

impl LogRegBackend {
    pub fn probabilities_from_features(&self, f: &[f64]) -> Vec<f64> {
        logreg::softmax(&self.params.logits(f)).to_vec()
    }
}

impl Backend for LogRegBackend {
    fn kind(&self) -> &str {
        LOGREG_KIND
    }

    fn probabilities(&self, sample: &SampleTensor) -> Vec<f64> {
        self.probabilities_from_features(&features(sample))
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("parameters serialise")
    }
}

/// Serialisable model: a backend tag, its parameter blob and the training
/// bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub model_version: u32,
    pub kind: String,
    pub input_shape: [usize; 3],
    pub class_weights: Vec<f64>,
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub metadata: ModelMetadata,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default)]
    pub config_hash: String,
    pub seed: u64,
    pub train_samples: usize,
    pub iterations: u64,
    pub final_grad_norm: f64,
    /// Settings of the neural classifier this model stands in for; recorded
    /// for reference only.
    pub reference_network: Option<ReferenceNetwork>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceNetwork {
    pub architecture: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: u32,
    pub batch_size: u32,
}

impl Default for ReferenceNetwork {
    fn default() -> Self {
        Self {
            architecture: "resnet18, pretrained, last layers fine-tuned".into(),
            optimizer: "adam".into(),
            learning_rate: 2e-5,
            weight_decay: 1e-4,
            epochs: 400,
            batch_size: 8,
        }
    }
}

impl ClassifierModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("model serialises");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// A model ready to predict.
pub struct Classifier {
    pub model: ClassifierModel,
    backend: Box<dyn Backend>,
    /// Set for the reference backend so precomputed features can be scored.
    logreg: Option<LogRegBackend>,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier").field("kind", &self.model.kind).finish()
    }
}

impl Classifier {
    /// Instantiate the backend named by `model.kind`.
    pub fn from_model(model: ClassifierModel) -> Result<Self> {
        match model.kind.as_str() {
            LOGREG_KIND => {
                let params: LogRegParams = serde_json::from_value(model.parameters.clone())
                    .map_err(|e| Error::InvalidParameter(format!("logreg parameters: {e}")))?;
                if params.weights.len() != NUM_CLASSES * params.dim
                    || params.mean.len() != params.dim
                    || params.scale.len() != params.dim
                    || params.bias.len() != NUM_CLASSES
                {
                    return Err(Error::InvalidParameter("logreg parameter shapes disagree".into()));
                }
                let lr = LogRegBackend { params };
                Ok(Self {
                    model,
                    backend: Box::new(lr.clone()),
                    logreg: Some(lr),
                })
            }
            other => Err(Error::UnknownClassifier(other.to_string())),
        }
    }

    /// Wrap an external backend.
    pub fn with_backend(backend: Box<dyn Backend>, class_weights: Vec<f64>) -> Self {
        let model = ClassifierModel {
            model_version: MODEL_VERSION,
            kind: backend.kind().to_string(),
            input_shape: [SAMPLE_SIZE, SAMPLE_SIZE, SAMPLE_CHANNELS],
            class_weights,
            parameters: backend.parameters(),
            metadata: ModelMetadata::default(),
        };
        Self {
            model,
            backend,
            logreg: None,
        }
    }

    /// Model predicting the uniform distribution.
    pub fn uniform() -> Self {
        let lr = LogRegBackend {
            params: LogRegParams::zeros(FEATURE_DIM),
        };
        let mut c = Self::with_backend(Box::new(lr.clone()), vec![1.0; NUM_CLASSES]);
        c.logreg = Some(lr);
        c
    }

    pub fn predict(&self, sample: &SampleTensor) -> Result<Prediction> {
        let shape = sample.shape();
        if shape != self.model.input_shape || sample.data.len() != shape.iter().product::<usize>() {
            return Err(Error::ModelSampleMismatch {
                expected: self.model.input_shape,
                got: shape,
            });
        }
        Ok(Prediction::from_probabilities(&self.backend.probabilities(sample)))
    }

    /// Prediction from precomputed features; only for the reference backend.
    pub fn predict_features(&self, f: &[f64]) -> Result<Prediction> {
        let lr = self
            .logreg
            .as_ref()
            .ok_or_else(|| Error::UnknownClassifier(self.model.kind.clone()))?;
        if f.len() != lr.params.dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} features, got {}",
                lr.params.dim,
                f.len()
            )));
        }
        Ok(Prediction::from_probabilities(&lr.probabilities_from_features(f)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: String,
    pub logreg: LogRegConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: LOGREG_KIND.into(),
            logreg: LogRegConfig::default(),
        }
    }
}

/// Train on the train split of `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<ClassifierModel> {
    if config.kind != LOGREG_KIND {
        return Err(Error::UnknownClassifier(config.kind.clone()));
    }
    let rows: Vec<&DatasetEntry> = dataset.entries.iter().filter(|e| e.split == Split::Train).collect();
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let first = rows[0].class_id;
    if rows.iter().all(|e| e.class_id == first) {
        return Err(Error::SingleClassDataset(first));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|e| e.features.clone()).collect();
    let y: Vec<u8> = rows.iter().map(|e| e.class_id).collect();
    let weights = dataset::class_weights(&y);
    let params = logreg::fit(&x, &y, &weights, &config.logreg)?;
    Ok(ClassifierModel {
        model_version: MODEL_VERSION,
        kind: LOGREG_KIND.into(),
        input_shape: [SAMPLE_SIZE, SAMPLE_SIZE, SAMPLE_CHANNELS],
        class_weights: weights.to_vec(),
        metadata: ModelMetadata {
            config_hash: String::new(),
            seed: dataset.seed,
            train_samples: rows.len(),
            iterations: params.iterations,
            final_grad_norm: params.final_grad_norm,
            reference_network: Some(ReferenceNetwork::default()),
        },
        parameters: serde_json::to_value(&params).expect("parameters serialise"),
    })
}

/// Generate the scenario's dataset (its `dataset` table, over the bowl's
/// classes unless the table names its own) and train on the train split.
pub fn train_for_scenario(
    scenario: &crate::simworld::Scenario,
    fingertip_radius: f64,
    seed: u64,
    config: &TrainConfig,
) -> Result<(ClassifierModel, Dataset, GenerationStats)> {
    let (ds, stats) = dataset::build_dataset(&scenario.dataset, &scenario.classes(), fingertip_radius, seed)?;
    let model = train(&ds, config)?;
    Ok((model, ds, stats))
}

/// One replayable prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub index: usize,
    pub truth: u8,
    pub predicted: u8,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub predictions: Vec<PredictionLog>,
}

/// Evaluate on the entries of `split`.
pub fn evaluate(classifier: &Classifier, dataset: &Dataset, split: Split) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::new();
    let mut predictions = Vec::new();
    for (index, e) in dataset.entries.iter().enumerate().filter(|(_, e)| e.split == split) {
        let p = classifier.predict_features(&e.features)?;
        confusion.record(e.class_id, p.class_id);
        predictions.push(PredictionLog {
            index,
            truth: e.class_id,
            predicted: p.class_id,
            confidence: p.confidence[p.class_id as usize - 1],
        });
    }
    Ok(Evaluation {
        per_class: confusion.class_metrics(),
        accuracy: confusion.accuracy(),
        confusion,
        predictions,
    })
}
