//! Leave-one-out cross-validation, confusion counting and SN/SP/AC metrics.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NmfEncoder, PipelineConfig, SampleFeatures, SvmClassifier, SvmSettings};
use crate::fusion::{FusionModel, Winner};
use crate::nmf::NmfConfig;
use crate::scaling::Standardizer;
use crate::svm::{train_svm, Label, SvmModel, TrainingSet};

/// Counts with "stroke" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

/// Percentages; `None` when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sn: Option<f64>,
    pub sp: Option<f64>,
    pub ac: Option<f64>,
}

impl Metrics {
    pub fn is_fully_defined(&self) -> bool {
        self.sn.is_some() && self.sp.is_some() && self.ac.is_some()
    }
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    Metrics {
        sn: percent(cm.tp, cm.tp + cm.fn_),
        sp: percent(cm.tn, cm.tn + cm.fp),
        ac: percent(cm.tp + cm.tn, cm.total()),
    }
}

/// Format a metric to two decimals, or `undefined`.
pub fn format_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[serde(rename = "haralick")]
    HaralickOnly,
    #[serde(rename = "nmf")]
    NmfOnly,
    #[serde(rename = "concat")]
    Concatenated,
    #[serde(rename = "multilevel")]
    MultiLevel,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::HaralickOnly,
        ClassifierKind::NmfOnly,
        ClassifierKind::Concatenated,
        ClassifierKind::MultiLevel,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ClassifierKind::HaralickOnly => "Haralick",
            ClassifierKind::NmfOnly => "NMF",
            ClassifierKind::Concatenated => "Concatenated",
            ClassifierKind::MultiLevel => "Multi-Level",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::HaralickOnly => "haralick",
            ClassifierKind::NmfOnly => "nmf",
            ClassifierKind::Concatenated => "concat",
            ClassifierKind::MultiLevel => "multilevel",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haralick" => Ok(ClassifierKind::HaralickOnly),
            "nmf" => Ok(ClassifierKind::NmfOnly),
            "concat" | "concatenated" => Ok(ClassifierKind::Concatenated),
            "multilevel" | "multi-level" => Ok(ClassifierKind::MultiLevel),
            other => Err(Error::param("classifier", format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub classifier: ClassifierKind,
    /// Used by the Haralick-only, concatenated and multi-level Haralick models.
    pub haralick_svm: SvmSettings,
    /// Used by the NMF-only and multi-level NMF models.
    pub nmf_svm: SvmSettings,
    pub nmf: NmfConfig,
    /// Feature extraction settings the samples were produced with.
    pub pipeline: PipelineConfig,
    /// Fold `k` fits its NMF basis with seed `seed + k`.
    pub seed: u64,
    /// Run folds on the rayon pool. Results do not depend on this.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::MultiLevel,
            haralick_svm: SvmSettings::default(),
            nmf_svm: SvmSettings::default(),
            nmf: NmfConfig::default(),
            pipeline: PipelineConfig::default(),
            seed: 42,
            parallel: true,
        }
    }
}

/// Concatenate a Haralick block and an NMF block, Haralick first.
pub fn concat_features(haralick: &[f64], nmf: &[f64]) -> Vec<f64> {
    haralick.iter().chain(nmf).copied().collect()
}

/// A model fitted on one training split.
#[derive(Debug, Clone)]
pub enum TrainedClassifier {
    Haralick(SvmClassifier),
    Nmf {
        encoder: NmfEncoder,
        svm: SvmClassifier,
    },
    Concatenated {
        encoder: NmfEncoder,
        haralick_scale: Standardizer,
        nmf_scale: Standardizer,
        svm: SvmModel,
    },
    MultiLevel(FusionModel),
}

/// Prediction for one held-out sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Score of the model that decided (the winner's score for multi-level).
    pub score: f64,
    pub score_haralick: Option<f64>,
    pub score_nmf: Option<f64>,
    pub winner: Option<Winner>,
}

fn labels_of(samples: &[&SampleFeatures]) -> Result<Vec<Label>> {
    samples
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::InvalidInput(format!("sample `{}` has no label", s.id)))
        })
        .collect()
}

fn encoder_config(cfg: &EvalConfig, nmf_seed: u64) -> NmfConfig {
    NmfConfig {
        seed: nmf_seed,
        ..cfg.nmf
    }
}

/// Fit the configured classifier on `train` only.
pub fn fit_classifier(train: &[&SampleFeatures], cfg: &EvalConfig, nmf_seed: u64) -> Result<TrainedClassifier> {
    let labels = labels_of(train)?;
    let encode_all = |encoder: &NmfEncoder| {
        train
            .iter()
            .map(|s| encoder.encode(&s.nmf_input))
            .collect::<Result<Vec<_>>>()
    };
    let nmf_columns: Vec<&[f64]> = train.iter().map(|s| s.nmf_input.as_slice()).collect();

    Ok(match cfg.classifier {
        ClassifierKind::HaralickOnly => {
            let rows: Vec<&[f64]> = train.iter().map(|s| s.haralick.as_slice()).collect();
            TrainedClassifier::Haralick(SvmClassifier::fit(&rows, &labels, &cfg.haralick_svm)?)
        }
        ClassifierKind::NmfOnly => {
            let encoder = NmfEncoder::fit(&nmf_columns, cfg.pipeline.nmf_input, &encoder_config(cfg, nmf_seed))?;
            let weights = encode_all(&encoder)?;
            let svm = SvmClassifier::fit(&weights, &labels, &cfg.nmf_svm)?;
            TrainedClassifier::Nmf { encoder, svm }
        }
        ClassifierKind::Concatenated => {
            let encoder = NmfEncoder::fit(&nmf_columns, cfg.pipeline.nmf_input, &encoder_config(cfg, nmf_seed))?;
            let weights = encode_all(&encoder)?;
            let hrows: Vec<&[f64]> = train.iter().map(|s| s.haralick.as_slice()).collect();
            let haralick_scale = Standardizer::fit(&hrows)?;
            let nmf_scale = Standardizer::fit(&weights)?;
            let rows = hrows
                .iter()
                .zip(&weights)
                .map(|(h, w)| Ok(concat_features(&haralick_scale.apply(h)?, &nmf_scale.apply(w)?)))
                .collect::<Result<Vec<_>>>()?;
            let data = TrainingSet::new(rows, labels)?;
            let svm = train_svm(&data, &cfg.haralick_svm.kernel, cfg.haralick_svm.c)?;
            TrainedClassifier::Concatenated {
                encoder,
                haralick_scale,
                nmf_scale,
                svm,
            }
        }
        ClassifierKind::MultiLevel => TrainedClassifier::MultiLevel(FusionModel::train(
            train,
            cfg.pipeline,
            &cfg.haralick_svm,
            &cfg.nmf_svm,
            &encoder_config(cfg, nmf_seed),
        )?),
    })
}

impl TrainedClassifier {
    pub fn predict(&self, sample: &SampleFeatures) -> Result<Prediction> {
        let single = |score: f64, h: Option<f64>, n: Option<f64>| {
            if !score.is_finite() {
                return Err(Error::NonFinite("classifier score".into()));
            }
            Ok(Prediction {
                label: Label::from_value(score),
                score,
                score_haralick: h,
                score_nmf: n,
                winner: None,
            })
        };
        match self {
            TrainedClassifier::Haralick(svm) => {
                let s = svm.score(&sample.haralick)?;
                single(s, Some(s), None)
            }
            TrainedClassifier::Nmf { encoder, svm } => {
                let s = svm.score(&encoder.encode(&sample.nmf_input)?)?;
                single(s, None, Some(s))
            }
            TrainedClassifier::Concatenated {
                encoder,
                haralick_scale,
                nmf_scale,
                svm,
            } => {
                let w = encoder.encode(&sample.nmf_input)?;
                let x = concat_features(&haralick_scale.apply(&sample.haralick)?, &nmf_scale.apply(&w)?);
                single(svm.score(&x)?, None, None)
            }
            TrainedClassifier::MultiLevel(fm) => {
                let d = fm.classify_sample(sample)?;
                Ok(Prediction {
                    label: d.label,
                    score: d.winning_score(),
                    score_haralick: Some(d.score_haralick),
                    score_nmf: Some(d.score_nmf),
                    winner: Some(d.winner),
                })
            }
        }
    }
}

/// Outcome for one held-out sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub sample_id: String,
    pub truth: Label,
    pub predicted: Label,
    pub score: f64,
    pub score_haralick: Option<f64>,
    pub score_nmf: Option<f64>,
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvOutcome {
    pub confusion: ConfusionMatrix,
    pub records: Vec<FoldRecord>,
    /// Folds whose training split lacked a class; excluded from the counts.
    pub degenerate_folds: Vec<usize>,
}

impl LoocvOutcome {
    pub fn metrics(&self) -> Metrics {
        metrics(&self.confusion)
    }
}

enum FoldResult {
    Scored(FoldRecord),
    Degenerate(usize),
}

/// Everything except sample `fold`.
pub fn training_split(dataset: &[SampleFeatures], fold: usize) -> Vec<&SampleFeatures> {
    dataset
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .map(|(_, s)| s)
        .collect()
}

/// Fit the whole pipeline on all samples but `fold` and classify the held-out one.
pub fn run_fold(dataset: &[SampleFeatures], fold: usize, cfg: &EvalConfig) -> Result<Option<FoldRecord>> {
    let train = training_split(dataset, fold);
    let positives = train.iter().filter(|s| s.label == Some(Label::Positive)).count();
    if positives == 0 || positives == train.len() {
        return Ok(None);
    }
    let test = &dataset[fold];
    let truth = test
        .label
        .ok_or_else(|| Error::InvalidInput(format!("sample `{}` has no label", test.id)))?;
    let model = fit_classifier(&train, cfg, cfg.seed.wrapping_add(fold as u64))?;
    let p = model.predict(test)?;
    Ok(Some(FoldRecord {
        fold,
        sample_id: test.id.clone(),
        truth,
        predicted: p.label,
        score: p.score,
        score_haralick: p.score_haralick,
        score_nmf: p.score_nmf,
        winner: p.winner,
    }))
}

pub fn loocv(dataset: &[SampleFeatures], cfg: &EvalConfig) -> Result<LoocvOutcome> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 3 samples, got {n}"
        )));
    }
    let labels = dataset
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::InvalidInput(format!("sample `{}` has no label", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::DegenerateTrainingSet("dataset contains a single class".into()));
    }

    let job = |fold: usize| -> Result<FoldResult> {
        Ok(match run_fold(dataset, fold, cfg)? {
            Some(r) => FoldResult::Scored(r),
            None => FoldResult::Degenerate(fold),
        })
    };
    let results: Vec<Result<FoldResult>> = if cfg.parallel {
        (0..n).into_par_iter().map(job).collect()
    } else {
        (0..n).map(job).collect()
    };

    let mut outcome = LoocvOutcome {
        confusion: ConfusionMatrix::default(),
        records: Vec::with_capacity(n),
        degenerate_folds: Vec::new(),
    };
    for r in results {
        match r? {
            FoldResult::Scored(rec) => {
                outcome.confusion.record(rec.truth, rec.predicted);
                outcome.records.push(rec);
            }
            FoldResult::Degenerate(fold) => outcome.degenerate_folds.push(fold),
        }
    }
    Ok(outcome)
}

/// Per-sample records as CSV text.
pub fn records_csv(records: &[FoldRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "fold",
        "sample_id",
        "truth",
        "predicted",
        "score",
        "score_haralick",
        "score_nmf",
        "winner",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.fold.to_string(),
            r.sample_id.clone(),
            r.truth.tag().to_string(),
            r.predicted.tag().to_string(),
            r.score.to_string(),
            opt(r.score_haralick),
            opt(r.score_nmf),
            match r.winner {
                Some(Winner::Haralick) => "haralick".into(),
                Some(Winner::Nmf) => "nmf".into(),
                None => String::new(),
            },
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}
