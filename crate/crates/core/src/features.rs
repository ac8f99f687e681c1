//! Per-image feature extraction and the fitted transforms that sit in front of
//! each SVM (z-scoring, NMF encoding).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haralick::haralick_vector;
use crate::nmf::{nmf_encode, nmf_factorize, NmfConfig, NmfModel};
use crate::preprocess::{preprocess, quantize, resample_area, GrayImage, PreprocessConfig, DEFAULT_LEVELS};
use crate::scaling::Standardizer;
use crate::svm::{train_svm, KernelSpec, Label, SvmModel, TrainingSet, DEFAULT_C};

pub const DEFAULT_NMF_SIDE: usize = 64;

/// What the columns of the NMF data matrix hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NmfInput {
    /// Preprocessed image resampled to `side x side` and flattened row-major.
    Pixels { side: usize },
    /// The 28-D Haralick vector, shifted to be nonnegative.
    Haralick,
    /// Externally supplied nonnegative vectors (feature CSV).
    Raw,
}

impl Default for NmfInput {
    fn default() -> Self {
        NmfInput::Pixels { side: DEFAULT_NMF_SIDE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub levels: usize,
    pub distance: usize,
    pub nmf_input: NmfInput,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            levels: DEFAULT_LEVELS,
            distance: 1,
            nmf_input: NmfInput::default(),
        }
    }
}

/// Fold-independent features of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures {
    pub id: String,
    pub label: Option<Label>,
    /// 28 Haralick values (means, then ranges).
    pub haralick: Vec<f64>,
    /// Column of the NMF data matrix for this sample.
    pub nmf_input: Vec<f64>,
}

pub fn haralick_from_preprocessed(img: &GrayImage, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let q = quantize(img, cfg.levels)?;
    Ok(haralick_vector(&q, cfg.distance)?.to_vec())
}

pub fn nmf_input_from_preprocessed(img: &GrayImage, haralick: &[f64], cfg: &PipelineConfig) -> Result<Vec<f64>> {
    match cfg.nmf_input {
        NmfInput::Pixels { side } => Ok(resample_area(img, side, side)?.into_pixels()),
        NmfInput::Haralick => Ok(haralick.to_vec()),
        NmfInput::Raw => Err(Error::param(
            "nmf_input",
            "raw NMF input cannot be derived from an image",
        )),
    }
}

/// Preprocess a raw image and compute both feature families.
pub fn extract_sample(
    id: impl Into<String>,
    label: Option<Label>,
    raw: &GrayImage,
    cfg: &PipelineConfig,
) -> Result<SampleFeatures> {
    let pre = preprocess(raw, &cfg.preprocess)?;
    let haralick = haralick_from_preprocessed(&pre, cfg)?;
    let nmf_input = nmf_input_from_preprocessed(&pre, &haralick, cfg)?;
    Ok(SampleFeatures {
        id: id.into(),
        label,
        haralick,
        nmf_input,
    })
}

/// Feature extraction over many images, in input order.
pub fn extract_all(items: &[(String, Option<Label>, GrayImage)], cfg: &PipelineConfig) -> Result<Vec<SampleFeatures>> {
    items
        .par_iter()
        .map(|(id, label, img)| extract_sample(id.clone(), *label, img, cfg))
        .collect()
}

/// NMF basis plus the input transform needed to encode new samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfEncoder {
    pub layout: NmfInput,
    /// Per-dimension shift subtracted before encoding (Haralick inputs only).
    pub offsets: Option<Vec<f64>>,
    pub model: NmfModel,
}

impl NmfEncoder {
    /// Fit the basis on training columns.
    pub fn fit<C: AsRef<[f64]>>(columns: &[C], layout: NmfInput, cfg: &NmfConfig) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::InvalidInput("no training columns for NMF".into()))?;
        let m = first.as_ref().len();
        let offsets = match layout {
            NmfInput::Haralick => {
                let mut mins = vec![f64::INFINITY; m];
                for col in columns {
                    for (lo, v) in mins.iter_mut().zip(col.as_ref()) {
                        *lo = lo.min(*v);
                    }
                }
                Some(mins)
            }
            _ => None,
        };
        let mut data = DMatrix::zeros(m, columns.len());
        for (j, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: col.len(),
                });
            }
            let shifted = shift(col, offsets.as_deref());
            data.column_mut(j).copy_from_slice(&shifted);
        }
        let fact = nmf_factorize(&data, cfg)?;
        Ok(Self {
            layout,
            offsets,
            model: fact.model,
        })
    }

    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        if let Some(off) = &self.offsets {
            if off.len() != input.len() {
                return Err(Error::DimensionMismatch {
                    expected: off.len(),
                    found: input.len(),
                });
            }
        }
        nmf_encode(&self.model, &shift(input, self.offsets.as_deref()))
    }

    pub fn rank(&self) -> usize {
        self.model.rank()
    }
}

fn shift(x: &[f64], offsets: Option<&[f64]>) -> Vec<f64> {
    match offsets {
        Some(off) => x.iter().zip(off).map(|(v, o)| (v - o).max(0.0)).collect(),
        None => x.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmSettings {
    pub kernel: KernelSpec,
    #[serde(rename = "C")]
    pub c: f64,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Linear,
            c: DEFAULT_C,
        }
    }
}

/// An SVM together with the z-scoring fitted on its training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub standardization: Standardizer,
    #[serde(flatten)]
    pub model: SvmModel,
}

impl SvmClassifier {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], labels: &[Label], settings: &SvmSettings) -> Result<Self> {
        let standardization = Standardizer::fit(rows)?;
        let scaled = rows
            .iter()
            .map(|r| standardization.apply(r.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let data = TrainingSet::new(scaled, labels.to_vec())?;
        let model = train_svm(&data, &settings.kernel, settings.c)?;
        Ok(Self { standardization, model })
    }

    pub fn dim(&self) -> usize {
        self.standardization.dim()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.model.decision_value(&self.standardization.apply(x)?)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.model.score(&self.standardization.apply(x)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.standardization.validate()?;
        self.model.validate()?;
        if self.model.dim() != self.dim() {
            return Err(Error::validation(
                "standardization",
                format!(
                    "covers {} dimensions but support vectors have {}",
                    self.dim(),
                    self.model.dim()
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_shapes() {
        let img = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 17) as f64).unwrap();
        let cfg = PipelineConfig {
            nmf_input: NmfInput::Pixels { side: 16 },
            ..Default::default()
        };
        let s = extract_sample("a", None, &img, &cfg).unwrap();
        assert_eq!(s.haralick.len(), 28);
        assert_eq!(s.nmf_input.len(), 256);
        assert!(s.nmf_input.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let hcfg = PipelineConfig {
            nmf_input: NmfInput::Haralick,
            ..Default::default()
        };
        let s = extract_sample("a", None, &img, &hcfg).unwrap();
        assert_eq!(s.nmf_input, s.haralick);
    }

    #[test]
    fn haralick_layout_shifts_nonnegative() {
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|j| (0..5).map(|i| (i as f64 - 2.0) * (j as f64 + 1.0) * 0.3).collect())
            .collect();
        let enc = NmfEncoder::fit(
            &cols,
            NmfInput::Haralick,
            &NmfConfig {
                rank: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let offsets = enc.offsets.as_ref().unwrap();
        assert_eq!(offsets.len(), 5);
        let h = enc.encode(&[-100.0, 0.0, 0.0, 0.0, 10.0]).unwrap();
        assert!(h.iter().all(|&v| v >= 0.0));
    }
}
