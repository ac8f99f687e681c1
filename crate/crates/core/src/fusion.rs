//! Multi-level classification: score a sample with both the Haralick and the
//! NMF model and keep the prediction of whichever lies farther from its
//! separating hyperplane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    haralick_from_preprocessed, nmf_input_from_preprocessed, NmfEncoder, PipelineConfig, SampleFeatures, SvmClassifier,
    SvmSettings,
};
use crate::nmf::NmfConfig;
use crate::preprocess::{preprocess, GrayImage};
use crate::svm::Label;

/// Scores whose magnitudes differ by less than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Haralick,
    Nmf,
}

/// Tie-break rule recorded alongside each fusion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    HaralickWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub label: Label,
    pub winner: Winner,
    pub score_haralick: f64,
    pub score_nmf: f64,
}

impl FusionDecision {
    pub fn winning_score(&self) -> f64 {
        match self.winner {
            Winner::Haralick => self.score_haralick,
            Winner::Nmf => self.score_nmf,
        }
    }
}

/// Pick the larger-magnitude score; ties go to the Haralick model.
pub fn fuse_scores(score_haralick: f64, score_nmf: f64) -> Result<FusionDecision> {
    if !score_haralick.is_finite() {
        return Err(Error::NonFinite("haralick pipeline score".into()));
    }
    if !score_nmf.is_finite() {
        return Err(Error::NonFinite("nmf pipeline score".into()));
    }
    let winner = if score_nmf.abs() - score_haralick.abs() >= TIE_TOLERANCE {
        Winner::Nmf
    } else {
        Winner::Haralick
    };
    let winning = match winner {
        Winner::Haralick => score_haralick,
        Winner::Nmf => score_nmf,
    };
    Ok(FusionDecision {
        label: Label::from_value(winning),
        winner,
        score_haralick,
        score_nmf,
    })
}

/// Two SVMs trained on the same samples, one per feature family.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub pipeline: PipelineConfig,
    pub haralick: SvmClassifier,
    pub nmf: SvmClassifier,
    pub encoder: NmfEncoder,
    pub tie_rule: TieRule,
}

impl FusionModel {
    /// Fit the NMF basis and both SVMs on labeled samples.
    pub fn train(
        samples: &[&SampleFeatures],
        pipeline: PipelineConfig,
        haralick_svm: &SvmSettings,
        nmf_svm: &SvmSettings,
        nmf: &NmfConfig,
    ) -> Result<Self> {
        let labels = samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::InvalidInput(format!("sample `{}` has no label", s.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let hrows: Vec<&[f64]> = samples.iter().map(|s| s.haralick.as_slice()).collect();
        let haralick = SvmClassifier::fit(&hrows, &labels, haralick_svm)?;

        let columns: Vec<&[f64]> = samples.iter().map(|s| s.nmf_input.as_slice()).collect();
        let encoder = NmfEncoder::fit(&columns, pipeline.nmf_input, nmf)?;
        let weights = columns.iter().map(|c| encoder.encode(c)).collect::<Result<Vec<_>>>()?;
        let nmf = SvmClassifier::fit(&weights, &labels, nmf_svm)?;

        Ok(Self {
            pipeline,
            haralick,
            nmf,
            encoder,
            tie_rule: TieRule::HaralickWins,
        })
    }

    /// Fuse from a Haralick 28-vector and an NMF weight vector.
    pub fn classify_features(&self, haralick: &[f64], nmf_weights: &[f64]) -> Result<FusionDecision> {
        check_finite(haralick, "haralick pipeline features")?;
        check_finite(nmf_weights, "nmf pipeline features")?;
        let (sh, sn) = rayon::join(|| self.haralick.score(haralick), || self.nmf.score(nmf_weights));
        fuse_scores(sh?, sn?)
    }

    /// Fuse from the raw NMF input column (before encoding).
    pub fn classify_sample(&self, sample: &SampleFeatures) -> Result<FusionDecision> {
        let weights = self.encoder.encode(&sample.nmf_input)?;
        self.classify_features(&sample.haralick, &weights)
    }

    /// Run the full pipeline on a raw image.
    pub fn classify(&self, image: &GrayImage) -> Result<FusionDecision> {
        let pre = preprocess(image, &self.pipeline.preprocess)?;
        let haralick = haralick_from_preprocessed(&pre, &self.pipeline)?;
        let input = nmf_input_from_preprocessed(&pre, &haralick, &self.pipeline)?;
        let weights = self.encoder.encode(&input)?;
        self.classify_features(&haralick, &weights)
    }
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}
