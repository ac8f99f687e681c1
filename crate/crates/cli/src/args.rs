//! Command-line surface. Every subcommand's arguments also deserialize from
//! the `--config` JSON file, keyed by flag name.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use texturekit::features::{NmfInput, PipelineConfig, SvmSettings};
use texturekit::nmf::NmfConfig;
use texturekit::preprocess::{BilateralParams, PreprocessConfig};
use texturekit::svm::KernelSpec;

#[derive(Debug, Parser)]
#[command(
    name = "texturekit",
    version,
    about = "Texture classification with Haralick and NMF features"
)]
pub struct Cli {
    /// JSON object of flag values; its entries override flags given on the command line.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, denoise and quantize one image; writes a PGM of gray levels.
    Preprocess(PreprocessCmd),
    /// Co-occurrence probability matrix of one image as CSV.
    Glcm(GlcmCmd),
    /// Haralick or NMF feature vectors for one or more images.
    Extract(ExtractCmd),
    /// Fit an NMF basis on images or a feature CSV.
    NmfTrain(NmfTrainCmd),
    /// Fit an SVM on a labeled feature CSV.
    SvmTrain(SvmTrainCmd),
    /// Fit the Haralick SVM, NMF basis and NMF SVM on a labeled dataset.
    TrainFusion(TrainFusionCmd),
    /// Classify images with a trained fusion model.
    Classify(ClassifyCmd),
    /// Leave-one-out cross-validation on a labeled dataset.
    Loocv(LoocvCmd),
    /// Generate a labeled synthetic texture dataset.
    Synth(SynthCmd),
    /// Print (and optionally plot) a saved LOOCV report.
    Report(ReportCmd),
    /// SN / SP / AC from confusion counts.
    Metrics(MetricsCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    /// tanh(a <u, v> + b)
    Mlp,
}

fn kernel_spec(kind: KernelKind, sigma: f64, a: f64, b: f64) -> KernelSpec {
    match kind {
        KernelKind::Linear => KernelSpec::Linear,
        KernelKind::Rbf => KernelSpec::Rbf { sigma },
        KernelKind::Mlp => KernelSpec::Sigmoid { a, b },
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    pub kernel: KernelKind,
    /// RBF width.
    #[arg(long, default_value_t = 40.0)]
    pub sigma: f64,
    #[arg(long = "mlp-a", default_value_t = 1.0)]
    pub mlp_a: f64,
    #[arg(long = "mlp-b", default_value_t = -9.0, allow_hyphen_values = true)]
    pub mlp_b: f64,
    /// Soft-margin penalty.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

impl KernelArgs {
    pub fn settings(&self) -> SvmSettings {
        SvmSettings {
            kernel: kernel_spec(self.kernel, self.sigma, self.mlp_a, self.mlp_b),
            c: self.c,
        }
    }
}

/// Kernel of the SVM trained on NMF encodings.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NmfKernelArgs {
    #[arg(long = "nmf-kernel", value_enum, default_value_t = KernelKind::Linear)]
    pub nmf_kernel: KernelKind,
    #[arg(long = "nmf-sigma", default_value_t = 40.0)]
    pub nmf_sigma: f64,
    #[arg(long = "nmf-mlp-a", default_value_t = 1.0)]
    pub nmf_mlp_a: f64,
    #[arg(long = "nmf-mlp-b", default_value_t = -9.0, allow_hyphen_values = true)]
    pub nmf_mlp_b: f64,
    #[arg(long = "nmf-c", default_value_t = 1.0)]
    pub nmf_c: f64,
}

impl NmfKernelArgs {
    pub fn settings(&self) -> SvmSettings {
        SvmSettings {
            kernel: kernel_spec(self.nmf_kernel, self.nmf_sigma, self.nmf_mlp_a, self.nmf_mlp_b),
            c: self.nmf_c,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PreprocessArgs {
    /// Fraction of brightest pixels averaged into the normalization reference.
    #[arg(long = "top-fraction", default_value_t = 0.001)]
    pub top_fraction: f64,
    /// Bilateral spatial sigma in pixels.
    #[arg(long = "sigma-s", default_value_t = 2.0)]
    pub sigma_s: f64,
    /// Bilateral range sigma in normalized intensity.
    #[arg(long = "sigma-r", default_value_t = 0.1)]
    pub sigma_r: f64,
    /// Gray levels for quantization.
    #[arg(long, default_value_t = 16)]
    pub levels: usize,
}

impl PreprocessArgs {
    pub fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            top_fraction: self.top_fraction,
            bilateral: BilateralParams::new(self.sigma_s, self.sigma_r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmfSource {
    /// Preprocessed image resampled to `--nmf-side` squared pixels.
    Pixels,
    /// The 28 Haralick features.
    Haralick,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub preprocess: PreprocessArgs,
    /// GLCM pixel distance.
    #[arg(long, default_value_t = 1)]
    pub distance: usize,
    /// What the NMF basis is learned from.
    #[arg(long = "nmf-input", value_enum, default_value_t = NmfSource::Pixels)]
    pub nmf_input: NmfSource,
    /// Side length of the resampled image used as NMF input.
    #[arg(long = "nmf-side", default_value_t = 64)]
    pub nmf_side: usize,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.config(),
            levels: self.preprocess.levels,
            distance: self.distance,
            nmf_input: match self.nmf_input {
                NmfSource::Pixels => NmfInput::Pixels { side: self.nmf_side },
                NmfSource::Haralick => NmfInput::Haralick,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NmfArgs {
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long = "max-iters", default_value_t = 500)]
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    #[arg(long = "rel-tol", default_value_t = 1e-6)]
    pub rel_tol: f64,
}

impl NmfArgs {
    pub fn config(&self, seed: u64) -> NmfConfig {
        NmfConfig {
            rank: self.rank,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SeedArg {
    /// Random seed; defaults to $TEXTUREKIT_SEED, then 42.
    #[arg(long, env = "TEXTUREKIT_SEED", default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PreprocessCmd {
    /// Input image (PGM or PNG). Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output PGM. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    H,
    V,
    Ld,
    Rd,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GlcmCmd {
    /// Input image. Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output CSV. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DirectionArg::H)]
    pub direction: DirectionArg,
    #[arg(long, default_value_t = 1)]
    pub distance: usize,
    /// Input samples already are gray levels (e.g. output of `preprocess`).
    #[arg(long)]
    pub quantized: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Haralick,
    Nmf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExtractCmd {
    /// Image, image directory, manifest CSV, or (for `--features nmf` with a
    /// raw-input model) a feature CSV. Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output feature CSV. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FeatureKind::Haralick)]
    pub features: FeatureKind,
    /// NMF model file, needed for `--features nmf`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NmfTrainCmd {
    /// Image directory, manifest CSV, or feature CSV. Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output model JSON. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub nmf: NmfArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SvmTrainCmd {
    /// Labeled feature CSV. Required.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output model JSON. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainFusionCmd {
    /// Labeled image directory or manifest CSV. Required.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output fusion JSON; component models are written next to it. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub nmf_kernel: NmfKernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub nmf: NmfArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClassifyCmd {
    /// Fusion model JSON. Required.
    #[arg(long)]
    pub fusion: Option<PathBuf>,
    /// Image, image directory or manifest CSV. Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierArg {
    Haralick,
    Nmf,
    Concat,
    Multilevel,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LoocvCmd {
    /// Labeled image directory or manifest CSV. Required.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Multilevel)]
    pub classifier: ClassifierArg,
    /// Report JSON output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-sample predictions CSV output.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// SVG bar chart output.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Also evaluate all four classifiers and add the comparison to the report.
    #[arg(long)]
    pub compare: bool,
    /// Run folds one at a time.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub nmf_kernel: NmfKernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub nmf: NmfArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthCmd {
    /// Total number of images, split evenly between the classes.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// 0 gives well separated classes, 1 gives identical class recipes.
    #[arg(long, default_value_t = 0.0)]
    pub difficulty: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    /// Output directory. Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportCmd {
    /// Report JSON written by `loocv`. Required.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// SVG bar chart output.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsCmd {
    #[arg(long, default_value_t = 0)]
    pub tp: u64,
    #[arg(long, default_value_t = 0)]
    pub tn: u64,
    #[arg(long, default_value_t = 0)]
    pub fp: u64,
    #[arg(long = "fn", default_value_t = 0)]
    #[serde(rename = "fn")]
    pub fn_: u64,
}
