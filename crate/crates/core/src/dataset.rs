//! Synthetic two-class texture generator.
//!
//! Class "nonstroke" is smooth correlated noise, class "stroke" is nearly white
//! noise with a fixed checkerboard overlay. A difficulty knob pulls both
//! parameter sets toward their midpoint; at difficulty 1 the classes are drawn
//! from the same distribution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{write_manifest, write_pgm, ManifestEntry};
use crate::preprocess::GrayImage;
use crate::svm::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    /// Gaussian blur applied to white noise, in pixels.
    pub blur_sigma: f64,
    /// Weight of the checkerboard in the final mix, in `[0, 1]`.
    pub checker_amplitude: f64,
}

impl TextureParams {
    fn lerp(&self, other: &TextureParams, t: f64) -> TextureParams {
        TextureParams {
            blur_sigma: self.blur_sigma + t * (other.blur_sigma - self.blur_sigma),
            checker_amplitude: self.checker_amplitude + t * (other.checker_amplitude - self.checker_amplitude),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub size: usize,
    pub seed: u64,
    /// Negative ("nonstroke") class at difficulty 0.
    pub smooth: TextureParams,
    /// Positive ("stroke") class at difficulty 0.
    pub rough: TextureParams,
    /// Checkerboard period in pixels (two squares).
    pub checker_period: usize,
    pub difficulty: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_class: 10,
            size: 128,
            seed: 42,
            smooth: TextureParams {
                blur_sigma: 4.0,
                checker_amplitude: 0.0,
            },
            rough: TextureParams {
                blur_sigma: 0.6,
                checker_amplitude: 0.25,
            },
            checker_period: 16,
            difficulty: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 2 {
            return Err(Error::param("n", "need at least 2 images per class"));
        }
        if self.size < 2 {
            return Err(Error::param("size", "images must be at least 2x2"));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::param("difficulty", "must lie in [0, 1]"));
        }
        if self.checker_period < 2 {
            return Err(Error::param("checker_period", "must be at least 2"));
        }
        for p in [self.smooth, self.rough] {
            if !(p.blur_sigma >= 0.0) || !(0.0..=1.0).contains(&p.checker_amplitude) {
                return Err(Error::param(
                    "texture",
                    "blur must be >= 0 and checker amplitude in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// Texture parameters actually used for `label` at the configured difficulty.
    pub fn params_for(&self, label: Label) -> TextureParams {
        let mid = self.smooth.lerp(&self.rough, 0.5);
        match label {
            Label::Negative => self.smooth.lerp(&mid, self.difficulty),
            Label::Positive => self.rough.lerp(&mid, self.difficulty),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub label: Label,
    pub image: GrayImage,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge clamping.
fn blur(pixels: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    if sigma < 1e-3 {
        return pixels.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; pixels.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * pixels[y * size + clamp(x as isize + t as isize - r)])
                .sum();
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[clamp(y as isize + t as isize - r) * size + x])
                .sum();
        }
    }
    out
}

fn texture(size: usize, params: &TextureParams, period: usize, seed: u64) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.gen::<f64>()).collect();
    let smooth = blur(&noise, size, params.blur_sigma);

    let (lo, hi) = smooth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let half = (period / 2).max(1);
    let amp = params.checker_amplitude;
    let pixels = smooth
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (x, y) = (i % size, i / size);
            let checker = ((x / half + y / half) % 2) as f64;
            ((1.0 - amp) * (v - lo) / span + amp * checker).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(size, size, pixels)
}

/// Generate `2 * n_per_class` images, alternating negative and positive labels.
/// Image `i` uses the sub-seed `seed ^ i`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SyntheticSample>> {
    cfg.validate()?;
    (0..2 * cfg.n_per_class)
        .into_par_iter()
        .map(|i| {
            let label = if i % 2 == 0 { Label::Negative } else { Label::Positive };
            let params = cfg.params_for(label);
            let image = texture(cfg.size, &params, cfg.checker_period, cfg.seed ^ i as u64)?;
            Ok(SyntheticSample {
                id: format!("synth_{i:04}"),
                label,
                image,
            })
        })
        .collect()
}

/// Write each image as `<id>.pgm` plus `manifest.csv` into `dir`.
pub fn write_dataset(samples: &[SyntheticSample], dir: &Path) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let file = format!("{}.pgm", s.id);
        write_pgm(&dir.join(&file), &s.image)?;
        entries.push(ManifestEntry {
            sample_id: s.id.clone(),
            path: file.into(),
            label: Some(s.label),
        });
    }
    write_manifest(&dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_per_class: 3,
            size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_and_in_range() {
        let samples = generate(&small()).unwrap();
        assert_eq!(samples.len(), 6);
        let pos = samples.iter().filter(|s| s.label == Label::Positive).count();
        assert_eq!(pos, 3);
        for s in &samples {
            let (lo, hi) = s.image.min_max();
            assert!(lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn full_difficulty_merges_parameters() {
        let cfg = SynthConfig {
            difficulty: 1.0,
            ..small()
        };
        assert_eq!(cfg.params_for(Label::Positive), cfg.params_for(Label::Negative));
    }

    #[test]
    fn validation() {
        assert!(generate(&SynthConfig {
            n_per_class: 1,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            difficulty: 1.5,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn blur_preserves_constant() {
        let out = blur(&vec![0.3; 64], 8, 2.0);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}
