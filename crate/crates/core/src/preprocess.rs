//! Intensity normalization, edge-preserving denoising and gray-level quantization.
//!
//! The raw input is any nonnegative intensity raster. Normalization divides by a
//! robust reference (the mean of the brightest pixels) and clips at 1, the
//! bilateral filter removes noise without smearing edges, and quantization maps
//! `[0, 1]` intensities onto `N_g` discrete gray levels for co-occurrence counting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glcm::QuantizedImage;

pub const DEFAULT_TOP_FRACTION: f64 = 0.001;
pub const DEFAULT_SIGMA_SPATIAL: f64 = 2.0;
pub const DEFAULT_SIGMA_RANGE: f64 = 0.1;
pub const DEFAULT_LEVELS: usize = 16;

/// Grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "pixel intensities must be finite and nonnegative, found {p}"
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the image bounds.
    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }
}

/// Scale intensities by the mean of the brightest `top_fraction` of pixels and clip at 1.
///
/// With `n` pixels the reference averages the `max(1, ceil(top_fraction * n))`
/// largest values.
pub fn normalize_intensity(img: &GrayImage, top_fraction: f64) -> Result<GrayImage> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::param(
            "top_fraction",
            format!("must lie in (0, 1], got {top_fraction}"),
        ));
    }
    let n = img.pixels.len();
    // guard against 0.001 * 1000 landing a hair above 1.0
    let k = ((top_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);

    let mut sorted = img.pixels.clone();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let reference = sorted[..k].iter().sum::<f64>() / k as f64;
    if reference <= 0.0 {
        return Err(Error::DegenerateImage);
    }

    let pixels = img.pixels.iter().map(|&p| (p / reference).min(1.0)).collect();
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    pub radius: usize,
}

impl BilateralParams {
    /// Parameters with the conventional window radius `2 * ceil(sigma_spatial)`.
    pub fn new(sigma_spatial: f64, sigma_range: f64) -> Self {
        Self {
            sigma_spatial,
            sigma_range,
            radius: default_radius(sigma_spatial),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_spatial > 0.0 && self.sigma_spatial.is_finite()) {
            return Err(Error::param("sigma_spatial", "must be positive"));
        }
        if !(self.sigma_range > 0.0) {
            return Err(Error::param("sigma_range", "must be positive"));
        }
        if self.radius < 1 {
            return Err(Error::param("radius", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self::new(DEFAULT_SIGMA_SPATIAL, DEFAULT_SIGMA_RANGE)
    }
}

pub fn default_radius(sigma_spatial: f64) -> usize {
    (2.0 * sigma_spatial.ceil()).max(1.0) as usize
}

/// Edge-preserving smoothing: each output pixel is the normalized
/// spatial-Gaussian times range-Gaussian weighted mean of its square window.
/// Out-of-bounds window positions read the nearest edge pixel.
pub fn bilateral_filter(img: &GrayImage, params: &BilateralParams) -> Result<GrayImage> {
    params.validate()?;
    let r = params.radius as isize;
    let side = 2 * params.radius + 1;
    let spatial_denom = 2.0 * params.sigma_spatial * params.sigma_spatial;
    let range_denom = 2.0 * params.sigma_range * params.sigma_range;

    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / spatial_denom).exp());
        }
    }

    let width = img.width;
    let mut out = vec![0.0; img.pixels.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, slot) in row.iter_mut().enumerate() {
            let center = img.get(x, y);
            let mut acc = 0.0;
            let mut norm = 0.0;
            let mut tap = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = img.get_clamped(x as isize + dx, y as isize + dy);
                    let diff = v - center;
                    let w = spatial[tap] * (-(diff * diff) / range_denom).exp();
                    acc += w * v;
                    norm += w;
                    tap += 1;
                }
            }
            // the center tap has weight 1, so norm >= 1
            *slot = acc / norm;
        }
    });

    Ok(GrayImage {
        width: img.width,
        height: img.height,
        pixels: out,
    })
}

/// Map `[0, 1]` intensities to levels `min(floor(v * n_levels), n_levels - 1)`.
pub fn quantize(img: &GrayImage, n_levels: usize) -> Result<QuantizedImage> {
    if n_levels < 2 {
        return Err(Error::param("n_levels", format!("must be at least 2, got {n_levels}")));
    }
    if n_levels > u16::MAX as usize + 1 {
        return Err(Error::param("n_levels", "too many gray levels"));
    }
    let top = (n_levels - 1) as f64;
    let data = img
        .pixels
        .iter()
        .map(|&v| (v * n_levels as f64).floor().clamp(0.0, top) as u16)
        .collect();
    QuantizedImage::new(img.width, img.height, n_levels, data)
}

/// Area-averaging resample to `width x height`. Each output pixel averages the
/// block of source pixels it covers (at least one).
pub fn resample_area(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::param("size", "target dimensions must be positive"));
    }
    let span = |o: usize, out_len: usize, in_len: usize| {
        let start = o * in_len / out_len;
        let end = ((o + 1) * in_len / out_len).max(start + 1).min(in_len);
        (start.min(in_len - 1), end)
    };
    let mut pixels = Vec::with_capacity(width * height);
    for oy in 0..height {
        let (y0, y1) = span(oy, height, img.height);
        for ox in 0..width {
            let (x0, x1) = span(ox, width, img.width);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += img.get(x, y);
                }
            }
            pixels.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Settings for the full preprocessing chain (normalize, then denoise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub top_fraction: f64,
    pub bilateral: BilateralParams,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            top_fraction: DEFAULT_TOP_FRACTION,
            bilateral: BilateralParams::default(),
        }
    }
}

pub fn preprocess(img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
    let normalized = normalize_intensity(img, cfg.top_fraction)?;
    bilateral_filter(&normalized, &cfg.bilateral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(width: usize, height: usize, pixels: Vec<f64>) -> GrayImage {
        GrayImage::new(width, height, pixels).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn constant_image_normalizes_to_one() {
        let img = image(5, 4, vec![7.0; 20]);
        let out = normalize_intensity(&img, DEFAULT_TOP_FRACTION).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn single_hot_pixel_sets_reference() {
        let mut pixels = vec![10.0; 1000];
        pixels[17] = 100.0;
        let out = normalize_intensity(&image(100, 10, pixels), 0.001).unwrap();
        assert_eq!(out.pixels()[17], 1.0);
        for (i, &p) in out.pixels().iter().enumerate() {
            if i != 17 {
                assert!((p - 0.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn top_two_reference_clips_brightest() {
        let pixels: Vec<f64> = (1..=10).map(f64::from).collect();
        let out = normalize_intensity(&image(10, 1, pixels), 0.2).unwrap();
        assert_eq!(out.pixels()[9], 1.0);
        assert!((out.pixels()[8] - 9.0 / 9.5).abs() < 1e-15);
        assert!((out.pixels()[0] - 1.0 / 9.5).abs() < 1e-15);
    }

    #[test]
    fn zero_image_is_degenerate() {
        let err = normalize_intensity(&image(3, 3, vec![0.0; 9]), 0.001).unwrap_err();
        assert!(matches!(err, Error::DegenerateImage));
        assert_eq!(err.to_string(), "degenerate image (zero reference)");
    }

    #[test]
    fn top_fraction_out_of_range() {
        let img = image(2, 2, vec![1.0; 4]);
        assert!(matches!(
            normalize_intensity(&img, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            normalize_intensity(&img, 1.5),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(normalize_intensity(&img, 1.0).is_ok());
    }

    #[test]
    fn bilateral_keeps_constant_image() {
        let img = image(6, 5, vec![0.42; 30]);
        let out = bilateral_filter(&img, &BilateralParams::default()).unwrap();
        for &p in out.pixels() {
            assert!((p - 0.42).abs() < 1e-15);
        }
    }

    #[test]
    fn bilateral_impulse_stays_local() {
        let mut pixels = vec![0.0; 15 * 15];
        pixels[7 * 15 + 7] = 1.0;
        let img = image(15, 15, pixels);
        let params = BilateralParams {
            sigma_spatial: 2.0,
            sigma_range: 0.05,
            radius: 4,
        };
        let out = bilateral_filter(&img, &params).unwrap();
        // every neighbor of the impulse differs by 1.0, so the range kernel leaves it alone
        assert!(out.get(7, 7) <= 1.0);
        for y in 0..15 {
            for x in 0..15 {
                if (x, y) != (7, 7) {
                    assert!(out.get(x, y).abs() < 1e-6, "({x},{y}) = {}", out.get(x, y));
                }
            }
        }
    }

    #[test]
    fn bilateral_parameter_validation() {
        let img = image(2, 2, vec![0.5; 4]);
        for params in [
            BilateralParams {
                sigma_spatial: 0.0,
                sigma_range: 0.1,
                radius: 2,
            },
            BilateralParams {
                sigma_spatial: 1.0,
                sigma_range: -1.0,
                radius: 2,
            },
            BilateralParams {
                sigma_spatial: 1.0,
                sigma_range: 0.1,
                radius: 0,
            },
        ] {
            assert!(matches!(
                bilateral_filter(&img, &params),
                Err(Error::InvalidParameter { .. })
            ));
        }
        assert_eq!(BilateralParams::default().radius, 4);
    }

    #[test]
    fn quantize_endpoints_and_midpoint() {
        let img = image(3, 1, vec![0.0, 1.0, 0.5]);
        let q = quantize(&img, 8).unwrap();
        assert_eq!(q.data(), &[0, 7, 4]);
        assert!(matches!(quantize(&img, 1), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn quantize_constant_image_single_level() {
        let q = quantize(&image(4, 4, vec![0.3; 16]), 16).unwrap();
        assert!(q.data().iter().all(|&l| l == q.data()[0]));
    }

    #[test]
    fn resample_area_averages_blocks() {
        let img = GrayImage::from_fn(4, 4, |x, y| (x / 2 + 2 * (y / 2)) as f64).unwrap();
        let small = resample_area(&img, 2, 2).unwrap();
        assert_eq!(small.pixels(), &[0.0, 1.0, 2.0, 3.0]);
        let same = resample_area(&img, 4, 4).unwrap();
        assert_eq!(same, img);
        // upsampling repeats pixels
        let big = resample_area(&small, 4, 4).unwrap();
        assert_eq!(big, img);
    }

    proptest! {
        #[test]
        fn normalize_scale_invariant(
            pixels in prop::collection::vec(0.0f64..50.0, 16),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(pixels.iter().any(|&p| p > 1e-6));
            let img = image(4, 4, pixels.clone());
            let scaled = image(4, 4, pixels.iter().map(|p| p * c).collect());
            let a = normalize_intensity(&img, 0.1).unwrap();
            let b = normalize_intensity(&scaled, 0.1).unwrap();
            for (x, y) in a.pixels().iter().zip(b.pixels()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn normalize_idempotent_without_clipping(pixels in prop::collection::vec(0.0f64..50.0, 25)) {
            prop_assume!(pixels.iter().any(|&p| p > 1e-6));
            // k = 1: the reference is the maximum, so nothing is clipped
            let once = normalize_intensity(&image(5, 5, pixels), 0.01).unwrap();
            let twice = normalize_intensity(&once, 0.01).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalized_range_is_unit(pixels in prop::collection::vec(0.0f64..50.0, 20), frac in 0.01f64..1.0) {
            prop_assume!(pixels.iter().any(|&p| p > 1e-6));
            let out = normalize_intensity(&image(5, 4, pixels), frac).unwrap();
            let (lo, hi) = out.min_max();
            prop_assert!(lo >= 0.0);
            prop_assert_eq!(hi, 1.0);
        }

        #[test]
        fn bilateral_is_convex_combination(
            pixels in prop::collection::vec(0.0f64..1.0, 36),
            ss in 0.5f64..3.0,
            sr in 0.01f64..1.0,
        ) {
            let img = image(6, 6, pixels);
            let (lo, hi) = img.min_max();
            let out = bilateral_filter(&img, &BilateralParams::new(ss, sr)).unwrap();
            for &p in out.pixels() {
                prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
            }
        }

        #[test]
        fn quantize_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, levels in 2usize..64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q = quantize(&image(2, 1, vec![lo, hi]), levels).unwrap();
            prop_assert!(q.data()[0] <= q.data()[1]);
            prop_assert!((q.data()[1] as usize) < levels);
        }
    }
}
