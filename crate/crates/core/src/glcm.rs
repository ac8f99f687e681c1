//! Gray-tone spatial dependence (co-occurrence) matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image whose pixels are gray-level indices in `0..levels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    width: usize,
    height: usize,
    levels: usize,
    data: Vec<u16>,
}

impl QuantizedImage {
    pub fn new(width: usize, height: usize, levels: usize, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("quantized image must be nonempty".into()));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        if levels < 1 {
            return Err(Error::param("levels", "must be positive"));
        }
        if let Some(&l) = data.iter().find(|&&l| l as usize >= levels) {
            return Err(Error::InvalidInput(format!("gray level {l} out of range 0..{levels}")));
        }
        Ok(Self {
            width,
            height,
            levels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }
}

/// Pixel adjacency used to pair pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Horizontal,
    Vertical,
    LeftDiagonal,
    RightDiagonal,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Horizontal,
        Direction::Vertical,
        Direction::LeftDiagonal,
        Direction::RightDiagonal,
    ];

    /// `(d_row, d_col)` step to the neighbor.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::Horizontal => (0, 1),
            Direction::Vertical => (1, 0),
            Direction::LeftDiagonal => (1, -1),
            Direction::RightDiagonal => (1, 1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Horizontal => "h",
            Direction::Vertical => "v",
            Direction::LeftDiagonal => "ld",
            Direction::RightDiagonal => "rd",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" | "horizontal" => Ok(Direction::Horizontal),
            "v" | "vertical" => Ok(Direction::Vertical),
            "ld" | "left-diagonal" => Ok(Direction::LeftDiagonal),
            "rd" | "right-diagonal" => Ok(Direction::RightDiagonal),
            other => Err(Error::param("direction", format!("unknown direction `{other}`"))),
        }
    }
}

/// Symmetric co-occurrence counts for one direction plus their normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    counts: Vec<u64>,
    probs: Vec<f64>,
    total: u64,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Row-major `levels x levels` counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Row-major `levels x levels` joint probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.levels + j]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Probability matrix as CSV, one matrix row per line.
    pub fn probs_csv(&self) -> String {
        let mut out = String::new();
        for row in self.probs.chunks(self.levels) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Count gray-level pairs `(p, q)` where `q` sits `distance` steps from `p` along
/// `dir`. Each pair is tallied in both orders, so the counts are symmetric.
pub fn compute_glcm(img: &QuantizedImage, dir: Direction, distance: usize) -> Result<Glcm> {
    if distance == 0 {
        return Err(Error::param("distance", "must be at least 1"));
    }
    let n = img.levels;
    let (dr, dc) = dir.offset();
    let (dr, dc) = (dr * distance as isize, dc * distance as isize);
    let (h, w) = (img.height as isize, img.width as isize);

    let row_range = 0.max(-dr)..h.min(h - dr);
    let col_range = 0.max(-dc)..w.min(w - dc);
    if row_range.is_empty() || col_range.is_empty() {
        return Err(Error::EmptyCooccurrence);
    }

    let mut counts = vec![0u64; n * n];
    for r in row_range {
        for c in col_range.clone() {
            let a = img.get(r as usize, c as usize) as usize;
            let b = img.get((r + dr) as usize, (c + dc) as usize) as usize;
            counts[a * n + b] += 1;
            counts[b * n + a] += 1;
        }
    }

    let total: u64 = counts.iter().sum();
    let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Glcm {
        levels: n,
        counts,
        probs,
        total,
    })
}

/// The four directional matrices in `Direction::ALL` order.
pub fn glcm_all_directions(img: &QuantizedImage, distance: usize) -> Result<[Glcm; 4]> {
    let [h, v, ld, rd] = Direction::ALL;
    Ok([
        compute_glcm(img, h, distance)?,
        compute_glcm(img, v, distance)?,
        compute_glcm(img, ld, distance)?,
        compute_glcm(img, rd, distance)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qimg(width: usize, height: usize, levels: usize, data: &[u16]) -> QuantizedImage {
        QuantizedImage::new(width, height, levels, data.to_vec()).unwrap()
    }

    #[test]
    fn single_pair_counted_both_ways() {
        let g = compute_glcm(&qimg(2, 1, 2, &[0, 1]), Direction::Horizontal, 1).unwrap();
        assert_eq!(g.counts(), &[0, 1, 1, 0]);
        assert_eq!(g.probs(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn constant_image_concentrates_mass() {
        let img = qimg(4, 4, 4, &[3; 16]);
        for g in glcm_all_directions(&img, 1).unwrap() {
            assert_eq!(g.prob(3, 3), 1.0);
            assert_eq!(g.probs().iter().filter(|&&p| p != 0.0).count(), 1);
        }
    }

    #[test]
    fn too_small_for_direction() {
        let img = qimg(1, 3, 2, &[0, 1, 0]);
        assert!(matches!(
            compute_glcm(&img, Direction::Horizontal, 1),
            Err(Error::EmptyCooccurrence)
        ));
        assert!(compute_glcm(&img, Direction::Vertical, 1).is_ok());
        assert!(matches!(
            compute_glcm(&img, Direction::Vertical, 3),
            Err(Error::EmptyCooccurrence)
        ));
        assert_eq!(
            compute_glcm(&img, Direction::LeftDiagonal, 1).unwrap_err().to_string(),
            "empty co-occurrence domain"
        );
    }

    #[test]
    fn horizontal_total_matches_pair_count() {
        let img = qimg(5, 3, 3, &[0, 1, 2, 0, 1, 2, 2, 1, 0, 0, 1, 1, 2, 2, 0]);
        let g = compute_glcm(&img, Direction::Horizontal, 1).unwrap();
        assert_eq!(g.total(), 2 * 3 * 4);
        let d = compute_glcm(&img, Direction::RightDiagonal, 1).unwrap();
        assert_eq!(d.total(), 2 * 2 * 4);
    }

    #[test]
    fn rejects_out_of_range_levels() {
        assert!(QuantizedImage::new(2, 1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn direction_parsing() {
        for d in Direction::ALL {
            assert_eq!(d.to_string().parse::<Direction>().unwrap(), d);
        }
        assert!("diag".parse::<Direction>().is_err());
    }

    #[test]
    fn csv_rows() {
        let g = compute_glcm(&qimg(2, 1, 2, &[0, 1]), Direction::Horizontal, 1).unwrap();
        assert_eq!(g.probs_csv(), "0,0.5\n0.5,0\n");
    }
}
