//! Grayscale image files (PGM P2/P5, PNG), dataset manifests and feature CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::glcm::QuantizedImage;
use crate::preprocess::GrayImage;
use crate::svm::Label;

/// Write `bytes` to a sibling temp file and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn is_pgm(bytes: &[u8]) -> bool {
    bytes.starts_with(b"P2") || bytes.starts_with(b"P5")
}

/// Header tokenizer that skips whitespace and `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::InvalidInput("truncated PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::InvalidInput("non-ASCII PGM header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::InvalidInput(format!("bad PGM {what} `{tok}`")))
    }
}

/// Parse an 8- or 16-bit PGM. Pixel values are returned as raw sample values.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?.to_string();
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::InvalidInput(format!("PGM maxval {maxval} out of range")));
    }
    let n = width * height;
    let pixels: Vec<f64> = match magic.as_str() {
        "P2" => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(h.number("sample")? as f64);
            }
            out
        }
        "P5" => {
            // exactly one whitespace byte separates maxval from the raster
            let data = bytes.get(h.pos + 1..).unwrap_or(&[]);
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            if data.len() < need {
                return Err(Error::InvalidInput(format!(
                    "PGM raster truncated: need {need} bytes, have {}",
                    data.len()
                )));
            }
            if wide {
                data[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                    .collect()
            } else {
                data[..n].iter().map(|&b| b as f64).collect()
            }
        }
        other => return Err(Error::InvalidInput(format!("unsupported PGM magic `{other}`"))),
    };
    if pixels.iter().any(|&v| v > maxval as f64) {
        return Err(Error::InvalidInput("PGM sample exceeds maxval".into()));
    }
    GrayImage::new(width, height, pixels)
}

/// Binary 16-bit PGM. Intensities are clamped to `[0, 1]` and scaled to 65535.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(2 * img.pixels().len());
    for &v in img.pixels() {
        let s = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Binary PGM holding gray levels as samples, `maxval = levels - 1`.
pub fn encode_levels_pgm(img: &QuantizedImage) -> Vec<u8> {
    let maxval = img.levels() - 1;
    let mut out = format!("P5\n{} {}\n{maxval}\n", img.width(), img.height()).into_bytes();
    for &v in img.data() {
        if maxval > 255 {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.push(v as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

/// Read a PGM or PNG image as grayscale.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = read_file(path)?;
    if is_pgm(&bytes) {
        return decode_pgm(&bytes);
    }
    let decoded = image::load_from_memory(&bytes)?.into_luma16();
    let (w, h) = decoded.dimensions();
    let pixels = decoded.into_raw().into_iter().map(f64::from).collect();
    GrayImage::new(w as usize, h as usize, pixels)
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("pgm" | "png")
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub sample_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: Option<Label>,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "path", "label"])?;
    for e in entries {
        let label = e.label.map(Label::tag).unwrap_or("");
        w.write_record([e.sample_id.as_str(), &e.path.to_string_lossy(), label])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let bytes = read_file(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_col, path_col) = match (col("sample_id"), col("path")) {
        (Some(i), Some(p)) => (i, p),
        _ => return Err(Error::validation("manifest", "needs `sample_id` and `path` columns")),
    };
    let label_col = col("label");
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = match label_col.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse()?),
        };
        let rel = PathBuf::from(rec.get(path_col).unwrap_or("").trim());
        out.push(ManifestEntry {
            sample_id: rec.get(id_col).unwrap_or("").trim().to_string(),
            path: if rel.is_absolute() { rel } else { base.join(rel) },
            label,
        });
    }
    Ok(out)
}

/// Resolve `--data`: a manifest CSV, a directory containing `manifest.csv`,
/// or a plain directory of images (unlabeled, sorted by file name).
pub fn resolve_dataset(path: &Path) -> Result<Vec<ManifestEntry>> {
    if path.is_dir() {
        let manifest = path.join("manifest.csv");
        if manifest.is_file() {
            return read_manifest(&manifest);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        return Ok(files
            .into_iter()
            .map(|p| ManifestEntry {
                sample_id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                path: p,
                label: None,
            })
            .collect());
    }
    if is_image_file(path) {
        return Ok(vec![ManifestEntry {
            sample_id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            path: path.to_path_buf(),
            label: None,
        }]);
    }
    read_manifest(path)
}

/// Load every image named by a manifest.
pub fn load_images(entries: &[ManifestEntry]) -> Result<Vec<(String, Option<Label>, GrayImage)>> {
    entries
        .iter()
        .map(|e| Ok((e.sample_id.clone(), e.label, read_image(&e.path)?)))
        .collect()
}

/// Rows of a feature CSV: `sample_id`, optional `label`, then numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub labels: Vec<Option<Label>>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for ((id, label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let mut rec = vec![id.clone(), label.map(Label::tag).unwrap_or("").to_string()];
            // Display for f64 is the shortest string that parses back to the same value
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::io("<feature csv>", e.into_error()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let headers = r.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("sample_id") {
            return Err(Error::validation(
                "sample_id",
                "first feature CSV column must be `sample_id`",
            ));
        }
        let has_label = headers.get(1).map(str::trim) == Some("label");
        let first = if has_label { 2 } else { 1 };
        let columns: Vec<String> = headers.iter().skip(first).map(|h| h.trim().to_string()).collect();
        if columns.is_empty() {
            return Err(Error::validation("columns", "feature CSV has no feature columns"));
        }
        let mut table = FeatureTable {
            columns,
            ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            table.ids.push(rec.get(0).unwrap_or("").trim().to_string());
            table
                .labels
                .push(match rec.get(1).filter(|_| has_label).map(str::trim) {
                    None | Some("") => None,
                    Some(s) => Some(s.parse()?),
                });
            let row = rec
                .iter()
                .skip(first)
                .zip(&table.columns)
                .map(|(v, name)| {
                    let x: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::validation(name.clone(), format!("not a number: `{v}`")))?;
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(Error::validation(name.clone(), "non-finite value"))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != table.columns.len() {
                return Err(Error::DimensionMismatch {
                    expected: table.columns.len(),
                    found: row.len(),
                });
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_pgm_reads_back_as_levels() {
        for levels in [16, 300] {
            let data: Vec<u16> = (0..6).map(|i| (i * 53 % levels) as u16).collect();
            let q = QuantizedImage::new(3, 2, levels, data.clone()).unwrap();
            let back = decode_pgm(&encode_levels_pgm(&q)).unwrap();
            let got: Vec<u16> = back.pixels().iter().map(|&v| v as u16).collect();
            assert_eq!(got, data);
        }
    }

    #[test]
    fn pgm_ascii_with_comments() {
        let src = b"P2\n# a comment\n3 2\n# another\n255\n0 128 255\n1 2 3\n";
        let img = decode_pgm(src).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[0.0, 128.0, 255.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn pgm_binary_8_and_16_bit() {
        let mut src = b"P5 2 2 255\n".to_vec();
        src.extend_from_slice(&[0, 10, 20, 255]);
        assert_eq!(decode_pgm(&src).unwrap().pixels(), &[0.0, 10.0, 20.0, 255.0]);

        let mut src = b"P5\n2 1\n65535\n".to_vec();
        src.extend_from_slice(&[0x01, 0x00, 0xff, 0xff]);
        assert_eq!(decode_pgm(&src).unwrap().pixels(), &[256.0, 65535.0]);
    }

    #[test]
    fn pgm_rejects_truncated_raster() {
        let mut src = b"P5 2 2 255\n".to_vec();
        src.extend_from_slice(&[1, 2, 3]);
        assert!(decode_pgm(&src).is_err());
        assert!(decode_pgm(b"P6 1 1 255\n\0\0\0").is_err());
    }

    #[test]
    fn pgm_round_trip_at_16_bit_precision() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 4 + y) as f64 / 19.0).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b / 65535.0).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn feature_table_round_trip() {
        let t = FeatureTable {
            columns: vec!["a".into(), "b".into()],
            ids: vec!["x".into(), "y".into()],
            labels: vec![Some(Label::Positive), None],
            rows: vec![vec![0.1 + 0.2, -1e-300], vec![std::f64::consts::PI, 7.0]],
        };
        let back = FeatureTable::from_csv(&t.to_csv().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn feature_table_names_bad_column() {
        let err = FeatureTable::from_csv(b"sample_id,label,f1_mean\ns,stroke,abc\n").unwrap_err();
        assert!(err.to_string().contains("f1_mean"));
    }
}
