//! Versioned JSON persistence. Every artifact is wrapped in an envelope
//! carrying a schema version, its kind and a SHA-256 of the payload.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{NmfEncoder, NmfInput, PipelineConfig, SvmClassifier};
use crate::fusion::{FusionModel, TieRule};
use crate::imageio::{read_file, write_atomic};
use crate::nmf::{NmfConfig, NmfModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Provenance of an output file. Kept outside the hashed payload so that
/// reruns with the same inputs produce identical payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub tool_version: String,
    /// Input path to SHA-256 of its bytes.
    pub input_hashes: BTreeMap<String, String>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: Value) -> Self {
        Self {
            command: command.into(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes: BTreeMap::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = hash_bytes(&read_file(path)?);
        self.input_hashes.insert(path.display().to_string(), digest);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEnvelope {
    pub schema_version: u32,
    pub artifact_kind: String,
    pub payload: Value,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON encoding of `payload` (object keys sorted).
pub fn content_hash(payload: &Value) -> Result<String> {
    Ok(hash_bytes(&serde_json::to_vec(payload)?))
}

pub trait Artifact: Sized {
    const KIND: &'static str;

    fn to_payload(&self) -> Result<Value>;

    /// Rebuild from a payload, checking invariants.
    fn from_payload(payload: Value) -> Result<Self>;
}

pub fn to_envelope<A: Artifact>(artifact: &A, manifest: Option<RunManifest>) -> Result<ArtifactEnvelope> {
    let payload = artifact.to_payload()?;
    Ok(ArtifactEnvelope {
        schema_version: SCHEMA_VERSION,
        artifact_kind: A::KIND.to_string(),
        content_hash: content_hash(&payload)?,
        payload,
        manifest,
    })
}

pub fn from_envelope<A: Artifact>(env: ArtifactEnvelope) -> Result<A> {
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: env.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if env.artifact_kind != A::KIND {
        return Err(Error::validation(
            "artifact_kind",
            format!("expected `{}`, found `{}`", A::KIND, env.artifact_kind),
        ));
    }
    let computed = content_hash(&env.payload)?;
    if computed != env.content_hash {
        return Err(Error::HashMismatch {
            stored: env.content_hash,
            computed,
        });
    }
    A::from_payload(env.payload)
}

pub fn to_json<A: Artifact>(artifact: &A, manifest: Option<RunManifest>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_envelope(artifact, manifest)?)?)
}

pub fn from_json<A: Artifact>(text: &str) -> Result<A> {
    parse_envelope(text).and_then(from_envelope)
}

fn parse_envelope(text: &str) -> Result<ArtifactEnvelope> {
    // check the version before the rest of the envelope so old or future files
    // report the version rather than a missing field
    let raw: Value = serde_json::from_str(text)?;
    match raw.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::UnsupportedVersion {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(Error::validation("schema_version", "missing or not an integer")),
    }
    Ok(serde_json::from_value(raw)?)
}

pub fn save<A: Artifact>(path: &Path, artifact: &A, manifest: Option<RunManifest>) -> Result<()> {
    let mut text = to_json(artifact, manifest)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load<A: Artifact>(path: &Path) -> Result<A> {
    let bytes = read_file(path)?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| Error::InvalidInput(format!("{} is not UTF-8", path.display())))?;
    from_json(text)
}

fn payload_of<T: Serialize>(value: &T) -> Result<Value> {
    Ok(serde_json::to_value(value)?)
}

fn parse_payload<T: DeserializeOwned>(payload: Value) -> Result<T> {
    Ok(serde_json::from_value(payload)?)
}

impl Artifact for SvmClassifier {
    const KIND: &'static str = "svm";

    fn to_payload(&self) -> Result<Value> {
        payload_of(self)
    }

    fn from_payload(payload: Value) -> Result<Self> {
        let model: SvmClassifier = parse_payload(payload)?;
        model.validate()?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct NmfPayload {
    rank: usize,
    rows: usize,
    /// Row-major `rows x rank`.
    basis: Vec<f64>,
    config: NmfConfig,
    train_residual: f64,
    layout: NmfInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offsets: Option<Vec<f64>>,
}

impl Artifact for NmfEncoder {
    const KIND: &'static str = "nmf";

    fn to_payload(&self) -> Result<Value> {
        let b = self.model.basis();
        let basis = (0..b.nrows())
            .flat_map(|i| b.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        payload_of(&NmfPayload {
            rank: self.model.rank(),
            rows: self.model.rows(),
            basis,
            config: *self.model.config(),
            train_residual: self.model.train_residual(),
            layout: self.layout,
            offsets: self.offsets.clone(),
        })
    }

    fn from_payload(payload: Value) -> Result<Self> {
        let p: NmfPayload = parse_payload(payload)?;
        if p.rank != p.config.rank {
            return Err(Error::validation("rank", "differs from config.rank"));
        }
        if p.basis.len() != p.rows * p.rank {
            return Err(Error::validation(
                "basis",
                format!("expected {} entries, found {}", p.rows * p.rank, p.basis.len()),
            ));
        }
        if let Some(off) = &p.offsets {
            if off.len() != p.rows || off.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("offsets", "must hold one finite value per row"));
            }
        }
        if let NmfInput::Pixels { side } = p.layout {
            if side * side != p.rows {
                return Err(Error::validation("layout", "pixel side does not match basis rows"));
            }
        }
        let basis = DMatrix::from_row_slice(p.rows, p.rank, &p.basis);
        Ok(NmfEncoder {
            layout: p.layout,
            offsets: p.offsets,
            model: NmfModel::from_parts(basis, p.train_residual, p.config)?,
        })
    }
}

/// On-disk fusion bundle: paths of the component models plus shared settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionBundle {
    pub haralick_model: PathBuf,
    pub nmf_model: PathBuf,
    pub nmf_encoder: PathBuf,
    pub pipeline: PipelineConfig,
    pub tie_rule: TieRule,
}

impl Artifact for FusionBundle {
    const KIND: &'static str = "fusion";

    fn to_payload(&self) -> Result<Value> {
        payload_of(self)
    }

    fn from_payload(payload: Value) -> Result<Self> {
        parse_payload(payload)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("model");
    let stem = name
        .strip_suffix(".fusion.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    PathBuf::from(format!("{stem}{suffix}"))
}

/// Write a fusion model as a bundle at `path` plus three sibling model files.
pub fn save_fusion(path: &Path, model: &FusionModel, manifest: Option<RunManifest>) -> Result<FusionBundle> {
    let dir = path.parent().unwrap_or(Path::new(""));
    let bundle = FusionBundle {
        haralick_model: sibling(path, ".haralick.svm.json"),
        nmf_model: sibling(path, ".nmf.svm.json"),
        nmf_encoder: sibling(path, ".nmf.json"),
        pipeline: model.pipeline,
        tie_rule: model.tie_rule,
    };
    save(&dir.join(&bundle.haralick_model), &model.haralick, manifest.clone())?;
    save(&dir.join(&bundle.nmf_model), &model.nmf, manifest.clone())?;
    save(&dir.join(&bundle.nmf_encoder), &model.encoder, manifest.clone())?;
    save(path, &bundle, manifest)?;
    Ok(bundle)
}

/// Load a bundle and the models it references (relative to the bundle's directory).
pub fn load_fusion(path: &Path) -> Result<FusionModel> {
    let bundle: FusionBundle = load(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let haralick: SvmClassifier = load(&dir.join(&bundle.haralick_model))?;
    let nmf: SvmClassifier = load(&dir.join(&bundle.nmf_model))?;
    let encoder: NmfEncoder = load(&dir.join(&bundle.nmf_encoder))?;
    if nmf.dim() != encoder.rank() {
        return Err(Error::validation(
            "nmf_model",
            "dimension differs from the encoder rank",
        ));
    }
    if haralick.dim() != crate::haralick::NUM_FEATURES * 2 {
        return Err(Error::validation("haralick_model", "expects 28 Haralick features"));
    }
    Ok(FusionModel {
        pipeline: bundle.pipeline,
        haralick,
        nmf,
        encoder,
        tie_rule: bundle.tie_rule,
    })
}
