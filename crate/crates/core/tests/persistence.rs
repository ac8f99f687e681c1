mod common;

use rand::Rng;
use texturekit::dataset::{generate, write_dataset, SynthConfig};
use texturekit::eval::{loocv, ClassifierKind, EvalConfig};
use texturekit::features::{extract_all, NmfEncoder, NmfInput, PipelineConfig, SampleFeatures, SvmSettings};
use texturekit::fusion::FusionModel;
use texturekit::imageio::{load_images, read_image, resolve_dataset};
use texturekit::modelio::{load, load_fusion, save, save_fusion, RunManifest};
use texturekit::nmf::NmfConfig;
use texturekit::report::LoocvReport;
use texturekit::svm::KernelSpec;
use texturekit::Error;

fn pipeline() -> PipelineConfig {
    PipelineConfig {
        nmf_input: NmfInput::Pixels { side: 16 },
        ..Default::default()
    }
}

fn features() -> Vec<SampleFeatures> {
    let cfg = SynthConfig {
        n_per_class: 6,
        size: 40,
        difficulty: 0.5,
        ..Default::default()
    };
    let items: Vec<_> = generate(&cfg)
        .unwrap()
        .into_iter()
        .map(|s| (s.id, Some(s.label), s.image))
        .collect();
    extract_all(&items, &pipeline()).unwrap()
}

fn fusion_model(data: &[SampleFeatures]) -> FusionModel {
    let refs: Vec<&SampleFeatures> = data.iter().collect();
    FusionModel::train(
        &refs,
        pipeline(),
        &SvmSettings::default(),
        &SvmSettings {
            kernel: KernelSpec::Rbf { sigma: 2.0 },
            c: 1.0,
        },
        &NmfConfig {
            rank: 4,
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn fusion_round_trip_preserves_classification() {
    let data = features();
    let model = fusion_model(&data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.fusion.json");
    save_fusion(&path, &model, Some(RunManifest::new("test", serde_json::Value::Null))).unwrap();
    let loaded = load_fusion(&path).unwrap();
    assert_eq!(loaded, model);

    let mut rng = common::rng(1);
    for i in 0..100 {
        let base = &data[i % data.len()];
        let sample = SampleFeatures {
            id: format!("r{i}"),
            label: None,
            haralick: base.haralick.iter().map(|v| v * rng.gen_range(0.8..1.2)).collect(),
            nmf_input: base.nmf_input.iter().map(|v| v * rng.gen_range(0.8..1.2)).collect(),
        };
        let a = model.classify_sample(&sample).unwrap();
        let b = loaded.classify_sample(&sample).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.score_haralick.to_bits(), b.score_haralick.to_bits());
        assert_eq!(a.score_nmf.to_bits(), b.score_nmf.to_bits());
    }
}

#[test]
fn svm_file_round_trip_and_corruption() {
    let data = features();
    let model = fusion_model(&data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.svm.json");
    save(&path, &model.haralick, None).unwrap();
    let back: texturekit::features::SvmClassifier = load(&path).unwrap();
    assert_eq!(back.model.w_norm.to_bits(), model.haralick.model.w_norm.to_bits());
    assert_eq!(back.model.alphas, model.haralick.model.alphas);
    assert_eq!(back.model.bias.to_bits(), model.haralick.model.bias.to_bits());

    // change one digit of the bias inside the payload
    let text = std::fs::read_to_string(&path).unwrap();
    let at = text.find("\"bias\": ").unwrap() + "\"bias\": ".len();
    let pos = at + text[at..].find(|c: char| c.is_ascii_digit() && c != '0').unwrap();
    let mut bytes = text.into_bytes();
    bytes[pos] = if bytes[pos] == b'9' { b'8' } else { bytes[pos] + 1 };
    std::fs::write(&path, &bytes).unwrap();
    let err = load::<texturekit::features::SvmClassifier>(&path).unwrap_err();
    assert!(matches!(err, Error::HashMismatch { .. }), "{err}");
}

#[test]
fn unsupported_version_is_rejected() {
    let data = features();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.nmf.json");
    let model = fusion_model(&data);
    save(&path, &model.encoder, None).unwrap();
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"schema_version\": 1,", "\"schema_version\": 99,");
    std::fs::write(&path, text).unwrap();
    let err = load::<NmfEncoder>(&path).unwrap_err();
    assert!(err.to_string().contains("unsupported version"));
}

#[test]
fn encoder_round_trip_is_exact() {
    let data = features();
    let model = fusion_model(&data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.nmf.json");
    save(&path, &model.encoder, None).unwrap();
    let back: NmfEncoder = load(&path).unwrap();
    assert_eq!(back, model.encoder);
    for s in &data {
        assert_eq!(
            back.encode(&s.nmf_input).unwrap(),
            model.encoder.encode(&s.nmf_input).unwrap()
        );
    }
}

#[test]
fn report_round_trip() {
    let data = features();
    let cfg = EvalConfig {
        classifier: ClassifierKind::HaralickOnly,
        pipeline: pipeline(),
        ..Default::default()
    };
    let out = loocv(&data, &cfg).unwrap();
    let report = LoocvReport::new(cfg, data.len(), &out);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.report.json");
    save(&path, &report, None).unwrap();
    assert_eq!(load::<LoocvReport>(&path).unwrap(), report);
}

#[test]
fn dataset_written_to_disk_reads_back() {
    let cfg = SynthConfig {
        n_per_class: 2,
        size: 16,
        ..Default::default()
    };
    let samples = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&samples, dir.path()).unwrap();
    let entries = resolve_dataset(dir.path()).unwrap();
    assert_eq!(entries.len(), 4);
    let images = load_images(&entries).unwrap();
    for (s, (id, label, img)) in samples.iter().zip(&images) {
        assert_eq!(&s.id, id);
        assert_eq!(Some(s.label), *label);
        for (a, b) in s.image.pixels().iter().zip(img.pixels()) {
            assert!((a - b / 65535.0).abs() <= 0.5 / 65535.0);
        }
    }
    // a second write of the same data is byte-identical
    let first = std::fs::read(dir.path().join("synth_0000.pgm")).unwrap();
    write_dataset(&generate(&cfg).unwrap(), dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("synth_0000.pgm")).unwrap(), first);
    assert!(read_image(&dir.path().join("missing.pgm")).is_err());
}
