use std::path::{Path, PathBuf};

use serde::Serialize;
use texturekit::dataset::{generate, write_dataset, SynthConfig};
use texturekit::eval::{self, metrics as compute_metrics, records_csv, ClassifierKind, ConfusionMatrix, EvalConfig};
use texturekit::features::{extract_all, NmfEncoder, NmfInput, SampleFeatures, SvmClassifier};
use texturekit::fusion::FusionModel;
use texturekit::glcm::{compute_glcm, Direction, QuantizedImage};
use texturekit::haralick::HaralickVector28;
use texturekit::imageio::{
    encode_levels_pgm, load_images, read_file, read_image, resolve_dataset, write_atomic, FeatureTable,
};
use texturekit::modelio::{load, load_fusion, save, save_fusion, RunManifest};
use texturekit::preprocess::{preprocess as run_preprocess, quantize, GrayImage};
use texturekit::report::{
    compare_classifiers, comparison_svg, comparison_text, confusion_text, metrics_text, ComparisonColumn, LoocvReport,
};
use texturekit::svm::Label;
use texturekit::Error;

use crate::args::{
    ClassifierArg, ClassifyCmd, DirectionArg, ExtractCmd, FeatureKind, GlcmCmd, LoocvCmd, MetricsCmd, NmfTrainCmd,
    PreprocessCmd, ReportCmd, SvmTrainCmd, SynthCmd, TrainFusionCmd,
};
use crate::{CliError, CliResult};

/// Write to stdout. A closed pipe (`| head`) ends output quietly.
fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

macro_rules! say {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

fn need<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn manifest<T: Serialize>(command: &str, cmd: &T) -> RunManifest {
    let config = serde_json::to_value(cmd).unwrap_or_default();
    RunManifest::new(command, config)
}

/// Provenance for non-JSON outputs lives in `<out>.manifest.json`.
fn write_sidecar(out: &Path, manifest: &RunManifest) -> CliResult<()> {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&out.with_file_name(name), text.as_bytes())?;
    Ok(())
}

type Item = (String, Option<Label>, GrayImage);

fn load_dataset(path: &Path, manifest: &mut RunManifest) -> CliResult<Vec<Item>> {
    let entries = resolve_dataset(path)?;
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!("no images found at {}", path.display())).into());
    }
    for e in &entries {
        manifest.add_input(&e.path)?;
    }
    Ok(load_images(&entries)?)
}

fn require_labels<'a>(samples: impl IntoIterator<Item = (&'a str, Option<Label>)>) -> CliResult<Vec<Label>> {
    samples
        .into_iter()
        .map(|(id, l)| l.ok_or_else(|| Error::InvalidInput(format!("sample `{id}` has no label")).into()))
        .collect()
}

/// A CSV without a `path` column is taken to be a feature table.
fn is_feature_table(path: &Path) -> CliResult<bool> {
    if !path.is_file() || !path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Ok(false);
    }
    let bytes = read_file(path)?;
    let header = String::from_utf8_lossy(&bytes);
    let first = header.lines().next().unwrap_or("");
    Ok(!first.split(',').any(|c| c.trim() == "path"))
}

fn write_table(out: &Path, table: &FeatureTable, manifest: &RunManifest) -> CliResult<()> {
    table.write(out)?;
    write_sidecar(out, manifest)?;
    say!(
        "wrote {} rows x {} features to {}",
        table.rows.len(),
        table.columns.len(),
        out.display()
    )?;
    Ok(())
}

pub fn preprocess(cmd: PreprocessCmd) -> CliResult<()> {
    let input = need(&cmd.input, "in")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("preprocess", &cmd);
    m.add_input(input)?;
    let img = read_image(input)?;
    let levels = quantize(&run_preprocess(&img, &cmd.preprocess.config())?, cmd.preprocess.levels)?;
    write_atomic(out, &encode_levels_pgm(&levels))?;
    write_sidecar(out, &m)?;
    say!(
        "wrote {}x{} image with {} gray levels to {}",
        levels.width(),
        levels.height(),
        levels.levels(),
        out.display()
    )?;
    Ok(())
}

fn as_levels(img: &GrayImage, levels: usize) -> CliResult<QuantizedImage> {
    let mut data = Vec::with_capacity(img.pixels().len());
    for &v in img.pixels() {
        if v.fract() != 0.0 || v >= levels as f64 {
            return Err(Error::InvalidInput(format!("sample {v} is not a gray level below {levels}")).into());
        }
        data.push(v as u16);
    }
    Ok(QuantizedImage::new(img.width(), img.height(), levels, data)?)
}

pub fn glcm(cmd: GlcmCmd) -> CliResult<()> {
    let input = need(&cmd.input, "in")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("glcm", &cmd);
    m.add_input(input)?;
    let img = read_image(input)?;
    let levels = cmd.preprocess.levels;
    let q = if cmd.quantized {
        as_levels(&img, levels)?
    } else {
        quantize(&run_preprocess(&img, &cmd.preprocess.config())?, levels)?
    };
    let dir = match cmd.direction {
        DirectionArg::H => Direction::Horizontal,
        DirectionArg::V => Direction::Vertical,
        DirectionArg::Ld => Direction::LeftDiagonal,
        DirectionArg::Rd => Direction::RightDiagonal,
    };
    let g = compute_glcm(&q, dir, cmd.distance)?;
    write_atomic(out, g.probs_csv().as_bytes())?;
    write_sidecar(out, &m)?;
    say!(
        "wrote {levels}x{levels} {dir} co-occurrence matrix ({} pairs) to {}",
        g.total(),
        out.display()
    )?;
    Ok(())
}

fn weight_columns(rank: usize) -> Vec<String> {
    (1..=rank).map(|k| format!("h{k}")).collect()
}

pub fn extract(cmd: ExtractCmd) -> CliResult<()> {
    let input = need(&cmd.input, "in")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("extract", &cmd);
    let mut pipeline = cmd.pipeline.config();

    let table = match cmd.features {
        FeatureKind::Haralick => {
            let items = load_dataset(input, &mut m)?;
            let feats = extract_all(&items, &pipeline)?;
            FeatureTable {
                columns: HaralickVector28::column_names(),
                ids: feats.iter().map(|f| f.id.clone()).collect(),
                labels: feats.iter().map(|f| f.label).collect(),
                rows: feats.into_iter().map(|f| f.haralick).collect(),
            }
        }
        FeatureKind::Nmf => {
            let model_path = need(&cmd.model, "model")?;
            m.add_input(model_path)?;
            let encoder: NmfEncoder = load(model_path)?;
            let (ids, labels, inputs) = if encoder.layout == NmfInput::Raw {
                if !is_feature_table(input)? {
                    return Err(CliError::Usage(
                        "this NMF model was trained on a feature CSV; pass one with --in".into(),
                    ));
                }
                m.add_input(input)?;
                let t = FeatureTable::read(input)?;
                (t.ids, t.labels, t.rows)
            } else {
                pipeline.nmf_input = encoder.layout;
                let items = load_dataset(input, &mut m)?;
                let feats = extract_all(&items, &pipeline)?;
                let ids = feats.iter().map(|f| f.id.clone()).collect();
                let labels = feats.iter().map(|f| f.label).collect();
                (ids, labels, feats.into_iter().map(|f| f.nmf_input).collect::<Vec<_>>())
            };
            let rows = inputs
                .iter()
                .map(|x| encoder.encode(x))
                .collect::<texturekit::Result<Vec<_>>>()?;
            FeatureTable {
                columns: weight_columns(encoder.rank()),
                ids,
                labels,
                rows,
            }
        }
    };
    write_table(out, &table, &m)
}

pub fn nmf_train(cmd: NmfTrainCmd) -> CliResult<()> {
    let input = need(&cmd.input, "in")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("nmf-train", &cmd);
    let cfg = cmd.nmf.config(cmd.seed.seed);
    let (columns, layout) = if is_feature_table(input)? {
        m.add_input(input)?;
        (FeatureTable::read(input)?.rows, NmfInput::Raw)
    } else {
        let pipeline = cmd.pipeline.config();
        let items = load_dataset(input, &mut m)?;
        let feats = extract_all(&items, &pipeline)?;
        (feats.into_iter().map(|f| f.nmf_input).collect(), pipeline.nmf_input)
    };
    let encoder = NmfEncoder::fit(&columns, layout, &cfg)?;
    save(out, &encoder, Some(m))?;
    say!(
        "wrote rank-{} NMF basis over {} columns of length {} to {}",
        encoder.rank(),
        columns.len(),
        columns[0].len(),
        out.display()
    )?;
    Ok(())
}

pub fn svm_train(cmd: SvmTrainCmd) -> CliResult<()> {
    let features = need(&cmd.features, "features")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("svm-train", &cmd);
    m.add_input(features)?;
    let table = FeatureTable::read(features)?;
    let labels = require_labels(table.ids.iter().map(String::as_str).zip(table.labels.iter().copied()))?;
    let model = SvmClassifier::fit(&table.rows, &labels, &cmd.kernel.settings())?;
    save(out, &model, Some(m))?;
    say!(
        "wrote SVM with {} support vectors over {} features to {}",
        model.model.alphas.len(),
        model.dim(),
        out.display()
    )?;
    Ok(())
}

pub fn train_fusion(cmd: TrainFusionCmd) -> CliResult<()> {
    let data = need(&cmd.data, "data")?;
    let out = need(&cmd.out, "out")?;
    let mut m = manifest("train-fusion", &cmd);
    let pipeline = cmd.pipeline.config();
    let items = load_dataset(data, &mut m)?;
    let feats = extract_all(&items, &pipeline)?;
    let refs: Vec<&SampleFeatures> = feats.iter().collect();
    let model = FusionModel::train(
        &refs,
        pipeline,
        &cmd.kernel.settings(),
        &cmd.nmf_kernel.settings(),
        &cmd.nmf.config(cmd.seed.seed),
    )?;
    let bundle = save_fusion(out, &model, Some(m))?;
    say!("wrote {}", out.display())?;
    for p in [&bundle.haralick_model, &bundle.nmf_model, &bundle.nmf_encoder] {
        say!("wrote {}", p.display())?;
    }
    Ok(())
}

pub fn classify(cmd: ClassifyCmd) -> CliResult<()> {
    let fusion = need(&cmd.fusion, "fusion")?;
    let input = need(&cmd.input, "in")?;
    let model = load_fusion(fusion)?;
    let entries = resolve_dataset(input)?;
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!("no images found at {}", input.display())).into());
    }
    say!("sample_id\tlabel\twinner\tscore_haralick\tscore_nmf")?;
    for e in &entries {
        let d = model.classify(&read_image(&e.path)?)?;
        let winner = serde_json::to_value(d.winner).map_err(Error::from)?;
        say!(
            "{}\t{}\t{}\t{}\t{}",
            e.sample_id,
            d.label.tag(),
            winner.as_str().unwrap_or_default(),
            d.score_haralick,
            d.score_nmf
        )?;
    }
    Ok(())
}

fn classifier_kind(c: ClassifierArg) -> ClassifierKind {
    match c {
        ClassifierArg::Haralick => ClassifierKind::HaralickOnly,
        ClassifierArg::Nmf => ClassifierKind::NmfOnly,
        ClassifierArg::Concat => ClassifierKind::Concatenated,
        ClassifierArg::Multilevel => ClassifierKind::MultiLevel,
    }
}

fn plot_columns(report: &LoocvReport) -> Vec<ComparisonColumn> {
    report.comparison.clone().unwrap_or_else(|| {
        vec![ComparisonColumn::from_confusion(
            report.config.classifier,
            report.confusion,
        )]
    })
}

fn print_report(report: &LoocvReport) -> CliResult<()> {
    say!(
        "classifier: {} ({} samples)",
        report.config.classifier,
        report.n_samples
    )?;
    emit(&metrics_text(&report.metrics))?;
    emit(&confusion_text(&report.confusion))?;
    if !report.degenerate_folds.is_empty() {
        say!("degenerate folds (excluded): {:?}", report.degenerate_folds)?;
    }
    if let Some(cols) = &report.comparison {
        emit(&comparison_text(cols))?;
    }
    Ok(())
}

fn write_plot(path: &Path, report: &LoocvReport, m: &RunManifest) -> CliResult<()> {
    write_atomic(path, comparison_svg(&plot_columns(report)).as_bytes())?;
    write_sidecar(path, m)
}

pub fn loocv(cmd: LoocvCmd) -> CliResult<()> {
    let data = need(&cmd.data, "data")?;
    let mut m = manifest("loocv", &cmd);
    let pipeline = cmd.pipeline.config();
    let cfg = EvalConfig {
        classifier: classifier_kind(cmd.classifier),
        haralick_svm: cmd.kernel.settings(),
        nmf_svm: cmd.nmf_kernel.settings(),
        nmf: cmd.nmf.config(cmd.seed.seed),
        pipeline,
        seed: cmd.seed.seed,
        parallel: !cmd.sequential,
    };
    let items = load_dataset(data, &mut m)?;
    require_labels(items.iter().map(|(id, l, _)| (id.as_str(), *l)))?;
    let feats = extract_all(&items, &pipeline)?;
    let outcome = eval::loocv(&feats, &cfg)?;
    let mut report = LoocvReport::new(cfg, feats.len(), &outcome);
    if cmd.compare {
        report.comparison = Some(compare_classifiers(&feats, &cfg)?);
    }
    print_report(&report)?;

    if let Some(path) = &cmd.records {
        write_atomic(path, records_csv(&outcome.records)?.as_bytes())?;
        write_sidecar(path, &m)?;
    }
    if let Some(path) = &cmd.plot {
        write_plot(path, &report, &m)?;
    }
    if let Some(path) = &cmd.report {
        save(path, &report, Some(m))?;
    }
    Ok(())
}

pub fn synth(cmd: SynthCmd) -> CliResult<()> {
    let out = need(&cmd.out, "out")?;
    if cmd.n < 4 || !cmd.n.is_multiple_of(2) {
        return Err(CliError::Usage(format!(
            "--n must be an even number of at least 4, got {}",
            cmd.n
        )));
    }
    let cfg = SynthConfig {
        n_per_class: cmd.n / 2,
        size: cmd.size,
        seed: cmd.seed.seed,
        difficulty: cmd.difficulty,
        ..Default::default()
    };
    let samples = generate(&cfg)?;
    write_dataset(&samples, out)?;
    let mut text = serde_json::to_string_pretty(&manifest("synth", &cmd)).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&out.join("run.manifest.json"), text.as_bytes())?;
    say!(
        "wrote {} images ({} per class, {}x{}) and manifest.csv to {}",
        samples.len(),
        cfg.n_per_class,
        cfg.size,
        cfg.size,
        out.display()
    )?;
    Ok(())
}

pub fn report(cmd: ReportCmd) -> CliResult<()> {
    let input = need(&cmd.input, "in")?;
    let report: LoocvReport = load(input)?;
    print_report(&report)?;
    if let Some(path) = &cmd.plot {
        let mut m = manifest("report", &cmd);
        m.add_input(input)?;
        write_plot(path, &report, &m)?;
    }
    Ok(())
}

pub fn metrics(cmd: MetricsCmd) -> CliResult<()> {
    let cm = ConfusionMatrix::new(cmd.tp, cmd.tn, cmd.fp, cmd.fn_);
    emit(&metrics_text(&compute_metrics(&cm)))?;
    Ok(())
}
