//! LOOCV reports: JSON document, text tables and SVG bar charts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::eval::{format_metric, loocv, metrics, ClassifierKind, ConfusionMatrix, EvalConfig, LoocvOutcome, Metrics};
use crate::features::SampleFeatures;
use crate::fusion::TieRule;
use crate::modelio::Artifact;

/// Evaluation choices not visible in the config, recorded for readers of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Methodology {
    pub standardization: String,
    pub nmf_refit_per_fold: bool,
    pub nmf_seed_rule: String,
    pub score: String,
    pub tie_rule: TieRule,
    pub undefined_metrics: String,
}

impl Default for Methodology {
    fn default() -> Self {
        Self {
            standardization: "z-score per feature, fitted on each fold's training split".into(),
            nmf_refit_per_fold: true,
            nmf_seed_rule: "seed + fold index".into(),
            score: "f(x) / ||w||".into(),
            tie_rule: TieRule::HaralickWins,
            undefined_metrics: "null when the denominator is zero".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub classifier: ClassifierKind,
    pub title: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl ComparisonColumn {
    pub fn from_confusion(classifier: ClassifierKind, confusion: ConfusionMatrix) -> Self {
        Self {
            classifier,
            title: classifier.title().to_string(),
            confusion,
            metrics: metrics(&confusion),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub config: EvalConfig,
    pub n_samples: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub degenerate_folds: Vec<usize>,
    pub methodology: Methodology,
    /// One column per classifier kind, in the order Haralick, NMF, concatenated, multi-level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Vec<ComparisonColumn>>,
}

impl LoocvReport {
    pub fn new(config: EvalConfig, n_samples: usize, outcome: &LoocvOutcome) -> Self {
        Self {
            config,
            n_samples,
            confusion: outcome.confusion,
            metrics: outcome.metrics(),
            degenerate_folds: outcome.degenerate_folds.clone(),
            methodology: Methodology::default(),
            comparison: None,
        }
    }

    pub fn column(&self, kind: ClassifierKind) -> Option<&ComparisonColumn> {
        self.comparison.as_ref()?.iter().find(|c| c.classifier == kind)
    }
}

impl Artifact for LoocvReport {
    const KIND: &'static str = "report";

    fn to_payload(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn from_payload(payload: Value) -> Result<Self> {
        Ok(serde_json::from_value(payload)?)
    }
}

/// Run LOOCV once per classifier kind with otherwise identical settings.
pub fn compare_classifiers(dataset: &[SampleFeatures], base: &EvalConfig) -> Result<Vec<ComparisonColumn>> {
    ClassifierKind::ALL
        .iter()
        .map(|&kind| {
            let cfg = EvalConfig {
                classifier: kind,
                ..*base
            };
            let outcome = loocv(dataset, &cfg)?;
            Ok(ComparisonColumn::from_confusion(kind, outcome.confusion))
        })
        .collect()
}

/// Rows SN / SP / AC, one column per classifier.
pub fn comparison_text(columns: &[ComparisonColumn]) -> String {
    let mut out = format!("{:<8}", "");
    for c in columns {
        let _ = write!(out, "{:>14}", c.title);
    }
    out.push('\n');
    type Row = (&'static str, fn(&Metrics) -> Option<f64>);
    let rows: [Row; 3] = [("SN (%)", |m| m.sn), ("SP (%)", |m| m.sp), ("AC (%)", |m| m.ac)];
    for (name, get) in rows {
        let _ = write!(out, "{name:<8}");
        for c in columns {
            let _ = write!(out, "{:>14}", format_metric(get(&c.metrics)));
        }
        out.push('\n');
    }
    out
}

pub fn confusion_text(cm: &ConfusionMatrix) -> String {
    format!(
        "{:<18}{:>12}{:>12}\n{:<18}{:>12}{:>12}\n{:<18}{:>12}{:>12}\n",
        "truth \\ predicted", "stroke", "nonstroke", "stroke", cm.tp, cm.fn_, "nonstroke", cm.fp, cm.tn
    )
}

pub fn metrics_text(m: &Metrics) -> String {
    format!(
        "SN {}\nSP {}\nAC {}\n",
        format_metric(m.sn),
        format_metric(m.sp),
        format_metric(m.ac)
    )
}

const PALETTE: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

/// Grouped bar chart: one group per metric, one bar per classifier.
pub fn comparison_svg(columns: &[ComparisonColumn]) -> String {
    let (width, height) = (640.0, 360.0);
    let (left, right, top, bottom) = (50.0, 20.0, 30.0, 60.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let groups = ["SN", "SP", "AC"];
    let group_w = plot_w / groups.len() as f64;
    let bar_w = group_w * 0.8 / columns.len().max(1) as f64;
    let y = |pct: f64| top + plot_h * (1.0 - pct / 100.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for tick in (0..=100).step_by(20) {
        let ty = y(tick as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            width - right,
            left - 6.0,
            ty + 4.0
        );
    }
    for (g, name) in groups.iter().enumerate() {
        let gx = left + g as f64 * group_w + group_w * 0.1;
        for (k, col) in columns.iter().enumerate() {
            let value = match g {
                0 => col.metrics.sn,
                1 => col.metrics.sp,
                _ => col.metrics.ac,
            };
            let x = gx + k as f64 * bar_w;
            let color = PALETTE[k % PALETTE.len()];
            match value {
                Some(v) => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"><title>{} {name}: {v:.2}</title></rect>"#,
                        y(v),
                        bar_w * 0.9,
                        top + plot_h - y(v),
                        col.title
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">n/a</text>"#,
                        x + bar_w * 0.45,
                        top + plot_h - 4.0
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name} (%)</text>"#,
            left + (g as f64 + 0.5) * group_w,
            top + plot_h + 18.0
        );
    }
    for (k, col) in columns.iter().enumerate() {
        let lx = left + k as f64 * 140.0;
        let ly = height - 18.0;
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 9.0,
            lx + 14.0,
            col.title
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns() -> Vec<ComparisonColumn> {
        vec![
            ComparisonColumn::from_confusion(ClassifierKind::HaralickOnly, ConfusionMatrix::new(10, 14, 2, 4)),
            ComparisonColumn::from_confusion(ClassifierKind::NmfOnly, ConfusionMatrix::new(11, 14, 2, 3)),
            ComparisonColumn::from_confusion(ClassifierKind::Concatenated, ConfusionMatrix::new(0, 16, 0, 0)),
            ComparisonColumn::from_confusion(ClassifierKind::MultiLevel, ConfusionMatrix::new(11, 15, 1, 3)),
        ]
    }

    #[test]
    fn text_table_has_four_columns() {
        let t = comparison_text(&columns());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("Multi-Level"));
        assert!(lines[1].contains("78.57") && lines[1].contains("undefined"));
        assert!(lines[3].contains("86.67"));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = comparison_svg(&columns());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 1 + 11 + 4);
        assert!(svg.contains("n/a"));
    }

    #[test]
    fn confusion_layout() {
        let t = confusion_text(&ConfusionMatrix::new(11, 15, 1, 3));
        let rows: Vec<Vec<&str>> = t.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(rows[1], ["stroke", "11", "3"]);
        assert_eq!(rows[2], ["nonstroke", "1", "15"]);
    }
}
