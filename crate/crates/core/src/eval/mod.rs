//! Balanced-accuracy evaluation and report rendering.

mod decimal;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PerturbationSpec;
use crate::probe::{l2_normalize, sigmoid, ProbeModel};
use crate::registry;
use crate::store::{select_rows, DatasetManifest, EmbeddingArchive, Label, Split};

pub use decimal::{average_cells, format_3dp, format_delta_3dp, Decimal};
pub use report::{
    parse_report_csv, render_comparison, render_report, render_wide_markdown, ReportFormat,
    REPORT_CSV_HEADER,
};

/// Name of the pooled row in reports.
pub const OVERALL: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Generator,
    None,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Self::Generator),
            "none" => Ok(Self::None),
            _ => Err(Error::Parameter(format!(
                "unknown grouping `{s}` (generator|none)"
            ))),
        }
    }
}

/// Class-conditional accuracies for one group. Accuracies of a class with
/// no items are absent, and so is `avg` unless both are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: String,
    pub n_real: usize,
    pub n_fake: usize,
    pub real_acc: Option<f64>,
    pub fake_acc: Option<f64>,
    pub avg: Option<f64>,
}

impl GroupResult {
    pub fn from_counts(group: impl Into<String>, tally: Tally) -> Self {
        let acc = |correct: usize, n: usize| (n > 0).then(|| correct as f64 / n as f64);
        let real_acc = acc(tally.correct_real, tally.n_real);
        let fake_acc = acc(tally.correct_fake, tally.n_fake);
        let avg = match (real_acc, fake_acc) {
            (Some(r), Some(f)) => Some((r + f) / 2.0),
            _ => None,
        };
        Self {
            group: group.into(),
            n_real: tally.n_real,
            n_fake: tally.n_fake,
            real_acc,
            fake_acc,
            avg,
        }
    }

    pub fn total(&self) -> usize {
        self.n_real + self.n_fake
    }
}

/// Confusion counts for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub n_real: usize,
    pub n_fake: usize,
    pub correct_real: usize,
    pub correct_fake: usize,
}

impl Tally {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        let hit = usize::from(truth == predicted);
        match truth {
            Label::Real => {
                self.n_real += 1;
                self.correct_real += hit;
            }
            Label::Fake => {
                self.n_fake += 1;
                self.correct_fake += hit;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_id: String,
    pub dataset: String,
    pub groups: Vec<GroupResult>,
    pub overall: GroupResult,
    pub perturbation: Option<PerturbationSpec>,
}

impl EvaluationReport {
    /// Builds a report from `(group, truth, predicted)` triples. Groups are
    /// sorted by name, so input order never matters.
    pub fn from_predictions<'a>(
        model_id: impl Into<String>,
        dataset: impl Into<String>,
        items: impl IntoIterator<Item = (&'a str, Label, Label)>,
        group_by: GroupBy,
    ) -> Self {
        let mut per_group: BTreeMap<&str, Tally> = BTreeMap::new();
        let mut overall = Tally::default();
        for (group, truth, predicted) in items {
            overall.add(truth, predicted);
            if group_by == GroupBy::Generator {
                per_group.entry(group).or_default().add(truth, predicted);
            }
        }
        Self {
            model_id: model_id.into(),
            dataset: dataset.into(),
            groups: per_group
                .into_iter()
                .map(|(g, t)| GroupResult::from_counts(g, t))
                .collect(),
            overall: GroupResult::from_counts(OVERALL, overall),
            perturbation: None,
        }
    }
}

/// Default model id for reports: the detector name for known backbones.
pub fn model_id_for(model: &ProbeModel) -> String {
    match registry::lookup(&model.backbone_id) {
        Some(spec) => spec.detector.to_string(),
        None => format!("{}-linear", model.backbone_id),
    }
}

/// Scores the test split (or every labeled row when no manifest is given).
pub fn evaluate(
    model: &ProbeModel,
    archive: &EmbeddingArchive,
    manifest: Option<&DatasetManifest>,
    group_by: GroupBy,
) -> Result<EvaluationReport> {
    model.check_compatible(archive)?;
    score_archive(model, archive, manifest, group_by)
}

fn score_archive(
    model: &ProbeModel,
    archive: &EmbeddingArchive,
    manifest: Option<&DatasetManifest>,
    group_by: GroupBy,
) -> Result<EvaluationReport> {
    let rows = select_rows(archive, manifest, Split::Test)?;
    let predicted: Vec<Label> = rows
        .par_iter()
        .map(|s| {
            let mut x: Vec<f64> = archive.row(s.index).iter().map(|&v| f64::from(v)).collect();
            if model.normalize_input {
                l2_normalize(&mut x);
            }
            model.label_for_score(sigmoid(model.logit_prepared(&x)))
        })
        .collect();
    let dataset = manifest.map_or_else(|| "archive".to_string(), |m| m.name.clone());
    let mut report = EvaluationReport::from_predictions(
        model_id_for(model),
        dataset,
        rows.iter()
            .zip(&predicted)
            .map(|(s, &p)| (s.group.as_str(), s.label, p)),
        group_by,
    );
    report.perturbation = archive.preprocessing().perturbation.clone();
    Ok(report)
}

/// Per-class differences of a report against the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub group: String,
    pub real_acc: Option<f64>,
    pub fake_acc: Option<f64>,
    pub avg: Option<f64>,
}

impl Delta {
    fn between(base: &GroupResult, other: &GroupResult) -> Self {
        let d = |a: Option<f64>, b: Option<f64>| Some(b? - a?);
        Self {
            group: other.group.clone(),
            real_acc: d(base.real_acc, other.real_acc),
            fake_acc: d(base.fake_acc, other.fake_acc),
            avg: d(base.avg, other.avg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub report: EvaluationReport,
    pub overall_delta: Delta,
    /// Only for groups also present in the first report.
    pub group_deltas: Vec<Delta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

/// Evaluates one model over several archives of the same width, e.g. the
/// same images embedded by sibling backbones. Deltas are against row one.
pub fn compare_archives(
    model: &ProbeModel,
    archives: &[(String, &EmbeddingArchive)],
    manifest: Option<&DatasetManifest>,
    group_by: GroupBy,
) -> Result<ComparisonReport> {
    if archives.is_empty() {
        return Err(Error::Input("no archives to compare".into()));
    }
    let mut reports = Vec::with_capacity(archives.len());
    for (name, archive) in archives {
        model.check_dim(archive)?;
        let mut report = score_archive(model, archive, manifest, group_by)?;
        report.dataset = name.clone();
        reports.push((name.clone(), report));
    }
    let base = reports[0].1.clone();
    let rows = reports
        .into_iter()
        .map(|(name, report)| {
            let group_deltas = report
                .groups
                .iter()
                .filter_map(|g| {
                    let b = base.groups.iter().find(|b| b.group == g.group)?;
                    Some(Delta::between(b, g))
                })
                .collect();
            ComparisonRow {
                name,
                overall_delta: Delta::between(&base.overall, &report.overall),
                group_deltas,
                report,
            }
        })
        .collect();
    Ok(ComparisonReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::PreprocessRecord;

    const BB: &str = "dinov2-giant";

    fn archive_with(rows: &[(f32, i8, &str)]) -> EmbeddingArchive {
        let mut a =
            EmbeddingArchive::new(BB, 1536, PreprocessRecord::for_backbone(BB), false).unwrap();
        for (i, &(x, label, group)) in rows.iter().enumerate() {
            let mut row = vec![0.0f32; 1536];
            row[0] = x;
            a.push(format!("r{i}"), label, group, &row).unwrap();
        }
        a
    }

    fn unit_model() -> ProbeModel {
        let mut w = vec![0.0f32; 1536];
        w[0] = 1.0;
        ProbeModel::new(w, 0.0, BB)
    }

    #[test]
    fn hand_set_logits() {
        // logit = x; fake iff x > 0
        let a = archive_with(&[
            (2.0, 1, "g1"),  // fake, right
            (-1.0, 1, "g1"), // fake, wrong
            (0.0, 1, "g2"),  // fake, wrong (tie goes to real)
            (3.0, 1, "g2"),  // fake, right
            (-2.0, 0, "g1"), // real, right
            (0.5, 0, "g1"),  // real, wrong
            (-0.1, 0, "g2"), // real, right
            (-4.0, 0, "g2"), // real, right
        ]);
        let r = evaluate(&unit_model(), &a, None, GroupBy::Generator).unwrap();
        assert_eq!(r.model_id, "DINOv2-Linear");
        let g1 = &r.groups[0];
        assert_eq!((g1.n_real, g1.n_fake), (2, 2));
        assert_eq!(
            (g1.real_acc, g1.fake_acc, g1.avg),
            (Some(0.5), Some(0.5), Some(0.5))
        );
        let g2 = &r.groups[1];
        assert_eq!(
            (g2.real_acc, g2.fake_acc, g2.avg),
            (Some(1.0), Some(0.5), Some(0.75))
        );
        assert_eq!(r.overall.real_acc, Some(0.75));
        assert_eq!(r.overall.fake_acc, Some(0.5));
        assert_eq!(r.overall.avg, Some(0.625));
    }

    #[test]
    fn all_correct() {
        let mut rows = vec![(1.0, 1, "x"); 10];
        rows.extend(vec![(-1.0, 0, "x"); 10]);
        let r = evaluate(&unit_model(), &archive_with(&rows), None, GroupBy::None).unwrap();
        assert!(r.groups.is_empty());
        assert_eq!(
            (r.overall.real_acc, r.overall.fake_acc, r.overall.avg),
            (Some(1.0), Some(1.0), Some(1.0))
        );
    }

    #[test]
    fn single_class_group_is_partial() {
        let a = archive_with(&[
            (1.0, 1, "wild"),
            (-1.0, 1, "wild"),
            (-1.0, 0, "lab"),
            (1.0, 1, "lab"),
        ]);
        let r = evaluate(&unit_model(), &a, None, GroupBy::Generator).unwrap();
        let wild = r.groups.iter().find(|g| g.group == "wild").unwrap();
        assert_eq!(wild.real_acc, None);
        assert_eq!(wild.fake_acc, Some(0.5));
        assert_eq!(wild.avg, None);
    }

    #[test]
    fn backbone_mismatch() {
        let a = archive_with(&[(1.0, 1, "x")]);
        let mut m = unit_model();
        m.backbone_id = "dinov3-vit7b16".into();
        assert!(matches!(
            evaluate(&m, &a, None, GroupBy::None),
            Err(Error::Compatibility(_))
        ));
    }

    #[test]
    fn identical_archives_have_zero_deltas() {
        let a = archive_with(&[(1.0, 1, "x"), (-1.0, 0, "x"), (0.3, 0, "y"), (-0.3, 1, "y")]);
        let cmp = compare_archives(
            &unit_model(),
            &[("a".into(), &a), ("b".into(), &a), ("c".into(), &a)],
            None,
            GroupBy::Generator,
        )
        .unwrap();
        assert_eq!(cmp.rows.len(), 3);
        for row in &cmp.rows {
            assert_eq!(row.overall_delta.avg, Some(0.0));
            assert!(row
                .group_deltas
                .iter()
                .all(|d| d.real_acc == Some(0.0) && d.fake_acc == Some(0.0)));
        }
    }

    #[test]
    fn compare_checks_width_only() {
        let a = archive_with(&[(1.0, 1, "x")]);
        let m = ProbeModel::new(vec![0.0; 4], 0.0, BB);
        assert!(matches!(
            compare_archives(&m, &[("a".into(), &a)], None, GroupBy::None),
            Err(Error::Dimension { .. })
        ));
        let mut m = unit_model();
        m.backbone_id = "dinov3-vit7b16".into();
        assert!(compare_archives(&m, &[("a".into(), &a)], None, GroupBy::None).is_ok());
    }
}
