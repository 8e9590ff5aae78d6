use std::fmt::Write as _;
use std::str::FromStr;

use super::decimal::{format_3dp, format_delta_3dp};
use super::{ComparisonReport, EvaluationReport, GroupResult};
use crate::error::{Error, Result};

pub const REPORT_CSV_HEADER: [&str; 6] =
    ["group", "n_real", "n_fake", "real_acc", "fake_acc", "avg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Parameter(format!(
                "unknown report format `{s}` (markdown|csv|json)"
            ))),
        }
    }
}

fn cell(v: Option<f64>, absent: &str) -> String {
    v.map_or_else(|| absent.to_string(), format_3dp)
}

fn delta_cell(v: Option<f64>, absent: &str) -> String {
    v.map_or_else(|| absent.to_string(), format_delta_3dp)
}

/// Rows to print: every group, then the pooled row when it has items.
fn printed_rows(report: &EvaluationReport) -> impl Iterator<Item = &GroupResult> {
    let overall = (report.overall.total() > 0).then_some(&report.overall);
    report.groups.iter().chain(overall)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 cells")
}

/// Renders one report. Columns are always group, Real, Fake, Avg; absent
/// accuracies print as `-` in markdown, empty in CSV and `null` in JSON.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::from("| group | Real | Fake | Avg |\n|---|---:|---:|---:|\n");
            for g in printed_rows(report) {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    g.group,
                    cell(g.real_acc, "-"),
                    cell(g.fake_acc, "-"),
                    cell(g.avg, "-")
                );
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv_writer();
            w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
            for g in printed_rows(report) {
                w.write_record([
                    g.group.clone(),
                    g.n_real.to_string(),
                    g.n_fake.to_string(),
                    cell(g.real_acc, ""),
                    cell(g.fake_acc, ""),
                    cell(g.avg, ""),
                ])
                .expect("in-memory write");
            }
            finish_csv(w)
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
    }
}

/// Renders a side-by-side comparison with deltas against the first row.
pub fn render_comparison(cmp: &ComparisonReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::from(
                "| archive | Real | Fake | Avg | dReal | dFake | dAvg |\n|---|---:|---:|---:|---:|---:|---:|\n",
            );
            for row in &cmp.rows {
                let (o, d) = (&row.report.overall, &row.overall_delta);
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    row.name,
                    cell(o.real_acc, "-"),
                    cell(o.fake_acc, "-"),
                    cell(o.avg, "-"),
                    delta_cell(d.real_acc, "-"),
                    delta_cell(d.fake_acc, "-"),
                    delta_cell(d.avg, "-")
                );
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv_writer();
            w.write_record([
                "archive",
                "group",
                "n_real",
                "n_fake",
                "real_acc",
                "fake_acc",
                "avg",
                "delta_real",
                "delta_fake",
                "delta_avg",
            ])
            .expect("in-memory write");
            for row in &cmp.rows {
                let pairs = row
                    .report
                    .groups
                    .iter()
                    .map(|g| (g, row.group_deltas.iter().find(|d| d.group == g.group)))
                    .chain(std::iter::once((
                        &row.report.overall,
                        Some(&row.overall_delta),
                    )));
                for (g, d) in pairs {
                    w.write_record([
                        row.name.clone(),
                        g.group.clone(),
                        g.n_real.to_string(),
                        g.n_fake.to_string(),
                        cell(g.real_acc, ""),
                        cell(g.fake_acc, ""),
                        cell(g.avg, ""),
                        delta_cell(d.and_then(|d| d.real_acc), ""),
                        delta_cell(d.and_then(|d| d.fake_acc), ""),
                        delta_cell(d.and_then(|d| d.avg), ""),
                    ])
                    .expect("in-memory write");
                }
            }
            finish_csv(w)
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(cmp).expect("comparison serializes") + "\n"
        }
    }
}

/// One row per report, one Avg column per group, then the mean of those
/// group averages, like a cross-benchmark summary table.
pub fn render_wide_markdown(reports: &[EvaluationReport]) -> String {
    let mut columns: Vec<&str> = Vec::new();
    for r in reports {
        for g in &r.groups {
            if !columns.contains(&g.group.as_str()) {
                columns.push(&g.group);
            }
        }
    }
    let mut out = String::from("| Method |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" Avg |\n|---|");
    out.push_str(&"---:|".repeat(columns.len() + 1));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} |", r.model_id);
        let mut present = Vec::new();
        for c in &columns {
            let avg = r.groups.iter().find(|g| g.group == *c).and_then(|g| g.avg);
            present.extend(avg);
            let _ = write!(out, " {} |", cell(avg, "-"));
        }
        let mean =
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        let _ = writeln!(out, " {} |", cell(mean, "-"));
    }
    out
}

/// Reads a report CSV back. Accuracies are checked to lie in [0, 1] and
/// each Avg cell to agree with its Real and Fake cells up to the slack
/// that 3-decimal rounding of all three can introduce.
pub fn parse_report_csv(text: &str) -> Result<Vec<GroupResult>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if header.iter().ne(REPORT_CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", REPORT_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e))?;
        let count = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("{}: {e}", REPORT_CSV_HEADER[k])))
        };
        let acc = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                return Ok(None);
            }
            let v: f64 = rec[k]
                .parse()
                .map_err(|e| parse_err(line, format!("{}: {e}", REPORT_CSV_HEADER[k])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(
                    line,
                    format!("{} = {v} outside [0, 1]", REPORT_CSV_HEADER[k]),
                ));
            }
            Ok(Some(v))
        };
        let g = GroupResult {
            group: rec[0].to_string(),
            n_real: count(1)?,
            n_fake: count(2)?,
            real_acc: acc(3)?,
            fake_acc: acc(4)?,
            avg: acc(5)?,
        };
        if (g.real_acc.is_some() != (g.n_real > 0)) || (g.fake_acc.is_some() != (g.n_fake > 0)) {
            return Err(parse_err(
                line,
                "accuracy presence disagrees with class counts",
            ));
        }
        match (g.real_acc, g.fake_acc, g.avg) {
            (Some(r), Some(f), Some(a)) if ((r + f) / 2.0 - a).abs() <= 1e-3 + 1e-9 => {}
            (Some(_), Some(_), _) => {
                return Err(parse_err(
                    line,
                    "avg is not the mean of real_acc and fake_acc",
                ))
            }
            (_, _, Some(_)) => {
                return Err(parse_err(line, "avg present without both class accuracies"))
            }
            _ => {}
        }
        out.push(g);
    }
    Ok(out)
}

fn parse_err(line: usize, e: impl ToString) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{GroupBy, Tally, OVERALL};
    use crate::store::Label;

    fn group(name: &str, real_acc: Option<f64>, fake_acc: Option<f64>) -> GroupResult {
        GroupResult {
            group: name.into(),
            n_real: usize::from(real_acc.is_some()) * 1000,
            n_fake: usize::from(fake_acc.is_some()) * 1000,
            avg: real_acc.zip(fake_acc).map(|(r, f)| (r + f) / 2.0),
            real_acc,
            fake_acc,
        }
    }

    fn report(groups: Vec<GroupResult>) -> EvaluationReport {
        let overall = GroupResult::from_counts(
            OVERALL,
            Tally {
                n_real: 4,
                n_fake: 4,
                correct_real: 4,
                correct_fake: 3,
            },
        );
        EvaluationReport {
            model_id: "m".into(),
            dataset: "d".into(),
            groups,
            overall,
            perturbation: None,
        }
    }

    #[test]
    fn half_even_cell() {
        let r = report(vec![group("ADM", Some(0.9135), Some(0.9135))]);
        assert!(
            render_report(&r, ReportFormat::Markdown).contains("| ADM | 0.914 | 0.914 | 0.914 |")
        );
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = EvaluationReport::from_predictions(
            "m",
            "d",
            Vec::<(&str, Label, Label)>::new(),
            GroupBy::Generator,
        );
        assert_eq!(
            render_report(&r, ReportFormat::Markdown),
            "| group | Real | Fake | Avg |\n|---|---:|---:|---:|\n"
        );
        assert_eq!(
            render_report(&r, ReportFormat::Csv),
            "group,n_real,n_fake,real_acc,fake_acc,avg\n"
        );
    }

    #[test]
    fn csv_parse_back() {
        let r = report(vec![
            group("a", Some(0.933), Some(0.895)),
            group("b", None, Some(0.25)),
        ]);
        let csv = render_report(&r, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 4);
        let back = parse_report_csv(&csv).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].avg, Some(0.914));
        assert_eq!(back[1].real_acc, None);
        assert_eq!(back[1].avg, None);
        assert_eq!(back[2].group, "all");
        assert_eq!(back[2].avg, Some(0.875));
    }

    #[test]
    fn csv_parse_rejects_bad_avg() {
        let bad = "group,n_real,n_fake,real_acc,fake_acc,avg\nx,1,1,1.000,0.000,0.700\n";
        assert!(matches!(
            parse_report_csv(bad),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad = "group,real,fake\n";
        assert!(matches!(
            parse_report_csv(bad),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad = "group,n_real,n_fake,real_acc,fake_acc,avg\nx,0,1,,1.5,\n";
        assert!(parse_report_csv(bad).is_err());
    }

    #[test]
    fn json_field_names() {
        let r = report(vec![group("a", Some(0.5), None)]);
        let v: serde_json::Value =
            serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        for k in ["model_id", "dataset", "groups", "overall", "perturbation"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["groups"][0]["fake_acc"].is_null());
        let back: EvaluationReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn wide_table() {
        let mut a = report(vec![
            group("GenImage", Some(0.97), Some(0.958)),
            group("Chameleon", Some(0.933), Some(0.895)),
        ]);
        a.model_id = "DINOv3-Linear".into();
        let mut b = report(vec![group("Chameleon", Some(0.5), Some(0.7))]);
        b.model_id = "Other".into();
        let t = render_wide_markdown(&[a, b]);
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines[0], "| Method | GenImage | Chameleon | Avg |");
        assert_eq!(lines[2], "| DINOv3-Linear | 0.964 | 0.914 | 0.939 |");
        assert_eq!(lines[3], "| Other | - | 0.600 | 0.600 |");
    }
}
