//! Rendering of reports and comparisons, plus histogram data.
//!
//! Column order is Scenario, Mean, one exceedance column per threshold, then
//! VaR and ES per alpha.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::risk::{Comparison, RiskReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (expected json, csv or markdown)")),
        }
    }
}

fn header(thresholds: &[f64], alphas: &[f64], csv: bool) -> Vec<String> {
    let mut cols = vec!["Scenario".to_string(), "Mean".to_string()];
    for (i, t) in thresholds.iter().enumerate() {
        cols.push(if csv {
            format!("P(X>{t})")
        } else {
            format!("P{}", i + 1)
        });
    }
    for a in alphas {
        cols.push(format!("VaR({a})"));
    }
    for a in alphas {
        cols.push(format!("ES({a})"));
    }
    cols
}

fn cells(r: &RiskReport, csv: bool) -> Vec<String> {
    let num = |v: f64| if csv { format!("{v}") } else { format!("{v:.2}") };
    let prob = |v: f64| if csv { format!("{v}") } else { format!("{v:.4}") };
    let mut out = vec![r.mode.label().to_string(), num(r.mean)];
    out.extend(r.exceedance.iter().map(|e| prob(e.probability)));
    out.extend(r.var.iter().map(|v| num(v.value)));
    out.extend(r.es.iter().map(|v| num(v.value)));
    out
}

fn markdown(thresholds: &[f64], alphas: &[f64], rows: &[&RiskReport]) -> String {
    let cols = header(thresholds, alphas, false);
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", cols.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(cols.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", cells(r, false).join(" | "));
    }
    if !thresholds.is_empty() {
        let caption: Vec<String> = thresholds
            .iter()
            .enumerate()
            .map(|(i, t)| format!("P{} = P(X_total > {t})", i + 1))
            .collect();
        let _ = writeln!(s, "\n{}", caption.join("; "));
    }
    s
}

fn csv(thresholds: &[f64], alphas: &[f64], rows: &[&RiskReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", header(thresholds, alphas, true).join(","));
    for r in rows {
        let _ = writeln!(s, "{}", cells(r, true).join(","));
    }
    s
}

pub fn render_report(report: &RiskReport, format: Format) -> String {
    let (t, a) = (report.thresholds(), report.alphas());
    match format {
        Format::Json => to_json(report),
        Format::Csv => csv(&t, &a, &[report]),
        Format::Markdown => markdown(&t, &a, &[report]),
    }
}

pub fn render_comparison(cmp: &Comparison, format: Format) -> String {
    let rows: Vec<&RiskReport> = cmp.rows.iter().map(|r| &r.report).collect();
    match format {
        Format::Json => to_json(cmp),
        Format::Csv => csv(&cmp.thresholds, &cmp.alphas, &rows),
        Format::Markdown => markdown(&cmp.thresholds, &cmp.alphas, &rows),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

/// A saved report or comparison, as written by [`render_report`] or
/// [`render_comparison`] in JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SavedOutput {
    Comparison(Comparison),
    Report(RiskReport),
}

impl SavedOutput {
    pub fn render(&self, format: Format) -> String {
        match self {
            SavedOutput::Comparison(c) => render_comparison(c, format),
            SavedOutput::Report(r) => render_report(r, format),
        }
    }
}

pub fn parse_saved(text: &str) -> serde_json::Result<SavedOutput> {
    serde_json::from_str(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// `bins` equal-width bins over `[min, max]`; the last bin is closed on the
/// right so every value is counted. A constant sample puts everything in the
/// first bin of a unit-width grid.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    if bins == 0 || values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 / bins as f64 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins && hi > lo { hi } else { lo + (i + 1) as f64 * width },
            count,
        })
        .collect()
}

pub fn histogram_csv(bins: &[Bin]) -> String {
    let mut s = String::from("bin_left,bin_right,count\n");
    for b in bins {
        let _ = writeln!(s, "{},{},{}", b.left, b.right, b.count);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{compare_scenarios, summarize, SampleSet};
    use crate::scenario::ScenarioMode;

    fn report(mode: ScenarioMode) -> RiskReport {
        let s = SampleSet::new((1..=100).map(f64::from).collect(), 7, mode);
        summarize(&s, &[30.0], &[0.95]).unwrap()
    }

    #[test]
    fn markdown_headers() {
        let cmp = compare_scenarios(&[report(ScenarioMode::NonAi), report(ScenarioMode::FullAi)]).unwrap();
        let md = render_comparison(&cmp, Format::Markdown);
        let first = md.lines().next().unwrap();
        assert_eq!(first, "| Scenario | Mean | P1 | VaR(0.95) | ES(0.95) |");
        assert!(md.contains("| Non-AI | 50.50 | 0.7000 | 95.00 | 98.00 |"));
        assert!(md.contains("P1 = P(X_total > 30)"));
    }

    #[test]
    fn csv_layout() {
        let c = render_report(&report(ScenarioMode::NonAi), Format::Csv);
        assert_eq!(c, "Scenario,Mean,P(X>30),VaR(0.95),ES(0.95)\nNon-AI,50.5,0.7,95,98\n");
    }

    #[test]
    fn saved_round_trip() {
        let r = report(ScenarioMode::FullAi);
        let parsed = parse_saved(&render_report(&r, Format::Json)).unwrap();
        assert_eq!(parsed, SavedOutput::Report(r.clone()));
        let cmp = compare_scenarios(&[report(ScenarioMode::NonAi), r]).unwrap();
        let parsed = parse_saved(&render_comparison(&cmp, Format::Json)).unwrap();
        assert_eq!(parsed, SavedOutput::Comparison(cmp));
    }

    #[test]
    fn histogram_partitions_sample() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let h = histogram(&xs, 50);
        assert_eq!(h.len(), 50);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1000);
        assert_eq!(h[0].left, 0.0);
        assert_eq!(h[49].right, 999f64.sqrt());
        let c = histogram(&[3.0; 5], 4);
        assert_eq!(c[0].count, 5);
        assert!(histogram(&[], 3).is_empty());
        assert!(histogram_csv(&h).starts_with("bin_left,bin_right,count\n"));
    }
}
