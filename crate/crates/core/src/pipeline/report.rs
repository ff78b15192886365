//! Reports computed from generation records alone.
//!
//! JSON and CSV carry full-precision numbers; Markdown rounds counts-derived
//! percentages to one decimal, confidences, FAD values and bin percentages
//! to two.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use super::state::{GenerationRecord, RunManifest};
use super::{PipelineError, Stage};
use crate::corpus::Tier;
use crate::metrics::{categorize_fad, summarize_confidence, ConfidenceSummary, FadCategory, FadMode, FadResult};

/// Rendered in place of an undefined statistic.
pub const UNDEFINED: &str = "—";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub attempted: usize,
    pub generated: usize,
    pub failed: usize,
    pub success_rate_percent: f64,
    pub correct: usize,
    /// Mean confidence over correct predictions.
    pub mean_confidence: Option<f64>,
}

pub fn build_generation_summary(records: &[GenerationRecord], attempted: usize) -> GenerationSummary {
    let attempted = if attempted < records.len() {
        log::warn!("attempted {attempted} < {} records; using the record count", records.len());
        records.len()
    } else {
        attempted
    };
    let generated = records.iter().filter(|r| r.generated()).count();
    let confidences: Vec<f64> = records
        .iter()
        .filter_map(|r| r.choice.as_ref())
        .filter(|c| c.correct)
        .map(|c| c.confidence)
        .collect();
    GenerationSummary {
        attempted,
        generated,
        failed: attempted - generated,
        success_rate_percent: percent(generated, attempted),
        correct: confidences.len(),
        mean_confidence: mean(&confidences),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadRow {
    pub group: String,
    pub samples: usize,
    pub median: f64,
    pub category: FadCategory,
    pub highly_similar_percent: f64,
}

/// One row per group with at least one score, in key order.
pub fn build_fad_table(scores: &BTreeMap<String, Vec<FadResult>>) -> Vec<FadRow> {
    scores
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(group, results)| {
            let mut values: Vec<f64> = results.iter().map(|r| r.value).collect();
            values.sort_by(f64::total_cmp);
            let median = median_sorted(&values);
            let highly = results
                .iter()
                .filter(|r| r.category == FadCategory::HighlySimilar)
                .count();
            FadRow {
                group: group.clone(),
                samples: results.len(),
                median,
                category: categorize_fad(median).unwrap_or(FadCategory::SignificantlyDistinct),
                highly_similar_percent: percent(highly, results.len()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceReport {
    pub scored: usize,
    pub correct: usize,
    pub accuracy_percent: f64,
    /// Over correct predictions only.
    pub confidence: Option<ConfidenceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub tier: Tier,
    pub method: String,
    pub model: String,
    pub seed: u64,
    pub summary: GenerationSummary,
    pub failures: BTreeMap<String, usize>,
    pub missing_modules: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fad_mode: Option<FadMode>,
    pub fad: Vec<FadRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_choice: Option<ChoiceReport>,
}

fn failure_label(r: &GenerationRecord) -> Option<String> {
    let stage = r.failed_at?;
    if let Some(kind) = &r.failure_kind {
        return Some(kind.label().to_string());
    }
    Some(
        match stage {
            Stage::Prompted => "prompt_error",
            Stage::Generated => "model_error",
            Stage::Executed => "extraction_error",
            Stage::Embedded => "embedding_error",
            _ => "scoring_error",
        }
        .to_string(),
    )
}

impl Report {
    pub fn from_manifest(m: &RunManifest) -> Result<Report, PipelineError> {
        let mut failures = BTreeMap::new();
        let mut missing_modules = BTreeMap::new();
        for r in &m.samples {
            if let Some(label) = failure_label(r) {
                *failures.entry(label).or_insert(0) += 1;
            }
            if let Some(crate::sandbox::FailureKind::MissingModule(name)) = &r.failure_kind {
                *missing_modules.entry(name.clone()).or_insert(0) += 1;
            }
        }

        let (fad_mode, fad) = if m.tier == Tier::Notes {
            if m.group_fad.is_empty() {
                let mut by_group: BTreeMap<String, Vec<FadResult>> = BTreeMap::new();
                for r in &m.samples {
                    if let Some(f) = &r.fad {
                        let g = r.group.clone().unwrap_or_else(|| "all".into());
                        by_group.entry(g).or_default().push(*f);
                    }
                }
                (Some(FadMode::PerSample), build_fad_table(&by_group))
            } else {
                let by_group = m.group_fad.iter().map(|(g, f)| (g.clone(), vec![*f])).collect();
                (Some(FadMode::PerGroup), build_fad_table(&by_group))
            }
        } else {
            (None, Vec::new())
        };

        let forced_choice = if m.tier == Tier::Notes {
            None
        } else {
            let choices: Vec<_> = m.samples.iter().filter_map(|r| r.choice.as_ref()).collect();
            let correct: Vec<f64> = choices.iter().filter(|c| c.correct).map(|c| c.confidence).collect();
            Some(ChoiceReport {
                scored: choices.len(),
                correct: correct.len(),
                accuracy_percent: percent(correct.len(), choices.len()),
                confidence: if correct.is_empty() {
                    None
                } else {
                    Some(summarize_confidence(&correct)?)
                },
            })
        };

        Ok(Report {
            run_id: m.run_id.clone(),
            tier: m.tier,
            method: m.method.as_str().to_string(),
            model: m.endpoint.clone().unwrap_or_default(),
            seed: m.seed,
            summary: build_generation_summary(&m.samples, m.samples.len()),
            failures,
            missing_modules,
            fad_mode,
            fad,
            forced_choice,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut row = |section: &str, key: &str, field: &str, value: String| {
            w.write_record([section, key, field, value.as_str()]).expect("in-memory write");
        };
        row("section", "key", "field", "value".into());
        row("run", "run", "run_id", self.run_id.clone());
        row("run", "run", "tier", self.tier.as_str().into());
        row("run", "run", "method", self.method.clone());
        row("run", "run", "model", self.model.clone());
        row("run", "run", "seed", self.seed.to_string());
        let s = &self.summary;
        for (field, value) in [
            ("attempted", s.attempted.to_string()),
            ("generated", s.generated.to_string()),
            ("failed", s.failed.to_string()),
            ("success_rate_percent", num(s.success_rate_percent)),
            ("correct", s.correct.to_string()),
            ("mean_confidence", s.mean_confidence.map(num).unwrap_or_default()),
        ] {
            row("summary", &self.method, field, value);
        }
        for (kind, n) in &self.failures {
            row("failures", kind, "count", n.to_string());
        }
        for (module, n) in &self.missing_modules {
            row("missing_modules", module, "count", n.to_string());
        }
        for f in &self.fad {
            row("fad", &f.group, "samples", f.samples.to_string());
            row("fad", &f.group, "median", num(f.median));
            row("fad", &f.group, "category", f.category.as_str().into());
            row("fad", &f.group, "highly_similar_percent", num(f.highly_similar_percent));
        }
        if let Some(c) = &self.forced_choice {
            row("forced_choice", "all", "scored", c.scored.to_string());
            row("forced_choice", "all", "correct", c.correct.to_string());
            row("forced_choice", "all", "accuracy_percent", num(c.accuracy_percent));
            if let Some(cs) = &c.confidence {
                for (field, v) in [("n", cs.n as f64), ("max", cs.max), ("min", cs.min), ("mean", cs.mean), ("median", cs.median)] {
                    let value = if field == "n" { cs.n.to_string() } else { num(v) };
                    row("confidence", "correct", field, value);
                }
                for b in &cs.bins {
                    let key = format!("{:.2}-{:.2}", b.lower, b.upper);
                    row("confidence_bin", &key, "count", b.count.to_string());
                    row("confidence_bin", &key, "percent", num(b.percent));
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let s = &self.summary;
        let _ = writeln!(out, "# Run {}\n", self.run_id);
        let _ = writeln!(out, "- tier: {}", self.tier);
        let _ = writeln!(out, "- method: {}", self.method);
        let _ = writeln!(out, "- model: {}", self.model);
        let _ = writeln!(out, "- seed: {}\n", self.seed);

        let _ = writeln!(out, "## Generation summary\n");
        if self.tier == Tier::Notes {
            let _ = writeln!(out, "| Model | Method | Attempted | Generated | Success rate |");
            let _ = writeln!(out, "|---|---|---:|---:|---:|");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |\n",
                self.model, self.method, s.attempted, s.generated, pct1(s.success_rate_percent)
            );
        } else {
            let _ = writeln!(out, "| Model | Method | Attempted | Generated | Success rate | Correct | Mean confidence |");
            let _ = writeln!(out, "|---|---|---:|---:|---:|---:|---:|");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                self.model,
                self.method,
                s.attempted,
                s.generated,
                pct1(s.success_rate_percent),
                s.correct,
                s.mean_confidence.map(f2).unwrap_or_else(|| UNDEFINED.into())
            );
        }

        if !self.failures.is_empty() {
            let _ = writeln!(out, "## Failures\n");
            let _ = writeln!(out, "| Kind | Count |");
            let _ = writeln!(out, "|---|---:|");
            for (k, n) in &self.failures {
                let _ = writeln!(out, "| {k} | {n} |");
            }
            out.push('\n');
            if !self.missing_modules.is_empty() {
                let _ = writeln!(out, "| Missing module | Count |");
                let _ = writeln!(out, "|---|---:|");
                for (k, n) in &self.missing_modules {
                    let _ = writeln!(out, "| {k} | {n} |");
                }
                out.push('\n');
            }
        }

        if let Some(mode) = self.fad_mode {
            let mode = match mode {
                FadMode::PerSample => "per sample",
                FadMode::PerGroup => "per group",
            };
            let _ = writeln!(out, "## FAD by instrument ({mode})\n");
            if self.fad.is_empty() {
                let _ = writeln!(out, "No FAD scores.\n");
            } else {
                let _ = writeln!(out, "| Instrument | Samples | Median FAD | Category | Highly similar |");
                let _ = writeln!(out, "|---|---:|---:|---|---:|");
                for f in &self.fad {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} |",
                        f.group,
                        f.samples,
                        f2(f.median),
                        f.category,
                        pct1(f.highly_similar_percent)
                    );
                }
                out.push('\n');
            }
        }

        if let Some(c) = &self.forced_choice {
            let _ = writeln!(out, "## Forced choice\n");
            let _ = writeln!(
                out,
                "{}/{} ({}) correctly classified\n",
                c.correct,
                c.scored,
                pct1(c.accuracy_percent)
            );
            if let Some(cs) = &c.confidence {
                let _ = writeln!(out, "### Confidence of correct predictions\n");
                let _ = writeln!(out, "- Maximum Confidence: {}", f2(cs.max));
                let _ = writeln!(out, "- Minimum Confidence: {}", f2(cs.min));
                let _ = writeln!(out, "- Mean Confidence: {}", f2(cs.mean));
                let _ = writeln!(out, "- Median Confidence: {}", f2(cs.median));
                for b in &cs.bins {
                    let _ = writeln!(
                        out,
                        "- Number of confidence values between {:.2} and {:.2}: {} ({:.2}%)",
                        b.lower, b.upper, b.count, b.percent
                    );
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }
}

/// Writes `report.<ext>` for each format into `run_dir`.
pub fn emit_report(
    manifest: &RunManifest,
    formats: &[ReportFormat],
    run_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let report = Report::from_manifest(manifest)?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut paths = Vec::new();
    for f in formats {
        let path = run_dir.join(format!("report.{}", f.extension()));
        fs::write(&path, report.render(f)).map_err(|e| PipelineError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn median_sorted(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Same text serde_json uses for the number.
fn num(x: f64) -> String {
    serde_json::Value::from(x).to_string()
}

pub fn pct1(x: f64) -> String {
    format!("{x:.1}%")
}

pub fn f2(x: f64) -> String {
    format!("{x:.2}")
}
