//! Prediction accuracy, base-normalised cost and time metrics, and
//! wrong-prediction histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-binary entry {value} at sample {sample}, row {row}, period {t}")]
    NonBinary { sample: usize, row: usize, t: usize, value: u8 },
    #[error("base value must be positive, got {0}")]
    NonPositiveBase(f64),
}

/// `1 - mean |y - y'|` over samples x resources x periods of 0/1 tensors.
pub fn accuracy(pred: &[Vec<Vec<u8>>], truth: &[Vec<Vec<u8>>]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::Shape(format!("{} vs {} samples", pred.len(), truth.len())));
    }
    let mut total = 0usize;
    let mut wrong = 0usize;
    for (m, (p, y)) in pred.iter().zip(truth).enumerate() {
        if p.len() != y.len() {
            return Err(MetricsError::Shape(format!("sample {m}: {} vs {} rows", p.len(), y.len())));
        }
        for (i, (pr, yr)) in p.iter().zip(y).enumerate() {
            if pr.len() != yr.len() {
                return Err(MetricsError::Shape(format!("sample {m}, row {i}: {} vs {} periods", pr.len(), yr.len())));
            }
            for (t, (&a, &b)) in pr.iter().zip(yr).enumerate() {
                for value in [a, b] {
                    if value > 1 {
                        return Err(MetricsError::NonBinary { sample: m, row: i, t, value });
                    }
                }
                total += 1;
                wrong += usize::from(a != b);
            }
        }
    }
    if total == 0 {
        return Err(MetricsError::Shape("empty tensors".into()));
    }
    Ok(1.0 - wrong as f64 / total as f64)
}

/// Probabilities to 0/1 labels: `P >= 0.5` is class 1.
pub fn classify(probs: &[Vec<f64>]) -> Vec<Vec<u8>> {
    probs
        .iter()
        .map(|row| row.iter().map(|&p| u8::from(p >= 0.5)).collect())
        .collect()
}

/// Number of entries where two label matrices differ.
pub fn wrong_predictions(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> usize {
    pred.iter()
        .zip(truth)
        .map(|(p, y)| p.iter().zip(y).filter(|(a, b)| a != b).count())
        .sum()
}

/// Base-normalised cost difference in percent.
pub fn bnc(base_cost: f64, reduced_cost: f64) -> Result<f64, MetricsError> {
    if !(base_cost > 0.0) {
        return Err(MetricsError::NonPositiveBase(base_cost));
    }
    Ok((base_cost - reduced_cost).abs() / base_cost * 100.0)
}

/// Base-normalised time saved in percent, as an absolute value.
pub fn bnts(base_time: f64, reduced_time: f64) -> Result<f64, MetricsError> {
    Ok(bnts_signed(base_time, reduced_time)?.abs())
}

/// Time saved in percent of the base time; negative when the reduced model
/// was slower.
pub fn bnts_signed(base_time: f64, reduced_time: f64) -> Result<f64, MetricsError> {
    if !(base_time > 0.0) {
        return Err(MetricsError::NonPositiveBase(base_time));
    }
    Ok((base_time - reduced_time) / base_time * 100.0)
}

/// Counts of samples per wrong-prediction count.
pub fn error_histogram(counts: &[usize]) -> BTreeMap<usize, usize> {
    let mut bins = BTreeMap::new();
    for &c in counts {
        *bins.entry(c).or_insert(0) += 1;
    }
    bins
}

pub fn histogram_csv(bins: &BTreeMap<usize, usize>) -> String {
    let mut out = String::from("wrong_predictions,samples\n");
    for (k, v) in bins {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

/// Plain-text bar rendering of a histogram.
pub fn histogram_text(bins: &BTreeMap<usize, usize>) -> String {
    let peak = bins.values().copied().max().unwrap_or(0).max(1);
    let mut out = String::new();
    for (k, v) in bins {
        let bar = "#".repeat((v * 40).div_ceil(peak));
        out.push_str(&format!("{k:>5} | {bar} {v}\n"));
    }
    out
}

/// One verified test sample for one reduced variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub sample: usize,
    pub variant: String,
    pub feasible: bool,
    pub base_cost: f64,
    pub base_time: f64,
    pub reduced_cost: Option<f64>,
    pub reduced_time: f64,
    pub bnc: Option<f64>,
    pub bnts: f64,
    pub bnts_signed: f64,
    pub wrong_predictions: usize,
    /// Lines screened out whose recomputed flow exceeds the limit.
    pub violations: usize,
}

impl VerificationRecord {
    pub const CSV_HEADER: &'static str =
        "sample,variant,feasible,base_cost,red_cost,bnc,base_time,red_time,bnts,bnts_signed,wrong_preds,violations";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sample,
            self.variant,
            self.feasible,
            self.base_cost,
            opt(self.reduced_cost),
            opt(self.bnc),
            self.base_time,
            self.reduced_time,
            self.bnts,
            self.bnts_signed,
            self.wrong_predictions,
            self.violations
        )
    }
}

pub fn records_csv(records: &[VerificationRecord]) -> String {
    let mut out = format!("{}\n", VerificationRecord::CSV_HEADER);
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-variant aggregate over the verified samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub samples: usize,
    pub infeasible_samples: usize,
    pub feasible_fraction: f64,
    pub mean_bnc: Option<f64>,
    pub median_bnc: Option<f64>,
    pub max_bnc: Option<f64>,
    pub mean_bnts: Option<f64>,
    pub mean_bnts_signed: Option<f64>,
    pub median_bnts_signed: Option<f64>,
    pub samples_with_violations: usize,
}

pub fn summarize(variant: &str, records: &[VerificationRecord]) -> VariantSummary {
    let rows: Vec<&VerificationRecord> = records.iter().filter(|r| r.variant == variant).collect();
    let feasible: Vec<&&VerificationRecord> = rows.iter().filter(|r| r.feasible).collect();
    let mut bncs: Vec<f64> = feasible.iter().filter_map(|r| r.bnc).collect();
    let bnts: Vec<f64> = feasible.iter().map(|r| r.bnts).collect();
    let mut signed: Vec<f64> = feasible.iter().map(|r| r.bnts_signed).collect();
    VariantSummary {
        variant: variant.to_string(),
        samples: rows.len(),
        infeasible_samples: rows.len() - feasible.len(),
        feasible_fraction: if rows.is_empty() {
            0.0
        } else {
            feasible.len() as f64 / rows.len() as f64
        },
        mean_bnc: mean(&bncs),
        max_bnc: bncs.iter().copied().reduce(f64::max),
        median_bnc: median(&mut bncs),
        mean_bnts: mean(&bnts),
        mean_bnts_signed: mean(&signed),
        median_bnts_signed: median(&mut signed),
        samples_with_violations: rows.iter().filter(|r| r.violations > 0).count(),
    }
}

/// Plain-text table with one column per variant.
pub fn summary_table(summaries: &[VariantSummary]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    let mut lines = vec![format!("{:<26}", "Metric")];
    let rows: [(&str, Box<dyn Fn(&VariantSummary) -> String>); 7] = [
        ("Samples", Box::new(|s| s.samples.to_string())),
        ("Infeasible samples", Box::new(|s| s.infeasible_samples.to_string())),
        ("Mean BNC (%)", Box::new(|s| fmt(s.mean_bnc))),
        ("Median BNC (%)", Box::new(|s| fmt(s.median_bnc))),
        ("Mean BNTS (%)", Box::new(|s| fmt(s.mean_bnts))),
        ("Median signed BNTS (%)", Box::new(|s| fmt(s.median_bnts_signed))),
        ("Samples with violations", Box::new(|s| s.samples_with_violations.to_string())),
    ];
    for s in summaries {
        lines[0].push_str(&format!("{:>12}", s.variant));
    }
    for (name, f) in rows.iter() {
        let mut line = format!("{name:<26}");
        for s in summaries {
            line.push_str(&format!("{:>12}", f(s)));
        }
        lines.push(line);
    }
    lines.join("\n") + "\n"
}
