//! Average precision, mean AP and the model-by-setting results grid.

mod experiment;

pub use experiment::{
    run_experiment, CategoryResult, Experiment, ExperimentError, ExperimentReport, Extractor,
    PartitionedDataset, SegmentStats, StageError,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ranking has no positive items")]
    NoPositives,
    #[error("ranking has no negative items")]
    NoNegatives,
    #[error("non-finite score for {0}")]
    NonFiniteScore(String),
    #[error("no per-category AP values to average")]
    EmptyInput,
    #[error("AP value {value} for {category} outside [0, 1]")]
    OutOfRange { category: String, value: f64 },
    #[error("results table row {row} has settings {found:?}, expected {expected:?}")]
    RaggedTable {
        row: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub image_id: String,
    pub score: f64,
    pub is_positive: bool,
}

impl RankedItem {
    pub fn new(image_id: impl Into<String>, score: f64, is_positive: bool) -> Self {
        RankedItem {
            image_id: image_id.into(),
            score,
            is_positive,
        }
    }
}

/// Non-interpolated AP: mean of precision@k over the ranks k holding a
/// positive, after a stable descending sort by score.
pub fn average_precision(items: &[RankedItem]) -> Result<f64, EvalError> {
    if let Some(bad) = items.iter().find(|i| !i.score.is_finite()) {
        return Err(EvalError::NonFiniteScore(bad.image_id.clone()));
    }
    let total_pos = items.iter().filter(|i| i.is_positive).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    if total_pos == items.len() {
        return Err(EvalError::NoNegatives);
    }
    let mut order: Vec<&RankedItem> = items.iter().collect();
    // sort_by is stable; reversed comparison keeps equal scores in input order
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, item) in order.iter().enumerate() {
        if item.is_positive {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total_pos as f64)
}

/// Arithmetic mean of per-category AP values.
pub fn mean_average_precision<'a>(
    per_category_ap: impl IntoIterator<Item = (&'a str, f64)>,
) -> Result<f64, EvalError> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (category, ap) in per_category_ap {
        if !(0.0..=1.0).contains(&ap) {
            return Err(EvalError::OutOfRange {
                category: category.to_string(),
                value: ap,
            });
        }
        n += 1;
        sum += ap;
    }
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(sum / n as f64)
}

/// mAP per (model/extractor, superpixel setting), rows in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    rows: IndexMap<String, BTreeMap<usize, f64>>,
}

impl ResultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, row: &str, setting: usize, map: f64) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&map) {
            return Err(EvalError::OutOfRange {
                category: format!("{row}@{setting}"),
                value: map,
            });
        }
        self.rows.entry(row.to_string()).or_default().insert(setting, map);
        Ok(())
    }

    pub fn get(&self, row: &str, setting: usize) -> Option<f64> {
        self.rows.get(row).and_then(|r| r.get(&setting)).copied()
    }

    pub fn row_names(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Settings of the first row; every row shares them once `validate` passes.
    pub fn settings(&self) -> Vec<usize> {
        self.rows
            .values()
            .next()
            .map(|r| r.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let expected = self.settings();
        for (name, row) in &self.rows {
            let found: Vec<usize> = row.keys().copied().collect();
            if found != expected {
                return Err(EvalError::RaggedTable {
                    row: name.clone(),
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    /// `model,setting,map` with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,setting,map\n");
        for (name, row) in &self.rows {
            for (setting, map) in row {
                writeln!(out, "{name},{setting},{map}").expect("writing to a String");
            }
        }
        out
    }

    /// Fixed-width text table: one row per model, one `<K> SP` column per
    /// setting, four decimals.
    pub fn to_text_table(&self) -> String {
        let settings = self.settings();
        let name_w = self.rows.keys().map(String::len).max().unwrap_or(0).max(5);
        let headers: Vec<String> = settings.iter().map(|s| format!("{s} SP")).collect();
        let col_w = headers.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = String::new();
        write!(out, "{:<name_w$}", "Model").unwrap();
        for h in &headers {
            write!(out, " | {h:>col_w$}").unwrap();
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_w));
        for _ in &headers {
            out.push_str("-+-");
            out.push_str(&"-".repeat(col_w));
        }
        out.push('\n');
        for (name, row) in &self.rows {
            write!(out, "{name:<name_w$}").unwrap();
            for s in &settings {
                match row.get(s) {
                    Some(v) => write!(out, " | {v:>col_w$.4}").unwrap(),
                    None => write!(out, " | {:>col_w$}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }
}
