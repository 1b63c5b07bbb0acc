//! Image manifests with attribution metadata, and per-category positive /
//! negative train / test partitions.
//!
//! Every image is assigned to train or test exactly once (the global split),
//! and each category's binary problem then draws its positives and negatives
//! from those fixed halves, so no image is ever trained on by one classifier
//! and tested on by another.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const MANIFEST_HEADER: [&str; 6] = ["image_id", "path", "category", "author", "license", "source_url"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io failure on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: duplicate image id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown category {value:?}")]
    UnknownCategory { line: usize, value: String },
    #[error("line {line}: image file {path} does not exist")]
    MissingFile { line: usize, path: String },
    #[error("category {0} has no images")]
    CategoryMissing(Category),
    #[error("category {category}: need {needed} {split} negatives but only {available} available")]
    InsufficientNegatives {
        category: Category,
        split: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid partition option: {0}")]
    InvalidOption(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Cloudy,
    Foggy,
    Rainy,
    Snowy,
    Sunny,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Cloudy,
        Category::Foggy,
        Category::Rainy,
        Category::Snowy,
        Category::Sunny,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cloudy => "cloudy",
            Category::Foggy => "foggy",
            Category::Rainy => "rainy",
            Category::Snowy => "snowy",
            Category::Sunny => "sunny",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub category: Category,
    pub author: String,
    pub license: String,
    pub source_url: String,
}

/// Reads a manifest CSV. Relative image paths are resolved against the
/// manifest's directory. With `check_files`, every path must exist.
pub fn load_manifest(path: impl AsRef<Path>, check_files: bool) -> Result<Vec<ImageRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, base, check_files)
}

pub fn parse_manifest(text: &str, base: &Path, check_files: bool) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DatasetError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(DatasetError::MalformedRow {
            line: 1,
            reason: format!("header must be {}", MANIFEST_HEADER.join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| DatasetError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let field = |i: usize| row.get(i).unwrap_or_default().trim().to_string();
        let image_id = field(0);
        if image_id.is_empty() || image_id.contains([',', '\n', '\r']) {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("invalid image id {image_id:?}"),
            });
        }
        let raw_path = field(1);
        if raw_path.is_empty() {
            return Err(DatasetError::MalformedRow {
                line,
                reason: "empty path".into(),
            });
        }
        let category = field(2)
            .parse::<Category>()
            .map_err(|value| DatasetError::UnknownCategory { line, value })?;
        if !seen.insert(image_id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: image_id });
        }
        let resolved = base.join(&raw_path);
        if check_files && !resolved.is_file() {
            return Err(DatasetError::MissingFile {
                line,
                path: resolved.display().to_string(),
            });
        }
        records.push(ImageRecord {
            image_id,
            path: resolved,
            category,
            author: field(3),
            license: field(4),
            source_url: field(5),
        });
    }
    Ok(records)
}

/// Writes a manifest; paths are written as given.
pub fn write_manifest(records: &[ImageRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |e: &dyn fmt::Display| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(&e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| io_err(&e))?;
    for r in records {
        w.write_record([
            r.image_id.as_str(),
            &r.path.to_string_lossy(),
            r.category.as_str(),
            &r.author,
            &r.license,
            &r.source_url,
        ])
        .map_err(|e| io_err(&e))?;
    }
    w.flush().map_err(|e| io_err(&e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionOptions {
    pub train_fraction: f64,
    /// Negatives per positive in each split; 1.0 gives balanced problems.
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            train_fraction: 0.7,
            negative_ratio: 1.0,
            seed: 42,
        }
    }
}

impl PartitionOptions {
    fn validate(&self) -> Result<(), DatasetError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DatasetError::InvalidOption(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.negative_ratio.is_finite() && self.negative_ratio > 0.0) {
            return Err(DatasetError::InvalidOption(format!(
                "negative_ratio must be > 0, got {}",
                self.negative_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPartition {
    pub category: Category,
    pub pos_train: Vec<String>,
    pub pos_test: Vec<String>,
    pub neg_train: Vec<String>,
    pub neg_test: Vec<String>,
}

/// Train/test ids per category, in shuffled order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalSplit {
    train: Vec<(Category, Vec<String>)>,
    test: Vec<(Category, Vec<String>)>,
}

impl GlobalSplit {
    pub fn train(&self, c: Category) -> &[String] {
        lookup(&self.train, c)
    }

    pub fn test(&self, c: Category) -> &[String] {
        lookup(&self.test, c)
    }
}

fn lookup(v: &[(Category, Vec<String>)], c: Category) -> &[String] {
    v.iter()
        .find(|(k, _)| *k == c)
        .map_or(&[], |(_, ids)| ids.as_slice())
}

fn train_count(n: usize, fraction: f64) -> usize {
    // guard against 0.7 * 10 landing at 6.999...
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Shuffles each category's images with its own seeded stream and cuts the
/// first `floor(fraction * n)` into train.
pub fn global_split(records: &[ImageRecord], opts: &PartitionOptions) -> Result<GlobalSplit, DatasetError> {
    opts.validate()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in Category::ALL {
        let mut ids: Vec<String> = records
            .iter()
            .filter(|r| r.category == c)
            .map(|r| r.image_id.clone())
            .collect();
        ids.shuffle(&mut rng::stream(opts.seed, "split", &[c.as_str()]));
        let cut = train_count(ids.len(), opts.train_fraction);
        let rest = ids.split_off(cut);
        train.push((c, ids));
        test.push((c, rest));
    }
    Ok(GlobalSplit { train, test })
}

/// Round-robin allocation of `total` across pools with the given capacities.
fn allocate_evenly(total: usize, capacities: &[usize]) -> Option<Vec<usize>> {
    if capacities.iter().sum::<usize>() < total {
        return None;
    }
    let mut alloc = vec![0usize; capacities.len()];
    let mut remaining = total;
    while remaining > 0 {
        for (a, &cap) in alloc.iter_mut().zip(capacities) {
            if remaining > 0 && *a < cap {
                *a += 1;
                remaining -= 1;
            }
        }
    }
    Some(alloc)
}

fn draw_negatives(
    split: &GlobalSplit,
    category: Category,
    which: &'static str,
    needed: usize,
    seed: u64,
) -> Result<Vec<String>, DatasetError> {
    let others: Vec<Category> = Category::ALL.into_iter().filter(|&c| c != category).collect();
    let pools: Vec<&[String]> = others
        .iter()
        .map(|&o| {
            if which == "train" {
                split.train(o)
            } else {
                split.test(o)
            }
        })
        .collect();
    let caps: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let alloc = allocate_evenly(needed, &caps).ok_or(DatasetError::InsufficientNegatives {
        category,
        split: which,
        needed,
        available: caps.iter().sum(),
    })?;
    let stage = format!("neg-{which}");
    let mut out = Vec::with_capacity(needed);
    for ((other, pool), count) in others.iter().zip(pools).zip(alloc) {
        let mut ids = pool.to_vec();
        ids.shuffle(&mut rng::stream(
            seed,
            &stage,
            &[category.as_str(), other.as_str()],
        ));
        out.extend(ids.into_iter().take(count));
    }
    Ok(out)
}

fn partition_from_split(
    split: &GlobalSplit,
    category: Category,
    opts: &PartitionOptions,
) -> Result<CategoryPartition, DatasetError> {
    let pos_train = split.train(category).to_vec();
    let pos_test = split.test(category).to_vec();
    if pos_train.is_empty() && pos_test.is_empty() {
        return Err(DatasetError::CategoryMissing(category));
    }
    let n_train = (pos_train.len() as f64 * opts.negative_ratio).round() as usize;
    let n_test = (pos_test.len() as f64 * opts.negative_ratio).round() as usize;
    let neg_train = draw_negatives(split, category, "train", n_train, opts.seed)?;
    let neg_test = draw_negatives(split, category, "test", n_test, opts.seed)?;
    Ok(CategoryPartition {
        category,
        pos_train,
        pos_test,
        neg_train,
        neg_test,
    })
}

/// Positive/negative train/test lists for one category.
pub fn partition(
    records: &[ImageRecord],
    category: Category,
    opts: &PartitionOptions,
) -> Result<CategoryPartition, DatasetError> {
    let split = global_split(records, opts)?;
    partition_from_split(&split, category, opts)
}

/// All five partitions, drawn from one global split.
pub fn partition_all(
    records: &[ImageRecord],
    opts: &PartitionOptions,
) -> Result<Vec<CategoryPartition>, DatasetError> {
    let split = global_split(records, opts)?;
    Category::ALL
        .into_iter()
        .map(|c| partition_from_split(&split, c, opts))
        .collect()
}

/// Audit document for `partitions.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionReport {
    pub seed: u64,
    pub train_fraction: f64,
    pub negative_ratio: f64,
    pub partitions: Vec<CategoryPartition>,
}

impl PartitionReport {
    pub fn new(opts: &PartitionOptions, partitions: Vec<CategoryPartition>) -> Self {
        PartitionReport {
            seed: opts.seed,
            train_fraction: opts.train_fraction,
            negative_ratio: opts.negative_ratio,
            partitions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn records(per_class: usize) -> Vec<ImageRecord> {
        Category::ALL
            .into_iter()
            .flat_map(|c| {
                (0..per_class).map(move |i| ImageRecord {
                    image_id: format!("{c}_{i:04}"),
                    path: PathBuf::from(format!("{c}/{i}.png")),
                    category: c,
                    author: "a".into(),
                    license: "CC-BY-4.0".into(),
                    source_url: "https://example.org".into(),
                })
            })
            .collect()
    }

    const MANIFEST: &str = "image_id,path,category,author,license,source_url
c1,c1.png,cloudy,Ann,CC-BY-4.0,https://example.org/1
f1,f1.png,foggy,Bo,CC0-1.0,https://example.org/2
r1,r1.png,rainy,Cy,CC-BY-SA-4.0,https://example.org/3
s1,s1.png,snowy,Di,CC-BY-4.0,https://example.org/4
u1,u1.png,sunny,Ed,CC-BY-4.0,https://example.org/5
";

    #[test]
    fn parses_five_rows() {
        let recs = parse_manifest(MANIFEST, Path::new("/data"), false).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs[2].category, Category::Rainy);
        assert_eq!(recs[2].path, PathBuf::from("/data/r1.png"));
        assert_eq!(recs[4].author, "Ed");
    }

    #[test]
    fn manifest_errors() {
        let stormy = MANIFEST.replace("rainy", "stormy");
        assert!(matches!(
            parse_manifest(&stormy, Path::new(""), false),
            Err(DatasetError::UnknownCategory { line: 4, value }) if value == "stormy"
        ));
        let dup = MANIFEST.replace("f1,f1.png", "c1,f1.png");
        assert!(matches!(
            parse_manifest(&dup, Path::new(""), false),
            Err(DatasetError::DuplicateId { line: 3, .. })
        ));
        let short = MANIFEST.replace(",https://example.org/2", "");
        assert!(matches!(
            parse_manifest(&short, Path::new(""), false),
            Err(DatasetError::MalformedRow { .. })
        ));
        let bad_header = MANIFEST.replace("source_url", "url");
        assert!(matches!(
            parse_manifest(&bad_header, Path::new(""), false),
            Err(DatasetError::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest(MANIFEST, Path::new("/definitely/not/here"), true),
            Err(DatasetError::MissingFile { line: 2, .. })
        ));
    }

    #[test]
    fn floor_split() {
        assert_eq!(train_count(10, 0.7), 7);
        assert_eq!(train_count(1100, 0.7), 770);
        assert_eq!(train_count(3, 0.7), 2);
    }

    #[test]
    fn even_allocation() {
        assert_eq!(allocate_evenly(770, &[770; 4]), Some(vec![193, 193, 192, 192]));
        assert_eq!(allocate_evenly(10, &[1, 100, 2, 100]), Some(vec![1, 4, 2, 3]));
        assert_eq!(allocate_evenly(10, &[1, 2, 3, 3]), None);
    }

    #[test]
    fn ten_positives() {
        let recs = records(10);
        let p = partition(&recs, Category::Snowy, &PartitionOptions::default()).unwrap();
        assert_eq!((p.pos_train.len(), p.pos_test.len()), (7, 3));
        assert_eq!((p.neg_train.len(), p.neg_test.len()), (7, 3));
        assert!(p
            .pos_train
            .iter()
            .chain(&p.pos_test)
            .all(|id| id.starts_with("snowy")));
        assert!(p
            .neg_train
            .iter()
            .chain(&p.neg_test)
            .all(|id| !id.starts_with("snowy")));
    }

    #[test]
    fn missing_category() {
        let recs: Vec<ImageRecord> = records(4)
            .into_iter()
            .filter(|r| r.category != Category::Foggy)
            .collect();
        assert!(matches!(
            partition(&recs, Category::Foggy, &PartitionOptions::default()),
            Err(DatasetError::CategoryMissing(Category::Foggy))
        ));
        // foggy missing means sunny needs 4 pools but only 3 have images; still enough
        assert!(partition(&recs, Category::Sunny, &PartitionOptions::default()).is_ok());
    }

    #[test]
    fn insufficient_negatives() {
        let mut recs = records(2);
        recs.extend(
            records(40)
                .into_iter()
                .filter(|r| r.category == Category::Sunny)
                .map(|mut r| {
                    r.image_id.push('x');
                    r
                }),
        );
        let opts = PartitionOptions::default();
        assert!(matches!(
            partition(&recs, Category::Sunny, &opts),
            Err(DatasetError::InsufficientNegatives { .. })
        ));
    }

    #[test]
    fn negative_ratio_option() {
        let recs = records(20);
        let opts = PartitionOptions {
            negative_ratio: 2.0,
            ..Default::default()
        };
        let p = partition(&recs, Category::Cloudy, &opts).unwrap();
        assert_eq!((p.neg_train.len(), p.neg_test.len()), (28, 12));
    }

    #[test]
    fn single_partition_matches_partition_all() {
        let recs = records(13);
        let opts = PartitionOptions {
            seed: 9,
            ..Default::default()
        };
        let all = partition_all(&recs, &opts).unwrap();
        for p in &all {
            assert_eq!(&partition(&recs, p.category, &opts).unwrap(), p);
        }
    }

    #[test]
    fn report_json_has_all_lists() {
        let recs = records(5);
        let opts = PartitionOptions::default();
        let json = PartitionReport::new(&opts, partition_all(&recs, &opts).unwrap()).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["partitions"].as_array().unwrap().len(), 5);
        assert_eq!(v["partitions"][0]["category"], "cloudy");
        assert!(v["partitions"][0]["neg_test"].is_array());
    }
}
