use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use thiserror::Error;

use super::{average_precision, mean_average_precision, EvalError, RankedItem, ResultsTable};
use crate::datasetman::{
    partition_all, Category, CategoryPartition, DatasetError, ImageRecord, PartitionOptions,
};
use crate::features::{
    extract_color_histogram, extract_gradient_histogram, read_feature_file, FeatureError, FeatureSet,
    FeatureVector,
};
use crate::imgcore::{load_image, ImageError};
use crate::maskaug::{augment_with_stats, AugmentError, OverlaySpec, DEFAULT_MASK_COLOR};
use crate::rng::derive_seed;
use crate::svm::{score, train, SvmError, TrainConfig};

/// Where a feature column comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Extractor {
    ColorHistogram {
        bins: usize,
    },
    GradientHistogram {
        orientation_bins: usize,
    },
    /// Precomputed `WXFEAT` files; `{K}` in the path is replaced by the
    /// superpixel setting.
    FeatureFile {
        label: Option<String>,
        template: String,
    },
}

impl Extractor {
    /// `color_hist[:bins]`, `grad_hist[:bins]`, `[label=]path/to/features_sp{K}.wxfeat`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) if h == "color_hist" || h == "grad_hist" => (h, Some(a)),
            _ => (spec, None),
        };
        let num = |default: usize| -> Result<usize, String> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| format!("bad bin count in {spec:?}"))
            })
        };
        match head {
            "color_hist" => Ok(Extractor::ColorHistogram { bins: num(8)? }),
            "grad_hist" => Ok(Extractor::GradientHistogram {
                orientation_bins: num(9)?,
            }),
            "" => Err("empty extractor spec".into()),
            _ => {
                let (label, template) = match spec.split_once('=') {
                    Some((l, p)) if !l.is_empty() && !l.contains(['/', '\\']) => (Some(l.to_string()), p),
                    _ => (None, spec),
                };
                Ok(Extractor::FeatureFile {
                    label,
                    template: template.to_string(),
                })
            }
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, Extractor::FeatureFile { .. })
    }

    pub fn feature_path(&self, setting: usize) -> Option<PathBuf> {
        match self {
            Extractor::FeatureFile { template, .. } => {
                Some(PathBuf::from(template.replace("{K}", &setting.to_string())))
            }
            _ => None,
        }
    }

    fn compute(&self, id: &str, img: &crate::imgcore::Image) -> Result<FeatureVector, FeatureError> {
        match *self {
            Extractor::ColorHistogram { bins } => extract_color_histogram(id, img, bins),
            Extractor::GradientHistogram { orientation_bins } => {
                extract_gradient_histogram(id, img, orientation_bins)
            }
            Extractor::FeatureFile { .. } => unreachable!("feature files are read, not computed"),
        }
    }

    fn builtin_dimension(&self) -> usize {
        match *self {
            Extractor::ColorHistogram { bins } => bins.pow(3),
            Extractor::GradientHistogram { orientation_bins } => {
                crate::features::GRADIENT_GRID.pow(2) * orientation_bins
            }
            Extractor::FeatureFile { .. } => 0,
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::ColorHistogram { bins } => write!(f, "color_hist{bins}"),
            Extractor::GradientHistogram { orientation_bins } => write!(f, "grad_hist{orientation_bins}"),
            Extractor::FeatureFile { label: Some(l), .. } => f.write_str(l),
            Extractor::FeatureFile { template, .. } => {
                let stem = Path::new(template)
                    .file_stem()
                    .map(|s| s.to_string_lossy().replace("{K}", "K"))
                    .unwrap_or_else(|| template.clone());
                f.write_str(&stem)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("feature set has no vector for image {0}")]
    MissingFeature(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("extractor {extractor}, setting {setting}{}: {source}", category.map(|c| format!(", category {c}")).unwrap_or_default())]
    Stage {
        extractor: String,
        setting: usize,
        category: Option<Category>,
        #[source]
        source: StageError,
    },
    #[error("image {image_id} at setting {setting}: {source}")]
    ImageStage {
        image_id: String,
        setting: usize,
        #[source]
        source: StageError,
    },
}

/// Records plus their five one-vs-rest partitions.
#[derive(Debug, Clone)]
pub struct PartitionedDataset {
    pub records: Vec<ImageRecord>,
    pub partitions: Vec<CategoryPartition>,
}

impl PartitionedDataset {
    pub fn new(records: Vec<ImageRecord>, opts: &PartitionOptions) -> Result<Self, DatasetError> {
        let partitions = partition_all(&records, opts)?;
        Ok(PartitionedDataset { records, partitions })
    }

    /// Ids referenced by any partition, in manifest order.
    fn used_records(&self) -> Vec<&ImageRecord> {
        let used: std::collections::HashSet<&str> = self
            .partitions
            .iter()
            .flat_map(|p| {
                p.pos_train
                    .iter()
                    .chain(&p.pos_test)
                    .chain(&p.neg_train)
                    .chain(&p.neg_test)
            })
            .map(String::as_str)
            .collect();
        self.records
            .iter()
            .filter(|r| used.contains(r.image_id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: TrainConfig,
    pub mask_color: [u8; 3],
    pub compactness: f64,
    /// L2-normalise feature vectors before training.
    pub normalize: bool,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            train: TrainConfig::default(),
            mask_color: DEFAULT_MASK_COLOR,
            compactness: 10.0,
            normalize: true,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryResult {
    pub extractor: String,
    pub setting: usize,
    pub category: Category,
    pub average_precision: f64,
    pub final_objective: f64,
    pub train_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    pub setting: usize,
    pub images: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub table: ResultsTable,
    pub per_category: Vec<CategoryResult>,
    pub segment_stats: Vec<SegmentStats>,
}

type SettingFeatures = Vec<HashMap<String, FeatureVector>>;

/// Augments, extracts features for every built-in extractor, and collects
/// realised segment counts, for one setting.
fn builtin_features(
    records: &[&ImageRecord],
    extractors: &[&Extractor],
    setting: usize,
    exp: &Experiment,
) -> Result<(SettingFeatures, Option<SegmentStats>), ExperimentError> {
    let spec = OverlaySpec {
        color: exp.mask_color,
        superpixel_count: setting,
        compactness: exp.compactness,
    };
    let per_image: Vec<(Vec<FeatureVector>, Option<usize>)> = records
        .par_iter()
        .map(|r| {
            let wrap = |e: StageError| ExperimentError::ImageStage {
                image_id: r.image_id.clone(),
                setting,
                source: e,
            };
            let img = load_image(&r.path).map_err(|e| wrap(e.into()))?;
            let out = augment_with_stats(&img, &spec).map_err(|e| wrap(e.into()))?;
            let feats = extractors
                .iter()
                .map(|x| x.compute(&r.image_id, &out.image))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| wrap(e.into()))?;
            Ok((feats, out.segment_count))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let counts: Vec<usize> = per_image.iter().filter_map(|(_, c)| *c).collect();
    let stats = (!counts.is_empty()).then(|| SegmentStats {
        setting,
        images: counts.len(),
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
    });

    let mut maps: SettingFeatures = vec![HashMap::with_capacity(records.len()); extractors.len()];
    for (feats, _) in per_image {
        for (map, f) in maps.iter_mut().zip(feats) {
            map.insert(f.image_id.clone(), f);
        }
    }
    Ok((maps, stats))
}

fn evaluate_category(
    features: &HashMap<String, FeatureVector>,
    partition: &CategoryPartition,
    exp: &Experiment,
    extractor: &str,
    setting: usize,
) -> Result<CategoryResult, StageError> {
    let gather = |ids: &[String]| -> Result<Vec<FeatureVector>, StageError> {
        ids.iter()
            .map(|id| {
                features
                    .get(id)
                    .cloned()
                    .ok_or_else(|| StageError::MissingFeature(id.clone()))
            })
            .collect()
    };
    let pos = gather(&partition.pos_train)?;
    let neg = gather(&partition.neg_train)?;
    let category = partition.category;
    let cfg = TrainConfig {
        seed: derive_seed(exp.train.seed, "svm", &[category.as_str()]),
        ..exp.train
    };
    let model = train(category.as_str(), &pos, &neg, &cfg)?;

    let mut ranked = Vec::with_capacity(partition.pos_test.len() + partition.neg_test.len());
    for (ids, positive) in [(&partition.pos_test, true), (&partition.neg_test, false)] {
        for v in gather(ids)? {
            ranked.push(RankedItem::new(v.image_id.clone(), score(&model, &v)?, positive));
        }
    }
    let ap = average_precision(&ranked)?;
    debug!(
        "{extractor} @ {setting} SP, {category}: AP {ap:.4}, objective {:.6}",
        model.final_objective
    );
    Ok(CategoryResult {
        extractor: extractor.to_string(),
        setting,
        category,
        average_precision: ap,
        final_objective: model.final_objective,
        train_seed: cfg.seed,
    })
}

fn load_feature_column(
    extractor: &Extractor,
    setting: usize,
    normalize: bool,
) -> Result<(String, HashMap<String, FeatureVector>), StageError> {
    let path = extractor.feature_path(setting).expect("feature-file extractor");
    let set: FeatureSet = read_feature_file(&path)?;
    let name = set.extractor_name().to_string();
    let mut map = HashMap::with_capacity(set.len());
    for v in set.iter() {
        let v = if normalize {
            crate::features::l2_normalize(v)?
        } else {
            v.clone()
        };
        map.insert(v.image_id.clone(), v);
    }
    Ok((name, map))
}

/// Fills one mAP cell per (extractor, setting).
pub fn run_experiment(
    dataset: &PartitionedDataset,
    extractors: &[Extractor],
    settings: &[usize],
    exp: &Experiment,
) -> Result<ExperimentReport, ExperimentError> {
    if settings.is_empty() {
        return Err(ExperimentError::Invalid("no superpixel settings".into()));
    }
    if extractors.is_empty() {
        return Err(ExperimentError::Invalid("no extractors".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = settings.iter().find(|s| !seen.insert(**s)) {
        return Err(ExperimentError::Invalid(format!("setting {dup} listed twice")));
    }
    for c in Category::ALL {
        if !dataset.partitions.iter().any(|p| p.category == c) {
            return Err(ExperimentError::Invalid(format!("no partition for category {c}")));
        }
    }
    exp.train
        .validate()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.jobs)
        .build()
        .map_err(|e| ExperimentError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(dataset, extractors, settings, exp))
}

fn run_inner(
    dataset: &PartitionedDataset,
    extractors: &[Extractor],
    settings: &[usize],
    exp: &Experiment,
) -> Result<ExperimentReport, ExperimentError> {
    let records = dataset.used_records();
    let builtins: Vec<&Extractor> = extractors.iter().filter(|e| e.is_builtin()).collect();
    let row_names: Vec<String> = extractors.iter().map(ToString::to_string).collect();
    {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = row_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(ExperimentError::Invalid(format!(
                "extractor row {dup} listed twice"
            )));
        }
    }

    let mut table = ResultsTable::new();
    let mut per_category = Vec::new();
    let mut segment_stats = Vec::new();

    for &setting in settings {
        let mut columns: Vec<HashMap<String, FeatureVector>> = Vec::with_capacity(extractors.len());
        let mut builtin_cols = if builtins.is_empty() {
            Vec::new()
        } else {
            info!(
                "setting {setting}: augmenting and extracting {} images",
                records.len()
            );
            let (maps, stats) = builtin_features(&records, &builtins, setting, exp)?;
            if let Some(s) = stats {
                info!(
                    "setting {setting}: realised segments min {} mean {:.2} max {}",
                    s.min, s.mean, s.max
                );
                segment_stats.push(s);
            }
            maps
        }
        .into_iter();

        for (x, name) in extractors.iter().zip(&row_names) {
            let stage = |category: Option<Category>, source: StageError| ExperimentError::Stage {
                extractor: name.clone(),
                setting,
                category,
                source,
            };
            if x.is_builtin() {
                let mut col = builtin_cols.next().expect("one column per builtin extractor");
                if exp.normalize {
                    for v in col.values_mut() {
                        *v = crate::features::l2_normalize(v).map_err(|e| stage(None, e.into()))?;
                    }
                }
                debug_assert!(col.values().all(|v| v.dimension() == x.builtin_dimension()));
                columns.push(col);
            } else {
                let (_, col) = load_feature_column(x, setting, exp.normalize).map_err(|e| stage(None, e))?;
                columns.push(col);
            }
        }

        let cells: Vec<(usize, Category)> = (0..extractors.len())
            .flat_map(|xi| dataset.partitions.iter().map(move |p| (xi, p.category)))
            .collect();
        let results: Vec<CategoryResult> = cells
            .par_iter()
            .map(|&(xi, category)| {
                let partition = dataset
                    .partitions
                    .iter()
                    .find(|p| p.category == category)
                    .expect("category present");
                evaluate_category(&columns[xi], partition, exp, &row_names[xi], setting).map_err(|source| {
                    ExperimentError::Stage {
                        extractor: row_names[xi].clone(),
                        setting,
                        category: Some(category),
                        source,
                    }
                })
            })
            .collect::<Result<_, _>>()?;

        for (xi, name) in row_names.iter().enumerate() {
            let row: Vec<&CategoryResult> = results.iter().filter(|r| &r.extractor == name).collect();
            let map = mean_average_precision(row.iter().map(|r| (r.category.as_str(), r.average_precision)))
                .map_err(|e| ExperimentError::Stage {
                    extractor: name.clone(),
                    setting,
                    category: None,
                    source: e.into(),
                })?;
            info!("{} @ {setting} SP: mAP {map:.4}", row_names[xi]);
            table
                .set(name, setting, map)
                .map_err(|e| ExperimentError::Stage {
                    extractor: name.clone(),
                    setting,
                    category: None,
                    source: e.into(),
                })?;
        }
        per_category.extend(results);
    }

    Ok(ExperimentReport {
        table,
        per_category,
        segment_stats,
    })
}
