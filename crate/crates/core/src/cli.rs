//! Command-line front end. `skymask experiment --config run.json` runs the
//! whole grid; the other subcommands expose each stage on its own.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetman::{load_manifest, partition_all, Category, PartitionOptions, PartitionReport};
use crate::evalkit::{
    average_precision, mean_average_precision, run_experiment, Experiment, Extractor, PartitionedDataset,
    RankedItem,
};
use crate::features::{write_feature_file, FeatureSet, FeatureVector};
use crate::imgcore::{load_image, save_image};
use crate::maskaug::{augment_file, augment_with_stats, OverlaySpec, DEFAULT_MASK_COLOR};
use crate::rng::derive_seed;
use crate::superpixel::{render_segmentation, slic_segment, SlicParams};
use crate::svm::{score, train, LinearModel, TrainConfig};
use crate::synth::generate_dataset;

pub const DEFAULT_SETTINGS: [usize; 5] = [0, 25, 50, 75, 100];

#[derive(Debug, Parser)]
#[command(
    name = "skymask",
    version,
    about = "Superpixel mask augmentation and weather classification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image and write a pseudo-colour label PNG
    Segment(SegmentArgs),
    /// Write boundary-masked copies of every manifest image
    Augment(AugmentArgs),
    /// Extract a WXFEAT feature file for every manifest image
    Extract(ExtractArgs),
    /// Train one binary model per category from a feature file
    Train(TrainArgs),
    /// Score test partitions with trained models and report AP / mAP
    Evaluate(EvaluateArgs),
    /// Run the full extractor x setting grid from a JSON config
    Experiment(ExperimentArgs),
    /// Generate a procedural five-class dataset with a manifest
    Synth(SynthArgs),
}

fn parse_color(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [r, g, b] = parts[..] else {
        return Err(format!("expected R,G,B, got {s:?}"));
    };
    let c = |v: &str| v.trim().parse::<u8>().map_err(|_| format!("bad channel {v:?}"));
    Ok([c(r)?, c(g)?, c(b)?])
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub image: PathBuf,
    /// Requested superpixel count
    #[arg(short = 'k', long = "superpixels", value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Skip the small-fragment merge
    #[arg(long)]
    pub no_connectivity: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(short, long)]
    pub manifest: PathBuf,
    #[arg(short = 'k', long = "superpixels")]
    pub k: usize,
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, value_parser = parse_color, default_value = "255,255,0")]
    pub color: [u8; 3],
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(short, long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(short, long)]
    pub manifest: PathBuf,
    /// color_hist[:bins] or grad_hist[:bins]
    #[arg(short, long, default_value = "color_hist")]
    pub extractor: String,
    /// Superpixel mask applied before extraction (0 = raw)
    #[arg(short = 'k', long = "superpixels", default_value_t = 0)]
    pub k: usize,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_color, default_value = "255,255,0")]
    pub color: [u8; 3],
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    /// L2-normalise vectors before writing
    #[arg(long)]
    pub normalize: bool,
    #[arg(short, long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args, Clone)]
pub struct PartitionArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub negative_ratio: f64,
}

impl PartitionArgs {
    fn options(&self) -> PartitionOptions {
        PartitionOptions {
            train_fraction: self.train_fraction,
            negative_ratio: self.negative_ratio,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub manifest: PathBuf,
    #[arg(short, long)]
    pub features: PathBuf,
    /// Directory receiving `<category>.json` models
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Train only this category
    #[arg(short, long)]
    pub category: Option<Category>,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Skip L2 normalisation of the feature vectors
    #[arg(long)]
    pub raw_features: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(short, long)]
    pub manifest: PathBuf,
    #[arg(short, long)]
    pub features: PathBuf,
    /// Directory holding `<category>.json` models
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub raw_features: bool,
    #[command(flatten)]
    pub partition: PartitionArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's worker count
    #[arg(short, long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated superpixel settings, e.g. 0,25,50
    #[arg(long, value_delimiter = ',')]
    pub settings: Option<Vec<usize>>,
    /// Comma-separated extractor specs
    #[arg(long, value_delimiter = ',')]
    pub extractors: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// SVM settings inside a run config. A missing seed inherits the top-level one.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_lambda() -> f64 {
    TrainConfig::default().lambda
}

fn default_epochs() -> usize {
    TrainConfig::default().epochs
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lambda: default_lambda(),
            epochs: default_epochs(),
            seed: None,
        }
    }
}

/// JSON run configuration. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_settings")]
    pub settings: Vec<usize>,
    #[serde(default = "default_extractors")]
    pub extractors: Vec<String>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_color")]
    pub mask_color: [u8; 3],
    #[serde(default = "default_compactness")]
    pub compactness: f64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_ratio")]
    pub negative_ratio: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_true")]
    pub check_files: bool,
    #[serde(default)]
    pub jobs: usize,
}

fn default_settings() -> Vec<usize> {
    DEFAULT_SETTINGS.to_vec()
}
fn default_extractors() -> Vec<String> {
    vec!["color_hist".into()]
}
fn default_seed() -> u64 {
    42
}
fn default_color() -> [u8; 3] {
    DEFAULT_MASK_COLOR
}
fn default_compactness() -> f64 {
    10.0
}
fn default_fraction() -> f64 {
    0.7
}
fn default_ratio() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid run config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.manifest_path = base.join(&cfg.manifest_path);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.extractors = cfg
            .extractors
            .iter()
            .map(|spec| match Extractor::parse(spec) {
                Ok(Extractor::FeatureFile { label, template }) if Path::new(&template).is_relative() => {
                    let joined = base.join(&template).to_string_lossy().into_owned();
                    match label {
                        Some(l) => format!("{l}={joined}"),
                        None => joined,
                    }
                }
                _ => spec.clone(),
            })
            .collect();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() {
            bail!("settings must list at least one superpixel count");
        }
        if self.extractors.is_empty() {
            bail!("extractors must list at least one extractor");
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            bail!("compactness must be > 0");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.train.lambda,
            epochs: self.train.epochs,
            seed: self.train.seed.unwrap_or(self.seed),
        }
    }

    pub fn partition_options(&self) -> PartitionOptions {
        PartitionOptions {
            train_fraction: self.train_fraction,
            negative_ratio: self.negative_ratio,
            seed: self.seed,
        }
    }

    fn apply_overrides(&mut self, args: &ExperimentArgs) {
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(j) = args.jobs {
            self.jobs = j;
        }
        if let Some(o) = &args.output_dir {
            self.output_dir = o.clone();
        }
        if let Some(s) = &args.settings {
            self.settings = s.clone();
        }
        if let Some(x) = &args.extractors {
            self.extractors = x.clone();
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(a) => cmd_segment(&a),
        Command::Augment(a) => cmd_augment(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot build worker pool")
}

pub fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let params = SlicParams {
        target_count: a.k as usize,
        compactness: a.compactness,
        max_iterations: a.iterations,
        enforce_connectivity: !a.no_connectivity,
    };
    let seg = slic_segment(&crate::imgcore::rgb_to_lab(&img), &params)?;
    save_image(&render_segmentation(&seg), &a.out)?;
    println!("segments: {}", seg.segment_count());
    Ok(())
}

pub fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let records = load_manifest(&a.manifest, false)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let spec = OverlaySpec {
        color: a.color,
        superpixel_count: a.k,
        compactness: a.compactness,
    };
    let results: Vec<_> = thread_pool(a.jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| (r, augment_file(&r.path, &a.out_dir, &spec)))
            .collect()
    });
    let mut failures = 0;
    for (r, res) in results {
        match res {
            Ok((path, Some(n))) => log::info!("{}: {} segments -> {}", r.image_id, n, path.display()),
            Ok((path, None)) => log::info!("{}: copied -> {}", r.image_id, path.display()),
            Err(e) => {
                failures += 1;
                eprintln!("error: {}: {e}", r.image_id);
            }
        }
    }
    println!(
        "augmented {} of {} images",
        records.len() - failures,
        records.len()
    );
    if failures > 0 {
        bail!("{failures} image(s) failed");
    }
    Ok(())
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let extractor = Extractor::parse(&a.extractor).map_err(anyhow::Error::msg)?;
    if !extractor.is_builtin() {
        bail!(
            "extract needs a built-in extractor (color_hist, grad_hist), got {}",
            a.extractor
        );
    }
    let records = load_manifest(&a.manifest, true)?;
    let spec = OverlaySpec {
        color: a.color,
        superpixel_count: a.k,
        compactness: a.compactness,
    };
    let vectors: Vec<FeatureVector> = thread_pool(a.jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| -> Result<FeatureVector> {
                let img = load_image(&r.path)?;
                let out = augment_with_stats(&img, &spec)?.image;
                let v = match extractor {
                    Extractor::ColorHistogram { bins } => {
                        crate::features::extract_color_histogram(&r.image_id, &out, bins)?
                    }
                    Extractor::GradientHistogram { orientation_bins } => {
                        crate::features::extract_gradient_histogram(&r.image_id, &out, orientation_bins)?
                    }
                    Extractor::FeatureFile { .. } => unreachable!(),
                };
                Ok(if a.normalize {
                    crate::features::l2_normalize(&v)?
                } else {
                    v
                })
            })
            .collect::<Result<_>>()
    })?;
    let dim = vectors.first().map_or(0, FeatureVector::dimension);
    let mut set = FeatureSet::new(extractor.to_string(), dim)?;
    for v in vectors {
        set.insert(v)?;
    }
    write_feature_file(&set, &a.out)?;
    println!(
        "wrote {} vectors of dimension {dim} to {}",
        set.len(),
        a.out.display()
    );
    Ok(())
}

fn feature_lookup(path: &Path, normalize: bool) -> Result<FeatureSet> {
    let mut set = crate::features::read_feature_file(path)?;
    if normalize {
        set.normalize()?;
    }
    Ok(set)
}

fn gather(set: &FeatureSet, ids: &[String]) -> Result<Vec<FeatureVector>> {
    ids.iter()
        .map(|id| {
            set.get(id)
                .cloned()
                .with_context(|| format!("feature file has no vector for {id}"))
        })
        .collect()
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let records = load_manifest(&a.manifest, false)?;
    let features = feature_lookup(&a.features, !a.raw_features)?;
    let opts = a.partition.options();
    let partitions = partition_all(&records, &opts)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    for p in partitions
        .iter()
        .filter(|p| a.category.is_none_or(|c| c == p.category))
    {
        let cfg = TrainConfig {
            lambda: a.lambda,
            epochs: a.epochs,
            seed: derive_seed(a.partition.seed, "svm", &[p.category.as_str()]),
        };
        let model = train(
            p.category.as_str(),
            &gather(&features, &p.pos_train)?,
            &gather(&features, &p.neg_train)?,
            &cfg,
        )
        .with_context(|| format!("training {}", p.category))?;
        let path = a.out_dir.join(format!("{}.json", p.category));
        model.save(&path)?;
        println!(
            "{}: objective {:.6} -> {}",
            p.category,
            model.final_objective,
            path.display()
        );
    }
    fs::write(
        a.out_dir.join("partitions.json"),
        PartitionReport::new(&opts, partitions).to_json(),
    )
    .context("cannot write partitions.json")?;
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let records = load_manifest(&a.manifest, false)?;
    let features = feature_lookup(&a.features, !a.raw_features)?;
    let partitions = partition_all(&records, &a.partition.options())?;
    let mut aps = Vec::new();
    for p in &partitions {
        let path = a.models.join(format!("{}.json", p.category));
        if !path.exists() {
            log::warn!("no model for {} at {}, skipping", p.category, path.display());
            continue;
        }
        let model = LinearModel::load(&path)?;
        let mut ranked = Vec::new();
        for (ids, positive) in [(&p.pos_test, true), (&p.neg_test, false)] {
            for v in gather(&features, ids)? {
                ranked.push(RankedItem::new(v.image_id.clone(), score(&model, &v)?, positive));
            }
        }
        let ap = average_precision(&ranked).with_context(|| format!("AP for {}", p.category))?;
        println!("{}\t{ap:.4}", p.category);
        aps.push((p.category.as_str(), ap));
    }
    let map = mean_average_precision(aps.iter().copied()).context("no categories evaluated")?;
    println!("mAP\t{map:.4}");
    Ok(())
}

pub fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.apply_overrides(a);
    cfg.validate()?;
    let extractors = cfg
        .extractors
        .iter()
        .map(|s| Extractor::parse(s).map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;

    let records = load_manifest(&cfg.manifest_path, cfg.check_files)?;
    let popts = cfg.partition_options();
    let dataset = PartitionedDataset::new(records, &popts)?;
    let exp = Experiment {
        train: cfg.train_config(),
        mask_color: cfg.mask_color,
        compactness: cfg.compactness,
        normalize: cfg.normalize,
        jobs: cfg.jobs,
    };
    let report = run_experiment(&dataset, &extractors, &cfg.settings, &exp)?;

    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let out = |name: &str| cfg.output_dir.join(name);
    fs::write(out("results.csv"), report.table.to_csv())?;
    fs::write(out("results_table.txt"), report.table.to_text_table())?;
    fs::write(
        out("partitions.json"),
        PartitionReport::new(&popts, dataset.partitions.clone()).to_json(),
    )?;
    fs::write(out("run.log"), run_log(&cfg, &exp, &report))?;
    print!("{}", report.table.to_text_table());
    Ok(())
}

fn run_log(cfg: &RunConfig, exp: &Experiment, report: &crate::evalkit::ExperimentReport) -> String {
    let mut log = String::new();
    writeln!(log, "# resolved config").unwrap();
    writeln!(
        log,
        "{}",
        serde_json::to_string_pretty(cfg).expect("config serialises")
    )
    .unwrap();
    writeln!(log, "# train config").unwrap();
    writeln!(
        log,
        "lambda={} epochs={} base_seed={} normalize={}",
        exp.train.lambda, exp.train.epochs, exp.train.seed, exp.normalize
    )
    .unwrap();
    writeln!(log, "# derived seeds (stage, category)").unwrap();
    for c in Category::ALL {
        writeln!(
            log,
            "{c}: split={} neg-train={} neg-test={} svm={}",
            derive_seed(cfg.seed, "split", &[c.as_str()]),
            Category::ALL
                .iter()
                .filter(|&&o| o != c)
                .map(|o| derive_seed(cfg.seed, "neg-train", &[c.as_str(), o.as_str()]).to_string())
                .collect::<Vec<_>>()
                .join("/"),
            Category::ALL
                .iter()
                .filter(|&&o| o != c)
                .map(|o| derive_seed(cfg.seed, "neg-test", &[c.as_str(), o.as_str()]).to_string())
                .collect::<Vec<_>>()
                .join("/"),
            derive_seed(exp.train.seed, "svm", &[c.as_str()]),
        )
        .unwrap();
    }
    writeln!(
        log,
        "# realised superpixel counts (requested K -> min/mean/max over images)"
    )
    .unwrap();
    for s in &report.segment_stats {
        writeln!(
            log,
            "K={}: {}/{:.2}/{} over {} images",
            s.setting, s.min, s.mean, s.max, s.images
        )
        .unwrap();
    }
    writeln!(log, "# per-category results").unwrap();
    for r in &report.per_category {
        writeln!(
            log,
            "{} setting={} {}: AP={} objective={}",
            r.extractor, r.setting, r.category, r.average_precision, r.final_objective
        )
        .unwrap();
    }
    log
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if a.size < 8 {
        bail!("size must be at least 8");
    }
    let manifest = generate_dataset(&a.out_dir, a.per_class, a.size, a.seed)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

/// Entry point used by the binary. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
