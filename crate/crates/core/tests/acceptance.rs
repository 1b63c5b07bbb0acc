//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use skymask::datasetman::{
    global_split, load_manifest, partition_all, Category, ImageRecord, PartitionOptions,
};
use skymask::evalkit::{average_precision, RankedItem};
use skymask::features::FeatureVector;
use skymask::imgcore::{load_image, rgb_to_lab, Image};
use skymask::maskaug::DEFAULT_MASK_COLOR;
use skymask::superpixel::{boundary_map, slic_segment, SlicParams};
use skymask::svm::{score, train, TrainConfig};
use skymask::synth::{generate_dataset, noise_image};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// SLIC invariants on noise

const SLIC_NOISE_IMAGES: u64 = 50;
const SLIC_NOISE_SIDE: u32 = 128;
const SLIC_KS: [usize; 4] = [25, 50, 75, 100];
const SLIC_TIME_LIMIT: Duration = Duration::from_secs(60);

fn slic_invariants() -> Outcome {
    let start = Instant::now();
    let jobs: Vec<(u64, usize)> = (0..SLIC_NOISE_IMAGES)
        .flat_map(|seed| SLIC_KS.iter().map(move |&k| (seed, k)))
        .collect();
    let results: Vec<Result<usize, String>> = jobs
        .par_iter()
        .map(|&(seed, k)| {
            let img = noise_image(SLIC_NOISE_SIDE, SLIC_NOISE_SIDE, seed);
            let seg = slic_segment(&rgb_to_lab(&img), &SlicParams::new(k)).map_err(|e| e.to_string())?;
            let n = (SLIC_NOISE_SIDE * SLIC_NOISE_SIDE) as usize;
            check(seg.labels().len() == n, || {
                format!("seed {seed} K={k}: {} labels", seg.labels().len())
            })?;
            let distinct: HashSet<u32> = seg.labels().iter().copied().collect();
            let contiguous = distinct.len() == seg.segment_count()
                && seg.labels().iter().all(|&l| (l as usize) < seg.segment_count());
            check(contiguous, || format!("seed {seed} K={k}: labels not contiguous"))?;
            check(seg.is_four_connected(), || {
                format!("seed {seed} K={k}: segment not 4-connected")
            })?;
            let c = seg.segment_count();
            check(2 * c >= k && c <= 2 * k, || {
                format!("seed {seed} K={k}: count {c} outside [K/2, 2K]")
            })?;
            Ok(c)
        })
        .collect();
    let elapsed = start.elapsed();
    let counts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    check(elapsed < SLIC_TIME_LIMIT, || {
        format!("took {elapsed:?}, limit {SLIC_TIME_LIMIT:?}")
    })?;
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    Ok(format!(
        "{} segmentations, realised counts {lo}..={hi}, {:.1}s",
        counts.len(),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// SLIC uniform image

fn slic_uniform_blocks() -> Outcome {
    let img = Image::filled(100, 100, [123, 77, 201]).unwrap();
    let seg = slic_segment(&rgb_to_lab(&img), &SlicParams::new(4)).map_err(|e| e.to_string())?;
    check(seg.segment_count() == 4, || {
        format!("{} segments", seg.segment_count())
    })?;
    // label equality up to relabelling: each 50x50 block is one label and
    // the four block labels are distinct
    let mut block_labels = Vec::new();
    for (by, bx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let l = seg.label(bx * 50, by * 50);
        for y in by * 50..by * 50 + 50 {
            for x in bx * 50..bx * 50 + 50 {
                check(seg.label(x, y) == l, || {
                    format!("pixel ({x},{y}) not in block label {l}")
                })?;
            }
        }
        block_labels.push(l);
    }
    let distinct: HashSet<u32> = block_labels.iter().copied().collect();
    check(distinct.len() == 4, || format!("block labels {block_labels:?}"))?;
    Ok("four exact 50x50 blocks".into())
}

// ---------------------------------------------------------------------------
// AP oracle

const AP_TOLERANCE: f64 = 1e-12;
const AP_RANDOM_RANKINGS: usize = 1000;
const AP_RANDOM_LEN: usize = 50;
const AP_MAX_EXHAUSTIVE: usize = 8;

/// Precision-recall staircase built from explicit pairwise ranks.
/// Rank of i = number of items that precede it (higher score, or equal score
/// and earlier in the input). AP = sum over cut-offs of
/// (recall step) * (precision at that cut-off).
fn staircase_ap(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let mut at_rank = vec![usize::MAX; n];
    for i in 0..n {
        let rank = (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count();
        at_rank[rank] = i;
    }
    let total_pos = positive.iter().filter(|&&p| p).count() as f64;
    let mut tp = 0.0;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (k, &i) in at_rank.iter().enumerate() {
        if positive[i] {
            tp += 1.0;
        }
        let precision = tp / (k + 1) as f64;
        let recall = tp / total_pos;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

fn ap_of(scores: &[f64], positive: &[bool]) -> Result<f64, String> {
    let items: Vec<RankedItem> = scores
        .iter()
        .zip(positive)
        .enumerate()
        .map(|(i, (&s, &p))| RankedItem::new(format!("i{i}"), s, p))
        .collect();
    average_precision(&items).map_err(|e| e.to_string())
}

fn ap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA9);
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    let mut compare = |scores: &[f64], labels: &[bool]| -> Result<(), String> {
        let got = ap_of(scores, labels)?;
        let want = staircase_ap(scores, labels);
        let diff = (got - want).abs();
        worst = worst.max(diff);
        compared += 1;
        check(diff <= AP_TOLERANCE, || {
            format!("scores {scores:?} labels {labels:?}: {got} vs {want}")
        })
    };
    for n in 2..=AP_MAX_EXHAUSTIVE {
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            // every labelling of a strict ranking
            let strict: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
            compare(&strict, &labels)?;
            // random score assignments, including ties
            for _ in 0..3 {
                let tied: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
                compare(&tied, &labels)?;
                let real: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                compare(&real, &labels)?;
            }
        }
    }
    for _ in 0..AP_RANDOM_RANKINGS {
        let mut labels: Vec<bool> = (0..AP_RANDOM_LEN).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..AP_RANDOM_LEN).map(|_| rng.random_range(-5.0..5.0)).collect();
        compare(&scores, &labels)?;
    }
    Ok(format!("{compared} rankings, max |diff| {worst:e}"))
}

// ---------------------------------------------------------------------------
// SVM on two separable blobs

const BLOB_POINTS: usize = 200;
const BLOB_MIN_GAP: f64 = 2.0;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 100 points around (3, 1) with x >= 1 and 100 around (-3, -1) with x <= -1.
fn blobs(seed: u64) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |cx: f64, cy: f64, keep: &dyn Fn(f64) -> bool, tag: &str| {
        let mut out = Vec::new();
        while out.len() < BLOB_POINTS / 2 {
            let x = cx + gaussian(&mut rng);
            let y = cy + gaussian(&mut rng);
            if keep(x) {
                out.push(FeatureVector::new(format!("{tag}{}", out.len()), vec![x, y]));
            }
        }
        out
    };
    let pos = draw(3.0, 1.0, &|x| x >= 1.0, "p");
    let neg = draw(-3.0, -1.0, &|x| x <= -1.0, "n");
    (pos, neg)
}

/// Exhaustive line search over unit directions: the widest gap between the
/// projected classes.
fn best_separating_gap(pos: &[FeatureVector], neg: &[FeatureVector]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for step in 0..36_000 {
        let theta = step as f64 * std::f64::consts::TAU / 36_000.0;
        let (c, s) = (theta.cos(), theta.sin());
        let proj = |v: &FeatureVector| c * v.values[0] + s * v.values[1];
        let min_pos = pos.iter().map(proj).fold(f64::INFINITY, f64::min);
        let max_neg = neg.iter().map(proj).fold(f64::NEG_INFINITY, f64::max);
        best = best.max(min_pos - max_neg);
    }
    best
}

fn svm_blobs() -> Outcome {
    let (pos, neg) = blobs(2024);
    let gap = best_separating_gap(&pos, &neg);
    check(gap >= BLOB_MIN_GAP, || {
        format!("oracle gap {gap} < {BLOB_MIN_GAP}")
    })?;

    let cfg = TrainConfig::default();
    let model = train("blob", &pos, &neg, &cfg).map_err(|e| e.to_string())?;
    let again = train("blob", &pos, &neg, &cfg).map_err(|e| e.to_string())?;
    check(model == again, || "two trainings differ".into())?;
    check(
        model
            .weights
            .iter()
            .zip(&again.weights)
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        || "weights differ bitwise".into(),
    )?;

    let correct = pos.iter().filter(|v| score(&model, v).unwrap() > 0.0).count()
        + neg.iter().filter(|v| score(&model, v).unwrap() < 0.0).count();
    let accuracy = correct as f64 / BLOB_POINTS as f64;
    check(accuracy == 1.0, || format!("training accuracy {accuracy}"))?;
    check(model.final_objective < 1.0, || {
        format!("final objective {}", model.final_objective)
    })?;
    Ok(format!(
        "oracle gap {gap:.3}, accuracy {accuracy}, objective {:.6}, deterministic",
        model.final_objective
    ))
}

// ---------------------------------------------------------------------------
// End to end on the synthetic dataset

const E2E_PER_CLASS: usize = 100;
const E2E_IMAGE_SIDE: u32 = 64;
const E2E_MIN_MAP: f64 = 0.95;
const E2E_TIME_LIMIT: Duration = Duration::from_secs(300);

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["skymask"];
    full.extend_from_slice(args);
    skymask::cli::main_with_args(full)
}

fn write_config(dir: &Path, manifest: &Path, out: &str) -> PathBuf {
    let cfg = serde_json::json!({
        "manifest_path": manifest,
        "output_dir": dir.join(out),
        "settings": [0, 25, 50, 75, 100],
        "extractors": ["color_hist"],
        "seed": 42,
    });
    let path = dir.join(format!("{out}.json"));
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn end_to_end(data: &Path, manifest: &Path) -> Outcome {
    let mut times = Vec::new();
    for run in ["run_a", "run_b"] {
        let cfg = write_config(data, manifest, run);
        let start = Instant::now();
        let code = run_cli(&["experiment", "--config", cfg.to_str().unwrap()]);
        let took = start.elapsed();
        check(code == 0, || format!("{run}: exit status {code}"))?;
        check(took < E2E_TIME_LIMIT, || format!("{run}: grid took {took:?}"))?;
        times.push(took.as_secs_f64());
    }
    let a = fs::read(data.join("run_a/results.csv")).map_err(|e| e.to_string())?;
    let b = fs::read(data.join("run_b/results.csv")).map_err(|e| e.to_string())?;
    check(a == b, || "results.csv differs between runs".into())?;

    let csv = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    check(rows.len() == 5, || format!("{} result rows", rows.len()))?;
    let raw_map: f64 = rows
        .iter()
        .find(|r| r.starts_with("color_hist8,0,"))
        .and_then(|r| r.rsplit(',').next())
        .and_then(|v| v.parse().ok())
        .ok_or("no setting-0 row")?;
    check(raw_map >= E2E_MIN_MAP, || {
        format!("setting 0 mAP {raw_map} < {E2E_MIN_MAP}")
    })?;
    for f in ["results_table.txt", "partitions.json", "run.log"] {
        check(data.join("run_a").join(f).is_file(), || format!("missing {f}"))?;
    }
    let all: Vec<String> = rows
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().to_string())
        .collect();
    Ok(format!(
        "setting-0 mAP {raw_map:.4}; grid mAPs [{}]; runs {:.1}s / {:.1}s; results.csv byte-identical",
        all.iter()
            .map(|v| format!("{:.4}", v.parse::<f64>().unwrap()))
            .collect::<Vec<_>>()
            .join(", "),
        times[0],
        times[1]
    ))
}

// ---------------------------------------------------------------------------
// Augmentation identity and boundary-only changes

const AUG_SAMPLE: usize = 25;

fn augmentation_identity(data: &Path, manifest: &Path) -> Outcome {
    let records = load_manifest(manifest, true).map_err(|e| e.to_string())?;
    let sample: Vec<&ImageRecord> = records
        .iter()
        .step_by(records.len() / AUG_SAMPLE)
        .take(AUG_SAMPLE)
        .collect();
    let sub_manifest = data.join("aug_manifest.csv");
    let owned: Vec<ImageRecord> = sample.iter().map(|r| (*r).clone()).collect();
    skymask::datasetman::write_manifest(&owned, &sub_manifest).map_err(|e| e.to_string())?;

    let mut changed_total = 0usize;
    for k in [0usize, 25, 50, 75, 100] {
        let out = data.join(format!("aug_{k}"));
        let code = run_cli(&[
            "augment",
            "--manifest",
            sub_manifest.to_str().unwrap(),
            "-k",
            &k.to_string(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        check(code == 0, || format!("augment K={k} exit {code}"))?;
        for r in &sample {
            let name = skymask::maskaug::augmented_file_name(&r.path, k);
            let produced = out.join(name);
            if k == 0 {
                let a = fs::read(&r.path).map_err(|e| e.to_string())?;
                let b = fs::read(&produced).map_err(|e| e.to_string())?;
                check(a == b, || {
                    format!("{}: K=0 output not byte-identical", r.image_id)
                })?;
                continue;
            }
            let original = load_image(&r.path).map_err(|e| e.to_string())?;
            let augmented = load_image(&produced).map_err(|e| e.to_string())?;
            let seg = slic_segment(&rgb_to_lab(&original), &SlicParams::new(k)).map_err(|e| e.to_string())?;
            let boundary = boundary_map(&seg);
            for (i, ((a, b), on)) in original
                .pixels()
                .zip(augmented.pixels())
                .zip(&boundary)
                .enumerate()
            {
                if *on {
                    check(b == DEFAULT_MASK_COLOR, || {
                        format!("{} K={k}: boundary pixel {i} is {b:?}", r.image_id)
                    })?;
                } else {
                    check(a == b, || {
                        format!("{} K={k}: non-boundary pixel {i} changed", r.image_id)
                    })?;
                }
                if a != b {
                    changed_total += 1;
                }
            }
        }
    }
    check(changed_total > 0, || "no pixel changed at any K > 0".into())?;
    Ok(format!(
        "{} images x 5 settings; K=0 byte copies; {changed_total} changed pixels, all on boundaries in mask colour",
        sample.len()
    ))
}

// ---------------------------------------------------------------------------
// Partition arithmetic

fn partition_arithmetic() -> Outcome {
    let records: Vec<ImageRecord> = Category::ALL
        .into_iter()
        .flat_map(|c| {
            (0..1100).map(move |i| ImageRecord {
                image_id: format!("{c}-{i}"),
                path: PathBuf::from(format!("{c}/{i}.jpg")),
                category: c,
                author: String::new(),
                license: String::new(),
                source_url: String::new(),
            })
        })
        .collect();
    let opts = PartitionOptions::default();
    let parts = partition_all(&records, &opts).map_err(|e| e.to_string())?;
    let split = global_split(&records, &opts).map_err(|e| e.to_string())?;
    let train_ids: HashSet<&str> = Category::ALL
        .iter()
        .flat_map(|&c| split.train(c).iter().map(String::as_str))
        .collect();

    for p in &parts {
        let c = p.category;
        check(p.pos_train.len() == 770 && p.pos_test.len() == 330, || {
            format!("{c}: positives {}/{}", p.pos_train.len(), p.pos_test.len())
        })?;
        check(p.neg_train.len() == 770 && p.neg_test.len() == 330, || {
            format!("{c}: negatives {}/{}", p.neg_train.len(), p.neg_test.len())
        })?;
        for (list, want) in [
            (&p.neg_train, [193, 193, 192, 192]),
            (&p.neg_test, [83, 83, 82, 82]),
        ] {
            let counts: Vec<usize> = Category::ALL
                .into_iter()
                .filter(|&o| o != c)
                .map(|o| list.iter().filter(|id| id.starts_with(&format!("{o}-"))).count())
                .collect();
            check(counts == want, || {
                format!("{c}: negative spread {counts:?}, want {want:?}")
            })?;
        }
        let pos: HashSet<&String> = p.pos_train.iter().chain(&p.pos_test).collect();
        let all_c: HashSet<String> = (0..1100).map(|i| format!("{c}-{i}")).collect();
        check(
            pos.len() == 1100 && pos.iter().all(|id| all_c.contains(*id)),
            || format!("{c}: coverage"),
        )?;
        let lists = [&p.pos_train, &p.pos_test, &p.neg_train, &p.neg_test];
        let total: usize = lists.iter().map(|l| l.len()).sum();
        let union: HashSet<&String> = lists.iter().flat_map(|l| l.iter()).collect();
        check(union.len() == total, || format!("{c}: lists overlap"))?;
        for id in p.pos_train.iter().chain(&p.neg_train) {
            check(train_ids.contains(id.as_str()), || {
                format!("{c}: train id {id} is globally test")
            })?;
        }
        for id in p.pos_test.iter().chain(&p.neg_test) {
            check(!train_ids.contains(id.as_str()), || {
                format!("{c}: test id {id} is globally train")
            })?;
        }
    }
    let all_train: HashSet<&String> = parts
        .iter()
        .flat_map(|p| p.pos_train.iter().chain(&p.neg_train))
        .collect();
    let all_test: HashSet<&String> = parts
        .iter()
        .flat_map(|p| p.pos_test.iter().chain(&p.neg_test))
        .collect();
    check(all_train.is_disjoint(&all_test), || {
        "an id is both train and test".into()
    })?;
    let again = partition_all(&records, &opts).map_err(|e| e.to_string())?;
    check(again == parts, || "partitions not deterministic".into())?;
    Ok("770/330 positives and negatives, 193/193/192/192 and 83/83/82/82 spread, globally disjoint".into())
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let data = tmp.path().join("synth");
    let manifest = generate_dataset(&data, E2E_PER_CLASS, E2E_IMAGE_SIDE, 7).expect("synthetic dataset");

    let criteria: Vec<Criterion> = vec![
        ("slic-invariants", Box::new(slic_invariants)),
        ("slic-uniform-blocks", Box::new(slic_uniform_blocks)),
        ("ap-oracle", Box::new(ap_oracle)),
        ("svm-separable-blobs", Box::new(svm_blobs)),
        ("end-to-end-grid", Box::new(|| end_to_end(&data, &manifest))),
        (
            "augmentation-identity",
            Box::new(|| augmentation_identity(&data, &manifest)),
        ),
        ("partition-arithmetic", Box::new(partition_arithmetic)),
    ];

    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
