//! Procedural test data: class-coloured scenes for end-to-end runs and
//! uniform noise for segmentation checks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::datasetman::{write_manifest, Category, DatasetError, ImageRecord};
use crate::imgcore::{save_image, Image};
use crate::rng;

/// Dominant colour of each synthetic class.
pub fn class_color(c: Category) -> [u8; 3] {
    match c {
        Category::Cloudy => [128, 132, 140],
        Category::Foggy => [200, 204, 196],
        Category::Rainy => [36, 58, 104],
        Category::Snowy => [246, 248, 252],
        Category::Sunny => [226, 150, 28],
    }
}

fn jitter(v: u8, amount: i32, r: &mut impl Rng) -> u8 {
    (v as i32 + r.random_range(-amount..=amount)).clamp(0, 255) as u8
}

/// One scene: the class colour with per-pixel noise, a vertical shading
/// ramp, and a few random-colour rectangles covering at most a quarter of
/// the frame.
pub fn synth_image(category: Category, index: usize, size: u32, seed: u64) -> Image {
    let mut r = rng::stream(seed, "synth", &[category.as_str(), &index.to_string()]);
    let base = class_color(category);
    let shift = r.random_range(-10..=10);
    let mut img = Image::filled(size, size, base).expect("positive size");
    for y in 0..size {
        let ramp = (y as i32 * 16 / size as i32) - 8;
        for x in 0..size {
            let px = base.map(|c| jitter((c as i32 + shift + ramp).clamp(0, 255) as u8, 10, &mut r));
            img.set_pixel(x, y, px);
        }
    }
    let rects = r.random_range(1..=3u32);
    let max_side = (size / 4).max(1);
    for _ in 0..rects {
        let rw = r.random_range(1..=max_side);
        let rh = r.random_range(1..=max_side);
        let x0 = r.random_range(0..=size - rw);
        let y0 = r.random_range(0..=size - rh);
        let color: [u8; 3] = r.random();
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                img.set_pixel(x, y, color);
            }
        }
    }
    img
}

/// Uniform RGB noise.
pub fn noise_image(width: u32, height: u32, seed: u64) -> Image {
    let mut r = rng::stream(seed, "noise", &[]);
    let mut data = vec![0u8; width as usize * height as usize * 3];
    r.fill(&mut data[..]);
    Image::new(width, height, data).expect("positive size")
}

/// Writes `per_class` scenes per category under `out_dir/<category>/` and a
/// `manifest.csv` with relative paths. Returns the manifest path.
pub fn generate_dataset(
    out_dir: &Path,
    per_class: usize,
    size: u32,
    seed: u64,
) -> Result<PathBuf, DatasetError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| DatasetError::Io {
        path: p.display().to_string(),
        reason: e.to_string(),
    };
    let mut records = Vec::with_capacity(per_class * Category::ALL.len());
    for c in Category::ALL {
        let dir = out_dir.join(c.as_str());
        fs::create_dir_all(&dir).map_err(|e| io(&dir, &e))?;
        for i in 0..per_class {
            let rel = PathBuf::from(c.as_str()).join(format!("{c}_{i:04}.png"));
            let img = synth_image(c, i, size, seed);
            let path = out_dir.join(&rel);
            save_image(&img, &path).map_err(|e| io(&path, &e))?;
            records.push(ImageRecord {
                image_id: format!("{c}_{i:04}"),
                path: rel,
                category: c,
                author: "skymask synth".into(),
                license: "CC0-1.0".into(),
                source_url: format!("synth://seed/{seed}/{c}/{i}"),
            });
        }
    }
    let manifest = out_dir.join("manifest.csv");
    write_manifest(&records, &manifest)?;
    Ok(manifest)
}
