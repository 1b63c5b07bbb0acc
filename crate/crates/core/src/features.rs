//! Feature vectors, the built-in histogram extractors and the `WXFEAT`
//! interchange file.
//!
//! `WXFEAT` layout (UTF-8):
//!
//! ```text
//! WXFEAT 1 <extractor_name> <dimension>
//! <image_id>,<v1>,...,<vd>
//! ```
//!
//! Values are written in the shortest decimal (or exponent) form that
//! parses back to the same `f64`, so a write/read cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

use crate::imgcore::Image;

pub const FORMAT_MAGIC: &str = "WXFEAT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("non-finite feature value in {0}")]
    NonFinite(String),
    #[error("image {width}x{height} is too small, need at least {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("invalid extractor parameter: {0}")]
    InvalidParameter(String),
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionInconsistency {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate image id {0}")]
    DuplicateId(String),
    #[error("invalid image id {0:?}: ids must be non-empty and free of commas and newlines")]
    InvalidId(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub image_id: String,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, values: Vec<f64>) -> Self {
        FeatureVector {
            image_id: image_id.into(),
            values,
            normalized: false,
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Scales to unit Euclidean norm. The zero vector is returned unchanged with
/// `normalized = false`.
pub fn l2_normalize(v: &FeatureVector) -> Result<FeatureVector, FeatureError> {
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(FeatureError::NonFinite(v.image_id.clone()));
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(FeatureVector {
            normalized: false,
            ..v.clone()
        });
    }
    Ok(FeatureVector {
        image_id: v.image_id.clone(),
        values: v.values.iter().map(|x| x / norm).collect(),
        normalized: true,
    })
}

/// Joint RGB histogram with `bins^3` cells, normalised to unit mass.
/// Cell index is `(r_bin * bins + g_bin) * bins + b_bin`.
pub fn extract_color_histogram(
    image_id: &str,
    img: &Image,
    bins_per_channel: usize,
) -> Result<FeatureVector, FeatureError> {
    if !(2..=256).contains(&bins_per_channel) {
        return Err(FeatureError::InvalidParameter(format!(
            "bins_per_channel must be in 2..=256, got {bins_per_channel}"
        )));
    }
    let bins = bins_per_channel;
    let mut counts = vec![0u64; bins * bins * bins];
    let bin = |v: u8| v as usize * bins / 256;
    for [r, g, b] in img.pixels() {
        counts[(bin(r) * bins + bin(g)) * bins + bin(b)] += 1;
    }
    let total = img.pixel_count() as f64;
    Ok(FeatureVector::new(
        image_id,
        counts.into_iter().map(|c| c as f64 / total).collect(),
    ))
}

/// Smallest image accepted by the gradient extractor, per side.
pub const GRADIENT_MIN_SIDE: u32 = 8;
/// Cells per side of the gradient histogram grid.
pub const GRADIENT_GRID: usize = 4;

/// Grid of orientation histograms over luminance gradients.
///
/// Gradients are central differences with replicated borders. Orientations
/// are unsigned, in `[0, pi)`, and votes are weighted by gradient magnitude.
/// Cells are laid out row-major; each cell histogram has unit mass or is all
/// zero when the cell has no gradient.
pub fn extract_gradient_histogram(
    image_id: &str,
    img: &Image,
    orientation_bins: usize,
) -> Result<FeatureVector, FeatureError> {
    if orientation_bins < 1 {
        return Err(FeatureError::InvalidParameter(
            "orientation_bins must be >= 1".into(),
        ));
    }
    let (w, h) = (img.width(), img.height());
    if w < GRADIENT_MIN_SIDE || h < GRADIENT_MIN_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: w,
            height: h,
            min: GRADIENT_MIN_SIDE,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let luma: Vec<f64> = img
        .pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect();
    let at = |x: usize, y: usize| luma[y * w + x];

    let grid = GRADIENT_GRID;
    let mut hist = vec![0.0f64; grid * grid * orientation_bins];
    let bin_width = std::f64::consts::PI / orientation_bins as f64;
    for y in 0..h {
        let cy = y * grid / h;
        for x in 0..w {
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            if theta >= std::f64::consts::PI {
                theta -= std::f64::consts::PI;
            }
            let ob = ((theta / bin_width) as usize).min(orientation_bins - 1);
            let cx = x * grid / w;
            hist[(cy * grid + cx) * orientation_bins + ob] += mag;
        }
    }
    for cell in hist.chunks_exact_mut(orientation_bins) {
        let mass: f64 = cell.iter().sum();
        if mass > 0.0 {
            cell.iter_mut().for_each(|v| *v /= mass);
        }
    }
    Ok(FeatureVector::new(image_id, hist))
}

/// A named collection of equal-dimension vectors, keyed by image id in
/// insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    extractor_name: String,
    dimension: usize,
    entries: IndexMap<String, FeatureVector>,
}

impl FeatureSet {
    pub fn new(extractor_name: impl Into<String>, dimension: usize) -> Result<Self, FeatureError> {
        let extractor_name = extractor_name.into();
        if extractor_name.is_empty() || extractor_name.chars().any(char::is_whitespace) {
            return Err(FeatureError::MalformedHeader(format!(
                "extractor name {extractor_name:?} must be non-empty without whitespace"
            )));
        }
        Ok(FeatureSet {
            extractor_name,
            dimension,
            entries: IndexMap::new(),
        })
    }

    pub fn extractor_name(&self) -> &str {
        &self.extractor_name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureVector> {
        self.entries.get(image_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureVector> {
        self.entries.values()
    }

    pub fn insert(&mut self, v: FeatureVector) -> Result<(), FeatureError> {
        validate_id(&v.image_id)?;
        if v.dimension() != self.dimension {
            return Err(FeatureError::DimensionInconsistency {
                line: self.entries.len() + 2,
                expected: self.dimension,
                found: v.dimension(),
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite(v.image_id));
        }
        if self.entries.contains_key(&v.image_id) {
            return Err(FeatureError::DuplicateId(v.image_id));
        }
        self.entries.insert(v.image_id.clone(), v);
        Ok(())
    }

    /// L2-normalises every entry in place.
    pub fn normalize(&mut self) -> Result<(), FeatureError> {
        for v in self.entries.values_mut() {
            *v = l2_normalize(v)?;
        }
        Ok(())
    }
}

fn validate_id(id: &str) -> Result<(), FeatureError> {
    if id.is_empty() || id.contains([',', '\n', '\r']) {
        return Err(FeatureError::InvalidId(id.to_string()));
    }
    Ok(())
}

pub fn format_feature_file(set: &FeatureSet) -> String {
    let mut out = format!(
        "{FORMAT_MAGIC} {FORMAT_VERSION} {} {}\n",
        set.extractor_name, set.dimension
    );
    for v in set.entries.values() {
        out.push_str(&v.image_id);
        for x in &v.values {
            write!(out, ",{x:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(set: &FeatureSet, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    fs::write(path, format_feature_file(set)).map_err(|e| FeatureError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn parse_feature_file(reader: impl BufRead) -> Result<FeatureSet, FeatureError> {
    let mut lines = reader.lines();
    let io_err = |e: io::Error| FeatureError::Io {
        path: "<stream>".into(),
        source: e,
    };
    let header = match lines.next() {
        Some(l) => l.map_err(io_err)?,
        None => return Err(FeatureError::MalformedHeader("empty file".into())),
    };
    let fields: Vec<&str> = header.trim_end_matches('\r').split(' ').collect();
    let [magic, version, name, dim] = fields[..] else {
        return Err(FeatureError::MalformedHeader(header));
    };
    if magic != FORMAT_MAGIC {
        return Err(FeatureError::MalformedHeader(format!("bad magic {magic:?}")));
    }
    if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
        return Err(FeatureError::MalformedHeader(format!(
            "unsupported version {version:?}"
        )));
    }
    let dimension: usize = dim
        .parse()
        .map_err(|_| FeatureError::MalformedHeader(format!("bad dimension {dim:?}")))?;
    let mut set = FeatureSet::new(name, dimension)?;

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err)?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().unwrap_or_default();
        let values = parts
            .map(|s| {
                s.parse::<f64>().map_err(|_| FeatureError::MalformedRow {
                    line: line_no,
                    reason: format!("cannot parse {s:?} as a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != dimension {
            return Err(FeatureError::DimensionInconsistency {
                line: line_no,
                expected: dimension,
                found: values.len(),
            });
        }
        if set.entries.contains_key(id) {
            return Err(FeatureError::DuplicateId(id.to_string()));
        }
        set.insert(FeatureVector::new(id, values)).map_err(|e| match e {
            FeatureError::InvalidId(_) | FeatureError::NonFinite(_) => FeatureError::MalformedRow {
                line: line_no,
                reason: e.to_string(),
            },
            other => other,
        })?;
    }
    Ok(set)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet, FeatureError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| FeatureError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_feature_file(BufReader::new(file))
}
