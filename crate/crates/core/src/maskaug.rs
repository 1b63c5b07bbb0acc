//! Superpixel-boundary mask augmentation.
//!
//! The mask is opaque: boundary pixels are replaced by the mask colour, every
//! other pixel is left untouched. A superpixel count of 0 selects the raw path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgcore::{rgb_to_lab, save_image, Image, ImageError};
use crate::superpixel::{boundary_map, slic_segment, SegmentError, Segmentation, SlicParams};

pub const DEFAULT_MASK_COLOR: [u8; 3] = [255, 255, 0];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("dimension mismatch: image {image:?}, segmentation {segmentation:?}")]
    DimensionMismatch {
        image: (u32, u32),
        segmentation: (u32, u32),
    },
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySpec {
    pub color: [u8; 3],
    pub superpixel_count: usize,
    pub compactness: f64,
}

impl OverlaySpec {
    pub fn new(superpixel_count: usize) -> Self {
        OverlaySpec {
            color: DEFAULT_MASK_COLOR,
            superpixel_count,
            compactness: 10.0,
        }
    }

    pub fn with_color(mut self, color: [u8; 3]) -> Self {
        self.color = color;
        self
    }

    pub fn is_raw(&self) -> bool {
        self.superpixel_count == 0
    }
}

pub fn apply_mask(img: &Image, seg: &Segmentation, color: [u8; 3]) -> Result<Image, AugmentError> {
    if (img.width(), img.height()) != (seg.width(), seg.height()) {
        return Err(AugmentError::DimensionMismatch {
            image: (img.width(), img.height()),
            segmentation: (seg.width(), seg.height()),
        });
    }
    let mut data = img.data().to_vec();
    for (px, on) in data.chunks_exact_mut(3).zip(boundary_map(seg)) {
        if on {
            px.copy_from_slice(&color);
        }
    }
    Ok(Image::new(img.width(), img.height(), data)?)
}

/// Output of one augmentation, with the realised segment count when a mask
/// was drawn.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: Image,
    pub segment_count: Option<usize>,
}

pub fn augment_with_stats(img: &Image, spec: &OverlaySpec) -> Result<Augmented, AugmentError> {
    if spec.is_raw() {
        return Ok(Augmented {
            image: img.clone(),
            segment_count: None,
        });
    }
    let params = SlicParams::new(spec.superpixel_count).with_compactness(spec.compactness);
    let seg = slic_segment(&rgb_to_lab(img), &params)?;
    Ok(Augmented {
        image: apply_mask(img, &seg, spec.color)?,
        segment_count: Some(seg.segment_count()),
    })
}

pub fn augment(img: &Image, spec: &OverlaySpec) -> Result<Image, AugmentError> {
    augment_with_stats(img, spec).map(|a| a.image)
}

/// `photo.jpg` at K=25 becomes `photo_sp25.png`. At K=0 the original
/// extension is kept because the file is copied verbatim.
pub fn augmented_file_name(source: &Path, k: usize) -> PathBuf {
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let ext = if k == 0 {
        source
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_else(|| "png".into())
    } else {
        "png".into()
    };
    PathBuf::from(format!("{stem}_sp{k}.{ext}"))
}

/// Augments one file on disk into `out_dir`, returning the written path.
pub fn augment_file(
    source: &Path,
    out_dir: &Path,
    spec: &OverlaySpec,
) -> Result<(PathBuf, Option<usize>), AugmentError> {
    let target = out_dir.join(augmented_file_name(source, spec.superpixel_count));
    if spec.is_raw() {
        // byte copy; the raw path must not re-encode
        fs::copy(source, &target).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound && !source.exists() {
                ImageError::NotFound(source.display().to_string())
            } else {
                ImageError::Io {
                    path: target.display().to_string(),
                    source: e,
                }
            }
        })?;
        return Ok((target, None));
    }
    let img = crate::imgcore::load_image(source)?;
    let out = augment_with_stats(&img, spec)?;
    save_image(&out.image, &target)?;
    Ok((target, out.segment_count))
}
