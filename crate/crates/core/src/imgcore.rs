//! RGB rasters, PNG/JPEG decoding, PNG encoding and sRGB to CIELAB conversion.

use std::fs;
use std::io::{self, Cursor};
use std::path::Path;

use image::{ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data in {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
}

/// An 8-bit RGB raster stored row-major as interleaved `R, G, B` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::InvalidRaster(format!(
                "expected {expected} bytes for {width}x{height}, got {}",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    /// A raster filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Image::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Decodes a PNG or JPEG file. Any other container is rejected even if the
/// decoder could read it.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ImageError::NotFound(shown.clone()),
        _ => ImageError::Io {
            path: shown.clone(),
            source: e,
        },
    })?;
    decode_image(&bytes).map_err(|e| match e {
        ImageError::Corrupt { reason, .. } => ImageError::Corrupt {
            path: shown.clone(),
            reason,
        },
        ImageError::UnsupportedFormat(_) => ImageError::UnsupportedFormat(shown.clone()),
        other => other,
    })
}

/// Decodes PNG or JPEG bytes already in memory.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageError> {
    let format = match image::guess_format(bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        Ok(other) => return Err(ImageError::UnsupportedFormat(format!("{other:?}"))),
        Err(_) => return Err(ImageError::UnsupportedFormat("unrecognised signature".into())),
    };
    let reader = ImageReader::with_format(Cursor::new(bytes), format);
    let decoded = reader.decode().map_err(|e| ImageError::Corrupt {
        path: "<memory>".into(),
        reason: e.to_string(),
    })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(w, h, rgb.into_raw())
}

/// Encodes as 8-bit RGB PNG.
pub fn encode_png(img: &Image) -> Vec<u8> {
    let mut out = Vec::new();
    let buf = image::RgbImage::from_raw(img.width, img.height, img.data.clone())
        .expect("Image invariant guarantees buffer length");
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_png(img)).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// CIELAB raster, row-major `(L, a, b)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width as usize + x]
    }
}

// D65 reference white, Y normalised to 1.
const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;

fn srgb_to_linear(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// Converts one sRGB pixel to CIELAB under D65.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);

    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;

    let fx = lab_f(x / WHITE_X);
    let fy = lab_f(y / WHITE_Y);
    let fz = lab_f(z / WHITE_Z);

    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &Image) -> LabImage {
    // 256-entry table per channel would not help much: the matrix mixes channels.
    let data = img.pixels().map(rgb_pixel_to_lab).collect();
    LabImage {
        width: img.width,
        height: img.height,
        data,
    }
}
