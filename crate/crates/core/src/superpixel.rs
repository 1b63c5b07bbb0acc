//! SLIC superpixels: localized k-means in joint (L, a, b, x, y) space.
//!
//! Pixel `(x, y)` sits at integer coordinates. Initial centers are the
//! geometric centers of a near-square grid of cells, so they can fall
//! between pixels. Each center is nudged to the lowest-gradient pixel of its
//! 3x3 neighbourhood only when that gradient is strictly lower than at the
//! seed pixel.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::imgcore::{Image, LabImage};
use crate::rng::splitmix64;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("target count {target} exceeds pixel count {pixels}")]
    TargetCountExceedsPixels { target: usize, pixels: usize },
    #[error("invalid SLIC parameters: {0}")]
    InvalidParams(String),
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicParams {
    pub target_count: usize,
    pub compactness: f64,
    pub max_iterations: usize,
    pub enforce_connectivity: bool,
}

impl SlicParams {
    pub fn new(target_count: usize) -> Self {
        SlicParams {
            target_count,
            compactness: 10.0,
            max_iterations: 10,
            enforce_connectivity: true,
        }
    }

    pub fn with_compactness(mut self, m: f64) -> Self {
        self.compactness = m;
        self
    }

    fn validate(&self, pixels: usize) -> Result<(), SegmentError> {
        if self.target_count == 0 {
            return Err(SegmentError::InvalidParams("target_count must be >= 1".into()));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(SegmentError::InvalidParams(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.max_iterations == 0 {
            return Err(SegmentError::InvalidParams("max_iterations must be >= 1".into()));
        }
        if self.target_count > pixels {
            return Err(SegmentError::TargetCountExceedsPixels {
                target: self.target_count,
                pixels,
            });
        }
        Ok(())
    }
}

/// Per-pixel segment labels in the contiguous range `[0, segment_count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    segment_count: usize,
}

impl Segmentation {
    /// Wraps an existing label map, checking that ids are contiguous from 0.
    pub fn from_labels(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, SegmentError> {
        if width == 0 || height == 0 || labels.len() != width as usize * height as usize {
            return Err(SegmentError::InvalidSegmentation(format!(
                "{} labels for {width}x{height}",
                labels.len()
            )));
        }
        let max = *labels.iter().max().expect("non-empty") as usize;
        let mut seen = vec![false; max + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(SegmentError::InvalidSegmentation(format!(
                "label {gap} unused but {max} present"
            )));
        }
        Ok(Segmentation {
            width,
            height,
            labels,
            segment_count: max + 1,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// True when every segment is a single 4-connected region.
    pub fn is_four_connected(&self) -> bool {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut visited = vec![false; self.labels.len()];
        let mut seen_label = vec![false; self.segment_count];
        let mut queue = VecDeque::new();
        for start in 0..self.labels.len() {
            if visited[start] {
                continue;
            }
            let label = self.labels[start];
            if seen_label[label as usize] {
                return false;
            }
            seen_label[label as usize] = true;
            visited[start] = true;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                for q in neighbours4(p, w, h) {
                    if !visited[q] && self.labels[q] == label {
                        visited[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        true
    }
}

fn neighbours4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < w).then(|| p + 1);
    let up = (y > 0).then(|| p - w);
    let down = (y + 1 < h).then(|| p + w);
    [left, right, up, down].into_iter().flatten()
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn sq_dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

fn gradient(lab: &LabImage, x: usize, y: usize) -> f64 {
    let (w, h) = (lab.width() as usize, lab.height() as usize);
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    sq_dist3(&lab.at(xr, y), &lab.at(xl, y)) + sq_dist3(&lab.at(x, yd), &lab.at(x, yu))
}

/// Cell-centre seeds: `ceil(sqrt(K * w / h))` columns, enough rows for K,
/// and the K centres spread as evenly as possible over those rows.
fn grid_seeds(w: usize, h: usize, k: usize) -> Vec<(f64, f64)> {
    let cols = ((k as f64 * w as f64 / h as f64).sqrt().ceil() as usize).clamp(1, k);
    let rows = k.div_ceil(cols);
    let base = k / rows;
    let extra = k % rows;
    let row_h = h as f64 / rows as f64;
    let mut seeds = Vec::with_capacity(k);
    for r in 0..rows {
        let count = base + usize::from(r < extra);
        let cell_w = w as f64 / count as f64;
        let cy = (r as f64 + 0.5) * row_h - 0.5;
        for i in 0..count {
            seeds.push(((i as f64 + 0.5) * cell_w - 0.5, cy));
        }
    }
    seeds
}

fn init_centers(lab: &LabImage, k: usize) -> Vec<Center> {
    let (w, h) = (lab.width() as usize, lab.height() as usize);
    grid_seeds(w, h, k)
        .into_iter()
        .map(|(sx, sy)| {
            let px = ((sx + 0.5).floor() as usize).min(w - 1);
            let py = ((sy + 0.5).floor() as usize).min(h - 1);
            let mut best = (gradient(lab, px, py), px, py);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = px as i64 + dx;
                    let ny = py as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let g = gradient(lab, nx as usize, ny as usize);
                    if g < best.0 {
                        best = (g, nx as usize, ny as usize);
                    }
                }
            }
            let (_, bx, by) = best;
            if (bx, by) == (px, py) {
                Center {
                    lab: lab.at(px, py),
                    x: sx,
                    y: sy,
                }
            } else {
                Center {
                    lab: lab.at(bx, by),
                    x: bx as f64,
                    y: by as f64,
                }
            }
        })
        .collect()
}

/// Segments `lab` into roughly `params.target_count` superpixels.
pub fn slic_segment(lab: &LabImage, params: &SlicParams) -> Result<Segmentation, SegmentError> {
    let (w, h) = (lab.width() as usize, lab.height() as usize);
    let n = w * h;
    params.validate(n)?;
    let k = params.target_count;
    let s = (n as f64 / k as f64).sqrt();
    // D^2 = dc^2 + ds^2 * (m / S)^2
    let spatial_weight = (params.compactness / s).powi(2);

    let mut centers = init_centers(lab, k);
    let pixels = lab.data();
    let mut assignment = vec![u32::MAX; n];
    let mut best = vec![f64::INFINITY; n];

    for _ in 0..params.max_iterations {
        assignment.fill(u32::MAX);
        best.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).ceil().max(0.0) as usize;
            let y0 = (c.y - s).ceil().max(0.0) as usize;
            let x1 = ((c.x + s).floor() as i64).min(w as i64 - 1);
            let y1 = ((c.y + s).floor() as i64).min(h as i64 - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                let dy = y as f64 - c.y;
                let row = y * w;
                for x in x0..=x1 as usize {
                    let p = row + x;
                    let dx = x as f64 - c.x;
                    let d = sq_dist3(&pixels[p], &c.lab) + (dx * dx + dy * dy) * spatial_weight;
                    if d < best[p] {
                        best[p] = d;
                        assignment[p] = ci as u32;
                    }
                }
            }
        }

        // Pixels outside every window fall back to the globally nearest centre.
        for p in 0..n {
            if assignment[p] != u32::MAX {
                continue;
            }
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            let mut bd = f64::INFINITY;
            for (ci, c) in centers.iter().enumerate() {
                let d =
                    sq_dist3(&pixels[p], &c.lab) + ((x - c.x).powi(2) + (y - c.y).powi(2)) * spatial_weight;
                if d < bd {
                    bd = d;
                    assignment[p] = ci as u32;
                }
            }
        }

        let mut sums = vec![[0.0f64; 5]; k];
        let mut counts = vec![0usize; k];
        for (p, &ci) in assignment.iter().enumerate() {
            let acc = &mut sums[ci as usize];
            let px = &pixels[p];
            acc[0] += px[0];
            acc[1] += px[1];
            acc[2] += px[2];
            acc[3] += (p % w) as f64;
            acc[4] += (p / w) as f64;
            counts[ci as usize] += 1;
        }
        for ((c, acc), &cnt) in centers.iter_mut().zip(&sums).zip(&counts) {
            if cnt == 0 {
                continue;
            }
            let inv = 1.0 / cnt as f64;
            c.lab = [acc[0] * inv, acc[1] * inv, acc[2] * inv];
            c.x = acc[3] * inv;
            c.y = acc[4] * inv;
        }
    }

    let labels = if params.enforce_connectivity {
        enforce_connectivity(&assignment, w, h, n as f64 / (4.0 * k as f64))
    } else {
        compact(&assignment)
    };
    let segment_count = labels.iter().max().map_or(0, |&m| m as usize + 1);
    Ok(Segmentation {
        width: w as u32,
        height: h as u32,
        labels,
        segment_count,
    })
}

/// Renumbers labels by first appearance in scan order.
fn compact(raw: &[u32]) -> Vec<u32> {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    raw.iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn find(parent: &mut [usize], mut c: usize) -> usize {
    while parent[c] != c {
        parent[c] = parent[parent[c]];
        c = parent[c];
    }
    c
}

/// Splits every label into its 4-connected components, then folds components
/// smaller than `min_size` into the adjacent component sharing the most
/// border pairs (ties to the lowest component id), in discovery order.
///
/// The largest component of each label (first found on ties) is never folded
/// away, so every non-empty cluster keeps a segment. Without that, heavily
/// textured input shatters every cluster below `min_size` and the merges
/// cascade into a handful of segments.
fn enforce_connectivity(raw: &[u32], w: usize, h: usize, min_size: f64) -> Vec<u32> {
    let n = raw.len();
    let mut comp = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = members.len();
        let label = raw[start];
        let mut pix = vec![start];
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours4(p, w, h) {
                if comp[q] == usize::MAX && raw[q] == label {
                    comp[q] = id;
                    pix.push(q);
                    queue.push_back(q);
                }
            }
        }
        members.push(pix);
    }

    let mut anchor: BTreeMap<u32, usize> = BTreeMap::new();
    for (c, pix) in members.iter().enumerate() {
        let a = anchor.entry(raw[pix[0]]).or_insert(c);
        if pix.len() > members[*a].len() {
            *a = c;
        }
    }
    let mut keep = vec![false; members.len()];
    for &c in anchor.values() {
        keep[c] = true;
    }

    let mut parent: Vec<usize> = (0..members.len()).collect();
    for c in 0..members.len() {
        if keep[c] || (members[c].len() as f64) >= min_size {
            continue;
        }
        let mut shared: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in &members[c] {
            for q in neighbours4(p, w, h) {
                let r = find(&mut parent, comp[q]);
                if r != c {
                    *shared.entry(r).or_insert(0) += 1;
                }
            }
        }
        // max_by_key keeps the last maximum; iterate in reverse so the lowest id wins
        let Some((&target, _)) = shared.iter().rev().max_by_key(|(_, &cnt)| cnt) else {
            continue;
        };
        parent[c] = target;
        let moved = std::mem::take(&mut members[c]);
        members[target].extend(moved);
    }

    let roots: Vec<u32> = (0..n).map(|p| find(&mut parent, comp[p]) as u32).collect();
    compact(&roots)
}

/// Marks pixels whose label differs from the right or lower neighbour.
pub fn boundary_map(seg: &Segmentation) -> Vec<bool> {
    let (w, h) = (seg.width as usize, seg.height as usize);
    let l = &seg.labels;
    let mut out = vec![false; l.len()];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let right = x + 1 < w && l[p + 1] != l[p];
            let down = y + 1 < h && l[p + w] != l[p];
            out[p] = right || down;
        }
    }
    out
}

/// Debug rendering: every segment gets a pseudo-colour hashed from its id.
pub fn render_segmentation(seg: &Segmentation) -> Image {
    let mut data = Vec::with_capacity(seg.labels.len() * 3);
    for &l in &seg.labels {
        let hsh = splitmix64(l as u64);
        data.extend_from_slice(&[hsh as u8, (hsh >> 8) as u8, (hsh >> 16) as u8]);
    }
    Image::new(seg.width, seg.height, data).expect("dimensions taken from segmentation")
}
