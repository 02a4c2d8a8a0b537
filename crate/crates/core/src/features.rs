//! Fixed-dimension patch descriptors and the binary feature-file format used
//! to import externally computed (e.g. CNN) features.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "FPB1" | dim: u32 | count: u64 | count * dim f32 | index_len: u64 | index JSON
//! ```
//!
//! The JSON index is an array of keys in row order.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::{
    crop2, patch_block, sub_region_block, ImageRecord, PatchRef, PixelBlock, Quadrant, SubRegionRef,
};

pub const MAGIC: &[u8; 4] = b"FPB1";

const COLOR_BINS: usize = 8;
const ORIENT_BINS: usize = 8;
/// 3 × 8 colour bins, 8 orientation bins, 3 means, 3 standard deviations.
pub const BUILTIN_DIM: usize = 3 * COLOR_BINS + ORIENT_BINS + 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    Patch(PatchRef),
    Region(SubRegionRef),
}

impl FeatureKey {
    pub fn patch(&self) -> &PatchRef {
        match self {
            FeatureKey::Patch(p) => p,
            FeatureKey::Region(r) => &r.parent,
        }
    }
}

impl From<PatchRef> for FeatureKey {
    fn from(p: PatchRef) -> Self {
        FeatureKey::Patch(p)
    }
}

impl From<SubRegionRef> for FeatureKey {
    fn from(r: SubRegionRef) -> Self {
        FeatureKey::Region(r)
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::Patch(p) => p.fmt(f),
            FeatureKey::Region(r) => r.fmt(f),
        }
    }
}

/// Flat JSON form of a key: a patch plus an optional quadrant.
#[derive(Serialize, Deserialize)]
struct KeyRecord {
    image_id: String,
    x: u32,
    y: u32,
    s: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quadrant: Option<Quadrant>,
}

impl Serialize for FeatureKey {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let p = self.patch();
        KeyRecord {
            image_id: p.image_id.clone(),
            x: p.x,
            y: p.y,
            s: p.s,
            quadrant: match self {
                FeatureKey::Patch(_) => None,
                FeatureKey::Region(r) => Some(r.quadrant),
            },
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FeatureKey {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = KeyRecord::deserialize(de)?;
        let parent = PatchRef::new(r.image_id, r.x, r.y, r.s);
        Ok(match r.quadrant {
            None => FeatureKey::Patch(parent),
            Some(quadrant) => FeatureKey::Region(SubRegionRef { parent, quadrant }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f32>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Euclidean distance, accumulated in f64.
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Built-in descriptor: per-channel colour histograms, a magnitude-weighted
/// gradient orientation histogram of the luma image, and per-channel
/// mean/std. Histograms are normalized so the vector does not depend on the
/// block's side length.
pub fn extract_builtin(block: &PixelBlock<'_>) -> FeatureVector {
    let mut out = vec![0f32; BUILTIN_DIM];
    if block.is_empty() {
        return FeatureVector(out);
    }
    let (w, h) = (block.width as usize, block.height as usize);
    let n = (w * h) as f64;

    let mut hist = [[0u64; COLOR_BINS]; 3];
    // exact integer moments keep constant blocks at std 0 for any size
    let mut sum = [0u64; 3];
    let mut sum_sq = [0u128; 3];
    let mut luma = vec![0f64; w * h];
    for py in 0..h {
        for px in 0..w {
            let rgb = block.get(px as u32, py as u32);
            for c in 0..3 {
                let v = rgb[c] as usize;
                hist[c][v * COLOR_BINS / 256] += 1;
                sum[c] += rgb[c] as u64;
                sum_sq[c] += (rgb[c] as u128) * (rgb[c] as u128);
            }
            luma[py * w + px] =
                0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
        }
    }
    for c in 0..3 {
        for b in 0..COLOR_BINS {
            out[c * COLOR_BINS + b] = (hist[c][b] as f64 / n) as f32;
        }
    }

    // central differences with replicated borders
    let mut orient = [0f64; ORIENT_BINS];
    for py in 0..h {
        let (up, down) = (py.saturating_sub(1), (py + 1).min(h - 1));
        for px in 0..w {
            let (left, right) = (px.saturating_sub(1), (px + 1).min(w - 1));
            let gx = luma[py * w + right] - luma[py * w + left];
            let gy = luma[down * w + px] - luma[up * w + px];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx) + std::f64::consts::PI;
            let bin = ((angle / std::f64::consts::TAU) * ORIENT_BINS as f64) as usize % ORIENT_BINS;
            orient[bin] += mag;
        }
    }
    let total: f64 = orient.iter().sum();
    if total > 0.0 {
        for b in 0..ORIENT_BINS {
            out[3 * COLOR_BINS + b] = (orient[b] / total) as f32;
        }
    }

    let base = 3 * COLOR_BINS + ORIENT_BINS;
    let count = (w * h) as u128;
    for c in 0..3 {
        let centered = count * sum_sq[c] - (sum[c] as u128) * (sum[c] as u128);
        let var = centered as f64 / (count * count) as f64;
        out[base + c] = (sum[c] as f64 / n / 255.0) as f32;
        out[base + 3 + c] = (var.sqrt() / 255.0) as f32;
    }
    FeatureVector(out)
}

/// Row-major feature table keyed by patch or sub-region.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    keys: Vec<FeatureKey>,
    data: Vec<f32>,
    index: HashMap<FeatureKey, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::FeatureFile(
                "feature dimension must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            keys: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn insert(&mut self, key: FeatureKey, values: &[f32]) -> Result<()> {
        let row = self.keys.len();
        if values.len() != self.dim {
            return Err(Error::FeatureRow {
                row,
                reason: format!(
                    "dimension {} differs from store dimension {}",
                    values.len(),
                    self.dim
                ),
            });
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::FeatureRow {
                row,
                reason: format!("non-finite value at column {col}"),
            });
        }
        if self.index.contains_key(&key) {
            return Err(Error::FeatureRow {
                row,
                reason: format!("duplicate key {key}"),
            });
        }
        self.index.insert(key.clone(), row);
        self.keys.push(key);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn get(&self, key: &FeatureKey) -> Result<&[f32]> {
        self.index
            .get(key)
            .map(|&row| self.row(row))
            .ok_or_else(|| Error::MissingFeature(key.to_string()))
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Check that every patch and all of its quadrants have a row.
    pub fn require_patches(&self, patches: &[PatchRef]) -> Result<()> {
        for p in patches {
            self.get(&FeatureKey::Patch(p.clone()))?;
            for r in crop2(p) {
                self.get(&FeatureKey::Region(r))?;
            }
        }
        Ok(())
    }

    /// Copy with every row scaled to unit L2 norm (zero rows stay zero).
    pub fn l2_normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.dim) {
            let norm = row
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
        out
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let index = serde_json::to_vec(&self.keys)?;
        let mut buf = Vec::with_capacity(24 + self.data.len() * 4 + index.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.keys.len() as u64).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(index.len() as u64).to_le_bytes());
        buf.extend_from_slice(&index);
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::FeatureFile("bad magic, expected FPB1".into()));
        }
        let dim = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let body_len = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::FeatureFile("row section size overflows".into()))?;
        let body = cur.take(body_len)?;
        let index_len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let index = cur.take(index_len)?;
        if cur.pos != bytes.len() {
            return Err(Error::FeatureFile(format!(
                "{} trailing bytes after index",
                bytes.len() - cur.pos
            )));
        }
        let keys: Vec<FeatureKey> = serde_json::from_slice(index)
            .map_err(|e| Error::FeatureFile(format!("key index: {e}")))?;
        if keys.len() != count {
            return Err(Error::FeatureFile(format!(
                "header declares {count} rows but index lists {} keys",
                keys.len()
            )));
        }
        let mut store = Self::new(dim)?;
        let mut row = vec![0f32; dim];
        for (r, key) in keys.into_iter().enumerate() {
            let raw = &body[r * dim * 4..(r + 1) * dim * 4];
            for (v, b) in row.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            store.insert(key, &row)?;
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::FeatureFile(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Built-in features for every patch in `patches` and its four quadrants.
/// Rows are stored patch-major: patch, TL, TR, BL, BR.
pub fn builtin_store(images: &[ImageRecord], patches: &[PatchRef]) -> Result<FeatureStore> {
    let by_id: HashMap<&str, &ImageRecord> = images.iter().map(|i| (i.id.as_str(), i)).collect();
    let rows: Vec<Result<Vec<(FeatureKey, FeatureVector)>>> = patches
        .par_iter()
        .map(|p| {
            let img = by_id
                .get(p.image_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("unknown image id `{}`", p.image_id)))?;
            let mut out = Vec::with_capacity(5);
            out.push((
                FeatureKey::Patch(p.clone()),
                extract_builtin(&patch_block(&img.pixels, p)?),
            ));
            for r in crop2(p) {
                let v = extract_builtin(&sub_region_block(&img.pixels, &r)?);
                out.push((FeatureKey::Region(r), v));
            }
            Ok(out)
        })
        .collect();
    let mut store = FeatureStore::new(BUILTIN_DIM)?;
    for group in rows {
        for (k, v) in group? {
            store.insert(k, v.as_slice())?;
        }
    }
    Ok(store)
}
