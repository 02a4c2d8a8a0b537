//! Instance label maps and their on-disk format: a single-channel 16-bit PNG
//! (value = instance id, 0 = background) plus a `<name>.json` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_INSTANCES: usize = u16::MAX as usize;

/// Per-pixel instance ids, row-major. `0` is background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceMask {
    width: u32,
    height: u32,
    labels: Vec<u16>,
}

impl InstanceMask {
    pub fn new(width: u32, height: u32, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch {
                expected: format!(
                    "{} labels for {width}x{height}",
                    width as usize * height as usize
                ),
                found: labels.len().to_string(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width as usize * height as usize],
        }
    }

    /// Build from wide labels, relabelling ids to `1..=N` in ascending order
    /// of the original id.
    pub fn from_wide_labels(width: u32, height: u32, labels: &[u32]) -> Result<(Self, IdRemap)> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", width as usize * height as usize),
                found: labels.len().to_string(),
            });
        }
        let mut ids: Vec<u32> = labels.iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() > MAX_INSTANCES {
            return Err(Error::IdOverflow(ids.len()));
        }
        let table: BTreeMap<u32, u16> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, (i + 1) as u16))
            .collect();
        let out = labels
            .iter()
            .map(|&v| if v == 0 { 0 } else { table[&v] })
            .collect();
        let remap = IdRemap {
            pairs: table.into_iter().filter(|(a, b)| *a != *b as u32).collect(),
        };
        Ok((Self::new(width, height, out)?, remap))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, id: u16) {
        let w = self.width as usize;
        self.labels[y as usize * w + x as usize] = id;
    }

    /// Sorted distinct non-zero ids.
    pub fn instance_ids(&self) -> Vec<u16> {
        let mut seen = vec![false; MAX_INSTANCES + 1];
        for &v in &self.labels {
            seen[v as usize] = true;
        }
        (1..=MAX_INSTANCES)
            .filter(|&i| seen[i])
            .map(|i| i as u16)
            .collect()
    }

    pub fn instance_count(&self) -> usize {
        self.instance_ids().len()
    }

    pub fn is_canonical(&self) -> bool {
        self.instance_ids()
            .iter()
            .enumerate()
            .all(|(i, &id)| id as usize == i + 1)
    }

    /// Relabel ids to `1..=N` preserving their relative order.
    pub fn canonicalize(&self) -> (Self, IdRemap) {
        let wide: Vec<u32> = self.labels.iter().map(|&v| v as u32).collect();
        Self::from_wide_labels(self.width, self.height, &wide)
            .expect("u16 labels always fit after relabelling")
    }

    pub fn foreground(&self) -> Vec<bool> {
        self.labels.iter().map(|&v| v != 0).collect()
    }

    /// Pixel area per id, indexed by id (index 0 is background).
    pub fn areas(&self) -> Vec<u64> {
        let max = self.labels.iter().copied().max().unwrap_or(0) as usize;
        let mut areas = vec![0u64; max + 1];
        for &v in &self.labels {
            areas[v as usize] += 1;
        }
        areas
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Invalid(format!(
                "crop {w}x{h} at ({x},{y}) exceeds mask {}x{}",
                self.width, self.height
            )));
        }
        let mut labels = Vec::with_capacity(w as usize * h as usize);
        for yy in y..y + h {
            let row = yy as usize * self.width as usize;
            labels.extend_from_slice(&self.labels[row + x as usize..row + (x + w) as usize]);
        }
        Self::new(w, h, labels)
    }
}

/// Original id → canonical id, listing only ids that changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRemap {
    pub pairs: Vec<(u32, u16)>,
}

impl IdRemap {
    pub fn is_identity(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSidecar {
    #[serde(default)]
    pub source_image: Option<String>,
    #[serde(default)]
    pub offset: Option<[u32; 2]>,
    pub instance_count: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedMask {
    pub mask: InstanceMask,
    pub remap: IdRemap,
    pub sidecar: Option<MaskSidecar>,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Write `mask` as a 16-bit PNG plus its JSON sidecar.
pub fn save_mask(
    mask: &InstanceMask,
    path: &Path,
    source_image: Option<&str>,
    offset: Option<[u32; 2]>,
) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width, mask.height, mask.labels.clone())
            .expect("label buffer matches dimensions");
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))?;
    let sidecar = MaskSidecar {
        source_image: source_image.map(str::to_string),
        offset,
        instance_count: mask.instance_count(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(())
}

/// Read a mask PNG (8- or 16-bit single channel) and its sidecar if present.
/// Ids are canonicalized to `1..=N`; any relabelling is reported in `remap`.
pub fn load_mask(path: &Path) -> Result<LoadedMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let raw = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        image::DynamicImage::ImageLuma8(_) => img.into_luma16_preserving(),
        other => {
            return Err(Error::MalformedMask(format!(
                "{}: expected single-channel PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = raw.dimensions();
    let mask = InstanceMask::new(w, h, raw.into_raw())?;
    let (mask, remap) = mask.canonicalize();

    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sc: MaskSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedMask(format!("{}: {e}", side.display())))?;
        if sc.instance_count != mask.instance_count() {
            return Err(Error::MalformedMask(format!(
                "{}: sidecar says {} instances, map has {}",
                side.display(),
                sc.instance_count,
                mask.instance_count()
            )));
        }
        Some(sc)
    } else {
        None
    };
    Ok(LoadedMask {
        mask,
        remap,
        sidecar,
    })
}

trait PreserveLuma16 {
    fn into_luma16_preserving(self) -> ImageBuffer<Luma<u16>, Vec<u16>>;
}

impl PreserveLuma16 for image::DynamicImage {
    // `to_luma16` rescales 8-bit values to 16-bit range; ids must stay as-is.
    fn into_luma16_preserving(self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        let l8 = self.into_luma8();
        let (w, h) = l8.dimensions();
        ImageBuffer::from_raw(w, h, l8.into_raw().into_iter().map(u16::from).collect())
            .expect("same dimensions")
    }
}

/// 8-connected component labelling of a binary footprint. Returns per-pixel
/// component index (`0` = background, components numbered from 1 in scan
/// order) and the number of components.
pub fn components8(fg: &[bool], width: usize, height: usize) -> (Vec<u32>, u32) {
    let mut out = vec![0u32; fg.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || out[start] != 0 {
            continue;
        }
        next += 1;
        out[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if fg[j] && out[j] == 0 {
                        out[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (out, next)
}
