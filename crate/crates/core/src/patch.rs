//! Image records, patch references and the two cropping primitives of the
//! selection pipeline: sliding-window patch sampling and 2×2 quadrant split.

use std::cmp::Ordering;
use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A decoded corpus image. Pixels are always 8-bit RGB.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: RgbImage,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, pixels: RgbImage) -> Self {
        Self {
            id: id.into(),
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// An `s × s` window into a corpus image, addressed by its top-left corner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchRef {
    pub image_id: String,
    pub x: u32,
    pub y: u32,
    pub s: u32,
}

impl PatchRef {
    pub fn new(image_id: impl Into<String>, x: u32, y: u32, s: u32) -> Self {
        Self {
            image_id: image_id.into(),
            x,
            y,
            s,
        }
    }
}

/// Patches order lexicographically by `(image_id, y, x, s)`.
impl Ord for PatchRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.image_id
            .cmp(&other.image_id)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
            .then(self.s.cmp(&other.s))
    }
}

impl PartialOrd for PatchRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PatchRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@({},{})/{}", self.image_id, self.x, self.y, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    TL,
    TR,
    BL,
    BR,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::TL, Quadrant::TR, Quadrant::BL, Quadrant::BR];

    /// Offset of the quadrant inside its parent, in units of the half side.
    fn unit_offset(self) -> (u32, u32) {
        match self {
            Quadrant::TL => (0, 0),
            Quadrant::TR => (1, 0),
            Quadrant::BL => (0, 1),
            Quadrant::BR => (1, 1),
        }
    }
}

/// One of the four `s/2 × s/2` sub-regions of a patch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubRegionRef {
    pub parent: PatchRef,
    pub quadrant: Quadrant,
}

impl SubRegionRef {
    pub fn side(&self) -> u32 {
        self.parent.s / 2
    }

    /// Absolute top-left corner in the source image.
    pub fn origin(&self) -> (u32, u32) {
        let half = self.side();
        let (ux, uy) = self.quadrant.unit_offset();
        (self.parent.x + ux * half, self.parent.y + uy * half)
    }
}

impl fmt::Display for SubRegionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{:?}", self.parent, self.quadrant)
    }
}

/// Non-fatal notes raised while sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWarning {
    pub image_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct PatchPool {
    pub patches: Vec<PatchRef>,
    pub warnings: Vec<CropWarning>,
}

pub fn validate_side_and_stride(s: u32, t: u32) -> Result<()> {
    if s == 0 || !s.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "patch side s must be a positive even number, got {s}"
        )));
    }
    if t == 0 {
        return Err(Error::InvalidConfig("stride t must be at least 1".into()));
    }
    Ok(())
}

/// Number of window positions along one axis of length `len`.
pub fn positions_along(len: u32, s: u32, t: u32) -> u32 {
    if len < s {
        0
    } else {
        (len - s) / t + 1
    }
}

/// Sliding-window sampling of every admissible `s × s` window with stride `t`.
///
/// Patches come out in image input order, row-major within each image.
/// Images smaller than `s` on either side contribute nothing and leave a
/// warning in the pool.
pub fn crop1(images: &[ImageRecord], s: u32, t: u32) -> Result<PatchPool> {
    let dims: Vec<(&str, u32, u32)> = images
        .iter()
        .map(|img| (img.id.as_str(), img.width(), img.height()))
        .collect();
    crop1_dims(&dims, s, t)
}

/// [`crop1`] over bare `(id, width, height)` triples.
pub fn crop1_dims(images: &[(&str, u32, u32)], s: u32, t: u32) -> Result<PatchPool> {
    validate_side_and_stride(s, t)?;
    if images.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut pool = PatchPool::default();
    for &(id, w, h) in images {
        let nx = positions_along(w, s, t);
        let ny = positions_along(h, s, t);
        if nx == 0 || ny == 0 {
            pool.warnings.push(CropWarning {
                image_id: id.to_string(),
                message: format!("image {w}x{h} is smaller than patch side {s}; skipped"),
            });
            continue;
        }
        pool.patches.reserve((nx * ny) as usize);
        for iy in 0..ny {
            for ix in 0..nx {
                pool.patches.push(PatchRef::new(id, ix * t, iy * t, s));
            }
        }
    }
    Ok(pool)
}

/// Split a patch into its quadrants, ordered TL, TR, BL, BR.
pub fn crop2(patch: &PatchRef) -> [SubRegionRef; 4] {
    debug_assert!(patch.s.is_multiple_of(2), "odd patch side reached crop2");
    Quadrant::ALL.map(|quadrant| SubRegionRef {
        parent: patch.clone(),
        quadrant,
    })
}

/// Borrowed rectangular window of an RGB image.
#[derive(Clone, Copy)]
pub struct PixelBlock<'a> {
    pub image: &'a RgbImage,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl<'a> PixelBlock<'a> {
    pub fn new(image: &'a RgbImage, x: u32, y: u32, width: u32, height: u32) -> Result<Self> {
        if x + width > image.width() || y + height > image.height() {
            return Err(Error::Invalid(format!(
                "block {width}x{height} at ({x},{y}) exceeds image {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self {
            image,
            x,
            y,
            width,
            height,
        })
    }

    pub fn whole(image: &'a RgbImage) -> Self {
        Self {
            image,
            x: 0,
            y: 0,
            width: image.width(),
            height: image.height(),
        }
    }

    #[inline]
    pub fn get(&self, px: u32, py: u32) -> [u8; 3] {
        self.image.get_pixel(self.x + px, self.y + py).0
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |px, py| {
            image::Rgb(self.get(px, py))
        })
    }
}

pub fn patch_block<'a>(image: &'a RgbImage, patch: &PatchRef) -> Result<PixelBlock<'a>> {
    PixelBlock::new(image, patch.x, patch.y, patch.s, patch.s)
}

pub fn sub_region_block<'a>(image: &'a RgbImage, region: &SubRegionRef) -> Result<PixelBlock<'a>> {
    let (x, y) = region.origin();
    let side = region.side();
    PixelBlock::new(image, x, y, side, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blank(id: &str, w: u32, h: u32) -> ImageRecord {
        ImageRecord::new(id, RgbImage::new(w, h))
    }

    #[test]
    fn crop1_counts_on_1000_square() {
        // floor((1000 - 256) / 15) + 1 = 50 per axis
        let pool = crop1(&[blank("a", 1000, 1000)], 256, 15).unwrap();
        assert_eq!(pool.patches.len(), 2500);
        assert!(pool.warnings.is_empty());
        assert_eq!(pool.patches[0], PatchRef::new("a", 0, 0, 256));
        assert_eq!(pool.patches[1], PatchRef::new("a", 15, 0, 256));
        assert_eq!(pool.patches[50], PatchRef::new("a", 0, 15, 256));
        assert_eq!(pool.patches[2499], PatchRef::new("a", 735, 735, 256));
    }

    #[test]
    fn crop1_exact_fit_and_undersized() {
        let pool = crop1(&[blank("a", 256, 256)], 256, 15).unwrap();
        assert_eq!(pool.patches, vec![PatchRef::new("a", 0, 0, 256)]);

        let pool = crop1(&[blank("small", 200, 200)], 256, 15).unwrap();
        assert!(pool.patches.is_empty());
        assert_eq!(pool.warnings.len(), 1);
        assert_eq!(pool.warnings[0].image_id, "small");
    }

    #[test]
    fn crop1_rejects_empty_and_bad_params() {
        assert!(matches!(crop1(&[], 256, 15), Err(Error::EmptyCorpus)));
        assert!(matches!(
            crop1(&[blank("a", 10, 10)], 5, 1),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            crop1(&[blank("a", 10, 10)], 4, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn crop1_keeps_image_order() {
        let pool = crop1_dims(&[("z", 4, 4), ("a", 4, 4)], 4, 1).unwrap();
        let ids: Vec<_> = pool.patches.iter().map(|p| p.image_id.as_str()).collect();
        assert_eq!(ids, ["z", "a"]);
    }

    #[test]
    fn crop2_quadrant_offsets() {
        let quads = crop2(&PatchRef::new("a", 0, 0, 256));
        let origins: Vec<_> = quads.iter().map(|q| q.origin()).collect();
        assert_eq!(origins, [(0, 0), (128, 0), (0, 128), (128, 128)]);
        assert!(quads.iter().all(|q| q.side() == 128));
    }

    #[test]
    fn crop2_blocks_hold_own_pixels() {
        // 4x4 image with distinct values; patch is the whole image
        let img = RgbImage::from_fn(4, 4, |x, y| image::Rgb([(y * 4 + x) as u8, 0, 0]));
        let quads = crop2(&PatchRef::new("a", 0, 0, 4));
        let expected = [
            [0u8, 1, 4, 5],
            [2, 3, 6, 7],
            [8, 9, 12, 13],
            [10, 11, 14, 15],
        ];
        for (q, want) in quads.iter().zip(expected) {
            let b = sub_region_block(&img, q).unwrap();
            let got = [
                b.get(0, 0)[0],
                b.get(1, 0)[0],
                b.get(0, 1)[0],
                b.get(1, 1)[0],
            ];
            assert_eq!(got, want);
        }
    }

    #[test]
    fn crop2_reassembles_bit_identically() {
        let img = RgbImage::from_fn(40, 30, |x, y| {
            image::Rgb([(x * 7 + y) as u8, (x ^ y) as u8, (x * y) as u8])
        });
        let patch = PatchRef::new("a", 6, 4, 16);
        let mut rebuilt = RgbImage::new(16, 16);
        for q in crop2(&patch) {
            let (ox, oy) = q.origin();
            let b = sub_region_block(&img, &q).unwrap();
            for py in 0..b.height {
                for px in 0..b.width {
                    rebuilt.put_pixel(
                        ox - patch.x + px,
                        oy - patch.y + py,
                        image::Rgb(b.get(px, py)),
                    );
                }
            }
        }
        assert_eq!(rebuilt, patch_block(&img, &patch).unwrap().to_image());
    }

    proptest! {
        #[test]
        fn crop1_count_formula(w in 1u32..300, h in 1u32..300, half in 1u32..40, t in 1u32..50) {
            let s = half * 2;
            let pool = crop1_dims(&[("a", w, h)], s, t).unwrap();
            let expected = if w < s || h < s { 0 } else { ((w - s) / t + 1) * ((h - s) / t + 1) };
            prop_assert_eq!(pool.patches.len() as u32, expected);
            for p in &pool.patches {
                prop_assert!(p.x + s <= w && p.y + s <= h);
                prop_assert!(p.x % t == 0 && p.y % t == 0);
            }
        }

        #[test]
        fn crop2_tiles_parent(x in 0u32..100, y in 0u32..100, half in 1u32..20) {
            let s = half * 2;
            let patch = PatchRef::new("a", x, y, s);
            let mut cover = vec![0u8; (s * s) as usize];
            for q in crop2(&patch) {
                let (ox, oy) = q.origin();
                for dy in 0..q.side() {
                    for dx in 0..q.side() {
                        cover[((oy - y + dy) * s + (ox - x + dx)) as usize] += 1;
                    }
                }
            }
            prop_assert!(cover.iter().all(|&c| c == 1));
        }
    }
}
