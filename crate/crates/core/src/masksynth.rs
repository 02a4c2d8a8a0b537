//! Synthetic instance masks from a single annotated mask.
//!
//! Nuclei are harvested from the mask and its flipped, rotated and randomly
//! cropped copies into a bank. A working canvas is then filled one nucleus at
//! a time: the occupied area is dilated by a disk of radius `⌈R⌉` (R = the
//! drawn nucleus' largest centroid-to-boundary distance), a background pixel
//! of the dilated map is drawn as the nucleus' center, and the footprint is
//! stamped there. A final random crop cuts through border nuclei.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{components8, InstanceMask};
use crate::seed::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rotate90,
    Rotate180,
    Rotate270,
    Crop {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
}

/// Which augmented copies of the source mask feed the bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankTransforms {
    pub flips: bool,
    pub rotations: bool,
    pub random_crops: usize,
    /// Crop side as a fraction of the mask side.
    pub crop_fraction: f64,
    pub seed: u64,
}

impl Default for BankTransforms {
    fn default() -> Self {
        Self {
            flips: true,
            rotations: true,
            random_crops: 4,
            crop_fraction: 0.75,
            seed: 0,
        }
    }
}

impl BankTransforms {
    pub fn none() -> Self {
        Self {
            flips: false,
            rotations: false,
            random_crops: 0,
            crop_fraction: 0.75,
            seed: 0,
        }
    }

    fn list(&self, width: u32, height: u32) -> Vec<Transform> {
        let mut out = vec![Transform::Identity];
        if self.flips {
            out.extend([Transform::FlipHorizontal, Transform::FlipVertical]);
        }
        if self.rotations {
            out.extend([
                Transform::Rotate90,
                Transform::Rotate180,
                Transform::Rotate270,
            ]);
        }
        let mut rng = seed::rng(self.seed);
        let frac = self.crop_fraction.clamp(0.0, 1.0);
        let cw = ((width as f64 * frac).round() as u32).clamp(1, width);
        let ch = ((height as f64 * frac).round() as u32).clamp(1, height);
        for _ in 0..self.random_crops {
            out.push(Transform::Crop {
                x: rng.gen_range(0..=width - cw),
                y: rng.gen_range(0..=height - ch),
                width: cw,
                height: ch,
            });
        }
        out
    }
}

pub fn transform_mask(mask: &InstanceMask, t: Transform) -> Result<InstanceMask> {
    let (w, h) = (mask.width(), mask.height());
    let remap = |nw: u32, nh: u32, src: &dyn Fn(u32, u32) -> (u32, u32)| {
        let mut labels = Vec::with_capacity((nw * nh) as usize);
        for y in 0..nh {
            for x in 0..nw {
                let (sx, sy) = src(x, y);
                labels.push(mask.get(sx, sy));
            }
        }
        InstanceMask::new(nw, nh, labels)
    };
    match t {
        Transform::Identity => Ok(mask.clone()),
        Transform::FlipHorizontal => remap(w, h, &|x, y| (w - 1 - x, y)),
        Transform::FlipVertical => remap(w, h, &|x, y| (x, h - 1 - y)),
        // clockwise
        Transform::Rotate90 => remap(h, w, &|x, y| (y, h - 1 - x)),
        Transform::Rotate180 => remap(w, h, &|x, y| (w - 1 - x, h - 1 - y)),
        Transform::Rotate270 => remap(h, w, &|x, y| (w - 1 - y, x)),
        Transform::Crop {
            x,
            y,
            width,
            height,
        } => mask.crop(x, y, width, height),
    }
}

/// One nucleus footprint cropped to its bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusShape {
    pub width: u32,
    pub height: u32,
    pub footprint: Vec<bool>,
    /// Centroid relative to the bounding box (pixel centers at integer coordinates).
    pub centroid: (f64, f64),
    /// Largest centroid-to-boundary distance.
    pub radius: f64,
}

impl NucleusShape {
    /// Build from a footprint; must be non-empty, one 8-connected component
    /// with a tight bounding box.
    pub fn new(width: u32, height: u32, footprint: Vec<bool>) -> Result<Self> {
        if footprint.len() != (width * height) as usize {
            return Err(Error::Invalid(
                "footprint size does not match its box".into(),
            ));
        }
        let (_, n) = components8(&footprint, width as usize, height as usize);
        if n != 1 {
            return Err(Error::Invalid(format!(
                "footprint has {n} components, expected 1"
            )));
        }
        let at = |x: i64, y: i64| {
            x >= 0
                && y >= 0
                && x < width as i64
                && y < height as i64
                && footprint[(y * width as i64 + x) as usize]
        };
        let tight = (0..width as i64).any(|x| at(x, 0))
            && (0..width as i64).any(|x| at(x, height as i64 - 1))
            && (0..height as i64).any(|y| at(0, y))
            && (0..height as i64).any(|y| at(width as i64 - 1, y));
        if !tight {
            return Err(Error::Invalid("footprint box is not tight".into()));
        }

        let mut sx = 0f64;
        let mut sy = 0f64;
        let mut count = 0f64;
        for y in 0..height as i64 {
            for x in 0..width as i64 {
                if at(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    count += 1.0;
                }
            }
        }
        let (cx, cy) = (sx / count, sy / count);
        let mut radius = 0f64;
        for y in 0..height as i64 {
            for x in 0..width as i64 {
                let boundary =
                    at(x, y) && (!at(x - 1, y) || !at(x + 1, y) || !at(x, y - 1) || !at(x, y + 1));
                if boundary {
                    radius = radius.max(((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt());
                }
            }
        }
        Ok(Self {
            width,
            height,
            footprint,
            centroid: (cx, cy),
            radius,
        })
    }

    pub fn area(&self) -> usize {
        self.footprint.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> bool {
        self.footprint[(y * self.width + x) as usize]
    }

    /// Pixel of the box nearest the centroid; placement puts this pixel on
    /// the drawn position.
    pub fn anchor(&self) -> (u32, u32) {
        let ax = (self.centroid.0.round() as u32).min(self.width - 1);
        let ay = (self.centroid.1.round() as u32).min(self.height - 1);
        (ax, ay)
    }

    /// Dilation radius used when placing this shape.
    pub fn dilation_radius(&self) -> u32 {
        self.radius.ceil() as u32
    }
}

/// Largest 8-connected component of each instance, as shapes (ties go to the
/// component met first in scan order). Single-pixel components are skipped.
pub fn extract_shapes(mask: &InstanceMask) -> Vec<(u16, NucleusShape)> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut out = Vec::new();
    for id in mask.instance_ids() {
        let fg: Vec<bool> = mask.labels().iter().map(|&v| v == id).collect();
        let (comp, n) = components8(&fg, w, h);
        let mut sizes = vec![0usize; n as usize + 1];
        for &c in &comp {
            sizes[c as usize] += 1;
        }
        let best = (1..=n as usize).fold(1, |b, c| if sizes[c] > sizes[b] { c } else { b }) as u32;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, &c) in comp.iter().enumerate() {
            if c == best {
                let (x, y) = (i % w, i / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
        if sizes[best as usize] < 2 {
            continue;
        }
        let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut fp = vec![false; bw * bh];
        for y in y0..=y1 {
            for x in x0..=x1 {
                fp[(y - y0) * bw + (x - x0)] = comp[y * w + x] == best;
            }
        }
        let shape = NucleusShape::new(bw as u32, bh as u32, fp)
            .expect("a single component in its own tight box");
        out.push((id, shape));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeOrigin {
    pub transform: Transform,
    pub instance: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusBank {
    pub shapes: Vec<NucleusShape>,
    pub origins: Vec<ShapeOrigin>,
    pub source_instances: usize,
    pub source_width: u32,
    pub source_height: u32,
}

impl NucleusBank {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn max_dilation_radius(&self) -> u32 {
        self.shapes
            .iter()
            .map(NucleusShape::dilation_radius)
            .max()
            .unwrap_or(0)
    }

    /// Expected nucleus count on a `width × height` canvas at the source density.
    pub fn density_on(&self, width: u32, height: u32) -> f64 {
        let src = self.source_width as f64 * self.source_height as f64;
        self.source_instances as f64 * (width as f64 * height as f64) / src
    }
}

pub fn build_nucleus_bank(mask: &InstanceMask, transforms: &BankTransforms) -> Result<NucleusBank> {
    let source_instances = mask.instance_count();
    if source_instances == 0 {
        return Err(Error::NoInstances);
    }
    let mut shapes = Vec::new();
    let mut origins = Vec::new();
    for t in transforms.list(mask.width(), mask.height()) {
        let copy = transform_mask(mask, t)?;
        for (instance, shape) in extract_shapes(&copy) {
            shapes.push(shape);
            origins.push(ShapeOrigin {
                transform: t,
                instance,
            });
        }
    }
    if shapes.is_empty() {
        return Err(Error::NoInstances);
    }
    Ok(NucleusBank {
        shapes,
        origins,
        source_instances,
        source_width: mask.width(),
        source_height: mask.height(),
    })
}

pub const DEFAULT_RETRY_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthMaskConfig {
    /// Placement count; `None` draws it from the source density.
    pub q: Option<usize>,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub retry_budget: usize,
}

impl Default for SynthMaskConfig {
    fn default() -> Self {
        Self {
            q: None,
            canvas_width: 320,
            canvas_height: 320,
            width: 256,
            height: 256,
            seed: 0,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

impl SynthMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("output size must be positive".into()));
        }
        if self.canvas_width < self.width || self.canvas_height < self.height {
            return Err(Error::InvalidConfig(format!(
                "canvas {}x{} smaller than output {}x{}",
                self.canvas_width, self.canvas_height, self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub shape: usize,
    /// Top-left of the shape's box on the canvas.
    pub x: u32,
    pub y: u32,
    /// Drawn center pixel.
    pub center: (u32, u32),
    pub dilation_radius: u32,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    /// Cropped, contiguously relabelled output.
    pub mask: InstanceMask,
    /// Working canvas before cropping; id `i + 1` is `placements[i]`.
    pub canvas: InstanceMask,
    pub placements: Vec<Placement>,
    pub crop_origin: (u32, u32),
    pub requested: usize,
    pub shortfall: Option<String>,
}

/// Squared distance to the nearest occupied pixel, tracked only up to a cap.
struct Proximity {
    width: u32,
    height: u32,
    cap: u32,
    d2: Vec<u32>,
}

impl Proximity {
    fn new(width: u32, height: u32, cap: u32) -> Self {
        Self {
            width,
            height,
            cap,
            d2: vec![u32::MAX; (width * height) as usize],
        }
    }

    #[inline]
    fn get(&self, x: u32, y: u32) -> u32 {
        self.d2[(y * self.width + x) as usize]
    }

    /// Mark `pixels` occupied; `edge` are the ones with a background 4-neighbour.
    fn occupy(&mut self, pixels: &[(u32, u32)], edge: &[(u32, u32)]) {
        for &(x, y) in pixels {
            self.d2[(y * self.width + x) as usize] = 0;
        }
        let r = self.cap as i64;
        for &(ex, ey) in edge {
            for dy in -r..=r {
                let y = ey as i64 + dy;
                if y < 0 || y >= self.height as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let x = ex as i64 + dx;
                    if x < 0 || x >= self.width as i64 {
                        continue;
                    }
                    let d = (dx * dx + dy * dy) as u32;
                    if d > self.cap * self.cap {
                        continue;
                    }
                    let cell = &mut self.d2[(y as u32 * self.width + x as u32) as usize];
                    *cell = (*cell).min(d);
                }
            }
        }
    }
}

fn draw_q(bank: &NucleusBank, cfg: &SynthMaskConfig, rng: &mut SeededRng) -> usize {
    match cfg.q {
        Some(q) => q,
        None => {
            let rho = bank.density_on(cfg.canvas_width, cfg.canvas_height);
            (rho * rng.gen_range(0.8..=1.2)).round() as usize
        }
    }
}

pub fn synthesize_mask(bank: &NucleusBank, cfg: &SynthMaskConfig) -> Result<SynthOutcome> {
    cfg.validate()?;
    if bank.is_empty() {
        return Err(Error::NoInstances);
    }
    let mut rng = seed::rng(cfg.seed);
    let requested = draw_q(bank, cfg, &mut rng);
    let (cw, ch) = (cfg.canvas_width, cfg.canvas_height);
    // the cap covers every dilation radius plus the 8-neighbour contact test
    let mut near = Proximity::new(cw, ch, bank.max_dilation_radius().max(2));
    let mut canvas = vec![0u32; (cw * ch) as usize];
    let mut placements: Vec<Placement> = Vec::new();
    let mut shortfall = None;
    let mut candidates: Vec<(u32, u32)> = Vec::new();

    'iterations: for _ in 0..requested {
        for attempt in 1..=cfg.retry_budget.max(1) {
            let idx = rng.gen_range(0..bank.len());
            let shape = &bank.shapes[idx];
            if shape.width > cw || shape.height > ch {
                continue;
            }
            let r = shape.dilation_radius();
            let (ax, ay) = shape.anchor();
            // the shape's box must fit on the canvas when its anchor sits on the center
            let (xmin, xmax) = (ax, cw - shape.width + ax);
            let (ymin, ymax) = (ay, ch - shape.height + ay);
            candidates.clear();
            for y in ymin..=ymax {
                for x in xmin..=xmax {
                    if near.get(x, y) > r * r {
                        candidates.push((x, y));
                    }
                }
            }
            if candidates.is_empty() {
                continue;
            }
            let center = candidates[rng.gen_range(0..candidates.len())];
            let (ox, oy) = (center.0 - ax, center.1 - ay);

            let mut pixels = Vec::with_capacity(shape.area());
            let mut edge = Vec::new();
            let mut clear = true;
            for sy in 0..shape.height {
                for sx in 0..shape.width {
                    if !shape.at(sx, sy) {
                        continue;
                    }
                    let (x, y) = (ox + sx, oy + sy);
                    // no overlap and no 8-neighbour contact with placed nuclei
                    if near.get(x, y) <= 2 {
                        clear = false;
                    }
                    pixels.push((x, y));
                    let inside = |dx: i64, dy: i64| {
                        let (nx, ny) = (sx as i64 + dx, sy as i64 + dy);
                        nx >= 0
                            && ny >= 0
                            && nx < shape.width as i64
                            && ny < shape.height as i64
                            && shape.at(nx as u32, ny as u32)
                    };
                    if !(inside(-1, 0) && inside(1, 0) && inside(0, -1) && inside(0, 1)) {
                        edge.push((x, y));
                    }
                }
            }
            if !clear {
                continue;
            }
            let id = placements.len() as u32 + 1;
            for &(x, y) in &pixels {
                canvas[(y * cw + x) as usize] = id;
            }
            near.occupy(&pixels, &edge);
            placements.push(Placement {
                shape: idx,
                x: ox,
                y: oy,
                center,
                dilation_radius: r,
                attempts: attempt,
            });
            continue 'iterations;
        }
        shortfall = Some(format!(
            "placed {} of {} nuclei; no admissible position within {} draws",
            placements.len(),
            requested,
            cfg.retry_budget
        ));
        break;
    }

    let (canvas_mask, _) = InstanceMask::from_wide_labels(cw, ch, &canvas)?;
    let x0 = rng.gen_range(0..=cw - cfg.width);
    let y0 = rng.gen_range(0..=ch - cfg.height);
    let (mask, _) = canvas_mask
        .crop(x0, y0, cfg.width, cfg.height)?
        .canonicalize();
    Ok(SynthOutcome {
        mask,
        canvas: canvas_mask,
        placements,
        crop_origin: (x0, y0),
        requested,
        shortfall,
    })
}

/// `count` independent masks; mask `i` uses seed `seed ⊕ hash(i)`.
pub fn synthesize_batch(
    bank: &NucleusBank,
    cfg: &SynthMaskConfig,
    count: usize,
) -> Result<Vec<SynthOutcome>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let cfg = SynthMaskConfig {
                seed: seed::indexed(cfg.seed, i as u64),
                ..*cfg
            };
            synthesize_mask(bank, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(size: u32, cx: i64, cy: i64, r: i64) -> InstanceMask {
        let mut m = InstanceMask::empty(size, size);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as i64 - cx, y as i64 - cy);
                if dx * dx + dy * dy <= r * r {
                    m.set(x, y, 1);
                }
            }
        }
        m
    }

    #[test]
    fn bank_count_flips_and_rotations() {
        let m = disk_mask(20, 9, 9, 4);
        let t = BankTransforms {
            random_crops: 0,
            ..BankTransforms::default()
        };
        let bank = build_nucleus_bank(&m, &t).unwrap();
        assert_eq!(bank.len(), 6);
    }

    #[test]
    fn disk_radius_within_discretization() {
        let m = disk_mask(21, 10, 10, 5);
        let shapes = extract_shapes(&m);
        let r = shapes[0].1.radius;
        // brute-force scan: farthest footprint pixel from the centroid
        let (cx, cy) = shapes[0].1.centroid;
        let s = &shapes[0].1;
        let mut far = 0f64;
        for y in 0..s.height {
            for x in 0..s.width {
                if s.at(x, y) {
                    far = far.max(((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt());
                }
            }
        }
        assert_eq!(r, far);
        assert!((5.0..=5.0 + 2f64.sqrt()).contains(&r), "{r}");
    }

    #[test]
    fn rotate_180_reverses_footprint() {
        let mut m = InstanceMask::empty(6, 6);
        for (x, y) in [(1, 1), (1, 2), (1, 3), (2, 3), (3, 3)] {
            m.set(x, y, 1);
        }
        let orig = &extract_shapes(&m)[0].1;
        let rot = &extract_shapes(&transform_mask(&m, Transform::Rotate180).unwrap())[0].1;
        let mut rev = orig.footprint.clone();
        rev.reverse();
        assert_eq!(rot.footprint, rev);
    }

    #[test]
    fn rotations_compose() {
        let m = InstanceMask::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let r90 = transform_mask(&m, Transform::Rotate90).unwrap();
        assert_eq!((r90.width(), r90.height()), (2, 3));
        let back = transform_mask(&r90, Transform::Rotate270).unwrap();
        assert_eq!(back, m);
        let twice = transform_mask(&r90, Transform::Rotate90).unwrap();
        assert_eq!(twice, transform_mask(&m, Transform::Rotate180).unwrap());
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(
            build_nucleus_bank(&InstanceMask::empty(5, 5), &BankTransforms::default()),
            Err(Error::NoInstances)
        ));
    }

    #[test]
    fn zero_placements_give_background() {
        let bank = build_nucleus_bank(&disk_mask(20, 9, 9, 4), &BankTransforms::default()).unwrap();
        let out = synthesize_mask(
            &bank,
            &SynthMaskConfig {
                q: Some(0),
                ..SynthMaskConfig::default()
            },
        )
        .unwrap();
        assert_eq!((out.mask.width(), out.mask.height()), (256, 256));
        assert_eq!(out.mask.instance_count(), 0);
    }

    #[test]
    fn exact_count_on_large_canvas() {
        let bank = build_nucleus_bank(&disk_mask(20, 9, 9, 4), &BankTransforms::none()).unwrap();
        let cfg = SynthMaskConfig {
            q: Some(5),
            canvas_width: 200,
            canvas_height: 200,
            width: 200,
            height: 200,
            seed: 3,
            ..SynthMaskConfig::default()
        };
        let out = synthesize_mask(&bank, &cfg).unwrap();
        assert_eq!(out.canvas.instance_count(), 5);
        assert_eq!(out.mask.instance_count(), 5);
        assert!(out.shortfall.is_none());
    }

    #[test]
    fn crowded_canvas_stops_early() {
        let bank = build_nucleus_bank(&disk_mask(20, 9, 9, 6), &BankTransforms::none()).unwrap();
        let cfg = SynthMaskConfig {
            q: Some(500),
            canvas_width: 40,
            canvas_height: 40,
            width: 32,
            height: 32,
            seed: 1,
            retry_budget: 20,
        };
        let out = synthesize_mask(&bank, &cfg).unwrap();
        assert!(out.placements.len() < 500);
        assert!(out.shortfall.is_some());
    }

    #[test]
    fn config_validation() {
        let cfg = SynthMaskConfig {
            canvas_width: 100,
            width: 200,
            ..SynthMaskConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn chosen_centers_clear_of_dilated_area() {
        let mut src = disk_mask(30, 8, 8, 3);
        for y in 18..26 {
            for x in 16..28 {
                src.set(x, y, 2);
            }
        }
        let bank = build_nucleus_bank(&src, &BankTransforms::default()).unwrap();
        for seed in 0..10 {
            let cfg = SynthMaskConfig {
                q: Some(30),
                canvas_width: 60,
                canvas_height: 60,
                width: 48,
                height: 48,
                seed,
                ..SynthMaskConfig::default()
            };
            let out = synthesize_mask(&bank, &cfg).unwrap();
            let mut occupied: Vec<(i64, i64)> = Vec::new();
            for p in &out.placements {
                let r = p.dilation_radius as i64;
                for &(ox, oy) in &occupied {
                    let d2 = (ox - p.center.0 as i64).pow(2) + (oy - p.center.1 as i64).pow(2);
                    assert!(
                        d2 > r * r,
                        "center within dilation radius of an occupied pixel"
                    );
                }
                let s = &bank.shapes[p.shape];
                for sy in 0..s.height {
                    for sx in 0..s.width {
                        if s.at(sx, sy) {
                            occupied.push(((p.x + sx) as i64, (p.y + sy) as i64));
                        }
                    }
                }
            }
        }
    }
}
