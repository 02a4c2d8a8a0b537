#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use nucsel::clustering::DualClustering;
use nucsel::corpus::{write_manifest, ManifestEntry};
use nucsel::features::{FeatureKey, FeatureStore};
use nucsel::mask::InstanceMask;
use nucsel::patch::{crop2, PatchRef};
use nucsel::selection::Ablation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Procedural texture families, each with its own palette and structure.
pub fn texture(family: usize, w: u32, h: u32, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let n: i32 = r.gen_range(-12..=12);
            let base: [i32; 3] = match family % 3 {
                0 => {
                    // horizontal stripes, pink
                    if (y / 4) % 2 == 0 {
                        [220, 120, 170]
                    } else {
                        [180, 70, 130]
                    }
                }
                1 => {
                    // checkerboard, purple
                    if ((x / 8) + (y / 8)) % 2 == 0 {
                        [90, 40, 140]
                    } else {
                        [140, 90, 200]
                    }
                }
                _ => {
                    // smooth pale field with blobs
                    let d = ((x % 32) as i32 - 16).pow(2) + ((y % 32) as i32 - 16).pow(2);
                    if d < 40 {
                        [60, 60, 110]
                    } else {
                        [235, 225, 235]
                    }
                }
            };
            let px = base.map(|c| (c + n).clamp(0, 255) as u8);
            img.put_pixel(x, y, Rgb(px));
        }
    }
    img
}

/// Writes images as PNG plus a manifest; returns the manifest path.
pub fn write_corpus(dir: &Path, images: &[(String, RgbImage)]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for (id, img) in images {
        let p = dir.join(format!("{id}.png"));
        img.save(&p).unwrap();
        entries.push(ManifestEntry {
            id: id.clone(),
            path: PathBuf::from(format!("{id}.png")),
        });
    }
    let m = dir.join("manifest.json");
    write_manifest(&m, &entries).unwrap();
    m
}

/// Random feature store over `n` synthetic patches laid out on one row.
pub fn random_store(n: usize, dim: usize, seed: u64) -> (Vec<PatchRef>, FeatureStore) {
    let mut r = rng(seed);
    let mut store = FeatureStore::new(dim).unwrap();
    let patches: Vec<PatchRef> = (0..n)
        .map(|i| PatchRef {
            image_id: "fx".into(),
            x: 4 * i as u32,
            y: 0,
            s: 4,
        })
        .collect();
    // a few centers so clusters have structure
    let centers: Vec<Vec<f32>> = (0..3)
        .map(|_| (0..dim).map(|_| r.gen_range(-5.0..5.0)).collect())
        .collect();
    for p in &patches {
        let c = &centers[r.gen_range(0..centers.len())];
        let v: Vec<f32> = c.iter().map(|x| x + r.gen_range(-1.0f32..1.0)).collect();
        store.insert(FeatureKey::Patch(p.clone()), &v).unwrap();
        for q in crop2(p) {
            let v: Vec<f32> = c.iter().map(|x| x + r.gen_range(-2.0f32..2.0)).collect();
            store.insert(FeatureKey::Region(q), &v).unwrap();
        }
    }
    (patches, store)
}

fn l2(a: &[f32], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i];
        s += d * d;
    }
    s.sqrt()
}

fn mean_of(rows: &[&[f32]]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (i, v) in r.iter().enumerate() {
            m[i] += *v as f64;
        }
    }
    m.iter().map(|x| x / rows.len() as f64).collect()
}

pub struct OracleChoice {
    pub patch: PatchRef,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Brute-force argmin per coarse cluster, recomputing every center from
/// the assignments alone.
pub fn oracle_select(
    dual: &DualClustering,
    store: &FeatureStore,
    ablation: Ablation,
) -> Vec<OracleChoice> {
    let mut out = Vec::new();
    for k in 0..dual.coarse.centers.len() {
        let members: Vec<usize> = (0..dual.patches.len())
            .filter(|&i| dual.coarse.assignment[i] == k)
            .collect();
        let pv: Vec<&[f32]> = members
            .iter()
            .map(|&i| {
                store
                    .get(&FeatureKey::Patch(dual.patches[i].clone()))
                    .unwrap()
            })
            .collect();
        let coarse_center = mean_of(&pv);

        let fine = &dual.fine[k];
        let k2 = fine.model.centers.len();
        let mut counts = vec![0usize; k2];
        for &a in &fine.model.assignment {
            counts[a] += 1;
        }
        let mut star = 0;
        for j in 0..k2 {
            if counts[j] > counts[star] {
                star = j;
            }
        }
        let star_rows: Vec<&[f32]> = fine
            .regions
            .iter()
            .zip(&fine.model.assignment)
            .filter(|(_, &a)| a == star)
            .map(|(r, _)| store.get(&FeatureKey::Region(r.clone())).unwrap())
            .collect();
        let fine_center = mean_of(&star_rows);

        let mut best: Option<(f64, OracleChoice)> = None;
        for &i in &members {
            let p = &dual.patches[i];
            let q: Vec<&[f32]> = crop2(p)
                .iter()
                .map(|r| store.get(&FeatureKey::Region(r.clone())).unwrap())
                .collect();
            let d1 = l2(
                store.get(&FeatureKey::Patch(p.clone())).unwrap(),
                &coarse_center,
            );
            let d2 = q.iter().map(|v| l2(v, &fine_center)).sum::<f64>() / 4.0;
            let mut d3 = 0.0f64;
            for a in 0..4 {
                for b in 0..4 {
                    let qa: Vec<f64> = q[b].iter().map(|&x| x as f64).collect();
                    d3 = d3.max(l2(q[a], &qa));
                }
            }
            let score = match ablation {
                Ablation::Full => d1 + d2 + d3,
                Ablation::DropD2 => d1 + d3,
                Ablation::DropD3 => d1 + d2,
                Ablation::KmeansOnly => d1,
            };
            let better = match &best {
                None => true,
                Some((s, c)) => {
                    score < *s
                        || (score == *s
                            && (p.image_id.as_str(), p.y, p.x, p.s)
                                < (c.patch.image_id.as_str(), c.patch.y, c.patch.x, c.patch.s))
                }
            };
            if better {
                best = Some((
                    score,
                    OracleChoice {
                        patch: p.clone(),
                        d1,
                        d2,
                        d3,
                    },
                ));
            }
        }
        out.push(best.unwrap().1);
    }
    out
}

/// Random instance map: up to `max_inst` axis-aligned blobs of random
/// rectangles, later ones painting over earlier ones.
pub fn random_instances(w: u32, h: u32, max_inst: u16, r: &mut ChaCha8Rng) -> InstanceMask {
    let mut labels = vec![0u32; (w * h) as usize];
    let n = r.gen_range(0..=max_inst);
    for id in 1..=n as u32 {
        for _ in 0..r.gen_range(1..=3) {
            let x0 = r.gen_range(0..w);
            let y0 = r.gen_range(0..h);
            let x1 = (x0 + r.gen_range(1..=w / 2 + 1)).min(w);
            let y1 = (y0 + r.gen_range(1..=h / 2 + 1)).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    labels[(y * w + x) as usize] = id;
                }
            }
        }
    }
    InstanceMask::from_wide_labels(w, h, &labels).unwrap().0
}

/// AJI by direct enumeration of every (gt, pred) pixel overlap.
pub fn oracle_aji(gt: &InstanceMask, pred: &InstanceMask, by_intersection: bool) -> f64 {
    let g = gt.labels();
    let p = pred.labels();
    let gmax = g.iter().copied().max().unwrap_or(0);
    let pmax = p.iter().copied().max().unwrap_or(0);
    if gmax == 0 && pmax == 0 {
        return 1.0;
    }
    let area = |l: &[u16], id: u16| l.iter().filter(|&&v| v == id).count() as u64;
    let mut used = vec![false; pmax as usize + 1];
    let (mut num, mut den) = (0u64, 0u64);
    for gi in 1..=gmax {
        let ga = area(g, gi);
        if ga == 0 {
            continue;
        }
        let mut best: Option<(u16, u64, u64)> = None;
        for pj in 1..=pmax {
            if used[pj as usize] {
                continue;
            }
            let inter = g
                .iter()
                .zip(p)
                .filter(|(&a, &b)| a == gi && b == pj)
                .count() as u64;
            if inter == 0 {
                continue;
            }
            let uni = g
                .iter()
                .zip(p)
                .filter(|(&a, &b)| a == gi || b == pj)
                .count() as u64;
            let better = match best {
                None => true,
                Some((_, bi, bu)) => {
                    if by_intersection {
                        inter > bi
                    } else {
                        (inter as u128) * (bu as u128) > (bi as u128) * (uni as u128)
                    }
                }
            };
            if better {
                best = Some((pj, inter, uni));
            }
        }
        match best {
            Some((pj, i, u)) => {
                used[pj as usize] = true;
                num += i;
                den += u;
            }
            None => den += ga,
        }
    }
    for pj in 1..=pmax {
        if !used[pj as usize] {
            den += area(p, pj);
        }
    }
    num as f64 / den as f64
}

pub fn oracle_dice(gt: &InstanceMask, pred: &InstanceMask) -> f64 {
    let mut inter = 0u64;
    let mut total = 0u64;
    for (a, b) in gt.labels().iter().zip(pred.labels()) {
        let (a, b) = (*a > 0, *b > 0);
        inter += u64::from(a && b);
        total += u64::from(a) + u64::from(b);
    }
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, 1e-15, 50)
}

/// Two-sided Student-t tail by quadrature of the angular form of the density.
pub fn oracle_t_pvalue(t: f64, nu: f64) -> f64 {
    let f = |th: f64| th.cos().powf(nu - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / nu.sqrt()).atan();
    integrate(f, theta0, half) / integrate(f, 0.0, half)
}

/// Non-touching disks of radius `r` on a grid, ids in raster order.
pub fn disk_mask(w: u32, h: u32, r: i32, spacing: u32) -> InstanceMask {
    let mut m = InstanceMask::empty(w, h);
    let mut id = 0u16;
    let mut cy = spacing / 2;
    while cy + (r as u32) < h {
        let mut cx = spacing / 2;
        while cx + (r as u32) < w {
            id += 1;
            for y in 0..h as i32 {
                for x in 0..w as i32 {
                    let (dx, dy) = (x - cx as i32, y - cy as i32);
                    if dx * dx + dy * dy <= r * r {
                        m.set(x as u32, y as u32, id);
                    }
                }
            }
            cx += spacing;
        }
        cy += spacing;
    }
    m
}
