//! Consistency-based patch selection: for every coarse cluster pick the
//! member minimizing
//!
//! ```text
//! d1 = ‖f(x) − C(x)‖                      coarse representativeness
//! d2 = ¼ Σ_p ‖f(x_p) − c(x)‖              fine representativeness
//! d3 = max_{i<j} ‖f(x_i) − f(x_j)‖        intra-patch consistency
//! ```
//!
//! where `C(x)` is the coarse center and `c(x)` the center of the largest
//! fine cluster of `x`'s coarse cluster. Also the random baselines used for
//! comparison.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::DualClustering;
use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureStore};
use crate::patch::{crop2, ImageRecord, PatchRef};
use crate::seed;

pub const RUNNER_UPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionTerms {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub total: f64,
}

impl CriterionTerms {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Self {
        Self {
            d1,
            d2,
            d3,
            total: d1 + d2 + d3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    DropD2,
    DropD3,
    KmeansOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::DropD2,
        Ablation::DropD3,
        Ablation::KmeansOnly,
    ];

    pub fn score(self, t: &CriterionTerms) -> f64 {
        match self {
            Ablation::Full => t.total,
            Ablation::DropD2 => t.d1 + t.d3,
            Ablation::DropD3 => t.d1 + t.d2,
            Ablation::KmeansOnly => t.d1,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::DropD2 => "drop_d2",
            Ablation::DropD3 => "drop_d3",
            Ablation::KmeansOnly => "kmeans_only",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(Ablation::Full),
            "drop_d2" => Ok(Ablation::DropD2),
            "drop_d3" => Ok(Ablation::DropD3),
            "kmeans_only" | "kmeans" => Ok(Ablation::KmeansOnly),
            other => Err(Error::InvalidConfig(format!("unknown ablation `{other}`"))),
        }
    }
}

fn dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y) * (x as f64 - y))
        .sum::<f64>()
        .sqrt()
}

fn dist32(a: &[f32], b: &[f32]) -> f64 {
    crate::features::euclidean(a, b)
}

/// Terms for one patch given its own vector, its four quadrant vectors and
/// the two reference centers.
pub fn terms_from_vectors(
    patch: &[f32],
    quadrants: [&[f32]; 4],
    coarse_center: &[f64],
    fine_center: &[f64],
) -> CriterionTerms {
    let d1 = dist(patch, coarse_center);
    let d2 = quadrants.iter().map(|q| dist(q, fine_center)).sum::<f64>() / 4.0;
    let mut d3 = 0f64;
    for i in 0..4 {
        for j in i + 1..4 {
            d3 = d3.max(dist32(quadrants[i], quadrants[j]));
        }
    }
    CriterionTerms::new(d1, d2, d3)
}

/// Index of the fine cluster with the most sub-regions; ties go to the lowest index.
pub fn largest_fine_cluster(sizes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    best
}

fn terms_for(
    x: &PatchRef,
    cluster: usize,
    dual: &DualClustering,
    store: &FeatureStore,
) -> Result<CriterionTerms> {
    let fine = dual.fine.get(cluster).ok_or_else(|| {
        Error::Invalid(format!("no fine clustering for coarse cluster {cluster}"))
    })?;
    let star = largest_fine_cluster(&fine.model.sizes());
    let pv = store.get(&FeatureKey::Patch(x.clone()))?;
    let quads = crop2(x);
    let q: Vec<&[f32]> = quads
        .iter()
        .map(|r| store.get(&FeatureKey::Region(r.clone())))
        .collect::<Result<_>>()?;
    Ok(terms_from_vectors(
        pv,
        [q[0], q[1], q[2], q[3]],
        &dual.coarse.centers[cluster],
        &fine.model.centers[star],
    ))
}

/// Criterion terms of patch `x` under a finished dual clustering.
pub fn criterion_terms(
    x: &PatchRef,
    dual: &DualClustering,
    store: &FeatureStore,
) -> Result<CriterionTerms> {
    let idx = dual
        .patches
        .iter()
        .position(|p| p == x)
        .ok_or_else(|| Error::Invalid(format!("patch {x} is not part of the clustering")))?;
    terms_for(x, dual.coarse.assignment[idx], dual, store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPatch {
    pub patch: PatchRef,
    pub terms: CriterionTerms,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub cluster: usize,
    pub size: usize,
    pub chosen: PatchRef,
    pub terms: CriterionTerms,
    pub score: f64,
    pub largest_fine_cluster: usize,
    pub largest_fine_size: usize,
    pub runner_ups: Vec<RankedPatch>,
}

/// Terms of one pool patch, for tabular export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTerms {
    pub patch: PatchRef,
    pub cluster: usize,
    pub terms: CriterionTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub ablation: Ablation,
    pub k1: usize,
    pub k2: usize,
    pub clusters: Vec<ClusterSelection>,
    #[serde(skip)]
    pub patch_terms: Vec<PatchTerms>,
}

impl SelectionReport {
    pub fn selected(&self) -> Vec<PatchRef> {
        self.clusters.iter().map(|c| c.chosen.clone()).collect()
    }

    /// CSV with one row per pool patch: coordinates, cluster, terms and
    /// whether it was selected.
    pub fn terms_csv(&self) -> String {
        let chosen: std::collections::HashSet<&PatchRef> =
            self.clusters.iter().map(|c| &c.chosen).collect();
        let mut out = String::from("image_id,x,y,s,cluster,d1,d2,d3,total,selected\n");
        for r in &self.patch_terms {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.patch.image_id,
                r.patch.x,
                r.patch.y,
                r.patch.s,
                r.cluster,
                r.terms.d1,
                r.terms.d2,
                r.terms.d3,
                r.terms.total,
                u8::from(chosen.contains(&r.patch))
            ));
        }
        out
    }
}

/// Rank by ablated score, then by patch order `(image_id, y, x)`.
fn rank(a: &RankedPatch, b: &RankedPatch) -> std::cmp::Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.patch.cmp(&b.patch))
}

/// Argmin of the (ablated) criterion within every coarse cluster.
pub fn cps_select(
    dual: &DualClustering,
    store: &FeatureStore,
    ablation: Ablation,
) -> Result<SelectionReport> {
    let k1 = dual.coarse.k;
    let members: Vec<Vec<usize>> = (0..k1).map(|k| dual.coarse.members(k).collect()).collect();
    let per_cluster: Vec<Result<(ClusterSelection, Vec<PatchTerms>)>> = (0..k1)
        .into_par_iter()
        .map(|k| {
            let fine_sizes = dual.fine[k].model.sizes();
            let star = largest_fine_cluster(&fine_sizes);
            let mut ranked: Vec<RankedPatch> = members[k]
                .iter()
                .map(|&i| {
                    let patch = dual.patches[i].clone();
                    let terms = terms_for(&patch, k, dual, store)?;
                    Ok(RankedPatch {
                        score: ablation.score(&terms),
                        patch,
                        terms,
                    })
                })
                .collect::<Result<_>>()?;
            let rows = ranked
                .iter()
                .map(|r| PatchTerms {
                    patch: r.patch.clone(),
                    cluster: k,
                    terms: r.terms,
                })
                .collect();
            ranked.sort_by(rank);
            let mut it = ranked.into_iter();
            let best = it
                .next()
                .ok_or_else(|| Error::Invalid(format!("coarse cluster {k} is empty")))?;
            Ok((
                ClusterSelection {
                    cluster: k,
                    size: members[k].len(),
                    chosen: best.patch,
                    terms: best.terms,
                    score: best.score,
                    largest_fine_cluster: star,
                    largest_fine_size: fine_sizes[star],
                    runner_ups: it.take(RUNNER_UPS).collect(),
                },
                rows,
            ))
        })
        .collect();

    let mut clusters = Vec::with_capacity(k1);
    let mut rows_by_patch: HashMap<usize, PatchTerms> = HashMap::new();
    for (k, r) in per_cluster.into_iter().enumerate() {
        let (sel, rows) = r?;
        clusters.push(sel);
        for (&i, row) in members[k].iter().zip(rows) {
            rows_by_patch.insert(i, row);
        }
    }
    let patch_terms = (0..dual.patches.len())
        .filter_map(|i| rows_by_patch.remove(&i))
        .collect();
    Ok(SelectionReport {
        ablation,
        k1,
        k2: dual.fine.first().map_or(0, |f| f.model.k),
        clusters,
        patch_terms,
    })
}

/// `k1` distinct pool patches drawn uniformly without replacement.
pub fn baseline_rnd_crop(pool: &[PatchRef], k1: usize, seed: u64) -> Result<Vec<PatchRef>> {
    if pool.len() < k1 {
        return Err(Error::TooFewItems {
            needed: k1,
            got: pool.len(),
        });
    }
    let mut rng = seed::rng(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), k1)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// `k1` distinct images drawn uniformly, each contributing its centered
/// `s × s` patch.
pub fn baseline_rnd_cen_crop_dims(
    images: &[(&str, u32, u32)],
    k1: usize,
    s: u32,
    seed: u64,
) -> Result<Vec<PatchRef>> {
    let admissible: Vec<_> = images
        .iter()
        .filter(|(_, w, h)| *w >= s && *h >= s)
        .collect();
    if admissible.len() < k1 {
        return Err(Error::TooFewItems {
            needed: k1,
            got: admissible.len(),
        });
    }
    let mut rng = seed::rng(seed);
    Ok(rand::seq::index::sample(&mut rng, admissible.len(), k1)
        .into_iter()
        .map(|i| {
            let (id, w, h) = *admissible[i];
            PatchRef::new(id, (w - s) / 2, (h - s) / 2, s)
        })
        .collect())
}

pub fn baseline_rnd_cen_crop(
    images: &[ImageRecord],
    k1: usize,
    s: u32,
    seed: u64,
) -> Result<Vec<PatchRef>> {
    let dims: Vec<_> = images
        .iter()
        .map(|i| (i.id.as_str(), i.width(), i.height()))
        .collect();
    baseline_rnd_cen_crop_dims(&dims, k1, s, seed)
}
