//! Seeded K-means (k-means++ initialization, Lloyd iterations) and the
//! coarse/fine two-level clustering used for patch selection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureStore};
use crate::patch::{crop2, PatchRef, SubRegionRef};
use crate::seed;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            restarts: 1,
        }
    }
}

/// A cluster left empty by an assignment step, refilled with the point
/// farthest from its own center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptyClusterEvent {
    pub iteration: usize,
    pub cluster: usize,
    pub moved_point: usize,
    pub from_cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub distortion: f64,
    pub assignment: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Distortion after every assignment step.
    pub history: Vec<f64>,
    pub empty_cluster_events: Vec<EmptyClusterEvent>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == cluster)
            .map(|(i, _)| i)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center; ties go to the lowest index.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(p, centers)).unzip()
}

/// k-means++ seeding.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut seed::SeededRng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > r {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave r at the very top of the range
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // fewer distinct points than k: take the next unused index
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations from explicit initial centers.
pub fn lloyd_from(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize) -> ClusterModel {
    let k = init.len();
    let dim = init.first().map_or(0, Vec::len);
    let mut centers = init;
    let (mut assignment, mut dists) = assign(points, &centers);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut events = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;

        // refill empty clusters before averaging
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] != 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            let Some(i) = donor else { break };
            events.push(EmptyClusterEvent {
                iteration: iterations,
                cluster: empty,
                moved_point: i,
                from_cluster: assignment[i],
            });
            sizes[assignment[i]] -= 1;
            sizes[empty] = 1;
            assignment[i] = empty;
            dists[i] = 0.0;
        }

        let mut sums = vec![vec![0f64; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (j, sum) in sums.into_iter().enumerate() {
            if sizes[j] > 0 {
                centers[j] = sum.into_iter().map(|s| s / sizes[j] as f64).collect();
            }
        }

        let (next, next_d) = assign(points, &centers);
        history.push(next_d.iter().sum());
        let unchanged = next == assignment;
        assignment = next;
        dists = next_d;
        if unchanged {
            converged = true;
            break;
        }
    }

    ClusterModel {
        k,
        seed: 0,
        iterations,
        converged,
        distortion: *history.last().unwrap(),
        assignment,
        centers,
        history,
        empty_cluster_events: events,
    }
}

/// K-means over raw points.
pub fn kmeans_points(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<ClusterModel> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if points.len() < cfg.k {
        return Err(Error::TooFewItems {
            needed: cfg.k,
            got: points.len(),
        });
    }
    let mut best: Option<ClusterModel> = None;
    for restart in 0..cfg.restarts.max(1) {
        let run_seed = if restart == 0 {
            cfg.seed
        } else {
            seed::indexed(cfg.seed, restart as u64)
        };
        let mut rng = seed::rng(run_seed);
        let init = kmeans_plus_plus(points, cfg.k, &mut rng);
        let mut model = lloyd_from(points, init, cfg.max_iter);
        model.seed = cfg.seed;
        if best
            .as_ref()
            .is_none_or(|b| model.distortion < b.distortion)
        {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

pub fn gather(store: &FeatureStore, keys: &[FeatureKey]) -> Result<Vec<Vec<f64>>> {
    keys.iter()
        .map(|k| Ok(store.get(k)?.iter().map(|&v| v as f64).collect()))
        .collect()
}

/// K-means over the rows of `store` named by `keys`.
pub fn kmeans(
    store: &FeatureStore,
    keys: &[FeatureKey],
    cfg: &KMeansConfig,
) -> Result<ClusterModel> {
    kmeans_points(&gather(store, keys)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineClustering {
    /// Indices into the coarse patch list, ascending.
    pub members: Vec<usize>,
    /// Sub-regions of `members`, four per patch in TL, TR, BL, BR order.
    pub regions: Vec<SubRegionRef>,
    pub model: ClusterModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualClustering {
    pub patches: Vec<PatchRef>,
    pub coarse: ClusterModel,
    pub fine: Vec<FineClustering>,
}

impl DualClustering {
    pub fn k1(&self) -> usize {
        self.coarse.k
    }

    pub fn fine_cluster_count(&self) -> usize {
        self.fine.iter().map(|f| f.model.k).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualConfig {
    pub k1: usize,
    pub k2: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl DualConfig {
    pub fn new(k1: usize, k2: usize, seed: u64) -> Self {
        Self {
            k1,
            k2,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            restarts: 1,
        }
    }
}

/// Coarse K-means over whole patches, then an independent K-means over the
/// quadrant features of each coarse cluster. Fine runs use seed `seed ⊕ hash(k)`.
pub fn dual_level_clustering(
    patches: &[PatchRef],
    store: &FeatureStore,
    cfg: &DualConfig,
) -> Result<DualClustering> {
    if cfg.k2 == 0 {
        return Err(Error::InvalidConfig("K2 must be at least 1".into()));
    }
    let keys: Vec<FeatureKey> = patches.iter().cloned().map(FeatureKey::Patch).collect();
    let coarse = kmeans(
        store,
        &keys,
        &KMeansConfig {
            k: cfg.k1,
            seed: cfg.seed,
            max_iter: cfg.max_iter,
            restarts: cfg.restarts,
        },
    )?;

    let fine: Vec<Result<FineClustering>> = (0..cfg.k1)
        .into_par_iter()
        .map(|k| {
            let members: Vec<usize> = coarse.members(k).collect();
            let regions: Vec<SubRegionRef> =
                members.iter().flat_map(|&i| crop2(&patches[i])).collect();
            if regions.len() < cfg.k2 {
                return Err(Error::ClusterTooSmall {
                    cluster: k,
                    regions: regions.len(),
                    k2: cfg.k2,
                });
            }
            let region_keys: Vec<FeatureKey> =
                regions.iter().cloned().map(FeatureKey::Region).collect();
            let model = kmeans(
                store,
                &region_keys,
                &KMeansConfig {
                    k: cfg.k2,
                    seed: seed::indexed(cfg.seed, k as u64),
                    max_iter: cfg.max_iter,
                    restarts: cfg.restarts,
                },
            )?;
            Ok(FineClustering {
                members,
                regions,
                model,
            })
        })
        .collect();

    Ok(DualClustering {
        patches: patches.to_vec(),
        coarse,
        fine: fine.into_iter().collect::<Result<_>>()?,
    })
}
