//! Segmentation metrics (Aggregated Jaccard Index, Dice) and the paired
//! t-test used to compare per-image scores of two methods.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mask::InstanceMask;

/// How a ground-truth instance picks its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCriterion {
    /// Maximum Jaccard index (the usual AJI).
    #[default]
    Jaccard,
    /// Maximum raw intersection.
    Intersection,
}

impl FromStr for MatchCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaccard" | "iou" => Ok(Self::Jaccard),
            "intersection" => Ok(Self::Intersection),
            other => Err(Error::InvalidConfig(format!(
                "unknown match criterion `{other}`"
            ))),
        }
    }
}

impl fmt::Display for MatchCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Jaccard => "jaccard",
            Self::Intersection => "intersection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtMatch {
    pub gt: u16,
    pub pred: Option<u16>,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<GtMatch>,
    pub unmatched_predictions: Vec<u16>,
    pub numerator: u64,
    pub denominator: u64,
}

impl MatchResult {
    /// AJI value; `1.0` when both maps are empty.
    pub fn aji(&self) -> f64 {
        if self.denominator == 0 {
            1.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }
}

fn check_dims(gt: &InstanceMask, pred: &InstanceMask) -> Result<()> {
    if gt.width() != pred.width() || gt.height() != pred.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", gt.width(), gt.height()),
            found: format!("{}x{}", pred.width(), pred.height()),
        });
    }
    Ok(())
}

/// Greedy ground-truth-ordered matching behind AJI. Ground truths are visited
/// in ascending id; each takes the best not-yet-used intersecting
/// prediction, ties to the lowest prediction id.
pub fn aji_match(
    gt: &InstanceMask,
    pred: &InstanceMask,
    criterion: MatchCriterion,
) -> Result<MatchResult> {
    check_dims(gt, pred)?;
    let mut inter: BTreeMap<u16, BTreeMap<u16, u64>> = BTreeMap::new();
    let mut gt_area: BTreeMap<u16, u64> = BTreeMap::new();
    let mut pred_area: BTreeMap<u16, u64> = BTreeMap::new();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g != 0 {
            *gt_area.entry(g).or_default() += 1;
        }
        if p != 0 {
            *pred_area.entry(p).or_default() += 1;
        }
        if g != 0 && p != 0 {
            *inter.entry(g).or_default().entry(p).or_default() += 1;
        }
    }

    let mut used = std::collections::BTreeSet::new();
    let mut matches = Vec::with_capacity(gt_area.len());
    let (mut num, mut den) = (0u64, 0u64);
    for (&g, &ga) in &gt_area {
        let mut best: Option<(u16, u64, u64)> = None;
        if let Some(row) = inter.get(&g) {
            for (&p, &i) in row {
                if used.contains(&p) {
                    continue;
                }
                let u = ga + pred_area[&p] - i;
                let better = match best {
                    None => true,
                    // exact rational comparison; strict so ties keep the lower id
                    Some((_, bi, bu)) => match criterion {
                        MatchCriterion::Jaccard => {
                            (i as u128) * (bu as u128) > (bi as u128) * (u as u128)
                        }
                        MatchCriterion::Intersection => i > bi,
                    },
                };
                if better {
                    best = Some((p, i, u));
                }
            }
        }
        match best {
            Some((p, i, u)) => {
                used.insert(p);
                num += i;
                den += u;
                matches.push(GtMatch {
                    gt: g,
                    pred: Some(p),
                    intersection: i,
                    union: u,
                });
            }
            None => {
                den += ga;
                matches.push(GtMatch {
                    gt: g,
                    pred: None,
                    intersection: 0,
                    union: ga,
                });
            }
        }
    }
    let unmatched: Vec<u16> = pred_area
        .keys()
        .copied()
        .filter(|p| !used.contains(p))
        .collect();
    den += unmatched.iter().map(|p| pred_area[p]).sum::<u64>();
    Ok(MatchResult {
        matches,
        unmatched_predictions: unmatched,
        numerator: num,
        denominator: den,
    })
}

pub fn aji(gt: &InstanceMask, pred: &InstanceMask) -> Result<f64> {
    Ok(aji_match(gt, pred, MatchCriterion::Jaccard)?.aji())
}

pub fn aji_with(gt: &InstanceMask, pred: &InstanceMask, criterion: MatchCriterion) -> Result<f64> {
    Ok(aji_match(gt, pred, criterion)?.aji())
}

/// `2|X∩Y| / (|X|+|Y|)`; `1.0` when both are empty.
pub fn dice(gt: &[bool], pred: &[bool]) -> Result<f64> {
    if gt.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len().to_string(),
            found: pred.len().to_string(),
        });
    }
    let (mut both, mut a, mut b) = (0u64, 0u64, 0u64);
    for (&x, &y) in gt.iter().zip(pred) {
        a += x as u64;
        b += y as u64;
        both += (x && y) as u64;
    }
    Ok(if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    })
}

/// Dice over the foregrounds of two instance maps.
pub fn dice_masks(gt: &InstanceMask, pred: &InstanceMask) -> Result<f64> {
    check_dims(gt, pred)?;
    dice(&gt.foreground(), &pred.foreground())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    /// Differences all zero: `t = 0`, `p = 1`.
    NoDifference,
    /// Differences constant and non-zero: `t = ±∞`, `p = 0`.
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub degenerate: Option<Degenerate>,
}

/// Two-sided paired Student t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} paired values", a.len()),
            found: b.len().to_string(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewItems { needed: 2, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = nf - 1.0;

    // exact ties: every difference identical
    if d.iter().all(|&x| x == d[0]) {
        let (t, p, flag) = if d[0] == 0.0 {
            (0.0, 1.0, Degenerate::NoDifference)
        } else {
            (f64::INFINITY.copysign(d[0]), 0.0, Degenerate::ZeroVariance)
        };
        return Ok(TTest {
            n,
            mean_diff: d[0],
            sd_diff: 0.0,
            t,
            df,
            p,
            degenerate: Some(flag),
        });
    }

    let t = mean / (sd / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_diff: mean,
        sd_diff: sd,
        t,
        df,
        p,
        degenerate: None,
    })
}
