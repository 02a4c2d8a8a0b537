//! Directory-level evaluation and the per-image score CSV.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::load_mask;
use crate::metrics::{aji_with, dice_masks, MatchCriterion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image: String,
    pub aji: f64,
    pub dice: f64,
}

/// Row name carrying the column means in a score CSV.
pub const MEAN_ROW: &str = "mean";

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

/// Score every `*.png` in `gt_dir` against the same file name in `pred_dir`.
pub fn evaluate_dirs(
    gt_dir: &Path,
    pred_dir: &Path,
    criterion: MatchCriterion,
) -> Result<Vec<ImageScore>> {
    let gts = png_files(gt_dir)?;
    gts.par_iter()
        .map(|gt_path| {
            let name = gt_path.file_name().unwrap();
            let pred_path = pred_dir.join(name);
            if !pred_path.exists() {
                return Err(Error::Invalid(format!(
                    "no prediction {} for ground truth {}",
                    pred_path.display(),
                    gt_path.display()
                )));
            }
            let gt = load_mask(gt_path)?.mask;
            let pred = load_mask(&pred_path)?.mask;
            Ok(ImageScore {
                image: gt_path.file_stem().unwrap().to_string_lossy().into_owned(),
                aji: aji_with(&gt, &pred, criterion)?,
                dice: dice_masks(&gt, &pred)?,
            })
        })
        .collect()
}

pub fn mean_scores(scores: &[ImageScore]) -> Option<(f64, f64)> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some((
        scores.iter().map(|s| s.aji).sum::<f64>() / n,
        scores.iter().map(|s| s.dice).sum::<f64>() / n,
    ))
}

/// `image,aji,dice` rows followed by a `mean` row.
pub fn scores_csv(scores: &[ImageScore]) -> String {
    let mut out = String::from("image,aji,dice\n");
    for s in scores {
        out.push_str(&format!("{},{},{}\n", s.image, s.aji, s.dice));
    }
    if let Some((a, d)) = mean_scores(scores) {
        out.push_str(&format!("{MEAN_ROW},{a},{d}\n"));
    }
    out
}

/// Read `(image, value)` pairs of one column from a score CSV, skipping the mean row.
pub fn read_score_column(path: &Path, column: &str) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Invalid(format!("{}: empty file", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = header
        .iter()
        .position(|h| *h == column)
        .ok_or_else(|| Error::Invalid(format!("{}: no column `{column}`", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.first() == Some(&MEAN_ROW) {
            continue;
        }
        let value = cells
            .get(col)
            .and_then(|c| c.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "{}: bad value on data row {}",
                    path.display(),
                    i + 1
                ))
            })?;
        out.push((cells[0].to_string(), value));
    }
    Ok(out)
}

/// Pair two score columns by image name (order of `a`).
pub fn pair_by_image(a: &[(String, f64)], b: &[(String, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let lookup: std::collections::HashMap<&str, f64> =
        b.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (name, v) in a {
        let w = lookup
            .get(name.as_str())
            .ok_or_else(|| Error::Invalid(format!("image `{name}` missing from second table")))?;
        xs.push(*v);
        ys.push(*w);
    }
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "tables list {} and {} images",
            a.len(),
            b.len()
        )));
    }
    Ok((xs, ys))
}
