//! Writes a batch of synthetic masks for one annotated mask.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{load_mask, save_mask};
use crate::masksynth::{build_nucleus_bank, synthesize_batch, BankTransforms, SynthMaskConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntry {
    pub file: String,
    pub seed: u64,
    pub requested: usize,
    pub placed: usize,
    pub instances: usize,
    pub crop_origin: [u32; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortfall: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub source: String,
    pub source_instances: usize,
    pub bank_size: usize,
    pub config: SynthMaskConfig,
    pub transforms: BankTransforms,
    pub masks: Vec<SynthEntry>,
}

/// Build a bank from `mask_path` and write `count` masks named
/// `mask_###.png` (plus sidecars and `manifest.json`) into `out_dir`.
pub fn synth_masks_to_dir(
    mask_path: &Path,
    out_dir: &Path,
    count: usize,
    cfg: &SynthMaskConfig,
    transforms: &BankTransforms,
) -> Result<SynthManifest> {
    cfg.validate()?;
    let source = load_mask(mask_path)?;
    let bank = build_nucleus_bank(&source.mask, transforms)?;
    let outcomes = synthesize_batch(&bank, cfg, count)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let source_name = mask_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut masks = Vec::with_capacity(count);
    for (i, out) in outcomes.iter().enumerate() {
        let file = format!("mask_{i:03}.png");
        save_mask(
            &out.mask,
            &out_dir.join(&file),
            Some(&source_name),
            Some([out.crop_origin.0, out.crop_origin.1]),
        )?;
        if let Some(w) = &out.shortfall {
            log::warn!("{file}: {w}");
        }
        masks.push(SynthEntry {
            file,
            seed: seed::indexed(cfg.seed, i as u64),
            requested: out.requested,
            placed: out.placements.len(),
            instances: out.mask.instance_count(),
            crop_origin: [out.crop_origin.0, out.crop_origin.1],
            shortfall: out.shortfall.clone(),
        });
    }
    let manifest = SynthManifest {
        source: source_name,
        source_instances: source.mask.instance_count(),
        bank_size: bank.len(),
        config: *cfg,
        transforms: *transforms,
        masks,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
