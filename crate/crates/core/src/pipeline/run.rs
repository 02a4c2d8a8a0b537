//! End-to-end run: crop → features → cluster → select → synth → eval → report.
//!
//! Every stage reads its inputs from the run directory and writes its outputs
//! there. `run_manifest.json` records, per stage, a hash of the stage inputs
//! and a SHA-256 of each output; a rerun skips any stage whose input hash and
//! outputs are unchanged. The manifest carries no timestamps so identical
//! configs give identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{dual_level_clustering, DualClustering, DualConfig};
use crate::corpus::{load_corpus, read_manifest};
use crate::error::{Error, Result};
use crate::features::{builtin_store, FeatureStore};
use crate::masksynth::{BankTransforms, SynthMaskConfig};
use crate::patch::{crop1, patch_block, CropWarning, PatchRef};
use crate::seed;
use crate::selection::cps_select;

use super::config::{FeatureMode, RunConfig};
use super::eval::{evaluate_dirs, scores_csv};
use super::report::report;
use super::synth::synth_masks_to_dir;

pub mod layout {
    pub const PATCHES: &str = "patches.json";
    pub const FEATURES: &str = "features.fpb";
    pub const CLUSTERING: &str = "clustering.json";
    pub const SELECTION: &str = "selection.json";
    pub const TERMS: &str = "terms.csv";
    pub const SELECTED_DIR: &str = "selected";
    pub const SYNTH_DIR: &str = "synth";
    pub const METRICS: &str = "metrics.csv";
    pub const REPORT_DIR: &str = "report";
    pub const MANIFEST: &str = "run_manifest.json";
}

/// Files each selection stage must leave behind for a run to be reportable.
pub const STAGE_FILES: &[(&str, &[&str])] = &[
    ("crop", &[layout::PATCHES]),
    ("features", &[layout::FEATURES]),
    ("cluster", &[layout::CLUSTERING]),
    ("select", &[layout::SELECTION, layout::TERMS]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    Failed,
    NotConfigured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub input_hash: String,
    /// Relative output path → SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFile {
    pub s: u32,
    pub t: u32,
    pub patches: Vec<PatchRef>,
    pub warnings: Vec<CropWarning>,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub selected: Vec<PatchRef>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn hash_value<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Hash of every regular file under `dir`, by sorted relative path.
fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, hash_file(&p)?);
            }
        }
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Runner<'a> {
    out: &'a Path,
    previous: BTreeMap<String, StageRecord>,
    records: Vec<StageRecord>,
    summary: RunSummary,
}

impl Runner<'_> {
    fn outputs_of(&self, stage: &str) -> BTreeMap<String, String> {
        self.records
            .iter()
            .find(|r| r.name == stage)
            .map(|r| r.outputs.clone())
            .unwrap_or_default()
    }

    fn reusable(&self, name: &str, input_hash: &str) -> Option<StageRecord> {
        let prev = self.previous.get(name)?;
        if prev.status != StageStatus::Done || prev.input_hash != input_hash {
            return None;
        }
        for (rel, h) in &prev.outputs {
            match hash_file(&self.out.join(rel)) {
                Ok(cur) if &cur == h => {}
                _ => return None,
            }
        }
        Some(prev.clone())
    }

    /// Run `body` unless a previous run already produced the same outputs
    /// from the same inputs. `body` returns output paths relative to the run dir.
    fn stage(
        &mut self,
        name: &str,
        input_hash: String,
        body: impl FnOnce(&Path) -> Result<Vec<PathBuf>>,
    ) -> Result<()> {
        if let Some(rec) = self.reusable(name, &input_hash) {
            log::info!("stage {name}: inputs unchanged, skipping");
            self.summary.skipped.push(name.to_string());
            self.records.push(rec);
            return Ok(());
        }
        log::info!("stage {name}: running");
        match body(self.out).and_then(|files| {
            files
                .into_iter()
                .map(|rel| {
                    let h = hash_file(&self.out.join(&rel))?;
                    Ok((rel.to_string_lossy().replace('\\', "/"), h))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        }) {
            Ok(outputs) => {
                self.summary.executed.push(name.to_string());
                self.records.push(StageRecord {
                    name: name.to_string(),
                    status: StageStatus::Done,
                    input_hash,
                    outputs,
                    error: None,
                });
                Ok(())
            }
            Err(e) => {
                self.records.push(StageRecord {
                    name: name.to_string(),
                    status: StageStatus::Failed,
                    input_hash,
                    outputs: BTreeMap::new(),
                    error: Some(e.to_string()),
                });
                Err(Error::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    fn not_configured(&mut self, name: &str) {
        self.records.push(StageRecord {
            name: name.to_string(),
            status: StageStatus::NotConfigured,
            input_hash: String::new(),
            outputs: BTreeMap::new(),
            error: None,
        });
    }
}

pub fn stage_seeds(root: u64) -> BTreeMap<String, u64> {
    ["cluster", "bank", "synth"]
        .into_iter()
        .map(|n| (n.to_string(), seed::named(root, n)))
        .collect()
}

/// Execute every configured stage and write `run_manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join(layout::MANIFEST);
    let previous = if manifest_path.exists() {
        read_json::<RunManifest>(&manifest_path)
            .map(|m| m.stages.into_iter().map(|s| (s.name.clone(), s)).collect())
            .unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    let seeds = stage_seeds(cfg.seed);
    let mut runner = Runner {
        out,
        previous,
        records: Vec::new(),
        summary: RunSummary::default(),
    };
    let result = run_stages(cfg, &seeds, &mut runner);

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash_value(&portable_config(cfg))?,
        root_seed: cfg.seed,
        seeds,
        stages: runner.records,
    };
    write_text(
        &manifest_path,
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    result.map(|_| runner.summary)
}

/// Config with paths reduced to file names so the hash survives moving the tree.
fn portable_config(cfg: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).unwrap_or_default();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output");
        obj.remove("corpus");
    }
    v
}

fn run_stages(cfg: &RunConfig, seeds: &BTreeMap<String, u64>, r: &mut Runner<'_>) -> Result<()> {
    let entries = read_manifest(&cfg.corpus)?;
    let mut image_hashes = BTreeMap::new();
    for e in &entries {
        image_hashes.insert(e.id.clone(), hash_file(&e.path)?);
    }

    // crop
    let h = hash_value(&("crop", &image_hashes, cfg.s, cfg.t))?;
    r.stage("crop", h, |out| {
        let images = load_corpus(&entries)?;
        let pool = crop1(&images, cfg.s, cfg.t)?;
        for w in &pool.warnings {
            log::warn!("{}: {}", w.image_id, w.message);
        }
        let file = PatchFile {
            s: cfg.s,
            t: cfg.t,
            patches: pool.patches,
            warnings: pool.warnings,
        };
        write_text(&out.join(layout::PATCHES), &serde_json::to_string(&file)?)?;
        Ok(vec![layout::PATCHES.into()])
    })?;

    // features
    let import_hash = match &cfg.features {
        FeatureMode::Builtin => None,
        FeatureMode::Import { path } => Some(hash_file(path)?),
    };
    let h = hash_value(&(
        "features",
        r.outputs_of("crop"),
        &image_hashes,
        &import_hash,
        cfg.l2_normalize,
    ))?;
    r.stage("features", h, |out| {
        let pf: PatchFile = read_json(&out.join(layout::PATCHES))?;
        let store = match &cfg.features {
            FeatureMode::Builtin => builtin_store(&load_corpus(&entries)?, &pf.patches)?,
            FeatureMode::Import { path } => {
                let s = FeatureStore::read(path)?;
                s.require_patches(&pf.patches)?;
                s
            }
        };
        let store = if cfg.l2_normalize {
            store.l2_normalized()
        } else {
            store
        };
        store.write(&out.join(layout::FEATURES))?;
        Ok(vec![layout::FEATURES.into()])
    })?;

    // cluster
    let dual_cfg = DualConfig {
        k1: cfg.k1,
        k2: cfg.k2,
        seed: seeds["cluster"],
        max_iter: cfg.max_iter,
        restarts: cfg.restarts,
    };
    let h = hash_value(&(
        "cluster",
        r.outputs_of("crop"),
        r.outputs_of("features"),
        &dual_cfg,
    ))?;
    r.stage("cluster", h, |out| {
        let pf: PatchFile = read_json(&out.join(layout::PATCHES))?;
        let store = FeatureStore::read(&out.join(layout::FEATURES))?;
        let dual = dual_level_clustering(&pf.patches, &store, &dual_cfg)?;
        write_text(
            &out.join(layout::CLUSTERING),
            &serde_json::to_string(&dual)?,
        )?;
        Ok(vec![layout::CLUSTERING.into()])
    })?;

    // select
    let h = hash_value(&(
        "select",
        r.outputs_of("cluster"),
        r.outputs_of("features"),
        &image_hashes,
        cfg.ablation,
    ))?;
    r.stage("select", h, |out| {
        let dual: DualClustering = read_json(&out.join(layout::CLUSTERING))?;
        let store = FeatureStore::read(&out.join(layout::FEATURES))?;
        let report = cps_select(&dual, &store, cfg.ablation)?;
        write_text(
            &out.join(layout::SELECTION),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
        write_text(&out.join(layout::TERMS), &report.terms_csv())?;
        let mut files: Vec<PathBuf> = vec![layout::SELECTION.into(), layout::TERMS.into()];

        // pixel crops handed to annotators
        let images = load_corpus(&entries)?;
        let sel_dir = out.join(layout::SELECTED_DIR);
        if sel_dir.exists() {
            fs::remove_dir_all(&sel_dir).map_err(|e| Error::io(&sel_dir, e))?;
        }
        fs::create_dir_all(&sel_dir).map_err(|e| Error::io(&sel_dir, e))?;
        for c in &report.clusters {
            let p = &c.chosen;
            let img = images
                .iter()
                .find(|i| i.id == p.image_id)
                .expect("patch from corpus");
            let rel = Path::new(layout::SELECTED_DIR).join(format!(
                "cluster{:02}_{}_{}_{}.png",
                c.cluster, p.image_id, p.x, p.y
            ));
            let path = out.join(&rel);
            patch_block(&img.pixels, p)?
                .to_image()
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| Error::image(&path, e))?;
            files.push(rel);
        }
        for p in report.selected() {
            log::info!("selected {p}");
        }
        Ok(files)
    })?;
    let sel: crate::selection::SelectionReport = read_json(&r.out.join(layout::SELECTION))?;
    r.summary.selected = sel.selected();

    // synth
    match &cfg.synth {
        None => r.not_configured("synth"),
        Some(sc) => {
            let mut mask_hashes = Vec::new();
            for m in &sc.masks {
                mask_hashes.push(hash_file(m)?);
            }
            let h = hash_value(&("synth", sc, &mask_hashes, seeds["synth"], seeds["bank"]))?;
            r.stage("synth", h, |out| {
                let root = out.join(layout::SYNTH_DIR);
                if root.exists() {
                    fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
                }
                let mut files = Vec::new();
                for (i, m) in sc.masks.iter().enumerate() {
                    let stem = m
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let dir = root.join(format!("{i:02}_{stem}"));
                    let cfg_i = SynthMaskConfig {
                        q: sc.q,
                        canvas_width: sc.canvas,
                        canvas_height: sc.canvas,
                        width: sc.size,
                        height: sc.size,
                        seed: seed::indexed(seeds["synth"], i as u64),
                        ..SynthMaskConfig::default()
                    };
                    let transforms = BankTransforms {
                        seed: seed::indexed(seeds["bank"], i as u64),
                        ..sc.transforms.unwrap_or_default()
                    };
                    synth_masks_to_dir(m, &dir, sc.count, &cfg_i, &transforms)?;
                    for (rel, _) in hash_dir(&dir)? {
                        files.push(dir.strip_prefix(out).unwrap().join(rel));
                    }
                }
                files.sort();
                Ok(files)
            })?;
        }
    }

    // eval
    match &cfg.eval {
        None => r.not_configured("eval"),
        Some(ec) => {
            let h = hash_value(&(
                "eval",
                ec.criterion,
                hash_dir(&ec.gt_dir)?,
                hash_dir(&ec.pred_dir)?,
            ))?;
            r.stage("eval", h, |out| {
                let scores = evaluate_dirs(&ec.gt_dir, &ec.pred_dir, ec.criterion)?;
                write_text(&out.join(layout::METRICS), &scores_csv(&scores))?;
                Ok(vec![layout::METRICS.into()])
            })?;
        }
    }

    let h = hash_value(&("report", r.outputs_of("select"), r.outputs_of("eval")))?;
    r.stage("report", h, |out| {
        if cfg.eval.is_none() {
            let stale = out.join(layout::METRICS);
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
            }
        }
        let rep = out.join(layout::REPORT_DIR);
        if rep.exists() {
            fs::remove_dir_all(&rep).map_err(|e| Error::io(&rep, e))?;
        }
        report(out)
    })?;
    Ok(())
}
