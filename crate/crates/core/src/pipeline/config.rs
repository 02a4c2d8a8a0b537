use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masksynth::BankTransforms;
use crate::metrics::MatchCriterion;
use crate::patch::validate_side_and_stride;
use crate::selection::Ablation;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    Builtin,
    Import {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStageConfig {
    /// Annotated masks (canonical PNG) to multiply.
    pub masks: Vec<PathBuf>,
    #[serde(default = "default_synth_count")]
    pub count: usize,
    #[serde(default = "default_canvas")]
    pub canvas: u32,
    #[serde(default = "default_synth_size")]
    pub size: u32,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub transforms: Option<BankTransforms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalStageConfig {
    pub gt_dir: PathBuf,
    pub pred_dir: PathBuf,
    #[serde(default, rename = "match")]
    pub criterion: MatchCriterion,
}

/// One JSON document describing a full run. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_s")]
    pub s: u32,
    #[serde(default = "default_t")]
    pub t: u32,
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureMode,
    #[serde(default)]
    pub l2_normalize: bool,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub synth: Option<SynthStageConfig>,
    #[serde(default)]
    pub eval: Option<EvalStageConfig>,
    pub output: PathBuf,
}

fn default_s() -> u32 {
    256
}
fn default_t() -> u32 {
    15
}
fn default_k2() -> usize {
    4
}
fn default_max_iter() -> usize {
    crate::clustering::DEFAULT_MAX_ITER
}
fn default_restarts() -> usize {
    1
}
fn default_synth_count() -> usize {
    50
}
fn default_canvas() -> u32 {
    320
}
fn default_synth_size() -> u32 {
    256
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or_else(|| Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        if let FeatureMode::Import { path } = &mut self.features {
            fix(path);
        }
        if let Some(s) = &mut self.synth {
            s.masks.iter_mut().for_each(fix);
        }
        if let Some(e) = &mut self.eval {
            fix(&mut e.gt_dir);
            fix(&mut e.pred_dir);
        }
    }

    /// Parameter checks first, then input path existence; nothing is written.
    pub fn validate(&self) -> Result<()> {
        validate_side_and_stride(self.s, self.t)?;
        if self.k1 == 0 {
            return Err(Error::InvalidConfig("k1 must be at least 1".into()));
        }
        if self.k2 == 0 {
            return Err(Error::InvalidConfig("k2 must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let Some(s) = &self.synth {
            if s.canvas < s.size || s.size == 0 {
                return Err(Error::InvalidConfig(format!(
                    "synth canvas {} must be at least the output size {}",
                    s.canvas, s.size
                )));
            }
        }
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{what} {} does not exist",
                    p.display()
                )))
            }
        };
        must_exist(&self.corpus, "corpus manifest")?;
        if let FeatureMode::Import { path } = &self.features {
            must_exist(path, "feature file")?;
        }
        if let Some(s) = &self.synth {
            for m in &s.masks {
                must_exist(m, "mask")?;
            }
        }
        if let Some(e) = &self.eval {
            must_exist(&e.gt_dir, "ground-truth directory")?;
            must_exist(&e.pred_dir, "prediction directory")?;
        }
        Ok(())
    }
}
