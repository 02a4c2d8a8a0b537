//! Corpus manifest (`[{"id": .., "path": ..}]`) and image decoding.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::ImageRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Read a manifest; relative paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut seen = HashSet::new();
    for e in &mut entries {
        if !seen.insert(e.id.clone()) {
            return Err(Error::DuplicateImageId(e.id.clone()));
        }
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Decode one image to 8-bit RGB. Grayscale inputs are replicated across channels.
pub fn load_image(id: &str, path: &Path) -> Result<ImageRecord> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    Ok(ImageRecord::new(id, img.to_rgb8()))
}

pub fn load_corpus(entries: &[ManifestEntry]) -> Result<Vec<ImageRecord>> {
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    entries.iter().map(|e| load_image(&e.id, &e.path)).collect()
}
