use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_obj, Mesh};
use crate::error::{Error, Result};
use crate::scene::Category;

/// One record of `assets.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub id: String,
    pub category: Category,
    /// OBJ path, relative to the catalog file's directory.
    pub path: PathBuf,
    pub base_color: [f64; 3],
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<AssetEntry>> {
    let path = path.as_ref();
    let entries: Vec<AssetEntry> = crate::scene::read_json_file(path)?;
    for (i, e) in entries.iter().enumerate() {
        if e.base_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(
                path,
                format!("[{i}].base_color"),
                "components must lie in [0, 1]",
            ));
        }
    }
    Ok(entries)
}

/// Loads the mesh for a catalog entry and applies its base color.
pub fn load_asset(entry: &AssetEntry, catalog_dir: &Path) -> Result<Mesh> {
    let path = catalog_dir.join(&entry.path);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mesh = parse_obj(&bytes).map_err(|e| Error::invalid(&path, "obj", e.to_string()))?;
    Ok(mesh.with_base_color(entry.base_color))
}
