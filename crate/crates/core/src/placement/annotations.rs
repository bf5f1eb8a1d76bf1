use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::value::RawValue;

use super::Trajectory;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawBoxes {
    frames: Vec<Vec<Box<RawValue>>>,
}

/// Appends the trajectory's boxes to a `boxes.json` file, creating it if
/// needed. Existing records are copied through as their original text;
/// new records are written from the trajectory values without any
/// re-estimation, so they parse back to identical `f64`s.
pub fn export_annotations(traj: &Trajectory, num_frames: usize, out_path: &Path) -> Result<()> {
    let mut frames: Vec<Vec<String>> = if out_path.exists() {
        let text = std::fs::read_to_string(out_path).map_err(|e| Error::io(out_path, e))?;
        let raw: RawBoxes = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: out_path.to_path_buf(),
            source,
        })?;
        raw.frames
            .into_iter()
            .map(|f| f.into_iter().map(|r| r.get().to_string()).collect())
            .collect()
    } else {
        Vec::new()
    };
    let needed = num_frames.max(traj.boxes.len());
    if frames.len() < needed {
        frames.resize(needed, Vec::new());
    }
    for (i, b) in traj.boxes.iter().enumerate() {
        let rec = serde_json::to_string(b).map_err(|source| Error::Json {
            path: out_path.to_path_buf(),
            source,
        })?;
        frames[i].push(rec);
    }

    let mut out = String::from("{\n  \"frames\": [");
    for (fi, f) in frames.iter().enumerate() {
        out.push_str(if fi == 0 { "\n    [" } else { ",\n    [" });
        for (ri, rec) in f.iter().enumerate() {
            let _ = write!(out, "{}\n      {}", if ri == 0 { "" } else { "," }, rec);
        }
        out.push_str(if f.is_empty() { "]" } else { "\n    ]" });
    }
    out.push_str("\n  ]\n}\n");
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out_path, out).map_err(|e| Error::io(out_path, e))
}
