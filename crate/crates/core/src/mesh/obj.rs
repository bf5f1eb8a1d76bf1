use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

const DEFAULT_BASE_COLOR: [f64; 3] = [0.7, 0.7, 0.7];

/// Parses the OBJ subset used for assets: `v x y z [r g b]`, `f` with any
/// number of corners (fan-triangulated as `1-2-3, 1-3-4, ...`), and `#`
/// comments. Face corners may use `i/t/n` forms and negative indices;
/// only the position index is used. Other statements are ignored.
pub fn parse_obj(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Obj {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;

    let mut vertices = Vec::new();
    let mut colors: Vec<Option<[f64; 3]>> = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let nums = tokens
                    .map(|t| {
                        t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Obj {
                            line,
                            message: format!("non-numeric coordinate `{t}`"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                match nums.len() {
                    3 | 4 => {
                        vertices.push(Point3::new(nums[0], nums[1], nums[2]));
                        colors.push(None);
                    }
                    6 | 7 => {
                        vertices.push(Point3::new(nums[0], nums[1], nums[2]));
                        colors.push(Some([nums[3], nums[4], nums[5]]));
                    }
                    n => {
                        return Err(Error::Obj {
                            line,
                            message: format!("vertex needs 3 or 6 values, got {n}"),
                        })
                    }
                }
            }
            Some("f") => {
                let idx = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        first.parse::<i64>().map_err(|_| Error::Obj {
                            line,
                            message: format!("bad face index `{t}`"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(Error::Obj {
                        line,
                        message: "face needs at least 3 vertices".into(),
                    });
                }
                faces.push((line, idx));
            }
            _ => {}
        }
    }

    let n = vertices.len() as i64;
    let mut triangles = Vec::new();
    for (line, idx) in faces {
        let resolved = idx
            .iter()
            .map(|&i| {
                // OBJ indices are 1-based; negatives count back from the
                // most recent vertex.
                let r = if i > 0 { i - 1 } else { n + i };
                if i == 0 || r < 0 || r >= n {
                    Err(Error::Obj {
                        line,
                        message: format!("face index {i} out of range (1..={n})"),
                    })
                } else {
                    Ok(r as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 1..resolved.len() - 1 {
            triangles.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }

    if vertices.is_empty() || triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }

    let vertex_colors = if colors.iter().all(Option::is_some) {
        Some(colors.into_iter().map(|c| c.unwrap()).collect())
    } else {
        if colors.iter().any(Option::is_some) {
            log::warn!("OBJ has colors on only some vertices; using base color");
        }
        None
    };
    Mesh::new(vertices, triangles, vertex_colors, DEFAULT_BASE_COLOR)
}
