//! Triangle meshes in a canonical asset frame (+x forward, +z up, meters),
//! OBJ ingestion and fitting into target boxes.

mod catalog;
mod fit;
mod obj;

pub use catalog::{load_asset, load_catalog, AssetEntry};
pub use fit::{fit_mesh_to_box, AssetTransform, FitMode};
pub use obj::parse_obj;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Triangles with area at or below this are dropped at load time.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex RGB in `[0, 1]`; `None` means every face uses `base_color`.
    pub vertex_colors: Option<Vec<[f64; 3]>>,
    pub base_color: [f64; 3],
    /// Number of zero-area triangles removed by [`Mesh::new`].
    pub dropped_degenerate: usize,
}

impl Mesh {
    /// Validates indices, drops degenerate triangles and checks the mesh
    /// is non-empty.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        vertex_colors: Option<Vec<[f64; 3]>>,
        base_color: [f64; 3],
    ) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::EmptyMesh);
        }
        if let Some(colors) = &vertex_colors {
            if colors.len() != vertices.len() {
                return Err(Error::Shape(format!(
                    "{} vertex colors for {} vertices",
                    colors.len(),
                    vertices.len()
                )));
            }
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::Domain(format!(
                "triangle {t:?} references a vertex outside 0..{n}"
            )));
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices, t) > DEGENERATE_AREA)
            .collect();
        let dropped = before - triangles.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Self {
            vertices,
            triangles,
            vertex_colors,
            base_color,
            dropped_degenerate: dropped,
        })
    }

    /// Axis-aligned box `[0, 1]^3` split into 12 triangles.
    pub fn unit_cube() -> Self {
        Self::cuboid([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    }

    pub fn cuboid(min: [f64; 3], max: [f64; 3]) -> Self {
        let mut m = Mesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            vertex_colors: None,
            base_color: [0.7, 0.7, 0.7],
            dropped_degenerate: 0,
        };
        m.push_cuboid(min, max);
        m
    }

    pub(crate) fn push_cuboid(&mut self, min: [f64; 3], max: [f64; 3]) {
        let base = self.vertices.len() as u32;
        for i in 0..8u32 {
            self.vertices.push(Point3::new(
                if i & 1 == 0 { min[0] } else { max[0] },
                if i & 2 == 0 { min[1] } else { max[1] },
                if i & 4 == 0 { min[2] } else { max[2] },
            ));
        }
        const FACES: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // z-
            [4, 5, 7, 6], // z+
            [0, 1, 5, 4], // y-
            [2, 6, 7, 3], // y+
            [0, 4, 6, 2], // x-
            [1, 3, 7, 5], // x+
        ];
        for f in FACES {
            self.triangles.push([base + f[0], base + f[1], base + f[2]]);
            self.triangles.push([base + f[0], base + f[2], base + f[3]]);
        }
    }

    /// Low-poly car: a body slab plus a cabin, `length x width x height`
    /// centered on the origin footprint with its base at z = 0.
    pub fn toy_car(length: f64, width: f64, height: f64) -> Self {
        let (hl, hw) = (length / 2.0, width / 2.0);
        let mut m = Mesh::cuboid([-hl, -hw, 0.15 * height], [hl, hw, 0.6 * height]);
        m.push_cuboid(
            [-0.35 * length, -0.45 * width, 0.6 * height],
            [0.2 * length, 0.45 * width, height],
        );
        // Wheels reach the ground so the AABB spans the full height.
        for (x, y) in [(0.3, 0.4), (0.3, -0.4), (-0.3, 0.4), (-0.3, -0.4)] {
            let (cx, cy) = (x * length, y * width);
            m.push_cuboid(
                [cx - 0.09 * length, cy - 0.1 * width, 0.0],
                [cx + 0.09 * length, cy + 0.1 * width, 0.2 * height],
            );
        }
        m
    }

    pub fn with_base_color(mut self, color: [f64; 3]) -> Self {
        self.base_color = color;
        self
    }

    pub fn face_color(&self, tri: usize) -> [f64; 3] {
        match &self.vertex_colors {
            None => self.base_color,
            Some(c) => {
                let t = self.triangles[tri];
                let mut out = [0.0; 3];
                for &i in &t {
                    for (o, v) in out.iter_mut().zip(c[i as usize]) {
                        *o += v / 3.0;
                    }
                }
                out
            }
        }
    }
}

fn triangle_area(vertices: &[Point3<f64>], t: &[u32; 3]) -> f64 {
    let a = vertices[t[0] as usize];
    let b = vertices[t[1] as usize];
    let c = vertices[t[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Componentwise min/max over the vertices referenced by at least one
/// triangle.
pub fn mesh_aabb(mesh: &Mesh) -> Result<(Point3<f64>, Point3<f64>)> {
    let mut it = mesh
        .triangles
        .iter()
        .flat_map(|t| t.iter())
        .map(|&i| mesh.vertices[i as usize]);
    let first = it.next().ok_or(Error::EmptyMesh)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), p| {
        (
            Point3::from(lo.coords.inf(&p.coords)),
            Point3::from(hi.coords.sup(&p.coords)),
        )
    });
    Ok((lo, hi))
}

pub(crate) fn aabb_extent(lo: &Point3<f64>, hi: &Point3<f64>) -> Vector3<f64> {
    hi - lo
}
