//! Core library for inserting 3D mesh assets into multi-camera driving
//! sequences.
//!
//! The crate is organized bottom-up:
//!
//! - [`scene`]: camera calibration, 3D boxes and the on-disk scene bundle.
//! - [`mesh`]: OBJ ingestion and fitting an asset into a target box.
//! - [`raster`]: deterministic z-buffered rendering of an asset into a view.
//! - [`guidance`]: depth, normal and edge maps for the background, masked
//!   where the inserted asset lands.
//! - [`placement`]: trajectory synthesis by view/distance bin, feasibility
//!   checks and annotation export.
//! - [`compositor`]: the naive direct-projection baseline.
//! - [`rfdit`]: a toy multi-condition diffusion transformer trained with
//!   rectified flow, including an in-repo reverse-mode autodiff engine.
//! - [`pipeline`]: end-to-end wiring used by the command-line tool.

pub mod compositor;
pub mod error;
pub mod fixture;
pub mod guidance;
pub mod image_buf;
pub mod mesh;
pub mod pipeline;
pub mod placement;
pub mod raster;
pub mod rfdit;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
pub use image_buf::{Mask, Plane};
pub use mesh::{AssetTransform, FitMode, Mesh};
pub use placement::{DistanceBin, PlacementSpec, Trajectory, ViewBin};
pub use raster::{DirectionalLight, ObjectRender};
pub use scene::{BBox3D, Camera, Category, SceneBundle};
