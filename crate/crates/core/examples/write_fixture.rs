//! Writes the procedural two-camera scene bundle to the given directory.

use sceneforge_core::fixture::{two_camera_scene, FixtureConfig};
use sceneforge_core::scene::save_scene_bundle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).ok_or("usage: write_fixture <dir>")?;
    save_scene_bundle(&two_camera_scene(&FixtureConfig::default())?, &dir)?;
    println!("wrote {dir}");
    Ok(())
}
