use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;

use sceneforge_core::fixture::{two_camera_scene, FixtureConfig};
use sceneforge_core::guidance::canny_edges;
use sceneforge_core::mesh::{AssetTransform, Mesh};
use sceneforge_core::raster::{render_asset_with, DirectionalLight, RenderOptions};
use sceneforge_core::rfdit::train::{toy_scene, ToyData};
use sceneforge_core::rfdit::{Latent, ToyConfig, ToyModel};
use sceneforge_core::Plane;

fn raster(c: &mut Criterion) {
    let scene = two_camera_scene(&FixtureConfig {
        width: 640,
        height: 360,
        ..FixtureConfig::default()
    })
    .unwrap();
    let mesh = Mesh::toy_car(4.6, 1.9, 1.7);
    let tf = AssetTransform {
        scale: Vector3::repeat(1.0),
        rotation: 0.3,
        translation: Vector3::new(10.0, 0.5, 0.0),
    };
    let light = DirectionalLight::default();
    for workers in [1, 4] {
        let opts = RenderOptions {
            workers,
            ..RenderOptions::default()
        };
        c.bench_function(&format!("raster/toy_car_640x360/workers={workers}"), |b| {
            b.iter(|| render_asset_with(black_box(&mesh), &tf, &scene.cameras[0], 0, &light, &opts))
        });
    }
}

fn canny(c: &mut Criterion) {
    let gray = Plane::from_fn(640, 360, |x, y| {
        let r = ((x as f64 - 320.0).hypot(y as f64 - 180.0) / 12.0).sin();
        ((r * 100.0 + 128.0) as u8).wrapping_add(((x * 7 + y * 13) % 11) as u8)
    });
    c.bench_function("canny/640x360", |b| b.iter(|| canny_edges(black_box(&gray), 50.0, 150.0)));
}

fn dit(c: &mut Criterion) {
    let model = ToyModel::new(ToyConfig::default(), 0).unwrap();
    let data = ToyData::new(&model, &toy_scene(&model.config).unwrap()).unwrap();
    let x = Latent::seeded_normal(model.config.latent_shape(2), 3);
    c.bench_function("dit/forward_toy", |b| {
        b.iter(|| model.dit_forward(black_box(&x), 0.5, &data.conds, false).unwrap())
    });
}

criterion_group!(benches, raster, canny, dit);
criterion_main!(benches);
