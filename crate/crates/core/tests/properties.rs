use image::{Rgb, RgbImage};
use nalgebra::{Point3, Rotation3, Unit, Vector2, Vector3};
use proptest::prelude::*;

use sceneforge_core::compositor::{composite_naive, CompositeConfig};
use sceneforge_core::fixture::surround_scene;
use sceneforge_core::guidance::{mask_foreground, GuidanceSet, NULL_DEPTH, NULL_NORMAL};
use sceneforge_core::mesh::{AssetTransform, Mesh};
use sceneforge_core::placement::{sample_placement, DistanceBin, Footprint, PlacementSpec, SamplerConfig, ViewBin};
use sceneforge_core::raster::{render_asset, DirectionalLight, ObjectRender};
use sceneforge_core::rfdit::losses::{loss_diffusion, loss_mask, MASK_EPS};
use sceneforge_core::scene::{Camera, Category, Intrinsics, Rigid};
use sceneforge_core::{Mask, Plane};

fn camera(f: f64, w: u32, h: u32, pose: Rigid) -> Camera {
    let k = Intrinsics {
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
    };
    Camera::new("cam", k, w, h, vec![pose])
}

fn placed(translation: Vector3<f64>, rotation: f64) -> AssetTransform {
    AssetTransform {
        scale: Vector3::repeat(1.0),
        rotation,
        translation,
    }
}

fn arb_rigid() -> impl Strategy<Value = Rigid> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -3.1f64..3.1,
        prop::array::uniform3(-40.0f64..40.0),
    )
        .prop_filter("axis needs length", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
        .prop_map(|(axis, angle, t)| Rigid {
            rotation: Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle).into_inner(),
            translation: Vector3::from(t),
        })
}

/// Signed distance from `p` to a convex polygon, positive inside.
fn signed_distance(poly: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    // Polygon is counter-clockwise in (x, y) with y pointing down, so the
    // interior lies to the right of each edge in image terms.
    (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let e = b - a;
            (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / e.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn hull(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>| (a - o).perp(&(b - o));
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn centroid(mask: &Mask) -> Vector2<f64> {
    let (w, h) = mask.dims();
    let mut s = Vector2::zeros();
    let mut n = 0.0;
    for y in 0..h {
        for x in 0..w {
            if *mask.get(x, y) {
                s += Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                n += 1.0;
            }
        }
    }
    s / n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_round_trip(pose in arb_rigid(), p in (-30.0f64..30.0, -20.0f64..20.0, 0.2f64..120.0)) {
        let cam = camera(1200.0, 1600, 900, pose);
        let world = pose.transform_point(&Point3::new(p.0, p.1, p.2));
        let (u, v, z) = cam.project_point(0, &world).visible().unwrap();
        prop_assert!((cam.unproject(0, u, v, z) - world).norm() < 1e-9);
    }

    #[test]
    fn convex_mask_inside_projected_hull(
        size in prop::array::uniform3(0.3f64..3.0),
        pos in (-2.0f64..2.0, -1.5f64..1.5, 6.0f64..20.0),
        yaw in -3.1f64..3.1,
    ) {
        let cam = camera(120.0, 200, 160, Rigid::identity());
        let mesh = Mesh::cuboid([-size[0] / 2.0, -size[1] / 2.0, -size[2] / 2.0], [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0]);
        let tf = placed(Vector3::new(pos.0, pos.1, pos.2), yaw);
        let r = render_asset(&mesh, &tf, &cam, 0, &DirectionalLight::default());
        let projected: Vec<Vector2<f64>> = mesh
            .vertices
            .iter()
            .map(|v| {
                let (u, v, _) = cam.project_point(0, &tf.apply(v)).visible().unwrap();
                Vector2::new(u, v)
            })
            .collect();
        let poly = hull(projected);
        let (w, h) = r.mask.dims();
        for y in 0..h {
            for x in 0..w {
                if *r.mask.get(x, y) {
                    let d = signed_distance(&poly, &Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
                    prop_assert!(d >= -1.0, "({x},{y}) is {d} px outside the hull");
                }
            }
        }
    }

    #[test]
    fn mask_centroid_follows_translation(
        z in 5.0f64..15.0,
        x0 in -0.5f64..0.5,
        delta in 0.01f64..0.1,
        roll in 0.2f64..1.3,
    ) {
        // Rolled about the optical axis so no silhouette edge is pixel aligned.
        let f = 300.0;
        let cam = camera(f, 480, 480, Rigid::identity());
        let mesh = Mesh::cuboid([-0.5, -0.4, -0.3], [0.5, 0.4, 0.3]);
        let render = |x: f64| render_asset(&mesh, &placed(Vector3::new(x, 0.1, z), roll), &cam, 0, &DirectionalLight::default());
        let shift = centroid(&render(x0 + delta).mask) - centroid(&render(x0).mask);
        prop_assert!((shift.x - f * delta / z).abs() < 0.5, "shift {} vs {}", shift.x, f * delta / z);
        prop_assert!(shift.y.abs() < 0.5);
    }

    #[test]
    fn overlap_is_symmetric(
        a in (prop::array::uniform2(-4.0f64..4.0), prop::array::uniform2(0.1f64..3.0), -3.1f64..3.1),
        b in (prop::array::uniform2(-4.0f64..4.0), prop::array::uniform2(0.1f64..3.0), -3.1f64..3.1),
        margin in 0.0f64..1.0,
    ) {
        let fp = |(c, h, yaw): ([f64; 2], [f64; 2], f64)| Footprint {
            center: Vector2::from(c),
            half: Vector2::from(h),
            yaw,
        };
        let (a, b) = (fp(a).inflated(margin), fp(b));
        prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
    }

    #[test]
    fn loss_mask_with_unit_mask_is_mse(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300),
    ) {
        let (pred, target): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let n = pred.len() as f64;
        let masked = loss_mask(&pred, &target, &vec![1.0; pred.len()]).unwrap();
        let mse = loss_diffusion(&pred, &target).unwrap();
        prop_assert!((masked * (n + MASK_EPS) / n - mse).abs() < 1e-12);
    }
}

fn quad_render(w: u32, h: u32, x0: f64, y0: f64, side: f64, z: f64) -> ObjectRender {
    let cam = camera(60.0, w, h, Rigid::identity());
    let mesh = Mesh::new(
        vec![
            Point3::new(x0, y0, z),
            Point3::new(x0 + side, y0, z),
            Point3::new(x0 + side, y0 + side * 0.7, z + 0.5),
            Point3::new(x0, y0 + side * 0.7, z + 0.5),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        None,
        [0.95, 0.9, 0.2],
    )
    .unwrap();
    render_asset(&mesh, &placed(Vector3::zeros(), 0.0), &cam, 0, &DirectionalLight::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn compositor_leaves_outside_untouched_and_bias_is_monotone(
        quad in (-2.0f64..0.5, -1.5f64..0.5, 0.5f64..2.5, 4.0f64..9.0),
        depth_seed in any::<u64>(),
        feather in 0usize..4,
        biases in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let (w, h) = (64u32, 48u32);
        let render = quad_render(w, h, quad.0, quad.1, quad.2, quad.3);
        let frame = RgbImage::from_pixel(w, h, Rgb([0, 0, 0]));
        let scene_depth = Plane::from_fn(w as usize, h as usize, |x, y| {
            let v = (x as u64 * 31 + y as u64 * 17 + depth_seed) % 97;
            if v < 10 { 0.0 } else { 3.0 + v as f64 * 0.08 }
        });
        let (lo, hi) = if biases.0 <= biases.1 { biases } else { (biases.1, biases.0) };
        let run = |bias: f64| {
            composite_naive(&frame, &render, Some(&scene_depth), &CompositeConfig { depth_bias: bias, feather }).unwrap()
        };
        let (a, b) = (run(lo), run(hi));
        for (x, y, p) in a.enumerate_pixels() {
            if !*render.mask.get(x as usize, y as usize) {
                prop_assert_eq!(p.0, [0, 0, 0]);
                prop_assert_eq!(b.get_pixel(x, y).0, [0, 0, 0]);
            }
            if p.0 != [0, 0, 0] {
                prop_assert!(b.get_pixel(x, y).0 != [0, 0, 0], "({x},{y}) un-drawn by a larger bias");
            }
        }
    }

    #[test]
    fn masking_nulls_exactly_the_composited_region(
        quad in (-2.0f64..0.5, -1.5f64..0.5, 0.5f64..2.5, 4.0f64..9.0),
    ) {
        let (w, h) = (64u32, 48u32);
        let render = quad_render(w, h, quad.0, quad.1, quad.2, quad.3);
        let frame = RgbImage::from_pixel(w, h, Rgb([0, 0, 0]));
        let out = composite_naive(&frame, &render, None, &CompositeConfig::default()).unwrap();
        let g = GuidanceSet {
            depth: Plane::filled(w as usize, h as usize, 200),
            normal: RgbImage::from_pixel(w, h, Rgb([128, 60, 20])),
            edge: Mask::filled(w as usize, h as usize, true),
            object: render.color.clone(),
            mask: render.mask.clone(),
        };
        let m = mask_foreground(&g, 0);
        for (x, y, p) in out.enumerate_pixels() {
            let (xu, yu) = (x as usize, y as usize);
            let composited = p.0 != [0, 0, 0];
            prop_assert_eq!(*m.depth.get(xu, yu) == NULL_DEPTH, composited);
            prop_assert_eq!(!*m.edge.get(xu, yu), composited);
            prop_assert_eq!(m.normal.get_pixel(x, y).0 == NULL_NORMAL, composited);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn placement_ignores_thread_count(seed in any::<u64>(), view in 0usize..4, distance in 0usize..3) {
        let scene = surround_scene(192, 96, 4);
        let spec = PlacementSpec {
            category: Category::Pedestrian,
            view_bin: ViewBin::ALL[view],
            distance_bin: DistanceBin::ALL[distance],
            speed: 1.2,
            seed,
        };
        let cfg = SamplerConfig { min_pixels: 4.0, batch: 16, ..SamplerConfig::default() };
        let in_pool = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_placement(&scene, &spec, &cfg, "p").map_err(|e| e.to_string()))
        };
        prop_assert_eq!(in_pool(1), in_pool(4));
    }
}
