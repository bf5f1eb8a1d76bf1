//! Toy fixture, training objective, finite-difference check and the
//! momentum-SGD training loop.

use std::io::Write;
use std::path::Path;
use std::rc::Rc;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::{mask_to_signed, patchify, rgb_to_signed, ImageF, Latent, IMAGE_CHANNELS, PATCH};
use super::flow::{rf_pair, rf_sample};
use super::losses::{
    loss_diffusion_graph, loss_mask_graph, loss_perceptual_graph, FeatureNet, LossParts, LossWeights,
};
use super::model::{Bound, ConditionSet, Conditioned, Plan, ToyConfig, ToyModel};
use super::tape::{Graph, Mat, Var};
use crate::compositor::{composite_naive, CompositeConfig};
use crate::error::{Error, Result};
use crate::fixture::{two_camera_scene, FixtureConfig};
use crate::guidance::{build_guidance, scene_depth_or_fallback, GuidanceParams, GuidanceSet};
use crate::image_buf::{Mask, Plane};
use crate::mesh::{FitMode, Mesh};
use crate::pipeline::render_trajectory;
use crate::placement::{default_dims, sample_placement, DistanceBin, PlacementSpec, SamplerConfig, Trajectory, ViewBin};
use crate::raster::{DirectionalLight, RenderOptions};
use crate::scene::{Category, SceneBundle};
use crate::seed::substream_seed;

/// The edited toy scene: guidance per view plus naive-composite targets.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub scene: SceneBundle,
    pub trajectory: Trajectory,
    pub guidance: Vec<Vec<GuidanceSet>>,
    pub targets: Vec<Vec<RgbImage>>,
}

fn gray_to_rgb(p: &Plane<u8>) -> RgbImage {
    RgbImage::from_fn(p.width() as u32, p.height() as u32, |x, y| {
        let v = *p.get(x as usize, y as usize);
        image::Rgb([v, v, v])
    })
}

pub fn toy_scene(config: &ToyConfig) -> Result<ToyScene> {
    let fixture = FixtureConfig {
        width: config.image_width as u32,
        height: config.image_height as u32,
        num_frames: config.frames,
        ..FixtureConfig::toy()
    };
    let scene = two_camera_scene(&fixture)?;
    let spec = PlacementSpec {
        category: Category::Car,
        view_bin: ViewBin::Front,
        distance_bin: DistanceBin::Close,
        speed: fixture.ego_speed,
        seed: 3,
    };
    let sampler = SamplerConfig {
        min_pixels: 8.0,
        ..SamplerConfig::default()
    };
    let trajectory = sample_placement(&scene, &spec, &sampler, "toy_0")?;
    let [w, l, h] = default_dims(Category::Car);
    let mesh = Mesh::toy_car(l, w, h).with_base_color([0.85, 0.15, 0.1]);
    let renders = render_trajectory(
        &scene,
        &mesh,
        &trajectory,
        FitMode::PerAxis,
        &DirectionalLight::default(),
        &RenderOptions::default(),
    )?;
    let params = GuidanceParams {
        dilation: 1,
        ..GuidanceParams::default()
    };
    let guidance = build_guidance(&scene, &renders, &params)?;
    let composite = CompositeConfig::default();
    let targets = renders
        .iter()
        .enumerate()
        .map(|(c, per_frame)| {
            per_frame
                .iter()
                .enumerate()
                .map(|(f, r)| {
                    let depth = scene_depth_or_fallback(&scene, c, f, &params)?;
                    composite_naive(&scene.frames[c][f], r, Some(&depth), &composite)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyScene {
        scene,
        trajectory,
        guidance,
        targets,
    })
}

/// Everything the objective needs, precomputed once.
pub struct ToyData {
    pub conds: ConditionSet,
    /// Encoded target frames.
    pub target: Latent,
    pub target_images: Vec<Vec<ImageF>>,
    /// Codec round-trip of the targets; the reachable reconstruction.
    pub projected_targets: Vec<Vec<ImageF>>,
    pub masks: Vec<Vec<Mask>>,
    target_patches: Mat,
    mask_patches: Rc<Mat>,
    target_features: Vec<Mat>,
    rows_index: Rc<Vec<Option<usize>>>,
    net: FeatureNet,
}

impl ToyData {
    pub fn new(model: &ToyModel, scene: &ToyScene) -> Result<Self> {
        let codec = &model.codec;
        let conv = |f: &dyn Fn(&GuidanceSet) -> ImageF| -> Vec<Vec<ImageF>> {
            scene.guidance.iter().map(|v| v.iter().map(f).collect()).collect()
        };
        let maps = [
            conv(&|g| rgb_to_signed(&gray_to_rgb(&g.depth))),
            conv(&|g| rgb_to_signed(&g.normal)),
            conv(&|g| mask_to_signed(&g.edge)),
            conv(&|g| rgb_to_signed(&g.object)),
            conv(&|g| mask_to_signed(&g.mask)),
        ];
        let mut latents = Vec::with_capacity(5);
        for m in &maps {
            latents.push(codec.encode(m)?);
        }
        let conds = ConditionSet::new(latents.try_into().expect("five conditions"))?;

        let target_images: Vec<Vec<ImageF>> = scene
            .targets
            .iter()
            .map(|v| v.iter().map(rgb_to_signed).collect())
            .collect();
        let target = codec.encode(&target_images)?;
        let projected_targets = codec.decode(&target)?;
        let masks: Vec<Vec<Mask>> = scene
            .guidance
            .iter()
            .map(|v| v.iter().map(|g| g.mask.clone()).collect())
            .collect();
        let mask_images: Vec<Vec<ImageF>> = masks
            .iter()
            .map(|v| {
                v.iter()
                    .map(|m| mask_to_signed(m).mapv(|s| if s > 0.0 { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        let (mask_patches, _, _) = patchify(&mask_images)?;
        let target_patches = codec.decode_patches(target.tokens());

        let net = FeatureNet::default();
        let flat: Vec<&ImageF> = projected_targets.iter().flatten().collect();
        let target_features = net.normalized_features(&flat)?;
        let shape = target.shape();
        let (h, w) = (shape.height * PATCH, shape.width * PATCH);
        let mut rows_index = Vec::with_capacity(flat.len() * h * w * IMAGE_CHANNELS);
        for v in 0..shape.views {
            for f in 0..shape.frames {
                for y in 0..h {
                    for x in 0..w {
                        let row = shape.token_index(v, f, y / PATCH, x / PATCH);
                        for c in 0..IMAGE_CHANNELS {
                            let col = ((y % PATCH) * PATCH + x % PATCH) * IMAGE_CHANNELS + c;
                            rows_index.push(Some(row * PATCH * PATCH * IMAGE_CHANNELS + col));
                        }
                    }
                }
            }
        }
        Ok(Self {
            conds,
            target,
            target_images,
            projected_targets,
            masks,
            target_patches,
            mask_patches: Rc::new(mask_patches),
            target_features,
            rows_index: Rc::new(rows_index),
            net,
        })
    }
}

pub struct LossVars {
    pub diffusion: Var,
    pub mask: Var,
    pub lpips: Var,
    pub total: Var,
}

impl LossVars {
    pub fn parts(&self, g: &Graph) -> LossParts {
        LossParts {
            diffusion: g.scalar(self.diffusion),
            mask: g.scalar(self.mask),
            lpips: g.scalar(self.lpips),
        }
    }
}

/// Builds the weighted three-term objective for one `(x0, t, drop)` draw.
#[allow(clippy::too_many_arguments)]
pub fn build_objective(
    g: &mut Graph,
    p: &Bound,
    model: &ToyModel,
    plan: &Plan,
    data: &ToyData,
    x0: &Latent,
    t: f64,
    drop_condition: bool,
    weights: &LossWeights,
) -> Result<LossVars> {
    let (x_t, v_target) = rf_pair(x0, &data.target, t)?;
    let v_hat = model.forward_graph(g, p, plan, &x_t, t, &data.conds, drop_condition)?;
    let vt = g.leaf(v_target.into_tokens());
    let diffusion = loss_diffusion_graph(g, v_hat, vt);

    let xt = g.leaf(x_t.into_tokens());
    let step = g.scale(v_hat, 1.0 - t);
    let x1_hat = g.add(xt, step);
    let dec = g.leaf(model.codec.decoder().clone());
    let patches = g.matmul(x1_hat, dec);
    let tp = g.leaf(data.target_patches.clone());
    let mask = loss_mask_graph(g, patches, tp, data.mask_patches.clone());

    let shape = plan.shape;
    let (h, w) = (shape.height * PATCH, shape.width * PATCH);
    let batch = shape.views * shape.frames;
    let rows = g.gather(patches, data.rows_index.clone(), (batch * h * w, IMAGE_CHANNELS));
    let lpips = loss_perceptual_graph(g, &data.net, rows, batch, h, w, &data.target_features);

    let a = g.scale(diffusion, weights.diffusion);
    let b = g.scale(mask, weights.mask);
    let c = g.scale(lpips, weights.lpips);
    let ab = g.add(a, b);
    let total = g.add(ab, c);
    Ok(LossVars {
        diffusion,
        mask,
        lpips,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ToyConfig,
    pub seed: u64,
    pub steps: usize,
    pub learning_rate: f64,
    /// 0 gives plain gradient descent.
    pub momentum: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub weights: LossWeights,
    pub cond_drop_prob: f64,
    /// Number of fixed noise latents drawn per step.
    pub noise_pool: usize,
    /// Timesteps of the fixed evaluation objective.
    pub eval_times: Vec<f64>,
    pub sample_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ToyConfig::default(),
            seed: 0,
            steps: 2000,
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            weights: LossWeights::default(),
            cond_drop_prob: 0.1,
            noise_pool: 1,
            eval_times: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            sample_steps: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        let bad = |m: &str| Err(Error::Domain(format!("train config: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.cond_drop_prob) {
            return bad("cond_drop_prob must lie in [0, 1]");
        }
        if self.noise_pool == 0 || self.sample_steps == 0 || self.eval_times.is_empty() {
            return bad("noise_pool, sample_steps and eval_times must be non-empty");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn noise_seed(&self, k: usize) -> u64 {
        substream_seed(self.seed, &format!("toy/noise/{k}"))
    }
}

pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub parameter_count: usize,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
}

pub struct Trainer<'a> {
    pub model: ToyModel,
    pub config: &'a TrainConfig,
    data: &'a ToyData,
    plan: Plan,
    velocity: Vec<Mat>,
    noise: Vec<Latent>,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(model: ToyModel, config: &'a TrainConfig, data: &'a ToyData) -> Result<Self> {
        config.validate()?;
        let shape = data.target.shape();
        let plan = model.plan(shape.views)?;
        let velocity = model.params.iter().map(|(_, m)| Mat::zeros(m.raw_dim())).collect();
        let noise = (0..config.noise_pool)
            .map(|k| Latent::seeded_normal(shape, config.noise_seed(k)))
            .collect();
        let rng = crate::seed::substream(config.seed, "toy/train");
        Ok(Self {
            model,
            config,
            data,
            plan,
            velocity,
            noise,
            rng,
        })
    }

    /// Mean total loss over the fixed evaluation timesteps, conditional
    /// branch, first pool noise.
    pub fn eval_loss(&self) -> Result<f64> {
        let mut sum = 0.0;
        for &t in &self.config.eval_times {
            let mut g = Graph::new();
            let p = Bound::bind(&mut g, &self.model.params);
            let l = build_objective(
                &mut g,
                &p,
                &self.model,
                &self.plan,
                self.data,
                &self.noise[0],
                t,
                false,
                &self.config.weights,
            )?;
            sum += g.scalar(l.total);
        }
        Ok(sum / self.config.eval_times.len() as f64)
    }

    pub fn step(&mut self, step: usize) -> Result<StepLog> {
        let t: f64 = self.rng.random();
        let drop = self.rng.random_bool(self.config.cond_drop_prob);
        let k = self.rng.random_range(0..self.noise.len());
        let mut g = Graph::new();
        let p = Bound::bind(&mut g, &self.model.params);
        let l = build_objective(
            &mut g,
            &p,
            &self.model,
            &self.plan,
            self.data,
            &self.noise[k],
            t,
            drop,
            &self.config.weights,
        )?;
        let total = g.scalar(l.total);
        if !total.is_finite() || total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss: total });
        }
        let parts = l.parts(&g);
        let mut grads = g.backward(l.total);
        let grads: Vec<Mat> = p
            .iter()
            .map(|(_, v)| grads.take(v).unwrap_or_else(|| Mat::zeros(g.value(v).raw_dim())))
            .collect();
        // Bound iterates in name order; align with store order.
        let mut by_name: std::collections::BTreeMap<&str, Mat> =
            p.iter().map(|(n, _)| n).zip(grads).collect();
        let norm = by_name.values().flat_map(|m| m.iter()).map(|v| v * v).sum::<f64>().sqrt();
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        for ((name, param), vel) in self.model.params.iter_mut().zip(&mut self.velocity) {
            let grad = by_name.remove(name).expect("every parameter bound");
            vel.zip_mut_with(&grad, |v, gr| *v = mu * *v + clip * gr);
            param.zip_mut_with(vel, |w, v| *w -= lr * v);
        }
        Ok(StepLog { step, parts, total })
    }
}

pub const LOSS_CSV_HEADER: &str = "step,loss_diffusion,loss_mask,loss_lpips,loss_total";

pub fn write_loss_csv(path: &Path, logs: &[StepLog]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::with_capacity(logs.len() * 80);
    out.push_str(LOSS_CSV_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            l.step, l.parts.diffusion, l.parts.mask, l.parts.lpips, l.total
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Trains from a fresh model on the toy fixture.
pub fn train_toy(config: &TrainConfig) -> Result<(ToyModel, Vec<StepLog>, TrainReport)> {
    config.validate()?;
    let model = ToyModel::new(config.model.clone(), config.seed)?;
    let scene = toy_scene(&config.model)?;
    let data = ToyData::new(&model, &scene)?;
    let mut trainer = Trainer::new(model, config, &data)?;
    let initial_eval_loss = trainer.eval_loss()?;
    let mut logs = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let log = trainer.step(step)?;
        if step % 100 == 0 {
            log::debug!("step {step}: total {:.6}", log.total);
        }
        logs.push(log);
    }
    let final_eval_loss = trainer.eval_loss()?;
    let report = TrainReport {
        steps: config.steps,
        parameter_count: trainer.model.parameter_count(),
        initial_eval_loss,
        final_eval_loss,
    };
    Ok((trainer.model, logs, report))
}

/// PSNR in dB over masked pixels, images in `[-1, 1]`.
pub fn masked_psnr(pred: &[Vec<ImageF>], target: &[Vec<ImageF>], masks: &[Vec<Mask>]) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for ((pv, tv), mv) in pred.iter().zip(target).zip(masks) {
        for ((p, t), m) in pv.iter().zip(tv).zip(mv) {
            let (h, w, c) = p.dim();
            for y in 0..h {
                for x in 0..w {
                    if !*m.get(x, y) {
                        continue;
                    }
                    for k in 0..c {
                        let d = (p[[y, x, k]] - t[[y, x, k]]) / 2.0;
                        se += d * d;
                        n += 1;
                    }
                }
            }
        }
    }
    if n == 0 {
        return f64::NAN;
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Samples with the trained model starting from the first training noise
/// and decodes.
pub fn sample_toy(model: &ToyModel, data: &ToyData, config: &TrainConfig, guidance: f64) -> Result<Vec<Vec<ImageF>>> {
    let field = Conditioned {
        model,
        conds: &data.conds,
    };
    let z = rf_sample(&field, data.target.shape(), config.sample_steps, guidance, config.noise_seed(0))?;
    model.codec.decode(&z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub groups: usize,
    pub groups_covered: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Compares analytic gradients of `total(cond) + total(drop)` with central
/// differences on `samples` random scalars, at least one per tensor.
pub fn gradient_check(
    model: &ToyModel,
    data: &ToyData,
    weights: &LossWeights,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let shape = data.target.shape();
    let plan = model.plan(shape.views)?;
    let x0 = Latent::seeded_normal(shape, substream_seed(seed, "gradcheck/noise"));
    let t = 0.37;
    let objective = |params: &super::model::ParamStore| -> Result<(Graph, Bound, Var)> {
        let mut g = Graph::new();
        let p = Bound::bind(&mut g, params);
        let m = ToyModel {
            params: params.clone(),
            ..model.clone()
        };
        let a = build_objective(&mut g, &p, &m, &plan, data, &x0, t, false, weights)?;
        let b = build_objective(&mut g, &p, &m, &plan, data, &x0, t, true, weights)?;
        let sum = g.add(a.total, b.total);
        Ok((g, p, sum))
    };
    let (g, p, out) = objective(&model.params)?;
    let grads = g.backward(out);

    let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (i, rng.random_range(0..model.params.get(n).expect("listed").len())))
        .collect();
    while picks.len() < samples {
        let i = rng.random_range(0..names.len());
        let len = model.params.get(&names[i]).expect("listed").len();
        picks.push((i, rng.random_range(0..len)));
    }

    let mut max_rel_error = 0.0f64;
    let mut worst = String::new();
    let mut covered = std::collections::BTreeSet::new();
    for &(i, j) in &picks {
        let name = &names[i];
        let analytic = grads
            .get(p.var(name))
            .map_or(0.0, |m| m.as_slice().expect("standard layout")[j]);
        let eval = |delta: f64| -> Result<f64> {
            let mut params = model.params.clone();
            params.get_mut(name).expect("listed").as_slice_mut().expect("standard layout")[j] += delta;
            let (g, _, out) = objective(&params)?;
            Ok(g.scalar(out))
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
        if analytic != 0.0 {
            covered.insert(i);
        }
        if rel > max_rel_error {
            max_rel_error = rel;
            worst = format!("{name}[{j}]: analytic {analytic:e}, numeric {fd:e}");
        }
    }
    Ok(GradCheckReport {
        checked: picks.len(),
        groups: names.len(),
        groups_covered: covered.len(),
        max_rel_error,
        worst,
    })
}

impl ToyModel {
    /// Adds uniform noise in `[-scale, scale]` to every parameter,
    /// including zero-initialized projections.
    pub fn jitter(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, m) in self.params.iter_mut() {
            m.mapv_inplace(|v| v + rng.random_range(-scale..=scale));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_train() -> TrainConfig {
        TrainConfig {
            model: ToyConfig {
                frames: 2,
                width: 16,
                heads: 2,
                mlp_hidden: 16,
                embed_dim: 4,
                fusion_hidden: 8,
                time_freqs: 4,
                ..ToyConfig::default()
            },
            steps: 3,
            ..TrainConfig::default()
        }
    }

    fn setup(cfg: &TrainConfig) -> (ToyModel, ToyData) {
        let model = ToyModel::new(cfg.model.clone(), cfg.seed).unwrap();
        let scene = toy_scene(&cfg.model).unwrap();
        let data = ToyData::new(&model, &scene).unwrap();
        (model, data)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_train()
        };
        let (model, data) = setup(&cfg);
        let before = model.params.clone();
        let mut tr = Trainer::new(model, &cfg, &data).unwrap();
        tr.step(0).unwrap();
        assert_eq!(tr.model.params, before);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_train();
        let (a, la, _) = train_toy(&cfg).unwrap();
        let (b, lb, _) = train_toy(&cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(la, lb);
        assert_ne!(a.params, ToyModel::new(cfg.model.clone(), cfg.seed).unwrap().params);
    }

    #[test]
    fn small_gradient_check() {
        let cfg = small_train();
        let (mut model, data) = setup(&cfg);
        model.jitter(3, 0.05);
        let r = gradient_check(&model, &data, &LossWeights::default(), 80, 1e-5, 2).unwrap();
        assert_eq!(r.groups_covered, r.groups);
        assert!(r.max_rel_error < 1e-4, "{}", r.worst);
    }

    #[test]
    fn loss_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/loss.csv");
        let logs = [StepLog {
            step: 0,
            parts: LossParts {
                diffusion: 1.5,
                mask: 0.25,
                lpips: 0.125,
            },
            total: 1.5375,
        }];
        write_loss_csv(&path, &logs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LOSS_CSV_HEADER));
        let fields: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields, vec![0.0, 1.5, 0.25, 0.125, 1.5375]);
    }

    #[test]
    fn psnr_of_identical_and_offset() {
        let img = ImageF::zeros((8, 8, 3));
        let off = ImageF::from_elem((8, 8, 3), 0.2);
        let m = Mask::filled(8, 8, true);
        let p = masked_psnr(&[vec![off]], &[vec![img.clone()]], &[vec![m.clone()]]);
        assert!((p - 20.0).abs() < 1e-9);
        assert!(masked_psnr(&[vec![img.clone()]], &[vec![img]], &[vec![m]]).is_infinite());
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig {
            momentum: 1.0,
            ..small_train()
        };
        assert!(train_toy(&cfg).is_err());
    }
}
