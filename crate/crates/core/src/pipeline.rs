//! End-to-end pipeline: placement, asset rendering, guidance, naive
//! compositing and annotation export, plus the toy train/sample drivers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositor::{composite_naive, CompositeConfig};
use crate::error::{Error, Result};
use crate::guidance::{build_view_guidance, GuidanceParams};
use crate::image_buf::save_png;
use crate::mesh::{fit_mesh_to_box, load_asset, load_catalog, AssetEntry, FitMode, Mesh};
use crate::placement::{export_annotations, sample_placement, PlacementSpec, SamplerConfig, Trajectory};
use crate::raster::{render_asset_with, DirectionalLight, ObjectRender, RenderOptions};
use crate::rfdit::checkpoint::{load_checkpoint, save_checkpoint};
use crate::rfdit::codec::signed_to_rgb;
use crate::rfdit::flow::{rf_sample, ZeroField};
use crate::rfdit::model::{Conditioned, ToyModel};
use crate::rfdit::train::{masked_psnr, toy_scene, train_toy, write_loss_csv, ToyData, TrainConfig};
use crate::scene::{load_scene_bundle, write_json_file, SceneBundle};
use crate::seed::substream_seed;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Renders the asset along a trajectory for every camera; indexed
/// `[camera][frame]`.
pub fn render_trajectory(
    scene: &SceneBundle,
    mesh: &Mesh,
    traj: &Trajectory,
    mode: FitMode,
    light: &DirectionalLight,
    opts: &RenderOptions,
) -> Result<Vec<Vec<ObjectRender>>> {
    let transforms = traj
        .boxes
        .iter()
        .map(|b| fit_mesh_to_box(mesh, b, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(scene
        .cameras
        .iter()
        .map(|cam| {
            transforms
                .iter()
                .enumerate()
                .map(|(f, tr)| render_asset_with(mesh, tr, cam, f, light, opts))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scene bundle directory.
    pub scene: PathBuf,
    /// `assets.json`; when absent, a procedural mesh stands in per category.
    #[serde(default)]
    pub assets: Option<PathBuf>,
    pub placements: Vec<PlacementSpec>,
    #[serde(default)]
    pub guidance: GuidanceParams,
    #[serde(default)]
    pub composite: CompositeConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    /// Adds wall-clock timings to the report, which makes it differ
    /// between runs.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    1
}

impl PipelineConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = crate::scene::read_json_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.scene);
        if let Some(a) = cfg.assets.as_mut() {
            resolve(a);
        }
        resolve(&mut cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::invalid("<config>", field, msg));
        if self.workers == 0 {
            return bad("workers", "must be >= 1".into());
        }
        if self.placements.is_empty() {
            return bad("placements", "at least one placement spec is required".into());
        }
        if !self.scene.is_dir() {
            return bad("scene", format!("{} is not a directory", self.scene.display()));
        }
        if let Some(a) = &self.assets {
            if !a.is_file() {
                return bad("assets", format!("{} does not exist", a.display()));
            }
        }
        let g = &self.guidance;
        if !(g.canny_low >= 0.0 && g.canny_low <= g.canny_high) {
            return bad("guidance", "need 0 <= canny_low <= canny_high".into());
        }
        self.composite.validate()?;
        for (i, spec) in self.placements.iter().enumerate() {
            spec.validate()
                .map_err(|e| Error::invalid("<config>", format!("placements[{i}]"), e.to_string()))?;
        }
        Ok(())
    }
}

/// How far `run` goes; each stage includes the ones before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Place,
    RenderAsset,
    Guidance,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    pub index: usize,
    pub id: String,
    pub spec: PlacementSpec,
    /// Seed actually used by the sampler.
    pub placement_seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
    /// Paths relative to the output root.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub stage: Stage,
    pub seed: u64,
    pub scene_id: String,
    pub specs: Vec<SpecReport>,
    pub succeeded: usize,
    pub failed: usize,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.succeeded == 0 {
            EXIT_ALL_FAILED
        } else {
            EXIT_OK
        }
    }
}

enum AssetSource {
    Catalog { entries: Vec<AssetEntry>, dir: PathBuf },
    Procedural,
}

impl AssetSource {
    fn mesh_for(&self, spec: &PlacementSpec) -> Result<(String, Mesh)> {
        match self {
            AssetSource::Catalog { entries, dir } => {
                let entry = entries.iter().find(|e| e.category == spec.category).ok_or_else(|| {
                    Error::Domain(format!("no asset of category `{}` in catalog", spec.category))
                })?;
                Ok((entry.id.clone(), load_asset(entry, dir)?))
            }
            AssetSource::Procedural => {
                let [w, l, h] = crate::placement::default_dims(spec.category);
                let mesh = if spec.category.is_vehicle() {
                    Mesh::toy_car(l, w, h)
                } else {
                    Mesh::cuboid([-l / 2.0, -w / 2.0, 0.0], [l / 2.0, w / 2.0, h])
                };
                Ok((format!("procedural_{}", spec.category), mesh.with_base_color([0.8, 0.2, 0.15])))
            }
        }
    }
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

struct SpecRun<'a> {
    scene: &'a SceneBundle,
    scene_dir: &'a Path,
    config: &'a PipelineConfig,
    stage: Stage,
    out: &'a Path,
}

impl SpecRun<'_> {
    fn run(&self, index: usize, assets: &AssetSource) -> SpecReport {
        let spec = &self.config.placements[index];
        let id = format!("insert_{index}");
        let placement_seed = substream_seed(self.config.seed, &format!("placement/{index}/{}", spec.seed));
        let mut report = SpecReport {
            index,
            id: id.clone(),
            spec: spec.clone(),
            placement_seed,
            status: "ok".into(),
            error: None,
            asset: None,
            outputs: Vec::new(),
            timing_ms: self.config.record_timing.then(BTreeMap::new),
        };
        if let Err(e) = self.run_inner(&id, placement_seed, spec, assets, &mut report) {
            report.status = match e {
                Error::NoFeasiblePlacement { .. } => "no feasible placement".into(),
                _ => "error".into(),
            };
            report.error = Some(e.to_string());
        }
        report
    }

    fn run_inner(
        &self,
        id: &str,
        placement_seed: u64,
        spec: &PlacementSpec,
        assets: &AssetSource,
        report: &mut SpecReport,
    ) -> Result<()> {
        let mut clock = Instant::now();
        let mut lap = |report: &mut SpecReport, name: &str| {
            if let Some(t) = report.timing_ms.as_mut() {
                t.insert(name.into(), clock.elapsed().as_secs_f64() * 1e3);
            }
            clock = Instant::now();
        };
        let dir = self.out.join(id);
        let seeded = PlacementSpec {
            seed: placement_seed,
            ..spec.clone()
        };
        let traj = sample_placement(self.scene, &seeded, &self.config.sampler, id)?;
        let boxes = dir.join("boxes.json");
        let source = self.scene_dir.join("boxes.json");
        if source.is_file() {
            if let Some(parent) = boxes.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::copy(&source, &boxes).map_err(|e| Error::io(&source, e))?;
        }
        export_annotations(&traj, self.scene.num_frames(), &boxes)?;
        report.outputs.push(rel(self.out, &boxes));
        lap(report, "place");
        if self.stage == crate::pipeline::Stage::Place {
            return Ok(());
        }

        let (asset_id, mesh) = assets.mesh_for(spec)?;
        report.asset = Some(asset_id);
        let transforms = traj
            .boxes
            .iter()
            .map(|b| fit_mesh_to_box(&mesh, b, FitMode::PerAxis))
            .collect::<Result<Vec<_>>>()?;
        let light = DirectionalLight::default();
        let jobs: Vec<(usize, usize)> = (0..self.scene.cameras.len())
            .flat_map(|c| (0..self.scene.num_frames()).map(move |f| (c, f)))
            .collect();
        let per_job: Vec<Result<Vec<PathBuf>>> = jobs
            .par_iter()
            .map(|&(c, f)| {
                let cam = &self.scene.cameras[c];
                let render = render_asset_with(&mesh, &transforms[f], cam, f, &light, &RenderOptions::default());
                let mut written = Vec::new();
                let name = format!("{f:04}");
                if self.stage == Stage::RenderAsset {
                    let color = dir.join("render").join(&cam.name).join(format!("{name}.png"));
                    let mask = dir.join("render").join(&cam.name).join(format!("{name}_mask.png"));
                    save_png(&render.color, &color)?;
                    save_png(&render.mask.to_gray(), &mask)?;
                    written.extend([color, mask]);
                    return Ok(written);
                }
                let g = build_view_guidance(self.scene, c, f, &render, &self.config.guidance)?;
                let gdir = dir.join("guidance").join(&cam.name);
                g.write(&gdir, f)?;
                written.extend(
                    ["depth", "normal", "edge", "object", "mask"]
                        .iter()
                        .map(|k| gdir.join(format!("{name}_{k}.png"))),
                );
                if self.stage == Stage::Edit {
                    let edited = composite_naive(
                        &self.scene.frames[c][f],
                        &render,
                        self.scene.depth(c, f),
                        &self.config.composite,
                    )?;
                    let p = dir.join("frames_edited").join(&cam.name).join(format!("{name}.png"));
                    save_png(&edited, &p)?;
                    written.push(p);
                }
                Ok(written)
            })
            .collect();
        for r in per_job {
            report.outputs.extend(r?.iter().map(|p| rel(self.out, p)));
        }
        lap(report, "views");
        Ok(())
    }
}

/// Runs the pipeline up to `stage`. `Err` means a configuration problem
/// (exit code 2); per-spec failures are recorded in the report.
pub fn run(config: &PipelineConfig, stage: Stage) -> Result<RunReport> {
    config.validate()?;
    let scene = load_scene_bundle(&config.scene)?;
    let assets = match &config.assets {
        Some(path) => AssetSource::Catalog {
            entries: load_catalog(path)?,
            dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        },
        None => AssetSource::Procedural,
    };
    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    let runner = SpecRun {
        scene: &scene,
        scene_dir: &config.scene,
        config,
        stage,
        out: &config.out,
    };
    let specs: Vec<SpecReport> = pool.install(|| {
        (0..config.placements.len())
            .map(|i| runner.run(i, &assets))
            .collect()
    });
    let succeeded = specs.iter().filter(|s| s.status == "ok").count();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        stage,
        seed: config.seed,
        scene_id: scene.meta.scene_id.clone(),
        failed: specs.len() - succeeded,
        succeeded,
        specs,
    };
    write_json_file(&config.out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainSummary {
    pub schema_version: u32,
    pub steps: usize,
    pub parameter_count: usize,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub loss_ratio: f64,
    pub masked_psnr_db: f64,
    pub checkpoint: String,
    pub loss_csv: String,
}

/// Trains the toy model and writes `checkpoint.bin`, `loss.csv` and
/// `train_report.json` under `out`.
pub fn run_toy_train(config: &TrainConfig, out: &Path) -> Result<ToyTrainSummary> {
    let (model, logs, report) = train_toy(config)?;
    let ckpt = out.join("checkpoint.bin");
    let csv = out.join("loss.csv");
    save_checkpoint(&model, &ckpt)?;
    write_loss_csv(&csv, &logs)?;
    let data = ToyData::new(&model, &toy_scene(&config.model)?)?;
    let sample = crate::rfdit::train::sample_toy(&model, &data, config, 1.0)?;
    let summary = ToyTrainSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        steps: report.steps,
        parameter_count: report.parameter_count,
        initial_eval_loss: report.initial_eval_loss,
        final_eval_loss: report.final_eval_loss,
        loss_ratio: report.final_eval_loss / report.initial_eval_loss,
        masked_psnr_db: masked_psnr(&sample, &data.projected_targets, &data.masks),
        checkpoint: "checkpoint.bin".into(),
        loss_csv: "loss.csv".into(),
    };
    write_json_file(&out.join("train_report.json"), &summary)?;
    Ok(summary)
}

/// Samples the toy scene and writes `samples/<view>/%04d.png`. With
/// `zero_field` the velocity is identically zero and no checkpoint is
/// read.
pub fn run_toy_sample(
    config: &TrainConfig,
    checkpoint: Option<&Path>,
    zero_field: bool,
    guidance_scale: f64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let model = match (checkpoint, zero_field) {
        (Some(p), _) => load_checkpoint(p)?,
        (None, true) => ToyModel::new(config.model.clone(), config.seed)?,
        (None, false) => {
            return Err(Error::Checkpoint("no checkpoint given; pass --checkpoint or --zero-field".into()))
        }
    };
    let shape = model.config.latent_shape(2);
    let seed = config.noise_seed(0);
    let z = if zero_field {
        rf_sample(&ZeroField, shape, config.sample_steps, guidance_scale, seed)?
    } else {
        let data = ToyData::new(&model, &toy_scene(&model.config)?)?;
        let field = Conditioned {
            model: &model,
            conds: &data.conds,
        };
        rf_sample(&field, shape, config.sample_steps, guidance_scale, seed)?
    };
    let images = model.codec.decode(&z)?;
    let mut written = Vec::new();
    for (v, frames) in images.iter().enumerate() {
        for (f, img) in frames.iter().enumerate() {
            let p = out.join("samples").join(format!("view_{v}")).join(format!("{f:04}.png"));
            save_png(&signed_to_rgb(img), &p)?;
            written.push(p);
        }
    }
    Ok(written)
}
