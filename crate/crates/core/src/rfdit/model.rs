//! Toy diffusion transformer: condition embedders, FusionNet, a
//! zero-initialized control block, adaLN base blocks and view attention.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::codec::{Codec, Latent, LatentShape, PATCH};
use super::tape::{AttentionLayout, Graph, Mat, Var};
use crate::error::{Error, Result};

pub const CONDITION_NAMES: [&str; 5] = ["depth", "normal", "edge", "object", "mask"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub frames: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub latent_channels: usize,
    pub width: usize,
    pub heads: usize,
    pub base_blocks: usize,
    pub control_blocks: usize,
    pub mlp_hidden: usize,
    /// Output width of each per-condition embedder.
    pub embed_dim: usize,
    pub fusion_hidden: usize,
    /// Number of sinusoidal frequencies in the timestep features.
    pub time_freqs: usize,
    pub view_attention: bool,
    pub codec_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            frames: 4,
            image_height: 32,
            image_width: 32,
            latent_channels: 4,
            width: 64,
            heads: 4,
            base_blocks: 2,
            control_blocks: 1,
            mlp_hidden: 128,
            embed_dim: 16,
            fusion_hidden: 64,
            time_freqs: 32,
            view_attention: true,
            codec_seed: 7,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(format!("toy config: {m}")));
        if !self.image_height.is_multiple_of(PATCH) || !self.image_width.is_multiple_of(PATCH) {
            return bad(format!("image size must be a multiple of {PATCH}"));
        }
        if self.width == 0 || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad("width must be a positive multiple of heads".into());
        }
        if self.frames == 0 || self.latent_channels == 0 || self.embed_dim == 0 {
            return bad("frames, latent_channels and embed_dim must be positive".into());
        }
        if self.mlp_hidden == 0 || self.fusion_hidden == 0 || self.time_freqs == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    pub fn latent_shape(&self, views: usize) -> LatentShape {
        LatentShape {
            views,
            frames: self.frames,
            channels: self.latent_channels,
            height: self.image_height / PATCH,
            width: self.image_width / PATCH,
        }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<(String, Mat)>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.entries[i].1 = value;
        } else {
            self.index.insert(name.clone(), self.entries.len());
            self.entries.push((name, value));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, m)| m.iter().all(|v| v.is_finite()))
    }
}

/// Parameters bound as graph leaves.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind(g: &mut Graph, params: &ParamStore) -> Self {
        let vars = params.iter().map(|(n, m)| (n.to_string(), g.leaf(m.clone()))).collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// The five encoded guidance maps, ordered depth, normal, edge, object,
/// mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub latents: [Latent; 5],
}

impl ConditionSet {
    pub fn new(latents: [Latent; 5]) -> Result<Self> {
        for l in &latents[1..] {
            latents[0].check_same_shape(l)?;
        }
        Ok(Self { latents })
    }

    pub fn shape(&self) -> LatentShape {
        self.latents[0].shape()
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            latents: std::array::from_fn(|_| Latent::zeros(shape)),
        }
    }

    /// Reorders views: output view `i` is input view `perm[i]`.
    pub fn permute_views(&self, perm: &[usize]) -> Self {
        Self {
            latents: std::array::from_fn(|k| permute_views(&self.latents[k], perm)),
        }
    }
}

pub fn permute_views(z: &Latent, perm: &[usize]) -> Latent {
    let s = z.shape();
    let per_view = s.frames * s.height * s.width;
    let mut out = Mat::zeros(z.tokens().raw_dim());
    for (dst, &src) in perm.iter().enumerate() {
        for r in 0..per_view {
            out.row_mut(dst * per_view + r).assign(&z.tokens().row(src * per_view + r));
        }
    }
    Latent::from_tokens(s, out).expect("shape preserved")
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub codec: Codec,
    pub params: ParamStore,
}

struct Init<'a> {
    rng: &'a mut ChaCha8Rng,
    params: ParamStore,
}

impl Init<'_> {
    fn normal(&mut self, name: String, rows: usize, cols: usize, std: f64) {
        let dist = Normal::new(0.0, std).expect("positive std");
        let m = Mat::from_shape_simple_fn((rows, cols), || dist.sample(self.rng));
        self.params.insert(name, m);
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.normal(format!("{prefix}.w"), fan_in, fan_out, 1.0 / (fan_in as f64).sqrt());
        self.params.insert(format!("{prefix}.b"), Mat::zeros((1, fan_out)));
    }

    fn zero_linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.params.insert(format!("{prefix}.w"), Mat::zeros((fan_in, fan_out)));
        self.params.insert(format!("{prefix}.b"), Mat::zeros((1, fan_out)));
    }

    fn block(&mut self, prefix: &str, d: usize, hidden: usize) {
        self.linear(&format!("{prefix}.ada"), d, 6 * d);
        self.linear(&format!("{prefix}.qkv"), d, 3 * d);
        self.linear(&format!("{prefix}.proj"), d, d);
        self.linear(&format!("{prefix}.fc1"), d, hidden);
        self.linear(&format!("{prefix}.fc2"), hidden, d);
    }
}

/// Cached index maps and attention layouts for one latent shape.
pub struct Plan {
    pub shape: LatentShape,
    pos_index: Rc<Vec<Option<usize>>>,
    within_view: Rc<AttentionLayout>,
    across_views: Rc<AttentionLayout>,
}

impl Plan {
    pub fn new(config: &ToyConfig, shape: LatentShape) -> Result<Self> {
        let expected = config.latent_shape(shape.views);
        if shape != expected {
            return Err(Error::Shape(format!("latent {shape:?} does not fit model config {expected:?}")));
        }
        let d = config.width;
        let per_frame = shape.patches_per_frame();
        let per_view = shape.frames * per_frame;
        let mut pos = Vec::with_capacity(shape.tokens() * d);
        for r in 0..shape.tokens() {
            let slot = r % per_view;
            pos.extend((0..d).map(|c| Some(slot * d + c)));
        }
        let within_view = (0..shape.views)
            .map(|v| (v * per_view..(v + 1) * per_view).collect())
            .collect();
        let across_views = (0..per_view)
            .map(|slot| (0..shape.views).map(|v| v * per_view + slot).collect())
            .collect();
        Ok(Self {
            shape,
            pos_index: Rc::new(pos),
            within_view: Rc::new(AttentionLayout {
                groups: within_view,
                heads: config.heads,
            }),
            across_views: Rc::new(AttentionLayout {
                groups: across_views,
                heads: config.heads,
            }),
        })
    }
}

pub fn timestep_features(t: f64, freqs: usize) -> Mat {
    let mut m = Mat::zeros((1, 2 * freqs));
    for i in 0..freqs {
        let w = (-(10_000f64.ln()) * i as f64 / freqs as f64).exp();
        let a = 1000.0 * t * w;
        m[[0, i]] = a.cos();
        m[[0, freqs + i]] = a.sin();
    }
    m
}

fn linear(g: &mut Graph, p: &Bound, prefix: &str, x: Var) -> Var {
    let y = g.matmul(x, p.var(&format!("{prefix}.w")));
    g.add_row(y, p.var(&format!("{prefix}.b")))
}

fn modulate(g: &mut Graph, x: Var, shift: Var, scale: Var) -> Var {
    let s = g.add_const(scale, 1.0);
    let y = g.mul_row(x, s);
    g.add_row(y, shift)
}

impl ToyModel {
    pub fn new(config: ToyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let codec = Codec::new(config.latent_channels, config.codec_seed)?;
        let mut rng = crate::seed::substream(seed, "toy/init");
        let mut init = Init {
            rng: &mut rng,
            params: ParamStore::default(),
        };
        let c = &config;
        let d = c.width;
        let slots = c.frames * (c.image_height / PATCH) * (c.image_width / PATCH);
        init.linear("x_embed", c.latent_channels, d);
        init.normal("pos_embed".into(), slots, d, 0.02);
        init.linear("t_mlp.fc1", 2 * c.time_freqs, d);
        init.linear("t_mlp.fc2", d, d);
        for name in CONDITION_NAMES {
            init.linear(&format!("cond.{name}"), c.latent_channels, c.embed_dim);
        }
        init.linear("fusion.fc1", 5 * c.embed_dim, c.fusion_hidden);
        init.linear("fusion.fc2", c.fusion_hidden, d);
        init.normal("uncond".into(), 1, d, 0.02);
        for i in 0..c.control_blocks {
            init.block(&format!("control.{i}"), d, c.mlp_hidden);
        }
        init.zero_linear("control.out", d, d);
        for i in 0..c.base_blocks {
            init.block(&format!("base.{i}"), d, c.mlp_hidden);
        }
        if c.view_attention {
            for name in ["q", "k", "v"] {
                init.linear(&format!("view.{name}"), d, d);
            }
            init.zero_linear("view.o", d, d);
        }
        init.linear("final.ada", d, 2 * d);
        init.linear("final.out", d, c.latent_channels);
        let params = init.params;
        Ok(Self { config, codec, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn plan(&self, views: usize) -> Result<Plan> {
        Plan::new(&self.config, self.config.latent_shape(views))
    }

    /// Graph for the fused condition tokens (`N x width`).
    pub fn fuse_graph(&self, g: &mut Graph, p: &Bound, conds: &ConditionSet) -> Var {
        let embedded: Vec<Var> = CONDITION_NAMES
            .iter()
            .zip(&conds.latents)
            .map(|(name, z)| {
                let x = g.leaf(z.tokens().clone());
                linear(g, p, &format!("cond.{name}"), x)
            })
            .collect();
        let cat = g.concat_cols(&embedded);
        let h = linear(g, p, "fusion.fc1", cat);
        let h = g.gelu(h);
        linear(g, p, "fusion.fc2", h)
    }

    fn block(&self, g: &mut Graph, p: &Bound, prefix: &str, h: Var, c: Var, layout: &Rc<AttentionLayout>) -> Var {
        let d = self.config.width;
        let m = linear(g, p, &format!("{prefix}.ada"), c);
        let mut chunk = |i: usize| g.slice_cols(m, i * d..(i + 1) * d);
        let (shift1, scale1, gate1) = (chunk(0), chunk(1), chunk(2));
        let (shift2, scale2, gate2) = (chunk(3), chunk(4), chunk(5));

        let x = g.layer_norm(h);
        let x = modulate(g, x, shift1, scale1);
        let qkv = linear(g, p, &format!("{prefix}.qkv"), x);
        let q = g.slice_cols(qkv, 0..d);
        let k = g.slice_cols(qkv, d..2 * d);
        let v = g.slice_cols(qkv, 2 * d..3 * d);
        let a = g.attention(q, k, v, layout.clone());
        let a = linear(g, p, &format!("{prefix}.proj"), a);
        let a = g.mul_row(a, gate1);
        let h = g.add(h, a);

        let x = g.layer_norm(h);
        let x = modulate(g, x, shift2, scale2);
        let x = linear(g, p, &format!("{prefix}.fc1"), x);
        let x = g.gelu(x);
        let x = linear(g, p, &format!("{prefix}.fc2"), x);
        let x = g.mul_row(x, gate2);
        g.add(h, x)
    }

    fn view_block(&self, g: &mut Graph, p: &Bound, h: Var, plan: &Plan) -> Var {
        let x = g.layer_norm(h);
        let q = linear(g, p, "view.q", x);
        let k = linear(g, p, "view.k", x);
        let v = linear(g, p, "view.v", x);
        let a = g.attention(q, k, v, plan.across_views.clone());
        let o = linear(g, p, "view.o", a);
        g.add(h, o)
    }

    /// Graph for the velocity prediction (`N x latent_channels`).
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        plan: &Plan,
        x_t: &Latent,
        t: f64,
        conds: &ConditionSet,
        drop_condition: bool,
    ) -> Result<Var> {
        if x_t.shape() != plan.shape || conds.shape() != plan.shape {
            return Err(Error::Shape(format!(
                "inputs {:?} / conditions {:?} do not match plan {:?}",
                x_t.shape(),
                conds.shape(),
                plan.shape
            )));
        }
        let c = &self.config;
        let n = plan.shape.tokens();
        let x = g.leaf(x_t.tokens().clone());
        let h = linear(g, p, "x_embed", x);
        let pos = g.gather(p.var("pos_embed"), plan.pos_index.clone(), (n, c.width));
        let h = g.add(h, pos);

        let tf = g.leaf(timestep_features(t, c.time_freqs));
        let te = linear(g, p, "t_mlp.fc1", tf);
        let te = g.silu(te);
        let te = linear(g, p, "t_mlp.fc2", te);
        let cvec = g.silu(te);

        let mut hc = if drop_condition {
            g.add_row(h, p.var("uncond"))
        } else {
            let fused = self.fuse_graph(g, p, conds);
            g.add(h, fused)
        };
        for i in 0..c.control_blocks {
            hc = self.block(g, p, &format!("control.{i}"), hc, cvec, &plan.within_view);
        }
        let ctrl = linear(g, p, "control.out", hc);
        let mut h = g.add(h, ctrl);

        for i in 0..c.base_blocks {
            h = self.block(g, p, &format!("base.{i}"), h, cvec, &plan.within_view);
            if i == 0 && c.view_attention {
                h = self.view_block(g, p, h, plan);
            }
        }
        if c.base_blocks == 0 && c.view_attention {
            h = self.view_block(g, p, h, plan);
        }

        let m = linear(g, p, "final.ada", cvec);
        let shift = g.slice_cols(m, 0..c.width);
        let scale = g.slice_cols(m, c.width..2 * c.width);
        let x = g.layer_norm(h);
        let x = modulate(g, x, shift, scale);
        Ok(linear(g, p, "final.out", x))
    }

    pub fn fuse_conditions(&self, conds: &ConditionSet) -> Result<Mat> {
        let s = conds.shape();
        if s.channels != self.config.latent_channels {
            return Err(Error::Shape(format!(
                "conditions have {} channels, model expects {}",
                s.channels, self.config.latent_channels
            )));
        }
        let mut g = Graph::new();
        let p = Bound::bind(&mut g, &self.params);
        let f = self.fuse_graph(&mut g, &p, conds);
        Ok(g.value(f).clone())
    }

    pub fn dit_forward(&self, x_t: &Latent, t: f64, conds: &ConditionSet, drop_condition: bool) -> Result<Latent> {
        let plan = self.plan(x_t.shape().views)?;
        let mut g = Graph::new();
        let p = Bound::bind(&mut g, &self.params);
        let v = self.forward_graph(&mut g, &p, &plan, x_t, t, conds, drop_condition)?;
        Latent::from_tokens(x_t.shape(), g.value(v).clone())
    }
}

/// A model with its conditions attached, usable by the sampler.
pub struct Conditioned<'a> {
    pub model: &'a ToyModel,
    pub conds: &'a ConditionSet,
}

impl super::flow::VelocityField for Conditioned<'_> {
    fn velocity(&self, x: &Latent, t: f64, drop_condition: bool) -> Result<Latent> {
        self.model.dit_forward(x, t, self.conds, drop_condition)
    }
}
