//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Graph`] records every operation eagerly (values are computed when a
//! node is added) and [`Graph::backward`] walks the nodes in reverse,
//! accumulating adjoints. Every tensor is a 2D `f64` matrix; callers
//! express reshapes, slices and convolution patches with [`Graph::gather`].

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row groups and head count for grouped multi-head attention. Rows in the
/// same group attend to each other; heads split the feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayout {
    pub groups: Vec<Vec<usize>>,
    pub heads: usize,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Rc<Mat>),
    Square(Var),
    Gelu(Var),
    Silu(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    RowNormalize { x: Var, norms: Vec<f64> },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        layout: Rc<AttentionLayout>,
        probs: Vec<Mat>,
    },
    Gather { x: Var, index: Rc<Vec<Option<usize>>> },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;
pub const LAYER_NORM_EPS: f64 = 1e-6;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let value = standard(value);
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "not a scalar node");
        m[[0, 0]]
    }

    /// Parameters and constants both enter the graph as leaves.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + row`, broadcasting a `1 x c` row over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    /// `a ⊙ row`, broadcasting a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::AddConst(a))
    }

    /// Elementwise product with a constant matrix of the same shape.
    pub fn mul_const(&mut self, a: Var, k: Rc<Mat>) -> Var {
        let v = self.value(a) * &*k;
        self.push(v, Op::MulConst(a, k))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(silu);
        self.push(v, Op::Silu(a))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.ncols() as f64;
        let mut out = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in out.rows_mut() {
            let mean = row.sum() / c;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / c;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        self.push(out, Op::LayerNorm { x, inv_std })
    }

    /// Scales each row to unit length: `x / sqrt(|x|^2 + eps)`.
    pub fn row_normalize(&mut self, x: Var, eps: f64) -> Var {
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.nrows());
        for mut row in out.rows_mut() {
            let n = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            row.mapv_inplace(|v| v / n);
            norms.push(n);
        }
        self.push(out, Op::RowNormalize { x, norms })
    }

    /// Grouped multi-head scaled dot-product attention. Rows that belong
    /// to no group produce zeros.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, layout: Rc<AttentionLayout>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.dim();
        assert_eq!(kv.dim(), (n, d));
        assert_eq!(vv.dim(), (n, d));
        assert_eq!(d % layout.heads, 0, "width not divisible by heads");
        let dh = d / layout.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros((n, d));
        let mut probs = Vec::with_capacity(layout.groups.len() * layout.heads);
        for group in &layout.groups {
            for h in 0..layout.heads {
                let cols = h * dh..(h + 1) * dh;
                let qg = select(qv, group, cols.clone());
                let kg = select(kv, group, cols.clone());
                let vg = select(vv, group, cols.clone());
                let mut p = qg.dot(&kg.t()) * scale;
                for mut row in p.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|s| (s - m).exp());
                    let z = row.sum();
                    row.mapv_inplace(|s| s / z);
                }
                let o = p.dot(&vg);
                for (gi, &r) in group.iter().enumerate() {
                    out.slice_mut(s![r, cols.clone()]).assign(&o.row(gi));
                }
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                layout,
                probs,
            },
        )
    }

    /// `out.flat[i] = x.flat[index[i]]`, or 0 where `index[i]` is `None`.
    /// Covers reshapes, permutations, slicing and im2col.
    pub fn gather(&mut self, x: Var, index: Rc<Vec<Option<usize>>>, shape: (usize, usize)) -> Var {
        assert_eq!(index.len(), shape.0 * shape.1, "gather index/shape mismatch");
        let src = self.value(x);
        let flat = src.as_slice().expect("standard layout");
        let data = index.iter().map(|i| i.map_or(0.0, |i| flat[i])).collect();
        let v = Mat::from_shape_vec(shape, data).expect("shape checked");
        self.push(v, Op::Gather { x, index })
    }

    /// Convenience: columns `cols` of `x`.
    pub fn slice_cols(&mut self, x: Var, cols: std::ops::Range<usize>) -> Var {
        let (n, c) = self.value(x).dim();
        let w = cols.len();
        let index: Vec<Option<usize>> = (0..n)
            .flat_map(|r| cols.clone().map(move |j| Some(r * c + j)))
            .collect();
        self.gather(x, Rc::new(index), (n, w))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts match");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Mat::from_elem((1, 1), m.sum() / m.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Adjoints of `output` with respect to every node (`None` where the
    /// node does not influence it).
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Mat::ones(self.value(output).raw_dim()));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    let ga = &g * self.value(*row);
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *row, gr);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g * *k),
                Op::AddConst(a) => accumulate(&mut grads, *a, g),
                Op::MulConst(a, k) => accumulate(&mut grads, *a, g * &**k),
                Op::Square(a) => {
                    let ga = &g * &(self.value(*a) * 2.0);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let ga = &g * &self.value(*a).mapv(gelu_grad);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Silu(a) => {
                    let ga = &g * &self.value(*a).mapv(|x| {
                        let s = sigmoid(x);
                        s * (1.0 + x * (1.0 - s))
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &node.value;
                    let c = y.ncols() as f64;
                    let mut gx = g;
                    for ((mut gr, yr), &inv) in gx.rows_mut().into_iter().zip(y.rows()).zip(inv_std) {
                        let mean_g = gr.sum() / c;
                        let mean_gy = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / c;
                        for (gv, yv) in gr.iter_mut().zip(yr.iter()) {
                            *gv = inv * (*gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::RowNormalize { x, norms } => {
                    let y = &node.value;
                    let mut gx = g;
                    for ((mut gr, yr), &n) in gx.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                        let gy = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>();
                        for (gv, yv) in gr.iter_mut().zip(yr.iter()) {
                            *gv = (*gv - yv * gy) / n;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    layout,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.ncols();
                    let dh = d / layout.heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut gq = Mat::zeros(qv.raw_dim());
                    let mut gk = Mat::zeros(kv.raw_dim());
                    let mut gv = Mat::zeros(vv.raw_dim());
                    let mut pi = 0;
                    for group in &layout.groups {
                        for h in 0..layout.heads {
                            let cols = h * dh..(h + 1) * dh;
                            let p = &probs[pi];
                            pi += 1;
                            let go = select(&g, group, cols.clone());
                            let qg = select(qv, group, cols.clone());
                            let kg = select(kv, group, cols.clone());
                            let vg = select(vv, group, cols.clone());
                            let dv = p.t().dot(&go);
                            let dp = go.dot(&vg.t());
                            let mut ds = dp;
                            for (mut dr, pr) in ds.rows_mut().into_iter().zip(p.rows()) {
                                let dot = dr.iter().zip(pr.iter()).map(|(a, b)| a * b).sum::<f64>();
                                for (dv_, pv) in dr.iter_mut().zip(pr.iter()) {
                                    *dv_ = pv * (*dv_ - dot);
                                }
                            }
                            let dq = ds.dot(&kg) * scale;
                            let dk = ds.t().dot(&qg) * scale;
                            for (gi, &r) in group.iter().enumerate() {
                                let mut row = gq.slice_mut(s![r, cols.clone()]);
                                row += &dq.row(gi);
                                let mut row = gk.slice_mut(s![r, cols.clone()]);
                                row += &dk.row(gi);
                                let mut row = gv.slice_mut(s![r, cols.clone()]);
                                row += &dv.row(gi);
                            }
                        }
                    }
                    accumulate(&mut grads, *q, gq);
                    accumulate(&mut grads, *k, gk);
                    accumulate(&mut grads, *v, gv);
                }
                Op::Gather { x, index } => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    {
                        let flat = gx.as_slice_mut().expect("standard layout");
                        for (gv, i) in g.iter().zip(index.iter()) {
                            if let Some(i) = i {
                                flat[*i] += gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., col..col + w]).to_owned();
                        accumulate(&mut grads, *p, gp);
                        col += w;
                    }
                }
                Op::Sum(a) => {
                    let ga = Mat::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    let ga = Mat::from_elem(self.value(*a).raw_dim(), g[[0, 0]] / n);
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Gradients { grads }
    }
}

fn select(m: &Mat, rows: &[usize], cols: std::ops::Range<usize>) -> Mat {
    let mut out = Mat::zeros((rows.len(), cols.len()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.slice(s![r, cols.clone()]));
    }
    out
}

fn standard(m: Mat) -> Mat {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(standard(g)),
    }
}

pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of d(sum(w ⊙ f(inputs)))/d inputs.
    fn check<F>(inputs: Vec<Mat>, f: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let build = |inputs: &[Mat]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
            let out = f(&mut g, &vars);
            (g, vars, out)
        };
        let (g0, _, out0) = build(&inputs);
        let weights = Rc::new(random(&mut rng, g0.value(out0).nrows(), g0.value(out0).ncols()));
        let loss_of = |inputs: &[Mat]| {
            let (mut g, vars, out) = build(inputs);
            let w = g.mul_const(out, weights.clone());
            let l = g.sum(w);
            (g, vars, l)
        };
        let (g, vars, l) = loss_of(&inputs);
        let grads = g.backward(l);
        let h = 1e-6;
        for (ii, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[ii]).cloned().unwrap_or_else(|| Mat::zeros(input.raw_dim()));
            for idx in 0..input.len() {
                let mut plus = inputs.clone();
                plus[ii].as_slice_mut().unwrap()[idx] += h;
                let mut minus = inputs.clone();
                minus[ii].as_slice_mut().unwrap()[idx] -= h;
                let (gp, _, lp) = loss_of(&plus);
                let (gm, _, lm) = loss_of(&minus);
                let fd = (gp.scalar(lp) - gm.scalar(lm)) / (2.0 * h);
                let a = analytic.as_slice().unwrap()[idx];
                assert!(
                    (a - fd).abs() <= 1e-6 * (1.0 + a.abs().max(fd.abs())),
                    "input {ii} elem {idx}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn matmul_and_broadcast_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b, r) = (random(&mut rng, 3, 4), random(&mut rng, 4, 2), random(&mut rng, 1, 2));
        check(vec![a, b, r], |g, v| {
            let m = g.matmul(v[0], v[1]);
            let m = g.add_row(m, v[2]);
            g.mul_row(m, v[2])
        });
    }

    #[test]
    fn elementwise_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random(&mut rng, 3, 5), random(&mut rng, 3, 5));
        check(vec![a, b], |g, v| {
            let x = g.mul(v[0], v[1]);
            let x = g.sub(x, v[1]);
            let x = g.gelu(x);
            let y = g.silu(v[0]);
            let x = g.add(x, y);
            let x = g.scale(x, 0.7);
            let x = g.add_const(x, 0.3);
            g.square(x)
        });
    }

    #[test]
    fn normalization_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 4, 6);
        check(vec![a.clone()], |g, v| g.layer_norm(v[0]));
        check(vec![a], |g, v| g.row_normalize(v[0], 1e-8));
    }

    #[test]
    fn attention_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q, k, v) = (random(&mut rng, 5, 4), random(&mut rng, 5, 4), random(&mut rng, 5, 4));
        let layout = Rc::new(AttentionLayout {
            groups: vec![vec![0, 2, 4], vec![1, 3]],
            heads: 2,
        });
        check(vec![q, k, v], move |g, vars| g.attention(vars[0], vars[1], vars[2], layout.clone()));
    }

    #[test]
    fn structural_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = (random(&mut rng, 3, 4), random(&mut rng, 3, 2));
        check(vec![a, b], |g, v| {
            let idx = Rc::new(vec![Some(11), None, Some(0), Some(0), Some(5), Some(7)]);
            let x = g.gather(v[0], idx, (2, 3));
            let s = g.slice_cols(v[0], 1..3);
            let c = g.concat_cols(&[s, v[1]]);
            let m = g.mean(c);
            let t = g.sum(x);
            let tm = g.add(t, m);
            let ones = g.leaf(Mat::ones((4, 1)));
            let big = g.matmul(c, ones);
            let tm_row = g.matmul(big, tm);
            g.square(tm_row)
        });
    }

    #[test]
    fn attention_rows_sum_to_value_mix() {
        let mut g = Graph::new();
        let q = g.leaf(Mat::zeros((2, 2)));
        let k = g.leaf(Mat::zeros((2, 2)));
        let v = g.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let layout = Rc::new(AttentionLayout {
            groups: vec![vec![0, 1]],
            heads: 1,
        });
        let o = g.attention(q, k, v, layout);
        assert_eq!(g.value(o), &array![[2.0, 3.0], [2.0, 3.0]]);
    }
}
