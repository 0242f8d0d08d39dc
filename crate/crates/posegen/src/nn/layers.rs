//! Layer graph: sequential stacks, residual blocks, instance norm,
//! activations, and the gradient store.

use rayon::prelude::*;

use super::conv::{Conv2d, Deconv2d};
use super::sample_chunks;
use crate::tensor::Tensor;

/// Per-channel instance normalization with affine terms.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub g: Vec<f32>,
    pub b: Vec<f32>,
    pub eps: f32,
}

impl InstanceNorm {
    pub fn new(c: usize) -> Self {
        InstanceNorm {
            g: vec![1.0; c],
            b: vec![0.0; c],
            eps: 1e-5,
        }
    }

    fn stats(x: &[f32]) -> (f32, f32) {
        let n = x.len() as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
        (mean as f32, var as f32)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.g.len());
        let hw = h * w;
        let mut y = Tensor::zeros([n, c, h, w]);
        let y_samples: Vec<&mut [f32]> = {
            let sl = y.sample_len();
            y.data_mut().chunks_mut(sl).collect()
        };
        y_samples.into_par_iter().enumerate().for_each(|(i, ys)| {
            let xs = x.sample(i);
            for ci in 0..c {
                let xp = &xs[ci * hw..(ci + 1) * hw];
                let (mean, var) = Self::stats(xp);
                let inv = 1.0 / (var + self.eps).sqrt();
                let (g, b) = (self.g[ci], self.b[ci]);
                for (yv, &xv) in ys[ci * hw..(ci + 1) * hw].iter_mut().zip(xp) {
                    *yv = g * (xv - mean) * inv + b;
                }
            }
        });
        y
    }

    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        mut dg: Option<&mut [f32]>,
        mut db: Option<&mut [f32]>,
    ) -> Tensor {
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let mut dx = Tensor::zeros([n, c, h, w]);
        let chunks = sample_chunks(n);
        let want = dg.is_some();

        let dx_chunks: Vec<&mut [f32]> = {
            let sl = dx.sample_len();
            let mut rest = dx.data_mut();
            let mut out = Vec::with_capacity(chunks.len());
            for r in &chunks {
                let (head, tail) = rest.split_at_mut(r.len() * sl);
                out.push(head);
                rest = tail;
            }
            out
        };

        let parts: Vec<(Vec<f32>, Vec<f32>)> = chunks
            .par_iter()
            .zip(dx_chunks)
            .map(|(range, dx_slice)| {
                let mut pdg = if want { vec![0.0f32; c] } else { Vec::new() };
                let mut pdb = if want { vec![0.0f32; c] } else { Vec::new() };
                let sl = c * hw;
                for (local, i) in range.clone().enumerate() {
                    let xs = x.sample(i);
                    let dys = dy.sample(i);
                    let dxs = &mut dx_slice[local * sl..(local + 1) * sl];
                    for ci in 0..c {
                        let xp = &xs[ci * hw..(ci + 1) * hw];
                        let dyp = &dys[ci * hw..(ci + 1) * hw];
                        let (mean, var) = Self::stats(xp);
                        let inv = 1.0 / (var + self.eps).sqrt();
                        let g = self.g[ci];
                        // xhat, plus the two reduction terms of the norm backward
                        let mut sum_dy = 0.0f64;
                        let mut sum_dy_xhat = 0.0f64;
                        for (&xv, &dv) in xp.iter().zip(dyp) {
                            let xhat = (xv - mean) * inv;
                            sum_dy += dv as f64;
                            sum_dy_xhat += (dv * xhat) as f64;
                        }
                        if want {
                            pdg[ci] += (sum_dy_xhat) as f32;
                            pdb[ci] += (sum_dy) as f32;
                        }
                        let m = hw as f64;
                        let mean_dy = (sum_dy / m) as f32;
                        let mean_dy_xhat = (sum_dy_xhat / m) as f32;
                        for ((dxv, &xv), &dv) in
                            dxs[ci * hw..(ci + 1) * hw].iter_mut().zip(xp).zip(dyp)
                        {
                            let xhat = (xv - mean) * inv;
                            *dxv = g * inv * (dv - mean_dy - xhat * mean_dy_xhat);
                        }
                    }
                }
                (pdg, pdb)
            })
            .collect();

        for (pdg, pdb) in parts {
            if let Some(dg) = dg.as_deref_mut() {
                for (d, s) in dg.iter_mut().zip(pdg.iter()) {
                    *d += s;
                }
            }
            if let Some(db) = db.as_deref_mut() {
                for (d, s) in db.iter_mut().zip(pdb.iter()) {
                    *d += s;
                }
            }
        }
        dx
    }
}

/// Residual block: `post(x + body(x))`. The body is a plain sequential
/// stack whose output shape equals its input shape.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub body: Sequential,
    pub post: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Leaky(f32),
}

impl Activation {
    fn forward(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Leaky(a) => x.map(move |v| if v > 0.0 { v } else { a * v }),
        }
    }

    fn backward(self, x: &Tensor, dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        match self {
            Activation::Relu => {
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            Activation::Leaky(a) => {
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *d *= a;
                    }
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Deconv(Deconv2d),
    Norm(InstanceNorm),
    Relu,
    Leaky(f32),
    Tanh,
    /// Global average pool over the spatial dims.
    Gap,
    Res(ResBlock),
}

impl Layer {
    fn n_blobs(&self) -> usize {
        match self {
            Layer::Conv(_) | Layer::Deconv(_) | Layer::Norm(_) => 2,
            Layer::Res(r) => r.body.n_blobs(),
            _ => 0,
        }
    }
}

/// One cache entry per layer: the layer's input, plus the nested cache for
/// residual bodies. The gradient-penalty tangent pass reuses this shape
/// with mixed contents (tangent inputs for convs, primal inputs for
/// activations).
pub enum LayerCache {
    Plain(Tensor),
    Res { input: Tensor, body: SeqCache, pre_post: Tensor },
}

pub struct SeqCache {
    pub entries: Vec<LayerCache>,
    pub output: Tensor,
}

/// Flat gradient buffers, one per parameter blob, in network blob order.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub blobs: Vec<Vec<f32>>,
}

impl GradStore {
    pub fn for_sizes(sizes: &[usize]) -> Self {
        GradStore {
            blobs: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for b in &mut self.blobs {
            b.fill(0.0);
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.blobs
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f32, |m, &v| m.max(v.abs()))
    }
}

/// Mutable view into a contiguous region of a `GradStore`, used while
/// walking a network whose blobs start at `base`.
pub struct GradSlice<'a> {
    pub store: &'a mut GradStore,
    pub base: usize,
    /// When set, bias blobs receive no gradient (the penalty tangent pass).
    pub skip_bias: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn n_blobs(&self) -> usize {
        self.layers.iter().map(Layer::n_blobs).sum()
    }

    pub fn blob_sizes(&self, out: &mut Vec<usize>) {
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(c.w.len());
                    out.push(c.b.len());
                }
                Layer::Deconv(d) => {
                    out.push(d.w.len());
                    out.push(d.b.len());
                }
                Layer::Norm(n) => {
                    out.push(n.g.len());
                    out.push(n.b.len());
                }
                Layer::Res(r) => r.body.blob_sizes(out),
                _ => {}
            }
        }
    }

    pub fn blob_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Conv(_) => {
                    out.push(format!("{prefix}.l{i}.conv.w"));
                    out.push(format!("{prefix}.l{i}.conv.b"));
                }
                Layer::Deconv(_) => {
                    out.push(format!("{prefix}.l{i}.deconv.w"));
                    out.push(format!("{prefix}.l{i}.deconv.b"));
                }
                Layer::Norm(_) => {
                    out.push(format!("{prefix}.l{i}.norm.g"));
                    out.push(format!("{prefix}.l{i}.norm.b"));
                }
                Layer::Res(r) => r.body.blob_names(&format!("{prefix}.l{i}.res"), out),
                _ => {}
            }
        }
    }

    pub fn collect_params<'a>(&'a self, out: &mut Vec<&'a Vec<f32>>) {
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                Layer::Deconv(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                Layer::Norm(n) => {
                    out.push(&n.g);
                    out.push(&n.b);
                }
                Layer::Res(r) => r.body.collect_params(out),
                _ => {}
            }
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Vec<f32>>) {
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                Layer::Deconv(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
                Layer::Norm(n) => {
                    out.push(&mut n.g);
                    out.push(&mut n.b);
                }
                Layer::Res(r) => r.body.collect_params_mut(out),
                _ => {}
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, SeqCache) {
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    let y = c.forward(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Deconv(d) => {
                    let y = d.forward(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Norm(n) => {
                    let y = n.forward(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Relu => {
                    let y = Activation::Relu.forward(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Leaky(a) => {
                    let y = Activation::Leaky(*a).forward(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Tanh => {
                    let y = cur.map(f32::tanh);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Gap => {
                    let [n, c, h, w] = cur.shape();
                    let hw = (h * w) as f64;
                    let mut y = Tensor::zeros([n, c, 1, 1]);
                    for i in 0..n {
                        let xs = cur.sample(i);
                        let ys = y.sample_mut(i);
                        for ci in 0..c {
                            ys[ci] = (xs[ci * h * w..(ci + 1) * h * w]
                                .iter()
                                .map(|&v| v as f64)
                                .sum::<f64>()
                                / hw) as f32;
                        }
                    }
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                Layer::Res(r) => {
                    let (body_out, body_cache) = r.body.forward(&cur);
                    let mut summed = body_out;
                    summed.add_assign(&cur);
                    let y = r.post.forward(&summed);
                    entries.push(LayerCache::Res {
                        input: std::mem::replace(&mut cur, y),
                        body: body_cache,
                        pre_post: summed,
                    });
                }
            }
        }
        let output = cur.clone();
        (cur, SeqCache { entries, output })
    }

    /// Reverse pass. `grads = None` propagates input gradients only
    /// (frozen network).
    pub fn backward(&self, cache: &SeqCache, dy: &Tensor, mut grads: Option<GradSlice>) -> Tensor {
        // Blob offset of each layer (prefix sums in construction order).
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.n_blobs();
        }

        let mut cur = dy.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let entry = &cache.entries[i];
            match (l, entry) {
                (Layer::Conv(c), LayerCache::Plain(x)) => {
                    cur = match grads.as_mut() {
                        Some(gs) => {
                            let base = gs.base + offsets[i];
                            let (dw, db) = two_blobs(gs.store, base);
                            let db = if gs.skip_bias { None } else { Some(db) };
                            c.backward(x, &cur, Some(dw), db)
                        }
                        None => c.backward(x, &cur, None, None),
                    };
                }
                (Layer::Deconv(d), LayerCache::Plain(x)) => {
                    cur = match grads.as_mut() {
                        Some(gs) => {
                            let base = gs.base + offsets[i];
                            let (dw, db) = two_blobs(gs.store, base);
                            let db = if gs.skip_bias { None } else { Some(db) };
                            d.backward(x, &cur, Some(dw), db)
                        }
                        None => d.backward(x, &cur, None, None),
                    };
                }
                (Layer::Norm(n), LayerCache::Plain(x)) => {
                    cur = match grads.as_mut() {
                        Some(gs) => {
                            let base = gs.base + offsets[i];
                            let (dg, db) = two_blobs(gs.store, base);
                            n.backward(x, &cur, Some(dg), Some(db))
                        }
                        None => n.backward(x, &cur, None, None),
                    };
                }
                (Layer::Relu, LayerCache::Plain(x)) => {
                    cur = Activation::Relu.backward(x, &cur);
                }
                (Layer::Leaky(a), LayerCache::Plain(x)) => {
                    cur = Activation::Leaky(*a).backward(x, &cur);
                }
                (Layer::Tanh, LayerCache::Plain(x)) => {
                    let mut dx = cur.clone();
                    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        let y = xv.tanh();
                        *d *= 1.0 - y * y;
                    }
                    cur = dx;
                }
                (Layer::Gap, LayerCache::Plain(x)) => {
                    let [n, c, h, w] = x.shape();
                    let scale = 1.0 / (h * w) as f32;
                    let mut dx = Tensor::zeros([n, c, h, w]);
                    for bi in 0..n {
                        let ds = cur.sample(bi);
                        let dxs = dx.sample_mut(bi);
                        for ci in 0..c {
                            let g = ds[ci] * scale;
                            dxs[ci * h * w..(ci + 1) * h * w].fill(g);
                        }
                    }
                    cur = dx;
                }
                (Layer::Res(r), LayerCache::Res { input, body, pre_post }) => {
                    let d_sum = r.post.backward(pre_post, &cur);
                    let d_body_in = match grads.as_mut() {
                        Some(gs) => {
                            let slice = GradSlice {
                                store: gs.store,
                                base: gs.base + offsets[i],
                                skip_bias: gs.skip_bias,
                            };
                            r.body.backward(body, &d_sum, Some(slice))
                        }
                        None => r.body.backward(body, &d_sum, None),
                    };
                    let _ = input;
                    let mut dx = d_sum;
                    dx.add_assign(&d_body_in);
                    cur = dx;
                }
                _ => unreachable!("cache entry does not match layer"),
            }
        }
        cur
    }

    /// Forward-mode tangent pass for piecewise-linear stacks (conv + leaky
    /// activations only). Produces a mixed cache suitable for `backward`
    /// with `skip_bias = true`: conv entries hold tangent inputs,
    /// activation entries hold primal inputs (their masks).
    pub fn tangent_forward(&self, primal: &SeqCache, v: &Tensor) -> (Tensor, SeqCache) {
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut cur = v.clone();
        for (i, l) in self.layers.iter().enumerate() {
            match (l, &primal.entries[i]) {
                (Layer::Conv(c), LayerCache::Plain(_)) => {
                    let y = c.forward_no_bias(&cur);
                    entries.push(LayerCache::Plain(std::mem::replace(&mut cur, y)));
                }
                (Layer::Leaky(a), LayerCache::Plain(x)) => {
                    // Tangent flows through the primal mask.
                    let mut y = cur.clone();
                    for (t, &xv) in y.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *t *= a;
                        }
                    }
                    entries.push(LayerCache::Plain(x.clone()));
                    cur = y;
                }
                (Layer::Relu, LayerCache::Plain(x)) => {
                    let mut y = cur.clone();
                    for (t, &xv) in y.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *t = 0.0;
                        }
                    }
                    entries.push(LayerCache::Plain(x.clone()));
                    cur = y;
                }
                _ => panic!("tangent pass supports conv + relu/leaky stacks only"),
            }
        }
        let output = cur.clone();
        (cur, SeqCache { entries, output })
    }
}

/// Two consecutive blobs from the store as disjoint mutable slices.
fn two_blobs(store: &mut GradStore, base: usize) -> (&mut [f32], &mut [f32]) {
    let (lo, hi) = store.blobs.split_at_mut(base + 1);
    (&mut lo[base], &mut hi[0])
}
