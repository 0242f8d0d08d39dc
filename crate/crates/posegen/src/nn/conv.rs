//! 2-D convolution and transposed convolution with hand-written backward.

use rayon::prelude::*;

use super::{gemm, sample_chunks};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `y[oy,ox] = sum x[s*oy - p + ky, s*ox - p + kx] * w[ky,kx]`
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Vec<f32>, // [oc, ic*kh*kw]
    pub b: Vec<f32>, // [oc]
    pub oc: usize,
    pub ic: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Transposed convolution; the exact adjoint of a `Conv2d` with the same
/// kernel/stride/pad geometry. Weight layout `[ic, oc*kh*kw]`.
#[derive(Debug, Clone)]
pub struct Deconv2d {
    pub w: Vec<f32>, // [ic, oc*kh*kw]
    pub b: Vec<f32>, // [oc]
    pub oc: usize,
    pub ic: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

pub(crate) fn conv_out_dim(h: usize, k: usize, s: usize, p: usize) -> usize {
    assert!(h + 2 * p >= k, "kernel {k} larger than padded input {h}+2*{p}");
    (h + 2 * p - k) / s + 1
}

pub(crate) fn deconv_out_dim(h: usize, k: usize, s: usize, p: usize) -> usize {
    (h - 1) * s + k - 2 * p
}

/// Unfold one sample `[c, h, w]` into `[c*kh*kw, oh*ow]`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    col: &mut [f32],
) {
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-add columns back into an image.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    x: &mut [f32],
) {
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    x.fill(0.0);
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &col[row + oy * ow..row + (oy + 1) * ow];
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in src.iter().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl Conv2d {
    pub fn new(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        Conv2d {
            w: super::gaussian_init(oc * ic * k * k, 0.02, rng),
            b: vec![0.0; oc],
            oc,
            ic,
            kh: k,
            kw: k,
            stride,
            pad,
        }
    }

    /// Non-square kernel variant (pose-logit heads use `map_h x map_w`).
    #[allow(clippy::too_many_arguments)]
    pub fn new_rect(
        ic: usize,
        oc: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        Conv2d {
            w: super::gaussian_init(oc * ic * kh * kw, 0.02, rng),
            b: vec![0.0; oc],
            oc,
            ic,
            kh,
            kw,
            stride,
            pad,
        }
    }

    pub fn out_shape(&self, n: usize, h: usize, w: usize) -> [usize; 4] {
        [
            n,
            self.oc,
            conv_out_dim(h, self.kh, self.stride, self.pad),
            conv_out_dim(w, self.kw, self.stride, self.pad),
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_impl(x, true)
    }

    /// Forward without bias; the tangent pass of the gradient penalty.
    pub fn forward_no_bias(&self, x: &Tensor) -> Tensor {
        self.forward_impl(x, false)
    }

    fn forward_impl(&self, x: &Tensor, with_bias: bool) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.ic, "conv expects {} input channels, got {c}", self.ic);
        let [_, _, oh, ow] = self.out_shape(n, h, w);
        let mut y = Tensor::zeros([n, self.oc, oh, ow]);
        let k = self.ic * self.kh * self.kw;
        let l = oh * ow;
        let y_samples: Vec<&mut [f32]> = {
            let sl = y.sample_len();
            y.data_mut().chunks_mut(sl).collect()
        };
        y_samples.into_par_iter().enumerate().for_each(|(i, ys)| {
            let mut col = vec![0.0f32; k * l];
            im2col(
                x.sample(i),
                c,
                h,
                w,
                self.kh,
                self.kw,
                self.stride,
                self.pad,
                oh,
                ow,
                &mut col,
            );
            gemm(self.oc, k, l, 1.0, &self.w, false, &col, false, 0.0, ys);
            if with_bias {
                for (o, row) in ys.chunks_mut(l).enumerate() {
                    let b = self.b[o];
                    for v in row {
                        *v += b;
                    }
                }
            }
        });
        y
    }

    /// Backward. Returns `dx`; accumulates `dw`/`db` when sinks are given.
    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        mut dw: Option<&mut [f32]>,
        mut db: Option<&mut [f32]>,
    ) -> Tensor {
        let [n, c, h, w] = x.shape();
        let [_, _, oh, ow] = self.out_shape(n, h, w);
        assert_eq!(dy.shape(), [n, self.oc, oh, ow]);
        let k = self.ic * self.kh * self.kw;
        let l = oh * ow;

        let mut dx = Tensor::zeros([n, c, h, w]);
        let chunks = sample_chunks(n);

        // Per-chunk partial dw/db, reduced in chunk order below.
        struct Part {
            dw: Vec<f32>,
            db: Vec<f32>,
        }
        let want_w = dw.is_some();
        let want_b = db.is_some();

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

        let parts: Vec<Part> = chunks
            .par_iter()
            .zip(dx_chunks)
            .map(|(range, dx_slice)| {
                let mut part = Part {
                    dw: if want_w { vec![0.0; self.oc * k] } else { Vec::new() },
                    db: if want_b { vec![0.0; self.oc] } else { Vec::new() },
                };
                let sl = c * h * w;
                let mut col = vec![0.0f32; k * l];
                let mut dcol = vec![0.0f32; k * l];
                for (local, i) in range.clone().enumerate() {
                    let dys = dy.sample(i);
                    if want_w {
                        im2col(
                            x.sample(i),
                            c,
                            h,
                            w,
                            self.kh,
                            self.kw,
                            self.stride,
                            self.pad,
                            oh,
                            ow,
                            &mut col,
                        );
                        // dw += dy_i [oc, l] x col^T [l, k]
                        gemm(self.oc, l, k, 1.0, dys, false, &col, true, 1.0, &mut part.dw);
                    }
                    if want_b {
                        for (o, row) in dys.chunks(l).enumerate() {
                            part.db[o] += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
                        }
                    }
                    // dcol = w^T [k, oc] x dy_i [oc, l]
                    gemm(k, self.oc, l, 1.0, &self.w, true, dys, false, 0.0, &mut dcol);
                    col2im(
                        &dcol,
                        c,
                        h,
                        w,
                        self.kh,
                        self.kw,
                        self.stride,
                        self.pad,
                        oh,
                        ow,
                        &mut dx_slice[local * sl..(local + 1) * sl],
                    );
                }
                part
            })
            .collect();

        for part in parts {
            if let Some(dw) = dw.as_deref_mut() {
                for (d, s) in dw.iter_mut().zip(part.dw.iter()) {
                    *d += s;
                }
            }
            if let Some(db) = db.as_deref_mut() {
                for (d, s) in db.iter_mut().zip(part.db.iter()) {
                    *d += s;
                }
            }
        }
        dx
    }
}

impl Deconv2d {
    pub fn new(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        Deconv2d {
            w: super::gaussian_init(ic * oc * k * k, 0.02, rng),
            b: vec![0.0; oc],
            oc,
            ic,
            kh: k,
            kw: k,
            stride,
            pad,
        }
    }

    pub fn out_shape(&self, n: usize, h: usize, w: usize) -> [usize; 4] {
        [
            n,
            self.oc,
            deconv_out_dim(h, self.kh, self.stride, self.pad),
            deconv_out_dim(w, self.kw, self.stride, self.pad),
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.ic);
        let [_, _, oh, ow] = self.out_shape(n, h, w);
        let kk = self.oc * self.kh * self.kw;
        let l = h * w;
        let mut y = Tensor::zeros([n, self.oc, oh, ow]);
        let y_samples: Vec<&mut [f32]> = {
            let sl = y.sample_len();
            y.data_mut().chunks_mut(sl).collect()
        };
        y_samples.into_par_iter().enumerate().for_each(|(i, ys)| {
            let mut col = vec![0.0f32; kk * l];
            // col = w^T [kk, ic] x x_i [ic, l]
            gemm(kk, self.ic, l, 1.0, &self.w, true, x.sample(i), false, 0.0, &mut col);
            col2im(
                &col, self.oc, oh, ow, self.kh, self.kw, self.stride, self.pad, h, w, ys,
            );
            for (o, row) in ys.chunks_mut(oh * ow).enumerate() {
                let b = self.b[o];
                for v in row {
                    *v += b;
                }
            }
        });
        y
    }

    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        mut dw: Option<&mut [f32]>,
        mut db: Option<&mut [f32]>,
    ) -> Tensor {
        let [n, c, h, w] = x.shape();
        let [_, _, oh, ow] = self.out_shape(n, h, w);
        assert_eq!(dy.shape(), [n, self.oc, oh, ow]);
        let kk = self.oc * self.kh * self.kw;
        let l = h * w;
        let mut dx = Tensor::zeros([n, c, h, w]);
        let chunks = sample_chunks(n);

        struct Part {
            dw: Vec<f32>,
            db: Vec<f32>,
        }
        let want_w = dw.is_some();
        let want_b = db.is_some();

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

        let parts: Vec<Part> = chunks
            .par_iter()
            .zip(dx_chunks)
            .map(|(range, dx_slice)| {
                let mut part = Part {
                    dw: if want_w { vec![0.0; self.ic * kk] } else { Vec::new() },
                    db: if want_b { vec![0.0; self.oc] } else { Vec::new() },
                };
                let sl = c * h * w;
                let mut dcol = vec![0.0f32; kk * l];
                for (local, i) in range.clone().enumerate() {
                    let dys = dy.sample(i);
                    // dcol = im2col(dy_i) with the same geometry
                    im2col(
                        dys, self.oc, oh, ow, self.kh, self.kw, self.stride, self.pad, h, w,
                        &mut dcol,
                    );
                    // dx_i = w [ic, kk] x dcol [kk, l]
                    gemm(
                        self.ic,
                        kk,
                        l,
                        1.0,
                        &self.w,
                        false,
                        &dcol,
                        false,
                        0.0,
                        &mut dx_slice[local * sl..(local + 1) * sl],
                    );
                    if want_w {
                        // dw += x_i [ic, l] x dcol^T [l, kk]
                        gemm(
                            self.ic,
                            l,
                            kk,
                            1.0,
                            x.sample(i),
                            false,
                            &dcol,
                            true,
                            1.0,
                            &mut part.dw,
                        );
                    }
                    if want_b {
                        for (o, row) in dys.chunks(oh * ow).enumerate() {
                            part.db[o] += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
                        }
                    }
                }
                part
            })
            .collect();

        for part in parts {
            if let Some(dw) = dw.as_deref_mut() {
                for (d, s) in dw.iter_mut().zip(part.dw.iter()) {
                    *d += s;
                }
            }
            if let Some(db) = db.as_deref_mut() {
                for (d, s) in db.iter_mut().zip(part.db.iter()) {
                    *d += s;
                }
            }
        }
        dx
    }
}
