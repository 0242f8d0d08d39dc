//! The three parameterized function families: the eliminate-add generator,
//! the dual-head critic, and the pose classifier used both as the
//! adversarial pose critic on canonical features and as a standalone probe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{Activation, GradSlice, LayerCache, SeqCache};
use crate::nn::{Conv2d, Deconv2d, GradStore, InstanceNorm, Layer, ResBlock, Sequential};
use crate::pose::{encode_pose_mask_with, MaskSpec, PoseTarget, PoseVocabulary};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f32 = 0.01;

/// Architecture hyperparameters shared by all three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Input image side length; must be divisible by 4.
    pub image_size: usize,
    /// Generator stem width; canonical features carry `4 * base_width`
    /// channels. 64 reproduces the full-scale stack (256-channel features,
    /// 2048-wide critic); smaller widths scale every layer proportionally.
    pub base_width: usize,
    /// Number of discrete poses (the classification head size).
    pub n_discrete: usize,
    /// Pose mask channel layout.
    pub mask: MaskSpec,
    /// Keep the instance norm between the generator's final conv and tanh.
    pub final_norm: bool,
}

impl ArchConfig {
    pub fn small(image_size: usize, base_width: usize, n_discrete: usize) -> Self {
        ArchConfig {
            image_size,
            base_width,
            n_discrete,
            mask: MaskSpec::default(),
            final_norm: true,
        }
    }

    pub fn full_scale(image_size: usize, n_discrete: usize) -> Self {
        Self::small(image_size, 64, n_discrete)
    }

    pub fn feature_channels(&self) -> usize {
        4 * self.base_width
    }

    pub fn feature_side(&self) -> usize {
        self.image_size / 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % 4 != 0 || self.image_size < 8 {
            return Err(Error::invalid(format!(
                "image_size {} must be >= 8 and divisible by 4 (two stride-2 stages)",
                self.image_size
            )));
        }
        if self.base_width == 0 {
            return Err(Error::invalid("base_width must be >= 1"));
        }
        if self.n_discrete == 0 {
            return Err(Error::invalid("n_discrete must be >= 1"));
        }
        Ok(())
    }
}

fn gen_res_block(c: usize, rng: &mut Rng) -> Layer {
    Layer::Res(ResBlock {
        body: Sequential::new(vec![
            Layer::Conv(Conv2d::new(c, c, 3, 1, 1, rng)),
            Layer::Norm(InstanceNorm::new(c)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(c, c, 3, 1, 1, rng)),
            Layer::Norm(InstanceNorm::new(c)),
        ]),
        post: Activation::Relu,
    })
}

fn cls_res_block(c: usize, rng: &mut Rng) -> Layer {
    Layer::Res(ResBlock {
        body: Sequential::new(vec![
            Layer::Conv(Conv2d::new(c, c, 3, 1, 1, rng)),
            Layer::Leaky(LEAKY_SLOPE),
            Layer::Conv(Conv2d::new(c, c, 3, 1, 1, rng)),
        ]),
        post: Activation::Leaky(LEAKY_SLOPE),
    })
}

/// Eliminate-add generator. `encoder` strips pose into a canonical
/// feature map; `decoder` consumes the features concatenated with a pose
/// mask and renders the target view.
#[derive(Debug, Clone)]
pub struct Generator {
    pub encoder: Sequential,
    pub decoder: Sequential,
    pub arch: ArchConfig,
}

pub struct GeneratorCache {
    pub encoder: SeqCache,
    pub decoder: SeqCache,
    pub features: Tensor,
    pub mask_channels: usize,
}

impl Generator {
    pub fn init(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let w = arch.base_width;
        let encoder = Sequential::new(vec![
            Layer::Conv(Conv2d::new(3, w, 7, 1, 3, rng)),
            Layer::Norm(InstanceNorm::new(w)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(w, 2 * w, 4, 2, 1, rng)),
            Layer::Norm(InstanceNorm::new(2 * w)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(2 * w, 4 * w, 4, 2, 1, rng)),
            Layer::Norm(InstanceNorm::new(4 * w)),
            Layer::Relu,
            gen_res_block(4 * w, rng),
            gen_res_block(4 * w, rng),
            gen_res_block(4 * w, rng),
        ]);
        let n3d = arch.mask.n3d();
        let mut decoder_layers = vec![
            Layer::Conv(Conv2d::new(4 * w + n3d, 4 * w, 3, 1, 1, rng)),
            Layer::Norm(InstanceNorm::new(4 * w)),
            Layer::Relu,
        ];
        for _ in 0..5 {
            decoder_layers.push(gen_res_block(4 * w, rng));
        }
        decoder_layers.push(Layer::Deconv(Deconv2d::new(4 * w, 2 * w, 4, 2, 1, rng)));
        decoder_layers.push(Layer::Norm(InstanceNorm::new(2 * w)));
        decoder_layers.push(Layer::Relu);
        decoder_layers.push(Layer::Deconv(Deconv2d::new(2 * w, w, 4, 2, 1, rng)));
        decoder_layers.push(Layer::Norm(InstanceNorm::new(w)));
        decoder_layers.push(Layer::Relu);
        decoder_layers.push(Layer::Conv(Conv2d::new(w, 3, 7, 1, 3, rng)));
        if arch.final_norm {
            decoder_layers.push(Layer::Norm(InstanceNorm::new(3)));
        }
        decoder_layers.push(Layer::Tanh);
        Ok(Generator {
            encoder,
            decoder: Sequential::new(decoder_layers),
            arch: arch.clone(),
        })
    }

    /// Assemble from explicit stacks; the finite-difference toys use this.
    pub fn from_parts(encoder: Sequential, decoder: Sequential, arch: ArchConfig) -> Self {
        Generator {
            encoder,
            decoder,
            arch,
        }
    }

    /// Canonical (pose-stripped) features of a batch of images.
    pub fn encode(&self, images: &Tensor) -> Tensor {
        self.encoder.forward(images).0
    }

    pub fn encode_cached(&self, images: &Tensor) -> (Tensor, SeqCache) {
        self.encoder.forward(images)
    }

    /// Render features at the pose described by `mask` (`[1, n3d, fh, fw]`
    /// broadcast over the batch, or `[n, n3d, fh, fw]`).
    pub fn decode(&self, features: &Tensor, mask: &Tensor) -> Tensor {
        self.decode_cached(features, mask).0
    }

    pub fn decode_cached(&self, features: &Tensor, mask: &Tensor) -> (Tensor, SeqCache) {
        let mask = broadcast_mask(mask, features.n());
        assert_eq!(
            (mask.h(), mask.w()),
            (features.h(), features.w()),
            "pose mask spatial dims must match features"
        );
        let x = Tensor::concat_channels(features, &mask);
        self.decoder.forward(&x)
    }

    /// Full pose transformation `x -> y` at `target`.
    pub fn transform(
        &self,
        vocab: &PoseVocabulary,
        images: &Tensor,
        target: PoseTarget,
    ) -> Result<Tensor> {
        let (features, _) = self.encoder.forward(images);
        let mask = encode_pose_mask_with(
            vocab,
            target,
            features.h(),
            features.w(),
            &self.arch.mask,
        )?;
        Ok(self.decode(&features, &mask.data))
    }

    /// Per-sample targets (batch training uses a different target per image).
    pub fn transform_batch(
        &self,
        vocab: &PoseVocabulary,
        images: &Tensor,
        targets: &[PoseTarget],
    ) -> Result<Tensor> {
        let (features, _) = self.encoder.forward(images);
        let mask = batch_mask(vocab, targets, features.h(), features.w(), &self.arch.mask)?;
        Ok(self.decode(&features, &mask))
    }

    pub fn forward_cached(&self, images: &Tensor, mask: &Tensor) -> (Tensor, GeneratorCache) {
        let (features, enc_cache) = self.encoder.forward(images);
        let mask_b = broadcast_mask(mask, features.n());
        let x = Tensor::concat_channels(&features, &mask_b);
        let (out, dec_cache) = self.decoder.forward(&x);
        (
            out,
            GeneratorCache {
                encoder: enc_cache,
                decoder: dec_cache,
                features,
                mask_channels: mask_b.c(),
            },
        )
    }

    /// Backward through decoder and encoder. Returns the feature-level
    /// gradient contribution in case the caller wants to add more (the
    /// pose-critic path) before the encoder pass; when `extra_dfeatures`
    /// is given it is added to the decoder's contribution.
    pub fn backward(
        &self,
        cache: &GeneratorCache,
        d_out: &Tensor,
        extra_dfeatures: Option<&Tensor>,
        grads: Option<&mut GradStore>,
    ) -> Tensor {
        let n_enc = self.encoder.n_blobs();
        match grads {
            Some(store) => {
                let d_concat = self.decoder.backward(
                    &cache.decoder,
                    d_out,
                    Some(GradSlice {
                        store,
                        base: n_enc,
                        skip_bias: false,
                    }),
                );
                let (mut d_feat, _d_mask) =
                    d_concat.split_channels(d_concat.c() - cache.mask_channels);
                if let Some(extra) = extra_dfeatures {
                    d_feat.add_assign(extra);
                }
                self.encoder.backward(
                    &cache.encoder,
                    &d_feat,
                    Some(GradSlice {
                        store,
                        base: 0,
                        skip_bias: false,
                    }),
                )
            }
            None => {
                let d_concat = self.decoder.backward(&cache.decoder, d_out, None);
                let (mut d_feat, _d_mask) =
                    d_concat.split_channels(d_concat.c() - cache.mask_channels);
                if let Some(extra) = extra_dfeatures {
                    d_feat.add_assign(extra);
                }
                self.encoder.backward(&cache.encoder, &d_feat, None)
            }
        }
    }

    pub fn blob_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.encoder.blob_sizes(&mut sizes);
        self.decoder.blob_sizes(&mut sizes);
        sizes
    }

    pub fn blob_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.encoder.blob_names("g.enc", &mut names);
        self.decoder.blob_names("g.dec", &mut names);
        names
    }

    pub fn params(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::new();
        self.encoder.collect_params(&mut out);
        self.decoder.collect_params(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        self.encoder.collect_params_mut(&mut out);
        self.decoder.collect_params_mut(&mut out);
        out
    }
}

/// Expand a `[1, c, h, w]` mask to the batch size by repetition.
fn broadcast_mask(mask: &Tensor, n: usize) -> Tensor {
    if mask.n() == n {
        return mask.clone();
    }
    assert_eq!(mask.n(), 1, "mask batch must be 1 or match the image batch");
    let mut out = Tensor::zeros([n, mask.c(), mask.h(), mask.w()]);
    for i in 0..n {
        out.sample_mut(i).copy_from_slice(mask.sample(0));
    }
    out
}

/// Stack per-sample pose masks.
pub fn batch_mask(
    vocab: &PoseVocabulary,
    targets: &[PoseTarget],
    fh: usize,
    fw: usize,
    spec: &MaskSpec,
) -> Result<Tensor> {
    let mut samples = Vec::with_capacity(targets.len());
    for &t in targets {
        samples.push(encode_pose_mask_with(vocab, t, fh, fw, spec)?.data);
    }
    Ok(Tensor::stack(&samples))
}

/// Critic stride-2 depth for a given input side: halve while the map
/// stays >= 2 px, up to the full-scale six stages.
fn critic_depth(side: usize) -> usize {
    let mut depth = 0;
    let mut s = side;
    while s >= 2 && depth < 6 {
        s /= 2;
        depth += 1;
    }
    depth
}

/// PatchGAN-style critic with a realism map head and a pose logit head.
/// No normalization anywhere: the trunk stays piecewise-linear, which the
/// gradient penalty's second-order pass relies on.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub trunk: Sequential,
    pub src_head: Conv2d,
    pub cls_head: Conv2d,
    pub map_side: usize,
}

pub struct DiscriminatorCache {
    pub trunk: SeqCache,
    pub trunk_out: Tensor,
}

impl Discriminator {
    pub fn init(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let w = arch.base_width;
        let depth = critic_depth(arch.image_size);
        let mut layers = Vec::with_capacity(2 * depth);
        let mut ic = 3;
        let mut side = arch.image_size;
        for i in 0..depth {
            let oc = w << i;
            layers.push(Layer::Conv(Conv2d::new(ic, oc, 4, 2, 1, rng)));
            layers.push(Layer::Leaky(LEAKY_SLOPE));
            ic = oc;
            side /= 2;
        }
        let src_head = Conv2d::new(ic, 1, 3, 1, 1, rng);
        let cls_head = Conv2d::new_rect(ic, arch.n_discrete, side, side, 1, 0, rng);
        Ok(Discriminator {
            trunk: Sequential::new(layers),
            src_head,
            cls_head,
            map_side: side,
        })
    }

    pub fn from_parts(trunk: Sequential, src_head: Conv2d, cls_head: Conv2d, map_side: usize) -> Self {
        Discriminator {
            trunk,
            src_head,
            cls_head,
            map_side,
        }
    }

    /// Realism score map `[n, 1, s/64, s/64]` (or the adapted map) and pose
    /// logits `[n, n_discrete, 1, 1]`.
    pub fn score(&self, images: &Tensor) -> (Tensor, Tensor) {
        let (trunk_out, _) = self.trunk.forward(images);
        (
            self.src_head.forward(&trunk_out),
            self.cls_head.forward(&trunk_out),
        )
    }

    pub fn forward_cached(&self, images: &Tensor) -> (Tensor, Tensor, DiscriminatorCache) {
        let (trunk_out, trunk_cache) = self.trunk.forward(images);
        let src = self.src_head.forward(&trunk_out);
        let logits = self.cls_head.forward(&trunk_out);
        (
            src,
            logits,
            DiscriminatorCache {
                trunk: trunk_cache,
                trunk_out,
            },
        )
    }

    /// Backward from head gradients to the input. Accumulates parameter
    /// gradients when `grads` is given; `d_logits = None` skips the class
    /// head (fake batches train the realism head only).
    pub fn backward(
        &self,
        cache: &DiscriminatorCache,
        d_src: &Tensor,
        d_logits: Option<&Tensor>,
        grads: Option<&mut GradStore>,
    ) -> Tensor {
        let trunk_blobs = self.trunk.n_blobs();
        match grads {
            Some(store) => {
                let mut d_trunk = {
                    let (dw, db) = src_head_blobs(store, trunk_blobs);
                    self.src_head
                        .backward(&cache.trunk_out, d_src, Some(dw), Some(db))
                };
                if let Some(dl) = d_logits {
                    let (dw, db) = cls_head_blobs(store, trunk_blobs);
                    let d2 = self
                        .cls_head
                        .backward(&cache.trunk_out, dl, Some(dw), Some(db));
                    d_trunk.add_assign(&d2);
                }
                self.trunk.backward(
                    &cache.trunk,
                    &d_trunk,
                    Some(GradSlice {
                        store,
                        base: 0,
                        skip_bias: false,
                    }),
                )
            }
            None => {
                let mut d_trunk = self.src_head.backward(&cache.trunk_out, d_src, None, None);
                if let Some(dl) = d_logits {
                    let d2 = self.cls_head.backward(&cache.trunk_out, dl, None, None);
                    d_trunk.add_assign(&d2);
                }
                self.trunk.backward(&cache.trunk, &d_trunk, None)
            }
        }
    }

    /// Gradient of `sum(src map)` with respect to the input images. The
    /// first-order half of the gradient penalty.
    pub fn input_gradient(&self, cache: &DiscriminatorCache, batch_shape: [usize; 4]) -> Tensor {
        let [n, ..] = batch_shape;
        let ones = Tensor::filled([n, 1, self.map_side, self.map_side], 1.0);
        let d_trunk = self.src_head.backward(&cache.trunk_out, &ones, None, None);
        self.trunk.backward(&cache.trunk, &d_trunk, None)
    }

    /// Parameter gradient of `sum_i <v_i, grad_x sum(src(x_i))>` for fixed
    /// `v`, via a tangent (forward-mode) pass through the piecewise-linear
    /// trunk followed by a reverse pass over the tangent graph. Biases get
    /// no gradient: the input gradient of a piecewise-linear critic does
    /// not depend on them almost everywhere.
    pub fn jvp_param_grads(&self, cache: &DiscriminatorCache, v: &Tensor, store: &mut GradStore) {
        let (t_out, mixed_trunk) = self.trunk.tangent_forward(&cache.trunk, v);
        // src head tangent: conv without bias; its cache input is the tangent.
        let t_src = self.src_head.forward_no_bias(&t_out);
        let ones = Tensor::filled(t_src.shape(), 1.0);
        let trunk_blobs = self.trunk.n_blobs();
        let r_trunk = {
            let (dw, _db) = src_head_blobs(store, trunk_blobs);
            self.src_head.backward(&t_out, &ones, Some(dw), None)
        };
        self.trunk.backward(
            &mixed_trunk,
            &r_trunk,
            Some(GradSlice {
                store,
                base: 0,
                skip_bias: true,
            }),
        );
    }

    pub fn blob_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.trunk.blob_sizes(&mut sizes);
        sizes.push(self.src_head.w.len());
        sizes.push(self.src_head.b.len());
        sizes.push(self.cls_head.w.len());
        sizes.push(self.cls_head.b.len());
        sizes
    }

    pub fn blob_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.trunk.blob_names("d.trunk", &mut names);
        names.push("d.src.w".into());
        names.push("d.src.b".into());
        names.push("d.cls.w".into());
        names.push("d.cls.b".into());
        names
    }

    pub fn params(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::new();
        self.trunk.collect_params(&mut out);
        out.push(&self.src_head.w);
        out.push(&self.src_head.b);
        out.push(&self.cls_head.w);
        out.push(&self.cls_head.b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        self.trunk.collect_params_mut(&mut out);
        out.push(&mut self.src_head.w);
        out.push(&mut self.src_head.b);
        out.push(&mut self.cls_head.w);
        out.push(&mut self.cls_head.b);
        out
    }
}

fn src_head_blobs(store: &mut GradStore, trunk_blobs: usize) -> (&mut [f32], &mut [f32]) {
    let (lo, hi) = store.blobs.split_at_mut(trunk_blobs + 1);
    (&mut lo[trunk_blobs], &mut hi[0])
}

fn cls_head_blobs(store: &mut GradStore, trunk_blobs: usize) -> (&mut [f32], &mut [f32]) {
    let (lo, hi) = store.blobs.split_at_mut(trunk_blobs + 3);
    (&mut lo[trunk_blobs + 2], &mut hi[0])
}

/// Pose classifier: stride-2 leaky conv stack with one residual block,
/// ending in a logit head whose kernel covers the realized map. Instantiated
/// on canonical features (the adversarial pose critic) or on raw images
/// (the probe of the disentanglement check; at 64 px that form is the
/// full-scale six-stage stack).
#[derive(Debug, Clone)]
pub struct PoseClassifier {
    pub stack: Sequential,
}

impl PoseClassifier {
    pub fn init(
        in_channels: usize,
        in_side: usize,
        base_width: usize,
        n_discrete: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_side < 2 {
            return Err(Error::invalid(format!(
                "pose classifier needs input side >= 2, got {in_side}"
            )));
        }
        let mut layers = Vec::new();
        let mut ic = in_channels;
        let mut side = in_side;
        let mut downs = 0;
        while side >= 2 && downs < 6 {
            let oc = base_width << downs;
            layers.push(Layer::Conv(Conv2d::new(ic, oc, 4, 2, 1, rng)));
            layers.push(Layer::Leaky(LEAKY_SLOPE));
            ic = oc;
            side /= 2;
            downs += 1;
            if downs == 3 {
                layers.push(cls_res_block(ic, rng));
            }
        }
        if downs < 3 {
            layers.push(cls_res_block(ic, rng));
        }
        layers.push(Layer::Conv(Conv2d::new_rect(
            ic, n_discrete, side, side, 1, 0, rng,
        )));
        Ok(PoseClassifier {
            stack: Sequential::new(layers),
        })
    }

    pub fn from_parts(stack: Sequential) -> Self {
        PoseClassifier { stack }
    }

    /// Logits `[n, n_discrete, 1, 1]`.
    pub fn logits(&self, x: &Tensor) -> Tensor {
        self.stack.forward(x).0
    }

    pub fn forward_cached(&self, x: &Tensor) -> (Tensor, SeqCache) {
        self.stack.forward(x)
    }

    pub fn backward(
        &self,
        cache: &SeqCache,
        d_logits: &Tensor,
        grads: Option<&mut GradStore>,
    ) -> Tensor {
        match grads {
            Some(store) => self.stack.backward(
                cache,
                d_logits,
                Some(GradSlice {
                    store,
                    base: 0,
                    skip_bias: false,
                }),
            ),
            None => self.stack.backward(cache, d_logits, None),
        }
    }

    pub fn blob_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.stack.blob_sizes(&mut sizes);
        sizes
    }

    pub fn blob_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.stack.blob_names("p", &mut names);
        names
    }

    pub fn params(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::new();
        self.stack.collect_params(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        self.stack.collect_params_mut(&mut out);
        out
    }
}

/// Deterministically initialize the generator, critic, and pose critic.
pub fn init_networks(
    arch: &ArchConfig,
    rng: &mut Rng,
) -> Result<(Generator, Discriminator, PoseClassifier)> {
    arch.validate()?;
    let mut g_rng = rng.fork(0x47454e);
    let mut d_rng = rng.fork(0x444953);
    let mut p_rng = rng.fork(0x504f53);
    let g = Generator::init(arch, &mut g_rng)?;
    let d = Discriminator::init(arch, &mut d_rng)?;
    let p = PoseClassifier::init(
        arch.feature_channels(),
        arch.feature_side(),
        arch.base_width,
        arch.n_discrete,
        &mut p_rng,
    )?;
    Ok((g, d, p))
}

/// Hidden-layer input of the first decoder conv; shape checks call this.
pub fn decoder_input_channels(arch: &ArchConfig) -> usize {
    arch.feature_channels() + arch.mask.n3d()
}

/// Residual-cache access used by tests that need intermediate tensors.
pub fn cache_input(cache: &SeqCache, layer: usize) -> Option<&Tensor> {
    match cache.entries.get(layer) {
        Some(LayerCache::Plain(t)) => Some(t),
        Some(LayerCache::Res { input, .. }) => Some(input),
        None => None,
    }
}
