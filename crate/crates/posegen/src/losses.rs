//! Objective terms for the three players.
//!
//! The realism objective is the Wasserstein form with a gradient penalty;
//! the saturating-log form is available behind [`AdvKind`] for ablation.
//! Pose supervision is cross-entropy on the critic's class head; the
//! pose-elimination pressure on the encoder is cross-entropy against the
//! uniform distribution, which bottoms out at `ln N` exactly when the pose
//! critic is maximally uncertain.
//!
//! Each `*_grad` companion returns the loss together with the gradient at
//! its tensor argument, so training steps assemble gradients without a
//! tape. All reductions accumulate in f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::Discriminator;
use crate::nn::GradStore;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Floor applied to softmax probabilities before `log` so one-hot
/// predictions stay finite.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cls: f32,
    pub lambda_rec: f32,
    pub lambda_pose: f32,
    pub lambda_gp: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cls: 1.0,
            lambda_rec: 10.0,
            lambda_pose: 2.0,
            lambda_gp: 10.0,
        }
    }
}

/// Which adversarial objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvKind {
    #[default]
    Wasserstein,
    /// The saturating log form; kept for ablation only.
    SaturatingLog,
}

// ---------------------------------------------------------------------------
// Adversarial terms (Wasserstein realization)
// ---------------------------------------------------------------------------

/// Critic loss: `-mean(real) + mean(fake)`; decreases as the critic
/// separates real from fake.
pub fn adv_d(real_scores: &Tensor, fake_scores: &Tensor) -> Result<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::invalid("adversarial loss over an empty batch"));
    }
    Ok(-real_scores.mean() + fake_scores.mean())
}

/// Generator realism loss: `-mean(fake)`.
pub fn adv_g(fake_scores: &Tensor) -> Result<f64> {
    if fake_scores.is_empty() {
        return Err(Error::invalid("adversarial loss over an empty batch"));
    }
    Ok(-fake_scores.mean())
}

/// `adv_g` with the gradient at the fake score map.
pub fn adv_g_grad(fake_scores: &Tensor) -> Result<(f64, Tensor)> {
    let loss = adv_g(fake_scores)?;
    let g = -1.0 / fake_scores.len() as f32;
    Ok((loss, Tensor::filled(fake_scores.shape(), g)))
}

/// Gradients of `adv_d` at the two score maps.
pub fn adv_d_grads(real_scores: &Tensor, fake_scores: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let loss = adv_d(real_scores, fake_scores)?;
    let gr = -1.0 / real_scores.len() as f32;
    let gf = 1.0 / fake_scores.len() as f32;
    Ok((
        loss,
        Tensor::filled(real_scores.shape(), gr),
        Tensor::filled(fake_scores.shape(), gf),
    ))
}

/// Realism pressure on decimal-pose syntheses in the continuous phase.
/// Functionally identical to [`adv_g`]; kept separate because it is
/// logged and scheduled differently.
pub fn style_consistency(fake_scores_at_decimal_pose: &Tensor) -> Result<f64> {
    adv_g(fake_scores_at_decimal_pose)
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy heads
// ---------------------------------------------------------------------------

/// Batch softmax over `[n, k, 1, 1]` logits, probabilities floored.
pub fn softmax(logits: &Tensor) -> Tensor {
    let n = logits.n();
    let k = logits.c();
    assert_eq!(logits.sample_len(), k, "logits must be [n, k, 1, 1]");
    let mut out = Tensor::zeros(logits.shape());
    for i in 0..n {
        let row = logits.sample(i);
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        for &v in row {
            denom += ((v - max) as f64).exp();
        }
        let dst = out.sample_mut(i);
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (((v - max) as f64).exp() / denom) as f32;
        }
    }
    out
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    if logits.n() != labels.len() {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.n()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.c()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            logits.c()
        )));
    }
    Ok(())
}

/// Cross-entropy `-log p[label]`, mean over the batch. The pose
/// classification loss on real images, and the same form scores fakes
/// against their target pose and trains the pose critic.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let p = softmax(logits);
    let mut acc = 0.0f64;
    for (i, &l) in labels.iter().enumerate() {
        acc -= (p.sample(i)[l] as f64).max(PROB_FLOOR).ln();
    }
    Ok(acc / labels.len() as f64)
}

/// Cross-entropy with the gradient at the logits:
/// `(softmax - onehot) / n`.
pub fn cross_entropy_grad(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    check_labels(logits, labels)?;
    let p = softmax(logits);
    let n = labels.len();
    let mut acc = 0.0f64;
    let mut grad = p.clone();
    for (i, &l) in labels.iter().enumerate() {
        acc -= (p.sample(i)[l] as f64).max(PROB_FLOOR).ln();
        let row = grad.sample_mut(i);
        row[l] -= 1.0;
        for v in row.iter_mut() {
            *v /= n as f32;
        }
    }
    Ok((acc / n as f64, grad))
}

/// Pose classification of real images (critic head). Alias of
/// [`cross_entropy`] under its role name.
pub fn cls_real(pose_logits: &Tensor, true_labels: &[usize]) -> Result<f64> {
    cross_entropy(pose_logits, true_labels)
}

/// Pose classification of synthesized images against their target pose.
pub fn cls_fake(pose_logits_of_fake: &Tensor, target_labels: &[usize]) -> Result<f64> {
    cross_entropy(pose_logits_of_fake, target_labels)
}

/// Pose-critic training loss on canonical features of real images.
pub fn pose_elim_p(probe_logits: &Tensor, true_labels: &[usize]) -> Result<f64> {
    cross_entropy(probe_logits, true_labels)
}

/// Encoder-side pose elimination: cross-entropy against the uniform
/// distribution, `-(1/N) sum_i log p_i`, mean over the batch. Bounded
/// below by `ln N`, attained exactly at the uniform prediction.
pub fn pose_elim_g(probe_logits: &Tensor) -> f64 {
    let p = softmax(probe_logits);
    let n = probe_logits.n();
    let k = probe_logits.c();
    let mut acc = 0.0f64;
    for i in 0..n {
        for &v in p.sample(i) {
            acc -= (v as f64).max(PROB_FLOOR).ln();
        }
    }
    acc / (n * k) as f64
}

/// [`pose_elim_g`] with the gradient at the logits:
/// `(softmax - 1/N) / n`.
pub fn pose_elim_g_grad(probe_logits: &Tensor) -> (f64, Tensor) {
    let loss = pose_elim_g(probe_logits);
    let n = probe_logits.n();
    let k = probe_logits.c();
    let mut grad = softmax(probe_logits);
    let unif = 1.0 / k as f32;
    for v in grad.data_mut() {
        *v = (*v - unif) / n as f32;
    }
    (loss, grad)
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Cycle reconstruction: mean absolute difference.
pub fn reconstruction(x: &Tensor, x_cycled: &Tensor) -> f64 {
    assert_eq!(x.shape(), x_cycled.shape());
    x.iter()
        .zip(x_cycled.iter())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / x.len() as f64
}

/// Gradient at `x_cycled`: `sign(x_cycled - x) / len`.
pub fn reconstruction_grad(x: &Tensor, x_cycled: &Tensor) -> (f64, Tensor) {
    let loss = reconstruction(x, x_cycled);
    let scale = 1.0 / x.len() as f32;
    let mut grad = Tensor::zeros(x.shape());
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(x.iter()).zip(x_cycled.iter()) {
        *g = (b - a).signum() * scale;
    }
    (loss, grad)
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

/// Interpolate uniformly per sample between real and fake batches.
pub fn interpolate_batches(real: &Tensor, fake: &Tensor, rng: &mut Rng) -> Tensor {
    assert_eq!(real.shape(), fake.shape(), "gradient penalty batch shapes");
    let mut out = real.clone();
    for i in 0..real.n() {
        let u = rng.uniform() as f32;
        let dst = out.sample_mut(i);
        for (d, &f) in dst.iter_mut().zip(fake.sample(i)) {
            *d = u * *d + (1.0 - u) * f;
        }
    }
    out
}

/// `mean((|grad_x sum(src(x_hat))| - 1)^2)` over the batch.
pub fn gradient_penalty(d: &Discriminator, xhat: &Tensor) -> f64 {
    gradient_penalty_impl(d, xhat, None)
}

/// Gradient penalty together with its parameter gradients, scaled by
/// `scale` (the penalty weight), accumulated into `grads`.
pub fn gradient_penalty_with_grads(
    d: &Discriminator,
    xhat: &Tensor,
    grads: &mut GradStore,
    scale: f32,
) -> f64 {
    gradient_penalty_impl(d, xhat, Some((grads, scale)))
}

fn gradient_penalty_impl(
    d: &Discriminator,
    xhat: &Tensor,
    grads: Option<(&mut GradStore, f32)>,
) -> f64 {
    let n = xhat.n();
    let (_src, _logits, cache) = d.forward_cached(xhat);
    let g = d.input_gradient(&cache, xhat.shape());

    let sl = g.sample_len();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let s: f64 = g.sample(i).iter().map(|&v| (v as f64) * (v as f64)).sum();
        norms.push(s.sqrt());
    }
    let gp = norms.iter().map(|&nm| (nm - 1.0) * (nm - 1.0)).sum::<f64>() / n as f64;

    if let Some((store, scale)) = grads {
        // v_i = scale * (2/n) * (|g_i| - 1)/|g_i| * g_i; then
        // d(gp)/d(theta) = sum_i d/d(theta) <v_i, grad_x sum(src(x_i))>,
        // a directional (tangent) pass through the piecewise-linear critic.
        let mut v = g;
        for i in 0..n {
            let nm = norms[i];
            let coef = if nm > 0.0 {
                (scale as f64) * 2.0 * (nm - 1.0) / (nm * n as f64)
            } else {
                0.0
            };
            for val in &mut v.data_mut()[i * sl..(i + 1) * sl] {
                *val = ((*val as f64) * coef) as f32;
            }
        }
        d.jvp_param_grads(&cache, &v, store);
    }
    gp
}

// ---------------------------------------------------------------------------
// Totals
// ---------------------------------------------------------------------------

/// Scalar parts of the generator objective.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeneratorParts {
    pub adv_g: f64,
    /// `None` on decimal-pose steps, where the class head has no target.
    pub cls_fake: Option<f64>,
    pub reconstruction: f64,
    pub pose_elim_g: f64,
}

/// Scalar parts of the critic objective.
#[derive(Debug, Clone, Copy, Default)]
pub struct CriticParts {
    pub adv_d: f64,
    pub gradient_penalty: f64,
    pub cls_real: f64,
}

pub fn total_g(weights: &LossWeights, parts: &GeneratorParts) -> f64 {
    parts.adv_g
        + weights.lambda_cls as f64 * parts.cls_fake.unwrap_or(0.0)
        + weights.lambda_rec as f64 * parts.reconstruction
        + weights.lambda_pose as f64 * parts.pose_elim_g
}

/// `lambda_pose` is scheduled over training, so it is passed explicitly.
pub fn total_g_scheduled(weights: &LossWeights, lambda_pose: f32, parts: &GeneratorParts) -> f64 {
    parts.adv_g
        + weights.lambda_cls as f64 * parts.cls_fake.unwrap_or(0.0)
        + weights.lambda_rec as f64 * parts.reconstruction
        + lambda_pose as f64 * parts.pose_elim_g
}

pub fn total_d(weights: &LossWeights, parts: &CriticParts) -> f64 {
    parts.adv_d
        + weights.lambda_gp as f64 * parts.gradient_penalty
        + weights.lambda_cls as f64 * parts.cls_real
}

pub fn total_p(pose_elim_p: f64) -> f64 {
    pose_elim_p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::ArchConfig;
    use crate::nn::{Conv2d, Layer, Sequential};

    fn scores(vals: &[f32]) -> Tensor {
        Tensor::from_vec([vals.len(), 1, 1, 1], vals.to_vec())
    }

    #[test]
    fn adversarial_arithmetic() {
        // real mean 1.0, fake mean 0.25
        let real = scores(&[1.0, 1.0]);
        let fake = scores(&[0.5, 0.0]);
        assert!((adv_d(&real, &fake).unwrap() - (-0.75)).abs() < 1e-9);
        assert!((adv_g(&fake).unwrap() - (-0.25)).abs() < 1e-9);
        // identical scores cancel
        assert_eq!(adv_d(&real, &real).unwrap(), 0.0);
        // empty batch rejected
        assert!(adv_d(&Tensor::zeros([0, 1, 1, 1]), &fake).is_err());
    }

    #[test]
    fn style_consistency_equals_adv_g() {
        let fake = scores(&[0.3, -0.1, 0.6]);
        assert_eq!(
            style_consistency(&fake).unwrap(),
            adv_g(&fake).unwrap()
        );
    }

    #[test]
    fn cross_entropy_closed_forms() {
        // uniform over 6 -> ln 6
        let logits = Tensor::zeros([1, 6, 1, 1]);
        let ce = cross_entropy(&logits, &[3]).unwrap();
        assert!((ce - 6.0f64.ln()).abs() < 1e-6, "{ce}");

        // probability ~1 on the true label -> ~0
        let mut hot = Tensor::zeros([1, 6, 1, 1]);
        hot.data_mut()[2] = 60.0;
        assert!(cross_entropy(&hot, &[2]).unwrap() < 1e-6);

        // probability 0.5 on the true label -> ln 2
        let mut half = Tensor::zeros([1, 2, 1, 1]);
        half.data_mut()[0] = 0.0;
        half.data_mut()[1] = 0.0;
        let ce = cross_entropy(&half, &[0]).unwrap();
        assert!((ce - 2.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = Tensor::zeros([1, 6, 1, 1]);
        assert!(cross_entropy(&logits, &[6]).is_err());
        assert!(cross_entropy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn uniform_target_loss_bounds() {
        // uniform prediction, N=6 -> exactly ln 6
        let logits = Tensor::zeros([2, 6, 1, 1]);
        assert!((pose_elim_g(&logits) - 6.0f64.ln()).abs() < 1e-6);

        // one-hot prediction -> large but finite (prob floor)
        let mut hot = Tensor::zeros([1, 6, 1, 1]);
        hot.data_mut()[0] = 1000.0;
        let v = pose_elim_g(&hot);
        assert!(v.is_finite());
        assert!(v > 6.0f64.ln());

        // N=1 -> 0 for any logits
        let one = Tensor::from_vec([3, 1, 1, 1], vec![5.0, -2.0, 0.3]);
        assert_eq!(pose_elim_g(&one), 0.0);
    }

    #[test]
    fn uniform_target_loss_is_bounded_below_by_ln_n() {
        let mut rng = Rng::seed_from(77);
        for _ in 0..2000 {
            let logits = Tensor::from_vec(
                [1, 6, 1, 1],
                (0..6).map(|_| (rng.normal() * 3.0) as f32).collect(),
            );
            assert!(pose_elim_g(&logits) >= 6.0f64.ln() - 1e-6);
        }
    }

    #[test]
    fn reconstruction_arithmetic() {
        let a = Tensor::filled([1, 3, 2, 2], -1.0);
        let b = Tensor::filled([1, 3, 2, 2], 1.0);
        assert_eq!(reconstruction(&a, &b), 2.0);
        assert_eq!(reconstruction(&a, &a), 0.0);

        // half the pixels differ by 1
        let mut c = a.clone();
        for v in c.data_mut().iter_mut().take(6) {
            *v += 1.0;
        }
        assert_eq!(reconstruction(&a, &c), 0.5);
        // symmetry
        assert_eq!(reconstruction(&c, &a), 0.5);
    }

    #[test]
    fn totals_compose() {
        let w = LossWeights {
            lambda_cls: 1.0,
            lambda_rec: 10.0,
            lambda_pose: 1.0,
            lambda_gp: 10.0,
        };
        let zero = GeneratorParts::default();
        assert_eq!(total_g(&w, &zero), 0.0);

        let parts = GeneratorParts {
            adv_g: -0.25,
            cls_fake: Some(2.0f64.ln()),
            reconstruction: 0.5,
            pose_elim_g: 6.0f64.ln(),
        };
        let expected = -0.25 + 2.0f64.ln() + 5.0 + 6.0f64.ln();
        assert!((total_g(&w, &parts) - expected).abs() < 1e-12);
        assert!((expected - 7.2349).abs() < 1e-4);

        // lambda_pose = 0 removes the pose term
        let no_pose = total_g_scheduled(&w, 0.0, &parts);
        assert!((no_pose - (expected - 6.0f64.ln())).abs() < 1e-12);
    }

    /// A critic computing `sum(x)` has an all-ones input gradient, so the
    /// penalty is `(sqrt(h*w*3) - 1)^2` in closed form.
    #[test]
    fn gradient_penalty_closed_form_sum_critic() {
        // trunk empty; src head = 1x1 conv with all-ones kernel, no bias.
        let mut src = Conv2d::new(3, 1, 1, 1, 0, &mut Rng::seed_from(1));
        src.w = vec![1.0; 3];
        src.b = vec![0.0];
        let cls = Conv2d::new_rect(3, 6, 64, 64, 1, 0, &mut Rng::seed_from(2));
        let d = Discriminator::from_parts(Sequential::new(vec![]), src, cls, 64);
        let xhat = Tensor::filled([2, 3, 64, 64], 0.1);
        let gp = gradient_penalty(&d, &xhat);
        let expected = {
            let n = (64.0f64 * 64.0 * 3.0).sqrt();
            (n - 1.0) * (n - 1.0)
        };
        assert!((gp - expected).abs() < 1e-3, "gp {gp} expected {expected}");
        // frozen value of the closed form
        assert!((expected - 12067.2975).abs() < 1e-3);
    }

    /// A critic whose input gradient has unit norm gives zero penalty.
    #[test]
    fn gradient_penalty_zero_at_unit_norm() {
        let mut src = Conv2d::new(3, 1, 1, 1, 0, &mut Rng::seed_from(3));
        // gradient of sum = sqrt(1/(h*w*3)) per element -> norm 1
        let hw3 = (4.0f64 * 4.0 * 3.0).sqrt();
        src.w = vec![(1.0 / hw3) as f32; 3];
        src.b = vec![0.0];
        let cls = Conv2d::new_rect(3, 6, 4, 4, 1, 0, &mut Rng::seed_from(4));
        let d = Discriminator::from_parts(Sequential::new(vec![]), src, cls, 4);
        let xhat = Tensor::filled([3, 3, 4, 4], -0.2);
        let gp = gradient_penalty(&d, &xhat);
        assert!(gp.abs() < 1e-9, "gp {gp}");
    }

    /// Parameter gradients of the penalty against central finite
    /// differences on a tiny two-layer critic.
    #[test]
    fn gradient_penalty_param_grads_match_finite_differences() {
        let mut rng = Rng::seed_from(5);
        let arch = ArchConfig::small(8, 1, 2);
        let d = Discriminator::init(&arch, &mut rng).unwrap();
        let xhat = Tensor::from_vec(
            [2, 3, 8, 8],
            (0..2 * 3 * 64).map(|_| (rng.uniform() as f32) - 0.5).collect(),
        );
        let mut store = GradStore::for_sizes(&d.blob_sizes());
        let gp0 = gradient_penalty_with_grads(&d, &xhat, &mut store, 1.0);
        assert!(gp0.is_finite());

        // finite differences over a sample of weight coordinates
        let eps = 1e-3f32;
        let names = d.blob_names();
        for (bi, name) in names.iter().enumerate() {
            if name.ends_with(".b") {
                // biases receive no penalty gradient (piecewise-linear critic)
                assert!(
                    store.blobs[bi].iter().all(|&v| v == 0.0),
                    "bias blob {name} should have zero penalty gradient"
                );
                continue;
            }
            let blob_len = store.blobs[bi].len();
            let step = (blob_len / 7).max(1);
            for wi in (0..blob_len).step_by(step) {
                let mut dp = d.clone();
                dp.params_mut()[bi][wi] += eps;
                let up = gradient_penalty(&dp, &xhat);
                let mut dm = d.clone();
                dm.params_mut()[bi][wi] -= eps;
                let dn = gradient_penalty(&dm, &xhat);
                let fd = (up - dn) / (2.0 * eps as f64);
                let an = store.blobs[bi][wi] as f64;
                assert!(
                    (fd - an).abs() / (fd.abs() + an.abs()).max(1.0) < 2e-2,
                    "{name}[{wi}]: fd {fd} an {an}"
                );
            }
        }
    }

    #[test]
    fn interpolation_lies_between_batches() {
        let real = Tensor::filled([4, 3, 2, 2], 1.0);
        let fake = Tensor::filled([4, 3, 2, 2], -1.0);
        let mut rng = Rng::seed_from(6);
        let x = interpolate_batches(&real, &fake, &mut rng);
        assert!(x.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        // each sample is a single blend factor
        for i in 0..4 {
            let s = x.sample(i);
            assert!(s.iter().all(|&v| (v - s[0]).abs() < 1e-6));
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = Rng::seed_from(7);
        let logits = Tensor::from_vec(
            [2, 4, 1, 1],
            (0..8).map(|_| rng.normal() as f32).collect(),
        );
        let labels = vec![1usize, 3];
        let (_, grad) = cross_entropy_grad(&logits, &labels).unwrap();
        let eps = 1e-3f32;
        for i in 0..8 {
            let mut lp = logits.clone();
            lp.data_mut()[i] += eps;
            let mut lm = logits.clone();
            lm.data_mut()[i] -= eps;
            let fd = (cross_entropy(&lp, &labels).unwrap() - cross_entropy(&lm, &labels).unwrap())
                / (2.0 * eps as f64);
            assert!((fd - grad.data()[i] as f64).abs() < 1e-4);
        }

        let (_, grad) = pose_elim_g_grad(&logits);
        for i in 0..8 {
            let mut lp = logits.clone();
            lp.data_mut()[i] += eps;
            let mut lm = logits.clone();
            lm.data_mut()[i] -= eps;
            let fd = (pose_elim_g(&lp) - pose_elim_g(&lm)) / (2.0 * eps as f64);
            assert!((fd - grad.data()[i] as f64).abs() < 1e-4);
        }
    }
}
