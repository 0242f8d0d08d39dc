//! Pose vocabulary, continuous yaw/pitch targets, and the spatial pose
//! mask fed to the generator.
//!
//! Discrete poses live on an integer grid (`n_yaw x n_pitch` anchors).
//! Labels enumerate the grid pitch-major: `label = pitch_idx * n_yaw +
//! yaw_idx`. Continuous targets interpolate between anchors, which is what
//! lets a trained generator render in-between viewpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseVocabulary {
    pub yaw_anchors: Vec<u32>,
    pub pitch_anchors: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseTarget {
    pub yaw: f32,
    pub pitch: f32,
}

/// How scalar pose coordinates spread over their mask channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskEncoding {
    /// The normalized coordinate replicated across all its channels.
    #[default]
    Replicate,
    /// Hat-function weights over evenly spaced channel anchors
    /// (a partition of unity; a soft one-hot).
    Barycentric,
}

/// Channel layout of the pose mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub k_yaw: usize,
    pub k_pitch: usize,
    pub encoding: MaskEncoding,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            k_yaw: 3,
            k_pitch: 3,
            encoding: MaskEncoding::Replicate,
        }
    }
}

impl MaskSpec {
    pub fn n3d(&self) -> usize {
        self.k_yaw + self.k_pitch
    }
}

/// Spatially constant multi-channel encoding of a pose target.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseMask {
    /// `[1, n3d, fh, fw]`, every channel constant, values in [0, 1].
    pub data: Tensor,
}

pub fn make_vocabulary(n_yaw: usize, n_pitch: usize) -> Result<PoseVocabulary> {
    if n_yaw == 0 || n_pitch == 0 {
        return Err(Error::invalid(format!(
            "pose grid must be non-empty, got {n_yaw} x {n_pitch}"
        )));
    }
    Ok(PoseVocabulary {
        yaw_anchors: (0..n_yaw as u32).collect(),
        pitch_anchors: (0..n_pitch as u32).collect(),
    })
}

impl PoseVocabulary {
    pub fn n_discrete(&self) -> usize {
        self.yaw_anchors.len() * self.pitch_anchors.len()
    }

    pub fn n_yaw(&self) -> usize {
        self.yaw_anchors.len()
    }

    pub fn n_pitch(&self) -> usize {
        self.pitch_anchors.len()
    }

    pub fn yaw_range(&self) -> (f32, f32) {
        (
            *self.yaw_anchors.first().unwrap() as f32,
            *self.yaw_anchors.last().unwrap() as f32,
        )
    }

    pub fn pitch_range(&self) -> (f32, f32) {
        (
            *self.pitch_anchors.first().unwrap() as f32,
            *self.pitch_anchors.last().unwrap() as f32,
        )
    }

    pub fn label_coords(&self, label: usize) -> Result<(u32, u32)> {
        if label >= self.n_discrete() {
            return Err(Error::invalid(format!(
                "pose label {label} out of range 0..{}",
                self.n_discrete()
            )));
        }
        let yaw = self.yaw_anchors[label % self.n_yaw()];
        let pitch = self.pitch_anchors[label / self.n_yaw()];
        Ok((yaw, pitch))
    }

    pub fn contains(&self, target: PoseTarget) -> bool {
        let (ylo, yhi) = self.yaw_range();
        let (plo, phi) = self.pitch_range();
        target.yaw >= ylo && target.yaw <= yhi && target.pitch >= plo && target.pitch <= phi
    }

    /// Validate invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.yaw_anchors.is_empty() || self.pitch_anchors.is_empty() {
            return Err(Error::validation("pose vocabulary has an empty axis"));
        }
        for axis in [&self.yaw_anchors, &self.pitch_anchors] {
            if !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::validation(
                    "pose anchors must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

pub fn label_to_target(vocab: &PoseVocabulary, label: usize) -> Result<PoseTarget> {
    let (yaw, pitch) = vocab.label_coords(label)?;
    Ok(PoseTarget {
        yaw: yaw as f32,
        pitch: pitch as f32,
    })
}

fn normalize(v: f32, lo: f32, hi: f32) -> f32 {
    if hi <= lo {
        0.0
    } else {
        (v - lo) / (hi - lo)
    }
}

/// Encode a pose target as a `[1, n3d, fh, fw]` mask with the default
/// 3+3 replicated channels.
pub fn encode_pose_mask(
    vocab: &PoseVocabulary,
    target: PoseTarget,
    fh: usize,
    fw: usize,
) -> Result<PoseMask> {
    encode_pose_mask_with(vocab, target, fh, fw, &MaskSpec::default())
}

pub fn encode_pose_mask_with(
    vocab: &PoseVocabulary,
    target: PoseTarget,
    fh: usize,
    fw: usize,
    spec: &MaskSpec,
) -> Result<PoseMask> {
    if fh == 0 || fw == 0 {
        return Err(Error::invalid("mask spatial dims must be >= 1"));
    }
    if !vocab.contains(target) {
        return Err(Error::invalid(format!(
            "pose target ({}, {}) outside anchor range",
            target.yaw, target.pitch
        )));
    }
    let (ylo, yhi) = vocab.yaw_range();
    let (plo, phi) = vocab.pitch_range();
    let ny = normalize(target.yaw, ylo, yhi);
    let np = normalize(target.pitch, plo, phi);

    let mut channels = Vec::with_capacity(spec.n3d());
    match spec.encoding {
        MaskEncoding::Replicate => {
            channels.extend(std::iter::repeat(ny).take(spec.k_yaw));
            channels.extend(std::iter::repeat(np).take(spec.k_pitch));
        }
        MaskEncoding::Barycentric => {
            channels.extend(hat_weights(ny, spec.k_yaw));
            channels.extend(hat_weights(np, spec.k_pitch));
        }
    }

    let mut data = Tensor::zeros([1, spec.n3d(), fh, fw]);
    let hw = fh * fw;
    for (ci, &v) in channels.iter().enumerate() {
        data.data_mut()[ci * hw..(ci + 1) * hw].fill(v);
    }
    Ok(PoseMask { data })
}

/// Hat-function weights of `v in [0,1]` over `k` evenly spaced anchors.
fn hat_weights(v: f32, k: usize) -> Vec<f32> {
    if k == 1 {
        return vec![1.0];
    }
    (0..k)
        .map(|i| {
            let center = i as f32 / (k - 1) as f32;
            (1.0 - (v - center).abs() * (k - 1) as f32).max(0.0)
        })
        .collect()
}

pub fn sample_decimal_pose(vocab: &PoseVocabulary, rng: &mut Rng) -> PoseTarget {
    let (ylo, yhi) = vocab.yaw_range();
    let (plo, phi) = vocab.pitch_range();
    PoseTarget {
        yaw: rng.range(ylo as f64, yhi as f64) as f32,
        pitch: rng.range(plo as f64, phi as f64) as f32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_enumerates_pitch_major() {
        let v = make_vocabulary(6, 1).unwrap();
        assert_eq!(v.n_discrete(), 6);
        assert_eq!(v.label_coords(2).unwrap(), (2, 0));

        let v = make_vocabulary(1, 1).unwrap();
        assert_eq!(v.n_discrete(), 1);
        assert_eq!(v.label_coords(0).unwrap(), (0, 0));

        let v = make_vocabulary(6, 3).unwrap();
        assert_eq!(v.n_discrete(), 18);
        assert_eq!(v.label_coords(7).unwrap(), (1, 1));
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(
            make_vocabulary(0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_vocabulary(3, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn label_to_target_hits_anchor_coordinates() {
        let v6 = make_vocabulary(6, 1).unwrap();
        assert_eq!(
            label_to_target(&v6, 0).unwrap(),
            PoseTarget { yaw: 0.0, pitch: 0.0 }
        );
        assert_eq!(
            label_to_target(&v6, 5).unwrap(),
            PoseTarget { yaw: 5.0, pitch: 0.0 }
        );
        let v63 = make_vocabulary(6, 3).unwrap();
        assert_eq!(
            label_to_target(&v63, 17).unwrap(),
            PoseTarget { yaw: 5.0, pitch: 2.0 }
        );
        assert!(label_to_target(&v6, 6).is_err());
    }

    #[test]
    fn mask_channels_hold_normalized_values() {
        let v = make_vocabulary(6, 1).unwrap();
        let m = encode_pose_mask(&v, PoseTarget { yaw: 0.0, pitch: 0.0 }, 16, 16).unwrap();
        assert_eq!(m.data.shape(), [1, 6, 16, 16]);
        assert!(m.data.data().iter().all(|&x| x == 0.0));

        let m = encode_pose_mask(&v, PoseTarget { yaw: 2.0, pitch: 0.0 }, 4, 4).unwrap();
        for ci in 0..3 {
            for i in 0..16 {
                assert!((m.data.data()[ci * 16 + i] - 0.4).abs() < 1e-6);
            }
        }
        for ci in 3..6 {
            for i in 0..16 {
                assert_eq!(m.data.data()[ci * 16 + i], 0.0);
            }
        }

        let m = encode_pose_mask(&v, PoseTarget { yaw: 2.5, pitch: 0.0 }, 4, 4).unwrap();
        assert!((m.data.data()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_target_rejected() {
        let v = make_vocabulary(6, 1).unwrap();
        assert!(encode_pose_mask(&v, PoseTarget { yaw: 4.5, pitch: 0.0 }, 4, 4).is_ok());
        assert!(encode_pose_mask(&v, PoseTarget { yaw: 6.5, pitch: 0.0 }, 4, 4).is_err());
        assert!(encode_pose_mask(&v, PoseTarget { yaw: -0.1, pitch: 0.0 }, 4, 4).is_err());
    }

    #[test]
    fn extreme_labels_encode_to_exact_bounds() {
        let v = make_vocabulary(6, 3).unwrap();
        let lo = encode_pose_mask(&v, label_to_target(&v, 0).unwrap(), 2, 2).unwrap();
        assert!(lo.data.data().iter().all(|&x| x == 0.0));
        let hi = encode_pose_mask(&v, label_to_target(&v, 17).unwrap(), 2, 2).unwrap();
        assert!(hi.data.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn yaw_channel_strictly_increasing_in_yaw() {
        let v = make_vocabulary(6, 1).unwrap();
        let mut prev = -1.0f32;
        for yaw_idx in 0..6 {
            let m = encode_pose_mask(
                &v,
                PoseTarget { yaw: yaw_idx as f32, pitch: 0.0 },
                2,
                2,
            )
            .unwrap();
            let val = m.data.data()[0];
            assert!(val > prev);
            prev = val;
        }
    }

    #[test]
    fn mask_is_spatially_constant_for_any_dims() {
        let v = make_vocabulary(6, 3).unwrap();
        let t = PoseTarget { yaw: 3.25, pitch: 1.5 };
        for (fh, fw) in [(1, 1), (16, 16), (5, 9)] {
            let m = encode_pose_mask(&v, t, fh, fw).unwrap();
            for ci in 0..6 {
                let plane = &m.data.data()[ci * fh * fw..(ci + 1) * fh * fw];
                assert!(plane.iter().all(|&x| x == plane[0]));
                assert!((0.0..=1.0).contains(&plane[0]));
            }
        }
    }

    #[test]
    fn degenerate_axis_normalizes_to_zero() {
        let v = make_vocabulary(1, 1).unwrap();
        let m = encode_pose_mask(&v, PoseTarget { yaw: 0.0, pitch: 0.0 }, 2, 2).unwrap();
        assert!(m.data.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decimal_sampling_is_seeded_and_in_range() {
        let v = make_vocabulary(6, 1).unwrap();
        let mut r1 = Rng::seed_from(9);
        let mut r2 = Rng::seed_from(9);
        for _ in 0..50 {
            let a = sample_decimal_pose(&v, &mut r1);
            let b = sample_decimal_pose(&v, &mut r2);
            assert_eq!(a, b);
            assert!((0.0..=5.0).contains(&a.yaw));
            assert_eq!(a.pitch, 0.0);
        }

        let v1 = make_vocabulary(1, 1).unwrap();
        let t = sample_decimal_pose(&v1, &mut r1);
        assert_eq!(t, PoseTarget { yaw: 0.0, pitch: 0.0 });
    }

    #[test]
    fn barycentric_channels_sum_to_one_per_axis() {
        let v = make_vocabulary(6, 3).unwrap();
        let spec = MaskSpec {
            k_yaw: 3,
            k_pitch: 3,
            encoding: MaskEncoding::Barycentric,
        };
        for yaw in [0.0f32, 1.3, 2.5, 5.0] {
            let m = encode_pose_mask_with(&v, PoseTarget { yaw, pitch: 1.0 }, 1, 1, &spec).unwrap();
            let yaw_sum: f32 = m.data.data()[..3].iter().sum();
            let pitch_sum: f32 = m.data.data()[3..].iter().sum();
            assert!((yaw_sum - 1.0).abs() < 1e-5, "yaw {yaw}: {yaw_sum}");
            assert!((pitch_sum - 1.0).abs() < 1e-5);
        }
    }
}
