//! Dataset manifests, pose-availability filtering, the traditional
//! augmentation baseline, and epoch batching.
//!
//! A manifest is UTF-8 JSON Lines: the first line holds the pose
//! vocabulary and class names, every following line one sample record.
//! Image paths are stored relative to the manifest file where possible
//! and resolved to absolute paths on load.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;
use crate::pose::PoseVocabulary;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthesized,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    /// Absolute path in memory; relativized on write when possible.
    pub image_path: PathBuf,
    pub class_label: usize,
    pub instance_id: String,
    pub pose_label: usize,
    pub synthetic_origin: Origin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeaderLine {
    vocabulary: PoseVocabulary,
    class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    image_path: String,
    class_label: usize,
    instance_id: String,
    pose_label: usize,
    synthetic_origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub vocabulary: PoseVocabulary,
    pub class_names: Vec<String>,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn new(vocabulary: PoseVocabulary, class_names: Vec<String>) -> Self {
        DatasetManifest {
            vocabulary,
            class_names,
            records: Vec::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct instance ids, in first-appearance order.
    pub fn instance_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.instance_id.clone()) {
                out.push(r.instance_id.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        let n = self.vocabulary.n_discrete();
        for r in &self.records {
            if r.pose_label >= n {
                return Err(Error::validation(format!(
                    "pose label {} out of range 0..{n}",
                    r.pose_label
                )));
            }
            if r.class_label >= self.class_names.len() {
                return Err(Error::validation(format!(
                    "class label {} out of range 0..{}",
                    r.class_label,
                    self.class_names.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = String::new();
    let header = HeaderLine {
        vocabulary: manifest.vocabulary.clone(),
        class_names: manifest.class_names.clone(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for r in &manifest.records {
        let rel = r
            .image_path
            .strip_prefix(dir)
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|_| r.image_path.clone());
        let line = RecordLine {
            image_path: rel.to_string_lossy().into_owned(),
            class_label: r.class_label,
            instance_id: r.instance_id.clone(),
            pose_label: r.pose_label,
            synthetic_origin: r.synthetic_origin,
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse a manifest. Structural problems are parse errors with their line
/// number; a referenced image that does not exist is a validation error.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut lines = reader.lines().enumerate();

    let (_, header_line) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "empty manifest file (missing header line)".into(),
    })?;
    let header_line = header_line.map_err(|e| Error::io(path, e))?;
    let header: HeaderLine = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        path: path.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    header.vocabulary.validate()?;
    let n_poses = header.vocabulary.n_discrete();

    let mut manifest = DatasetManifest::new(header.vocabulary, header.class_names);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: e.to_string(),
        })?;
        if rec.pose_label >= n_poses {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("pose label {} out of range 0..{n_poses}", rec.pose_label),
            });
        }
        if rec.class_label >= manifest.class_names.len() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!(
                    "class label {} out of range 0..{}",
                    rec.class_label,
                    manifest.class_names.len()
                ),
            });
        }
        let rel = PathBuf::from(&rec.image_path);
        let abs = if rel.is_absolute() { rel } else { dir.join(rel) };
        if !abs.exists() {
            return Err(Error::validation(format!(
                "image file {} (line {lineno}) does not exist",
                abs.display()
            )));
        }
        manifest.records.push(SampleRecord {
            image_path: abs,
            class_label: rec.class_label,
            instance_id: rec.instance_id,
            pose_label: rec.pose_label,
            synthetic_origin: rec.synthetic_origin,
        });
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Availability
// ---------------------------------------------------------------------------

/// Class x pose grid of which poses a dataset role may keep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityMatrix {
    pub allowed: Vec<Vec<bool>>,
}

impl AvailabilityMatrix {
    pub fn all(n_classes: usize, n_poses: usize) -> Self {
        AvailabilityMatrix {
            allowed: vec![vec![true; n_poses]; n_classes],
        }
    }

    /// Half the classes keep every pose, the others keep only the given
    /// subset (the unbalanced construction; classes alternate).
    pub fn alternating_bias(n_classes: usize, n_poses: usize, kept: &[usize]) -> Self {
        let mut m = Self::all(n_classes, n_poses);
        for (ci, row) in m.allowed.iter_mut().enumerate() {
            if ci % 2 == 1 {
                for (pi, v) in row.iter_mut().enumerate() {
                    *v = kept.contains(&pi);
                }
            }
        }
        m
    }

    /// Every class keeps `j` poses, cyclically shifted by class index:
    /// class `i` keeps poses `{(i + t) mod n : t < j}`.
    pub fn cyclic_bias(n_classes: usize, n_poses: usize, j: usize) -> Self {
        let mut m = AvailabilityMatrix {
            allowed: vec![vec![false; n_poses]; n_classes],
        };
        for (ci, row) in m.allowed.iter_mut().enumerate() {
            for t in 0..j.min(n_poses) {
                row[(ci + t) % n_poses] = true;
            }
        }
        m
    }

    pub fn n_classes(&self) -> usize {
        self.allowed.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (ci, row) in self.allowed.iter().enumerate() {
            if !row.iter().any(|&v| v) {
                return Err(Error::validation(format!(
                    "class {ci} has no allowed pose"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: AvailabilityMatrix = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: 1,
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("matrix serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Keep exactly the records whose (class, pose) cell is allowed.
pub fn apply_availability(
    manifest: &DatasetManifest,
    matrix: &AvailabilityMatrix,
) -> Result<DatasetManifest> {
    if matrix.allowed.len() != manifest.n_classes() {
        return Err(Error::invalid(format!(
            "availability has {} classes, manifest has {}",
            matrix.allowed.len(),
            manifest.n_classes()
        )));
    }
    let n_poses = manifest.vocabulary.n_discrete();
    if let Some(row) = matrix.allowed.iter().find(|r| r.len() != n_poses) {
        return Err(Error::invalid(format!(
            "availability row has {} poses, vocabulary has {n_poses}",
            row.len()
        )));
    }
    matrix.validate()?;
    let mut out = manifest.clone();
    out.records
        .retain(|r| matrix.allowed[r.class_label][r.pose_label]);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Traditional augmentation
// ---------------------------------------------------------------------------

fn crop(image: &Tensor, top: usize, left: usize, ch: usize, cw: usize) -> Tensor {
    let [_, c, h, w] = image.shape();
    assert!(top + ch <= h && left + cw <= w);
    let mut out = Tensor::zeros([1, c, ch, cw]);
    for ci in 0..c {
        for y in 0..ch {
            let src = &image.data()[ci * h * w + (top + y) * w + left..][..cw];
            out.data_mut()[ci * ch * cw + y * cw..][..cw].copy_from_slice(src);
        }
    }
    out
}

/// One augmented variant: random 87.5% crop resized back, horizontal flip
/// with p = 0.5, scale jitter of +/-12.5% refit to the original frame.
pub fn augment_image(image: &Tensor, rng: &mut Rng) -> Tensor {
    let [_, _, h, w] = image.shape();
    let ch = ((h as f64) * 0.875).round() as usize;
    let cw = ((w as f64) * 0.875).round() as usize;
    let top = rng.below(h - ch + 1);
    let left = rng.below(w - cw + 1);
    let mut img = imageio::resize_bilinear(&crop(image, top, left, ch, cw), h, w);
    if rng.bernoulli(0.5) {
        img = imageio::hflip(&img);
    }
    let f = rng.range(0.875, 1.125);
    let nh = ((h as f64) * f).round().max(1.0) as usize;
    let nw = ((w as f64) * f).round().max(1.0) as usize;
    if (nh, nw) != (h, w) {
        img = imageio::center_fit(&imageio::resize_bilinear(&img, nh, nw), h, w);
    }
    img
}

/// Grow a manifest to `target_count` rows by appending augmented copies of
/// randomly drawn originals. Augmented PNGs are written under `out_dir`.
pub fn traditional_augment(
    manifest: &DatasetManifest,
    target_count: usize,
    rng: &mut Rng,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if target_count < manifest.len() {
        return Err(Error::invalid(format!(
            "target count {target_count} below current {}",
            manifest.len()
        )));
    }
    let mut out = manifest.clone();
    if target_count == manifest.len() {
        return Ok(out);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for i in 0..target_count - manifest.len() {
        let src = &manifest.records[rng.below(manifest.len())];
        let image = imageio::read_png(&src.image_path)?;
        let aug = augment_image(&image, rng);
        let stem = src
            .image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "img".into());
        let path = out_dir.join(format!("aug{i:05}_{stem}.png"));
        imageio::write_png(&path, &aug)?;
        out.records.push(SampleRecord {
            image_path: path,
            class_label: src.class_label,
            instance_id: src.instance_id.clone(),
            pose_label: src.pose_label,
            synthetic_origin: Origin::Augmented,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Each element carries its true pose and a random target pose.
    PairedRandomTarget,
    /// Class labels only.
    Classify,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub pose_labels: Vec<usize>,
    pub class_labels: Vec<usize>,
    /// Random target poses; empty in `Classify` mode.
    pub target_labels: Vec<usize>,
}

/// One epoch of shuffled batches; deterministic for a given rng state.
pub fn epoch_batches(
    manifest: &DatasetManifest,
    batch_size: usize,
    rng: &mut Rng,
    mode: BatchMode,
) -> Result<Vec<Batch>> {
    if manifest.is_empty() {
        return Err(Error::invalid("cannot iterate an empty manifest"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    rng.shuffle(&mut order);
    let n_poses = manifest.vocabulary.n_discrete();
    let mut out = Vec::new();
    for chunk in order.chunks(batch_size) {
        let mut batch = Batch {
            indices: chunk.to_vec(),
            pose_labels: chunk.iter().map(|&i| manifest.records[i].pose_label).collect(),
            class_labels: chunk.iter().map(|&i| manifest.records[i].class_label).collect(),
            target_labels: Vec::new(),
        };
        if mode == BatchMode::PairedRandomTarget {
            batch.target_labels = chunk.iter().map(|_| rng.below(n_poses)).collect();
        }
        out.push(batch);
    }
    Ok(out)
}

/// All images of a manifest decoded once into memory.
pub struct ImageStore {
    pub images: Vec<Tensor>,
    pub side: usize,
}

impl ImageStore {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let mut images = Vec::with_capacity(manifest.len());
        let mut side = 0;
        for r in &manifest.records {
            let img = imageio::read_png(&r.image_path)?;
            let [_, _, h, w] = img.shape();
            if h % 4 != 0 || w % 4 != 0 {
                return Err(Error::validation(format!(
                    "image {} is {h}x{w}; dims must be divisible by 4",
                    r.image_path.display()
                )));
            }
            if side == 0 {
                side = h;
            } else if h != side || w != side {
                return Err(Error::validation(format!(
                    "image {} is {h}x{w}; expected {side}x{side}",
                    r.image_path.display()
                )));
            }
            images.push(img);
        }
        Ok(ImageStore { images, side })
    }

    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let samples: Vec<Tensor> = indices.iter().map(|&i| self.images[i].clone()).collect();
        Tensor::stack(&samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::make_vocabulary;

    fn touch_image(dir: &Path, name: &str, side: usize) -> PathBuf {
        let path = dir.join(name);
        let img = Tensor::filled([1, 3, side, side], 0.25);
        imageio::write_png(&path, &img).unwrap();
        path
    }

    fn tiny_manifest(dir: &Path) -> DatasetManifest {
        let vocab = make_vocabulary(6, 1).unwrap();
        let mut m = DatasetManifest::new(vocab, vec!["a".into(), "b".into()]);
        for (ci, cname) in ["a", "b"].iter().enumerate() {
            for inst in 0..2 {
                for pose in 0..6 {
                    let name = format!("{cname}_{inst}_{pose}_0.png");
                    let path = touch_image(dir, &name, 8);
                    m.records.push(SampleRecord {
                        image_path: path,
                        class_label: ci,
                        instance_id: format!("{cname}_{inst}"),
                        pose_label: pose,
                        synthetic_origin: Origin::Real,
                    });
                }
            }
        }
        m
    }

    #[test]
    fn manifest_round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let path = dir.path().join("m.jsonl");
        write_manifest(&m, &path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(m, back);

        // empty record list is a valid manifest
        let empty = DatasetManifest::new(make_vocabulary(6, 1).unwrap(), vec!["a".into()]);
        let path = dir.path().join("empty.jsonl");
        write_manifest(&empty, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap().len(), 0);
    }

    #[test]
    fn bad_pose_label_is_a_parse_error_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let path = dir.path().join("m.jsonl");
        write_manifest(&m, &path).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text = text.replace("\"pose_label\":5", "\"pose_label\":9");
        fs::write(&path, text).unwrap();
        match load_manifest(&path) {
            Err(Error::Parse { line, msg, .. }) => {
                assert!(line >= 2);
                assert!(msg.contains("pose label 9"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_image_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let path = dir.path().join("m.jsonl");
        write_manifest(&m, &path).unwrap();
        fs::remove_file(&m.records[3].image_path).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn availability_filters_exactly_the_allowed_cells() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());

        // all-true is the identity
        let all = AvailabilityMatrix::all(2, 6);
        assert_eq!(apply_availability(&m, &all).unwrap(), m);

        // class "b" (odd index) restricted to poses 1 and 4
        let biased = AvailabilityMatrix::alternating_bias(2, 6, &[1, 4]);
        let filtered = apply_availability(&m, &biased).unwrap();
        for r in &filtered.records {
            if r.class_label == 1 {
                assert!(r.pose_label == 1 || r.pose_label == 4);
            }
        }
        assert_eq!(filtered.len(), 12 + 4);

        // idempotent
        let again = apply_availability(&filtered, &biased).unwrap();
        assert_eq!(again, filtered);

        // all-false row rejected
        let mut bad = AvailabilityMatrix::all(2, 6);
        bad.allowed[0].iter_mut().for_each(|v| *v = false);
        assert!(matches!(
            apply_availability(&m, &bad),
            Err(Error::Validation(_))
        ));

        // dimension mismatch rejected
        let wrong = AvailabilityMatrix::all(3, 6);
        assert!(matches!(
            apply_availability(&m, &wrong),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cyclic_bias_matches_the_published_pattern() {
        // class i keeps {(i + t) mod n : t < j}
        let m = AvailabilityMatrix::cyclic_bias(6, 6, 2);
        assert_eq!(m.allowed[4], vec![false, false, false, false, true, true]);
        assert_eq!(m.allowed[5], vec![true, false, false, false, false, true]);
        let m3 = AvailabilityMatrix::cyclic_bias(6, 6, 3);
        assert_eq!(m3.allowed[5], vec![true, true, false, false, false, true]);
        m3.validate().unwrap();
    }

    #[test]
    fn augment_identity_at_current_count_and_grows_otherwise() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let mut rng = Rng::seed_from(5);
        let same = traditional_augment(&m, m.len(), &mut rng, &dir.path().join("aug")).unwrap();
        assert_eq!(same, m);

        let grown =
            traditional_augment(&m, m.len() + 10, &mut rng, &dir.path().join("aug")).unwrap();
        assert_eq!(grown.len(), m.len() + 10);
        // originals untouched, in order
        assert_eq!(&grown.records[..m.len()], &m.records[..]);
        for r in &grown.records[m.len()..] {
            assert_eq!(r.synthetic_origin, Origin::Augmented);
            assert!(r.image_path.exists());
        }
        // pose labels preserved under augmentation
        for r in &grown.records[m.len()..] {
            assert!(r.pose_label < 6);
        }

        // shrinking is rejected
        assert!(traditional_augment(&m, m.len() - 1, &mut rng, dir.path()).is_err());
    }

    #[test]
    fn augment_is_seed_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let a = traditional_augment(&m, m.len() + 5, &mut Rng::seed_from(9), &dir.path().join("a"))
            .unwrap();
        let b = traditional_augment(&m, m.len() + 5, &mut Rng::seed_from(9), &dir.path().join("b"))
            .unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.class_label, rb.class_label);
            assert_eq!(ra.pose_label, rb.pose_label);
        }
        // pixel-identical augmented outputs
        for (ra, rb) in a.records[m.len()..].iter().zip(&b.records[m.len()..]) {
            let ia = imageio::read_png(&ra.image_path).unwrap();
            let ib = imageio::read_png(&rb.image_path).unwrap();
            assert_eq!(ia, ib);
        }
    }

    #[test]
    fn batches_cover_the_epoch_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path()); // 24 records
        let batches =
            epoch_batches(&m, 8, &mut Rng::seed_from(3), BatchMode::PairedRandomTarget).unwrap();
        assert_eq!(batches.len(), 3);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..24).collect::<Vec<_>>());

        let again =
            epoch_batches(&m, 8, &mut Rng::seed_from(3), BatchMode::PairedRandomTarget).unwrap();
        for (x, y) in batches.iter().zip(&again) {
            assert_eq!(x.indices, y.indices);
            assert_eq!(x.target_labels, y.target_labels);
        }

        let empty = DatasetManifest::new(make_vocabulary(2, 1).unwrap(), vec!["a".into()]);
        assert!(epoch_batches(&empty, 4, &mut Rng::seed_from(1), BatchMode::Classify).is_err());
    }

    #[test]
    fn target_labels_roughly_uniform_over_many_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let mut rng = Rng::seed_from(17);
        let mut counts = vec![0usize; 6];
        let mut total = 0usize;
        for _ in 0..200 {
            for b in epoch_batches(&m, 8, &mut rng, BatchMode::PairedRandomTarget).unwrap() {
                for &t in &b.target_labels {
                    counts[t] += 1;
                    total += 1;
                }
            }
        }
        // chi-squared against uniform; 5 dof, 1% critical value ~ 15.09
        let expected = total as f64 / 6.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 15.09, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn image_store_checks_divisibility() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = make_vocabulary(2, 1).unwrap();
        let mut m = DatasetManifest::new(vocab, vec!["a".into()]);
        let path = touch_image(dir.path(), "odd.png", 6);
        m.records.push(SampleRecord {
            image_path: path,
            class_label: 0,
            instance_id: "a_0".into(),
            pose_label: 0,
            synthetic_origin: Origin::Real,
        });
        assert!(matches!(ImageStore::load(&m), Err(Error::Validation(_))));
    }
}
