//! Datasets, synthetic generation, and the supersample/selector construction.
//!
//! A [`Supersample`] holds `n` pairs of instances. A [`SelectorMask`] of `n`
//! fair bits picks one element of every pair for training
//! ([`select_train`]); the other element is held out and, as a
//! [`GhostSet`], is what training instances get compared against.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng::{stream, Purpose};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return shape_err("LabeledDataset labels", features.nrows(), labels.len());
        }
        if num_classes == 0 {
            return Err(Error::Input("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn take_rows(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Drops labels; the result can serve as a ghost set.
    pub fn to_ghost(&self) -> GhostSet {
        GhostSet {
            features: self.features.clone(),
        }
    }

    pub fn map_features(&self, f: impl FnOnce(&Matrix) -> Matrix) -> Result<LabeledDataset> {
        LabeledDataset::new(f(&self.features), self.labels.clone(), self.num_classes)
    }
}

/// `n` pairs of instances, `left[i]` paired with `right[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Supersample {
    pub left: LabeledDataset,
    pub right: LabeledDataset,
    /// Pool row of every left / right element.
    pub left_index: Vec<usize>,
    pub right_index: Vec<usize>,
}

impl Supersample {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// Membership bits: `bits[i] == true` trains on `right[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorMask {
    pub bits: Vec<bool>,
    pub seed: u64,
}

impl SelectorMask {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn flipped(&self) -> SelectorMask {
        SelectorMask {
            bits: self.bits.iter().map(|b| !b).collect(),
            seed: self.seed,
        }
    }
}

/// Unlabeled instances compared against training instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostSet {
    pub features: Matrix,
}

impl GhostSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            what: self.what,
            offset: self.pos as u64,
            reason: "truncated header".into(),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::Format {
                what: self.what,
                offset: self.bytes.len() as u64,
                reason: format!("truncated body: need {len} bytes, have {available}"),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

fn check_magic(r: &mut ByteReader, expected: u32) -> Result<()> {
    let magic = r.u32_be()?;
    if magic != expected {
        return Err(Error::Format {
            what: r.what,
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Parses an IDX image file: returns `(rows, cols, pixels scaled to [0,1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Matrix)> {
    let mut r = ByteReader {
        bytes,
        pos: 0,
        what: "IDX image file",
    };
    check_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = rows * cols;
    let body = r.body(count * pixels)?;
    let features = Array2::from_shape_fn((count, pixels), |(i, j)| body[i * pixels + j] as f64 / 255.0);
    Ok((rows, cols, features))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = ByteReader {
        bytes,
        pos: 0,
        what: "IDX label file",
    };
    check_magic(&mut r, IDX_LABELS_MAGIC)?;
    let count = r.u32_be()? as usize;
    Ok(r.body(count)?.iter().map(|&b| b as usize).collect())
}

/// Loads an MNIST-style IDX image/label file pair. `num_classes` is one
/// more than the largest label.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (_, _, features) = parse_idx_images(&fs::read(image_path)?)?;
    let labels = parse_idx_labels(&fs::read(label_path)?)?;
    if labels.len() != features.nrows() {
        return Err(Error::Format {
            what: "IDX label file",
            offset: 4,
            reason: format!(
                "label count {} does not match image count {}",
                labels.len(),
                features.nrows()
            ),
        });
    }
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    LabeledDataset::new(features, labels, num_classes)
}

/// Encodes a dataset as IDX bytes. Features must be multiples of 1/255 in
/// [0, 1] and `rows·cols` must equal the feature width.
pub fn encode_idx(ds: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return shape_err("encode_idx image dims", ds.dim(), rows * cols);
    }
    let mut images = Vec::with_capacity(16 + ds.features.len());
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    for &v in ds.features.iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("pixel value {v} outside [0, 1]")));
        }
        images.push((v * 255.0).round() as u8);
    }
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &y in &ds.labels {
        let byte = u8::try_from(y).map_err(|_| Error::Input(format!("label {y} exceeds a byte")))?;
        labels.push(byte);
    }
    Ok((images, labels))
}

pub fn write_idx(
    ds: &LabeledDataset,
    rows: usize,
    cols: usize,
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(ds, rows, cols)?;
    fs::write(image_path, images)?;
    fs::write(label_path, labels)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Writes `f0,…,f{d-1},label` rows. Floats use shortest round-trip form.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, y) in ds.features.outer_iter().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
        Error::Input("CSV needs at least one feature column and a label column".into())
    })?;
    if header.get(d) != Some("label") {
        return Err(Error::Input("last CSV column must be `label`".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Input(format!("CSV row {} has {} fields", line + 1, rec.len())));
        }
        for field in rec.iter().take(d) {
            values.push(field.parse::<f64>().map_err(|e| {
                Error::Input(format!("CSV row {}: bad float {field:?}: {e}", line + 1))
            })?);
        }
        labels.push(rec[d].parse::<usize>().map_err(|e| {
            Error::Input(format!("CSV row {}: bad label {:?}: {e}", line + 1, &rec[d]))
        })?);
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Input(format!("CSV shape: {e}")))?;
    let k = num_classes.unwrap_or_else(|| labels.iter().copied().max().map_or(1, |m| m + 1));
    LabeledDataset::new(features, labels, k)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Isotropic Gaussian mixture with one mean per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub means: Vec<Vec<f64>>,
    /// Per-dimension variance of every component.
    pub covariance_scale: f64,
    pub n: usize,
    pub label_noise_rate: f64,
}

impl GaussianMixtureSpec {
    /// Two classes at `±separation/2` along the first `informative` axes
    /// (scaled so the mean distance is `separation`).
    pub fn two_class(dim: usize, informative: usize, separation: f64, n: usize, label_noise_rate: f64) -> Self {
        let k = informative.clamp(1, dim.max(1));
        let offset = separation / 2.0 / (k as f64).sqrt();
        let mean = |sign: f64| (0..dim).map(|j| if j < k { sign * offset } else { 0.0 }).collect();
        Self {
            dim,
            num_classes: 2,
            means: vec![mean(-1.0), mean(1.0)],
            covariance_scale: 1.0,
            n,
            label_noise_rate,
        }
    }

    /// `num_classes` means with coordinates drawn uniformly from
    /// `[−scale, scale)` by a generator seeded with `means_seed`.
    pub fn random_means(
        dim: usize,
        num_classes: usize,
        scale: f64,
        means_seed: u64,
        n: usize,
        label_noise_rate: f64,
    ) -> Self {
        let mut rng = stream(means_seed, Purpose::Dataset);
        let means = (0..num_classes)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0) * scale).collect())
            .collect();
        Self {
            dim,
            num_classes,
            means,
            covariance_scale: 1.0,
            n,
            label_noise_rate,
        }
    }
}

/// Class-balanced draws (`label = i mod K` before shuffling); afterwards a
/// `label_noise_rate` fraction of labels is resampled uniformly.
pub fn gaussian_mixture(spec: &GaussianMixtureSpec, seed: u64) -> Result<LabeledDataset> {
    let k = spec.num_classes;
    if spec.dim == 0 || k == 0 || spec.means.len() != k {
        return Err(Error::Input(format!(
            "need one mean per class: {} means for {k} classes",
            spec.means.len()
        )));
    }
    if spec.means.iter().any(|m| m.len() != spec.dim) {
        return Err(Error::Input("every mean must have length `dim`".into()));
    }
    if spec.n < k {
        return Err(Error::Input(format!("n = {} is smaller than num_classes = {k}", spec.n)));
    }
    if !(spec.covariance_scale > 0.0) || !(0.0..=1.0).contains(&spec.label_noise_rate) {
        return Err(Error::Input(
            "covariance_scale must be positive and label_noise_rate in [0, 1]".into(),
        ));
    }

    let mut rng = stream(seed, Purpose::Dataset);
    let mut clean: Vec<usize> = (0..spec.n).map(|i| i % k).collect();
    clean.shuffle(&mut rng);
    let std = spec.covariance_scale.sqrt();
    let mut features = Array2::zeros((spec.n, spec.dim));
    for (mut row, &y) in features.outer_iter_mut().zip(&clean) {
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = spec.means[y][j] + std * z;
        }
    }
    let labels = clean
        .into_iter()
        .map(|y| {
            if rng.random::<f64>() < spec.label_noise_rate {
                rng.random_range(0..k)
            } else {
                y
            }
        })
        .collect();
    LabeledDataset::new(features, labels, k)
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Seeded permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Purpose::Dataset));
    idx
}

/// `n` rows without replacement: the first `n` entries of a permutation that
/// depends only on `(ds.len(), seed)`, so smaller draws are prefixes of larger.
pub fn subsample(ds: &LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n > ds.len() {
        return Err(Error::Input(format!("cannot draw {n} rows from {}", ds.len())));
    }
    let perm = permutation(ds.len(), seed);
    Ok(ds.take_rows(&perm[..n]))
}

/// `2n` distinct pool rows: pair `i` holds entries `2i` and `2i + 1` of a
/// seeded permutation, so with one seed the pairs of a smaller supersample
/// are a prefix of those of a larger one.
pub fn make_supersample(pool: &LabeledDataset, n: usize, seed: u64) -> Result<Supersample> {
    if n == 0 || 2 * n > pool.len() {
        return Err(Error::Input(format!(
            "supersample of {n} pairs needs {} rows, pool has {}",
            2 * n,
            pool.len()
        )));
    }
    let perm = permutation(pool.len(), seed);
    let left_index: Vec<usize> = perm[..2 * n].iter().step_by(2).copied().collect();
    let right_index: Vec<usize> = perm[1..2 * n].iter().step_by(2).copied().collect();
    Ok(Supersample {
        left: pool.take_rows(&left_index),
        right: pool.take_rows(&right_index),
        left_index,
        right_index,
    })
}

/// Training rows are `left[i]` where `u[i] = 0`, else `right[i]`; held-out
/// rows are the other element of every pair.
pub fn select_train(ss: &Supersample, u: &SelectorMask) -> Result<(LabeledDataset, LabeledDataset)> {
    if u.len() != ss.len() {
        return shape_err("select_train selector", ss.len(), u.len());
    }
    let pick = |take_right: bool| {
        let mut features = Array2::zeros((ss.len(), ss.left.dim()));
        let mut labels = Vec::with_capacity(ss.len());
        for (i, &bit) in u.bits.iter().enumerate() {
            let src = if bit == take_right { &ss.left } else { &ss.right };
            features.row_mut(i).assign(&src.features.row(i));
            labels.push(src.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            num_classes: ss.left.num_classes,
        }
    };
    // bit == false picks left for the training side
    Ok((pick(false), pick(true)))
}

/// `n` i.i.d. fair bits.
pub fn draw_selector(n: usize, seed: u64) -> Result<SelectorMask> {
    if n == 0 {
        return Err(Error::Input("selector length must be positive".into()));
    }
    let mut rng = stream(seed, Purpose::Selector);
    Ok(SelectorMask {
        bits: (0..n).map(|_| rng.random::<bool>()).collect(),
        seed,
    })
}

/// Disjoint consecutive slices of a seeded permutation, one per size.
pub fn split(ds: &LabeledDataset, sizes: &[usize], seed: u64) -> Result<Vec<LabeledDataset>> {
    let total: usize = sizes.iter().sum();
    if total > ds.len() {
        return Err(Error::Input(format!("split sizes sum to {total}, dataset has {}", ds.len())));
    }
    let perm = permutation(ds.len(), seed);
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&s| {
            let part = ds.take_rows(&perm[start..start + s]);
            start += s;
            part
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-dimension affine standardization fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    /// Constant dimensions get unit scale.
    pub fn fit(features: &Matrix) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Input("cannot standardize an empty matrix".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let std = features
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v > 1e-12 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.mean.len() {
            return shape_err("Standardizer::apply", self.mean.len(), features.ncols());
        }
        Ok((features - &self.mean) / &self.std)
    }

    pub fn apply_dataset(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        let features = self.apply(&ds.features)?;
        LabeledDataset::new(features, ds.labels.clone(), ds.num_classes)
    }

    pub fn apply_ghost(&self, ghost: &GhostSet) -> Result<GhostSet> {
        Ok(GhostSet {
            features: self.apply(&ghost.features)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy(n: usize) -> LabeledDataset {
        let features = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64);
        LabeledDataset::new(features, (0..n).map(|i| i % 4).collect(), 4).unwrap()
    }

    fn row_keys(ds: &LabeledDataset) -> Vec<i64> {
        ds.features().column(0).iter().map(|&v| v as i64).collect()
    }

    #[test]
    fn idx_bytes_parse() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        img.extend([255, 0, 51, 102]);
        let (r, c, x) = parse_idx_images(&img).unwrap();
        assert_eq!((r, c), (1, 2));
        assert_eq!(x[[0, 0]], 1.0);
        assert_eq!(x[[0, 1]], 0.0);
        assert_eq!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap(), vec![7, 3]);
    }

    #[test]
    fn idx_errors_carry_offsets() {
        match parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_idx_images(&[0, 0, 8, 3, 0, 0, 0, 1]) {
            Err(Error::Format { offset: 8, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 3, 1]) {
            Err(Error::Format { offset: 9, reason, .. }) => assert!(reason.contains("truncated")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn subsample_prefix_nesting() {
        let ds = toy(50);
        let small = subsample(&ds, 12, 9).unwrap();
        let large = subsample(&ds, 40, 9).unwrap();
        assert_eq!(row_keys(&small)[..], row_keys(&large)[..12]);
        assert_eq!(subsample(&ds, 40, 9).unwrap(), large);
        let full = subsample(&ds, 50, 9).unwrap();
        let mut keys = row_keys(&full);
        keys.sort();
        assert_eq!(keys, row_keys(&ds));
        assert!(subsample(&ds, 51, 9).is_err());
    }

    #[test]
    fn supersample_partitions_pool() {
        let ds = toy(20);
        let ss = make_supersample(&ds, 10, 4).unwrap();
        let l: HashSet<_> = ss.left_index.iter().collect();
        let r: HashSet<_> = ss.right_index.iter().collect();
        assert!(l.is_disjoint(&r));
        assert_eq!(l.len() + r.len(), 20);
        assert_eq!(make_supersample(&ds, 10, 4).unwrap(), ss);
        assert!(make_supersample(&ds, 11, 4).is_err());
    }

    #[test]
    fn smaller_supersamples_are_prefixes() {
        let ds = toy(40);
        let big = make_supersample(&ds, 20, 6).unwrap();
        let small = make_supersample(&ds, 5, 6).unwrap();
        assert_eq!(small.left_index, big.left_index[..5]);
        assert_eq!(small.right_index, big.right_index[..5]);
        assert_eq!(draw_selector(5, 2).unwrap().bits, draw_selector(20, 2).unwrap().bits[..5]);
    }

    #[test]
    fn selection_cases() {
        let ss = make_supersample(&toy(16), 8, 1).unwrap();
        let zeros = SelectorMask { bits: vec![false; 8], seed: 0 };
        let (train, held) = select_train(&ss, &zeros).unwrap();
        assert_eq!(train, ss.left);
        assert_eq!(held, ss.right);
        let (train1, held1) = select_train(&ss, &zeros.flipped()).unwrap();
        assert_eq!(train1, ss.right);
        assert_eq!(held1, ss.left);

        let u = draw_selector(8, 3).unwrap();
        let (a, b) = select_train(&ss, &u).unwrap();
        let (c, d) = select_train(&ss, &u.flipped()).unwrap();
        assert_eq!(a, d);
        assert_eq!(b, c);
        assert!(select_train(&ss, &draw_selector(7, 3).unwrap()).is_err());
    }

    #[test]
    fn selector_statistics() {
        let u = draw_selector(100_000, 11).unwrap();
        let mean = u.bits.iter().filter(|&&b| b).count() as f64 / 1e5;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
        assert_eq!(draw_selector(64, 1).unwrap(), draw_selector(64, 1).unwrap());
        assert_ne!(draw_selector(64, 1).unwrap().bits, draw_selector(64, 2).unwrap().bits);
    }

    #[test]
    fn mixture_spec_validation() {
        let mut spec = GaussianMixtureSpec::two_class(4, 2, 3.0, 10, 0.0);
        assert!(gaussian_mixture(&spec, 0).is_ok());
        spec.means.pop();
        assert!(gaussian_mixture(&spec, 0).is_err());
        let mut spec = GaussianMixtureSpec::two_class(4, 2, 3.0, 1, 0.0);
        assert!(gaussian_mixture(&spec, 0).is_err());
        spec.n = 10;
        spec.label_noise_rate = 1.5;
        assert!(gaussian_mixture(&spec, 0).is_err());
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let ds = toy(30);
        let s = Standardizer::fit(ds.features()).unwrap();
        let z = s.apply(ds.features()).unwrap();
        for col in z.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
            assert!((col.var(0.0) - 1.0).abs() < 1e-12);
        }
        let constant = Array2::from_elem((5, 2), 3.0);
        let s = Standardizer::fit(&constant).unwrap();
        assert!(s.apply(&constant).unwrap().iter().all(|&v| v == 0.0));
    }
}
