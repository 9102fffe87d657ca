//! Synthetic datasets, label-noise injectors and the dataset CSV format.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{CorruptionMatrix, NoisyDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    GaussianBlobs,
    ConcentricRings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub num_classes: usize,
    pub num_samples: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("data needs at least 2 classes".into()));
        }
        if self.num_samples < self.num_classes {
            return Err(Error::Config("num_samples must be at least num_classes".into()));
        }
        if self.dim == 0 || (self.kind == GeneratorKind::ConcentricRings && self.dim < 2) {
            return Err(Error::Config("dim too small for this generator".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be positive".into()));
        }
        Ok(())
    }
}

/// Class centres at distance `separation` from the origin.
///
/// `d == 1`: evenly spaced on `[-sep, sep]`. `d >= K`: scaled basis vectors.
/// `K <= 2d`: scaled `±e_j` (cross-polytope vertices). Otherwise evenly
/// spaced on a circle in the first two coordinates.
pub fn class_means(k: usize, d: usize, separation: f64) -> Array2<f64> {
    let mut m = Array2::zeros((k, d));
    if d == 1 {
        for c in 0..k {
            m[[c, 0]] = separation * (2.0 * c as f64 / (k - 1) as f64 - 1.0);
        }
    } else if d >= k && d > 2 {
        for c in 0..k {
            m[[c, c]] = separation;
        }
    } else if k <= 2 * d && d > 2 {
        for c in 0..k {
            m[[c, c / 2]] = if c % 2 == 0 { separation } else { -separation };
        }
    } else {
        for c in 0..k {
            let a = std::f64::consts::TAU * c as f64 / k as f64;
            m[[c, 0]] = separation * a.cos();
            m[[c, 1]] = separation * a.sin();
        }
    }
    m
}

/// Noise-free dataset; sample `i` belongs to class `i mod K`.
pub fn generate(spec: &GeneratorSpec) -> Result<NoisyDataset> {
    spec.validate()?;
    let (n, k, d) = (spec.num_samples, spec.num_classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut x = Array2::zeros((n, d));
    match spec.kind {
        GeneratorKind::GaussianBlobs => {
            let means = class_means(k, d, spec.separation);
            for (i, &c) in labels.iter().enumerate() {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x[[i, j]] = means[[c, j]] + z;
                }
            }
        }
        GeneratorKind::ConcentricRings => {
            let radial = Normal::new(0.0, 0.15 * spec.separation).map_err(|e| Error::Config(e.to_string()))?;
            for (i, &c) in labels.iter().enumerate() {
                let r = spec.separation * (c + 1) as f64 + radial.sample(&mut rng);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                x[[i, 0]] = r * a.cos();
                x[[i, 1]] = r * a.sin();
                for j in 2..d {
                    x[[i, j]] = StandardNormal.sample(&mut rng);
                }
            }
        }
    }
    NoisyDataset::new(x, labels.clone(), Some(labels), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    InstanceDependent,
}

/// Label-noise recipe. `mapping` uses 1-based class ids like every other
/// external format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub mapping: Option<Vec<usize>>,
    pub tau_sigma: f64,
    /// Symmetric noise draws the new label from all K classes (so a flip
    /// can land on the original label) instead of the other K - 1.
    pub include_self: bool,
    /// Scale of the random projection scoring wrong classes
    /// (instance-dependent noise).
    pub projection_scale: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            rate: 0.0,
            mapping: None,
            tau_sigma: 0.1,
            include_self: false,
            projection_scale: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Config(format!("noise rate must lie in [0, 1), got {}", self.rate)));
        }
        if !(self.tau_sigma >= 0.0) {
            return Err(Error::Config("tau_sigma must be nonnegative".into()));
        }
        if let Some(m) = &self.mapping {
            validate_mapping(&to_zero_based(m)?, k)?;
        }
        Ok(())
    }
}

fn to_zero_based(m: &[usize]) -> Result<Vec<usize>> {
    m.iter()
        .map(|&c| {
            c.checked_sub(1)
                .ok_or(Error::Config("mapping classes are 1-based".into()))
        })
        .collect()
}

/// `y -> (y + 1) mod K` (0-based).
pub fn cyclic_mapping(k: usize) -> Vec<usize> {
    (0..k).map(|y| (y + 1) % k).collect()
}

fn validate_mapping(mapping: &[usize], k: usize) -> Result<()> {
    if mapping.len() != k {
        return Err(Error::Config(format!("mapping needs {k} entries, got {}", mapping.len())));
    }
    let mut seen = vec![false; k];
    for (y, &t) in mapping.iter().enumerate() {
        if t >= k {
            return Err(Error::ClassOutOfRange { index: t, num_classes: k });
        }
        if t == y {
            return Err(Error::Config(format!("mapping has a fixed point at class {}", y + 1)));
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(Error::Config("mapping is not a permutation".into()));
        }
    }
    Ok(())
}

fn true_labels(data: &NoisyDataset) -> Result<&[usize]> {
    data.true_labels().ok_or(Error::MissingTrueLabels)
}

/// Flip each label with probability `rate` to a uniformly drawn other class
/// (or any class when `include_self`).
pub fn inject_symmetric<R: Rng + ?Sized>(
    data: &NoisyDataset,
    rate: f64,
    include_self: bool,
    rng: &mut R,
) -> Result<NoisyDataset> {
    let k = data.num_classes();
    let noisy = true_labels(data)?
        .iter()
        .map(|&y| {
            if rng.random::<f64>() >= rate {
                return y;
            }
            if include_self {
                rng.random_range(0..k)
            } else {
                let r = rng.random_range(0..k - 1);
                if r >= y { r + 1 } else { r }
            }
        })
        .collect();
    data.with_noisy_labels(noisy)
}

/// Flip each label `y` to `mapping[y]` (0-based) with probability `rate`.
pub fn inject_asymmetric<R: Rng + ?Sized>(
    data: &NoisyDataset,
    rate: f64,
    mapping: &[usize],
    rng: &mut R,
) -> Result<NoisyDataset> {
    validate_mapping(mapping, data.num_classes())?;
    let noisy = true_labels(data)?
        .iter()
        .map(|&y| if rng.random::<f64>() < rate { mapping[y] } else { y })
        .collect();
    data.with_noisy_labels(noisy)
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    for _ in 0..1000 {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
    mean.clamp(0.0, 1.0)
}

/// Per-instance flip rates from a normal truncated to `[0, 1]`; a flipped
/// label goes to a wrong class drawn with probability proportional to
/// `exp(x . w_c)`, where the `w_c` are a fixed Gaussian projection with
/// entries of variance `projection_scale^2 / d`.
pub fn inject_instance_dependent<R: Rng + ?Sized>(
    data: &NoisyDataset,
    rate: f64,
    tau_sigma: f64,
    projection_scale: f64,
    rng: &mut R,
) -> Result<NoisyDataset> {
    let (k, d) = (data.num_classes(), data.dim());
    let sd = projection_scale / (d as f64).sqrt();
    let proj = Array2::from_shape_fn((k, d), |_| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    });
    let truth = true_labels(data)?;
    let mut noisy = Vec::with_capacity(truth.len());
    for (i, &y) in truth.iter().enumerate() {
        let q = truncated_normal(rate, tau_sigma, rng);
        if rng.random::<f64>() >= q {
            noisy.push(y);
            continue;
        }
        let feats = data.features();
        let x = feats.row(i);
        let scores: Vec<f64> = (0..k).map(|c| if c == y { f64::NEG_INFINITY } else { proj.row(c).dot(&x) }).collect();
        let probs = crate::model::softmax(&scores);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = if y == k - 1 { k - 2 } else { k - 1 };
        for (c, p) in probs.iter().enumerate() {
            acc += p;
            if c != y && u < acc {
                pick = c;
                break;
            }
        }
        noisy.push(pick);
    }
    data.with_noisy_labels(noisy)
}

/// Applies `spec` with its own seeded generator.
pub fn inject(data: &NoisyDataset, spec: &NoiseSpec) -> Result<NoisyDataset> {
    let k = data.num_classes();
    spec.validate(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        NoiseKind::Symmetric => inject_symmetric(data, spec.rate, spec.include_self, &mut rng),
        NoiseKind::Asymmetric => {
            let mapping = match &spec.mapping {
                Some(m) => to_zero_based(m)?,
                None => cyclic_mapping(k),
            };
            inject_asymmetric(data, spec.rate, &mapping, &mut rng)
        }
        NoiseKind::InstanceDependent => {
            inject_instance_dependent(data, spec.rate, spec.tau_sigma, spec.projection_scale, &mut rng)
        }
    }
}

/// Empirical `#(true = y, noisy = y') / #(true = y)`.
pub fn ground_truth_t(data: &NoisyDataset) -> Result<CorruptionMatrix> {
    let k = data.num_classes();
    let truth = true_labels(data)?;
    let mut counts = Array2::<f64>::zeros((k, k));
    for (&y, &obs) in truth.iter().zip(data.noisy_labels()) {
        counts[[y, obs]] += 1.0;
    }
    for (y, mut row) in counts.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        if s == 0.0 {
            return Err(Error::Config(format!("class {} has no samples", y + 1)));
        }
        row.mapv_inplace(|v| v / s);
    }
    CorruptionMatrix::new(counts)
}

/// Empirical transition restricted to corrupted samples:
/// `#(true = y, noisy = y' != y) / #(true = y, noisy != y)`. Rows without
/// any corrupted sample are `None`.
pub fn ground_truth_corrupted_t(data: &NoisyDataset) -> Result<Vec<Option<Vec<f64>>>> {
    let k = data.num_classes();
    let truth = true_labels(data)?;
    let mut counts = vec![vec![0.0; k]; k];
    for (&y, &obs) in truth.iter().zip(data.noisy_labels()) {
        if y != obs {
            counts[y][obs] += 1.0;
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            (s > 0.0).then(|| row.into_iter().map(|v| v / s).collect())
        })
        .collect())
}

/// Writes `f0,...,f{d-1},noisy_label[,true_label]` with 1-based labels.
pub fn save_csv(data: &NoisyDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push("noisy_label".into());
    if data.true_labels().is_some() {
        header.push("true_label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(|v| format!("{v:.16e}")).collect();
        rec.push((data.noisy_labels()[i] + 1).to_string());
        if let Some(t) = data.true_labels() {
            rec.push((t[i] + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the dataset CSV. `num_classes = None` infers K from the largest
/// label present.
pub fn load_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<NoisyDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let has_true = names.last() == Some(&"true_label");
    let label_cols = if has_true { 2 } else { 1 };
    if names.len() < label_cols + 1 || names[names.len() - label_cols] != "noisy_label" {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be f0,...,noisy_label[,true_label]".into(),
        });
    }
    let d = names.len() - label_cols;
    for (j, name) in names[..d].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column f{j}, found {name}"),
            });
        }
    }
    let mut feats = Vec::new();
    let mut noisy = Vec::new();
    let mut truth = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + label_cols {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", d + label_cols, rec.len()),
            });
        }
        for field in rec.iter().take(d) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad feature value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: "non-finite feature".into() });
            }
            feats.push(v);
        }
        let label = |s: &str| -> Result<usize> {
            let v: usize = s.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad label {s:?}"),
            })?;
            match num_classes {
                _ if v == 0 => Err(Error::Parse { line, msg: "labels are 1-based".into() }),
                Some(k) if v > k => Err(Error::Parse {
                    line,
                    msg: format!("label {v} exceeds {k} classes"),
                }),
                _ => Ok(v - 1),
            }
        };
        noisy.push(label(&rec[d])?);
        if has_true {
            truth.push(label(&rec[d + 1])?);
        }
    }
    let n = noisy.len();
    let k = match num_classes {
        Some(k) => k,
        None => noisy.iter().chain(&truth).max().map_or(2, |m| (m + 1).max(2)),
    };
    let x = Array2::from_shape_vec((n, d), feats).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    NoisyDataset::new(x, noisy, has_true.then_some(truth), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::argmax;

    fn blobs(k: usize, n: usize, sep: f64, seed: u64) -> NoisyDataset {
        generate(&GeneratorSpec {
            kind: GeneratorKind::GaussianBlobs,
            num_classes: k,
            num_samples: n,
            dim: 2,
            separation: sep,
            seed,
        })
        .unwrap()
    }

    fn flip_fraction(d: &NoisyDataset) -> f64 {
        let m = d.clean_mask().unwrap();
        m.iter().filter(|c| !**c).count() as f64 / m.len() as f64
    }

    #[test]
    fn generation_is_balanced_and_deterministic() {
        let a = blobs(4, 4000, 3.0, 1);
        let mut counts = [0; 4];
        for &l in a.noisy_labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, [1000; 4]);
        assert_eq!(a, blobs(4, 4000, 3.0, 1));
        assert_ne!(a, blobs(4, 4000, 3.0, 2));
        assert_eq!(a.true_labels().unwrap(), a.noisy_labels());
    }

    #[test]
    fn far_blobs_are_nearest_mean_separable() {
        let d = blobs(5, 500, 100.0, 3);
        let means = class_means(5, 2, 100.0);
        for (i, &y) in d.noisy_labels().iter().enumerate() {
            let feats = d.features();
            let x = feats.row(i);
            let neg_dist: Vec<f64> = means.rows().into_iter().map(|m| -(&m - &x).mapv(|v| v * v).sum()).collect();
            assert_eq!(argmax(&neg_dist), y);
        }
    }

    #[test]
    fn means_are_at_separation() {
        for (k, d) in [(4, 2), (10, 2), (3, 5), (6, 4), (5, 1)] {
            let m = class_means(k, d, 3.0);
            let mut distinct = m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
            distinct.dedup();
            assert_eq!(distinct.len(), k);
            if d > 1 {
                for r in m.rows() {
                    assert!((r.dot(&r).sqrt() - 3.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rings_generate() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::ConcentricRings,
            num_classes: 3,
            num_samples: 300,
            dim: 3,
            separation: 2.0,
            seed: 4,
        };
        let d = generate(&spec).unwrap();
        let mean_r = |c: usize| {
            let rs: Vec<f64> = (0..300)
                .filter(|i| d.noisy_labels()[*i] == c)
                .map(|i| d.features()[[i, 0]].hypot(d.features()[[i, 1]]))
                .collect();
            rs.iter().sum::<f64>() / rs.len() as f64
        };
        assert!((mean_r(0) - 2.0).abs() < 0.2 && (mean_r(2) - 6.0).abs() < 0.2);
    }

    #[test]
    fn rate_zero_injectors_are_identity() {
        let d = blobs(4, 400, 3.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(inject_symmetric(&d, 0.0, false, &mut rng).unwrap(), d);
        assert_eq!(inject_asymmetric(&d, 0.0, &cyclic_mapping(4), &mut rng).unwrap(), d);
        assert_eq!(inject_instance_dependent(&d, 0.0, 0.0, 1.0, &mut rng).unwrap(), d);
    }

    #[test]
    fn symmetric_flip_fraction() {
        let base = generate(&GeneratorSpec {
            kind: GeneratorKind::GaussianBlobs,
            num_classes: 10,
            num_samples: 50_000,
            dim: 2,
            separation: 3.0,
            seed: 6,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy = inject_symmetric(&base, 0.9, false, &mut rng).unwrap();
        assert!((flip_fraction(&noisy) - 0.9).abs() < 0.01);
        assert_eq!(noisy.features(), base.features());
        assert_eq!(noisy.true_labels(), base.true_labels());
        let t = ground_truth_t(&noisy).unwrap();
        for y in 0..10 {
            assert!((t.get(y, y) - 0.1).abs() < 0.02);
            for z in 0..10 {
                if z != y {
                    assert!((t.get(y, z) - 0.1).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn symmetric_include_self_can_keep_label() {
        let base = blobs(2, 2000, 3.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = inject_symmetric(&base, 0.5, true, &mut rng).unwrap();
        // half the draws land back on the original class
        assert!((flip_fraction(&noisy) - 0.25).abs() < 0.04);
    }

    #[test]
    fn asymmetric_follows_mapping() {
        let base = blobs(4, 8000, 3.0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = cyclic_mapping(4);
        let noisy = inject_asymmetric(&base, 0.4, &m, &mut rng).unwrap();
        for (&y, &o) in base.noisy_labels().iter().zip(noisy.noisy_labels()) {
            assert!(o == y || o == m[y]);
        }
        let t = ground_truth_t(&noisy).unwrap();
        for y in 0..4 {
            assert!((t.get(y, y) - 0.6).abs() < 0.04);
            assert!((t.get(y, m[y]) - 0.4).abs() < 0.04);
        }
        assert!(inject_asymmetric(&base, 0.4, &[1, 0, 2, 3], &mut rng).is_err());
        assert!(inject_asymmetric(&base, 0.4, &[1, 1, 3, 0], &mut rng).is_err());
    }

    #[test]
    fn instance_dependent_rate_and_dependence() {
        let base = generate(&GeneratorSpec {
            kind: GeneratorKind::GaussianBlobs,
            num_classes: 4,
            num_samples: 20_000,
            dim: 2,
            separation: 3.0,
            seed: 12,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noisy = inject_instance_dependent(&base, 0.4, 0.1, 3.0, &mut rng).unwrap();
        assert!((flip_fraction(&noisy) - 0.4).abs() < 0.02);
        // within class 0, the corruption target depends on where the sample lies
        // (tails more than one standard deviation out on either side)
        let norm = |h: [f64; 4]| {
            let s: f64 = h.iter().sum();
            h.map(|v| v / s)
        };
        let tv_along = |axis: usize| {
            let mut hist = [[0.0f64; 4]; 2];
            for i in 0..20_000 {
                let (y, o) = (base.noisy_labels()[i], noisy.noisy_labels()[i]);
                if y == 0 && o != 0 {
                    let off = base.features()[[i, axis]] - class_means(4, 2, 3.0)[[0, axis]];
                    if off.abs() > 1.0 {
                        hist[(off > 0.0) as usize][o] += 1.0;
                    }
                }
            }
            let (a, b) = (norm(hist[0]), norm(hist[1]));
            0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
        };
        let tv = tv_along(0).max(tv_along(1));
        assert!(tv > 0.05, "tv={tv}");
    }

    #[test]
    fn ground_truth_identity_when_clean() {
        let d = blobs(3, 30, 2.0, 1);
        assert_eq!(ground_truth_t(&d).unwrap(), CorruptionMatrix::identity(3));
        assert!(ground_truth_t(&d.without_true_labels()).is_err());
        let tiny = NoisyDataset::new(Array2::zeros((2, 1)), vec![0, 0], Some(vec![0, 0]), 2).unwrap();
        assert!(ground_truth_t(&tiny).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = blobs(3, 60, 2.0, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let d = inject_symmetric(&base, 0.3, false, &mut rng).unwrap();
        let p = dir.path().join("d.csv");
        save_csv(&d, &p).unwrap();
        assert_eq!(load_csv(&p, Some(3)).unwrap(), d);
        assert_eq!(load_csv(&p, None).unwrap(), d);

        let q = dir.path().join("n.csv");
        save_csv(&d.without_true_labels(), &q).unwrap();
        let back = load_csv(&q, Some(3)).unwrap();
        assert!(back.true_labels().is_none());
        assert_eq!(back.noisy_labels(), d.noisy_labels());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "f0,f1,noisy_label\n0.5,1.0,3\n0.1,0.2,0\n").unwrap();
        match load_csv(&p, Some(10)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "f0,f1,noisy_label\n0.5,1.0\n").unwrap();
        assert!(matches!(load_csv(&p, Some(10)), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "f0,f1,noisy_label\n0.5,abc,1\n").unwrap();
        assert!(matches!(load_csv(&p, Some(10)), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "f0,f1,noisy_label\n0.5,1.0,11\n").unwrap();
        assert!(matches!(load_csv(&p, Some(10)), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn noise_spec_validation() {
        let spec = NoiseSpec { rate: 1.0, ..Default::default() };
        assert!(spec.validate(4).is_err());
        let spec = NoiseSpec { mapping: Some(vec![1, 3, 4, 2]), ..Default::default() };
        assert!(spec.validate(4).is_err());
        let spec = NoiseSpec { mapping: Some(vec![2, 3, 4, 1]), ..Default::default() };
        assert!(spec.validate(4).is_ok());
    }
}
