//! Problem instances: labeled/unlabeled splits over embedding vectors.
//!
//! Class ids are canonical: old (labeled) classes occupy `[0, N)` and new
//! classes `[N, K)`. Ground truth of unlabeled samples is kept on the
//! dataset, but the training path only sees it through [`TrainingView`],
//! which hides it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SplitTag {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    /// Required for labeled samples; optional ground truth for unlabeled ones.
    pub true_class: Option<usize>,
    pub split: SplitTag,
}

/// A sample before the labeled/unlabeled split.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub features: Vec<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    samples: Vec<Sample>,
    num_old: usize,
    k: usize,
    dim: usize,
    theta: f64,
}

impl SplitDataset {
    /// Validates a canonical dataset. `theta` is recomputed from ground truth
    /// when every unlabeled sample carries it; otherwise `theta_override` is
    /// required.
    pub fn new(
        samples: Vec<Sample>,
        num_old: usize,
        k: usize,
        theta_override: Option<f64>,
    ) -> Result<Self> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidDataset(msg));
        if num_old == 0 || num_old >= k {
            return bad(format!("need 0 < N < K, got N={num_old}, K={k}"));
        }
        let dim = match samples.first() {
            Some(s) => s.features.len(),
            None => return bad("no samples".into()),
        };
        if dim == 0 {
            return bad("zero feature dimension".into());
        }
        let mut n_unlabeled = 0usize;
        let mut n_unlabeled_old = 0usize;
        let mut full_truth = true;
        for s in &samples {
            if s.features.len() != dim {
                return bad(format!(
                    "sample {} has dimension {}, expected {dim}",
                    s.id,
                    s.features.len()
                ));
            }
            if let Some(i) = s.features.iter().position(|v| !v.is_finite()) {
                return bad(format!("sample {} has a non-finite feature at {i}", s.id));
            }
            if let Some(c) = s.true_class {
                if c >= k {
                    return bad(format!("sample {} has class {c} outside [0, {k})", s.id));
                }
            }
            match (s.split, s.true_class) {
                (SplitTag::Labeled, None) => {
                    return bad(format!("labeled sample {} has no class", s.id));
                }
                (SplitTag::Labeled, Some(c)) if c >= num_old => {
                    return bad(format!(
                        "labeled sample {} carries new class {c}; labeled classes must be old (< {num_old})",
                        s.id
                    ));
                }
                (SplitTag::Labeled, _) => {}
                (SplitTag::Unlabeled, c) => {
                    n_unlabeled += 1;
                    match c {
                        Some(c) if c < num_old => n_unlabeled_old += 1,
                        Some(_) => {}
                        None => full_truth = false,
                    }
                }
            }
        }
        if n_unlabeled == 0 {
            return bad("unlabeled set is empty".into());
        }
        let theta = if full_truth {
            n_unlabeled_old as f64 / n_unlabeled as f64
        } else {
            match theta_override {
                Some(t) if (0.0..=1.0).contains(&t) => t,
                _ => {
                    return bad("theta must be given when unlabeled ground truth is missing".into())
                }
            }
        };
        Ok(Self {
            samples,
            num_old,
            k,
            dim,
            theta,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_old(&self) -> usize {
        self.num_old
    }

    pub fn num_new(&self) -> usize {
        self.k - self.num_old
    }

    pub fn old_classes(&self) -> core::ops::Range<usize> {
        0..self.num_old
    }

    pub fn new_classes(&self) -> core::ops::Range<usize> {
        self.num_old..self.k
    }

    pub fn is_old(&self, class: usize) -> bool {
        class < self.num_old
    }

    /// Fraction of old-class samples within the unlabeled set.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.split == SplitTag::Labeled)
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .filter(|s| s.split == SplitTag::Unlabeled)
    }

    pub fn has_full_ground_truth(&self) -> bool {
        self.samples.iter().all(|s| s.true_class.is_some())
    }

    /// Ground truth of the unlabeled set, in sample order. Evaluation only.
    pub fn unlabeled_ground_truth(&self) -> Result<Vec<usize>> {
        self.unlabeled()
            .map(|s| {
                s.true_class.ok_or_else(|| {
                    Error::InvalidDataset(format!("unlabeled sample {} has no ground truth", s.id))
                })
            })
            .collect()
    }

    /// Per-class sample counts over the whole dataset (ground truth where known).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for c in self.samples.iter().filter_map(|s| s.true_class) {
            counts[c] += 1;
        }
        counts
    }

    /// The label-stripped view consumed by training.
    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            dataset: self,
            all_labeled: false,
        }
    }

    /// A view in which every sample carries its true class, for training a
    /// fully supervised reference model. Needs full ground truth.
    pub fn fully_supervised_view(&self) -> Result<TrainingView<'_>> {
        if !self.has_full_ground_truth() {
            return Err(Error::InvalidDataset(
                "full supervision needs ground truth for every sample".into(),
            ));
        }
        Ok(TrainingView {
            dataset: self,
            all_labeled: true,
        })
    }
}

/// Features of every sample, labels of labeled samples only.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    dataset: &'a SplitDataset,
    all_labeled: bool,
}

impl TrainingView<'_> {
    pub fn len(&self) -> usize {
        self.dataset.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim
    }

    pub fn k(&self) -> usize {
        self.dataset.k
    }

    pub fn num_old(&self) -> usize {
        self.dataset.num_old
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.dataset.samples[i].features
    }

    pub fn id(&self, i: usize) -> u64 {
        self.dataset.samples[i].id
    }

    /// `Some(class)` for labeled samples, `None` for unlabeled ones.
    pub fn label(&self, i: usize) -> Option<usize> {
        let s = &self.dataset.samples[i];
        match s.split {
            SplitTag::Labeled => s.true_class,
            SplitTag::Unlabeled if self.all_labeled => s.true_class,
            SplitTag::Unlabeled => None,
        }
    }
}

/// Parameters of the Gaussian-mixture generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SyntheticSpec {
    pub k: usize,
    pub num_old: usize,
    pub dim: usize,
    pub per_class_counts: Vec<usize>,
    /// Pairwise distance between class means before overlap is applied.
    pub class_separation: f64,
    /// `(class_a, class_b, strength)`; strength in [0, 1] pulls the two means
    /// together so their distance becomes `(1 − 0.8·strength)·separation`.
    pub overlap_pairs: Vec<(usize, usize, f64)>,
    pub noise_std: f64,
    pub labeled_fraction: f64,
    /// Extra class-independent dimensions appended after the `dim`
    /// informative ones, each `N(0, nuisance_std²)`.
    pub nuisance_dims: usize,
    pub nuisance_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            k: 7,
            num_old: 4,
            dim: 16,
            per_class_counts: vec![100; 7],
            class_separation: 4.0,
            overlap_pairs: Vec::new(),
            noise_std: 1.0,
            labeled_fraction: 0.5,
            nuisance_dims: 0,
            nuisance_std: 0.0,
        }
    }
}

/// Class means before overlap: scaled basis vectors (exact pairwise distance)
/// when `dim >= k`, otherwise random directions on a sphere of the same radius.
fn class_means(spec: &SyntheticSpec, seed: u64) -> Vec<Vec<f64>> {
    let radius = spec.class_separation / core::f64::consts::SQRT_2;
    let mut r = rng_for(seed, &[rng::TAG_MEANS]);
    let mut means: Vec<Vec<f64>> = (0..spec.k)
        .map(|c| {
            if spec.dim >= spec.k {
                let mut m = vec![0.0; spec.dim];
                m[c] = radius;
                m
            } else {
                let v: Vec<f64> = (0..spec.dim)
                    .map(|_| StandardNormal.sample(&mut r))
                    .collect();
                let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
                v.into_iter().map(|x| x * radius / n).collect()
            }
        })
        .collect();
    for &(a, b, strength) in &spec.overlap_pairs {
        let pull = 0.4 * strength;
        let (ma, mb) = (means[a].clone(), means[b].clone());
        for j in 0..spec.dim {
            let mid = 0.5 * (ma[j] + mb[j]);
            means[a][j] += pull * 2.0 * (mid - ma[j]);
            means[b][j] += pull * 2.0 * (mid - mb[j]);
        }
    }
    means
}

/// Samples a Gaussian mixture and splits it with [`make_gface_split`].
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SplitDataset> {
    let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
    if spec.num_old == 0 || spec.num_old >= spec.k {
        return bad(format!(
            "need 0 < N < K, got N={}, K={}",
            spec.num_old, spec.k
        ));
    }
    if spec.dim < 2 {
        return bad("feature dimension must be at least 2".into());
    }
    if spec.per_class_counts.len() != spec.k || spec.per_class_counts.contains(&0) {
        return bad("per_class_counts needs K positive entries".into());
    }
    if !(spec.class_separation.is_finite() && spec.class_separation > 0.0)
        || !(spec.noise_std.is_finite() && spec.noise_std >= 0.0)
        || !(spec.nuisance_std.is_finite() && spec.nuisance_std >= 0.0)
    {
        return bad("separation must be positive and noise nonnegative".into());
    }
    for &(a, b, s) in &spec.overlap_pairs {
        if a >= spec.k || b >= spec.k || a == b || !(0.0..=1.0).contains(&s) {
            return bad(format!("invalid overlap pair ({a}, {b}, {s})"));
        }
    }
    let means = class_means(spec, seed);
    let mut r = rng_for(seed, &[rng::TAG_SAMPLES]);
    let mut nr = rng_for(seed, &[rng::TAG_NUISANCE]);
    let mut raw = Vec::with_capacity(spec.per_class_counts.iter().sum());
    for (c, &count) in spec.per_class_counts.iter().enumerate() {
        for _ in 0..count {
            let mut features: Vec<f64> = means[c]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    m + spec.noise_std * z
                })
                .collect();
            for _ in 0..spec.nuisance_dims {
                let z: f64 = StandardNormal.sample(&mut nr);
                features.push(spec.nuisance_std * z);
            }
            raw.push(RawSample { features, class: c });
        }
    }
    let old: Vec<usize> = (0..spec.num_old).collect();
    make_gface_split(raw, &old, spec.labeled_fraction, seed)
}

/// Tags `floor(labeled_fraction · count)` samples of every old class as
/// labeled (stratified, seeded); everything else is unlabeled. Classes are
/// remapped so old classes come first, each group in ascending id order.
pub fn make_gface_split(
    samples: Vec<RawSample>,
    old_classes: &[usize],
    labeled_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "labeled_fraction must lie in (0, 1)".into(),
        ));
    }
    if old_classes.is_empty() {
        return Err(Error::InvalidDataset(
            "no old classes: no labeled data possible".into(),
        ));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.class).or_default().push(i);
    }
    let mut old_sorted = old_classes.to_vec();
    old_sorted.sort_unstable();
    old_sorted.dedup();
    for &c in &old_sorted {
        let n = by_class.get(&c).map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::InvalidDataset(format!(
                "old class {c} has {n} samples; at least 2 are required"
            )));
        }
    }
    let new_sorted: Vec<usize> = by_class
        .keys()
        .copied()
        .filter(|c| old_sorted.binary_search(c).is_err())
        .collect();
    if new_sorted.is_empty() {
        return Err(Error::InvalidDataset("no new classes present".into()));
    }
    let remap: BTreeMap<usize, usize> = old_sorted
        .iter()
        .chain(&new_sorted)
        .enumerate()
        .map(|(canonical, &orig)| (orig, canonical))
        .collect();

    let mut labeled = vec![false; samples.len()];
    for &c in &old_sorted {
        let members = &by_class[&c];
        let take = libm::floor(labeled_fraction * members.len() as f64) as usize;
        let mut r = rng_for(seed, &[rng::TAG_SPLIT, c as u64]);
        for pick in index::sample(&mut r, members.len(), take) {
            labeled[members[pick]] = true;
        }
    }
    let num_old = old_sorted.len();
    let k = num_old + new_sorted.len();
    let out = samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sample {
            id: i as u64,
            features: s.features,
            true_class: Some(remap[&s.class]),
            split: if labeled[i] {
                SplitTag::Labeled
            } else {
                SplitTag::Unlabeled
            },
        })
        .collect();
    SplitDataset::new(out, num_old, k, None)
}

/// Embedding-space augmentation: additive Gaussian noise, then coordinate masking.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AugmentSpec {
    pub noise_sigma: f64,
    pub mask_fraction: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            mask_fraction: 0.1,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0)
            || !(0.0..1.0).contains(&self.mask_fraction)
        {
            return Err(Error::InvalidArgument(format!(
                "invalid augmentation {self:?}"
            )));
        }
        Ok(())
    }

    fn view(&self, features: &[f64], r: &mut rng::Rng) -> Vec<f64> {
        let mut v: Vec<f64> = features.to_vec();
        if self.noise_sigma > 0.0 {
            for x in &mut v {
                let z: f64 = StandardNormal.sample(r);
                *x += self.noise_sigma * z;
            }
        }
        let masked = libm::floor(self.mask_fraction * v.len() as f64) as usize;
        if masked > 0 {
            for j in index::sample(r, v.len(), masked) {
                v[j] = 0.0;
            }
        }
        v
    }
}

/// Two independently augmented views of `features`.
pub fn augment_two_views(features: &[f64], spec: &AugmentSpec, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r1 = rng_for(seed, &[rng::TAG_AUGMENT, 1]);
    let mut r2 = rng_for(seed, &[rng::TAG_AUGMENT, 2]);
    (spec.view(features, &mut r1), spec.view(features, &mut r2))
}

/// One mini-batch: dataset indices and which of them are labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labeled: Vec<bool>,
}

impl Batch {
    /// Positions (within the batch) of labeled members.
    pub fn labeled_positions(&self) -> Vec<usize> {
        (0..self.indices.len())
            .filter(|&p| self.labeled[p])
            .collect()
    }

    pub fn unlabeled_positions(&self) -> Vec<usize> {
        (0..self.indices.len())
            .filter(|&p| !self.labeled[p])
            .collect()
    }
}

/// Seeded shuffle of the whole dataset, chunked into batches; the final
/// partial batch is kept.
pub fn batches(view: &TrainingView<'_>, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 2".into(),
        ));
    }
    let mut order: Vec<usize> = (0..view.len()).collect();
    order.shuffle(&mut rng_for(seed, &[rng::TAG_BATCH]));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch {
            indices: chunk.to_vec(),
            labeled: chunk.iter().map(|&i| view.label(i).is_some()).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(counts: &[(usize, usize)]) -> Vec<RawSample> {
        counts
            .iter()
            .flat_map(|&(c, n)| {
                (0..n).map(move |i| RawSample {
                    features: vec![c as f64, i as f64],
                    class: c,
                })
            })
            .collect()
    }

    #[test]
    fn default_synthetic_arithmetic() {
        let d = generate_synthetic(&SyntheticSpec::default(), 7).unwrap();
        assert_eq!(d.labeled().count(), 200);
        assert_eq!(d.unlabeled().count(), 500);
        assert_eq!(d.theta(), 0.4);
        assert_eq!(d.k(), 7);
        assert_eq!(d.num_old(), 4);
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let mut s = SyntheticSpec::default();
        s.num_old = 7;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = SyntheticSpec::default();
        s.per_class_counts[3] = 0;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = SyntheticSpec::default();
        s.dim = 1;
        assert!(generate_synthetic(&s, 0).is_err());
    }

    #[test]
    fn overlap_pulls_means_together() {
        let spec = SyntheticSpec {
            overlap_pairs: vec![(1, 5, 1.0)],
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec, 3).unwrap();
        let mean_of = |c: usize| {
            let members: Vec<&Sample> = d
                .samples()
                .iter()
                .filter(|s| s.true_class == Some(c))
                .collect();
            let mut m = vec![0.0; d.dim()];
            for s in &members {
                for (a, b) in m.iter_mut().zip(&s.features) {
                    *a += b / members.len() as f64;
                }
            }
            m
        };
        let (a, b) = (mean_of(1), mean_of(5));
        let dist = libm::sqrt(
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>(),
        );
        assert!(dist < spec.class_separation / 2.0, "distance {dist}");
    }

    #[test]
    fn split_half_of_each_old_class() {
        let d = make_gface_split(raw(&[(0, 10), (1, 4)]), &[0], 0.5, 1).unwrap();
        let lab: Vec<_> = d.labeled().collect();
        assert_eq!(lab.len(), 5);
        assert!(lab.iter().all(|s| s.true_class == Some(0)));
        assert_eq!(d.unlabeled().filter(|s| s.true_class == Some(0)).count(), 5);
        assert_eq!(d.theta(), 5.0 / 9.0);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        assert!(make_gface_split(raw(&[(3, 10)]), &[], 0.5, 1).is_err());
        assert!(make_gface_split(raw(&[(0, 1), (1, 5)]), &[0], 0.5, 1).is_err());
        assert!(make_gface_split(raw(&[(0, 4), (1, 5)]), &[0], 1.0, 1).is_err());
        // only old classes present
        assert!(make_gface_split(raw(&[(0, 4)]), &[0], 0.5, 1).is_err());
    }

    #[test]
    fn split_seeds_change_subset_not_counts() {
        let a = make_gface_split(raw(&[(0, 20), (1, 20), (2, 6)]), &[0, 1], 0.5, 1).unwrap();
        let b = make_gface_split(raw(&[(0, 20), (1, 20), (2, 6)]), &[0, 1], 0.5, 2).unwrap();
        let ids = |d: &SplitDataset| d.labeled().map(|s| s.id).collect::<Vec<_>>();
        assert_ne!(ids(&a), ids(&b));
        let per_class = |d: &SplitDataset| {
            (0..2)
                .map(|c| d.labeled().filter(|s| s.true_class == Some(c)).count())
                .collect::<Vec<_>>()
        };
        assert_eq!(per_class(&a), per_class(&b));
    }

    #[test]
    fn split_remaps_old_classes_first() {
        let d = make_gface_split(raw(&[(5, 4), (2, 4), (9, 4)]), &[9], 0.5, 0).unwrap();
        assert_eq!(d.num_old(), 1);
        // original 9 -> 0, 2 -> 1, 5 -> 2
        assert!(d
            .labeled()
            .all(|s| s.true_class == Some(0) && s.features[0] == 9.0));
        assert!(d
            .samples()
            .iter()
            .filter(|s| s.features[0] == 2.0)
            .all(|s| s.true_class == Some(1)));
    }

    #[test]
    fn dataset_rejects_labeled_new_class() {
        let samples = vec![
            Sample {
                id: 0,
                features: vec![0.0],
                true_class: Some(1),
                split: SplitTag::Labeled,
            },
            Sample {
                id: 1,
                features: vec![0.0],
                true_class: Some(0),
                split: SplitTag::Unlabeled,
            },
        ];
        assert!(matches!(
            SplitDataset::new(samples, 1, 2, None),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn missing_truth_needs_theta() {
        let samples = vec![
            Sample {
                id: 0,
                features: vec![0.0],
                true_class: Some(0),
                split: SplitTag::Labeled,
            },
            Sample {
                id: 1,
                features: vec![0.0],
                true_class: None,
                split: SplitTag::Unlabeled,
            },
        ];
        assert!(SplitDataset::new(samples.clone(), 1, 2, None).is_err());
        let d = SplitDataset::new(samples, 1, 2, Some(0.3)).unwrap();
        assert_eq!(d.theta(), 0.3);
        assert!(d.unlabeled_ground_truth().is_err());
    }

    #[test]
    fn training_view_hides_unlabeled_truth() {
        let d = generate_synthetic(&SyntheticSpec::default(), 1).unwrap();
        let v = d.training_view();
        for (i, s) in d.samples().iter().enumerate() {
            match s.split {
                SplitTag::Labeled => assert_eq!(v.label(i), s.true_class),
                SplitTag::Unlabeled => assert_eq!(v.label(i), None),
            }
        }
    }

    #[test]
    fn augmentation_examples() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 + 1.0).collect();
        let zero = AugmentSpec {
            noise_sigma: 0.0,
            mask_fraction: 0.0,
        };
        assert_eq!(augment_two_views(&x, &zero, 3), (x.clone(), x.clone()));

        let noisy = AugmentSpec {
            noise_sigma: 0.1,
            mask_fraction: 0.0,
        };
        let a = augment_two_views(&x, &noisy, 3);
        assert_eq!(a, augment_two_views(&x, &noisy, 3));
        assert_ne!(a, augment_two_views(&x, &noisy, 4));
        assert_ne!(a.0, a.1);

        let mask = AugmentSpec {
            noise_sigma: 0.0,
            mask_fraction: 0.25,
        };
        let (v1, v2) = augment_two_views(&x, &mask, 9);
        assert_eq!(v1.iter().filter(|&&v| v == 0.0).count(), 2);
        assert_eq!(v2.iter().filter(|&&v| v == 0.0).count(), 2);
    }

    #[test]
    fn batch_partition_and_determinism() {
        let d = make_gface_split(raw(&[(0, 4), (1, 6)]), &[0], 0.5, 0).unwrap();
        let v = d.training_view();
        let b = batches(&v, 4, 5).unwrap();
        assert_eq!(
            b.iter().map(|x| x.indices.len()).collect::<Vec<_>>(),
            vec![4, 4, 2]
        );
        assert_eq!(b, batches(&v, 4, 5).unwrap());
        let mut all: Vec<usize> = b.iter().flat_map(|x| x.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for batch in &b {
            for (p, &i) in batch.indices.iter().enumerate() {
                assert_eq!(batch.labeled[p], v.label(i).is_some());
            }
        }
        assert!(batches(&v, 1, 0).is_err());
    }
}
