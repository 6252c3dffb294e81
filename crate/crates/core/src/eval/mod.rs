//! Clustering accuracy under the best cluster-to-class matching, and the
//! k-means baseline.

mod hungarian;
mod kmeans;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

pub use hungarian::{hungarian, Assignment};
pub use kmeans::{kmeans, KMeansResult};

use crate::error::{Error, Result};

/// How Old/New accuracies are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Matching {
    /// One matching over all samples, reused for both subsets.
    #[default]
    Global,
    /// Old and New are each matched separately. `acc_all` still uses the
    /// global matching, so the weighted-mean identity need not hold.
    PerSubset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccReport {
    pub acc_all: f64,
    /// 0 when there are no old-class samples.
    pub acc_old: f64,
    /// 0 when there are no new-class samples.
    pub acc_new: f64,
    /// `assignment[cluster]` is the matched class.
    pub assignment: Vec<usize>,
    /// `confusion[cluster][class]` co-occurrence counts.
    pub confusion: Vec<Vec<u64>>,
    pub n_old: usize,
    pub n_new: usize,
    pub matching: Matching,
}

impl AccReport {
    pub fn total(&self) -> usize {
        self.n_old + self.n_new
    }
}

fn best_matching(pred: &[usize], truth: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![vec![0.0; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1.0;
    }
    let cost: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|c| -c).collect())
        .collect();
    Ok(hungarian(&cost)?.rows_to_cols)
}

fn hits(
    pred: &[usize],
    truth: &[usize],
    map: &[usize],
    keep: impl Fn(usize) -> bool,
) -> (usize, usize) {
    pred.iter()
        .zip(truth)
        .filter(|(_, &t)| keep(t))
        .fold((0, 0), |(h, n), (&p, &t)| {
            (h + usize::from(map[p] == t), n + 1)
        })
}

fn ratio(h: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        h as f64 / n as f64
    }
}

/// All/Old/New accuracy of cluster ids `pred` against classes `truth`, both in `[0, k)`.
pub fn cluster_acc(
    pred: &[usize],
    truth: &[usize],
    k: usize,
    old_classes: Range<usize>,
) -> Result<AccReport> {
    cluster_acc_with(pred, truth, k, old_classes, Matching::Global)
}

pub fn cluster_acc_with(
    pred: &[usize],
    truth: &[usize],
    k: usize,
    old_classes: Range<usize>,
    matching: Matching,
) -> Result<AccReport> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("cluster_acc on empty input".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} predictions but {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(bad) = pred.iter().chain(truth).find(|&&v| v >= k) {
        return Err(Error::InvalidArgument(alloc::format!(
            "id {bad} outside [0, {k})"
        )));
    }
    let is_old = |t: usize| old_classes.contains(&t);
    let global = best_matching(pred, truth, k)?;
    let (h_all, n_all) = hits(pred, truth, &global, |_| true);
    let (old_map, new_map) = match matching {
        Matching::Global => (global.clone(), global.clone()),
        Matching::PerSubset => {
            let split = |old: bool| -> (Vec<usize>, Vec<usize>) {
                pred.iter()
                    .zip(truth)
                    .filter(|(_, &t)| is_old(t) == old)
                    .map(|(&p, &t)| (p, t))
                    .unzip()
            };
            let (po, to) = split(true);
            let (pn, tn) = split(false);
            (best_matching(&po, &to, k)?, best_matching(&pn, &tn, k)?)
        }
    };
    let (h_old, n_old) = hits(pred, truth, &old_map, is_old);
    let (h_new, n_new) = hits(pred, truth, &new_map, |t| !is_old(t));

    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    Ok(AccReport {
        acc_all: ratio(h_all, n_all),
        acc_old: ratio(h_old, n_old),
        acc_new: ratio(h_new, n_new),
        assignment: global,
        confusion,
        n_old,
        n_new,
        matching,
    })
}
