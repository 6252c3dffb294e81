//! The prediction-discrepancy metric, its mixture decomposition over the
//! unlabeled set, the F-discrepancy over a finite hypothesis family, and an
//! empirical check of the new-class discrepancy bound.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::eval::cluster_acc;
use crate::model::{argmax, ModelParams};
use crate::numcore::Tensor;
use crate::rng::{self, rng_for};

const STOCHASTIC_TOL: f64 = 1e-9;

fn check_stochastic(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(v.is_finite() && *v >= -STOCHASTIC_TOL)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidArgument(alloc::format!(
            "not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// Euclidean distance between two probability vectors.
pub fn xi_pointwise(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            op: "xi_pointwise",
            lhs: vec![p.len()],
            rhs: vec![q.len()],
        });
    }
    check_stochastic(p)?;
    check_stochastic(q)?;
    Ok(libm::sqrt(
        p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
    ))
}

/// Row-wise `xi_pointwise` between two `[n, K]` probability matrices.
pub fn xi_rows(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    if a.shape() != b.shape() || a.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "xi_dataset",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    (0..a.rows()).map(|i| xi_pointwise(a.row(i), b.row(i))).collect()
}

/// Mean pointwise discrepancy over a dataset.
pub fn xi_dataset(a: &Tensor, b: &Tensor) -> Result<f64> {
    let d = xi_rows(a, b)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Labels as one-hot probability rows.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut data = vec![0.0; labels.len() * k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(alloc::format!("label {y} outside [0, {k})")));
        }
        data[i * k + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub xi_u: f64,
    /// 0 when there are no old-class samples.
    pub xi_old: f64,
    /// 0 when there are no new-class samples.
    pub xi_new: f64,
    pub theta: f64,
    /// `|ξ_U − ((1−θ)·ξ_new + θ·ξ_old)|`.
    pub residual: f64,
}

/// Splits `ξ_U(H, F̂)` into its old- and new-class parts.
pub fn decompose_check(h: &Tensor, truth: &Tensor, is_old: &[bool]) -> Result<Decomposition> {
    let d = xi_rows(h, truth)?;
    if d.len() != is_old.len() {
        return Err(Error::InvalidArgument("one old/new tag per row".into()));
    }
    let mean = |keep: bool| -> (f64, usize) {
        let v: Vec<f64> = d.iter().zip(is_old).filter(|(_, &o)| o == keep).map(|(x, _)| *x).collect();
        let n = v.len();
        (if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 }, n)
    };
    let (xi_old, n_old) = mean(true);
    let (xi_new, _) = mean(false);
    let xi_u = d.iter().sum::<f64>() / d.len() as f64;
    let theta = n_old as f64 / d.len() as f64;
    Ok(Decomposition {
        xi_u,
        xi_old,
        xi_new,
        theta,
        residual: (xi_u - ((1.0 - theta) * xi_new + theta * xi_old)).abs(),
    })
}

/// A hypothesis evaluated on the labeled and unlabeled sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub id: String,
    pub labeled: Tensor,
    pub unlabeled: Tensor,
}

/// Something that maps inputs to class-probability rows.
pub trait Hypothesis {
    fn id(&self) -> String;
    fn probs(&self, inputs: &[&[f64]]) -> Result<Tensor>;

    fn evaluate(&self, labeled: &[&[f64]], unlabeled: &[&[f64]]) -> Result<Evaluated> {
        Ok(Evaluated {
            id: self.id(),
            labeled: self.probs(labeled)?,
            unlabeled: self.probs(unlabeled)?,
        })
    }
}

/// A model's main head, with its output columns optionally permuted so that
/// column `j` of the result is model column `columns[j]`.
#[derive(Debug, Clone)]
pub struct ModelHypothesis {
    pub id: String,
    pub params: ModelParams,
    pub tau: f64,
    pub columns: Option<Vec<usize>>,
}

impl Hypothesis for ModelHypothesis {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn probs(&self, inputs: &[&[f64]]) -> Result<Tensor> {
        let p = self.params.predict_probs(inputs, self.tau)?;
        match &self.columns {
            None => Ok(p),
            Some(cols) => {
                let data = (0..p.rows())
                    .flat_map(|i| cols.iter().map(move |&c| (i, c)))
                    .map(|(i, c)| p.row(i)[c])
                    .collect();
                Tensor::new(p.shape().to_vec(), data)
            }
        }
    }
}

/// `max` over ordered pairs `(H, H')` of the family of `|ξ_U(H,H') − α·ξ_L(H,H')|`.
pub fn f_discrepancy(family: &[Evaluated], alpha: f64) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty hypothesis family".into()));
    }
    let mut best = 0.0f64;
    for a in family {
        for b in family {
            let v = (xi_dataset(&a.unlabeled, &b.unlabeled)? - alpha * xi_dataset(&a.labeled, &b.labeled)?).abs();
            best = best.max(v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `ξ_L(H, F)`.
    pub xi_l: f64,
    /// `ξ_U(H, F̂)`.
    pub xi_u: f64,
    pub xi_u_old: f64,
    pub xi_u_new: f64,
    pub theta: f64,
    pub alpha: f64,
    pub delta: f64,
    /// `α·ξ_L(H*, F) + ξ_U(H*, F̂)`.
    pub lambda_const: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `ξ_L(H, F) ≤ ξ_U_old`.
    pub assumption_holds: bool,
    /// `α > θ`.
    pub coefficient_positive: bool,
    pub margin: f64,
    pub family_size: usize,
}

impl BoundReport {
    /// Whether the inequality is asserted (assumption holds, coefficient positive, θ < 1).
    pub fn applicable(&self) -> bool {
        self.assumption_holds && self.coefficient_positive && self.theta < 1.0
    }

    /// `Some(lhs ≤ rhs)` when applicable.
    pub fn holds(&self) -> Option<bool> {
        self.applicable().then_some(self.lhs <= self.rhs)
    }
}

/// Evaluates every quantity of the bound for `h`, the reference `h_star` and
/// a family that should contain both. `f_labeled` / `f_unlabeled` are the
/// one-hot ground truths of the two sets.
pub fn lemma1_check(
    h: &Evaluated,
    h_star: &Evaluated,
    family: &[Evaluated],
    f_labeled: &Tensor,
    f_unlabeled: &Tensor,
    is_old: &[bool],
    alpha: f64,
) -> Result<BoundReport> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let xi_l = xi_dataset(&h.labeled, f_labeled)?;
    let dec = decompose_check(&h.unlabeled, f_unlabeled, is_old)?;
    let delta = f_discrepancy(family, alpha)?;
    let lambda_const = alpha * xi_dataset(&h_star.labeled, f_labeled)?
        + xi_dataset(&h_star.unlabeled, f_unlabeled)?;
    let theta = dec.theta;
    let rhs = if theta < 1.0 {
        ((alpha - theta) * xi_l + delta + lambda_const) / (1.0 - theta)
    } else {
        f64::INFINITY
    };
    let lhs = dec.xi_new;
    Ok(BoundReport {
        xi_l,
        xi_u: dec.xi_u,
        xi_u_old: dec.xi_old,
        xi_u_new: dec.xi_new,
        theta,
        alpha,
        delta,
        lambda_const,
        lhs,
        rhs,
        assumption_holds: xi_l <= dec.xi_old,
        coefficient_positive: alpha > theta,
        margin: rhs - lhs,
        family_size: family.len(),
    })
}

/// Copies of `params` with Gaussian noise of `scale` times each block's RMS added.
pub fn perturbed_copies(params: &ModelParams, n: usize, scale: f64, seed: u64) -> Result<Vec<ModelParams>> {
    (0..n)
        .map(|i| {
            let mut r = rng_for(seed, &[rng::TAG_PERTURB, i as u64]);
            let mut p = params.clone();
            for block in p.blocks_mut() {
                let rms = libm::sqrt(block.data().iter().map(|v| v * v).sum::<f64>() / block.len() as f64);
                for v in block.data_mut() {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *v += scale * rms * z;
                }
            }
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct BoundCheckConfig {
    pub alpha: f64,
    pub n_perturb: usize,
    /// Perturbation size relative to each parameter block's RMS.
    pub perturb_scale: f64,
    /// Temperature of the hypotheses' softmax.
    pub tau: f64,
    pub seed: u64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            n_perturb: 8,
            perturb_scale: 0.1,
            tau: 0.1,
            seed: 0,
        }
    }
}

/// Runs the bound check for a trained model `h` and a fully supervised
/// reference `h_star` on a dataset with full ground truth.
///
/// `h`'s output columns are first matched to classes (Hungarian matching on
/// the unlabeled set) since its new-class prototypes carry no class identity;
/// perturbed copies of `h` share that matching.
pub fn bound_check(
    dataset: &SplitDataset,
    h: &ModelParams,
    h_star: &ModelParams,
    cfg: &BoundCheckConfig,
) -> Result<BoundReport> {
    if !dataset.has_full_ground_truth() {
        return Err(Error::InvalidDataset("the bound check needs full ground truth".into()));
    }
    let k = dataset.k();
    let labeled: Vec<&[f64]> = dataset.labeled().map(|s| s.features.as_slice()).collect();
    let unlabeled: Vec<&[f64]> = dataset.unlabeled().map(|s| s.features.as_slice()).collect();
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::InvalidDataset("both splits must be nonempty".into()));
    }
    let truth_l: Vec<usize> = dataset.labeled().filter_map(|s| s.true_class).collect();
    let truth_u = dataset.unlabeled_ground_truth()?;
    let is_old: Vec<bool> = truth_u.iter().map(|&c| dataset.is_old(c)).collect();

    let raw = h.predict_probs(&unlabeled, cfg.tau)?;
    let pred: Vec<usize> = (0..raw.rows()).map(|i| argmax(raw.row(i))).collect();
    let acc = cluster_acc(&pred, &truth_u, k, dataset.old_classes())?;
    let mut columns = vec![0; k];
    for (cluster, &class) in acc.assignment.iter().enumerate() {
        columns[class] = cluster;
    }

    let hyp = |id: String, params: ModelParams, columns: Option<Vec<usize>>| ModelHypothesis {
        id,
        params,
        tau: cfg.tau,
        columns,
    };
    let h_eval = hyp("H".into(), h.clone(), Some(columns.clone())).evaluate(&labeled, &unlabeled)?;
    let star_eval = hyp("H*".into(), h_star.clone(), None).evaluate(&labeled, &unlabeled)?;
    let mut family = vec![h_eval.clone(), star_eval.clone()];
    for (i, p) in perturbed_copies(h, cfg.n_perturb, cfg.perturb_scale, cfg.seed)?
        .into_iter()
        .enumerate()
    {
        family.push(hyp(alloc::format!("H~{i}"), p, Some(columns.clone())).evaluate(&labeled, &unlabeled)?);
    }
    lemma1_check(
        &h_eval,
        &star_eval,
        &family,
        &one_hot(&truth_l, k)?,
        &one_hot(&truth_u, k)?,
        &is_old,
        cfg.alpha,
    )
}

/// Counts of metric-axiom violations over random probability triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricReport {
    pub trials: usize,
    pub nonnegativity: usize,
    pub symmetry: usize,
    pub triangle: usize,
}

impl MetricReport {
    pub fn violations(&self) -> usize {
        self.nonnegativity + self.symmetry + self.triangle
    }
}

/// A uniformly random point of the probability simplex in `K` dimensions.
pub fn random_simplex(r: &mut rng::Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k)
        .map(|_| -libm::log(1.0 - r.random::<f64>()))
        .collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Checks nonnegativity, symmetry and the triangle inequality of `metric`
/// (at tolerance 1e-9) on `trials` random triples with `K` drawn from 2..=8.
pub fn metric_properties_with(
    seed: u64,
    trials: usize,
    metric: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<MetricReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let tol = 1e-9;
    let mut r = rng_for(seed, &[]);
    let mut rep = MetricReport {
        trials,
        ..MetricReport::default()
    };
    for _ in 0..trials {
        let k = r.random_range(2..=8);
        let p = random_simplex(&mut r, k);
        let q = random_simplex(&mut r, k);
        let s = random_simplex(&mut r, k);
        let (pq, qp, qs, ps) = (metric(&p, &q)?, metric(&q, &p)?, metric(&q, &s)?, metric(&p, &s)?);
        rep.nonnegativity += usize::from(pq < -tol || qs < -tol || ps < -tol);
        rep.symmetry += usize::from((pq - qp).abs() > tol);
        rep.triangle += usize::from(ps > pq + qs + tol);
    }
    Ok(rep)
}

/// `metric_properties_with` for the discrepancy metric.
pub fn metric_properties_test(seed: u64, trials: usize) -> Result<MetricReport> {
    metric_properties_with(seed, trials, xi_pointwise)
}
