//! The training objective: contrastive representation terms, the parametric
//! classifier, the adversarial bias term, confusing-sample mining, the
//! cluster-compactness term and their weighted total.
//!
//! Every function builds onto a caller-owned [`Graph`] and returns scalar
//! nodes, so each term can be evaluated and differentiated on its own.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::{Graph, Tensor, Var};

/// Loss weights, guards and temperatures.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LossWeights {
    /// Supervised/unsupervised balance inside the representation and classifier terms.
    pub lambda: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    /// Labeled-set weight of the adversarial term.
    pub alpha: f64,
    /// Weight of the max-min compactness regularizer.
    pub beta: f64,
    pub eps_bal: f64,
    pub eps_wb: f64,
    /// Weight of the mean-prediction entropy regularizer.
    pub eps_ent: f64,
    pub tau_u: f64,
    pub tau_c: f64,
    pub tau_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.35,
            lambda_a: 0.2,
            lambda_b: 0.3,
            lambda_c: 0.2,
            alpha: 2.0,
            beta: 0.2,
            eps_bal: 0.05,
            eps_wb: 1e-6,
            eps_ent: 1.0,
            tau_u: 0.07,
            tau_c: 0.1,
            tau_s: 0.1,
        }
    }
}

impl LossWeights {
    /// The debiasing weights zeroed: representation and classifier terms only.
    pub fn without_debiasing(self) -> Self {
        Self {
            lambda_a: 0.0,
            lambda_b: 0.0,
            lambda_c: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.lambda_a,
            self.lambda_b,
            self.lambda_c,
            self.alpha,
            self.beta,
            self.eps_ent,
        ];
        let pos = [
            self.eps_bal,
            self.eps_wb,
            self.tau_u,
            self.tau_c,
            self.tau_s,
        ];
        if !(self.lambda > 0.0 && self.lambda < 1.0)
            || nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || pos.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidArgument(alloc::format!(
                "invalid loss weights {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_normalized(g: &Graph, x: Var) -> Result<()> {
    let t = g.value(x);
    for i in 0..t.rows() {
        let n = libm::sqrt(t.row(i).iter().map(|v| v * v).sum::<f64>());
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { index: i, norm: n });
        }
    }
    Ok(())
}

fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {y} outside [0, {k})"
            )));
        }
        data[i * k + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}

fn zero(g: &mut Graph) -> Var {
    g.constant(Tensor::scalar(0.0)).expect("finite")
}

/// Self-supervised contrastive term over a batch of paired, normalized views.
///
/// For anchor `z̃_i` the candidates are every first-view vector `ẑ_k` in the
/// batch (including `k = i`); the positive is `ẑ_i`.
pub fn loss_rep_self(g: &mut Graph, z_hat: Var, z_tilde: Var, tau_u: f64) -> Result<Var> {
    if g.shape(z_hat) != g.shape(z_tilde) || g.shape(z_hat).len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "loss_rep_self",
            lhs: g.shape(z_hat).to_vec(),
            rhs: g.shape(z_tilde).to_vec(),
        });
    }
    check_normalized(g, z_hat)?;
    check_normalized(g, z_tilde)?;
    let n = g.shape(z_hat)[0];
    let zh_t = g.transpose(z_hat)?;
    let sim = g.matmul(z_tilde, zh_t)?;
    let logp = g.log_softmax(sim, tau_u)?;
    let diag: Vec<usize> = (0..n).map(|i| i * n + i).collect();
    let pos = g.gather(logp, &diag)?;
    let m = g.mean(pos);
    Ok(g.neg(m))
}

#[derive(Debug, Clone, Copy)]
pub struct SupConOutput {
    pub loss: Var,
    /// Set when fewer than two labeled samples are present; `loss` is then 0.
    pub degenerate: bool,
}

/// Supervised contrastive term on the labeled sub-batch.
///
/// Both views are pooled (`2m` vectors). Each anchor is excluded from its own
/// denominator, its positives are all other pooled vectors with the same
/// label, and the per-anchor loss averages `−log p(anchor → positive)` over
/// those positives. The result is the mean over anchors.
pub fn loss_rep_sup(
    g: &mut Graph,
    z_hat: Var,
    z_tilde: Var,
    labels: &[usize],
    tau_c: f64,
) -> Result<SupConOutput> {
    let m = labels.len();
    if m < 2 {
        return Ok(SupConOutput {
            loss: zero(g),
            degenerate: true,
        });
    }
    if g.shape(z_hat) != g.shape(z_tilde) || g.value(z_hat).rows() != m {
        return Err(Error::ShapeMismatch {
            op: "loss_rep_sup",
            lhs: g.shape(z_hat).to_vec(),
            rhs: vec![m],
        });
    }
    check_normalized(g, z_hat)?;
    check_normalized(g, z_tilde)?;
    let pool = g.concat_rows(&[z_hat, z_tilde])?;
    let pool_t = g.transpose(pool)?;
    let sim = g.matmul(pool, pool_t)?;
    let n = 2 * m;
    let lab = |i: usize| labels[i % m];
    let exclude: Vec<bool> = (0..n * n).map(|i| i / n == i % n).collect();
    let logp = g.log_softmax_masked(sim, tau_c, exclude)?;

    let mut weights = vec![0.0; n * n];
    let positives: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..n).filter(|&p| p != a && lab(p) == lab(a)).collect())
        .collect();
    let anchors = positives.iter().filter(|p| !p.is_empty()).count();
    for (a, pos) in positives.iter().enumerate() {
        for &p in pos {
            weights[a * n + p] = 1.0 / (pos.len() as f64 * anchors as f64);
        }
    }
    let w = g.constant(Tensor::new(vec![n, n], weights)?)?;
    let prod = g.mul(w, logp)?;
    let s = g.sum(prod);
    Ok(SupConOutput {
        loss: g.neg(s),
        degenerate: false,
    })
}

/// `(1 − λ)·self + λ·sup`.
pub fn loss_rep(g: &mut Graph, self_term: Var, sup_term: Var, lambda: f64) -> Result<Var> {
    let a = g.scale(self_term, 1.0 - lambda);
    let b = g.scale(sup_term, lambda);
    g.add(a, b)
}

#[derive(Debug, Clone, Copy)]
pub struct ClsOutput {
    pub total: Var,
    pub supervised: Var,
    pub unsupervised: Var,
    /// Entropy of the batch-mean prediction.
    pub mean_entropy: Var,
}

/// Parametric-classifier term from student log-probabilities / probabilities
/// and (already detached) teacher probabilities, all `[n, K]`.
///
/// `labeled` holds `(row, class)` pairs of the labeled members.
pub fn loss_cls_from_probs(
    g: &mut Graph,
    log_p_student: Var,
    p_student: Var,
    p_teacher: Var,
    labeled: &[(usize, usize)],
    lambda: f64,
    eps_ent: f64,
) -> Result<ClsOutput> {
    let (n, k) = (g.value(p_student).rows(), g.value(p_student).cols());
    let supervised = if labeled.is_empty() {
        zero(g)
    } else {
        let rows: Vec<usize> = labeled.iter().map(|&(r, _)| r).collect();
        let classes: Vec<usize> = labeled.iter().map(|&(_, c)| c).collect();
        let lp = g.gather_rows(log_p_student, &rows)?;
        let y = g.constant(one_hot(&classes, k)?)?;
        let prod = g.mul(y, lp)?;
        let ce = g.row_sum(prod);
        let m = g.mean(ce);
        g.neg(m)
    };
    let prod = g.mul(p_teacher, log_p_student)?;
    let ce = g.row_sum(prod);
    let ce_mean = g.mean(ce);
    let ce_mean = g.neg(ce_mean);

    let both = g.add(p_student, p_teacher)?;
    let avg = g.constant(Tensor::new(vec![1, n], vec![0.5 / n as f64; n])?)?;
    let p_bar = g.matmul(avg, both)?;
    let ln_bar = g.ln(p_bar);
    let plogp = g.mul(p_bar, ln_bar)?;
    let s = g.sum(plogp);
    let mean_entropy = g.neg(s);
    let reg = g.scale(mean_entropy, eps_ent);
    let unsupervised = g.sub(ce_mean, reg)?;

    let a = g.scale(unsupervised, 1.0 - lambda);
    let b = g.scale(supervised, lambda);
    let total = g.add(a, b)?;
    Ok(ClsOutput {
        total,
        supervised,
        unsupervised,
        mean_entropy,
    })
}

/// Parametric-classifier term from prototype cosine similarities of the two
/// views. The second view, sharpened at `tau_t`, is a detached target.
#[allow(clippy::too_many_arguments)]
pub fn loss_cls(
    g: &mut Graph,
    cos_student: Var,
    cos_teacher: Var,
    labeled: &[(usize, usize)],
    tau_s: f64,
    tau_t: f64,
    lambda: f64,
    eps_ent: f64,
) -> Result<ClsOutput> {
    let log_p = g.log_softmax(cos_student, tau_s)?;
    let p = g.softmax(cos_student, tau_s)?;
    let teacher_in = g.detach(cos_teacher);
    let p_t = g.softmax(teacher_in, tau_t)?;
    loss_cls_from_probs(g, log_p, p, p_t, labeled, lambda, eps_ent)
}

#[derive(Debug, Clone, Copy)]
pub struct AdOutput {
    pub loss: Var,
    pub labeled_term: Var,
    pub unlabeled_term: Var,
}

/// Adversarial bias term:
/// `(α/m)·Σ CE(aux(x^l), main target) − (1/n)·Σ CE(aux(x^u), pseudo-label)`.
///
/// `aux_probs_*` are auxiliary-head probabilities (the head sits behind
/// gradient reversal); targets are plain values. Either side may be absent.
pub fn loss_ad(
    g: &mut Graph,
    labeled: Option<(Var, &Tensor)>,
    unlabeled: Option<(Var, &Tensor)>,
    alpha: f64,
) -> Result<AdOutput> {
    let side = |g: &mut Graph, part: Option<(Var, &Tensor)>| -> Result<Var> {
        match part {
            None => Ok(zero(g)),
            Some((probs, target)) => {
                let t = g.constant(target.clone())?;
                let ce = g.cross_entropy(probs, t)?;
                Ok(g.mean(ce))
            }
        }
    };
    let labeled_term = side(g, labeled)?;
    let unlabeled_term = side(g, unlabeled)?;
    let a = g.scale(labeled_term, alpha);
    let loss = g.sub(a, unlabeled_term)?;
    Ok(AdOutput {
        loss,
        labeled_term,
        unlabeled_term,
    })
}

/// Per-class prediction counts on labeled data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassStats {
    correct: Vec<u64>,
    total: Vec<u64>,
}

impl ClassStats {
    pub fn new(k: usize) -> Self {
        Self {
            correct: vec![0; k],
            total: vec![0; k],
        }
    }

    pub fn correct(&self, y: usize) -> u64 {
        self.correct[y]
    }

    pub fn total(&self, y: usize) -> u64 {
        self.total[y]
    }

    /// `ς_y / η_y`, or 1 before any prediction for `y`.
    pub fn accuracy(&self, y: usize) -> f64 {
        if self.total[y] == 0 {
            1.0
        } else {
            self.correct[y] as f64 / self.total[y] as f64
        }
    }

    pub fn record(&mut self, predicted: usize, truth: usize) {
        self.total[truth] += 1;
        if predicted == truth {
            self.correct[truth] += 1;
        }
    }

    pub fn reset(&mut self) {
        self.correct.iter_mut().for_each(|v| *v = 0);
        self.total.iter_mut().for_each(|v| *v = 0);
    }
}

/// `(1 − e) + e / (a_y + ε)`.
pub fn bal_weight(accuracy: f64, e_t: f64, eps_bal: f64) -> f64 {
    (1.0 - e_t) + e_t / (accuracy + eps_bal)
}

/// Confusing-sample mining: class-adaptive weighted cross-entropy over the
/// labeled sub-batch. `logits` are `[m, K]` main-head logits (temperature applied).
pub fn loss_bal(
    g: &mut Graph,
    logits: Var,
    labels: &[usize],
    stats: &ClassStats,
    e_t: f64,
    eps_bal: f64,
) -> Result<Var> {
    if !(0.0..=0.1).contains(&e_t) {
        return Err(Error::InvalidArgument("e_t must lie in [0, 0.1]".into()));
    }
    let k = g.value(logits).cols();
    let y = g.constant(one_hot(labels, k)?)?;
    let ce = g.cross_entropy_logits(logits, y, 1.0)?;
    if e_t == 0.0 {
        return Ok(g.mean(ce));
    }
    let w: Vec<f64> = labels
        .iter()
        .map(|&c| bal_weight(stats.accuracy(c), e_t, eps_bal))
        .collect();
    let w = g.constant(Tensor::new(g.shape(ce).to_vec(), w)?)?;
    let weighted = g.mul(w, ce)?;
    Ok(g.mean(weighted))
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOutput {
    pub total: Var,
    pub within_between: Var,
    pub max_min: Var,
}

/// Within/between scatter ratio plus `β` times the mean per-class spread of
/// squared distances to the class mean, on labeled features `[m, d_f]`.
pub fn loss_cluster(
    g: &mut Graph,
    features: Var,
    labels: &[usize],
    beta: f64,
    eps_wb: f64,
) -> Result<ClusterOutput> {
    let m = labels.len();
    if m == 0 || g.value(features).rows() != m {
        return Err(Error::InvalidArgument(
            "loss_cluster needs one label per feature row and a nonempty batch".into(),
        ));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let c = classes.len();
    let slot = |y: usize| classes.binary_search(&y).expect("present");
    let counts: Vec<usize> = classes
        .iter()
        .map(|&y| labels.iter().filter(|&&l| l == y).count())
        .collect();

    let mut assign = vec![0.0; m * c];
    let mut average = vec![0.0; c * m];
    for (i, &y) in labels.iter().enumerate() {
        let s = slot(y);
        assign[i * c + s] = 1.0;
        average[s * m + i] = 1.0 / counts[s] as f64;
    }
    let assign = g.constant(Tensor::new(vec![m, c], assign)?)?;
    let average = g.constant(Tensor::new(vec![c, m], average)?)?;
    let class_means = g.matmul(average, features)?;
    let own_means = g.matmul(assign, class_means)?;
    let diff = g.sub(features, own_means)?;
    let dist = g.row_sq_norm(diff)?;
    let within = g.sum(dist);

    let global_avg = g.constant(Tensor::new(vec![1, m], vec![1.0 / m as f64; m])?)?;
    let global = g.matmul(global_avg, features)?;
    let ones = g.constant(Tensor::new(vec![c, 1], vec![1.0; c])?)?;
    let global_rows = g.matmul(ones, global)?;
    let spread = g.sub(class_means, global_rows)?;
    let between_per = g.row_sq_norm(spread)?;
    let nc = g.constant(Tensor::new(
        vec![c],
        counts.iter().map(|&n| n as f64).collect(),
    )?)?;
    let between_w = g.mul(between_per, nc)?;
    let between = g.sum(between_w);
    let den = g.offset(between, eps_wb);
    let within_between = g.div(within, den)?;

    let d = g.value(dist).data().to_vec();
    let mut imax = vec![usize::MAX; c];
    let mut imin = vec![usize::MAX; c];
    for (i, &y) in labels.iter().enumerate() {
        let s = slot(y);
        if imax[s] == usize::MAX || d[i] > d[imax[s]] {
            imax[s] = i;
        }
        if imin[s] == usize::MAX || d[i] < d[imin[s]] {
            imin[s] = i;
        }
    }
    let hi = g.gather(dist, &imax)?;
    let lo = g.gather(dist, &imin)?;
    let gap = g.sub(hi, lo)?;
    let max_min = g.mean(gap);

    let reg = g.scale(max_min, beta);
    let total = g.add(within_between, reg)?;
    Ok(ClusterOutput {
        total,
        within_between,
        max_min,
    })
}

/// Scalar loss components of one batch; absent terms count as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub rep: Option<Var>,
    pub cls: Option<Var>,
    pub ad: Option<Var>,
    pub bal: Option<Var>,
    pub cluster: Option<Var>,
}

/// `rep + cls + λ_a·ad + λ_b·bal + [epoch ≥ warmup]·λ_c·cluster`.
///
/// Before warmup the cluster term is not touched at all.
pub fn loss_total(
    g: &mut Graph,
    terms: &LossTerms,
    weights: &LossWeights,
    epoch: usize,
    warmup: usize,
) -> Result<Var> {
    let mut parts: Vec<Var> = Vec::new();
    parts.extend(terms.rep);
    parts.extend(terms.cls);
    if let Some(ad) = terms.ad {
        parts.push(g.scale(ad, weights.lambda_a));
    }
    if let Some(bal) = terms.bal {
        parts.push(g.scale(bal, weights.lambda_b));
    }
    if epoch >= warmup {
        if let Some(cl) = terms.cluster {
            parts.push(g.scale(cl, weights.lambda_c));
        }
    }
    let mut acc = match parts.first() {
        Some(&p) => p,
        None => return Ok(zero(g)),
    };
    for &p in &parts[1..] {
        acc = g.add(acc, p)?;
    }
    Ok(acc)
}
