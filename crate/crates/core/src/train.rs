//! Schedules, optimizer and the training loop.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::data::{augment_two_views, batches, AugmentSpec, SplitDataset, TrainingView};
use crate::error::{Error, Result};
use crate::eval::cluster_acc;
use crate::losses::{
    loss_ad, loss_bal, loss_cls, loss_cluster, loss_rep, loss_rep_self, loss_rep_sup, loss_total,
    ClassStats, LossTerms, LossWeights,
};
use crate::model::{
    argmax, aux_logits, extract, main_logits, project, pseudo_labels, rows_tensor, ModelConfig,
    ModelParams, ModelVars,
};
use crate::numcore::{Gradients, Graph, Tensor, Var};
use crate::rng::derive_seed;

/// `lr0·(1 + cos(π·t/T))/2`. With a restart period `p`, the cosine restarts
/// every `p` epochs (`t mod p` over `p`).
pub fn schedule_lr(t: usize, total: usize, lr0: f64, restart: Option<usize>) -> f64 {
    let (t, total) = match restart {
        Some(p) if p > 0 => (t % p, p),
        _ => (t, total),
    };
    lr0 * (1.0 + libm::cos(PI * t as f64 / total as f64)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AnnealShape {
    #[default]
    Cosine,
    Linear,
}

/// Teacher-temperature annealing from `start` to `end` over `epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TauSchedule {
    pub start: f64,
    pub end: f64,
    pub epochs: usize,
    pub shape: AnnealShape,
}

impl Default for TauSchedule {
    fn default() -> Self {
        Self {
            start: 0.07,
            end: 0.04,
            epochs: 30,
            shape: AnnealShape::Cosine,
        }
    }
}

pub fn schedule_tau_t(t: usize, s: &TauSchedule) -> f64 {
    if t >= s.epochs {
        return s.end;
    }
    let frac = t as f64 / s.epochs as f64;
    let w = match s.shape {
        AnnealShape::Cosine => (1.0 + libm::cos(PI * frac)) / 2.0,
        AnnealShape::Linear => 1.0 - frac,
    };
    s.end + (s.start - s.end) * w
}

/// `0.1·(1 − t/T)`.
pub fn schedule_e(t: usize, total: usize) -> f64 {
    0.1 * (1.0 - t as f64 / total as f64)
}

/// Gradient-reversal strength at epoch `t`.
pub fn schedule_grl(t: usize, total: usize, mu: f64, ramp: Option<f64>) -> f64 {
    match ramp {
        None => mu,
        Some(gamma) => {
            let p = (t + 1) as f64 / total as f64;
            mu * (2.0 / (1.0 + libm::exp(-gamma * p)) - 1.0)
        }
    }
}

/// Counts argmax predictions of labeled samples into `stats`.
pub fn update_class_stats(stats: &mut ClassStats, predictions: &[usize], labels: &[usize]) {
    for (&p, &y) in predictions.iter().zip(labels) {
        stats.record(p, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StatsWindow {
    /// Counts restart at every epoch.
    #[default]
    Epoch,
    Cumulative,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_restart: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    pub tau_t: TauSchedule,
    pub stats_window: StatsWindow,
    /// Gradient-reversal strength.
    pub grl_mu: f64,
    /// When set to `γ`, the reversal strength ramps as
    /// `μ·(2/(1+exp(−γ·(t+1)/T)) − 1)` instead of staying at `μ`.
    pub grl_ramp: Option<f64>,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
    /// Record All/Old/New ACC every epoch when ground truth is available.
    pub eval_each_epoch: bool,
    pub seed: u64,
    pub weights: LossWeights,
    pub augment: AugmentSpec,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr0: 0.1,
            lr_restart: None,
            momentum: 0.9,
            weight_decay: 5e-4,
            warmup: 50,
            tau_t: TauSchedule::default(),
            stats_window: StatsWindow::Epoch,
            grl_mu: 1.0,
            grl_ramp: None,
            grad_clip: Some(5.0),
            eval_each_epoch: true,
            seed: 0,
            weights: LossWeights::default(),
            augment: AugmentSpec::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.warmup > self.epochs {
            return bad("warmup must not exceed epochs");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if !(self.grl_mu > 0.0 && self.grl_mu.is_finite()) {
            return bad("grl_mu must be positive");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("grad_clip must be positive");
        }
        if self.grl_ramp.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return bad("grl_ramp must be positive");
        }
        let t = &self.tau_t;
        if !(t.start > 0.0 && t.end > 0.0 && t.start.is_finite() && t.end.is_finite()) {
            return bad("teacher temperatures must be positive");
        }
        self.weights.validate()?;
        self.augment.validate()?;
        self.model.validate()
    }

    /// The same configuration with the debiasing terms switched off.
    pub fn without_debiasing(&self) -> Self {
        Self {
            weights: self.weights.without_debiasing(),
            ..self.clone()
        }
    }
}

/// One epoch of training history. Losses are means over the epoch's batches.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub tau_t: f64,
    pub e_t: f64,
    pub loss_rep: f64,
    pub loss_cls: f64,
    pub loss_ad: f64,
    pub loss_bal: f64,
    pub loss_cluster: f64,
    pub loss_total: f64,
    /// `None` without ground truth for the unlabeled set.
    pub acc_all: Option<f64>,
    pub acc_old: Option<f64>,
    pub acc_new: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    /// Highest recorded Old ACC and the final one.
    pub fn old_acc_peak_and_final(&self) -> Option<(f64, f64)> {
        let accs: Vec<f64> = self.rows.iter().filter_map(|r| r.acc_old).collect();
        let last = *accs.last()?;
        Some((accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max), last))
    }
}

/// SGD with momentum; weight decay is folded into the gradient:
/// `v ← m·v + (g + wd·θ)`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// `grads[i]` is the gradient of `params[i]`, or `None` for a zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>], lr: f64) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let data = p.data_mut();
            for k in 0..data.len() {
                let grad = g.map_or(0.0, |g| g.data()[k]) + self.weight_decay * data[k];
                v[k] = self.momentum * v[k] + grad;
                data[k] -= lr * v[k];
            }
        }
    }
}

/// Scalar values of one batch's loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLosses {
    pub rep: f64,
    pub cls: f64,
    pub ad: f64,
    pub bal: f64,
    pub cluster: f64,
    pub total: f64,
}

/// Per-batch inputs that do not depend on the parameters.
pub struct BatchInputs {
    pub view1: Tensor,
    pub view2: Tensor,
    /// Unaugmented inputs of the labeled members, for the cluster term.
    pub clean_labeled: Option<Tensor>,
    pub labeled_pos: Vec<usize>,
    pub labeled_classes: Vec<usize>,
    pub unlabeled_pos: Vec<usize>,
    /// Class statistics as of the start of the batch.
    pub stats: ClassStats,
    pub tau_t: f64,
    pub e_t: f64,
    pub grl_mu: f64,
    pub epoch: usize,
    pub dropout_seed: u64,
}

/// The scalar training loss for one batch, built on `g`, plus the labeled
/// members' argmax predictions.
pub struct BatchGraph {
    pub total: Var,
    pub losses: BatchLosses,
    pub components: [(&'static str, Var); 5],
    pub labeled_predictions: Vec<usize>,
}

/// Builds every loss term of one batch onto `g` with parameters `vars`.
pub fn batch_objective(
    g: &mut Graph,
    vars: &ModelVars,
    inputs: &BatchInputs,
    config: &TrainConfig,
) -> Result<BatchGraph> {
    let w = &config.weights;
    let x1 = g.constant(inputs.view1.clone())?;
    let x2 = g.constant(inputs.view2.clone())?;
    let z1 = extract(g, vars, x1)?;
    let z2 = extract(g, vars, x2)?;

    let b1 = project(g, vars, z1)?;
    let b2 = project(g, vars, z2)?;
    let rep_self = loss_rep_self(g, b1, b2, w.tau_u)?;
    let rep_sup = if inputs.labeled_pos.len() >= 2 {
        let l1 = g.gather_rows(b1, &inputs.labeled_pos)?;
        let l2 = g.gather_rows(b2, &inputs.labeled_pos)?;
        loss_rep_sup(g, l1, l2, &inputs.labeled_classes, w.tau_c)?.loss
    } else {
        g.constant(Tensor::scalar(0.0))?
    };
    let rep = loss_rep(g, rep_self, rep_sup, w.lambda)?;

    let cos1 = main_logits(g, vars, z1, 1.0)?.logits;
    let cos2 = main_logits(g, vars, z2, 1.0)?.logits;
    let labeled: Vec<(usize, usize)> = inputs
        .labeled_pos
        .iter()
        .copied()
        .zip(inputs.labeled_classes.iter().copied())
        .collect();
    let cls = loss_cls(
        g,
        cos1,
        cos2,
        &labeled,
        w.tau_s,
        inputs.tau_t,
        w.lambda,
        w.eps_ent,
    )?;

    let logits1 = g.scale(cos1, 1.0 / w.tau_s);
    let main_probs = g.softmax(logits1, 1.0)?;
    let probs_val = g.value(main_probs).clone();
    let labeled_predictions: Vec<usize> = inputs
        .labeled_pos
        .iter()
        .map(|&p| argmax(probs_val.row(p)))
        .collect();

    let mut terms = LossTerms {
        rep: Some(rep),
        cls: Some(cls.total),
        ..LossTerms::default()
    };
    if w.lambda_a > 0.0 {
        let zn = g.normalize_rows(z1);
        let aux = aux_logits(
            g,
            vars,
            zn,
            inputs.grl_mu,
            config.model.aux_dropout,
            inputs.dropout_seed,
            true,
        )?;
        let pick = |rows: &[usize]| -> Result<Tensor> {
            let k = probs_val.cols();
            let data = rows
                .iter()
                .flat_map(|&r| probs_val.row(r).iter().copied())
                .collect();
            Tensor::new(vec![rows.len(), k], data)
        };
        let labeled_side = if inputs.labeled_pos.is_empty() {
            None
        } else {
            Some((
                g.gather_rows(aux.probs, &inputs.labeled_pos)?,
                pick(&inputs.labeled_pos)?,
            ))
        };
        let unlabeled_side = if inputs.unlabeled_pos.is_empty() {
            None
        } else {
            let target = pseudo_labels(&pick(&inputs.unlabeled_pos)?);
            Some((g.gather_rows(aux.probs, &inputs.unlabeled_pos)?, target))
        };
        let ad = loss_ad(
            g,
            labeled_side.as_ref().map(|(v, t)| (*v, t)),
            unlabeled_side.as_ref().map(|(v, t)| (*v, t)),
            w.alpha,
        )?;
        terms.ad = Some(ad.loss);
    }
    if w.lambda_b > 0.0 && !inputs.labeled_pos.is_empty() {
        let l = g.gather_rows(logits1, &inputs.labeled_pos)?;
        terms.bal = Some(loss_bal(
            g,
            l,
            &inputs.labeled_classes,
            &inputs.stats,
            inputs.e_t,
            w.eps_bal,
        )?);
    }
    if w.lambda_c > 0.0 && inputs.epoch >= config.warmup {
        if let Some(clean) = &inputs.clean_labeled {
            let x = g.constant(clean.clone())?;
            let f = extract(g, vars, x)?;
            terms.cluster =
                Some(loss_cluster(g, f, &inputs.labeled_classes, w.beta, w.eps_wb)?.total);
        }
    }
    let total = loss_total(g, &terms, w, inputs.epoch, config.warmup)?;
    let val = |g: &Graph, v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
    let losses = BatchLosses {
        rep: val(g, terms.rep),
        cls: val(g, terms.cls),
        ad: val(g, terms.ad),
        bal: val(g, terms.bal),
        cluster: if inputs.epoch >= config.warmup {
            val(g, terms.cluster)
        } else {
            0.0
        },
        total: g.value(total).item(),
    };
    let zero = terms.rep.expect("always present");
    Ok(BatchGraph {
        total,
        losses,
        components: [
            ("rep", zero),
            ("cls", terms.cls.unwrap_or(zero)),
            ("ad", terms.ad.unwrap_or(zero)),
            ("bal", terms.bal.unwrap_or(zero)),
            ("cluster", terms.cluster.unwrap_or(zero)),
        ],
        labeled_predictions,
    })
}

/// Assembles the parameter-independent inputs of batch `b` at `epoch`.
fn batch_inputs(
    view: &TrainingView<'_>,
    indices: &[usize],
    config: &TrainConfig,
    stats: &ClassStats,
    epoch: usize,
    batch_seed: u64,
) -> Result<BatchInputs> {
    let mut v1 = Vec::with_capacity(indices.len());
    let mut v2 = Vec::with_capacity(indices.len());
    for &i in indices {
        let (a, b) = augment_two_views(
            view.features(i),
            &config.augment,
            derive_seed(batch_seed, &[view.id(i)]),
        );
        v1.push(a);
        v2.push(b);
    }
    let rows = |vs: &[Vec<f64>]| -> Result<Tensor> {
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        rows_tensor(&refs)
    };
    let mut labeled_pos = Vec::new();
    let mut labeled_classes = Vec::new();
    let mut unlabeled_pos = Vec::new();
    for (p, &i) in indices.iter().enumerate() {
        match view.label(i) {
            Some(c) => {
                labeled_pos.push(p);
                labeled_classes.push(c);
            }
            None => unlabeled_pos.push(p),
        }
    }
    let clean_labeled = if labeled_pos.is_empty() {
        None
    } else {
        let refs: Vec<&[f64]> = labeled_pos
            .iter()
            .map(|&p| view.features(indices[p]))
            .collect();
        Some(rows_tensor(&refs)?)
    };
    Ok(BatchInputs {
        view1: rows(&v1)?,
        view2: rows(&v2)?,
        clean_labeled,
        labeled_pos,
        labeled_classes,
        unlabeled_pos,
        stats: stats.clone(),
        tau_t: schedule_tau_t(epoch, &config.tau_t),
        e_t: schedule_e(epoch, config.epochs),
        grl_mu: schedule_grl(epoch, config.epochs, config.grl_mu, config.grl_ramp),
        epoch,
        dropout_seed: derive_seed(batch_seed, &[crate::rng::TAG_DROPOUT]),
    })
}

fn gradient_list<'g>(grads: &'g Gradients, vars: &ModelVars) -> [Option<&'g Tensor>; 10] {
    vars.blocks().map(|v| grads.get(v))
}

/// Scaled copies of `grads` when their global L2 norm exceeds `max_norm`.
pub fn clip_global_norm(grads: &[Option<&Tensor>], max_norm: f64) -> Option<Vec<Option<Tensor>>> {
    let sq: f64 = grads
        .iter()
        .flatten()
        .flat_map(|t| t.data().iter())
        .map(|v| v * v)
        .sum();
    let norm = libm::sqrt(sq);
    if !(norm > max_norm) {
        return None;
    }
    let scale = max_norm / norm;
    Some(
        grads
            .iter()
            .map(|g| {
                g.map(|t| {
                    let mut c = t.clone();
                    c.data_mut().iter_mut().for_each(|v| *v *= scale);
                    c
                })
            })
            .collect(),
    )
}

/// Parameter-gradient map of the batch objective, for inspection and tests.
pub fn batch_gradients(
    params: &ModelParams,
    inputs: &BatchInputs,
    config: &TrainConfig,
) -> Result<(BatchLosses, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = params.register(&mut g)?;
    let out = batch_objective(&mut g, &vars, inputs, config)?;
    let grads = g.backward(out.total)?;
    let list = gradient_list(&grads, &vars)
        .iter()
        .zip(params.blocks())
        .map(|(g, p)| g.cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((out.losses, list))
}

/// Inputs of the first batch of `epoch`, as the training loop would build them.
pub fn first_batch_inputs(
    dataset: &SplitDataset,
    config: &TrainConfig,
    stats: &ClassStats,
    epoch: usize,
) -> Result<BatchInputs> {
    let view = dataset.training_view();
    let epoch_seed = derive_seed(config.seed, &[crate::rng::TAG_BATCH, epoch as u64]);
    let bs = batches(&view, config.batch_size, epoch_seed)?;
    let batch_seed = derive_seed(epoch_seed, &[0]);
    batch_inputs(&view, &bs[0].indices, config, stats, epoch, batch_seed)
}

/// Main-head predictions and All/Old/New ACC on the unlabeled set.
pub fn evaluate_unlabeled(
    params: &ModelParams,
    dataset: &SplitDataset,
) -> Result<crate::eval::AccReport> {
    let truth = dataset.unlabeled_ground_truth()?;
    let inputs: Vec<&[f64]> = dataset.unlabeled().map(|s| s.features.as_slice()).collect();
    let pred = params.predict(&inputs)?;
    cluster_acc(&pred, &truth, dataset.k(), dataset.old_classes())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Trains on the label-stripped view of `dataset`. Ground truth of unlabeled
/// samples is only read for per-epoch ACC logging.
pub fn train(dataset: &SplitDataset, config: &TrainConfig) -> Result<TrainOutput> {
    train_with(dataset, dataset.training_view(), config, |_| {})
}

/// Trains a reference model with every sample labeled.
pub fn train_fully_supervised(dataset: &SplitDataset, config: &TrainConfig) -> Result<TrainOutput> {
    train_with(dataset, dataset.fully_supervised_view()?, config, |_| {})
}

/// The training loop; `on_epoch` sees every history row as it is produced.
pub fn train_with(
    dataset: &SplitDataset,
    view: TrainingView<'_>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainOutput> {
    config.validate()?;
    if config.model.d != dataset.dim() || config.model.k != dataset.k() {
        return Err(Error::InvalidArgument(alloc::format!(
            "model expects d = {}, K = {} but the dataset has d = {}, K = {}",
            config.model.d,
            config.model.k,
            dataset.dim(),
            dataset.k()
        )));
    }
    let mut params = ModelParams::init(config.model, config.seed)?;
    let mut opt = Sgd::new(config.momentum, config.weight_decay);
    let mut stats = ClassStats::new(dataset.k());
    let can_eval = config.eval_each_epoch
        && dataset.has_full_ground_truth()
        && dataset.unlabeled().next().is_some();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        if config.stats_window == StatsWindow::Epoch {
            stats.reset();
        }
        let lr = schedule_lr(epoch, config.epochs, config.lr0, config.lr_restart);
        let epoch_seed = derive_seed(config.seed, &[crate::rng::TAG_BATCH, epoch as u64]);
        let bs = batches(&view, config.batch_size, epoch_seed)?;
        let mut sums = BatchLosses::default();
        for (b, batch) in bs.iter().enumerate() {
            let batch_seed = derive_seed(epoch_seed, &[b as u64]);
            let inputs = batch_inputs(&view, &batch.indices, config, &stats, epoch, batch_seed)?;
            let mut g = Graph::new();
            let vars = params.register(&mut g)?;
            // A projection of norm 0 has no direction; the representation
            // loss is undefined there, like a NaN.
            let out = batch_objective(&mut g, &vars, &inputs, config).map_err(|e| match e {
                Error::NotNormalized { .. } => Error::NonFiniteLoss {
                    component: "rep",
                    epoch,
                    batch: b,
                    seed: batch_seed,
                },
                e => e,
            })?;
            for (name, v) in out.components.iter().chain([("total", out.total)].iter()) {
                if !g.value(*v).item().is_finite() {
                    return Err(Error::NonFiniteLoss {
                        component: name,
                        epoch,
                        batch: b,
                        seed: batch_seed,
                    });
                }
            }
            update_class_stats(
                &mut stats,
                &out.labeled_predictions,
                &inputs.labeled_classes,
            );
            let grads = g.backward(out.total)?;
            let list = gradient_list(&grads, &vars);
            match config.grad_clip.and_then(|c| clip_global_norm(&list, c)) {
                Some(clipped) => {
                    let refs: Vec<Option<&Tensor>> = clipped.iter().map(Option::as_ref).collect();
                    opt.step(&mut params.blocks_mut(), &refs, lr);
                }
                None => opt.step(&mut params.blocks_mut(), &list, lr),
            }
            let l = out.losses;
            sums.rep += l.rep;
            sums.cls += l.cls;
            sums.ad += l.ad;
            sums.bal += l.bal;
            sums.cluster += l.cluster;
            sums.total += l.total;
        }
        let nb = bs.len() as f64;
        let acc = if can_eval {
            Some(evaluate_unlabeled(&params, dataset)?)
        } else {
            None
        };
        let row = HistoryRow {
            epoch,
            lr,
            tau_t: schedule_tau_t(epoch, &config.tau_t),
            e_t: schedule_e(epoch, config.epochs),
            loss_rep: sums.rep / nb,
            loss_cls: sums.cls / nb,
            loss_ad: sums.ad / nb,
            loss_bal: sums.bal / nb,
            loss_cluster: sums.cluster / nb,
            loss_total: sums.total / nb,
            acc_all: acc.as_ref().map(|a| a.acc_all),
            acc_old: acc.as_ref().map(|a| a.acc_old),
            acc_new: acc.as_ref().map(|a| a.acc_new),
        };
        on_epoch(&row);
        history.rows.push(row);
    }
    Ok(TrainOutput { params, history })
}
