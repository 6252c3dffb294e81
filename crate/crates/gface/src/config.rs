//! TOML run configuration.
//!
//! Sections: `data`, `model`, `loss_weights`, `schedules`, `train`, `eval`,
//! `theory`. Unknown keys are rejected. Optional knobs that are off by
//! default use `0` for "off" so that every setting has a TOML spelling.

use std::path::Path;

use gface_core::data::{AugmentSpec, SplitDataset, SyntheticSpec};
use gface_core::eval::Matching;
use gface_core::losses::LossWeights;
use gface_core::model::ModelConfig;
use gface_core::theory::BoundCheckConfig;
use gface_core::train::{StatsWindow, TauSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SEED_ENV: &str = "GFACE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub k: usize,
    pub num_old: usize,
    pub dim: usize,
    pub per_class_counts: Vec<usize>,
    pub class_separation: f64,
    pub overlap_pairs: Vec<(usize, usize, f64)>,
    pub noise_std: f64,
    pub labeled_fraction: f64,
    pub nuisance_dims: usize,
    pub nuisance_std: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            k: s.k,
            num_old: s.num_old,
            dim: s.dim,
            per_class_counts: s.per_class_counts,
            class_separation: s.class_separation,
            overlap_pairs: s.overlap_pairs,
            noise_std: s.noise_std,
            labeled_fraction: s.labeled_fraction,
            nuisance_dims: s.nuisance_dims,
            nuisance_std: s.nuisance_std,
            seed: 0,
        }
    }
}

impl DataSection {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            k: self.k,
            num_old: self.num_old,
            dim: self.dim,
            per_class_counts: self.per_class_counts.clone(),
            class_separation: self.class_separation,
            overlap_pairs: self.overlap_pairs.clone(),
            noise_std: self.noise_std,
            labeled_fraction: self.labeled_fraction,
            nuisance_dims: self.nuisance_dims,
            nuisance_std: self.nuisance_std,
        }
    }
}

/// `d` and `k` default to the dataset's; when given they must match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub d_f: usize,
    pub d_b: usize,
    pub d_h: usize,
    pub aux_dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d: None,
            k: None,
            d_f: m.d_f,
            d_b: m.d_b,
            d_h: m.d_h,
            aux_dropout: m.aux_dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulesSection {
    /// Cosine restart period in epochs; 0 disables restarts.
    pub lr_restart: usize,
    pub tau_t: TauSchedule,
    pub stats_window: StatsWindow,
    pub grl_mu: f64,
    /// Ramp steepness γ of the reversal strength; 0 keeps it constant.
    pub grl_ramp: f64,
}

impl Default for SchedulesSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr_restart: t.lr_restart.unwrap_or(0),
            tau_t: t.tau_t,
            stats_window: t.stats_window,
            grl_mu: t.grl_mu,
            grl_ramp: t.grl_ramp.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub eval_each_epoch: bool,
    pub seed: u64,
    pub augment: AugmentSpec,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            warmup: t.warmup,
            grad_clip: t.grad_clip.unwrap_or(0.0),
            eval_each_epoch: t.eval_each_epoch,
            seed: t.seed,
            augment: t.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub matching: Matching,
    pub kmeans_max_iters: usize,
    pub kmeans_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            matching: Matching::Global,
            kmeans_max_iters: 300,
            kmeans_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss_weights: LossWeights,
    pub schedules: SchedulesSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub theory: BoundCheckConfig,
}

fn nonzero<T: PartialEq + Default>(v: T) -> Option<T> {
    (v != T::default()).then_some(v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The default configuration, or the file at `path`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `GFACE_SEED` (when set) to both the data and training seeds.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.data.seed = seed;
            self.train.seed = seed;
        }
        Ok(())
    }

    /// Checks everything that does not depend on a dataset.
    pub fn validate(&self) -> Result<()> {
        self.train_config_unchecked(self.data.dim, self.data.k).validate()?;
        if self.theory.n_perturb > 10_000 || !(self.theory.perturb_scale >= 0.0) || !(self.theory.tau > 0.0) {
            return Err(Error::Config("theory: n_perturb ≤ 10000, perturb_scale ≥ 0, tau > 0".into()));
        }
        if self.eval.kmeans_max_iters == 0 {
            return Err(Error::Config("eval.kmeans_max_iters must be at least 1".into()));
        }
        Ok(())
    }

    fn train_config_unchecked(&self, d: usize, k: usize) -> TrainConfig {
        let m = &self.model;
        let t = &self.train;
        let s = &self.schedules;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            lr_restart: nonzero(s.lr_restart),
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            warmup: t.warmup,
            tau_t: s.tau_t,
            stats_window: s.stats_window,
            grl_mu: s.grl_mu,
            grl_ramp: nonzero(s.grl_ramp),
            grad_clip: nonzero(t.grad_clip),
            eval_each_epoch: t.eval_each_epoch,
            seed: t.seed,
            weights: self.loss_weights,
            augment: t.augment,
            model: ModelConfig {
                d: m.d.unwrap_or(d),
                d_f: m.d_f,
                d_b: m.d_b,
                d_h: m.d_h,
                k: m.k.unwrap_or(k),
                aux_dropout: m.aux_dropout,
            },
        }
    }

    /// The trainer configuration for `ds`. Explicit model dims that disagree
    /// with the dataset are an error.
    pub fn train_config(&self, ds: &SplitDataset) -> Result<TrainConfig> {
        for (name, given, have) in [("d", self.model.d, ds.dim()), ("k", self.model.k, ds.k())] {
            if let Some(g) = given {
                if g != have {
                    return Err(Error::Config(format!(
                        "model.{name} = {g} but the dataset has {name} = {have}"
                    )));
                }
            }
        }
        let t = self.train_config_unchecked(ds.dim(), ds.k());
        t.validate()?;
        Ok(t)
    }

    /// Pins `model.d`/`model.k` to the dataset so the echo is self-contained.
    pub fn resolved_for(&self, ds: &SplitDataset) -> Self {
        let mut c = self.clone();
        c.model.d = Some(ds.dim());
        c.model.k = Some(ds.k());
        c
    }
}
