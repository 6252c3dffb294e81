//! The command implementations behind the `gface` binary.
//!
//! Each command validates all of its inputs before writing anything. Text
//! reports go to `out`; per-epoch progress goes to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};

use gface_core::data::{generate_synthetic, SplitDataset};
use gface_core::eval::{cluster_acc_with, kmeans, AccReport};
use gface_core::model::ModelParams;
use gface_core::numcore::Tensor;
use gface_core::theory::BoundReport;
use gface_core::train::{train_fully_supervised, train_with, TrainConfig, TrainHistory};

use crate::config::RunConfig;
use crate::fsio::{atomic_write, prepare_run_dir};
use crate::report::{acc_fields, bound_fields, csv_table, key_values, Fields};
use crate::{checkpoint, dataset, history, plot, Error, Result};

pub const RUN_CONFIG: &str = "config.toml";
pub const CHECKPOINT: &str = "checkpoint.gfck";
pub const HISTORY: &str = "history.csv";
pub const SUMMARY: &str = "summary.txt";

pub const LOSS_SVG: &str = "losses.svg";
pub const ACC_SVG: &str = "acc.svg";
pub const DIGEST: &str = "digest.csv";

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(path)?;
    cfg.apply_seed_env()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Overrides the epoch count, scaling the warmup to keep its share of the run.
pub fn override_epochs(cfg: &mut RunConfig, epochs: usize) -> Result<()> {
    if epochs == 0 {
        return Err(Error::Usage("--epochs must be at least 1".into()));
    }
    let t = &mut cfg.train;
    t.warmup = t.warmup * epochs / t.epochs;
    t.epochs = epochs;
    Ok(())
}

pub struct GenDataArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// Takes precedence over `GFACE_SEED` and the config.
    pub seed: Option<u64>,
}

pub fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Result<SplitDataset> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.data.seed = s;
    }
    let ds = generate_synthetic(&cfg.data.spec(), cfg.data.seed)?;
    dataset::save(&ds, &args.out, Some(cfg.data.seed))?;
    write_out(
        out,
        &format!(
            "wrote {} ({} samples, K = {}, N = {}, theta = {}) and {}\n",
            args.out.display(),
            ds.len(),
            ds.k(),
            ds.num_old(),
            ds.theta(),
            dataset::manifest_path(&args.out).display()
        ),
    )?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// λ_a = λ_b = λ_c = 0.
    NoDebias,
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub force: bool,
    pub ablate: Option<Ablation>,
    pub epochs: Option<usize>,
    pub quiet: bool,
}

pub struct TrainRun {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub config: RunConfig,
    pub final_acc: Option<AccReport>,
}

/// The effective run configuration for `args`, with overrides applied.
pub fn effective_train_config(args: &TrainArgs, ds: &SplitDataset) -> Result<(RunConfig, TrainConfig)> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        override_epochs(&mut cfg, e)?;
    }
    if args.ablate == Some(Ablation::NoDebias) {
        cfg.loss_weights = cfg.loss_weights.without_debiasing();
    }
    let tc = cfg.train_config(ds)?;
    Ok((cfg.resolved_for(ds), tc))
}

fn unlabeled_inputs(ds: &SplitDataset) -> Vec<&[f64]> {
    ds.unlabeled().map(|s| s.features.as_slice()).collect()
}

fn model_acc(params: &ModelParams, ds: &SplitDataset, cfg: &RunConfig) -> Result<AccReport> {
    let truth = ds.unlabeled_ground_truth()?;
    let pred = params.predict(&unlabeled_inputs(ds))?;
    Ok(cluster_acc_with(&pred, &truth, ds.k(), ds.old_classes(), cfg.eval.matching)?)
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainRun> {
    let ds = dataset::load(&args.data)?;
    let (cfg, tc) = effective_train_config(args, &ds)?;
    prepare_run_dir(&args.out, args.force)?;
    atomic_write(&args.out.join(RUN_CONFIG), cfg.to_toml()?.as_bytes())?;

    let quiet = args.quiet;
    let trained = train_with(&ds, ds.training_view(), &tc, |r| {
        if !quiet {
            let acc = r
                .acc_all
                .map(|a| format!(" all {a:.4} old {:.4} new {:.4}", r.acc_old.unwrap_or(0.0), r.acc_new.unwrap_or(0.0)))
                .unwrap_or_default();
            eprintln!("epoch {:>4}  loss {:.5}{acc}", r.epoch, r.loss_total);
        }
    })?;
    checkpoint::save(&trained.params, &args.out.join(CHECKPOINT))?;
    history::save(&trained.history, &args.out.join(HISTORY))?;

    let final_acc = if ds.has_full_ground_truth() && ds.unlabeled().next().is_some() {
        Some(model_acc(&trained.params, &ds, &cfg)?)
    } else {
        None
    };
    let mut summary = format!("epochs={}\n", tc.epochs);
    if let Some(r) = trained.history.last() {
        summary.push_str(&format!("final_loss_total={}\n", r.loss_total));
    }
    match &final_acc {
        Some(a) => summary.push_str(&format!(
            "final_acc_all={}\nfinal_acc_old={}\nfinal_acc_new={}\n",
            a.acc_all, a.acc_old, a.acc_new
        )),
        None => summary.push_str("final_acc=unavailable (no ground truth for the unlabeled split)\n"),
    }
    atomic_write(&args.out.join(SUMMARY), summary.as_bytes())?;
    let line = match &final_acc {
        Some(a) => format!(
            "trained {} epochs: All {:.4} Old {:.4} New {:.4} -> {}\n",
            tc.epochs,
            a.acc_all,
            a.acc_old,
            a.acc_new,
            args.out.display()
        ),
        None => format!("trained {} epochs -> {}\n", tc.epochs, args.out.display()),
    };
    write_out(out, &line)?;
    Ok(TrainRun {
        params: trained.params,
        history: trained.history,
        config: cfg,
        final_acc,
    })
}

/// Errors unless the checkpoint's input width and class count match `ds`.
pub fn check_compatible(params: &ModelParams, ds: &SplitDataset) -> Result<()> {
    let m = &params.config;
    if m.d != ds.dim() {
        return Err(Error::Usage(format!(
            "dimension mismatch: the checkpoint expects d = {} input features but the data has d = {}",
            m.d,
            ds.dim()
        )));
    }
    if m.k != ds.k() {
        return Err(Error::Usage(format!(
            "class-count mismatch: the checkpoint has K = {} prototypes but the data has K = {}",
            m.k,
            ds.k()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    KMeans,
}

pub struct EvalArgs {
    pub config: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub baseline: Option<Baseline>,
    pub csv: Option<PathBuf>,
}

fn rows_tensor(rows: &[&[f64]]) -> Result<Tensor> {
    let d = rows.first().map_or(0, |r| r.len());
    Ok(Tensor::new(vec![rows.len(), d], rows.concat())?)
}

/// Reports for the model and, with `--baseline kmeans`, for k-means on the
/// raw inputs and on the model's extracted features.
pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<Vec<Fields>> {
    let cfg = load_config(args.config.as_deref())?;
    let params = checkpoint::load(&args.checkpoint)?;
    let ds = dataset::load(&args.data)?;
    check_compatible(&params, &ds)?;
    if !ds.has_full_ground_truth() || ds.unlabeled().next().is_none() {
        return Err(Error::Usage(
            "evaluation needs class labels for every unlabeled row".into(),
        ));
    }
    let truth = ds.unlabeled_ground_truth()?;
    let mut rows = vec![acc_fields("model", &model_acc(&params, &ds, &cfg)?)];
    if args.baseline == Some(Baseline::KMeans) {
        let inputs = unlabeled_inputs(&ds);
        let sources = [
            ("kmeans-raw", rows_tensor(&inputs)?),
            ("kmeans-features", params.features(&inputs)?),
        ];
        for (name, x) in sources {
            let km = kmeans(&x, ds.k(), cfg.eval.kmeans_seed, cfg.eval.kmeans_max_iters)?;
            let acc = cluster_acc_with(&km.labels, &truth, ds.k(), ds.old_classes(), cfg.eval.matching)?;
            rows.push(acc_fields(name, &acc));
        }
    }
    let mut text = String::new();
    for r in &rows {
        text.push_str(&key_values(r));
        text.push('\n');
    }
    let table = csv_table(&rows);
    text.push_str(&table);
    write_out(out, &text)?;
    if let Some(p) = &args.csv {
        atomic_write(p, table.as_bytes())?;
    }
    Ok(rows)
}

pub struct BoundCheckArgs {
    pub config: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub alpha: Option<f64>,
    pub n_perturb: Option<usize>,
    /// Epochs for training the fully supervised reference model.
    pub epochs: Option<usize>,
    pub csv: Option<PathBuf>,
}

/// Trains the fully supervised reference H* and evaluates the bound for the
/// checkpointed model. The caller decides the exit status from the flags.
pub fn bound_check(args: &BoundCheckArgs, out: &mut dyn Write) -> Result<BoundReport> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(a) = args.alpha {
        cfg.theory.alpha = a;
    }
    if let Some(n) = args.n_perturb {
        cfg.theory.n_perturb = n;
    }
    if let Some(e) = args.epochs {
        override_epochs(&mut cfg, e)?;
    }
    cfg.validate()?;
    if !(cfg.theory.alpha > 0.0) {
        return Err(Error::Usage(format!("--alpha must be positive, got {}", cfg.theory.alpha)));
    }
    let h = checkpoint::load(&args.checkpoint)?;
    let ds = dataset::load(&args.data)?;
    check_compatible(&h, &ds)?;
    if !ds.has_full_ground_truth() {
        return Err(Error::Usage(
            "the bound check needs class labels for every row of the data".into(),
        ));
    }
    let star = train_fully_supervised(&ds, &cfg.train_config(&ds)?)?;
    let report = gface_core::theory::bound_check(&ds, &h, &star.params, &cfg.theory)?;
    let fields = bound_fields(&report);
    let table = csv_table(std::slice::from_ref(&fields));
    write_out(out, &format!("{}\n{table}", key_values(&fields)))?;
    if let Some(p) = &args.csv {
        atomic_write(p, table.as_bytes())?;
    }
    Ok(report)
}

pub struct ReportArgs {
    pub rundir: PathBuf,
    pub out: PathBuf,
}

/// Paths of the files written.
pub fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let path = args.rundir.join(HISTORY);
    let h = history::load(&path)?;
    if h.rows.is_empty() {
        return Err(Error::Usage(format!("{}: history has no epochs", path.display())));
    }
    let losses = plot::loss_plot(&h)?;
    let acc = plot::acc_plot(&h)?;
    let digest = plot::digest_csv(&h);

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut written = vec![args.out.join(LOSS_SVG)];
    atomic_write(&written[0], losses.as_bytes())?;
    match acc {
        Some(svg) => {
            let p = args.out.join(ACC_SVG);
            atomic_write(&p, svg.as_bytes())?;
            written.push(p);
        }
        None => write_out(out, "no accuracy columns in the history; skipping the ACC plot\n")?,
    }
    let p = args.out.join(DIGEST);
    atomic_write(&p, digest.as_bytes())?;
    written.push(p);
    for p in &written {
        write_out(out, &format!("wrote {}\n", p.display()))?;
    }
    Ok(written)
}
