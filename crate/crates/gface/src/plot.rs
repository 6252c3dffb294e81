//! Standalone SVG line plots and the per-epoch digest.
//!
//! The plotting area spans exactly the data range: the smallest value sits
//! on the bottom edge and the largest on the top edge. A constant series is
//! padded by 0.5 on each side. The range is also recorded on the root
//! element as `data-x-min`, `data-x-max`, `data-y-min` and `data-y-max`.

use std::fmt::Write as _;

use gface_core::train::TrainHistory;

use crate::{Error, Result};

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 420.0;
pub const LEFT: f64 = 70.0;
pub const RIGHT: f64 = 150.0;
pub const TOP: f64 = 40.0;
pub const BOTTOM: f64 = 50.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#333333"];

pub struct Series<'a> {
    pub name: &'a str,
    /// `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// One line per series against `x`.
pub fn line_plot(title: &str, x_label: &str, x: &[f64], series: &[Series]) -> Result<String> {
    if x.is_empty() {
        return Err(Error::Usage(format!("{title}: nothing to plot")));
    }
    if series.iter().any(|s| s.values.len() != x.len()) {
        return Err(Error::Usage(format!("{title}: series length differs from x")));
    }
    let finite = |v: &Option<f64>| v.filter(|f| f.is_finite());
    let (x0, x1) = padded(range(x.iter().copied()).expect("nonempty"));
    let (y0, y1) = padded(
        range(series.iter().flat_map(|s| s.values.iter().filter_map(finite)))
            .ok_or_else(|| Error::Usage(format!("{title}: no finite values")))?,
    );
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-x-min="{x0}" data-x-max="{x1}" data-y-min="{y0}" data-y-max="{y1}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect class="plot-area" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let xv = x0 + f * (x1 - x0);
        let _ = writeln!(
            s,
            r#"<text class="y-tick" x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(yv) + 4.0,
            fmt_tick(yv)
        );
        let _ = writeln!(
            s,
            r#"<text class="x-tick" x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            px(xv),
            TOP + ph + 16.0,
            fmt_tick(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (xv, v) in x.iter().zip(&ser.values) {
            match finite(v) {
                Some(y) => runs.last_mut().expect("nonempty").push((px(*xv), py(y))),
                None if !runs.last().expect("nonempty").is_empty() => runs.push(Vec::new()),
                None => {}
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.3},{b:.3}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(ser.name),
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            LEFT + pw + 12.0,
            LEFT + pw + 32.0,
            LEFT + pw + 38.0,
            ly + 4.0,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn epochs(h: &TrainHistory) -> Vec<f64> {
    h.rows.iter().map(|r| r.epoch as f64).collect()
}

pub fn loss_plot(h: &TrainHistory) -> Result<String> {
    let col = |f: fn(&gface_core::train::HistoryRow) -> f64| -> Vec<Option<f64>> {
        h.rows.iter().map(|r| Some(f(r))).collect()
    };
    line_plot(
        "Loss components",
        "epoch",
        &epochs(h),
        &[
            Series { name: "rep", values: col(|r| r.loss_rep) },
            Series { name: "cls", values: col(|r| r.loss_cls) },
            Series { name: "ad", values: col(|r| r.loss_ad) },
            Series { name: "bal", values: col(|r| r.loss_bal) },
            Series { name: "cluster", values: col(|r| r.loss_cluster) },
            Series { name: "total", values: col(|r| r.loss_total) },
        ],
    )
}

/// `None` when no epoch carries accuracies.
pub fn acc_plot(h: &TrainHistory) -> Result<Option<String>> {
    if h.rows.iter().all(|r| r.acc_all.is_none()) {
        return Ok(None);
    }
    line_plot(
        "Clustering accuracy on unlabeled data",
        "epoch",
        &epochs(h),
        &[
            Series { name: "All", values: h.rows.iter().map(|r| r.acc_all).collect() },
            Series { name: "Old", values: h.rows.iter().map(|r| r.acc_old).collect() },
            Series { name: "New", values: h.rows.iter().map(|r| r.acc_new).collect() },
        ],
    )
    .map(Some)
}

/// One row per epoch: total loss, accuracies, and the running peak of Old
/// ACC with the current drop below it.
pub fn digest_csv(h: &TrainHistory) -> String {
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,loss_total,acc_all,acc_old,acc_new,acc_old_peak,acc_old_drop\n");
    let mut peak: Option<f64> = None;
    for r in &h.rows {
        if let Some(a) = r.acc_old {
            peak = Some(peak.map_or(a, |p| p.max(a)));
        }
        let drop = match (peak, r.acc_old) {
            (Some(p), Some(a)) => Some(p - a),
            _ => None,
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.loss_total,
            o(r.acc_all),
            o(r.acc_old),
            o(r.acc_new),
            o(peak),
            o(drop)
        );
    }
    out
}
