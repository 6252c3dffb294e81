//! Per-epoch training history as CSV. ACC columns are empty when the
//! unlabeled ground truth was unavailable.

use std::path::Path;

use gface_core::train::{HistoryRow, TrainHistory};

use crate::fsio::atomic_write;
use crate::{Error, Result};

pub const HEADER: [&str; 13] = [
    "epoch",
    "lr",
    "tau_t",
    "e_t",
    "loss_rep",
    "loss_cls",
    "loss_ad",
    "loss_bal",
    "loss_cluster",
    "loss_total",
    "acc_all",
    "acc_old",
    "acc_new",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(h: &TrainHistory) -> Vec<u8> {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in &h.rows {
        let fields = [
            r.epoch.to_string(),
            r.lr.to_string(),
            r.tau_t.to_string(),
            r.e_t.to_string(),
            r.loss_rep.to_string(),
            r.loss_cls.to_string(),
            r.loss_ad.to_string(),
            r.loss_bal.to_string(),
            r.loss_cluster.to_string(),
            r.loss_total.to_string(),
            opt(r.acc_all),
            opt(r.acc_old),
            opt(r.acc_new),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn save(h: &TrainHistory, path: &Path) -> Result<()> {
    atomic_write(path, &to_csv(h))
}

pub fn parse(bytes: &[u8], path: &Path) -> Result<TrainHistory> {
    let perr = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers().map_err(|e| perr(1, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(perr(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| perr(line, format!("bad {} value {:?}", HEADER[i], &rec[i])))
        };
        let acc = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let epoch = rec[0]
            .parse::<usize>()
            .map_err(|_| perr(line, format!("bad epoch {:?}", &rec[0])))?;
        if epoch != rows.len() {
            return Err(perr(line, format!("epoch {epoch} out of order, expected {}", rows.len())));
        }
        rows.push(HistoryRow {
            epoch,
            lr: num(1)?,
            tau_t: num(2)?,
            e_t: num(3)?,
            loss_rep: num(4)?,
            loss_cls: num(5)?,
            loss_ad: num(6)?,
            loss_bal: num(7)?,
            loss_cluster: num(8)?,
            loss_total: num(9)?,
            acc_all: acc(10)?,
            acc_old: acc(11)?,
            acc_new: acc(12)?,
        });
    }
    Ok(TrainHistory { rows })
}

pub fn load(path: &Path) -> Result<TrainHistory> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, acc: Option<f64>) -> HistoryRow {
        HistoryRow {
            epoch,
            lr: 0.1 / (epoch + 1) as f64,
            tau_t: 0.07,
            e_t: 0.1,
            loss_rep: 1.0 / 3.0,
            loss_cls: -0.25,
            loss_ad: 0.0,
            loss_bal: 2.5,
            loss_cluster: 0.0,
            loss_total: 3.0,
            acc_all: acc,
            acc_old: acc,
            acc_new: acc,
        }
    }

    #[test]
    fn header_and_round_trip() {
        let h = TrainHistory {
            rows: vec![row(0, Some(0.5)), row(1, None)],
        };
        let bytes = to_csv(&h);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(
            "epoch,lr,tau_t,e_t,loss_rep,loss_cls,loss_ad,loss_bal,loss_cluster,loss_total,acc_all,acc_old,acc_new\n"
        ));
        assert!(text.lines().nth(2).unwrap().ends_with(",,,"));
        assert_eq!(parse(&bytes, Path::new("h.csv")).unwrap(), h);
    }

    #[test]
    fn rejects_wrong_header_and_order() {
        assert!(parse(b"epoch,lr\n", Path::new("h")).is_err());
        let h = TrainHistory {
            rows: vec![row(1, None)],
        };
        let e = parse(&to_csv(&h), Path::new("h")).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }
}
