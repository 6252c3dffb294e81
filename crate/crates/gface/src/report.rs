//! Text and CSV renderings of accuracy and bound reports.
//!
//! Every report has a flat `key=value` block for people and a header plus
//! one row of CSV for machines, with the same keys in the same order.

use gface_core::eval::AccReport;
use gface_core::theory::BoundReport;

pub type Fields = Vec<(&'static str, String)>;

pub fn acc_fields(source: &str, r: &AccReport) -> Fields {
    let assignment = r
        .assignment
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    vec![
        ("source", source.to_string()),
        ("acc_all", r.acc_all.to_string()),
        ("acc_old", r.acc_old.to_string()),
        ("acc_new", r.acc_new.to_string()),
        ("n_old", r.n_old.to_string()),
        ("n_new", r.n_new.to_string()),
        ("matching", format!("{:?}", r.matching).to_lowercase()),
        ("assignment", assignment),
    ]
}

pub fn bound_fields(r: &BoundReport) -> Fields {
    vec![
        ("xi_l", r.xi_l.to_string()),
        ("xi_u", r.xi_u.to_string()),
        ("xi_u_old", r.xi_u_old.to_string()),
        ("xi_u_new", r.xi_u_new.to_string()),
        ("theta", r.theta.to_string()),
        ("alpha", r.alpha.to_string()),
        ("delta", r.delta.to_string()),
        ("lambda_const", r.lambda_const.to_string()),
        ("lhs", r.lhs.to_string()),
        ("rhs", r.rhs.to_string()),
        ("margin", r.margin.to_string()),
        ("assumption_holds", r.assumption_holds.to_string()),
        ("coefficient_positive", r.coefficient_positive.to_string()),
        (
            "bound_holds",
            match r.holds() {
                Some(b) => b.to_string(),
                None => "not-asserted".into(),
            },
        ),
        ("family_size", r.family_size.to_string()),
    ]
}

pub fn key_values(fields: &Fields) -> String {
    fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn csv_line<'a>(cells: impl Iterator<Item = &'a str>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(cells).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("in-memory buffer")).expect("utf-8 input")
}

pub fn csv_header(fields: &Fields) -> String {
    csv_line(fields.iter().map(|(k, _)| *k))
}

pub fn csv_row(fields: &Fields) -> String {
    csv_line(fields.iter().map(|(_, v)| v.as_str()))
}

/// Header plus one row per report; all reports must share keys.
pub fn csv_table(rows: &[Fields]) -> String {
    let mut out = rows.first().map(csv_header).unwrap_or_default();
    for r in rows {
        out.push_str(&csv_row(r));
    }
    out
}
