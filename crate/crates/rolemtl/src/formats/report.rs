//! Human-readable tables. Machine output is the JSON of the same structs.

use rolemtl_core::corpus::{HOLDER, TARGET};
use rolemtl_core::metrics::{CvSummary, SpanMetricsReport};

/// Column order of every ORL table.
pub const ORL_METRICS: [&str; 4] = ["holder_binary_f1", "holder_prop_f1", "target_binary_f1", "target_prop_f1"];

const HEADER: [&str; 4] = ["H bin F1", "H prop F1", "T bin F1", "T prop F1"];

pub fn metric_values(r: &SpanMetricsReport) -> [f64; 4] {
    let get = |l: &str| r.role(l).map(|s| (s.binary.f1, s.proportional.f1)).unwrap_or_default();
    let (hb, hp) = get(HOLDER);
    let (tb, tp) = get(TARGET);
    [hb, hp, tb, tp]
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                s.push_str(&format!("{cell:<w$}", w = width[0]));
            } else {
                s.push_str(&format!("  {cell:>w$}", w = width[c]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// One row per named report, F1 in percent.
pub fn orl_table(rows: &[(String, SpanMetricsReport)]) -> String {
    let mut header = vec!["model"];
    header.extend(HEADER);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| std::iter::once(name.clone()).chain(metric_values(r).map(pct)).collect())
        .collect();
    table(&header, &body)
}

/// Precision, recall and F1 of each role, both measures.
pub fn detail_table(r: &SpanMetricsReport) -> String {
    let header = ["role", "bin P", "bin R", "bin F1", "prop P", "prop R", "prop F1"];
    let body: Vec<Vec<String>> = r
        .roles
        .iter()
        .map(|(label, s)| {
            vec![
                label.clone(),
                pct(s.binary.p),
                pct(s.binary.r),
                pct(s.binary.f1),
                pct(s.proportional.p),
                pct(s.proportional.r),
                pct(s.proportional.f1),
            ]
        })
        .collect();
    table(&header, &body)
}

/// Cross-validation row: mean and standard deviation per metric, with a `*`
/// where the difference to the reference row is significant.
pub struct CvRow<'a> {
    pub name: String,
    pub cells: [&'a CvSummary; 4],
    pub significant: [bool; 4],
}

pub fn cv_table(rows: &[CvRow]) -> String {
    let mut header = vec!["model"];
    header.extend(HEADER);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.name.clone()];
            for (s, sig) in r.cells.iter().zip(r.significant) {
                v.push(format!("{}±{}{}", pct(s.mean), pct(s.sd), if sig { "*" } else { " " }));
            }
            v
        })
        .collect();
    table(&header, &body)
}
