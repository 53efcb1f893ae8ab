//! Human and machine renderings of empowerment reports.

use std::cmp::Ordering;

use serde::Serialize;

use repemp_core::dsl::Library;
use repemp_core::empowerment::{EmpowermentReport, Estimator};

pub const DEFAULT_BITS_PRECISION: usize = 3;

/// Fixed-point rendering; exact binary ties round half to even.
pub fn bits(x: f64, precision: usize) -> String {
    let s = format!("{x:.precision$}");
    // a tiny negative from floating error should not print as "-0.000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// One evaluated library.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibraryRow {
    pub library: String,
    pub programs: Vec<String>,
    pub report: EmpowermentReport,
}

impl LibraryRow {
    pub fn new(id: &str, lib: &Library, report: EmpowermentReport) -> LibraryRow {
        LibraryRow { library: id.to_string(), programs: lib.ids().map(ToString::to_string).collect(), report }
    }
}

/// Machine-readable output of `eval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub scenario: String,
    pub horizon: u32,
    pub estimator: Estimator,
    #[serde(flatten)]
    pub row: LibraryRow,
}

/// Machine-readable output of `compare`: one ranking per estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub scenario: String,
    pub horizon: u32,
    pub rankings: Vec<Ranking>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub estimator: Estimator,
    pub rows: Vec<LibraryRow>,
}

impl Ranking {
    /// Sorts descending by value; ties (within 1e-12) go to the lexically
    /// smaller id.
    pub fn new(estimator: Estimator, mut rows: Vec<LibraryRow>) -> Ranking {
        rows.sort_by(|a, b| {
            let (x, y) = (a.report.value(), b.report.value());
            if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0) {
                a.library.cmp(&b.library)
            } else {
                y.partial_cmp(&x).unwrap_or(Ordering::Equal)
            }
        });
        Ranking { estimator, rows }
    }
}

const HEADER: [&str; 6] = ["library", "programs", "n_eff", "diversity", "uncertainty", "repemp"];

fn cells(row: &LibraryRow, precision: usize) -> [String; 6] {
    let r = &row.report;
    [
        row.library.clone(),
        row.programs.join(" "),
        r.n_eff.to_string(),
        bits(r.diversity_bits, precision),
        bits(r.uncertainty_bits, precision),
        bits(r.mi_bits, precision),
    ]
}

/// Aligned text table; text columns left-aligned, numbers right-aligned.
pub fn table(rows: &[LibraryRow], precision: usize) -> String {
    let body: Vec<[String; 6]> = rows.iter().map(|r| cells(r, precision)).collect();
    let mut width = HEADER.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: [&str; 6]| {
        let mut out = String::new();
        for (i, c) in cols.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 2 {
                out.push_str(&format!("{c:<w$}", w = width[i]));
            } else {
                out.push_str(&format!("{c:>w$}", w = width[i]));
            }
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    };
    let mut out = line(HEADER);
    for row in &body {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4], &row[5]]));
    }
    out
}

pub fn csv(rows: &[LibraryRow], precision: usize) -> String {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(cells(r, precision)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Pretty JSON with a trailing newline. Full float precision.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
