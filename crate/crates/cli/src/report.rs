//! Evaluation reports as CSV and as an aligned text table.

use std::fmt::Write as _;

use cnmf_core::eval::{aggregate, EvalReport};

pub const COLUMNS: [&str; 9] = [
    "song",
    "delta",
    "precision",
    "recall",
    "f_measure",
    "accuracy",
    "tp",
    "fp",
    "fn",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SongRow {
    pub song: String,
    /// Threshold the estimate was picked at, when known.
    pub delta: Option<f64>,
    pub report: EvalReport,
}

fn delta_cell(delta: Option<f64>) -> String {
    delta.map_or_else(String::new, |d| format!("{d:.2}"))
}

/// Per-song rows followed by `macro` (mean of song ratios) and `micro`
/// (pooled counts) rows.
pub fn to_csv(rows: &[SongRow]) -> String {
    let mut out = COLUMNS.join(",") + "\n";
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            csv_field(&row.song),
            delta_cell(row.delta),
            r.precision,
            r.recall,
            r.f_measure,
            r.accuracy,
            r.tp,
            r.fp,
            r.fn_
        );
    }
    let reports: Vec<EvalReport> = rows.iter().map(|r| r.report).collect();
    let agg = aggregate(&reports);
    let _ = writeln!(
        out,
        "macro,,{:.6},{:.6},{:.6},{:.6},,,",
        agg.macro_precision, agg.macro_recall, agg.macro_f, agg.macro_accuracy
    );
    let m = agg.micro;
    let _ = writeln!(
        out,
        "micro,,{:.6},{:.6},{:.6},{:.6},{},{},{}",
        m.precision, m.recall, m.f_measure, m.accuracy, m.tp, m.fp, m.fn_
    );
    out
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Human-readable table with percentages.
pub fn to_table(rows: &[SongRow]) -> String {
    let width = rows.iter().map(|r| r.song.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>6} {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}",
        "song", "delta", "P", "R", "F", "A", "tp", "fp", "fn"
    );
    let pct = |x: f64| format!("{:.1}", 100.0 * x);
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>6} {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}",
            row.song,
            delta_cell(row.delta),
            pct(r.precision),
            pct(r.recall),
            pct(r.f_measure),
            pct(r.accuracy),
            r.tp,
            r.fp,
            r.fn_
        );
    }
    let reports: Vec<EvalReport> = rows.iter().map(|r| r.report).collect();
    let agg = aggregate(&reports);
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>6} {:>6} {:>6} {:>6}",
        "macro",
        "",
        pct(agg.macro_precision),
        pct(agg.macro_recall),
        pct(agg.macro_f),
        pct(agg.macro_accuracy)
    );
    let m = agg.micro;
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>6} {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}",
        "micro",
        "",
        pct(m.precision),
        pct(m.recall),
        pct(m.f_measure),
        pct(m.accuracy),
        m.tp,
        m.fp,
        m.fn_
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<SongRow> {
        vec![
            SongRow {
                song: "a".into(),
                delta: Some(0.05),
                report: EvalReport::from_counts(8, 2, 2),
            },
            SongRow {
                song: "b,c".into(),
                delta: None,
                report: EvalReport::from_counts(0, 0, 4),
            },
        ]
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&rows());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "song,delta,precision,recall,f_measure,accuracy,tp,fp,fn");
        assert_eq!(lines[1], "a,0.05,0.800000,0.800000,0.800000,0.666667,8,2,2");
        assert!(lines[2].starts_with("\"b,c\",,0.000000"));
        assert_eq!(lines[3], "macro,,0.400000,0.400000,0.400000,0.333333,,,");
        // Pooled: tp 8, fp 2, fn 6.
        assert_eq!(lines[4], "micro,,0.800000,0.571429,0.666667,0.500000,8,2,6");
    }

    #[test]
    fn table_has_aggregates() {
        let table = to_table(&rows());
        assert!(table.contains("macro"));
        assert!(table
            .lines()
            .any(|l| l.starts_with("a ") && l.contains("80.0") && l.contains("66.7")));
    }
}
