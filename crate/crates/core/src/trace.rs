//! Per-iteration trace records and their CSV form.

use std::io::{self, Write};

/// One outer iteration. The record with `k = 0` describes the starting point
/// and has no block.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Work-normalized iteration count, `Σ N_i / N`.
    pub epoch: f64,
    pub block: Option<usize>,
    /// Accepted stepsize coefficient `θ_k`.
    pub theta: f64,
    /// Proximal subproblems solved this iteration.
    pub inner_trials: usize,
    /// `F(x^{k+1})` (for `k = 0`, `F(x⁰)`).
    pub f_value: f64,
    pub gap: Option<f64>,
    pub step_norm_sq: f64,
    pub pg_norm: Option<f64>,
    pub kkt_residual: Option<f64>,
    /// Seconds since the start of the run.
    pub elapsed: f64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "k",
    "epoch",
    "block",
    "theta",
    "inner_trials",
    "f",
    "gap",
    "step_norm_sq",
    "pg_norm",
    "elapsed_s",
    "kkt_residual",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{},{:e},{},{:e},{},{:e},{},{:e},{}",
            self.k,
            self.epoch,
            self.block.map(|b| b.to_string()).unwrap_or_default(),
            self.theta,
            self.inner_trials,
            self.f_value,
            opt(self.gap),
            self.step_norm_sq,
            opt(self.pg_norm),
            self.elapsed,
            opt(self.kkt_residual),
        )
    }
}

/// Streams iteration records (those with a block) as CSV.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &TraceRecord) -> io::Result<()> {
        if record.block.is_some() {
            writeln!(self.out, "{}", record.csv_row())?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Render a whole trace to a CSV string.
pub fn to_csv(records: &[TraceRecord]) -> String {
    let mut w = TraceWriter::new(Vec::new()).expect("writing to a Vec");
    for r in records {
        w.write(r).expect("writing to a Vec");
    }
    String::from_utf8(w.into_inner()).expect("ASCII output")
}

/// Drop the `elapsed_s` column from a trace CSV.
pub fn strip_elapsed(csv: &str) -> String {
    let col = CSV_COLUMNS.iter().position(|&c| c == "elapsed_s").unwrap();
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|&(j, _)| j != col)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, block: Option<usize>) -> TraceRecord {
        TraceRecord {
            k,
            epoch: 0.05 * k as f64,
            block,
            theta: 1.5,
            inner_trials: 2,
            f_value: 10.25,
            gap: Some(1e-3),
            step_norm_sq: 0.125,
            pg_norm: None,
            kkt_residual: None,
            elapsed: 0.001,
        }
    }

    #[test]
    fn initial_record_is_not_streamed() {
        let csv = to_csv(&[record(0, None)]);
        assert_eq!(csv, CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn row_layout() {
        let csv = to_csv(&[record(0, None), record(1, Some(3))]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "1,5e-2,3,1.5e0,2,1.025e1,1e-3,1.25e-1,,1e-3,");
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
        let stripped = strip_elapsed(&csv);
        assert_eq!(
            stripped.lines().nth(1).unwrap(),
            "1,5e-2,3,1.5e0,2,1.025e1,1e-3,1.25e-1,,"
        );
    }
}
