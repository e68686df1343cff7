//! Per-iteration trajectory records and their CSV form.
//!
//! The CSV header is `iter,objective,grad_norm,alpha,test_accuracy,flag`.
//! Floats are written in Rust's shortest round-trip notation, so a written
//! file reads back to bit-identical records. An empty `test_accuracy` cell
//! means no evaluation happened at that iteration.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,objective,grad_norm,alpha,test_accuracy,flag";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Ok,
    Converged,
    /// Terminal: the objective, gradient or direction stopped being finite.
    Nonfinite,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::Converged => "converged",
            Flag::Nonfinite => "nonfinite",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Flag::Ok
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ok" => Ok(Flag::Ok),
            "converged" => Ok(Flag::Converged),
            "nonfinite" => Ok(Flag::Nonfinite),
            other => Err(format!("unknown flag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: u64,
    /// Objective at the iterate the step started from (minibatch loss for
    /// stochastic problems).
    pub objective: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub test_accuracy: Option<f64>,
    pub flag: Flag,
}

impl TrajectoryRecord {
    pub fn to_csv_line(&self) -> String {
        let acc = self
            .test_accuracy
            .map(|a| format!("{a:?}"))
            .unwrap_or_default();
        format!(
            "{},{:?},{:?},{:?},{},{}",
            self.iter, self.objective, self.grad_norm, self.alpha, acc, self.flag
        )
    }
}

/// Append-only CSV writer. Lines are buffered and written whole, so an
/// interrupted run leaves a readable prefix.
pub struct CsvSink {
    file: File,
    path: PathBuf,
    buf: String,
    rows: u64,
}

impl CsvSink {
    const FLUSH_BYTES: usize = 1 << 16;

    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(format!("{CSV_HEADER}\n").as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            file,
            path,
            buf: String::with_capacity(Self::FLUSH_BYTES * 2),
            rows: 0,
        })
    }

    pub fn push(&mut self, record: &TrajectoryRecord) -> Result<()> {
        self.buf.push_str(&record.to_csv_line());
        self.buf.push('\n');
        self.rows += 1;
        if self.buf.len() >= Self::FLUSH_BYTES || record.flag.is_terminal() {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file
            .write_all(self.buf.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        self.buf.clear();
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<()> {
        self.flush()?;
        self.file.sync_all().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes a whole run. Refuses an empty record list.
pub fn write_csv(records: &[TrajectoryRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidInput(
            "refusing to write an empty trajectory".into(),
        ));
    }
    let mut sink = CsvSink::create(path)?;
    for r in records {
        sink.push(r)?;
    }
    sink.finish()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }

    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {i}: {e}", line + 1)))
        };
        let acc = field(4);
        out.push(TrajectoryRecord {
            iter: field(0)
                .parse()
                .map_err(|e| bad(format!("row {}: iter: {e}", line + 1)))?,
            objective: num(1)?,
            grad_norm: num(2)?,
            alpha: num(3)?,
            test_accuracy: if acc.is_empty() { None } else { Some(num(4)?) },
            flag: field(5)
                .parse()
                .map_err(|e: String| bad(format!("row {}: {e}", line + 1)))?,
        });
    }
    Ok(out)
}

/// Headline numbers of one run for side-by-side comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub iterations: u64,
    pub final_objective: f64,
    pub best_objective: f64,
    pub final_accuracy: Option<f64>,
    pub best_accuracy: Option<f64>,
    pub final_flag: Flag,
}

impl RunSummary {
    pub fn from_records(name: impl Into<String>, records: &[TrajectoryRecord]) -> Result<Self> {
        let last = records
            .last()
            .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
        let best_objective = records
            .iter()
            .map(|r| r.objective)
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        let accs = records.iter().filter_map(|r| r.test_accuracy);
        Ok(Self {
            name: name.into(),
            iterations: last.iter,
            final_objective: last.objective,
            best_objective,
            final_accuracy: records.iter().rev().find_map(|r| r.test_accuracy),
            best_accuracy: accs.reduce(f64::max),
            final_flag: last.flag,
        })
    }
}

pub fn compare_runs<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RunSummary>> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            RunSummary::from_records(p.display().to_string(), &read_csv(p)?)
        })
        .collect()
}

/// Highest final test accuracy, ties broken by the lower final objective.
/// Runs without accuracy rank by final objective alone, after those with one.
pub fn best_run(runs: &[RunSummary]) -> Option<&RunSummary> {
    use std::cmp::Ordering;
    let key_obj = |r: &RunSummary| {
        if r.final_objective.is_finite() {
            r.final_objective
        } else {
            f64::INFINITY
        }
    };
    runs.iter().max_by(|a, b| {
        let acc = match (a.final_accuracy, b.final_accuracy) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Greater,
            (None, Some(_)) => Ordering::Less,
            (None, None) => Ordering::Equal,
        };
        acc.then_with(|| key_obj(b).total_cmp(&key_obj(a)))
    })
}

/// Plain-text table of summaries, one run per row.
pub fn format_summary_table(runs: &[RunSummary]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
    let mut out = format!(
        "{:<40} {:>9} {:>14} {:>14} {:>9} {:>9} {:>10}\n",
        "run", "iters", "final_obj", "best_obj", "final_acc", "best_acc", "flag"
    );
    for r in runs {
        out.push_str(&format!(
            "{:<40} {:>9} {:>14.6e} {:>14.6e} {:>9} {:>9} {:>10}\n",
            r.name,
            r.iterations,
            r.final_objective,
            r.best_objective,
            opt(r.final_accuracy),
            opt(r.best_accuracy),
            r.final_flag
        ));
    }
    out
}
