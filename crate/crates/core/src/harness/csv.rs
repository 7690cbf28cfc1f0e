use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::method::{RunStatus, StepKind, TrackingKind};

use super::{CellRecord, SweepResult};

pub const CSV_HEADER: &str = "variant,policy,d_max,iterations,status,comm_vectors,wall_ms";

/// One CSV line. `iterations` is −1 for DIVERGED cells and `wall_ms` is
/// empty unless wall time was recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub variant: TrackingKind,
    pub policy: StepKind,
    pub d_max: f64,
    pub iterations: i64,
    pub status: RunStatus,
    pub comm_vectors: u64,
    pub wall_ms: Option<f64>,
}

impl From<&CellRecord> for CsvRow {
    fn from(c: &CellRecord) -> Self {
        let iterations = match c.status {
            RunStatus::Diverged => -1,
            _ => c.iterations as i64,
        };
        Self {
            variant: c.variant,
            policy: c.policy,
            d_max: c.d_max,
            iterations,
            status: c.status,
            comm_vectors: c.comm_vectors,
            wall_ms: c.wall_ms,
        }
    }
}

pub fn sweep_csv(res: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &res.cells {
        let r = CsvRow::from(c);
        let wall = r.wall_ms.map(|w| format!("{w:.16e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.16e},{},{},{},{}",
            r.variant.label(),
            r.policy.label(),
            r.d_max,
            r.iterations,
            r.status.label(),
            r.comm_vectors,
            wall
        );
    }
    out
}

pub fn emit_csv(res: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, sweep_csv(res))?;
    Ok(())
}

fn field<'a>(fields: &[&'a str], i: usize, line: usize) -> Result<&'a str> {
    fields.get(i).copied().ok_or_else(|| Error::Parse(format!("line {line}: missing column {i}")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("line {line}: bad {what} {s:?}")))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::Parse("missing sweep header".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("line {ln}: expected 7 columns, got {}", f.len())));
        }
        let variant = TrackingKind::parse(field(&f, 0, ln)?)
            .ok_or_else(|| Error::Parse(format!("line {ln}: unknown variant {}", f[0])))?;
        let policy = StepKind::parse(field(&f, 1, ln)?)
            .ok_or_else(|| Error::Parse(format!("line {ln}: unknown policy {}", f[1])))?;
        let status = RunStatus::parse(f[4]).ok_or_else(|| Error::Parse(format!("line {ln}: unknown status {}", f[4])))?;
        let wall_ms = if f[6].is_empty() { None } else { Some(num(f[6], "wall_ms", ln)?) };
        rows.push(CsvRow {
            variant,
            policy,
            d_max: num(f[2], "d_max", ln)?,
            iterations: num(f[3], "iterations", ln)?,
            status,
            comm_vectors: num(f[5], "comm_vectors", ln)?,
            wall_ms,
        });
    }
    Ok(rows)
}
