//! CSV metrics output.
//!
//! One row per evaluation point. Losses and KL scores are running means over
//! the updates since the previous row; windows with no updates (e.g. during
//! warmup) hold NaN. Floats are printed with Rust's shortest round-trip
//! formatting, so parsing a file back reproduces the values exactly and two
//! identical runs produce byte-identical files.

use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "step,eval_return_mean,eval_return_std,critic_loss,actor_loss,kappa_selected,kappa_candidates_mean,wallclock_s";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub kappa_selected: f64,
    pub kappa_candidates_mean: f64,
    pub wallclock_s: f64,
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.eval_return_mean,
            self.eval_return_std,
            self.critic_loss,
            self.actor_loss,
            self.kappa_selected,
            self.kappa_candidates_mean,
            self.wallclock_s
        )
    }
}

pub(crate) fn render_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Write rows as CSV. At least one row is required.
pub fn emit_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("refusing to emit an empty metrics file".into()));
    }
    std::fs::write(path, render_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Parse a metrics CSV produced by [`emit_metrics`].
pub fn parse_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse(format!(
                "{}: missing or unexpected CSV header",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "{} line {}: expected 8 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::Parse(format!(
                    "{} line {}: bad float '{}'",
                    path.display(),
                    lineno + 2,
                    fields[i]
                ))
            })
        };
        rows.push(MetricsRow {
            step: fields[0].parse().map_err(|_| {
                Error::Parse(format!(
                    "{} line {}: bad step '{}'",
                    path.display(),
                    lineno + 2,
                    fields[0]
                ))
            })?,
            eval_return_mean: f(1)?,
            eval_return_std: f(2)?,
            critic_loss: f(3)?,
            actor_loss: f(4)?,
            kappa_selected: f(5)?,
            kappa_candidates_mean: f(6)?,
            wallclock_s: f(7)?,
        });
    }
    Ok(rows)
}
