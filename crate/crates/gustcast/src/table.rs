//! Comparison grid as CSV and as a markdown table.

use std::fmt::Write as _;
use std::path::Path;

use gustcast_core::experiment::{Comparison, ComparisonRow};

use crate::error::{CliError, Result};

pub const DAGGER: &str = "†";

fn row_name(row: &ComparisonRow) -> String {
    match row.farm {
        Some(f) => format!("farm{f}"),
        None => "average".into(),
    }
}

/// One line per row and cell.
pub fn write_comparison_csv(path: &Path, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["row", "model", "mode", "avg_nd", "avg_nrmse", "nd_dagger", "nrmse_dagger"]).map_err(err)?;
    for row in &c.rows {
        for cell in &row.cells {
            w.write_record([
                row_name(row),
                cell.model.clone(),
                cell.mode.as_str().to_string(),
                cell.nd.to_string(),
                cell.nrmse.to_string(),
                cell.nd_dagger.to_string(),
                cell.nrmse_dagger.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Every pairwise test; degenerate ones have empty statistic columns.
pub fn write_pvalues_csv(path: &Path, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["row", "mode", "metric", "a", "b", "n", "mean_difference", "t", "p", "degenerate"]).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &c.tests {
        let row = match t.farm {
            Some(f) => format!("farm{f}"),
            None => "average".into(),
        };
        let (n, md, stat, p, degenerate) = match &t.result {
            Some(r) => (r.n.to_string(), r.mean_difference.to_string(), opt(r.t_statistic), opt(r.p_value), r.degenerate),
            None => (String::new(), String::new(), String::new(), String::new(), true),
        };
        w.write_record([row, t.mode.as_str().into(), t.metric.as_str().into(), t.a.clone(), t.b.clone(), n, md, stat, p, degenerate.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Farms down, modes then models across; each cell is `ND / NRMSE` and a
/// dagger marks a significant best.
pub fn render_markdown(c: &Comparison) -> String {
    let mut s = String::new();
    let mut header = String::from("| farm |");
    let mut rule = String::from("|---|");
    for mode in &c.modes {
        for model in &c.models {
            let _ = write!(header, " {model} ({}) |", mode.as_str());
            rule.push_str("---|");
        }
    }
    let _ = writeln!(s, "{header}\n{rule}");
    for row in &c.rows {
        let _ = write!(s, "| {} |", row_name(row));
        for &mode in &c.modes {
            for model in &c.models {
                match row.cells.iter().find(|x| &x.model == model && x.mode == mode) {
                    Some(cell) => {
                        let nd_mark = if cell.nd_dagger { DAGGER } else { "" };
                        let nrmse_mark = if cell.nrmse_dagger { DAGGER } else { "" };
                        let _ = write!(s, " {:.4}{nd_mark} / {:.4}{nrmse_mark} |", cell.nd, cell.nrmse);
                    }
                    None => s.push_str(" - |"),
                }
            }
        }
        s.push('\n');
    }
    s.push_str("\nCells are average ND / NRMSE over test batches. ");
    s.push_str("A dagger marks the best model of a row and mode when a paired t-test against the runner-up gives p < 0.05.\n");
    s
}
