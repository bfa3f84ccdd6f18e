//! Plot data in gnuplot block layout.
//!
//! Each series is a block of `t value` lines introduced by `# series <name>`.
//! A comment line `# mode <m>` starts every run of constant mode, runs are
//! separated by one blank line and series by two, so `index` selects a series
//! and line plots break at mode switches.

use std::fmt::Write as _;

use crate::output::TrajectoryTable;
use crate::CliError;

/// Columns to plot: the requested list, or every state coordinate.
pub fn select_columns(
    table: &TrajectoryTable,
    requested: Option<&[String]>,
) -> Result<Vec<usize>, CliError> {
    match requested {
        None => Ok((0..table.columns.len())
            .filter(|&i| table.columns[i].starts_with('x'))
            .collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                table.column(n).filter(|&i| i != 0).ok_or_else(|| {
                    CliError::Config(format!(
                        "no column {n:?} (available: {})",
                        table.columns[1..].join(", ")
                    ))
                })
            })
            .collect(),
    }
}

pub fn render(table: &TrajectoryTable, cols: &[usize]) -> String {
    let mut out = String::new();
    if table.rows.is_empty() {
        return out;
    }
    for (k, &c) in cols.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        writeln!(out, "# series {}", table.columns[c]).unwrap();
        let mut mode: Option<&str> = None;
        for row in &table.rows {
            if mode != Some(row.mode.as_str()) {
                if mode.is_some() {
                    out.push('\n');
                }
                writeln!(out, "# mode {}", row.mode).unwrap();
                mode = Some(&row.mode);
            }
            writeln!(out, "{:.16e} {:.16e}", row.values[0], row.values[c]).unwrap();
        }
    }
    out
}
