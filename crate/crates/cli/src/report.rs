use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{CliError, CliResult};

struct Table {
    run: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> CliResult<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if let Some(missing) = required.iter().find(|c| !header.iter().any(|h| h == *c)) {
            return Err(CliError::Core(vdsg::Error::Input(format!(
                "{}: missing column '{missing}'",
                path.display()
            ))));
        }
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            run: path.display().to_string(),
            header,
            rows,
        })
    }

    fn col(&self, row: &[String], name: &str) -> String {
        let i = self.header.iter().position(|h| h == name).expect("checked column");
        row.get(i).cloned().unwrap_or_default()
    }
}

const TRACE_COLUMNS: [&str; 6] = [
    "iteration",
    "active",
    "eliminated",
    "mean_entropy",
    "final_loss",
    "label_accuracy",
];
const METRIC_COLUMNS: [&str; 3] = ["metric", "K", "value"];

fn md_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn md_header(out: &mut String, cells: &[&str]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(cells.len()));
}

/// Writes `summary.md` and `convergence.csv` into `out`.
pub fn report(traces: &[impl AsRef<Path>], metrics: &[impl AsRef<Path>], out: &Path) -> CliResult {
    if traces.is_empty() && metrics.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one --trace or --metrics file".into(),
        ));
    }
    let traces = traces
        .iter()
        .map(|p| Table::read(p.as_ref(), &TRACE_COLUMNS))
        .collect::<CliResult<Vec<_>>>()?;
    let metrics = metrics
        .iter()
        .map(|p| Table::read(p.as_ref(), &METRIC_COLUMNS))
        .collect::<CliResult<Vec<_>>>()?;

    let mut md = String::from("# Summary\n");
    let mut conv = String::from("run,iteration,label_accuracy,final_loss\n");
    if !metrics.is_empty() {
        md.push_str("\n## Metrics\n\n");
        md_header(&mut md, &["run", "metric", "K", "value"]);
        for t in &metrics {
            for row in &t.rows {
                let mut cells = vec![t.run.clone()];
                cells.extend(METRIC_COLUMNS.iter().map(|c| t.col(row, c)));
                md_row(&mut md, &cells);
            }
        }
    }
    if !traces.is_empty() {
        md.push_str("\n## Denoising\n\n");
        let mut header = vec!["run"];
        header.extend(TRACE_COLUMNS);
        md_header(&mut md, &header);
        for t in &traces {
            for row in &t.rows {
                let mut cells = vec![t.run.clone()];
                cells.extend(TRACE_COLUMNS.iter().map(|c| t.col(row, c)));
                md_row(&mut md, &cells);
                let _ = writeln!(
                    conv,
                    "{},{},{},{}",
                    t.run,
                    t.col(row, "iteration"),
                    t.col(row, "label_accuracy"),
                    t.col(row, "final_loss")
                );
            }
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.md"), md)?;
    fs::write(out.join("convergence.csv"), conv)?;
    Ok(())
}
