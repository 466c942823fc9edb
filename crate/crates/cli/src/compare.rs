use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::solve::Summary;
use crate::Failure;

#[derive(Debug, Serialize)]
struct Row<'a> {
    run: String,
    solver: &'a str,
    precond: &'a str,
    status: &'a str,
    iters: usize,
    time_s: f64,
    final_rank: usize,
    final_res: Option<f64>,
}

/// Loads `path`, or `path/summary.json` when `path` is a directory.
pub fn load_summary(path: &Path) -> Result<Summary, Failure> {
    let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Failure::Io(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: not a run summary ({e})", file.display())))
}

/// One CSV row per summary, in input order.
pub fn compare<W: Write>(paths: &[PathBuf], w: W) -> Result<(), Failure> {
    if paths.len() < 2 {
        return Err(Failure::Config("compare needs at least two run summaries".into()));
    }
    let summaries = paths.iter().map(|p| load_summary(p)).collect::<Result<Vec<_>, _>>()?;
    let mut out = csv::Writer::from_writer(w);
    for (p, s) in paths.iter().zip(&summaries) {
        let run = s.config.name.clone().unwrap_or_else(|| p.display().to_string());
        out.serialize(Row {
            run,
            solver: s.config.solver.as_str(),
            precond: s.config.precond.as_str(),
            status: s.status.as_str(),
            iters: s.iters,
            time_s: s.wall_s,
            final_rank: s.final_rank,
            final_res: s.final_res,
        })
        .map_err(|e| Failure::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
