use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a residual value in the trace was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResKind {
    Exact,
    Hutchpp,
}

impl ResKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResKind::Exact => "exact",
            ResKind::Hutchpp => "hutchpp",
        }
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    LineSearchFailure,
    Stagnation,
    CgBreakdown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::LineSearchFailure => "line_search_failure",
            Status::Stagnation => "stagnation",
            Status::CgBreakdown => "cg_breakdown",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One iteration record. `res_rel` is absent on iterations where no residual
/// was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub res_rel: Option<f64>,
    pub res_kind: ResKind,
    pub rank: usize,
    pub beta: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub time_s: f64,
    pub event: String,
    /// Ranks of the residual and search-direction iterates (truncated CG only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank_r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank_p: Option<usize>,
}

impl TraceRow {
    pub fn new(iter: usize, f: f64, rank: usize) -> Self {
        TraceRow {
            iter,
            f,
            res_rel: None,
            res_kind: ResKind::Exact,
            rank,
            beta: 0.0,
            alpha: 0.0,
            backtracks: 0,
            time_s: 0.0,
            event: String::new(),
            rank_r: None,
            rank_p: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    #[serde(skip, default = "Instant::now")]
    start: Instant,
}

impl Default for SolveTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl SolveTrace {
    pub fn new() -> Self {
        SolveTrace { rows: Vec::new(), start: Instant::now() }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Appends a row, stamping the wall time. Iteration indices must increase.
    pub fn push(&mut self, mut row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iter <= last.iter {
                return Err(Error::InvalidArgument(format!(
                    "trace iteration {} after {}",
                    row.iter, last.iter
                )));
            }
        }
        row.time_s = self.elapsed();
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn last_mut(&mut self) -> Option<&mut TraceRow> {
        self.rows.last_mut()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Last exactly computed relative residual.
    pub fn last_exact_residual(&self) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.res_kind == ResKind::Exact && r.res_rel.is_some())?.res_rel
    }

    /// Offsets every iteration index and wall time so that this trace can be
    /// appended after `before`.
    pub fn shifted(&self, iter0: usize, t0: f64) -> Vec<TraceRow> {
        self.rows
            .iter()
            .map(|r| TraceRow { iter: r.iter + iter0, time_s: r.time_s + t0, ..r.clone() })
            .collect()
    }

    /// CSV with columns `iter,f,res_rel,res_kind,rank,beta,alpha,backtracks,time_s,event`,
    /// followed by `rank_r,rank_p` when any row carries them.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let extra = self.rows.iter().any(|r| r.rank_r.is_some() || r.rank_p.is_some());
        let mut out = csv::Writer::from_writer(w);
        let mut header =
            vec!["iter", "f", "res_rel", "res_kind", "rank", "beta", "alpha", "backtracks", "time_s", "event"];
        if extra {
            header.extend(["rank_r", "rank_p"]);
        }
        out.write_record(&header).map_err(csv_err)?;
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                r.iter.to_string(),
                format!("{:e}", r.f),
                r.res_rel.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.res_kind.as_str().to_string(),
                r.rank.to_string(),
                format!("{:e}", r.beta),
                format!("{:e}", r.alpha),
                r.backtracks.to_string(),
                format!("{:.6}", r.time_s),
                r.event.clone(),
            ];
            if extra {
                rec.push(opt(r.rank_r));
                rec.push(opt(r.rank_p));
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    /// Parses the output of [`SolveTrace::write_csv`].
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let need = |name: &str| col(name).ok_or_else(|| Error::Parse(format!("missing column {name}")));
        let idx = [
            need("iter")?,
            need("f")?,
            need("res_rel")?,
            need("res_kind")?,
            need("rank")?,
            need("beta")?,
            need("alpha")?,
            need("backtracks")?,
            need("time_s")?,
            need("event")?,
        ];
        let (ir, ip) = (col("rank_r"), col("rank_p"));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let s = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| s(i).parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", s(i))));
            let int = |i: usize| s(i).parse::<usize>().map_err(|e| Error::Parse(format!("{}: {e}", s(i))));
            let opt_int = |i: Option<usize>| -> Result<Option<usize>> {
                match i.map(s) {
                    None | Some("") => Ok(None),
                    Some(v) => v.parse().map(Some).map_err(|e| Error::Parse(format!("{v}: {e}"))),
                }
            };
            rows.push(TraceRow {
                iter: int(idx[0])?,
                f: num(idx[1])?,
                res_rel: if s(idx[2]).is_empty() { None } else { Some(num(idx[2])?) },
                res_kind: match s(idx[3]) {
                    "exact" => ResKind::Exact,
                    "hutchpp" => ResKind::Hutchpp,
                    other => return Err(Error::Parse(format!("unknown residual kind {other}"))),
                },
                rank: int(idx[4])?,
                beta: num(idx[5])?,
                alpha: num(idx[6])?,
                backtracks: int(idx[7])?,
                time_s: num(idx[8])?,
                event: s(idx[9]).to_string(),
                rank_r: opt_int(ir)?,
                rank_p: opt_int(ip)?,
            });
        }
        Ok(SolveTrace { rows, start: Instant::now() })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
