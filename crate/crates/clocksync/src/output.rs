//! CSV files of an experiment. Every file has a header row; optional
//! columns are left empty when absent.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use clocksync_core::experiment::{Method, RunStatus};
use clocksync_core::topology::Topology;

use crate::harness::PointResult;
use crate::HarnessError;

#[derive(Serialize)]
struct MetricCsv<'a> {
    sweep: Option<f64>,
    run: usize,
    method: &'a str,
    iteration: usize,
    broadcasts: f64,
    rmse_phase_s: f64,
    rmse_skew_ppm: f64,
    status: String,
    bcrb_phase_s: Option<f64>,
    bcrb_skew_ppm: Option<f64>,
}

#[derive(Serialize)]
struct NodeCsv<'a> {
    sweep: Option<f64>,
    run: usize,
    method: &'a str,
    node: usize,
    hops: usize,
    phase_error_s: f64,
    skew_error_ppm: f64,
    bcrb_phase_s: Option<f64>,
    bcrb_skew_ppm: Option<f64>,
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    sweep: Option<f64>,
    method: &'a str,
    iteration: usize,
    runs: usize,
    failed: usize,
    not_converged: usize,
    broadcasts: f64,
    rmse_phase_s: f64,
    rmse_skew_ppm: f64,
    bcrb_phase_s: Option<f64>,
    bcrb_skew_ppm: Option<f64>,
}

#[derive(Serialize)]
struct TraceCsv<'a> {
    method: &'a str,
    iteration: usize,
    node: usize,
    mean_lambda: f64,
    mean_nu: f64,
    var_lambda: f64,
    var_nu: f64,
    mean_change: f64,
}

/// Per-(sweep, method, iteration) aggregate over the runs that reached it.
/// RMSE values are root mean squares over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep: Option<f64>,
    pub method: Method,
    pub iteration: usize,
    pub runs: usize,
    pub failed: usize,
    pub not_converged: usize,
    pub broadcasts: f64,
    pub rmse_phase: f64,
    pub rmse_skew_ppm: f64,
    pub bcrb_phase: Option<f64>,
    pub bcrb_skew_ppm: Option<f64>,
}

fn rms_of(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn summarize(points: &[PointResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for p in points {
        let mut groups: BTreeMap<(Method, usize), Vec<_>> = BTreeMap::new();
        for r in p.runs.iter().flat_map(|o| &o.metrics) {
            groups.entry((r.method, r.iteration)).or_default().push(r);
        }
        for ((method, iteration), rows) in groups {
            let ok: Vec<_> = rows.iter().filter(|r| !matches!(r.status, RunStatus::Failed(_))).collect();
            let col = |f: &dyn Fn(&&&clocksync_core::experiment::MetricRow) -> f64| -> Vec<f64> { ok.iter().map(f).collect() };
            let opt = |f: &dyn Fn(&&&clocksync_core::experiment::MetricRow) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = ok.iter().map(f).collect();
                v.filter(|v| !v.is_empty()).map(|v| rms_of(&v))
            };
            let b = col(&|r| r.broadcasts);
            out.push(SummaryRow {
                sweep: p.sweep_value,
                method,
                iteration,
                runs: rows.len(),
                failed: rows.len() - ok.len(),
                not_converged: rows.iter().filter(|r| r.status == RunStatus::NotConverged).count(),
                broadcasts: if b.is_empty() { f64::NAN } else { b.iter().sum::<f64>() / b.len() as f64 },
                rmse_phase: if ok.is_empty() { f64::NAN } else { rms_of(&col(&|r| r.rmse_phase)) },
                rmse_skew_ppm: if ok.is_empty() { f64::NAN } else { rms_of(&col(&|r| r.rmse_skew_ppm)) },
                bcrb_phase: opt(&|r| r.bcrb_phase),
                bcrb_skew_ppm: opt(&|r| r.bcrb_skew_ppm),
            });
        }
    }
    out
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, HarnessError> {
    csv::Writer::from_path(path).map_err(HarnessError::from)
}

/// Writes `<name>.csv` (per run), `<name>_nodes.csv` (per node, final
/// iteration) and `<name>_summary.csv`, plus one trace file per run and
/// sweep point when `trace` is set. Returns the written paths.
pub fn write_results(dir: &Path, name: &str, points: &[PointResult], trace: bool) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let path = dir.join(format!("{name}.csv"));
    let mut w = writer(&path)?;
    for p in points {
        for r in p.runs.iter().flat_map(|o| &o.metrics) {
            w.serialize(MetricCsv {
                sweep: p.sweep_value,
                run: r.run,
                method: r.method.name(),
                iteration: r.iteration,
                broadcasts: r.broadcasts,
                rmse_phase_s: r.rmse_phase,
                rmse_skew_ppm: r.rmse_skew_ppm,
                status: r.status.label(),
                bcrb_phase_s: r.bcrb_phase,
                bcrb_skew_ppm: r.bcrb_skew_ppm,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    written.push(path);

    let path = dir.join(format!("{name}_nodes.csv"));
    let mut w = writer(&path)?;
    for p in points {
        for n in p.runs.iter().flat_map(|o| &o.nodes) {
            w.serialize(NodeCsv {
                sweep: p.sweep_value,
                run: n.run,
                method: n.method.name(),
                node: n.node,
                hops: n.hops,
                phase_error_s: n.phase_error,
                skew_error_ppm: n.skew_error_ppm,
                bcrb_phase_s: n.bcrb_phase,
                bcrb_skew_ppm: n.bcrb_skew_ppm,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    written.push(path);

    let path = dir.join(format!("{name}_summary.csv"));
    let mut w = writer(&path)?;
    for s in summarize(points) {
        w.serialize(SummaryCsv {
            sweep: s.sweep,
            method: s.method.name(),
            iteration: s.iteration,
            runs: s.runs,
            failed: s.failed,
            not_converged: s.not_converged,
            broadcasts: s.broadcasts,
            rmse_phase_s: s.rmse_phase,
            rmse_skew_ppm: s.rmse_skew_ppm,
            bcrb_phase_s: s.bcrb_phase,
            bcrb_skew_ppm: s.bcrb_skew_ppm,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    written.push(path);

    if trace {
        for (k, p) in points.iter().enumerate() {
            for (run, o) in p.runs.iter().enumerate() {
                let file = if points.len() > 1 {
                    format!("{name}_p{k}_trace_run{run}.csv")
                } else {
                    format!("{name}_trace_run{run}.csv")
                };
                let path = dir.join(file);
                let mut w = writer(&path)?;
                for (method, rows) in &o.traces {
                    for t in rows {
                        w.serialize(TraceCsv {
                            method: method.name(),
                            iteration: t.iteration,
                            node: t.node,
                            mean_lambda: t.mean_lambda,
                            mean_nu: t.mean_nu,
                            var_lambda: t.var_lambda,
                            var_nu: t.var_nu,
                            mean_change: t.mean_change,
                        })?;
                    }
                }
                w.flush().map_err(csv::Error::from)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Node table `node,x,y,is_master`, a blank line, then `node_i,node_j`.
pub fn topology_csv(t: &Topology) -> String {
    let mut s = String::from("node,x,y,is_master\n");
    for (i, p) in t.positions().iter().enumerate() {
        s.push_str(&format!("{i},{},{},{}\n", p[0], p[1], u8::from(t.is_master(i))));
    }
    s.push_str("\nnode_i,node_j\n");
    for (i, j) in t.edges() {
        s.push_str(&format!("{i},{j}\n"));
    }
    s
}
