//! Text formats of a benchmark run.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so every file round-trips exactly.

use crate::error::{Error, Result};
use crate::polytope::VPolytope;
use crate::tube::{ContainmentReport, TubeSequence};
use nalgebra::DVector;
use std::path::Path;

pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn prediction_file(k: usize) -> String {
    format!("pred_k{k}.csv")
}

pub fn anchors_file(k: usize) -> String {
    format!("anchors_k{k}.csv")
}

pub fn tube_file(k: usize) -> String {
    format!("tube_k{k}.csv")
}

pub fn containment_file(k: usize) -> String {
    format!("containment_k{k}.csv")
}

/// One closed-loop step: state, plant input, realized scheduling, cost,
/// inner iterations and summed QP time.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub theta: f64,
    pub omega: f64,
    pub u: f64,
    pub p_realized: f64,
    pub cost: f64,
    pub inner_iters: usize,
    pub qp_time: f64,
}

/// Prediction index `i`: `xhat_i`, and for `i < N` the MPC input and the
/// scheduling used.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub i: usize,
    pub xhat: [f64; 2],
    pub u: Option<f64>,
    pub phat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRow {
    pub i: usize,
    pub anchor: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentRow {
    pub i: usize,
    pub contained: bool,
    pub residual: f64,
    pub premise_ok: Option<bool>,
}

fn parse_err(file: &str, line: usize, what: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{file}:{line}: {what}"))
}

fn field<T: std::str::FromStr>(file: &str, line: usize, rec: &csv::StringRecord, idx: usize) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| parse_err(file, line, format!("missing column {idx}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("bad value {raw:?} in column {idx}")))
}

fn opt_field<T: std::str::FromStr>(file: &str, line: usize, rec: &csv::StringRecord, idx: usize) -> Result<Option<T>> {
    match rec.get(idx).map(str::trim) {
        None | Some("") | Some("na") => Ok(None),
        Some(_) => field(file, line, rec, idx).map(Some),
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn read_csv(file: &str, text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| parse_err(file, 1, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(parse_err(file, 1, format!("expected header {}", header.join(","))));
    }
    r.records()
        .map(|rec| rec.map_err(|e| parse_err(file, 0, e)))
        .collect()
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const TRACE_HEADER: [&str; 8] = ["k", "theta", "omega", "u", "p_realized", "cost", "inner_iters", "qp_time"];

pub fn write_trace(rows: &[TraceRow]) -> String {
    write_csv(
        &TRACE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.theta.to_string(),
                r.omega.to_string(),
                r.u.to_string(),
                r.p_realized.to_string(),
                r.cost.to_string(),
                r.inner_iters.to_string(),
                r.qp_time.to_string(),
            ]
        }),
    )
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRow>> {
    let f = TRACE_FILE;
    read_csv(f, text, &TRACE_HEADER)?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let line = n + 2;
            Ok(TraceRow {
                k: field(f, line, r, 0)?,
                theta: field(f, line, r, 1)?,
                omega: field(f, line, r, 2)?,
                u: field(f, line, r, 3)?,
                p_realized: field(f, line, r, 4)?,
                cost: field(f, line, r, 5)?,
                inner_iters: field(f, line, r, 6)?,
                qp_time: field(f, line, r, 7)?,
            })
        })
        .collect()
}

const PRED_HEADER: [&str; 5] = ["i", "xhat1", "xhat2", "u", "phat"];

pub fn write_prediction(rows: &[PredictionRow]) -> String {
    write_csv(
        &PRED_HEADER,
        rows.iter().map(|r| {
            vec![
                r.i.to_string(),
                r.xhat[0].to_string(),
                r.xhat[1].to_string(),
                opt_str(r.u),
                opt_str(r.phat),
            ]
        }),
    )
}

pub fn read_prediction(text: &str) -> Result<Vec<PredictionRow>> {
    let f = "prediction";
    read_csv(f, text, &PRED_HEADER)?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let line = n + 2;
            Ok(PredictionRow {
                i: field(f, line, r, 0)?,
                xhat: [field(f, line, r, 1)?, field(f, line, r, 2)?],
                u: opt_field(f, line, r, 3)?,
                phat: opt_field(f, line, r, 4)?,
            })
        })
        .collect()
}

const ANCHOR_HEADER: [&str; 3] = ["i", "a1", "a2"];

pub fn write_anchors(rows: &[AnchorRow]) -> String {
    write_csv(
        &ANCHOR_HEADER,
        rows.iter()
            .map(|r| vec![r.i.to_string(), r.anchor[0].to_string(), r.anchor[1].to_string()]),
    )
}

pub fn read_anchors(text: &str) -> Result<Vec<AnchorRow>> {
    let f = "anchors";
    read_csv(f, text, &ANCHOR_HEADER)?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let line = n + 2;
            Ok(AnchorRow {
                i: field(f, line, r, 0)?,
                anchor: [field(f, line, r, 1)?, field(f, line, r, 2)?],
            })
        })
        .collect()
}

const CONTAINMENT_HEADER: [&str; 4] = ["i", "contained", "residual", "premise_ok"];

pub fn write_containment(report: &ContainmentReport<f64>) -> String {
    write_csv(
        &CONTAINMENT_HEADER,
        report.entries.iter().map(|e| {
            vec![
                e.i.to_string(),
                e.contained.to_string(),
                e.residual.to_string(),
                e.premise_ok.map(|b| b.to_string()).unwrap_or_else(|| "na".into()),
            ]
        }),
    )
}

pub fn read_containment(text: &str) -> Result<Vec<ContainmentRow>> {
    let f = "containment";
    read_csv(f, text, &CONTAINMENT_HEADER)?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let line = n + 2;
            Ok(ContainmentRow {
                i: field(f, line, r, 0)?,
                contained: field(f, line, r, 1)?,
                residual: field(f, line, r, 2)?,
                premise_ok: opt_field(f, line, r, 3)?,
            })
        })
        .collect()
}

/// Blocks separated by blank lines: the index `i`, one `e1,e2` row per
/// vertex of `E_i`, then `center,xhat1,xhat2`.
pub fn write_tube(tube: &TubeSequence<f64>) -> String {
    let mut out = String::new();
    for (i, (poly, center)) in tube.polytopes.iter().zip(&tube.centers).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("{i}\n"));
        for v in poly.vertices() {
            let cells: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let cells: Vec<String> = center.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("center,{}\n", cells.join(",")));
    }
    out
}

fn parse_row(line: &str, n: usize) -> Result<DVector<f64>> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err("tube", n, format!("bad row {line:?}")))?;
    Ok(DVector::from_vec(vals))
}

pub fn read_tube(text: &str, k: usize) -> Result<TubeSequence<f64>> {
    let mut polytopes = Vec::new();
    let mut centers = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while lines.peek().is_some() {
        while lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            lines.next();
        }
        let Some((n, head)) = lines.next() else { break };
        let idx: usize = head
            .trim()
            .parse()
            .map_err(|_| parse_err("tube", n + 1, format!("expected block index, got {head:?}")))?;
        if idx != polytopes.len() {
            return Err(parse_err("tube", n + 1, format!("block {idx} out of order")));
        }
        let mut vertices = Vec::new();
        let mut center = None;
        while let Some((n, l)) = lines.peek().copied() {
            if l.trim().is_empty() {
                break;
            }
            lines.next();
            if let Some(rest) = l.strip_prefix("center,") {
                center = Some(parse_row(rest, n + 1)?);
            } else {
                vertices.push(parse_row(l, n + 1)?);
            }
        }
        let center = center.ok_or_else(|| parse_err("tube", n + 1, format!("block {idx} has no center")))?;
        polytopes.push(VPolytope::new(center.len(), vertices)?);
        centers.push(center);
    }
    if polytopes.is_empty() {
        return Err(Error::Parse("tube file has no blocks".into()));
    }
    Ok(TubeSequence { k, polytopes, centers })
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
