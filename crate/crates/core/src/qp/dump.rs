//! Plain-text dump of a QP for external cross-checking.
//!
//! ```text
//! # qp n=2 m=1 q=0
//! [H]
//! 2,0
//! 0,2
//! [f]
//! 0
//! 0
//! [G]
//! -1,-1
//! [h]
//! -2
//! ```
//!
//! `[A]`/`[b]` sections follow when equalities are present.

use super::QpProblem;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

fn write_matrix<T: Real>(out: &mut String, name: &str, m: &DMatrix<T>) {
    let _ = writeln!(out, "[{name}]");
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
}

fn write_vector<T: Real>(out: &mut String, name: &str, v: &DVector<T>) {
    let _ = writeln!(out, "[{name}]");
    for x in v.iter() {
        let _ = writeln!(out, "{x}");
    }
}

pub fn write_dump<T: Real>(p: &QpProblem<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# qp n={} m={} q={}", p.dim(), p.num_ineq(), p.num_eq());
    write_matrix(&mut out, "H", p.hessian());
    write_vector(&mut out, "f", p.linear());
    write_matrix(&mut out, "G", p.ineq_g());
    write_vector(&mut out, "h", p.ineq_h());
    if p.num_eq() > 0 {
        write_matrix(&mut out, "A", p.eq_a());
        write_vector(&mut out, "b", p.eq_b());
    }
    out
}

/// Parses the output of [`write_dump`] back into a problem.
pub fn read_dump(text: &str) -> Result<QpProblem<f64>> {
    let mut sections: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut dims = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("# qp") {
            let mut n = None;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("n=") {
                    n = v.parse::<usize>().ok();
                }
            }
            dims = n;
        } else if line.starts_with('#') {
            continue;
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push((name.to_string(), Vec::new()));
        } else {
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            sections
                .last_mut()
                .ok_or_else(|| Error::Parse("data before section header".into()))?
                .1
                .push(row);
        }
    }
    let n = dims.ok_or_else(|| Error::Parse("missing '# qp n=' header".into()))?;
    let get = |name: &str| sections.iter().find(|(s, _)| s == name).map(|(_, rows)| rows);
    let matrix = |name: &str| -> Result<DMatrix<f64>> {
        let rows = get(name).ok_or_else(|| Error::Parse(format!("missing section [{name}]")))?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse(format!("section [{name}] rows must have {n} entries")));
        }
        Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    };
    let vector = |name: &str| -> Result<DVector<f64>> {
        let rows = get(name).ok_or_else(|| Error::Parse(format!("missing section [{name}]")))?;
        Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[0])))
    };
    let p = QpProblem::new(matrix("H")?, vector("f")?, matrix("G")?, vector("h")?)?;
    if get("A").is_some() {
        p.with_equalities(matrix("A")?, vector("b")?)
    } else {
        Ok(p)
    }
}
