//! Delimited text form: a `#` header line carrying the dimension (and any
//! step indices), then one comma-separated vertex per line.

use super::VPolytope;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::DVector;
use std::fmt::Write as _;

/// Serializes `p`. `tags` are appended to the header as `key=value` pairs.
pub fn write_polytope<T: Real>(p: &VPolytope<T>, tags: &[(&str, usize)]) -> String {
    let mut out = format!("# dim={}", p.dim());
    for (k, v) in tags {
        let _ = write!(out, " {k}={v}");
    }
    out.push('\n');
    for v in p.vertices() {
        let row: Vec<String> = v.iter().map(|c| c.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses [`write_polytope`] output. The stored vertex list is kept as is.
pub fn parse_polytope(text: &str) -> Result<VPolytope<f64>> {
    let mut dim: Option<usize> = None;
    let mut vertices = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(header) = line.strip_prefix('#') {
            for tok in header.split_whitespace() {
                if let Some(d) = tok.strip_prefix("dim=") {
                    dim = Some(d.parse().map_err(|_| Error::Parse(format!("bad dim '{d}'")))?);
                }
            }
            continue;
        }
        let coords = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        vertices.push(DVector::from_vec(coords));
    }
    let dim = match dim {
        Some(d) => d,
        None => vertices.first().map(|v| v.len()).ok_or(Error::Empty("polytope text"))?,
    };
    VPolytope::new(dim, vertices)
}
