use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::DVector;
use std::cmp::Ordering;

/// z-component of `(b - a) x (c - a)`.
pub(crate) fn cross<T: Real>(a: &DVector<T>, b: &DVector<T>, c: &DVector<T>) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Turns with |cross| below this fraction of the edge-length product count as
/// collinear.
fn collinear_tol<T: Real>(a: &DVector<T>, b: &DVector<T>, c: &DVector<T>) -> T {
    let ab = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let ac = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
    T::default_epsilon() * T::lit(64.0) * ab * ac
}

fn lex<T: Real>(a: &DVector<T>, b: &DVector<T>) -> Ordering {
    a[0].partial_cmp(&b[0])
        .unwrap_or(Ordering::Equal)
        .then(a[1].partial_cmp(&b[1]).unwrap_or(Ordering::Equal))
}

fn half_hull<'a, T: Real>(points: impl Iterator<Item = &'a DVector<T>>) -> Vec<DVector<T>> {
    let mut chain: Vec<DVector<T>> = Vec::new();
    for p in points {
        while chain.len() >= 2 {
            let a = &chain[chain.len() - 2];
            let b = &chain[chain.len() - 1];
            if cross(a, b, p) <= collinear_tol(a, b, p) {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(p.clone());
    }
    chain
}

/// Andrew's monotone chain. Returns the hull vertices counterclockwise,
/// starting from the lexicographically smallest point, with duplicates and
/// collinear points removed.
pub(crate) fn monotone_chain<T: Real>(points: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
    if points.is_empty() {
        return Err(Error::Empty("hull_2d points"));
    }
    let mut pts: Vec<DVector<T>> = points.to_vec();
    pts.sort_by(lex);
    pts.dedup_by(|a, b| a[0] == b[0] && a[1] == b[1]);
    if pts.len() <= 2 {
        return Ok(pts);
    }
    let mut lower = half_hull(pts.iter());
    let mut upper = half_hull(pts.iter().rev());
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.is_empty() {
        // Every point coincided after tolerance; keep the extremes.
        lower.push(pts[0].clone());
    }
    Ok(lower)
}
