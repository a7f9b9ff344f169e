//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's algorithms.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use std::io::Write;

/// Writes a line straight to the process stderr so it shows up even when the
/// test harness captures output.
pub fn report(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
}

/// Disk parameters in test-local form: `(I, m, g, l, tau, K_m, t_s)`.
pub const DISK: (f64, f64, f64, f64, f64, f64, f64) = (2.4e-4, 0.076, 9.81, 0.041, 0.4, 11.0, 0.01);

pub fn disk_gamma() -> f64 {
    let (i, m, g, l, _, _, ts) = DISK;
    ts * m * g * l / i
}

/// Direct nonlinear disk recursion with the sine term.
pub fn disk_step(x: [f64; 2], u: f64) -> [f64; 2] {
    let (i, m, g, l, tau, km, ts) = DISK;
    [
        x[0] + ts * x[1],
        ts * m * g * l / i * x[0].sin() + (1.0 - ts / tau) * x[1] + ts * km / tau * u,
    ]
}

/// Open-loop disk matrices `A(p)`, `B`.
pub fn disk_matrices(p: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (_, _, _, _, tau, km, ts) = DISK;
    (
        DMatrix::from_row_slice(2, 2, &[1.0, ts, disk_gamma() * p, 1.0 - ts / tau]),
        DMatrix::from_row_slice(2, 1, &[0.0, ts * km / tau]),
    )
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn seg_dist(a: [f64; 2], b: [f64; 2], x: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    let p = [a[0] + t * d[0] - x[0], a[1] + t * d[1] - x[1]];
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

/// Euclidean distance from `x` to the convex hull of `pts` by brute force:
/// zero inside any vertex triangle, otherwise the nearest vertex-pair segment.
pub fn hull_distance(pts: &[[f64; 2]], x: [f64; 2]) -> f64 {
    let n = pts.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
                let area = cross(pa, pb, pc);
                if area == 0.0 {
                    continue;
                }
                let s = area.signum();
                if s * cross(pa, pb, x) >= 0.0 && s * cross(pb, pc, x) >= 0.0 && s * cross(pc, pa, x) >= 0.0 {
                    return 0.0;
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    for a in 0..n {
        best = best.min(seg_dist(pts[a], pts[a], x));
        for b in a + 1..n {
            best = best.min(seg_dist(pts[a], pts[b], x));
        }
    }
    best
}

pub fn to_pts(v: &[DVector<f64>]) -> Vec<[f64; 2]> {
    v.iter().map(|p| [p[0], p[1]]).collect()
}

/// Mutual containment of two planar point sets' hulls.
pub fn hulls_equal(a: &[[f64; 2]], b: &[[f64; 2]], tol: f64) -> bool {
    a.iter().all(|p| hull_distance(b, *p) <= tol) && b.iter().all(|p| hull_distance(a, *p) <= tol)
}

/// Minimizer of `1/2 x'Hx + f'x` s.t. `Gx <= h` by enumerating active sets.
/// Returns `None` when no subset yields a feasible KKT point.
pub fn brute_force_qp(h_mat: &DMatrix<f64>, f: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h_mat.nrows();
    let m = g.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let q = act.len();
        if q > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + q, n + q);
        kkt.view_mut((0, 0), (n, n)).copy_from(h_mat);
        let mut rhs = DVector::zeros(n + q);
        rhs.rows_mut(0, n).copy_from(&(-f));
        for (r, &i) in act.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = g[(i, c)];
                kkt[(c, n + r)] = g[(i, c)];
            }
            rhs[n + r] = h[i];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, q).into_owned();
        if lam.iter().any(|l| *l < -1e-9) {
            continue;
        }
        if (g * &x - h).iter().any(|v| *v > 1e-9) {
            continue;
        }
        let obj = 0.5 * x.dot(&(h_mat * &x)) + f.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Spectral radius of a 2x2 matrix from its characteristic polynomial.
pub fn spectral_radius_2x2(a: &DMatrix<f64>) -> f64 {
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        det.sqrt()
    }
}

/// Minimum of `sin t / t` over `[0, t_max]` by dense sampling.
pub fn sinc_min(t_max: f64) -> f64 {
    (1..=200_000)
        .map(|s| {
            let t = t_max * s as f64 / 200_000.0;
            t.sin() / t
        })
        .fold(1.0, f64::min)
}

/// `xi` between `a` and `b` with `sin b - sin a = cos(xi) (b - a)`: grid
/// bracket, then bisection.
pub fn mvt_cos(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    let c = (b.sin() - a.sin()) / (b - a);
    let f = |t: f64| t.cos() - c;
    let at = |s: f64| a + (b - a) * s;
    const GRID: usize = 256;
    let mut bracket = None;
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..GRID {
        let (s0, s1) = (j as f64 / GRID as f64, (j + 1) as f64 / GRID as f64);
        let (f0, f1) = (f(at(s0)), f(at(s1)));
        if f0.abs() < best.0 {
            best = (f0.abs(), s0);
        }
        if (f0 < 0.0) != (f1 < 0.0) {
            bracket = Some((s0, s1, f0));
            break;
        }
    }
    let Some((mut lo, mut hi, mut f_lo)) = bracket else {
        return at(best.1);
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(at(mid));
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}
