//! Offline synthesis of the stabilizing gain `K` and the terminal weight `P`.
//!
//! `K` comes from the discrete algebraic Riccati equation at a nominal
//! scheduling value and is then certified over a grid of the admissible
//! scheduling set by checking the spectral radius of `A(p) + B K`.

use crate::error::{check_dim, Error, Result};
use crate::lpv::AffineLpvModel;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Stopping rule for the fixed-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterSettings<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for IterSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DareSolution<T: Real> {
    pub p: DMatrix<T>,
    /// `K = -(R + B'PB)^{-1} B'PA`, so the closed loop is `A + BK`.
    pub k: DMatrix<T>,
    pub residual: T,
    pub iterations: usize,
}

fn riccati_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, r: &DMatrix<T>, p: &DMatrix<T>) -> Result<DMatrix<T>> {
    let s = r + b.transpose() * p * b;
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite("R + B'PB"))?;
    Ok(-chol.solve(&(b.transpose() * p * a)))
}

fn riccati_map<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let k = riccati_gain(a, b, r, p)?;
    let next = a.transpose() * p * a + a.transpose() * p * b * &k + q;
    Ok((symmetrize(&next), k))
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn check_square<T: Real>(name: &'static str, m: &DMatrix<T>, n: usize) -> Result<()> {
    check_dim(name, n, m.nrows())?;
    check_dim(name, n, m.ncols())
}

/// `|| A'PA - A'PB (R + B'PB)^{-1} B'PA + Q - P ||_inf`.
pub fn dare_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<T> {
    let (next, _) = riccati_map(a, b, q, r, p)?;
    Ok((next - p).amax())
}

/// Solves the DARE by value iteration from `P = Q`.
pub fn solve_dare<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    settings: &IterSettings<T>,
) -> Result<DareSolution<T>> {
    let n = a.nrows();
    check_square("DARE A", a, n)?;
    check_square("DARE Q", q, n)?;
    check_dim("DARE B rows", n, b.nrows())?;
    check_square("DARE R", r, b.ncols())?;
    if r.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("R"));
    }

    let mut p = symmetrize(q);
    let mut diff = T::max_value().unwrap_or(T::one());
    for it in 1..=settings.max_iter {
        let (next, _) = riccati_map(a, b, q, r, &p)?;
        diff = (&next - &p).amax();
        p = next;
        if diff <= settings.tol {
            let k = riccati_gain(a, b, r, &p)?;
            let residual = dare_residual(a, b, q, r, &p)?;
            let radius = spectral_radius(&(a + b * &k));
            if radius >= T::one() {
                return Err(Error::Unstable {
                    radius: radius.to_f64_lossy(),
                    scheduling: vec![],
                });
            }
            return Ok(DareSolution {
                p,
                k,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        method: "Riccati iteration",
        iterations: settings.max_iter,
        residual: diff.to_f64_lossy(),
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.hypot(z.im))
        .fold(T::zero(), |acc, v| acc.max(v))
}

/// `|| A'PA - P + Q ||_inf`.
pub fn lyapunov_residual<T: Real>(a: &DMatrix<T>, q: &DMatrix<T>, p: &DMatrix<T>) -> T {
    (a.transpose() * p * a - p + q).amax()
}

/// Solves `A'PA - P + Q = 0` by summing `sum_k (A')^k Q A^k` until the
/// increment drops below `tol`.
pub fn solve_discrete_lyapunov<T: Real>(
    a: &DMatrix<T>,
    q: &DMatrix<T>,
    settings: &IterSettings<T>,
) -> Result<DMatrix<T>> {
    let n = a.nrows();
    check_square("Lyapunov A", a, n)?;
    check_square("Lyapunov Q", q, n)?;
    let radius = spectral_radius(a);
    if radius >= T::one() {
        return Err(Error::Unstable {
            radius: radius.to_f64_lossy(),
            scheduling: vec![],
        });
    }
    let mut p = symmetrize(q);
    let mut diff = T::zero();
    for _ in 0..settings.max_iter {
        let next = symmetrize(&(a.transpose() * &p * a + q));
        diff = (&next - &p).amax();
        p = next;
        if diff <= settings.tol {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        method: "Lyapunov summation",
        iterations: settings.max_iter,
        residual: diff.to_f64_lossy(),
    })
}

/// Gain, terminal weight and the robustness certificate.
#[derive(Debug, Clone)]
pub struct SynthesisResult<T: Real> {
    pub gain: DMatrix<T>,
    /// Riccati solution at the nominal scheduling.
    pub riccati: DMatrix<T>,
    pub riccati_residual: T,
    /// Terminal weight from `A_cl' P A_cl - P + Q + K'RK = 0` at nominal.
    pub terminal: DMatrix<T>,
    pub lyapunov_residual: T,
    pub nominal: DVector<T>,
    /// `(p, rho(A(p) + BK))` for every grid point.
    pub spectral_radii: Vec<(DVector<T>, T)>,
}

/// DARE gain at `nominal`, certified on `grid`, plus the terminal weight.
pub fn robust_lpv_gain<T: Real>(
    model: &AffineLpvModel<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    nominal: &DVector<T>,
    grid: &[DVector<T>],
    settings: &IterSettings<T>,
) -> Result<SynthesisResult<T>> {
    if grid.is_empty() {
        return Err(Error::Empty("scheduling grid"));
    }
    let a_nom = model.eval_a(nominal)?;
    let dare = solve_dare(&a_nom, model.b(), q, r, settings)?;
    let k = dare.k.clone();

    let mut radii = Vec::with_capacity(grid.len());
    let mut offending = Vec::new();
    for p in grid {
        let radius = spectral_radius(&(model.eval_a(p)? + model.b() * &k));
        if radius >= T::one() {
            offending.push((p.clone(), radius));
        }
        radii.push((p.clone(), radius));
    }
    if let Some((p, radius)) = offending.into_iter().next() {
        return Err(Error::Unstable {
            radius: radius.to_f64_lossy(),
            scheduling: p.iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }

    let a_cl = &a_nom + model.b() * &k;
    let q_bar = q + k.transpose() * r * &k;
    let terminal = solve_discrete_lyapunov(&a_cl, &q_bar, settings)?;
    let lyapunov_residual = lyapunov_residual(&a_cl, &q_bar, &terminal);
    Ok(SynthesisResult {
        gain: k,
        riccati: dare.p,
        riccati_residual: dare.residual,
        terminal,
        lyapunov_residual,
        nominal: nominal.clone(),
        spectral_radii: radii,
    })
}

/// `count` evenly spaced values of `f(t)` for `t` in `[lo, hi]`.
pub fn sampled_grid<T: Real>(lo: T, hi: T, count: usize, f: impl Fn(T) -> T) -> Vec<DVector<T>> {
    let denom = T::lit((count.max(2) - 1) as f64);
    (0..count)
        .map(|i| {
            let t = if count == 1 { lo } else { lo + (hi - lo) * T::lit(i as f64) / denom };
            DVector::from_element(1, f(t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpv::ConstantScheduling;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    #[test]
    fn scalar_dare_closed_form() {
        // p^2 - 0.25 p - 1 = 0 for a = 0.5, b = q = r = 1.
        let p_exact = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        let s = solve_dare(&dmatrix![0.5], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], &IterSettings::default())
            .unwrap();
        assert!((s.p[(0, 0)] - p_exact).abs() < 1e-11);
        assert!((s.p[(0, 0)] - 1.13278).abs() < 1e-5);
        let k_exact = -p_exact * 0.5 / (1.0 + p_exact);
        assert!((s.k[(0, 0)] - k_exact).abs() < 1e-11);
        assert!((s.k[(0, 0)] + 0.26556).abs() < 1e-5);
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn dare_degenerate_cases() {
        let s = solve_dare(&dmatrix![0.5], &dmatrix![0.0], &dmatrix![1.0], &dmatrix![1.0], &IterSettings::default())
            .unwrap();
        assert!(f64::abs(s.p[(0, 0)] - 4.0 / 3.0) < 1e-11);
        assert_eq!(s.k[(0, 0)], 0.0);

        let q = dmatrix![2.0, 0.5; 0.5, 1.0];
        let s = solve_dare(&DMatrix::zeros(2, 2), &dmatrix![1.0; 0.0], &q, &dmatrix![1.0], &IterSettings::default())
            .unwrap();
        assert_eq!(s.p, q);
        assert_eq!(s.k, DMatrix::zeros(1, 2));
    }

    #[test]
    fn dare_unstabilizable_fails() {
        let r = solve_dare(
            &dmatrix![1.5],
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &IterSettings { tol: 1e-12, max_iter: 500 },
        );
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
        assert!(solve_dare(&dmatrix![0.5], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![0.0], &IterSettings::default()).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let s = IterSettings::default();
        let q = dmatrix![1.0, 0.2; 0.2, 3.0];
        assert_eq!(solve_discrete_lyapunov(&DMatrix::zeros(2, 2), &q, &s).unwrap(), q);
        let p = solve_discrete_lyapunov(&dmatrix![0.5], &dmatrix![1.0], &s).unwrap();
        assert!(f64::abs(p[(0, 0)] - 4.0 / 3.0) < 1e-12);
        assert_eq!(solve_discrete_lyapunov(&dmatrix![0.5], &dmatrix![0.0], &s).unwrap(), dmatrix![0.0]);
        assert!(matches!(
            solve_discrete_lyapunov(&dmatrix![1.0], &dmatrix![1.0], &s),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let t = 0.3_f64;
        let m = dmatrix![t.cos(), -t.sin(); t.sin(), t.cos()] * 0.9;
        assert!((spectral_radius(&m) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn heavy_input_penalty_keeps_open_loop() {
        let a = dmatrix![0.9, 0.1; 0.0, 0.8];
        let model = AffineLpvModel::new(
            vec![a.clone(), DMatrix::zeros(2, 2)],
            dmatrix![0.0; 1.0],
            Arc::new(ConstantScheduling(DVector::from_element(1, 0.0))),
            0.1,
        )
        .unwrap();
        let grid = sampled_grid(-1.0, 1.0, 5, |t| t);
        let res = robust_lpv_gain(
            &model,
            &DMatrix::identity(2, 2),
            &dmatrix![1e6],
            &DVector::from_element(1, 0.0),
            &grid,
            &IterSettings::default(),
        )
        .unwrap();
        assert!(res.gain.amax() < 1e-4);
        for (_, r) in &res.spectral_radii {
            assert!(f64::abs(r - 0.9) < 1e-4);
        }
    }

    #[test]
    fn certification_reports_offending_point() {
        // A(p) = p: the nominal gain only stabilizes a neighbourhood.
        let model = AffineLpvModel::new(
            vec![dmatrix![0.0], dmatrix![1.0]],
            dmatrix![1.0],
            Arc::new(ConstantScheduling(DVector::from_element(1, 0.0))),
            0.1,
        )
        .unwrap();
        let nominal = DVector::from_element(1, 0.5);
        let grid = vec![DVector::from_element(1, 0.5), DVector::from_element(1, 5.0)];
        let err = robust_lpv_gain(&model, &dmatrix![1.0], &dmatrix![1.0], &nominal, &grid, &IterSettings::default())
            .unwrap_err();
        match err {
            Error::Unstable { scheduling, .. } => assert_eq!(scheduling, vec![5.0]),
            other => panic!("unexpected {other:?}"),
        }
        let single = robust_lpv_gain(&model, &dmatrix![1.0], &dmatrix![1.0], &nominal, &grid[..1], &IterSettings::default())
            .unwrap();
        let dare = solve_dare(&dmatrix![0.5], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], &IterSettings::default())
            .unwrap();
        assert!(f64::abs(single.spectral_radii[0].1 - f64::abs(0.5 + dare.k[(0, 0)])) < 1e-12);
    }
}
