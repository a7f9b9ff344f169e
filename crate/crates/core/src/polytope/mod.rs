//! Convex polytopes in vertex representation.
//!
//! A [`VPolytope`] is the convex hull of its stored vertex list. Stored lists
//! may carry redundant points; in two dimensions every constructor that
//! combines polytopes reduces the list to the counterclockwise hull.

mod hull;
mod membership;
mod text;

pub use membership::Membership;
pub use text::{parse_polytope, write_polytope};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope<T: Real> {
    dim: usize,
    vertices: Vec<DVector<T>>,
}

impl<T: Real> VPolytope<T> {
    /// Builds a polytope from raw vertices without reducing them.
    pub fn new(dim: usize, vertices: Vec<DVector<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("polytope dimension must be positive".into()));
        }
        if vertices.is_empty() {
            return Err(Error::Empty("polytope vertices"));
        }
        for v in &vertices {
            check_dim("polytope vertex", dim, v.len())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid("polytope vertex is not finite".into()));
            }
        }
        Ok(Self { dim, vertices })
    }

    /// Like [`VPolytope::new`], but reduces to the hull when `dim == 2`.
    pub fn from_points(dim: usize, vertices: Vec<DVector<T>>) -> Result<Self> {
        let p = Self::new(dim, vertices)?;
        Ok(p.reduced())
    }

    pub fn singleton(point: DVector<T>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, vec![point])
    }

    /// The set `{0}` in `dim` dimensions.
    pub fn origin(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            vertices: vec![DVector::zeros(dim.max(1))],
        }
    }

    /// Symmetric segment `Co{-v, v}` (a singleton when `v = 0`).
    pub fn symmetric_segment(half: DVector<T>) -> Result<Self> {
        let dim = half.len();
        Self::from_points(dim, vec![-half.clone(), half])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[DVector<T>] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    fn reduced(self) -> Self {
        if self.dim == 2 {
            let vertices = hull::monotone_chain(&self.vertices).expect("non-empty by construction");
            Self { dim: 2, vertices }
        } else {
            self
        }
    }

    /// Minkowski sum: all pairwise vertex sums, hull-reduced in 2-D.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        check_dim("minkowski_sum", self.dim, other.dim)?;
        let mut sums = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                sums.push(a + b);
            }
        }
        Ok(Self {
            dim: self.dim,
            vertices: sums,
        }
        .reduced())
    }

    /// Image under the square matrix `m`.
    pub fn linear_image(&self, m: &DMatrix<T>) -> Result<Self> {
        check_dim("linear_image rows", self.dim, m.nrows())?;
        check_dim("linear_image cols", self.dim, m.ncols())?;
        Ok(Self {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| m * v).collect(),
        }
        .reduced())
    }

    pub fn translate(&self, x: &DVector<T>) -> Result<Self> {
        check_dim("translate", self.dim, x.len())?;
        Ok(Self {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v + x).collect(),
        })
    }

    /// Point membership up to Euclidean distance `tol`, with a convex-weight
    /// certificate.
    pub fn contains(&self, x: &DVector<T>, tol: T) -> Result<Membership<T>> {
        membership::contains(self, x, tol)
    }

    /// True when every vertex of `self` lies in `other` within `tol`.
    pub fn is_subset_of(&self, other: &Self, tol: T) -> Result<bool> {
        check_dim("is_subset_of", other.dim, self.dim)?;
        for v in &self.vertices {
            if !other.contains(v, tol)?.contained {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Mutual containment of vertices.
    pub fn set_eq(&self, other: &Self, tol: T) -> Result<bool> {
        Ok(self.is_subset_of(other, tol)? && other.is_subset_of(self, tol)?)
    }
}

/// Minimal counterclockwise hull of a 2-D point list.
pub fn hull_2d<T: Real>(points: &[DVector<T>]) -> Result<VPolytope<T>> {
    for p in points {
        check_dim("hull_2d point", 2, p.len())?;
    }
    let vertices = hull::monotone_chain(points)?;
    VPolytope::new(2, vertices)
}
