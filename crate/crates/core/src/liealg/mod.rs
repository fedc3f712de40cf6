//! The Lie algebra `so(n)` of skew-symmetric matrices.
//!
//! Elements are stored as dense `n × n` matrices. The scalar product is
//! `⟨x, y⟩ = -½ tr(x y)`, under which the wedge basis
//! `Eᵢ∧Eⱼ = EᵢEⱼᵀ - EⱼEᵢᵀ` (`i < j`, lexicographic) is orthonormal. Wedge
//! coordinates are therefore just the strict upper triangle read row by row,
//! and every measure or determinant in the crate is taken in that chart.

mod frame;
mod inertia;
mod stiefel;

pub use frame::{
    ad_matrix, frame_gram, isotropy_frame, orthonormal_complement, orthonormal_span,
    restricted_det, subspace_projectors, Frame, GramMode, SubspaceProjectors,
};
pub(crate) use frame::gram_unchecked;
pub use inertia::{inertia_apply, inertia_solve, InertiaKind, InertiaSpec};
pub use stiefel::StiefelPoint;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Vector3};

use crate::{Error, Result};

/// Relative skew-symmetry tolerance accepted by [`AlgElem::new`].
pub const SKEW_TOL: f64 = 1e-14;

/// `n(n-1)/2`, the dimension of `so(n)`.
pub fn algebra_dim(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Position of `Eᵢ∧Eⱼ` (0-based, `i < j`) in the lexicographic wedge ordering.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Lexicographic list of index pairs `(i, j)`, `i < j`.
pub fn wedge_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(algebra_dim(n));
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    pairs
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Dimension(format!("so(n) requires n >= 3, got {n}")));
    }
    Ok(())
}

/// An element of `so(n)`.
#[derive(Clone, PartialEq)]
pub struct AlgElem {
    mat: DMatrix<f64>,
}

impl fmt::Debug for AlgElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AlgElem(n={}, {:?})", self.dim(), self.wedge_coords().as_slice())
    }
}

impl AlgElem {
    /// Wraps a matrix, checking that it is square, `n >= 3` and skew within
    /// `1e-14 · ‖x‖`.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        check_dimension(mat.nrows())?;
        let defect = (&mat + mat.transpose()).norm();
        if defect > SKEW_TOL * mat.norm() {
            return Err(Error::NotSkew { defect });
        }
        Ok(Self { mat })
    }

    /// Skew part `(x - xᵀ)/2` of an arbitrary square matrix.
    pub fn skew_part(mat: &DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension("expected a square matrix".into()));
        }
        check_dimension(mat.nrows())?;
        Ok(Self {
            mat: (mat - mat.transpose()) * 0.5,
        })
    }

    pub fn zero(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Ok(Self {
            mat: DMatrix::zeros(n, n),
        })
    }

    /// `Eᵢ∧Eⱼ` with 0-based indices; `i > j` gives `-Eⱼ∧Eᵢ`.
    pub fn wedge(n: usize, i: usize, j: usize) -> Result<Self> {
        check_dimension(n)?;
        if i >= n || j >= n || i == j {
            return Err(Error::Dimension(format!("invalid wedge indices ({i}, {j}) for n = {n}")));
        }
        let mut mat = DMatrix::zeros(n, n);
        mat[(i, j)] = 1.0;
        mat[(j, i)] = -1.0;
        Ok(Self { mat })
    }

    /// Builds an element from its wedge coordinates.
    pub fn from_wedge(n: usize, coords: &[f64]) -> Result<Self> {
        check_dimension(n)?;
        if coords.len() != algebra_dim(n) {
            return Err(Error::DimensionMismatch {
                expected: algebra_dim(n),
                found: coords.len(),
            });
        }
        Ok(Self::from_wedge_unchecked(n, coords))
    }

    pub(crate) fn from_wedge_unchecked(n: usize, coords: &[f64]) -> Self {
        let mut mat = DMatrix::zeros(n, n);
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                mat[(i, j)] = coords[idx];
                mat[(j, i)] = -coords[idx];
                idx += 1;
            }
        }
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `n(n-1)/2`.
    pub fn algebra_dim(&self) -> usize {
        algebra_dim(self.dim())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn wedge_coords(&self) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(algebra_dim(n));
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                out[idx] = self.mat[(i, j)];
                idx += 1;
            }
        }
        out
    }

    /// Writes the wedge coordinates into `out`, which must have length `N`.
    pub fn write_wedge(&self, out: &mut [f64]) {
        let n = self.dim();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                out[idx] = self.mat[(i, j)];
                idx += 1;
            }
        }
    }

    /// `⟨self, other⟩ = -½ tr(self · other)`. Panics on dimension mismatch;
    /// see [`inner_product`] for the checked form.
    pub fn dot(&self, other: &AlgElem) -> f64 {
        assert_eq!(self.dim(), other.dim(), "so(n) dimension mismatch");
        // -½ tr(x y) = ½ Σ x_ij y_ij for skew y
        0.5 * self.mat.dot(&other.mat)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Matrix commutator `self·other - other·self`. Panics on dimension
    /// mismatch; see [`commutator`] for the checked form.
    pub fn bracket(&self, other: &AlgElem) -> AlgElem {
        assert_eq!(self.dim(), other.dim(), "so(n) dimension mismatch");
        let xy = &self.mat * &other.mat;
        let yx = &other.mat * &self.mat;
        AlgElem { mat: xy - yx }
    }

    /// Largest entry of `|x + xᵀ|`.
    pub fn skew_defect(&self) -> f64 {
        (&self.mat + self.mat.transpose()).amax()
    }

    pub fn scale(&self, s: f64) -> AlgElem {
        AlgElem { mat: &self.mat * s }
    }
}

impl Add for &AlgElem {
    type Output = AlgElem;
    fn add(self, rhs: &AlgElem) -> AlgElem {
        AlgElem {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Add for AlgElem {
    type Output = AlgElem;
    fn add(self, rhs: AlgElem) -> AlgElem {
        AlgElem {
            mat: self.mat + rhs.mat,
        }
    }
}

impl AddAssign<&AlgElem> for AlgElem {
    fn add_assign(&mut self, rhs: &AlgElem) {
        self.mat += &rhs.mat;
    }
}

impl Sub for &AlgElem {
    type Output = AlgElem;
    fn sub(self, rhs: &AlgElem) -> AlgElem {
        AlgElem {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Sub for AlgElem {
    type Output = AlgElem;
    fn sub(self, rhs: AlgElem) -> AlgElem {
        AlgElem {
            mat: self.mat - rhs.mat,
        }
    }
}

impl Neg for AlgElem {
    type Output = AlgElem;
    fn neg(self) -> AlgElem {
        AlgElem { mat: -self.mat }
    }
}

impl Mul<f64> for &AlgElem {
    type Output = AlgElem;
    fn mul(self, s: f64) -> AlgElem {
        self.scale(s)
    }
}

impl Mul<f64> for AlgElem {
    type Output = AlgElem;
    fn mul(self, s: f64) -> AlgElem {
        AlgElem { mat: self.mat * s }
    }
}

/// The `n(n-1)/2` elements `Eᵢ∧Eⱼ`, `i < j`, in lexicographic order.
pub fn wedge_basis(n: usize) -> Result<Vec<AlgElem>> {
    check_dimension(n)?;
    Ok(wedge_pairs(n)
        .into_iter()
        .map(|(i, j)| AlgElem::wedge(n, i, j).expect("valid pair"))
        .collect())
}

/// `⟨x, y⟩ = -½ tr(x y)`.
pub fn inner_product(x: &AlgElem, y: &AlgElem) -> Result<f64> {
    same_dim(x, y)?;
    Ok(x.dot(y))
}

/// `[x, y] = x y - y x`.
pub fn commutator(x: &AlgElem, y: &AlgElem) -> Result<AlgElem> {
    same_dim(x, y)?;
    Ok(x.bracket(y))
}

fn same_dim(x: &AlgElem, y: &AlgElem) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// The isomorphism `ℝ³ → so(3)`,
/// `(X₁, X₂, X₃) ↦ [[0, -X₃, X₂], [X₃, 0, -X₁], [-X₂, X₁, 0]]`.
pub fn hat(v: &Vector3<f64>) -> AlgElem {
    let mat = DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0],
    );
    AlgElem { mat }
}

/// Inverse of [`hat`].
pub fn unhat(x: &AlgElem) -> Result<Vector3<f64>> {
    if x.dim() != 3 {
        return Err(Error::Dimension(format!("unhat requires n = 3, got {}", x.dim())));
    }
    let m = &x.mat;
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Independent trace-form oracle: `-½ tr(x y)` from explicit products.
    fn trace_form(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        -0.5 * (x * y).trace()
    }

    #[test]
    fn wedge_basis_sizes_and_order() {
        let b3 = wedge_basis(3).unwrap();
        assert_eq!(b3.len(), 3);
        assert_eq!(b3[0], AlgElem::wedge(3, 0, 1).unwrap());
        assert_eq!(b3[1], AlgElem::wedge(3, 0, 2).unwrap());
        assert_eq!(b3[2], AlgElem::wedge(3, 1, 2).unwrap());
        assert_eq!(wedge_basis(4).unwrap().len(), 6);
        assert!(matches!(wedge_basis(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn wedge_basis_is_orthonormal_under_trace_form() {
        let basis = wedge_basis(5).unwrap();
        for (a, x) in basis.iter().enumerate() {
            for (b, y) in basis.iter().enumerate() {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_eq!(trace_form(x.matrix(), y.matrix()), expected);
                assert_eq!(x.dot(y), expected);
            }
        }
    }

    #[test]
    fn pair_index_matches_enumeration() {
        for n in 3..8 {
            for (idx, (i, j)) in wedge_pairs(n).into_iter().enumerate() {
                assert_eq!(pair_index(n, i, j), idx);
            }
        }
    }

    #[test]
    fn inner_product_examples() {
        let e12 = AlgElem::wedge(3, 0, 1).unwrap();
        let e13 = AlgElem::wedge(3, 0, 2).unwrap();
        assert_eq!(inner_product(&e12, &e12).unwrap(), 1.0);
        assert_eq!(inner_product(&e12, &e13).unwrap(), 0.0);
        let u = hat(&Vector3::new(1.0, 2.0, 3.0));
        let v = hat(&Vector3::new(4.0, 5.0, 6.0));
        assert_eq!(trace_form(u.matrix(), v.matrix()), 32.0);
        assert_eq!(inner_product(&u, &v).unwrap(), 32.0);
        let w = AlgElem::zero(4).unwrap();
        assert!(matches!(
            inner_product(&u, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn commutator_examples() {
        let e12 = AlgElem::wedge(3, 0, 1).unwrap();
        let e23 = AlgElem::wedge(3, 1, 2).unwrap();
        let e13 = AlgElem::wedge(3, 0, 2).unwrap();
        assert_eq!(commutator(&e12, &e12).unwrap(), AlgElem::zero(3).unwrap());
        assert_eq!(commutator(&e12, &e23).unwrap(), e13);
        let x = hat(&Vector3::new(1.0, 0.0, 0.0));
        let y = hat(&Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(commutator(&x, &y).unwrap(), hat(&Vector3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn hat_matches_printed_matrices() {
        let x = hat(&Vector3::new(1.0, 0.0, 0.0));
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 0., -1., 0., 1., 0.]);
        assert_eq!(x.matrix(), &expected);
        let z = hat(&Vector3::new(0.0, 0.0, 1.0));
        let expected = DMatrix::from_row_slice(3, 3, &[0., -1., 0., 1., 0., 0., 0., 0., 0.]);
        assert_eq!(z.matrix(), &expected);
        let v = Vector3::new(-2.0, 5.0, 0.5);
        assert_eq!(unhat(&hat(&v)).unwrap(), v);
        assert!(unhat(&AlgElem::zero(4).unwrap()).is_err());
    }

    #[test]
    fn skew_check_rejects_symmetric_input() {
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 0.]);
        assert!(matches!(AlgElem::new(m), Err(Error::NotSkew { .. })));
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 0., -1., 0., 0., 0., 0., 0.]);
        assert!(AlgElem::new(m).is_ok());
    }

    #[test]
    fn wedge_round_trip_is_exact() {
        let coords = [0.3, -1.25, 7.5e-3, 2.0, -0.1, 1e-12];
        let x = AlgElem::from_wedge(4, &coords).unwrap();
        assert_eq!(x.wedge_coords().as_slice(), &coords);
        assert!(close(x.dot(&x), coords.iter().map(|c| c * c).sum(), 1e-15));
    }
}
