use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{algebra_dim, check_dimension, wedge_pairs, AlgElem};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// How an inertia operator was specified.
#[derive(Clone, Debug)]
pub enum InertiaKind {
    /// `𝕀(Eᵢ∧Eⱼ) = aᵢaⱼ Eᵢ∧Eⱼ`.
    WedgeProducts { a: Vec<f64> },
    /// `𝕀(Eᵢ∧Eⱼ) = D aᵢaⱼ / (D - aᵢaⱼ) Eᵢ∧Eⱼ`, with `0 < aᵢaⱼ < D`.
    WedgeProductsChaplygin { a: Vec<f64>, d: f64 },
    /// `base + D·E`.
    Shifted { base: Box<InertiaSpec>, d: f64 },
    /// Arbitrary symmetric positive-definite matrix in wedge coordinates.
    General { matrix: DMatrix<f64> },
}

#[derive(Clone, Debug)]
enum Repr {
    Diagonal(DVector<f64>),
    Dense {
        matrix: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

/// A symmetric positive-definite operator on `so(n)`.
///
/// Wedge-diagonal operators are kept as their eigenvalue list so that apply
/// and solve are `O(N)`; everything else is factored once at construction.
#[derive(Clone, Debug)]
pub struct InertiaSpec {
    n: usize,
    kind: InertiaKind,
    repr: Repr,
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::Parameter(format!("{name}[{i}] = {v} must be positive and finite")));
        }
    }
    Ok(())
}

fn n_from_algebra_dim(big_n: usize) -> Option<usize> {
    (3..=big_n + 2).find(|n| algebra_dim(*n) == big_n)
}

impl InertiaSpec {
    pub fn wedge_products(a: &[f64]) -> Result<Self> {
        let n = a.len();
        check_dimension(n)?;
        check_positive("a", a)?;
        let diag = DVector::from_iterator(
            algebra_dim(n),
            wedge_pairs(n).into_iter().map(|(i, j)| a[i] * a[j]),
        );
        Ok(Self {
            n,
            kind: InertiaKind::WedgeProducts { a: a.to_vec() },
            repr: Repr::Diagonal(diag),
        })
    }

    /// The Chaplygin-type operator. Every product `aᵢaⱼ` (including `i = j`)
    /// must lie strictly between 0 and `d`.
    pub fn wedge_products_chaplygin(a: &[f64], d: f64) -> Result<Self> {
        let n = a.len();
        check_dimension(n)?;
        check_positive("a", a)?;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Parameter(format!("D = {d} must be positive")));
        }
        for i in 0..n {
            for j in i..n {
                let p = a[i] * a[j];
                if p >= d {
                    return Err(Error::Parameter(format!(
                        "a[{i}]*a[{j}] = {p} must be < D = {d}"
                    )));
                }
            }
        }
        let diag = DVector::from_iterator(
            algebra_dim(n),
            wedge_pairs(n).into_iter().map(|(i, j)| {
                let p = a[i] * a[j];
                d * p / (d - p)
            }),
        );
        Ok(Self {
            n,
            kind: InertiaKind::WedgeProductsChaplygin { a: a.to_vec(), d },
            repr: Repr::Diagonal(diag),
        })
    }

    /// `base + d·E`; fails if the result is not positive definite.
    pub fn shifted(base: &InertiaSpec, d: f64) -> Result<Self> {
        if !d.is_finite() {
            return Err(Error::Parameter(format!("D = {d} must be finite")));
        }
        let repr = match &base.repr {
            Repr::Diagonal(diag) => {
                let shifted = diag.add_scalar(d);
                if shifted.iter().any(|v| *v <= 0.0) {
                    return Err(Error::Definiteness(format!("base + {d}·E has a non-positive eigenvalue")));
                }
                Repr::Diagonal(shifted)
            }
            Repr::Dense { matrix, .. } => {
                let big_n = matrix.nrows();
                let shifted = matrix + DMatrix::identity(big_n, big_n) * d;
                let chol = Cholesky::new(shifted.clone())
                    .ok_or_else(|| Error::Definiteness(format!("base + {d}·E is not positive definite")))?;
                Repr::Dense { matrix: shifted, chol }
            }
        };
        Ok(Self {
            n: base.n,
            kind: InertiaKind::Shifted {
                base: Box::new(base.clone()),
                d,
            },
            repr,
        })
    }

    /// A general operator given by its `N × N` matrix in wedge coordinates.
    pub fn general(matrix: DMatrix<f64>) -> Result<Self> {
        let big_n = matrix.nrows();
        if matrix.ncols() != big_n {
            return Err(Error::Dimension("inertia matrix must be square".into()));
        }
        let n = n_from_algebra_dim(big_n)
            .ok_or_else(|| Error::Dimension(format!("{big_n} is not n(n-1)/2 for any n >= 3")))?;
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
            return Err(Error::Parameter(format!("inertia matrix is not symmetric (defect {asym:e})")));
        }
        let is_diagonal = (0..big_n).all(|i| (0..big_n).all(|j| i == j || matrix[(i, j)] == 0.0));
        let repr = if is_diagonal {
            let diag = matrix.diagonal();
            if diag.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Definiteness("diagonal inertia has a non-positive entry".into()));
            }
            Repr::Diagonal(diag)
        } else {
            let chol = Cholesky::new(matrix.clone())
                .ok_or_else(|| Error::Definiteness("Cholesky factorization failed".into()))?;
            Repr::Dense {
                matrix: matrix.clone(),
                chol,
            }
        };
        Ok(Self {
            n,
            kind: InertiaKind::General { matrix },
            repr,
        })
    }

    /// `c·E` on `so(n)`.
    pub fn scalar(n: usize, c: f64) -> Result<Self> {
        check_dimension(n)?;
        let big_n = algebra_dim(n);
        Self::general(DMatrix::identity(big_n, big_n) * c)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::scalar(n, 1.0)
    }

    /// A body-frame inertia `diag(I₁, I₂, I₃)` of a rigid body in ℝ³,
    /// transported to `so(3)` through the hat map.
    pub fn from_body_diagonal(moments: [f64; 3]) -> Result<Self> {
        check_positive("I", &moments)?;
        // hat(X) has wedge coordinates (-X₃, X₂, -X₁)
        let diag = DVector::from_vec(vec![moments[2], moments[1], moments[0]]);
        Self::general(DMatrix::from_diagonal(&diag))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn algebra_dim(&self) -> usize {
        algebra_dim(self.n)
    }

    pub fn kind(&self) -> &InertiaKind {
        &self.kind
    }

    /// The eigenvalue list when the operator is diagonal in the wedge basis.
    pub fn diagonal(&self) -> Option<&DVector<f64>> {
        match &self.repr {
            Repr::Diagonal(d) => Some(d),
            Repr::Dense { .. } => None,
        }
    }

    /// The `a` parameters of a plain wedge-product operator.
    pub fn wedge_a(&self) -> Option<&[f64]> {
        match &self.kind {
            InertiaKind::WedgeProducts { a } => Some(a),
            _ => None,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Diagonal(d) => DMatrix::from_diagonal(d),
            Repr::Dense { matrix, .. } => matrix.clone(),
        }
    }

    pub fn apply_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Diagonal(d) => d.component_mul(x),
            Repr::Dense { matrix, .. } => matrix * x,
        }
    }

    pub fn solve_coords(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Diagonal(d) => y.component_div(d),
            Repr::Dense { chol, .. } => chol.solve(y),
        }
    }

    /// `𝕀x`; panics on dimension mismatch (see [`inertia_apply`]).
    pub fn apply(&self, x: &AlgElem) -> AlgElem {
        assert_eq!(x.dim(), self.n, "inertia dimension mismatch");
        AlgElem::from_wedge_unchecked(self.n, self.apply_coords(&x.wedge_coords()).as_slice())
    }

    /// `𝕀⁻¹y`; panics on dimension mismatch (see [`inertia_solve`]).
    pub fn solve(&self, y: &AlgElem) -> AlgElem {
        assert_eq!(y.dim(), self.n, "inertia dimension mismatch");
        AlgElem::from_wedge_unchecked(self.n, self.solve_coords(&y.wedge_coords()).as_slice())
    }

    pub fn log_det(&self) -> f64 {
        match &self.repr {
            Repr::Diagonal(d) => d.iter().map(|v| v.ln()).sum(),
            Repr::Dense { chol, .. } => 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        }
    }

    pub fn determinant(&self) -> f64 {
        match &self.repr {
            Repr::Diagonal(d) => d.product(),
            Repr::Dense { chol, .. } => chol.determinant(),
        }
    }
}

fn check_spec_dim(spec: &InertiaSpec, x: &AlgElem) -> Result<()> {
    if spec.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: x.dim(),
        });
    }
    Ok(())
}

/// `𝕀x`.
pub fn inertia_apply(spec: &InertiaSpec, x: &AlgElem) -> Result<AlgElem> {
    check_spec_dim(spec, x)?;
    Ok(spec.apply(x))
}

/// `𝕀⁻¹y`.
pub fn inertia_solve(spec: &InertiaSpec, y: &AlgElem) -> Result<AlgElem> {
    check_spec_dim(spec, y)?;
    Ok(spec.solve(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::wedge_basis;

    #[test]
    fn wedge_products_eigenvalues() {
        let a = [1.5, 2.0, 0.5, 3.0];
        let spec = InertiaSpec::wedge_products(&a).unwrap();
        let e12 = AlgElem::wedge(4, 0, 1).unwrap();
        assert_eq!(spec.apply(&e12), e12.scale(a[0] * a[1]));
        let e34 = AlgElem::wedge(4, 2, 3).unwrap();
        assert_eq!(spec.apply(&e34), e34.scale(a[2] * a[3]));
    }

    #[test]
    fn chaplygin_eigenvalues_and_validation() {
        let a = [0.5, 0.7, 0.9];
        let d = 2.0;
        let spec = InertiaSpec::wedge_products_chaplygin(&a, d).unwrap();
        let e12 = AlgElem::wedge(3, 0, 1).unwrap();
        let p = a[0] * a[1];
        assert_eq!(spec.apply(&e12), e12.scale(d * p / (d - p)));
        assert!(InertiaSpec::wedge_products_chaplygin(&[1.0, 2.0, 3.0], 2.0).is_err());
    }

    #[test]
    fn identity_spec_is_identity() {
        let spec = InertiaSpec::wedge_products(&[1.0; 5]).unwrap();
        for e in wedge_basis(5).unwrap() {
            assert_eq!(spec.apply(&e), e);
            assert_eq!(spec.solve(&e), e);
        }
    }

    #[test]
    fn apply_solve_round_trip_dense() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.0],
        );
        let spec = InertiaSpec::general(m.clone()).unwrap();
        let x = AlgElem::from_wedge(3, &[0.4, -1.0, 2.5]).unwrap();
        let back = spec.apply(&spec.solve(&x));
        assert!((&back - &x).norm() <= 1e-12 * x.norm());
        assert!((spec.determinant() - m.determinant()).abs() < 1e-12);
        assert!((spec.log_det() - m.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn non_positive_definite_rejected() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(InertiaSpec::general(m), Err(Error::Definiteness(_))));
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(InertiaSpec::general(m), Err(Error::Definiteness(_))));
        let base = InertiaSpec::wedge_products(&[1.0, 1.0, 1.0]).unwrap();
        assert!(InertiaSpec::shifted(&base, -2.0).is_err());
    }

    #[test]
    fn shifted_adds_multiple_of_identity() {
        let base = InertiaSpec::wedge_products(&[1.0, 2.0, 3.0]).unwrap();
        let s = InertiaSpec::shifted(&base, 0.5).unwrap();
        let x = AlgElem::from_wedge(3, &[1.0, -2.0, 0.25]).unwrap();
        let expected = &base.apply(&x) + &x.scale(0.5);
        assert!((&s.apply(&x) - &expected).norm() < 1e-15);
    }

    #[test]
    fn body_diagonal_matches_hat() {
        use crate::liealg::{hat, unhat};
        use nalgebra::Vector3;
        let spec = InertiaSpec::from_body_diagonal([1.0, 2.0, 3.0]).unwrap();
        let v = Vector3::new(0.3, -0.7, 1.1);
        let iv = unhat(&spec.apply(&hat(&v))).unwrap();
        assert!((iv - Vector3::new(0.3, -1.4, 3.3)).amax() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = InertiaSpec::identity(4).unwrap();
        let x = AlgElem::zero(3).unwrap();
        assert!(matches!(inertia_apply(&spec, &x), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(inertia_solve(&spec, &x), Err(Error::DimensionMismatch { .. })));
    }
}
