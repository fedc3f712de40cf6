use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Column-orthonormality tolerance for [`StiefelPoint::new`].
pub const STIEFEL_TOL: f64 = 1e-10;

/// A point of the Stiefel variety `V(n, r)`: an `n × r` matrix with
/// orthonormal columns `𝐞₁, …, 𝐞ᵣ`.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    u: DMatrix<f64>,
}

impl StiefelPoint {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        let (n, r) = u.shape();
        if r == 0 || r > n {
            return Err(Error::Dimension(format!("Stiefel point needs 1 <= r <= n, got {n}x{r}")));
        }
        let defect = orthonormality_defect(&u);
        if defect > STIEFEL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(Self { u })
    }

    /// Polar projection `U (UᵀU)^{-1/2}` of an arbitrary full-rank `n × r` matrix.
    pub fn project(m: &DMatrix<f64>) -> Result<Self> {
        let (n, r) = m.shape();
        if r == 0 || r > n {
            return Err(Error::Dimension(format!("Stiefel point needs 1 <= r <= n, got {n}x{r}")));
        }
        let gram = m.transpose() * m;
        let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        if !(lmin > 1e-24 * lmax.max(1e-300)) {
            return Err(Error::Singular("rank-deficient matrix cannot be projected to V(n,r)".into()));
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let u = m * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose());
        Ok(Self { u })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.u
    }

    /// Largest entry of `|UᵀU - Id|`.
    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.u)
    }
}

pub(crate) fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let r = u.ncols();
    (u.transpose() * u - DMatrix::identity(r, r)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_orthonormal() {
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        assert!(matches!(StiefelPoint::new(u), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn polar_projection_of_perturbed_point() {
        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        let p = StiefelPoint::new(u.clone()).unwrap();
        assert!((StiefelPoint::project(&u).unwrap().matrix() - p.matrix()).amax() < 1e-14);
        u[(2, 0)] += 1e-6;
        u[(3, 1)] -= 1e-6;
        u[(0, 1)] += 1e-6;
        let q = StiefelPoint::project(&u).unwrap();
        assert!(q.defect() < 1e-14);
    }
}
