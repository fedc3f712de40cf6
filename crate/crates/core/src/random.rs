//! Seeded random initial data.
//!
//! Algebra elements get standard-normal wedge coordinates; Stiefel points and
//! orthonormal frames come from orthonormalizing standard-normal matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::liealg::{algebra_dim, AlgElem, Frame, InertiaSpec, StiefelPoint};
use crate::Result;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector(rng: &mut SeededRng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn alg_elem(rng: &mut SeededRng, n: usize) -> Result<AlgElem> {
    AlgElem::from_wedge(n, normal_vector(rng, algebra_dim(n)).as_slice())
}

/// Q factor of a standard-normal `rows × cols` matrix, with the sign fixed so
/// that `diag(R) > 0`.
pub fn orthonormal_columns(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    let qr = normal_matrix(rng, rows, cols).qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

pub fn stiefel(rng: &mut SeededRng, n: usize, r: usize) -> Result<StiefelPoint> {
    StiefelPoint::project(&orthonormal_columns(rng, n, r))
}

pub fn orthonormal_frame(rng: &mut SeededRng, n: usize, k: usize) -> Result<Frame> {
    Frame::from_orthonormal_coords(n, &orthonormal_columns(rng, algebra_dim(n), k))
}

/// `k` independent standard-normal elements (not orthonormalized).
pub fn generic_frame(rng: &mut SeededRng, n: usize, k: usize) -> Result<Frame> {
    let elems = (0..k).map(|_| alg_elem(rng, n)).collect::<Result<Vec<_>>>()?;
    Frame::new(elems)
}

pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// `a` parameters uniform in `[lo, hi)`.
pub fn wedge_parameters(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, lo, hi)).collect()
}

/// A generic dense inertia operator: random orthogonal eigenvectors in wedge
/// coordinates with eigenvalues uniform in `[0.5, 3)`.
pub fn general_inertia(rng: &mut SeededRng, n: usize) -> Result<InertiaSpec> {
    let big_n = algebra_dim(n);
    let q = orthonormal_columns(rng, big_n, big_n);
    let eig = DVector::from_iterator(big_n, (0..big_n).map(|_| uniform(rng, 0.5, 3.0)));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    InertiaSpec::general((&m + m.transpose()) * 0.5)
}

/// Chaplygin-type parameters `(a, D)` with `max aᵢaⱼ < D`.
pub fn chaplygin_parameters(rng: &mut SeededRng, n: usize) -> (Vec<f64>, f64) {
    let a = wedge_parameters(rng, n, 0.5, 1.5);
    let max = a.iter().cloned().fold(0.0_f64, f64::max);
    let d = max * max * uniform(rng, 1.3, 2.5);
    (a, d)
}

/// Symmetric matrix with standard-normal upper triangle scaled by `scale`.
pub fn symmetric(rng: &mut SeededRng, size: usize, scale: f64) -> DMatrix<f64> {
    let g = normal_matrix(rng, size, size);
    (&g + g.transpose()) * (0.5 * scale)
}

/// Symmetric positive-semidefinite matrix `G Gᵀ · scale / size`.
pub fn symmetric_psd(rng: &mut SeededRng, size: usize, scale: f64) -> DMatrix<f64> {
    let g = normal_matrix(rng, size, size);
    let m = &g * g.transpose() * (scale / size as f64);
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = alg_elem(&mut rng(7), 5).unwrap();
        let b = alg_elem(&mut rng(7), 5).unwrap();
        assert_eq!(a, b);
        let u = stiefel(&mut rng(3), 5, 2).unwrap();
        assert!(u.defect() < 1e-14);
    }

    #[test]
    fn chaplygin_parameters_are_admissible() {
        for seed in 0..20 {
            let (a, d) = chaplygin_parameters(&mut rng(seed), 5);
            assert!(InertiaSpec::wedge_products_chaplygin(&a, d).is_ok());
        }
    }
}
