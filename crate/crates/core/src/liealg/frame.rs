use nalgebra::{DMatrix, DVector};

use super::{algebra_dim, check_dimension, wedge_pairs, AlgElem, InertiaSpec};
use crate::{Error, Result};

/// Tolerance on `⟨eᵢ, eⱼ⟩ = δᵢⱼ` for frames flagged orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative Gram-determinant threshold below which a frame is singular.
pub const DEFAULT_GRAM_TOL: f64 = 1e-12;

/// Which Gram matrix [`frame_gram`] builds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramMode {
    /// `⟨eᵢ, 𝕀⁻¹eⱼ⟩`
    InverseInertia,
    /// `⟨𝕀eᵢ, eⱼ⟩`
    Inertia,
}

/// An ordered list of linearly independent elements of `so(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    n: usize,
    elems: Vec<AlgElem>,
    gram_tolerance: f64,
    orthonormal: bool,
}

fn plain_gram(n: usize, elems: &[AlgElem]) -> DMatrix<f64> {
    let coords = coords_of(n, elems);
    coords.transpose() * coords
}

fn coords_of(n: usize, elems: &[AlgElem]) -> DMatrix<f64> {
    let big_n = algebra_dim(n);
    let mut out = DMatrix::zeros(big_n, elems.len());
    for (c, e) in elems.iter().enumerate() {
        e.write_wedge(out.column_mut(c).as_mut_slice());
    }
    out
}

/// `det G ≤ tol · ∏ Gᵢᵢ` (Hadamard-relative) counts as singular.
fn relatively_singular(gram: &DMatrix<f64>, tol: f64) -> Option<f64> {
    let scale: f64 = gram.diagonal().iter().product();
    let det = gram.determinant();
    if !(scale > 0.0) || !(det > tol * scale) {
        Some(det)
    } else {
        None
    }
}

impl Frame {
    /// A linearly independent frame; all elements must share `n`.
    pub fn new(elems: Vec<AlgElem>) -> Result<Self> {
        Self::with_tolerance(elems, DEFAULT_GRAM_TOL)
    }

    pub fn with_tolerance(elems: Vec<AlgElem>, gram_tolerance: f64) -> Result<Self> {
        let n = Self::common_dim(&elems)?;
        let gram = plain_gram(n, &elems);
        if let Some(det) = relatively_singular(&gram, gram_tolerance) {
            return Err(Error::Singular(format!(
                "frame elements are linearly dependent (Gram determinant {det:e})"
            )));
        }
        Ok(Self {
            n,
            elems,
            gram_tolerance,
            orthonormal: false,
        })
    }

    /// A frame with `⟨eᵢ, eⱼ⟩ = δᵢⱼ` within `1e-10`.
    pub fn orthonormal(elems: Vec<AlgElem>) -> Result<Self> {
        let n = Self::common_dim(&elems)?;
        let defect = orthonormality_defect(&plain_gram(n, &elems));
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(Self {
            n,
            elems,
            gram_tolerance: DEFAULT_GRAM_TOL,
            orthonormal: true,
        })
    }

    /// The empty frame in `so(n)`.
    pub fn empty(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Ok(Self {
            n,
            elems: Vec::new(),
            gram_tolerance: DEFAULT_GRAM_TOL,
            orthonormal: true,
        })
    }

    pub(crate) fn from_unchecked(n: usize, elems: Vec<AlgElem>, orthonormal: bool) -> Self {
        Self {
            n,
            elems,
            gram_tolerance: DEFAULT_GRAM_TOL,
            orthonormal,
        }
    }

    /// Orthonormal frame from the columns of an `N × k` wedge-coordinate matrix.
    pub fn from_orthonormal_coords(n: usize, coords: &DMatrix<f64>) -> Result<Self> {
        check_dimension(n)?;
        if coords.nrows() != algebra_dim(n) {
            return Err(Error::DimensionMismatch {
                expected: algebra_dim(n),
                found: coords.nrows(),
            });
        }
        let elems = coords
            .column_iter()
            .map(|c| AlgElem::from_wedge_unchecked(n, c.as_slice()))
            .collect();
        if coords.ncols() == 0 {
            return Self::empty(n);
        }
        Self::orthonormal(elems)
    }

    fn common_dim(elems: &[AlgElem]) -> Result<usize> {
        let first = elems
            .first()
            .ok_or_else(|| Error::Dimension("frame must be nonempty".into()))?;
        let n = first.dim();
        if let Some(bad) = elems.iter().find(|e| e.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.dim(),
            });
        }
        Ok(n)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elems(&self) -> &[AlgElem] {
        &self.elems
    }

    pub fn into_elems(self) -> Vec<AlgElem> {
        self.elems
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn gram_tolerance(&self) -> f64 {
        self.gram_tolerance
    }

    /// Wedge coordinates of the elements as the columns of an `N × k` matrix.
    pub fn coords(&self) -> DMatrix<f64> {
        coords_of(self.n, &self.elems)
    }

    /// Plain Gram matrix `⟨eᵢ, eⱼ⟩`.
    pub fn gram(&self) -> DMatrix<f64> {
        plain_gram(self.n, &self.elems)
    }
}

fn orthonormality_defect(gram: &DMatrix<f64>) -> f64 {
    let k = gram.nrows();
    (gram - DMatrix::identity(k, k)).amax()
}

/// The `k × k` Gram matrix `⟨eᵢ, 𝕀⁻¹eⱼ⟩` or `⟨𝕀eᵢ, eⱼ⟩`.
pub fn frame_gram(frame: &Frame, spec: &InertiaSpec, mode: GramMode) -> Result<DMatrix<f64>> {
    if frame.is_empty() {
        return Err(Error::Dimension("frame must be nonempty".into()));
    }
    if frame.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: frame.dim(),
        });
    }
    let gram = gram_unchecked(&frame.coords(), spec, mode);
    if let Some(det) = relatively_singular(&gram, frame.gram_tolerance()) {
        return Err(Error::Singular(format!("Gram matrix determinant {det:e}")));
    }
    Ok(gram)
}

pub(crate) fn gram_unchecked(coords: &DMatrix<f64>, spec: &InertiaSpec, mode: GramMode) -> DMatrix<f64> {
    let mut mapped = coords.clone();
    for mut col in mapped.column_iter_mut() {
        let v = DVector::from_column_slice(col.as_slice());
        let w = match mode {
            GramMode::InverseInertia => spec.solve_coords(&v),
            GramMode::Inertia => spec.apply_coords(&v),
        };
        col.copy_from(&w);
    }
    let g = coords.transpose() * mapped;
    (&g + g.transpose()) * 0.5
}

/// Determinant of the restricted Gram matrix over an orthonormal frame,
/// i.e. `det(𝕀|_span)` or `det(𝕀⁻¹|_span)`.
pub fn restricted_det(spec: &InertiaSpec, frame: &Frame, mode: GramMode) -> Result<f64> {
    if !frame.is_orthonormal() {
        return Err(Error::NotOrthonormal {
            defect: orthonormality_defect(&frame.gram()),
        });
    }
    Ok(frame_gram(frame, spec, mode)?.determinant())
}

/// The complementary orthogonal projectors `pr_H`, `pr_D = E - pr_H`.
#[derive(Clone, Debug)]
pub struct SubspaceProjectors {
    n: usize,
    basis: DMatrix<f64>,
}

impl SubspaceProjectors {
    pub fn pr_h(&self, x: &AlgElem) -> AlgElem {
        let c = x.wedge_coords();
        let proj = &self.basis * (self.basis.transpose() * c);
        AlgElem::from_wedge_unchecked(self.n, proj.as_slice())
    }

    pub fn pr_d(&self, x: &AlgElem) -> AlgElem {
        x - &self.pr_h(x)
    }

    /// `pr_H` as an `N × N` matrix in wedge coordinates.
    pub fn pr_h_matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn pr_d_matrix(&self) -> DMatrix<f64> {
        let big_n = self.basis.nrows();
        DMatrix::identity(big_n, big_n) - self.pr_h_matrix()
    }

    pub fn rank_h(&self) -> usize {
        self.basis.ncols()
    }
}

/// Projectors onto `H = span(frame)` and its orthogonal complement `D`.
pub fn subspace_projectors(frame_h: &Frame) -> Result<SubspaceProjectors> {
    let basis = frame_h.coords();
    let defect = orthonormality_defect(&(basis.transpose() * &basis));
    if defect > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { defect });
    }
    Ok(SubspaceProjectors {
        n: frame_h.dim(),
        basis,
    })
}

/// Matrix of `ad_x = [x, ·]` in wedge coordinates.
pub fn ad_matrix(x: &AlgElem) -> DMatrix<f64> {
    let n = x.dim();
    let big_n = algebra_dim(n);
    let mut out = DMatrix::zeros(big_n, big_n);
    for (col, (i, j)) in wedge_pairs(n).into_iter().enumerate() {
        let e = AlgElem::wedge(n, i, j).expect("valid pair");
        x.bracket(&e).write_wedge(out.column_mut(col).as_mut_slice());
    }
    out
}

/// Orthonormal basis of the column span of `generators` by column-pivoted
/// QR, keeping pivots with `|R_ii| > rel_tol · |R_00|`.
pub fn orthonormal_span(generators: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = generators.nrows();
    if generators.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let qr = generators.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| lead > 0.0 && r[(i, i)].abs() > rel_tol * lead)
        .count();
    qr.q().columns(0, rank).into_owned()
}

/// Orthonormal basis of the isotropy algebra `{x : [x, γ] = 0}`.
pub fn isotropy_frame(gamma: &AlgElem) -> Result<Frame> {
    let big_n = algebra_dim(gamma.dim());
    // the kernel of ad_γ is the orthogonal complement of its row space
    let rows = orthonormal_span(&ad_matrix(gamma).transpose(), 1e-8);
    let kernel = orthonormal_span(&(DMatrix::identity(big_n, big_n) - &rows * rows.transpose()), 1e-8);
    if kernel.ncols() == 0 {
        return Frame::empty(gamma.dim());
    }
    Frame::from_orthonormal_coords(gamma.dim(), &kernel)
}

/// Orthonormal basis of the orthogonal complement of `span(frame)`.
pub fn orthonormal_complement(frame: &Frame) -> Result<Frame> {
    let n = frame.dim();
    let big_n = algebra_dim(n);
    let basis = frame.coords();
    let proj_d = DMatrix::identity(big_n, big_n) - &basis * basis.transpose();
    let span = orthonormal_span(&proj_d, 1e-8);
    if span.ncols() + frame.len() != big_n {
        return Err(Error::Singular(format!(
            "complement has dimension {} but expected {}",
            span.ncols(),
            big_n - frame.len()
        )));
    }
    Frame::from_orthonormal_coords(n, &span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::wedge_basis;

    #[test]
    fn gram_examples() {
        let a = [1.5, 2.0, 0.5, 3.0];
        let spec = InertiaSpec::wedge_products(&a).unwrap();
        let e12 = AlgElem::wedge(4, 0, 1).unwrap();
        let e34 = AlgElem::wedge(4, 2, 3).unwrap();
        let g1 = frame_gram(&Frame::new(vec![e12.clone()]).unwrap(), &spec, GramMode::InverseInertia).unwrap();
        assert!((g1[(0, 0)] - 1.0 / (a[0] * a[1])).abs() < 1e-15);
        let g2 = frame_gram(&Frame::new(vec![e12, e34]).unwrap(), &spec, GramMode::InverseInertia).unwrap();
        assert!((g2[(0, 0)] - 1.0 / (a[0] * a[1])).abs() < 1e-15);
        assert!((g2[(1, 1)] - 1.0 / (a[2] * a[3])).abs() < 1e-15);
        assert_eq!(g2[(0, 1)], 0.0);

        let id = InertiaSpec::identity(4).unwrap();
        let frame = Frame::orthonormal(wedge_basis(4).unwrap()[..3].to_vec()).unwrap();
        assert_eq!(frame_gram(&frame, &id, GramMode::Inertia).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn dependent_frames_are_singular() {
        let e12 = AlgElem::wedge(3, 0, 1).unwrap();
        assert!(matches!(
            Frame::new(vec![e12.clone(), e12.scale(2.0)]),
            Err(Error::Singular(_))
        ));
        let e13 = AlgElem::wedge(3, 0, 2).unwrap();
        assert!(matches!(
            Frame::orthonormal(vec![e12.clone(), &e12 + &e13]),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn projectors_rank_one_and_complementary() {
        let e12 = AlgElem::wedge(3, 0, 1).unwrap();
        let proj = subspace_projectors(&Frame::orthonormal(vec![e12.clone()]).unwrap()).unwrap();
        let x = AlgElem::from_wedge(3, &[0.7, -1.2, 3.0]).unwrap();
        assert_eq!(proj.pr_h(&x), e12.scale(x.dot(&e12)));
        let sum = &proj.pr_h(&x) + &proj.pr_d(&x);
        assert_eq!(sum, x);
        let not_on = Frame::new(vec![e12.scale(2.0)]).unwrap();
        assert!(subspace_projectors(&not_on).is_err());
    }

    #[test]
    fn isotropy_of_e12_in_so4() {
        let gamma = AlgElem::wedge(4, 0, 1).unwrap();
        let iso = isotropy_frame(&gamma).unwrap();
        assert_eq!(iso.len(), 2);
        // brute force: wedge basis elements commuting with γ
        let commuting: Vec<_> = wedge_basis(4)
            .unwrap()
            .into_iter()
            .filter(|e| e.bracket(&gamma).norm() == 0.0)
            .collect();
        assert_eq!(commuting.len(), 2);
        let proj = subspace_projectors(&iso).unwrap();
        for e in &commuting {
            assert!((&proj.pr_h(e) - e).norm() < 1e-12);
        }
    }

    #[test]
    fn restricted_det_of_eigenvectors() {
        let a = [1.5, 2.0, 0.5, 3.0];
        let spec = InertiaSpec::wedge_products(&a).unwrap();
        let e13 = AlgElem::wedge(4, 0, 2).unwrap();
        let e24 = AlgElem::wedge(4, 1, 3).unwrap();
        let frame = Frame::orthonormal(vec![e13, e24]).unwrap();
        let det = restricted_det(&spec, &frame, GramMode::Inertia).unwrap();
        assert!((det - a[0] * a[2] * a[1] * a[3]).abs() < 1e-14);
        let id = InertiaSpec::identity(4).unwrap();
        assert_eq!(restricted_det(&id, &frame, GramMode::InverseInertia).unwrap(), 1.0);
    }

    #[test]
    fn complement_spans_the_rest() {
        let e12 = AlgElem::wedge(4, 0, 1).unwrap();
        let h = Frame::orthonormal(vec![e12.clone()]).unwrap();
        let d = orthonormal_complement(&h).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.is_orthonormal());
        for e in d.elems() {
            assert!(e.dot(&e12).abs() < 1e-14);
        }
    }
}
