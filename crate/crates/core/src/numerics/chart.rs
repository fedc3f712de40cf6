use nalgebra::{DMatrix, DVector};

use crate::liealg::{algebra_dim, wedge_pairs, StiefelPoint};
use crate::{Error, Result};

/// Layout of one block of a flat state vector.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    /// Wedge coordinates of one element of `so(n)`.
    Alg { n: usize },
    /// `count` consecutive elements of `so(n)`; `orthonormal` frames are
    /// re-orthonormalized by [`renormalize`].
    AlgList { n: usize, count: usize, orthonormal: bool },
    /// Entries of an `n × r` Stiefel matrix, column-major.
    Stiefel { n: usize, r: usize },
    /// Upper triangle `(i ≤ j)`, row by row, of a symmetric `size × size` matrix.
    SymUpper { size: usize },
    /// Plain coordinates.
    Vector { len: usize },
    /// A vector constrained to the unit sphere.
    UnitVector { len: usize },
}

impl BlockKind {
    pub fn len(&self) -> usize {
        match *self {
            BlockKind::Alg { n } => algebra_dim(n),
            BlockKind::AlgList { n, count, .. } => count * algebra_dim(n),
            BlockKind::Stiefel { n, r } => n * r,
            BlockKind::SymUpper { size } => size * (size + 1) / 2,
            BlockKind::Vector { len } | BlockKind::UnitVector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartBlock {
    pub label: String,
    pub kind: BlockKind,
    pub offset: usize,
}

impl ChartBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.kind.len()
    }
}

/// Chart descriptor: the ordered blocks making up a flat state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Chart {
    blocks: Vec<ChartBlock>,
    dim: usize,
}

impl Chart {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: &str, kind: BlockKind) -> Self {
        let len = kind.len();
        self.blocks.push(ChartBlock {
            label: label.to_string(),
            kind,
            offset: self.dim,
        });
        self.dim += len;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[ChartBlock] {
        &self.blocks
    }

    pub fn block(&self, label: &str) -> Option<&ChartBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// One name per coordinate, in chart order (used as CSV headers).
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            let l = &b.label;
            match b.kind {
                BlockKind::Alg { n } => {
                    names.extend(wedge_pairs(n).iter().map(|(i, j)| format!("{l}_{}_{}", i + 1, j + 1)));
                }
                BlockKind::AlgList { n, count, .. } => {
                    for c in 0..count {
                        names.extend(
                            wedge_pairs(n)
                                .iter()
                                .map(|(i, j)| format!("{l}{}_{}_{}", c + 1, i + 1, j + 1)),
                        );
                    }
                }
                BlockKind::Stiefel { n, r } => {
                    for c in 0..r {
                        names.extend((0..n).map(|i| format!("{l}_{}_{}", i + 1, c + 1)));
                    }
                }
                BlockKind::SymUpper { size } => {
                    for i in 0..size {
                        names.extend((i..size).map(|j| format!("{l}_{}_{}", i + 1, j + 1)));
                    }
                }
                BlockKind::Vector { len } | BlockKind::UnitVector { len } => {
                    names.extend((0..len).map(|i| format!("{l}{}", i + 1)));
                }
            }
        }
        names
    }
}

/// A flat coordinate vector with its chart.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatState {
    pub coords: DVector<f64>,
    pub chart: Chart,
}

impl FlatState {
    pub fn new(coords: DVector<f64>, chart: Chart) -> Result<Self> {
        if coords.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                found: coords.len(),
            });
        }
        Ok(Self { coords, chart })
    }

    pub fn block(&self, label: &str) -> Option<&[f64]> {
        self.chart
            .block(label)
            .map(|b| &self.coords.as_slice()[b.range()])
    }
}

/// Writes a symmetric matrix's upper triangle into `out`.
pub(crate) fn write_sym_upper(m: &DMatrix<f64>, out: &mut [f64]) {
    let size = m.nrows();
    let mut idx = 0;
    for i in 0..size {
        for j in i..size {
            out[idx] = m[(i, j)];
            idx += 1;
        }
    }
}

pub(crate) fn read_sym_upper(size: usize, data: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(size, size);
    let mut idx = 0;
    for i in 0..size {
        for j in i..size {
            m[(i, j)] = data[idx];
            m[(j, i)] = data[idx];
            idx += 1;
        }
    }
    m
}

/// Projects every constrained block back onto its manifold: Stiefel blocks
/// and unit vectors by polar decomposition, orthonormal frame lists by
/// symmetric (Löwdin) orthonormalization. Free blocks are left untouched.
///
/// Never used during measure verification.
pub fn renormalize(x: &FlatState) -> Result<FlatState> {
    let mut out = x.coords.clone();
    for b in x.chart.blocks() {
        let range = b.range();
        match b.kind {
            BlockKind::Stiefel { n, r } => {
                let m = DMatrix::from_column_slice(n, r, &x.coords.as_slice()[range.clone()]);
                let p = StiefelPoint::project(&m)?;
                out.as_mut_slice()[range].copy_from_slice(p.matrix().as_slice());
            }
            BlockKind::UnitVector { .. } => {
                let v = DVector::from_column_slice(&x.coords.as_slice()[range.clone()]);
                let norm = v.norm();
                if !(norm > 0.0) {
                    return Err(Error::Singular("cannot normalize a zero vector".into()));
                }
                out.as_mut_slice()[range].copy_from_slice((v / norm).as_slice());
            }
            BlockKind::AlgList {
                n,
                count,
                orthonormal: true,
            } if count > 0 => {
                let m = DMatrix::from_column_slice(algebra_dim(n), count, &x.coords.as_slice()[range.clone()]);
                let p = StiefelPoint::project(&m)?;
                out.as_mut_slice()[range].copy_from_slice(p.matrix().as_slice());
            }
            _ => {}
        }
    }
    FlatState::new(out, x.chart.clone())
}

/// The skew part `(x - xᵀ)/2` of a square matrix.
pub fn skew_symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_names_for_ball_chart() {
        let chart = Chart::new()
            .with("k", BlockKind::Vector { len: 3 })
            .with("g", BlockKind::UnitVector { len: 3 });
        assert_eq!(chart.column_names(), ["k1", "k2", "k3", "g1", "g2", "g3"]);
        assert_eq!(chart.dim(), 6);
    }

    #[test]
    fn sym_upper_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 4., 5., 3., 5., 6.]);
        let mut buf = vec![0.0; 6];
        write_sym_upper(&m, &mut buf);
        assert_eq!(buf, [1., 2., 3., 4., 5., 6.]);
        assert_eq!(read_sym_upper(3, &buf), m);
    }

    #[test]
    fn renormalize_projects_stiefel_block() {
        let chart = Chart::new()
            .with("m", BlockKind::Alg { n: 3 })
            .with("U", BlockKind::Stiefel { n: 3, r: 2 });
        let mut coords = DVector::zeros(9);
        coords[0] = 0.5;
        coords[3] = 1.0;
        coords[7] = 1.0;
        let x = FlatState::new(coords.clone(), chart.clone()).unwrap();
        let same = renormalize(&x).unwrap();
        assert!((&same.coords - &coords).amax() < 1e-14);

        coords[4] = 1e-6;
        coords[8] = -2e-6;
        let y = renormalize(&FlatState::new(coords, chart).unwrap()).unwrap();
        let u = DMatrix::from_column_slice(3, 2, &y.coords.as_slice()[3..9]);
        assert!((u.transpose() * &u - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert_eq!(y.coords[0], 0.5);
        let again = renormalize(&y).unwrap();
        assert!((&again.coords - &y.coords).amax() < 1e-14);
    }

    #[test]
    fn skew_symmetrize_halves_defect() {
        let mut m = DMatrix::from_row_slice(3, 3, &[0., 1., -2., -1., 0., 3., 2., -3., 0.]);
        m[(0, 1)] += 1e-3;
        let before = (&m + m.transpose()).amax();
        let s = skew_symmetrize(&m);
        assert_eq!((&s + s.transpose()).amax(), 0.0);
        assert_eq!((&s - &m).amax(), before / 2.0);
    }
}
