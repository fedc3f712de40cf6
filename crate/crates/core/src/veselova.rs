//! The ε-modified Veselova problem on `so(n) × V(n, r)`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::elr::Epsilon;
use crate::liealg::{algebra_dim, orthonormal_span, wedge_pairs, AlgElem, Frame, InertiaSpec, StiefelPoint};
use crate::numerics::{BlockKind, Chart, Flow};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VeselovaState {
    pub m_bold: AlgElem,
    pub u: StiefelPoint,
}

impl VeselovaState {
    pub fn new(m_bold: AlgElem, u: StiefelPoint) -> Result<Self> {
        if u.n() != m_bold.dim() {
            return Err(Error::DimensionMismatch {
                expected: m_bold.dim(),
                found: u.n(),
            });
        }
        if u.r() >= u.n() {
            return Err(Error::Dimension(format!("Veselova rank must satisfy r < n, got r = {}", u.r())));
        }
        Ok(Self { m_bold, u })
    }

    pub fn dim(&self) -> usize {
        self.m_bold.dim()
    }

    pub fn rank(&self) -> usize {
        self.u.r()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let big_n = algebra_dim(self.dim());
        let mut x = DVector::zeros(big_n + self.dim() * self.rank());
        self.m_bold.write_wedge(&mut x.as_mut_slice()[..big_n]);
        x.as_mut_slice()[big_n..].copy_from_slice(self.u.matrix().as_slice());
        x
    }

    pub fn from_flat(n: usize, r: usize, x: &DVector<f64>) -> Result<Self> {
        let big_n = algebra_dim(n);
        if x.len() != big_n + n * r {
            return Err(Error::DimensionMismatch {
                expected: big_n + n * r,
                found: x.len(),
            });
        }
        let m = AlgElem::from_wedge(n, &x.as_slice()[..big_n])?;
        let u = StiefelPoint::new(DMatrix::from_column_slice(n, r, &x.as_slice()[big_n..]))?;
        Self::new(m, u)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VeselovaTangent {
    pub d_m_bold: AlgElem,
    pub d_u: DMatrix<f64>,
    pub omega: AlgElem,
}

/// `Γ = UUᵀ` together with `pr_Dr` as an `N × N` matrix in wedge coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaProjector {
    pub gamma: DMatrix<f64>,
    pub pr_dr: DMatrix<f64>,
}

impl GammaProjector {
    /// `pr_Dr η = Γη + ηΓ - ΓηΓ`.
    pub fn apply(&self, eta: &AlgElem) -> AlgElem {
        let w = &self.pr_dr * eta.wedge_coords();
        AlgElem::from_wedge_unchecked(eta.dim(), w.as_slice())
    }
}

pub fn veselova_chart(n: usize, r: usize) -> Chart {
    Chart::new().with("m", BlockKind::Alg { n }).with("U", BlockKind::Stiefel { n, r })
}

/// `pr_Dr η = η - PηP` with `P = 1 - UUᵀ`, in wedge coordinates.
pub(crate) fn pr_dr_matrix(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let p = DMatrix::identity(n, n) - u * u.transpose();
    let pairs = wedge_pairs(n);
    let big_n = pairs.len();
    // (PηP)_{ij} for η = E_k∧E_l is P_ik P_lj - P_il P_kj
    let mut out = DMatrix::identity(big_n, big_n);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for (col, &(k, l)) in pairs.iter().enumerate() {
            out[(row, col)] -= p[(i, k)] * p[(l, j)] - p[(i, l)] * p[(k, j)];
        }
    }
    out
}

pub fn gamma_projector(u: &StiefelPoint) -> GammaProjector {
    let m = u.matrix();
    GammaProjector {
        gamma: m * m.transpose(),
        pr_dr: pr_dr_matrix(m),
    }
}

fn check_spec(spec: &InertiaSpec, n: usize) -> Result<()> {
    if spec.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: spec.dim(),
        });
    }
    Ok(())
}

fn j_matrix(pr_dr: &DMatrix<f64>, spec: &InertiaSpec) -> DMatrix<f64> {
    let big_n = pr_dr.nrows();
    let id = DMatrix::identity(big_n, big_n);
    &id + pr_dr * (spec.matrix() - &id)
}

fn omega_raw(m: &DVector<f64>, u: &DMatrix<f64>, spec: &InertiaSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let pr = pr_dr_matrix(u);
    let w = j_matrix(&pr, spec)
        .lu()
        .solve(m)
        .ok_or_else(|| Error::Definiteness("momentum operator 𝐉 is singular".into()))?;
    Ok((w, pr))
}

/// Solves `𝐦 = ω + pr_Dr(𝕀ω - ω)` for ω.
pub fn omega_from_m(state: &VeselovaState, spec: &InertiaSpec) -> Result<AlgElem> {
    check_spec(spec, state.dim())?;
    let (w, _) = omega_raw(&state.m_bold.wedge_coords(), state.u.matrix(), spec)?;
    AlgElem::from_wedge(state.dim(), w.as_slice())
}

/// `𝐦 = ω + pr_Dr(𝕀ω - ω)`.
pub fn m_from_omega(omega: &AlgElem, u: &StiefelPoint, spec: &InertiaSpec) -> Result<AlgElem> {
    check_spec(spec, omega.dim())?;
    let pr = pr_dr_matrix(u.matrix());
    let m = j_matrix(&pr, spec) * omega.wedge_coords();
    AlgElem::from_wedge(omega.dim(), m.as_slice())
}

fn vf_raw(m: &DVector<f64>, u: &DMatrix<f64>, spec: &InertiaSpec, eps: Epsilon) -> Result<VeselovaTangent> {
    let n = u.nrows();
    let (w, pr) = omega_raw(m, u, spec)?;
    let omega = AlgElem::from_wedge(n, w.as_slice())?;
    let m_elem = AlgElem::from_wedge(n, m.as_slice())?;
    let torque = spec.apply(&omega).bracket(&omega).wedge_coords();
    let e = eps.value();
    let d_m = m_elem.bracket(&omega) * e + AlgElem::from_wedge(n, (pr * torque).as_slice())? * (1.0 - e);
    let d_u = -(omega.matrix() * u) * e;
    Ok(VeselovaTangent {
        d_m_bold: d_m,
        d_u,
        omega,
    })
}

/// `d𝐦 = ε[𝐦, ω] + (1 - ε) pr_Dr[𝕀ω, ω]`, `dU = -εωU`.
pub fn vf_veselova(state: &VeselovaState, spec: &InertiaSpec, eps: Epsilon) -> Result<VeselovaTangent> {
    check_spec(spec, state.dim())?;
    vf_raw(&state.m_bold.wedge_coords(), state.u.matrix(), spec, eps)
}

/// Lexicographically ordered `r`-subsets of `0..n`, the index set of
/// [`pluecker`].
pub fn pluecker_indices(n: usize, r: usize) -> Vec<Vec<usize>> {
    (0..n).combinations(r).collect()
}

fn pluecker_raw(u: &DMatrix<f64>) -> Vec<f64> {
    let (n, r) = u.shape();
    (0..n)
        .combinations(r)
        .map(|rows| u.select_rows(rows.iter()).determinant())
        .collect()
}

/// The `r × r` minors of `U`, ordered as [`pluecker_indices`].
pub fn pluecker(u: &StiefelPoint) -> Vec<f64> {
    pluecker_raw(u.matrix())
}

fn log_density_raw(u: &DMatrix<f64>, a: &[f64], eps: Epsilon) -> Result<f64> {
    let (n, r) = u.shape();
    let power = (eps.half_inverse()? - 1.0) * (n - r - 1) as f64;
    let base: f64 = (0..n)
        .combinations(r)
        .map(|rows| {
            let w: f64 = rows.iter().map(|&i| a[i]).product();
            w * u.select_rows(rows.iter()).determinant().powi(2)
        })
        .sum();
    if !(base > 0.0) {
        return Err(Error::Singular(format!("weighted Plücker sum {base:e}")));
    }
    Ok(power * base.ln())
}

fn wedge_a_of(spec: &InertiaSpec) -> Result<&[f64]> {
    spec.wedge_a().ok_or_else(|| {
        Error::UnsupportedSpec(format!(
            "the Veselova density needs a wedge-product inertia, got {:?}",
            spec.kind()
        ))
    })
}

/// `log` of `(Σ_I a_I P_I²)^{(1/(2ε) - 1)(n - r - 1)}` with `P_I` the Plücker
/// coordinates of `U` and `a_I = a_{i₁}⋯a_{i_r}`.
pub fn log_density_veselova(state: &VeselovaState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    check_spec(spec, state.dim())?;
    log_density_raw(state.u.matrix(), wedge_a_of(spec)?, eps)
}

pub fn density_veselova(state: &VeselovaState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    log_density_veselova(state, spec, eps).map(f64::exp)
}

/// Orthonormal basis `{wₐ∧w_b : a < r}` of `D_r`, where `w` completes the
/// columns of `U` to an orthonormal basis of ℝⁿ.
pub fn dr_frame(u: &StiefelPoint) -> Result<Frame> {
    let (n, r) = (u.n(), u.r());
    let full = u.matrix().clone().resize_horizontally(n, 0.0);
    let mut w = full;
    let complement = orthonormal_span(&(DMatrix::identity(n, n) - u.matrix() * u.matrix().transpose()), 1e-8);
    w.columns_mut(r, n - r).copy_from(&complement);
    let mut elems = Vec::new();
    for a in 0..r {
        for b in a + 1..n {
            let x = w.column(a);
            let y = w.column(b);
            elems.push(AlgElem::new(x * y.transpose() - y * x.transpose())?);
        }
    }
    Frame::orthonormal(elems)
}

/// The Veselova flow on `(𝐦, U)`.
#[derive(Clone, Debug)]
pub struct VeselovaFlow {
    pub spec: InertiaSpec,
    pub eps: Epsilon,
    pub rank: usize,
}

impl VeselovaFlow {
    pub fn new(spec: InertiaSpec, eps: Epsilon, rank: usize) -> Result<Self> {
        if rank == 0 || rank >= spec.dim() {
            return Err(Error::Parameter(format!("Veselova rank must lie in 1..{}, got {rank}", spec.dim())));
        }
        Ok(Self { spec, eps, rank })
    }

    fn split(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.spec.dim();
        let big_n = algebra_dim(n);
        if x.len() != big_n + n * self.rank {
            return Err(Error::DimensionMismatch {
                expected: big_n + n * self.rank,
                found: x.len(),
            });
        }
        Ok((
            DVector::from_column_slice(&x.as_slice()[..big_n]),
            DMatrix::from_column_slice(n, self.rank, &x.as_slice()[big_n..]),
        ))
    }

    pub fn state(&self, x: &DVector<f64>) -> Result<VeselovaState> {
        VeselovaState::from_flat(self.spec.dim(), self.rank, x)
    }

    pub fn omega(&self, x: &DVector<f64>) -> Result<AlgElem> {
        let (m, u) = self.split(x)?;
        let (w, _) = omega_raw(&m, &u, &self.spec)?;
        AlgElem::from_wedge(self.spec.dim(), w.as_slice())
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, u) = self.split(x)?;
        log_density_raw(&u, wedge_a_of(&self.spec)?, self.eps)
    }
}

impl Flow for VeselovaFlow {
    fn chart(&self) -> Chart {
        veselova_chart(self.spec.dim(), self.rank)
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (m, u) = self.split(x)?;
        let t = vf_raw(&m, &u, &self.spec, self.eps)?;
        let big_n = m.len();
        let mut out = DVector::zeros(x.len());
        t.d_m_bold.write_wedge(&mut out.as_mut_slice()[..big_n]);
        out.as_mut_slice()[big_n..].copy_from_slice(t.d_u.as_slice());
        Ok(out)
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (m, u) = self.split(x)?;
        let n = self.spec.dim();
        let big_n = m.len();
        let mut gens = DMatrix::zeros(x.len(), 2 * big_n);
        for i in 0..big_n {
            gens[(i, i)] = 1.0;
        }
        for (c, (i, j)) in wedge_pairs(n).into_iter().enumerate() {
            let xi = AlgElem::wedge(n, i, j)?;
            let v = xi.matrix() * &u;
            gens.column_mut(big_n + c).rows_mut(big_n, v.len()).copy_from_slice(v.as_slice());
        }
        Ok(orthonormal_span(&gens, 1e-8))
    }

    fn constraint_defect(&self, x: &DVector<f64>) -> f64 {
        match self.split(x) {
            Ok((_, u)) => {
                let r = u.ncols();
                (u.transpose() * &u - DMatrix::identity(r, r)).amax()
            }
            Err(_) => f64::INFINITY,
        }
    }
}
