//! The ε-modified L+R system on `so(n) × Sym(so(n))`, the two natural choices
//! of `Π`, and the Stiefel specialization with the Chaplygin-type inertia.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::elr::Epsilon;
use crate::liealg::{
    ad_matrix, algebra_dim, isotropy_frame, orthonormal_span, wedge_pairs, AlgElem, InertiaKind, InertiaSpec,
    StiefelPoint,
};
use crate::numerics::{read_sym_upper, write_sym_upper, BlockKind, Chart, Flow};
use crate::veselova::pr_dr_matrix;
use crate::{Error, Result};

/// Symmetry tolerance for `Π`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// State `(𝐤, Π)`; `Π` is an `N × N` symmetric matrix in wedge coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ElprState {
    pub k_bold: AlgElem,
    pub pi: DMatrix<f64>,
}

impl ElprState {
    /// Checks symmetry of `Π` and positivity of `𝕀 + Π`.
    pub fn new(k_bold: AlgElem, pi: DMatrix<f64>, spec: &InertiaSpec) -> Result<Self> {
        let n = k_bold.dim();
        let big_n = algebra_dim(n);
        if pi.shape() != (big_n, big_n) {
            return Err(Error::DimensionMismatch {
                expected: big_n,
                found: pi.nrows(),
            });
        }
        check_spec(spec, n)?;
        let defect = (&pi - pi.transpose()).amax();
        if defect > SYMMETRY_TOL * pi.amax().max(1.0) {
            return Err(Error::Parameter(format!("Π is not symmetric (defect {defect:e})")));
        }
        kappa_cholesky(&pi, spec)?;
        Ok(Self { k_bold, pi })
    }

    pub fn dim(&self) -> usize {
        self.k_bold.dim()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let big_n = algebra_dim(self.dim());
        let mut x = DVector::zeros(big_n + big_n * (big_n + 1) / 2);
        self.k_bold.write_wedge(&mut x.as_mut_slice()[..big_n]);
        write_sym_upper(&self.pi, &mut x.as_mut_slice()[big_n..]);
        x
    }

    pub fn from_flat(n: usize, x: &DVector<f64>, spec: &InertiaSpec) -> Result<Self> {
        let big_n = algebra_dim(n);
        if x.len() != big_n + big_n * (big_n + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: big_n + big_n * (big_n + 1) / 2,
                found: x.len(),
            });
        }
        let k = AlgElem::from_wedge(n, &x.as_slice()[..big_n])?;
        Self::new(k, read_sym_upper(big_n, &x.as_slice()[big_n..]), spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElprTangent {
    pub d_k_bold: AlgElem,
    pub d_pi: DMatrix<f64>,
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

fn kappa_cholesky(pi: &DMatrix<f64>, spec: &InertiaSpec) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let kappa = spec.matrix() + pi;
    let kappa = (&kappa + kappa.transpose()) * 0.5;
    kappa
        .cholesky()
        .ok_or_else(|| Error::Definiteness("𝕀 + Π is not positive definite".into()))
}

/// Solves `(𝕀 + Π)ω = 𝐤`.
pub fn omega_from_k(state: &ElprState, spec: &InertiaSpec) -> Result<AlgElem> {
    check_spec(spec, state.dim())?;
    let w = kappa_cholesky(&state.pi, spec)?.solve(&state.k_bold.wedge_coords());
    AlgElem::from_wedge(state.dim(), w.as_slice())
}

/// `𝐤 = 𝕀ω + Πω`.
pub fn k_from_omega(omega: &AlgElem, pi: &DMatrix<f64>, spec: &InertiaSpec) -> Result<AlgElem> {
    check_spec(spec, omega.dim())?;
    let w = omega.wedge_coords();
    AlgElem::from_wedge(omega.dim(), (spec.apply_coords(&w) + pi * &w).as_slice())
}

fn vf_raw(k: &AlgElem, pi: &DMatrix<f64>, spec: &InertiaSpec, eps: f64) -> Result<(ElprTangent, AlgElem)> {
    let n = k.dim();
    let w = kappa_cholesky(pi, spec)?.solve(&k.wedge_coords());
    let omega = AlgElem::from_wedge(n, w.as_slice())?;
    let ad = ad_matrix(&omega);
    let d_pi = (pi * &ad - &ad * pi) * eps;
    Ok((
        ElprTangent {
            d_k_bold: k.bracket(&omega),
            d_pi,
        },
        omega,
    ))
}

/// `𝐤̇ = [𝐤, ω]`, `Π̇ = ε(Π ad_ω - ad_ω Π)`.
pub fn vf_elpr(state: &ElprState, spec: &InertiaSpec, eps: Epsilon) -> Result<ElprTangent> {
    check_spec(spec, state.dim())?;
    Ok(vf_raw(&state.k_bold, &state.pi, spec, eps.value())?.0)
}

/// The plain L+R field `𝐤̇ = [𝐤, ω]`, `Π̇ = [Π, ad_ω]`.
pub fn vf_lpr_plain(state: &ElprState, spec: &InertiaSpec) -> Result<ElprTangent> {
    check_spec(spec, state.dim())?;
    let w = kappa_cholesky(&state.pi, spec)?.solve(&state.k_bold.wedge_coords());
    let omega = AlgElem::from_wedge(state.dim(), w.as_slice())?;
    let ad = ad_matrix(&omega);
    Ok(ElprTangent {
        d_k_bold: state.k_bold.bracket(&omega),
        d_pi: &state.pi * &ad - &ad * &state.pi,
    })
}

/// `½ log det(𝕀 + Π)`.
pub fn log_density_elpr(state: &ElprState, spec: &InertiaSpec) -> Result<f64> {
    check_spec(spec, state.dim())?;
    log_sqrt_det_kappa(&state.pi, spec)
}

fn log_sqrt_det_kappa(pi: &DMatrix<f64>, spec: &InertiaSpec) -> Result<f64> {
    let chol = kappa_cholesky(pi, spec)?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

/// `μ = √det(𝕀 + Π)`.
pub fn density_elpr(state: &ElprState, spec: &InertiaSpec) -> Result<f64> {
    log_density_elpr(state, spec).map(f64::exp)
}

/// `H = ½⟨𝐤, ω⟩`.
pub fn energy(state: &ElprState, spec: &InertiaSpec) -> Result<f64> {
    Ok(0.5 * state.k_bold.dot(&omega_from_k(state, spec)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiKind {
    /// `D·pr_D`, `D` the orthogonal complement of the isotropy algebra of γ.
    DProj,
    /// `η ↦ D[[γ, η], γ]`.
    DoubleBracket,
}

fn check_unit(gamma: &AlgElem) -> Result<()> {
    let norm = gamma.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Parameter(format!("γ must have unit norm, got {norm}")));
    }
    Ok(())
}

fn check_d(d: f64) -> Result<()> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::Parameter(format!("D = {d} must be nonnegative")));
    }
    Ok(())
}

/// The operator `Π` of the given kind as an `N × N` matrix.
pub fn pi_variants(gamma: &AlgElem, d: f64, kind: PiKind) -> Result<DMatrix<f64>> {
    check_unit(gamma)?;
    check_d(d)?;
    let big_n = algebra_dim(gamma.dim());
    match kind {
        PiKind::DProj => {
            let iso = isotropy_frame(gamma)?.coords();
            let pr_d = DMatrix::identity(big_n, big_n) - &iso * iso.transpose();
            Ok(pr_d * d)
        }
        PiKind::DoubleBracket => {
            let ad = ad_matrix(gamma);
            let m = -(&ad * &ad) * d;
            Ok((&m + m.transpose()) * 0.5)
        }
    }
}

/// `Π = D·pr_Dr` for a Stiefel point.
pub fn pi_from_stiefel(u: &StiefelPoint, d: f64) -> Result<DMatrix<f64>> {
    check_d(d)?;
    Ok(pr_dr_matrix(u.matrix()) * d)
}

/// Which variable is stored in the `so(n)` block of an [`ElprFlow`] state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElprCoords {
    /// `(𝐤, Π)`; the invariant density is `det(𝕀 + Π)^{-1/2}`.
    Momentum,
    /// `(ω, Π)`; the invariant density is `det(𝕀 + Π)^{1/2}`.
    Velocity,
}

/// The ε-L+R flow on `so(n) × Sym(so(n))` in upper-triangle coordinates.
#[derive(Clone, Debug)]
pub struct ElprFlow {
    pub spec: InertiaSpec,
    pub eps: Epsilon,
    pub coords: ElprCoords,
}

impl ElprFlow {
    pub fn new(spec: InertiaSpec, eps: Epsilon, coords: ElprCoords) -> Self {
        Self { spec, eps, coords }
    }

    fn split(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let big_n = self.spec.algebra_dim();
        if x.len() != big_n + big_n * (big_n + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: big_n + big_n * (big_n + 1) / 2,
                found: x.len(),
            });
        }
        Ok((
            DVector::from_column_slice(&x.as_slice()[..big_n]),
            read_sym_upper(big_n, &x.as_slice()[big_n..]),
        ))
    }

    /// Flat state in this flow's coordinates.
    pub fn flatten(&self, state: &ElprState) -> Result<DVector<f64>> {
        let mut x = state.to_flat();
        if self.coords == ElprCoords::Velocity {
            let big_n = self.spec.algebra_dim();
            omega_from_k(state, &self.spec)?.write_wedge(&mut x.as_mut_slice()[..big_n]);
        }
        Ok(x)
    }

    /// `(𝐤, Π)` and ω at a flat state.
    pub fn unpack(&self, x: &DVector<f64>) -> Result<(AlgElem, AlgElem, DMatrix<f64>)> {
        let n = self.spec.dim();
        let (head, pi) = self.split(x)?;
        let head = AlgElem::from_wedge(n, head.as_slice())?;
        match self.coords {
            ElprCoords::Momentum => {
                let w = kappa_cholesky(&pi, &self.spec)?.solve(&head.wedge_coords());
                Ok((head, AlgElem::from_wedge(n, w.as_slice())?, pi))
            }
            ElprCoords::Velocity => Ok((k_from_omega(&head, &pi, &self.spec)?, head, pi)),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, pi) = self.split(x)?;
        let half = log_sqrt_det_kappa(&pi, &self.spec)?;
        Ok(match self.coords {
            ElprCoords::Momentum => -half,
            ElprCoords::Velocity => half,
        })
    }

    pub fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let (k, omega, _) = self.unpack(x)?;
        Ok(0.5 * k.dot(&omega))
    }
}

impl Flow for ElprFlow {
    fn chart(&self) -> Chart {
        let n = self.spec.dim();
        let label = match self.coords {
            ElprCoords::Momentum => "k",
            ElprCoords::Velocity => "omega",
        };
        Chart::new().with(label, BlockKind::Alg { n }).with(
            "Pi",
            BlockKind::SymUpper {
                size: algebra_dim(n),
            },
        )
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (head, pi) = self.split(x)?;
        let n = self.spec.dim();
        let big_n = head.len();
        let head = AlgElem::from_wedge(n, head.as_slice())?;
        let k = match self.coords {
            ElprCoords::Momentum => head,
            ElprCoords::Velocity => k_from_omega(&head, &pi, &self.spec)?,
        };
        let (t, omega) = vf_raw(&k, &pi, &self.spec, self.eps.value())?;
        let mut out = DVector::zeros(x.len());
        match self.coords {
            ElprCoords::Momentum => t.d_k_bold.write_wedge(&mut out.as_mut_slice()[..big_n]),
            ElprCoords::Velocity => {
                // ω̇ = (𝕀 + Π)⁻¹(𝐤̇ - Π̇ω)
                let rhs = t.d_k_bold.wedge_coords() - &t.d_pi * omega.wedge_coords();
                let dw = kappa_cholesky(&pi, &self.spec)?.solve(&rhs);
                out.as_mut_slice()[..big_n].copy_from_slice(dw.as_slice());
            }
        }
        write_sym_upper(&t.d_pi, &mut out.as_mut_slice()[big_n..]);
        Ok(out)
    }
}

/// Parameters of the Stiefel specialization: `a`, `D` and the inertia
/// `𝕀(Eᵢ∧Eⱼ) = D aᵢaⱼ/(D - aᵢaⱼ) Eᵢ∧Eⱼ`.
#[derive(Clone, Debug)]
pub struct LprStiefelParams {
    pub a: Vec<f64>,
    pub d: f64,
    pub spec: InertiaSpec,
}

impl LprStiefelParams {
    pub fn new(a: &[f64], d: f64) -> Result<Self> {
        Ok(Self {
            a: a.to_vec(),
            d,
            spec: InertiaSpec::wedge_products_chaplygin(a, d)?,
        })
    }

    /// Recovers the parameters from a Chaplygin-type spec.
    pub fn from_spec(spec: &InertiaSpec) -> Result<Self> {
        match spec.kind() {
            InertiaKind::WedgeProductsChaplygin { a, d } => Self::new(a, *d),
            other => Err(Error::UnsupportedSpec(format!(
                "the Stiefel L+R system needs the Chaplygin-type inertia, got {other:?}"
            ))),
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LprStiefelState {
    pub k_bold: AlgElem,
    pub u: StiefelPoint,
}

impl LprStiefelState {
    pub fn new(k_bold: AlgElem, u: StiefelPoint) -> Result<Self> {
        if u.n() != k_bold.dim() {
            return Err(Error::DimensionMismatch {
                expected: k_bold.dim(),
                found: u.n(),
            });
        }
        Ok(Self { k_bold, u })
    }

    pub fn dim(&self) -> usize {
        self.k_bold.dim()
    }

    pub fn rank(&self) -> usize {
        self.u.r()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let big_n = algebra_dim(self.dim());
        let mut x = DVector::zeros(big_n + self.dim() * self.rank());
        self.k_bold.write_wedge(&mut x.as_mut_slice()[..big_n]);
        x.as_mut_slice()[big_n..].copy_from_slice(self.u.matrix().as_slice());
        x
    }

    /// The matching general state `(𝐤, D·pr_Dr)`.
    pub fn to_elpr(&self, params: &LprStiefelParams) -> Result<ElprState> {
        ElprState::new(self.k_bold.clone(), pi_from_stiefel(&self.u, params.d)?, &params.spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LprStiefelTangent {
    pub d_k_bold: AlgElem,
    pub d_u: DMatrix<f64>,
    pub omega: AlgElem,
}

fn stiefel_omega(k: &DVector<f64>, u: &DMatrix<f64>, params: &LprStiefelParams) -> Result<DVector<f64>> {
    let kappa = params.spec.matrix() + pr_dr_matrix(u) * params.d;
    let kappa = (&kappa + kappa.transpose()) * 0.5;
    Ok(kappa
        .cholesky()
        .ok_or_else(|| Error::Definiteness("𝕀 + D·pr_Dr is not positive definite".into()))?
        .solve(k))
}

fn stiefel_vf_raw(k: &DVector<f64>, u: &DMatrix<f64>, params: &LprStiefelParams, eps: f64) -> Result<LprStiefelTangent> {
    let n = u.nrows();
    let w = stiefel_omega(k, u, params)?;
    let omega = AlgElem::from_wedge(n, w.as_slice())?;
    let k = AlgElem::from_wedge(n, k.as_slice())?;
    Ok(LprStiefelTangent {
        d_k_bold: k.bracket(&omega),
        d_u: -(omega.matrix() * u) * eps,
        omega,
    })
}

fn check_params(state: &LprStiefelState, params: &LprStiefelParams) -> Result<()> {
    if params.n() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: params.n(),
        });
    }
    Ok(())
}

/// `𝐤̇ = [𝐤, ω]`, `U̇ = -εωU`, `𝐤 = 𝕀ω + D·pr_Dr ω`.
pub fn vf_lpr_stiefel(state: &LprStiefelState, params: &LprStiefelParams, eps: Epsilon) -> Result<LprStiefelTangent> {
    check_params(state, params)?;
    stiefel_vf_raw(&state.k_bold.wedge_coords(), state.u.matrix(), params, eps.value())
}

fn stiefel_log_density_raw(u: &DMatrix<f64>, a: &[f64]) -> Result<f64> {
    let (n, r) = u.shape();
    let base: f64 = (0..n)
        .combinations(r)
        .map(|rows| {
            let w: f64 = rows.iter().map(|&i| a[i]).product();
            u.select_rows(rows.iter()).determinant().powi(2) / w
        })
        .sum();
    if !(base > 0.0) {
        return Err(Error::Singular(format!("weighted Plücker sum {base:e}")));
    }
    Ok(-0.5 * (n as f64 - r as f64 - 1.0) * base.ln())
}

/// `log` of `(Σ_I P_I² / a_I)^{-(n - r - 1)/2}`.
pub fn log_density_lpr_stiefel(state: &LprStiefelState, params: &LprStiefelParams) -> Result<f64> {
    check_params(state, params)?;
    stiefel_log_density_raw(state.u.matrix(), &params.a)
}

pub fn density_lpr_stiefel(state: &LprStiefelState, params: &LprStiefelParams) -> Result<f64> {
    log_density_lpr_stiefel(state, params).map(f64::exp)
}

/// `𝐈 = E + D𝕀⁻¹`, diagonal in the wedge basis.
pub fn bold_inertia(params: &LprStiefelParams) -> Result<InertiaSpec> {
    let diag = params.spec.diagonal().expect("Chaplygin-type inertia is diagonal");
    let m = DMatrix::from_diagonal(&diag.map(|v| 1.0 + params.d / v));
    InertiaSpec::general(m)
}

/// `𝐦 = pr_Dr 𝐈𝐰 + pr_Hr 𝐰` with `𝐰 = 𝕀ω`.
pub fn auxiliary_momentum(omega: &AlgElem, u: &StiefelPoint, params: &LprStiefelParams) -> Result<AlgElem> {
    let bold = bold_inertia(params)?;
    let w = params.spec.apply_coords(&omega.wedge_coords());
    let pr = pr_dr_matrix(u.matrix());
    let big_n = pr.nrows();
    let m = &pr * bold.apply_coords(&w) + (DMatrix::identity(big_n, big_n) - &pr) * &w;
    AlgElem::from_wedge(omega.dim(), m.as_slice())
}

/// The Stiefel L+R flow on `(𝐤, U)`.
#[derive(Clone, Debug)]
pub struct LprStiefelFlow {
    pub params: LprStiefelParams,
    pub eps: Epsilon,
    pub rank: usize,
}

impl LprStiefelFlow {
    pub fn new(params: LprStiefelParams, eps: Epsilon, rank: usize) -> Result<Self> {
        if rank == 0 || rank > params.n() {
            return Err(Error::Parameter(format!("Stiefel rank must lie in 1..={}, got {rank}", params.n())));
        }
        Ok(Self { params, eps, rank })
    }

    fn split(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.params.n();
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

    pub fn state(&self, x: &DVector<f64>) -> Result<LprStiefelState> {
        let (k, u) = self.split(x)?;
        LprStiefelState::new(AlgElem::from_wedge(self.params.n(), k.as_slice())?, StiefelPoint::new(u)?)
    }

    pub fn omega(&self, x: &DVector<f64>) -> Result<AlgElem> {
        let (k, u) = self.split(x)?;
        AlgElem::from_wedge(self.params.n(), stiefel_omega(&k, &u, &self.params)?.as_slice())
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, u) = self.split(x)?;
        stiefel_log_density_raw(&u, &self.params.a)
    }

    pub fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let (k, _) = self.split(x)?;
        Ok(0.5 * k.dot(&self.omega(x)?.wedge_coords()))
    }
}

impl Flow for LprStiefelFlow {
    fn chart(&self) -> Chart {
        let n = self.params.n();
        Chart::new()
            .with("k", BlockKind::Alg { n })
            .with("U", BlockKind::Stiefel { n, r: self.rank })
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (k, u) = self.split(x)?;
        let t = stiefel_vf_raw(&k, &u, &self.params, self.eps.value())?;
        let big_n = k.len();
        let mut out = DVector::zeros(x.len());
        t.d_k_bold.write_wedge(&mut out.as_mut_slice()[..big_n]);
        out.as_mut_slice()[big_n..].copy_from_slice(t.d_u.as_slice());
        Ok(out)
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (k, u) = self.split(x)?;
        let n = self.params.n();
        let big_n = k.len();
        let mut gens = DMatrix::zeros(x.len(), 2 * big_n);
        for i in 0..big_n {
            gens[(i, i)] = 1.0;
        }
        for (c, (i, j)) in wedge_pairs(n).into_iter().enumerate() {
            let v = AlgElem::wedge(n, i, j)?.matrix() * &u;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::{hat, restricted_det, GramMode};
    use crate::numerics::{fd_divergence, fd_jacobian, liouville_residual_ambient, FieldOf, DEFAULT_H_SCALE};
    use crate::random;
    use crate::veselova::dr_frame;
    use nalgebra::Vector3;

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    fn random_state(seed: u64, n: usize) -> (ElprState, InertiaSpec) {
        let mut rng = random::rng(seed);
        let spec = random::general_inertia(&mut rng, n).unwrap();
        let big_n = algebra_dim(n);
        let pi = random::symmetric_psd(&mut rng, big_n, 0.5);
        let k = random::alg_elem(&mut rng, n).unwrap();
        (ElprState::new(k, pi, &spec).unwrap(), spec)
    }

    #[test]
    fn omega_solves() {
        let (state, spec) = random_state(1, 4);
        let omega = omega_from_k(&state, &spec).unwrap();
        let back = k_from_omega(&omega, &state.pi, &spec).unwrap();
        assert!((&back - &state.k_bold).norm() < 1e-12 * state.k_bold.norm());

        let zero = ElprState::new(state.k_bold.clone(), DMatrix::zeros(6, 6), &spec).unwrap();
        let w = omega_from_k(&zero, &spec).unwrap();
        assert!((&w - &spec.solve(&state.k_bold)).norm() < 1e-13);

        let a = [1.0, 2.0, 0.5, 1.5];
        let wp = InertiaSpec::wedge_products(&a).unwrap();
        let s = ElprState::new(state.k_bold.clone(), DMatrix::identity(6, 6) * 0.7, &wp).unwrap();
        let w = omega_from_k(&s, &wp).unwrap().wedge_coords();
        let kc = state.k_bold.wedge_coords();
        for (c, (i, j)) in wedge_pairs(4).into_iter().enumerate() {
            assert!((w[c] - kc[c] / (a[i] * a[j] + 0.7)).abs() < 1e-14);
        }
    }

    #[test]
    fn construction_checks() {
        let spec = InertiaSpec::identity(3).unwrap();
        let k = AlgElem::zero(3).unwrap();
        let mut asym = DMatrix::zeros(3, 3);
        asym[(0, 1)] = 0.1;
        assert!(matches!(ElprState::new(k.clone(), asym, &spec), Err(Error::Parameter(_))));
        let neg = DMatrix::identity(3, 3) * -2.0;
        assert!(matches!(ElprState::new(k, neg, &spec), Err(Error::Definiteness(_))));
    }

    #[test]
    fn zero_pi_reduces_to_euler() {
        let (state, spec) = random_state(2, 3);
        let s = ElprState::new(state.k_bold.clone(), DMatrix::zeros(3, 3), &spec).unwrap();
        let t = vf_elpr(&s, &spec, eps(-1.3)).unwrap();
        let w = spec.solve(&s.k_bold);
        assert!((&t.d_k_bold - &s.k_bold.bracket(&w)).norm() < 1e-14);
        assert_eq!(t.d_pi.amax(), 0.0);
    }

    #[test]
    fn unit_epsilon_is_plain_lpr() {
        let (state, spec) = random_state(3, 4);
        let t = vf_elpr(&state, &spec, eps(1.0)).unwrap();
        let p = vf_lpr_plain(&state, &spec).unwrap();
        assert_eq!(t, p);
        // column-wise evaluation Π̇eⱼ = Π[ω, eⱼ] - [ω, Πeⱼ]
        let omega = omega_from_k(&state, &spec).unwrap();
        for (c, (i, j)) in wedge_pairs(4).into_iter().enumerate() {
            let e = AlgElem::wedge(4, i, j).unwrap();
            let pe = AlgElem::from_wedge(4, (&state.pi * e.wedge_coords()).as_slice()).unwrap();
            let col = &state.pi * omega.bracket(&e).wedge_coords() - omega.bracket(&pe).wedge_coords();
            assert!((col - p.d_pi.column(c)).amax() < 1e-13);
        }
    }

    #[test]
    fn pi_velocity_is_symmetric_and_divergence_free() {
        let (state, spec) = random_state(4, 4);
        let t = vf_elpr(&state, &spec, eps(0.6)).unwrap();
        assert!((&t.d_pi - t.d_pi.transpose()).amax() < 1e-14);
        // Π-block divergence with ω held fixed
        let omega = omega_from_k(&state, &spec).unwrap();
        let ad = ad_matrix(&omega);
        let pi_field = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let pi = read_sym_upper(6, x.as_slice());
            let mut out = DVector::zeros(x.len());
            write_sym_upper(&((&pi * &ad - &ad * &pi) * 0.6), out.as_mut_slice());
            Ok(out)
        };
        let mut x = DVector::zeros(21);
        write_sym_upper(&state.pi, x.as_mut_slice());
        assert!(fd_divergence(&pi_field, &x, DEFAULT_H_SCALE).unwrap().abs() < 1e-8);
        // tr ad_ω = 0
        assert!(ad.trace().abs() < 1e-15);
    }

    #[test]
    fn euler_block_is_unimodular() {
        let (state, spec) = random_state(5, 4);
        let s = spec.clone();
        let field = move |k: &DVector<f64>| -> Result<DVector<f64>> {
            let k = AlgElem::from_wedge(4, k.as_slice())?;
            Ok(k.bracket(&s.solve(&k)).wedge_coords())
        };
        let j = fd_jacobian(&field, &state.k_bold.wedge_coords(), DEFAULT_H_SCALE).unwrap();
        assert!(j.trace().abs() < 1e-8);
    }

    #[test]
    fn ambient_liouville_in_both_charts() {
        for &e in &[-1.0, 0.5, 1.0, 2.0] {
            for &n in &[3, 4] {
                let (state, spec) = random_state(10 + n as u64, n);
                for coords in [ElprCoords::Momentum, ElprCoords::Velocity] {
                    let flow = ElprFlow::new(spec.clone(), eps(e), coords);
                    let x = flow.flatten(&state).unwrap();
                    let res = liouville_residual_ambient(&FieldOf(&flow), &|y| flow.log_density(y), &x).unwrap();
                    assert!(res.abs() < 1e-6, "eps {e} n {n} {coords:?}: {res}");
                    let wrong = |y: &DVector<f64>| flow.log_density(y).map(|l| -l);
                    let res = liouville_residual_ambient(&FieldOf(&flow), &wrong, &x).unwrap();
                    assert!(res.abs() > 1e-4, "negative control eps {e} n {n} {coords:?}: {res}");
                }
            }
        }
    }

    #[test]
    fn density_examples() {
        let (state, spec) = random_state(20, 3);
        let s = ElprState::new(state.k_bold.clone(), DMatrix::zeros(3, 3), &spec).unwrap();
        assert!((density_elpr(&s, &spec).unwrap() - spec.determinant().sqrt()).abs() < 1e-13);

        let id = InertiaSpec::identity(4).unwrap();
        let mut rng = random::rng(21);
        let q = random::orthonormal_columns(&mut rng, 6, 2);
        let d = 0.8;
        let s = ElprState::new(state_k(4), &q * q.transpose() * d, &id).unwrap();
        assert!((density_elpr(&s, &id).unwrap() - (1.0 + d)).abs() < 1e-13);

        // so(3), Π = D·pr_{γ⊥}
        let i3 = InertiaSpec::from_body_diagonal([1.0, 2.0, 3.0]).unwrap();
        let g = Vector3::new(0.6, 0.0, 0.8);
        let pi = pi_variants(&hat(&g), 1.0, PiKind::DProj).unwrap();
        let s = ElprState::new(state_k(3), pi, &i3).unwrap();
        let shifted = nalgebra::Matrix3::from_diagonal(&Vector3::new(2.0, 3.0, 4.0));
        let inv_g = shifted.try_inverse().unwrap() * g;
        let expect = (24.0 * (1.0 - g.dot(&inv_g))).sqrt();
        assert!((density_elpr(&s, &i3).unwrap() - expect).abs() < 1e-13);
    }

    fn state_k(n: usize) -> AlgElem {
        AlgElem::wedge(n, 0, 1).unwrap()
    }

    #[test]
    fn energy_examples() {
        let spec = InertiaSpec::identity(3).unwrap();
        let s = ElprState::new(AlgElem::zero(3).unwrap(), DMatrix::zeros(3, 3), &spec).unwrap();
        assert_eq!(energy(&s, &spec).unwrap(), 0.0);
        let s = ElprState::new(state_k(3), DMatrix::zeros(3, 3), &spec).unwrap();
        assert!((energy(&s, &spec).unwrap() - 0.5).abs() < 1e-15);
        let (s, spec) = random_state(30, 4);
        assert!(energy(&s, &spec).unwrap() > 0.0);
    }

    #[test]
    fn pi_variants_in_so3_coincide() {
        let g = hat(&(Vector3::new(2.0, -1.0, 2.0) / 3.0));
        let a = pi_variants(&g, 1.7, PiKind::DProj).unwrap();
        let b = pi_variants(&g, 1.7, PiKind::DoubleBracket).unwrap();
        assert!((a - b).amax() < 1e-13);
        assert_eq!(pi_variants(&g, 0.0, PiKind::DProj).unwrap().amax(), 0.0);
        assert!(pi_variants(&(g * 2.0), 1.0, PiKind::DProj).is_err());
    }

    #[test]
    fn pi_variants_in_so4() {
        // at γ = E₁∧E₂ both kinds give D on the mixed wedges and 0 on E₁∧E₂, E₃∧E₄
        let g = AlgElem::wedge(4, 0, 1).unwrap();
        let a = pi_variants(&g, 2.0, PiKind::DProj).unwrap();
        let b = pi_variants(&g, 2.0, PiKind::DoubleBracket).unwrap();
        assert!((&a - &b).amax() < 1e-14);
        let diag = DVector::from_vec(vec![0.0, 2.0, 2.0, 2.0, 2.0, 0.0]);
        assert!((a - DMatrix::from_diagonal(&diag)).amax() < 1e-14);
        // they differ for a γ with a larger isotropy algebra
        let s = 0.5f64.sqrt();
        let g = AlgElem::wedge(4, 0, 1).unwrap() * s + AlgElem::wedge(4, 2, 3).unwrap() * s;
        let a = pi_variants(&g, 1.0, PiKind::DProj).unwrap();
        let b = pi_variants(&g, 1.0, PiKind::DoubleBracket).unwrap();
        assert!((a - b).amax() > 0.1);
    }

    fn stiefel_setup(seed: u64, n: usize, r: usize) -> (LprStiefelState, LprStiefelParams) {
        let mut rng = random::rng(seed);
        let (a, d) = random::chaplygin_parameters(&mut rng, n);
        let params = LprStiefelParams::new(&a, d).unwrap();
        let state = LprStiefelState::new(random::alg_elem(&mut rng, n).unwrap(), random::stiefel(&mut rng, n, r).unwrap()).unwrap();
        (state, params)
    }

    #[test]
    fn bold_inertia_eigenvalues() {
        let (_, params) = stiefel_setup(40, 4, 2);
        let bold = bold_inertia(&params).unwrap();
        let diag = bold.diagonal().unwrap();
        for (c, (i, j)) in wedge_pairs(4).into_iter().enumerate() {
            let expect = params.d / (params.a[i] * params.a[j]);
            assert!((diag[c] - expect).abs() < 1e-13 * expect);
        }
    }

    #[test]
    fn auxiliary_momentum_equals_k() {
        let (state, params) = stiefel_setup(41, 5, 2);
        let t = vf_lpr_stiefel(&state, &params, eps(0.7)).unwrap();
        let m = auxiliary_momentum(&t.omega, &state.u, &params).unwrap();
        assert!((&m - &state.k_bold).norm() < 1e-12 * state.k_bold.norm());
    }

    #[test]
    fn determinant_factorizes() {
        let (state, params) = stiefel_setup(42, 4, 2);
        let pi = pi_from_stiefel(&state.u, params.d).unwrap();
        let lhs = (params.spec.matrix() + pi).determinant();
        let bold = bold_inertia(&params).unwrap();
        let rhs = restricted_det(&bold, &dr_frame(&state.u).unwrap(), GramMode::Inertia).unwrap() * params.spec.determinant();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs());
    }

    #[test]
    fn stiefel_field_examples() {
        let (state, params) = stiefel_setup(43, 4, 2);
        let t = vf_lpr_stiefel(&state, &params, eps(1.5)).unwrap();
        let u = state.u.matrix();
        assert!((t.d_u.transpose() * u + u.transpose() * &t.d_u).amax() < 1e-14);
        // r = n: the Euler flow with 𝕀 + D
        let full = LprStiefelState::new(state.k_bold.clone(), StiefelPoint::new(DMatrix::identity(4, 4)).unwrap()).unwrap();
        let t = vf_lpr_stiefel(&full, &params, eps(1.5)).unwrap();
        let shifted = InertiaSpec::shifted(&params.spec, params.d).unwrap();
        let w = shifted.solve(&full.k_bold);
        assert!((&t.omega - &w).norm() < 1e-12);
        assert!((&t.d_k_bold - &full.k_bold.bracket(&w)).norm() < 1e-12);
    }

    #[test]
    fn stiefel_density_examples() {
        let (state, params) = stiefel_setup(44, 4, 1);
        let ones = LprStiefelParams::new(&[1.0; 4], 2.0).unwrap();
        assert!((density_lpr_stiefel(&state, &ones).unwrap() - 1.0).abs() < 1e-14);
        let (s3, p3) = stiefel_setup(45, 4, 3);
        assert_eq!(density_lpr_stiefel(&s3, &p3).unwrap(), 1.0);
        let v = state.u.matrix().column(0);
        let base: f64 = (0..4).map(|i| v[i] * v[i] / params.a[i]).sum();
        let expect = base.powf(-1.0);
        assert!((density_lpr_stiefel(&state, &params).unwrap() - expect).abs() < 1e-13 * expect);
        assert!(LprStiefelParams::from_spec(&InertiaSpec::identity(3).unwrap()).is_err());
    }

    #[test]
    fn stiefel_transport_preserves_density() {
        use crate::numerics::{tangent_volume_transport, IntegratorConfig};
        let (state, params) = stiefel_setup(46, 4, 1);
        let cfg = IntegratorConfig::adaptive(2.0, 4, 1e-10);
        for &e in &[-1.0, 2.0] {
            let flow = LprStiefelFlow::new(params.clone(), eps(e), 1).unwrap();
            let res = tangent_volume_transport(&flow, &|y| flow.log_density(y), &state.to_flat(), &cfg).unwrap();
            assert!(res.max_abs_residual() < 1e-6, "eps {e}: {}", res.max_abs_residual());
            let wrong = |y: &DVector<f64>| flow.log_density(y).map(|l| 2.0 * l);
            let res = tangent_volume_transport(&flow, &wrong, &state.to_flat(), &cfg).unwrap();
            assert!(res.max_abs_residual() > 1e-3, "eps {e}: {}", res.max_abs_residual());
        }
    }
}
