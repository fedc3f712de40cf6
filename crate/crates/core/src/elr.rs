//! The ε-modified LR system: multiplier form on `so(n)^{k+1}`, momentum form
//! on pairs (momentum, orthonormal `D`-frame), their invariant densities and
//! first integrals.

use nalgebra::{DMatrix, DVector};

use crate::liealg::{
    algebra_dim, frame_gram, orthonormal_complement, orthonormal_span, wedge_basis, AlgElem, Frame, GramMode,
    InertiaSpec,
};
use crate::numerics::{BlockKind, Chart, Flow};
use crate::{Error, Result};

/// The deformation parameter ε.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Parameter(format!("epsilon must be finite, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1/(2ε)`, the exponent of the multiplier-form density.
    pub fn half_inverse(self) -> Result<f64> {
        if self.0 == 0.0 {
            return Err(Error::Parameter("densities are undefined at epsilon = 0".into()));
        }
        Ok(0.5 / self.0)
    }
}

/// State `(ω, e₁, …, e_k)` of the multiplier form. The frame spans `H`; it
/// need not be orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct ElrMultiplierState {
    pub omega: AlgElem,
    pub frames_h: Frame,
    /// `cᵢ = ⟨ω, eᵢ⟩` at the time of construction.
    pub constants: Vec<f64>,
}

impl ElrMultiplierState {
    pub fn new(omega: AlgElem, frames_h: Frame) -> Result<Self> {
        if frames_h.dim() != omega.dim() {
            return Err(Error::DimensionMismatch {
                expected: omega.dim(),
                found: frames_h.dim(),
            });
        }
        if frames_h.is_empty() {
            return Err(Error::Dimension("the H-frame must be nonempty".into()));
        }
        let constants = frames_h.elems().iter().map(|e| omega.dot(e)).collect();
        Ok(Self {
            omega,
            frames_h,
            constants,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn rank_h(&self) -> usize {
        self.frames_h.len()
    }

    pub fn chart(&self) -> Chart {
        multiplier_chart(self.dim(), self.rank_h())
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let big_n = algebra_dim(self.dim());
        let mut x = DVector::zeros(big_n * (1 + self.rank_h()));
        self.omega.write_wedge(&mut x.as_mut_slice()[..big_n]);
        for (i, e) in self.frames_h.elems().iter().enumerate() {
            e.write_wedge(&mut x.as_mut_slice()[big_n * (i + 1)..big_n * (i + 2)]);
        }
        x
    }

    pub fn from_flat(n: usize, k: usize, x: &DVector<f64>) -> Result<Self> {
        let (omega, frames) = split_flat(n, k, x)?;
        Self::new(omega, Frame::new(frames)?)
    }
}

/// State `(𝐦, e_{k+1}, …, e_N)` of the momentum form; the frame is an
/// orthonormal basis of `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElrMomentumState {
    pub m_bold: AlgElem,
    pub frames_d: Frame,
}

impl ElrMomentumState {
    pub fn new(m_bold: AlgElem, frames_d: Frame) -> Result<Self> {
        if frames_d.dim() != m_bold.dim() {
            return Err(Error::DimensionMismatch {
                expected: m_bold.dim(),
                found: frames_d.dim(),
            });
        }
        if !frames_d.is_orthonormal() {
            return Err(Error::NotOrthonormal {
                defect: orthonormality_defect_of(&frames_d.coords()),
            });
        }
        Ok(Self { m_bold, frames_d })
    }

    pub fn dim(&self) -> usize {
        self.m_bold.dim()
    }

    pub fn rank_d(&self) -> usize {
        self.frames_d.len()
    }

    pub fn chart(&self) -> Chart {
        momentum_chart(self.dim(), self.rank_d())
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let big_n = algebra_dim(self.dim());
        let mut x = DVector::zeros(big_n * (1 + self.rank_d()));
        self.m_bold.write_wedge(&mut x.as_mut_slice()[..big_n]);
        x.as_mut_slice()[big_n..].copy_from_slice(self.frames_d.coords().as_slice());
        x
    }

    pub fn from_flat(n: usize, rank_d: usize, x: &DVector<f64>) -> Result<Self> {
        let (m, frames) = split_flat(n, rank_d, x)?;
        Self::new(m, Frame::orthonormal(frames)?)
    }
}

/// Tangent vector `(dω, dm, de₁, …, de_k)` of the multiplier form.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierTangent {
    pub d_omega: AlgElem,
    pub d_m: AlgElem,
    pub d_frames: Vec<AlgElem>,
}

/// Tangent vector `(d𝐦, de_{k+1}, …, de_N)` of the momentum form.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumTangent {
    pub d_m_bold: AlgElem,
    pub d_frames: Vec<AlgElem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElrIntegrals {
    pub phi: Vec<f64>,
    pub h: f64,
    pub f: f64,
}

pub fn multiplier_chart(n: usize, k: usize) -> Chart {
    Chart::new().with("omega", BlockKind::Alg { n }).with(
        "e",
        BlockKind::AlgList {
            n,
            count: k,
            orthonormal: false,
        },
    )
}

pub fn momentum_chart(n: usize, rank_d: usize) -> Chart {
    Chart::new().with("m", BlockKind::Alg { n }).with(
        "e",
        BlockKind::AlgList {
            n,
            count: rank_d,
            orthonormal: true,
        },
    )
}

fn split_flat(n: usize, count: usize, x: &DVector<f64>) -> Result<(AlgElem, Vec<AlgElem>)> {
    let big_n = algebra_dim(n);
    if x.len() != big_n * (count + 1) {
        return Err(Error::DimensionMismatch {
            expected: big_n * (count + 1),
            found: x.len(),
        });
    }
    let s = x.as_slice();
    let head = AlgElem::from_wedge(n, &s[..big_n])?;
    let frames = (0..count)
        .map(|i| AlgElem::from_wedge(n, &s[big_n * (i + 1)..big_n * (i + 2)]))
        .collect::<Result<Vec<_>>>()?;
    Ok((head, frames))
}

fn orthonormality_defect_of(coords: &DMatrix<f64>) -> f64 {
    let k = coords.ncols();
    (coords.transpose() * coords - DMatrix::identity(k, k)).amax()
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

/// `𝔸ᵢⱼ = ⟨eᵢ, 𝕀⁻¹eⱼ⟩` and its Cholesky factor.
fn gram_cholesky(frames: &[AlgElem], spec: &InertiaSpec) -> Result<(DMatrix<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let k = frames.len();
    let inv: Vec<AlgElem> = frames.iter().map(|e| spec.solve(e)).collect();
    let a = DMatrix::from_fn(k, k, |i, j| frames[i].dot(&inv[j]));
    let a = (&a + a.transpose()) * 0.5;
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Gram matrix ⟨eᵢ, 𝕀⁻¹eⱼ⟩ is not positive definite".into()))?;
    Ok((a, chol))
}

fn multipliers_raw(omega: &AlgElem, frames: &[AlgElem], spec: &InertiaSpec) -> Result<DVector<f64>> {
    let (_, chol) = gram_cholesky(frames, spec)?;
    let m = spec.apply(omega);
    let torque = spec.solve(&m.bracket(omega));
    let r = DVector::from_iterator(frames.len(), frames.iter().map(|e| e.dot(&torque)));
    Ok(-chol.solve(&r))
}

fn vf_multiplier_raw(
    omega: &AlgElem,
    frames: &[AlgElem],
    spec: &InertiaSpec,
    eps: Epsilon,
) -> Result<MultiplierTangent> {
    let lambda = multipliers_raw(omega, frames, spec)?;
    let m = spec.apply(omega);
    let mut d_m = m.bracket(omega);
    for (l, e) in lambda.iter().zip(frames) {
        d_m += &(e * *l);
    }
    let d_frames = frames.iter().map(|e| e.bracket(omega) * eps.value()).collect();
    Ok(MultiplierTangent {
        d_omega: spec.solve(&d_m),
        d_m,
        d_frames,
    })
}

/// The Lagrange multipliers `λ = -𝔸⁻¹ r`, `rⱼ = ⟨eⱼ, 𝕀⁻¹[m, ω]⟩`, `m = 𝕀ω`.
pub fn multipliers(state: &ElrMultiplierState, spec: &InertiaSpec) -> Result<DVector<f64>> {
    check_spec(spec, state.dim())?;
    multipliers_raw(&state.omega, state.frames_h.elems(), spec)
}

/// `ṁ = [m, ω] + Σ λⁱ eᵢ`, `ėᵢ = ε[eᵢ, ω]`.
pub fn vf_multiplier(state: &ElrMultiplierState, spec: &InertiaSpec, eps: Epsilon) -> Result<MultiplierTangent> {
    check_spec(spec, state.dim())?;
    vf_multiplier_raw(&state.omega, state.frames_h.elems(), spec, eps)
}

/// Divergence of `m ↦ ṁ` with the frames held fixed:
/// `-Σ 𝔸^{ij} ⟨𝕀⁻¹eᵢ, [eⱼ, ω]⟩`.
pub fn analytic_divergence_lambda(state: &ElrMultiplierState, spec: &InertiaSpec) -> Result<f64> {
    check_spec(spec, state.dim())?;
    let frames = state.frames_h.elems();
    let (a, _) = gram_cholesky(frames, spec)?;
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::Singular("Gram matrix ⟨eᵢ, 𝕀⁻¹eⱼ⟩".into()))?;
    let inv: Vec<AlgElem> = frames.iter().map(|e| spec.solve(e)).collect();
    let mut div = 0.0;
    for (i, ei) in inv.iter().enumerate() {
        for (j, ej) in frames.iter().enumerate() {
            div -= a_inv[(i, j)] * ei.dot(&ej.bracket(&state.omega));
        }
    }
    Ok(div)
}

/// `log Δ` with `Δ = det⟨𝕀⁻¹eᵢ, eⱼ⟩`.
fn log_delta(frames: &[AlgElem], spec: &InertiaSpec) -> Result<f64> {
    let (_, chol) = gram_cholesky(frames, spec)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `log μ_ε = log Δ / (2ε)`.
pub fn log_density_mu_eps(state: &ElrMultiplierState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    check_spec(spec, state.dim())?;
    Ok(eps.half_inverse()? * log_delta(state.frames_h.elems(), spec)?)
}

/// `μ_ε = Δ^{1/(2ε)}`.
pub fn density_mu_eps(state: &ElrMultiplierState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    log_density_mu_eps(state, spec, eps).map(f64::exp)
}

/// `𝐉 = E + pr_D(𝕀 - E)` in wedge coordinates, `D` spanned by the
/// orthonormal columns of `d_coords`.
pub fn momentum_matrix(d_coords: &DMatrix<f64>, spec: &InertiaSpec) -> DMatrix<f64> {
    let big_n = d_coords.nrows();
    let id = DMatrix::identity(big_n, big_n);
    let pr_d = d_coords * d_coords.transpose();
    &id + pr_d * (spec.matrix() - &id)
}

fn solve_momentum(d_coords: &DMatrix<f64>, spec: &InertiaSpec, m: &DVector<f64>) -> Result<DVector<f64>> {
    momentum_matrix(d_coords, spec)
        .lu()
        .solve(m)
        .ok_or_else(|| Error::Definiteness("momentum operator 𝐉 is singular".into()))
}

/// `𝐦 = pr_D 𝕀ω + pr_H ω`. The `H`-frame must be orthonormal; the `D`-frame
/// is its orthonormal complement.
pub fn momentum_of(state: &ElrMultiplierState, spec: &InertiaSpec) -> Result<ElrMomentumState> {
    check_spec(spec, state.dim())?;
    if !state.frames_h.is_orthonormal() {
        return Err(Error::NotOrthonormal {
            defect: orthonormality_defect_of(&state.frames_h.coords()),
        });
    }
    let frames_d = orthonormal_complement(&state.frames_h)?;
    let w = state.omega.wedge_coords();
    let m = momentum_matrix(&frames_d.coords(), spec) * w;
    ElrMomentumState::new(AlgElem::from_wedge(state.dim(), m.as_slice())?, frames_d)
}

/// Solves `𝐉ω = 𝐦`.
pub fn omega_of(state: &ElrMomentumState, spec: &InertiaSpec) -> Result<AlgElem> {
    check_spec(spec, state.dim())?;
    let w = solve_momentum(&state.frames_d.coords(), spec, &state.m_bold.wedge_coords())?;
    AlgElem::from_wedge(state.dim(), w.as_slice())
}

fn vf_momentum_raw(m: &AlgElem, frames: &[AlgElem], spec: &InertiaSpec, eps: Epsilon) -> Result<MomentumTangent> {
    let n = m.dim();
    let big_n = algebra_dim(n);
    let mut d_coords = DMatrix::zeros(big_n, frames.len());
    for (c, e) in frames.iter().enumerate() {
        e.write_wedge(d_coords.column_mut(c).as_mut_slice());
    }
    let w = solve_momentum(&d_coords, spec, &m.wedge_coords())?;
    let omega = AlgElem::from_wedge(n, w.as_slice())?;
    let torque = spec.apply(&omega).bracket(&omega).wedge_coords();
    let projected = &d_coords * (d_coords.transpose() * torque);
    let e = eps.value();
    let d_m = m.bracket(&omega) * e + AlgElem::from_wedge(n, projected.as_slice())? * (1.0 - e);
    let d_frames = frames.iter().map(|f| f.bracket(&omega) * e).collect();
    Ok(MomentumTangent { d_m_bold: d_m, d_frames })
}

/// `d𝐦 = ε[𝐦, ω] + (1 - ε) pr_D[𝕀ω, ω]`, `ėᵢ = ε[eᵢ, ω]`, `ω = 𝐉⁻¹𝐦`.
pub fn vf_momentum(state: &ElrMomentumState, spec: &InertiaSpec, eps: Epsilon) -> Result<MomentumTangent> {
    check_spec(spec, state.dim())?;
    vf_momentum_raw(&state.m_bold, state.frames_d.elems(), spec, eps)
}

/// `log μ̃ = (1/(2ε) - 1) log det⟨𝕀eᵢ, eⱼ⟩` over the `D`-frame.
pub fn log_density_mu_tilde(state: &ElrMomentumState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    check_spec(spec, state.dim())?;
    let power = eps.half_inverse()? - 1.0;
    let det = frame_gram(&state.frames_d, spec, GramMode::Inertia)?.determinant();
    if !(det > 0.0) {
        return Err(Error::Singular(format!("det 𝕀|_D = {det:e}")));
    }
    Ok(power * det.ln())
}

pub fn density_mu_tilde(state: &ElrMomentumState, spec: &InertiaSpec, eps: Epsilon) -> Result<f64> {
    log_density_mu_tilde(state, spec, eps).map(f64::exp)
}

/// `φᵢ = ⟨ω, eᵢ⟩`, `H = ½⟨𝕀ω, ω⟩`, `F = H - ⟨pr_H ω, 𝕀ω⟩`.
pub fn first_integrals_elr(state: &ElrMultiplierState, spec: &InertiaSpec) -> Result<ElrIntegrals> {
    check_spec(spec, state.dim())?;
    let frames = state.frames_h.elems();
    let m = spec.apply(&state.omega);
    let phi: Vec<f64> = frames.iter().map(|e| state.omega.dot(e)).collect();
    let h = 0.5 * m.dot(&state.omega);
    // pr_H for a possibly non-orthonormal frame: Σ (G⁻¹φ)ᵢ eᵢ
    let coeffs = state
        .frames_h
        .gram()
        .cholesky()
        .ok_or_else(|| Error::Singular("frame Gram matrix".into()))?
        .solve(&DVector::from_column_slice(&phi));
    let pr_h_m: f64 = coeffs.iter().zip(frames).map(|(c, e)| c * e.dot(&m)).sum();
    Ok(ElrIntegrals { phi, h, f: h - pr_h_m })
}

/// The multiplier form as a flow on `(ω, e₁, …, e_k)`.
#[derive(Clone, Debug)]
pub struct ElrMultiplierFlow {
    pub spec: InertiaSpec,
    pub eps: Epsilon,
    pub rank_h: usize,
}

impl ElrMultiplierFlow {
    pub fn new(spec: InertiaSpec, eps: Epsilon, rank_h: usize) -> Result<Self> {
        if rank_h == 0 || rank_h >= spec.algebra_dim() {
            return Err(Error::Parameter(format!(
                "rank of H must lie in 1..{}, got {rank_h}",
                spec.algebra_dim()
            )));
        }
        Ok(Self { spec, eps, rank_h })
    }

    pub fn state(&self, x: &DVector<f64>) -> Result<ElrMultiplierState> {
        ElrMultiplierState::from_flat(self.spec.dim(), self.rank_h, x)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, frames) = split_flat(self.spec.dim(), self.rank_h, x)?;
        Ok(self.eps.half_inverse()? * log_delta(&frames, &self.spec)?)
    }
}

impl Flow for ElrMultiplierFlow {
    fn chart(&self) -> Chart {
        multiplier_chart(self.spec.dim(), self.rank_h)
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (omega, frames) = split_flat(self.spec.dim(), self.rank_h, x)?;
        let t = vf_multiplier_raw(&omega, &frames, &self.spec, self.eps)?;
        let big_n = self.spec.algebra_dim();
        let mut out = DVector::zeros(x.len());
        t.d_omega.write_wedge(&mut out.as_mut_slice()[..big_n]);
        for (i, e) in t.d_frames.iter().enumerate() {
            e.write_wedge(&mut out.as_mut_slice()[big_n * (i + 1)..big_n * (i + 2)]);
        }
        Ok(out)
    }
}

/// The momentum form as a flow on `(𝐦, e_{k+1}, …, e_N)`.
///
/// The frame moves by the adjoint action, so trajectories stay on the leaf
/// `so(n) × {Ad_g (e_{k+1}, …, e_N)}`; the tangent basis spans that leaf.
#[derive(Clone, Debug)]
pub struct ElrMomentumFlow {
    pub spec: InertiaSpec,
    pub eps: Epsilon,
    pub rank_d: usize,
}

impl ElrMomentumFlow {
    pub fn new(spec: InertiaSpec, eps: Epsilon, rank_d: usize) -> Result<Self> {
        if rank_d == 0 || rank_d >= spec.algebra_dim() {
            return Err(Error::Parameter(format!(
                "rank of D must lie in 1..{}, got {rank_d}",
                spec.algebra_dim()
            )));
        }
        Ok(Self { spec, eps, rank_d })
    }

    pub fn state(&self, x: &DVector<f64>) -> Result<ElrMomentumState> {
        ElrMomentumState::from_flat(self.spec.dim(), self.rank_d, x)
    }

    pub fn omega(&self, x: &DVector<f64>) -> Result<AlgElem> {
        let big_n = self.spec.algebra_dim();
        let d_coords = DMatrix::from_column_slice(big_n, self.rank_d, &x.as_slice()[big_n..]);
        let w = solve_momentum(&d_coords, &self.spec, &DVector::from_column_slice(&x.as_slice()[..big_n]))?;
        AlgElem::from_wedge(self.spec.dim(), w.as_slice())
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let big_n = self.spec.algebra_dim();
        let (_, frames) = split_flat(self.spec.dim(), self.rank_d, x)?;
        let power = self.eps.half_inverse()? - 1.0;
        let frame = Frame::from_unchecked(self.spec.dim(), frames, false);
        let det = crate::liealg::gram_unchecked(&frame.coords(), &self.spec, GramMode::Inertia).determinant();
        if !(det > 0.0) {
            return Err(Error::Singular(format!("det 𝕀|_D = {det:e}")));
        }
        debug_assert_eq!(frame.coords().nrows(), big_n);
        Ok(power * det.ln())
    }
}

impl Flow for ElrMomentumFlow {
    fn chart(&self) -> Chart {
        momentum_chart(self.spec.dim(), self.rank_d)
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (m, frames) = split_flat(self.spec.dim(), self.rank_d, x)?;
        let t = vf_momentum_raw(&m, &frames, &self.spec, self.eps)?;
        let big_n = self.spec.algebra_dim();
        let mut out = DVector::zeros(x.len());
        t.d_m_bold.write_wedge(&mut out.as_mut_slice()[..big_n]);
        for (i, e) in t.d_frames.iter().enumerate() {
            e.write_wedge(&mut out.as_mut_slice()[big_n * (i + 1)..big_n * (i + 2)]);
        }
        Ok(out)
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.spec.dim();
        let big_n = algebra_dim(n);
        let (_, frames) = split_flat(n, self.rank_d, x)?;
        let basis = wedge_basis(n)?;
        let mut gens = DMatrix::zeros(x.len(), 2 * big_n);
        for i in 0..big_n {
            gens[(i, i)] = 1.0;
        }
        for (c, xi) in basis.iter().enumerate() {
            for (i, e) in frames.iter().enumerate() {
                let start = big_n * (i + 1);
                xi.bracket(e)
                    .write_wedge(gens.column_mut(big_n + c).rows_mut(start, big_n).as_mut_slice());
            }
        }
        Ok(orthonormal_span(&gens, 1e-8))
    }

    fn constraint_defect(&self, x: &DVector<f64>) -> f64 {
        let big_n = self.spec.algebra_dim();
        let coords = DMatrix::from_column_slice(big_n, self.rank_d, &x.as_slice()[big_n..]);
        orthonormality_defect_of(&coords)
    }
}
