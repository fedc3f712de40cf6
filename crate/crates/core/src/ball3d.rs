//! Chaplygin and rubber Chaplygin balls written directly with 3-vectors and
//! cross products.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::elpr::{pi_variants, ElprState, PiKind};
use crate::elr::{ElrMultiplierState, Epsilon};
use crate::liealg::{hat, orthonormal_span, Frame, InertiaSpec, StiefelPoint};
use crate::numerics::{BlockKind, Chart, Flow};
use crate::systems::SystemState;
use crate::veselova::VeselovaState;
use crate::{Error, Result};

/// Body inertia `diag(I₁, I₂, I₃)`, the parameter `D ≥ 0` and ε.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallParams {
    pub inertia: [f64; 3],
    pub d: f64,
    pub eps: Epsilon,
}

impl BallParams {
    pub fn new(inertia: [f64; 3], d: f64, eps: Epsilon) -> Result<Self> {
        if inertia.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parameter(format!("moments of inertia must be positive, got {inertia:?}")));
        }
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::Parameter(format!("D = {d} must be nonnegative")));
        }
        Ok(Self { inertia, d, eps })
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    /// `𝐈 = 𝕀 + D·E`.
    pub fn shifted_matrix(&self) -> Matrix3<f64> {
        self.inertia_matrix() + Matrix3::identity() * self.d
    }

    /// The body inertia as an operator on `so(3)`.
    pub fn spec(&self) -> Result<InertiaSpec> {
        InertiaSpec::from_body_diagonal(self.inertia)
    }

    /// `𝐈` as an operator on `so(3)`.
    pub fn shifted_spec(&self) -> Result<InertiaSpec> {
        InertiaSpec::shifted(&self.spec()?, self.d)
    }
}

/// `σ/(σ + ρ)` for a ball rolling outside a sphere of radius σ, `σ/(σ - ρ)`
/// inside it; ρ is the ball radius.
pub fn physical_epsilon(sigma: f64, rho: f64, inside: bool) -> Result<Epsilon> {
    let denom = if inside { sigma - rho } else { sigma + rho };
    if denom == 0.0 {
        return Err(Error::Parameter("σ = ρ gives an unbounded ε".into()));
    }
    Epsilon::new(sigma / denom)
}

/// `(ω⃗, γ⃗)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallState {
    pub omega: Vector3<f64>,
    pub gamma: Vector3<f64>,
}

impl BallState {
    pub fn new(omega: Vector3<f64>, gamma: Vector3<f64>) -> Result<Self> {
        let defect = (gamma.norm() - 1.0).abs();
        if defect > 1e-10 {
            return Err(Error::Parameter(format!("γ must be a unit vector (defect {defect:e})")));
        }
        Ok(Self { omega, gamma })
    }
}

/// A pair of 3-vectors: `(k̇, γ̇)`, `(ṁ, γ̇)` or `(ω̇, γ̇)` depending on the call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallTangent {
    pub d_vec: Vector3<f64>,
    pub d_gamma: Vector3<f64>,
}

fn chaplygin_operator(params: &BallParams, gamma: &Vector3<f64>) -> Matrix3<f64> {
    params.shifted_matrix() - gamma * gamma.transpose() * params.d
}

fn solve3(m: &Matrix3<f64>, rhs: &Vector3<f64>, what: &str) -> Result<Vector3<f64>> {
    m.lu()
        .solve(rhs)
        .ok_or_else(|| Error::Definiteness(format!("{what} is singular")))
}

/// `k⃗ = 𝕀ω⃗ + Dω⃗ - D(ω⃗, γ⃗)γ⃗`.
pub fn chaplygin_momentum(state: &BallState, params: &BallParams) -> Vector3<f64> {
    params.inertia_matrix() * state.omega + state.omega * params.d - state.gamma * (params.d * state.omega.dot(&state.gamma))
}

/// Solves `(𝕀 + D·E - Dγ⃗γ⃗ᵀ)ω⃗ = k⃗`.
pub fn chaplygin_omega(k: &Vector3<f64>, gamma: &Vector3<f64>, params: &BallParams) -> Result<Vector3<f64>> {
    solve3(&chaplygin_operator(params, gamma), k, "𝕀 + D - Dγγᵀ")
}

/// `k⃗̇ = k⃗ × ω⃗`, `γ⃗̇ = εγ⃗ × ω⃗`.
pub fn vf_chaplygin(state: &BallState, params: &BallParams) -> BallTangent {
    let k = chaplygin_momentum(state, params);
    BallTangent {
        d_vec: k.cross(&state.omega),
        d_gamma: state.gamma.cross(&state.omega) * params.eps.value(),
    }
}

/// Rolling over a plane: `k⃗̇ = k⃗ × ω⃗`, `γ⃗̇ = γ⃗ × ω⃗`.
pub fn vf_chaplygin_plane(state: &BallState, inertia: [f64; 3], d: f64) -> BallTangent {
    let i = Matrix3::from_diagonal(&Vector3::from(inertia));
    let k = i * state.omega + state.omega * d - state.gamma * (d * state.omega.dot(&state.gamma));
    BallTangent {
        d_vec: k.cross(&state.omega),
        d_gamma: state.gamma.cross(&state.omega),
    }
}

/// `λ = -(m⃗ × ω⃗, 𝐈⁻¹γ⃗)/(γ⃗, 𝐈⁻¹γ⃗)`, `m⃗ = 𝐈ω⃗`.
pub fn rubber_multiplier(state: &BallState, params: &BallParams) -> Result<f64> {
    let bold = params.shifted_matrix();
    let m = bold * state.omega;
    let inv_g = solve3(&bold, &state.gamma, "𝐈")?;
    Ok(-m.cross(&state.omega).dot(&inv_g) / state.gamma.dot(&inv_g))
}

/// `m⃗̇ = m⃗ × ω⃗ + λγ⃗`, `γ⃗̇ = εγ⃗ × ω⃗`.
pub fn vf_rubber(state: &BallState, params: &BallParams) -> Result<BallTangent> {
    let m = params.shifted_matrix() * state.omega;
    let lambda = rubber_multiplier(state, params)?;
    Ok(BallTangent {
        d_vec: m.cross(&state.omega) + state.gamma * lambda,
        d_gamma: state.gamma.cross(&state.omega) * params.eps.value(),
    })
}

/// `𝐦⃗ = 𝐈ω⃗ + (γ⃗, ω⃗ - 𝐈ω⃗)γ⃗`.
pub fn rubber_momentum(state: &BallState, params: &BallParams) -> Vector3<f64> {
    let iw = params.shifted_matrix() * state.omega;
    iw + state.gamma * state.gamma.dot(&(state.omega - iw))
}

/// Solves `𝐦⃗ = 𝐈ω⃗ + (γ⃗, ω⃗ - 𝐈ω⃗)γ⃗` for ω⃗.
pub fn rubber_omega_from_momentum(m: &Vector3<f64>, gamma: &Vector3<f64>, params: &BallParams) -> Result<Vector3<f64>> {
    let bold = params.shifted_matrix();
    let ggt = gamma * gamma.transpose();
    let op = bold + ggt * (Matrix3::identity() - bold);
    solve3(&op, m, "rubber momentum operator")
}

/// `𝐦⃗̇ = ε 𝐦⃗ × ω⃗ + (1 - ε)(u⃗ - (u⃗, γ⃗)γ⃗)` with `u⃗ = 𝐈ω⃗ × ω⃗`, `γ⃗̇ = εγ⃗ × ω⃗`.
pub fn vf_rubber_momentum(m: &Vector3<f64>, gamma: &Vector3<f64>, params: &BallParams) -> Result<BallTangent> {
    let omega = rubber_omega_from_momentum(m, gamma, params)?;
    let e = params.eps.value();
    let u = (params.shifted_matrix() * omega).cross(&omega);
    Ok(BallTangent {
        d_vec: m.cross(&omega) * e + (u - gamma * u.dot(gamma)) * (1.0 - e),
        d_gamma: gamma.cross(&omega) * e,
    })
}

/// `μ = √(det(𝕀 + D)(1 - D(γ⃗, (𝕀 + D)⁻¹γ⃗)))`.
pub fn density_chaplygin(gamma: &Vector3<f64>, params: &BallParams) -> Result<f64> {
    let shifted = params.shifted_matrix();
    let inv_g = solve3(&shifted, gamma, "𝕀 + D")?;
    let value = shifted.determinant() * (1.0 - params.d * gamma.dot(&inv_g));
    if !(value > 0.0) {
        return Err(Error::Definiteness(format!("Chaplygin density radicand {value:e}")));
    }
    Ok(value.sqrt())
}

/// `μ_ε = (𝐈⁻¹γ⃗, γ⃗)^{1/(2ε)}`.
pub fn density_rubber(gamma: &Vector3<f64>, params: &BallParams) -> Result<f64> {
    let p = params.eps.half_inverse()?;
    let inv_g = solve3(&params.shifted_matrix(), gamma, "𝐈")?;
    Ok(inv_g.dot(gamma).powf(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BallDensity {
    Chaplygin,
    Rubber,
}

pub fn densities_3d(state: &BallState, params: &BallParams, which: BallDensity) -> Result<f64> {
    match which {
        BallDensity::Chaplygin => density_chaplygin(&state.gamma, params),
        BallDensity::Rubber => density_rubber(&state.gamma, params),
    }
}

/// Chaplygin ball as `(𝐤, Π = D·pr_{γ⊥})`.
pub fn lift_chaplygin_to_elpr(state: &BallState, params: &BallParams) -> Result<(ElprState, InertiaSpec)> {
    let spec = params.spec()?;
    let pi = pi_variants(&hat(&state.gamma), params.d, PiKind::DProj)?;
    let k = hat(&chaplygin_momentum(state, params));
    Ok((ElprState::new(k, pi, &spec)?, spec))
}

/// Rubber ball as `(ω, e₁ = hat γ⃗)` with inertia `𝕀 + D`.
pub fn lift_rubber_to_elr(state: &BallState, params: &BallParams) -> Result<(ElrMultiplierState, InertiaSpec)> {
    let frame = Frame::orthonormal(vec![hat(&state.gamma)])?;
    Ok((ElrMultiplierState::new(hat(&state.omega), frame)?, params.shifted_spec()?))
}

/// Rubber ball as a Veselova state with `r = 1`, `U = γ⃗` and inertia `𝕀 + D`.
pub fn lift_rubber_to_veselova(state: &BallState, params: &BallParams) -> Result<(VeselovaState, InertiaSpec)> {
    let u = StiefelPoint::new(DMatrix::from_column_slice(3, 1, state.gamma.as_slice()))?;
    let m = hat(&rubber_momentum(state, params));
    Ok((VeselovaState::new(m, u)?, params.shifted_spec()?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftTarget {
    Elr,
    Elpr,
    Veselova,
}

/// Lifts a ball state (a `BallChaplygin` or `BallRubber` variant) to the
/// matching `so(3)` system; returns the state and its inertia operator.
pub fn lift_to_so3(state: &SystemState, params: &BallParams, target: LiftTarget) -> Result<(SystemState, InertiaSpec)> {
    match (state, target) {
        (SystemState::BallChaplygin(s), LiftTarget::Elpr) => {
            let (lifted, spec) = lift_chaplygin_to_elpr(s, params)?;
            Ok((SystemState::Elpr(lifted), spec))
        }
        (SystemState::BallRubber(s), LiftTarget::Elr) => {
            let (lifted, spec) = lift_rubber_to_elr(s, params)?;
            Ok((SystemState::ElrMultiplier(lifted), spec))
        }
        (SystemState::BallRubber(s), LiftTarget::Veselova) => {
            let (lifted, spec) = lift_rubber_to_veselova(s, params)?;
            Ok((SystemState::Veselova(lifted), spec))
        }
        (other, target) => Err(Error::Parameter(format!(
            "cannot lift a {} state to {target:?}",
            other.kind()
        ))),
    }
}

fn split6(x: &DVector<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if x.len() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            found: x.len(),
        });
    }
    Ok((
        Vector3::new(x[0], x[1], x[2]),
        Vector3::new(x[3], x[4], x[5]),
    ))
}

fn join6(a: &Vector3<f64>, b: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[a.x, a.y, a.z, b.x, b.y, b.z])
}

fn sphere_tangent_basis(x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (_, g) = split6(x)?;
    let norm = g.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateBasis("γ vanished".into()));
    }
    let g = g / norm;
    let proj = Matrix3::identity() - g * g.transpose();
    let q = orthonormal_span(&DMatrix::from_column_slice(3, 3, proj.as_slice()), 1e-8);
    let mut out = DMatrix::zeros(6, 3 + q.ncols());
    out.view_mut((0, 0), (3, 3)).fill_with_identity();
    out.view_mut((3, 3), (3, q.ncols())).copy_from(&q);
    Ok(out)
}

fn sphere_defect(x: &DVector<f64>) -> f64 {
    match split6(x) {
        Ok((_, g)) => (g.norm() - 1.0).abs(),
        Err(_) => f64::INFINITY,
    }
}

fn ball_chart(first: &str) -> Chart {
    Chart::new()
        .with(first, BlockKind::Vector { len: 3 })
        .with("g", BlockKind::UnitVector { len: 3 })
}

/// Which vector is stored next to γ⃗.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChaplyginCoords {
    /// `(k⃗, γ⃗)`, density `1/μ`.
    Momentum,
    /// `(ω⃗, γ⃗)`, density `μ`.
    Velocity,
}

#[derive(Clone, Copy, Debug)]
pub struct ChaplyginFlow {
    pub params: BallParams,
    pub coords: ChaplyginCoords,
}

impl ChaplyginFlow {
    pub fn new(params: BallParams, coords: ChaplyginCoords) -> Self {
        Self { params, coords }
    }

    pub fn flatten(&self, state: &BallState) -> DVector<f64> {
        match self.coords {
            ChaplyginCoords::Momentum => join6(&chaplygin_momentum(state, &self.params), &state.gamma),
            ChaplyginCoords::Velocity => join6(&state.omega, &state.gamma),
        }
    }

    pub fn omega(&self, x: &DVector<f64>) -> Result<Vector3<f64>> {
        let (v, g) = split6(x)?;
        match self.coords {
            ChaplyginCoords::Momentum => chaplygin_omega(&v, &g, &self.params),
            ChaplyginCoords::Velocity => Ok(v),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, g) = split6(x)?;
        let log_mu = density_chaplygin(&g, &self.params)?.ln();
        Ok(match self.coords {
            ChaplyginCoords::Momentum => -log_mu,
            ChaplyginCoords::Velocity => log_mu,
        })
    }

    /// `½(k⃗, ω⃗)`.
    pub fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, g) = split6(x)?;
        let omega = self.omega(x)?;
        let state = BallState { omega, gamma: g };
        Ok(0.5 * chaplygin_momentum(&state, &self.params).dot(&omega))
    }
}

impl Flow for ChaplyginFlow {
    fn chart(&self) -> Chart {
        ball_chart(match self.coords {
            ChaplyginCoords::Momentum => "k",
            ChaplyginCoords::Velocity => "w",
        })
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, g) = split6(x)?;
        let omega = self.omega(x)?;
        let t = vf_chaplygin(&BallState { omega, gamma: g }, &self.params);
        match self.coords {
            ChaplyginCoords::Momentum => Ok(join6(&t.d_vec, &t.d_gamma)),
            ChaplyginCoords::Velocity => {
                // (𝕀 + D - Dγγᵀ)ω̇ = k̇ + D(γ̇γᵀ + γγ̇ᵀ)ω
                let d = self.params.d;
                let rhs = t.d_vec + (t.d_gamma * g.dot(&omega) + g * t.d_gamma.dot(&omega)) * d;
                let dw = solve3(&chaplygin_operator(&self.params, &g), &rhs, "𝕀 + D - Dγγᵀ")?;
                Ok(join6(&dw, &t.d_gamma))
            }
        }
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        sphere_tangent_basis(x)
    }

    fn constraint_defect(&self, x: &DVector<f64>) -> f64 {
        sphere_defect(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RubberForm {
    /// `(ω⃗, γ⃗)` with the multiplier, density `(𝐈⁻¹γ⃗, γ⃗)^{1/(2ε)}`.
    Multiplier,
    /// `(𝐦⃗, γ⃗)`, density `(𝐈⁻¹γ⃗, γ⃗)^{1/(2ε) - 1}`.
    Momentum,
}

#[derive(Clone, Copy, Debug)]
pub struct RubberFlow {
    pub params: BallParams,
    pub form: RubberForm,
}

impl RubberFlow {
    pub fn new(params: BallParams, form: RubberForm) -> Self {
        Self { params, form }
    }

    pub fn flatten(&self, state: &BallState) -> DVector<f64> {
        match self.form {
            RubberForm::Multiplier => join6(&state.omega, &state.gamma),
            RubberForm::Momentum => join6(&rubber_momentum(state, &self.params), &state.gamma),
        }
    }

    pub fn omega(&self, x: &DVector<f64>) -> Result<Vector3<f64>> {
        let (v, g) = split6(x)?;
        match self.form {
            RubberForm::Multiplier => Ok(v),
            RubberForm::Momentum => rubber_omega_from_momentum(&v, &g, &self.params),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, g) = split6(x)?;
        let p = self.params.eps.half_inverse()?;
        let inv_g = solve3(&self.params.shifted_matrix(), &g, "𝐈")?;
        let base = inv_g.dot(&g).ln();
        Ok(match self.form {
            RubberForm::Multiplier => p * base,
            RubberForm::Momentum => (p - 1.0) * base,
        })
    }

    /// `(ω⃗, γ⃗)`, `½(𝐈ω⃗, ω⃗)`.
    pub fn integrals(&self, x: &DVector<f64>) -> Result<(f64, f64)> {
        let (_, g) = split6(x)?;
        let omega = self.omega(x)?;
        Ok((omega.dot(&g), 0.5 * (self.params.shifted_matrix() * omega).dot(&omega)))
    }
}

impl Flow for RubberFlow {
    fn chart(&self) -> Chart {
        ball_chart(match self.form {
            RubberForm::Multiplier => "w",
            RubberForm::Momentum => "m",
        })
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (v, g) = split6(x)?;
        match self.form {
            RubberForm::Multiplier => {
                let t = vf_rubber(&BallState { omega: v, gamma: g }, &self.params)?;
                let dw = solve3(&self.params.shifted_matrix(), &t.d_vec, "𝐈")?;
                Ok(join6(&dw, &t.d_gamma))
            }
            RubberForm::Momentum => {
                let t = vf_rubber_momentum(&v, &g, &self.params)?;
                Ok(join6(&t.d_vec, &t.d_gamma))
            }
        }
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        sphere_tangent_basis(x)
    }

    fn constraint_defect(&self, x: &DVector<f64>) -> f64 {
        sphere_defect(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::unhat;
    use crate::numerics::{fd_directional, tangent_volume_transport, IntegratorConfig, DEFAULT_H_SCALE};

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    fn params(e: f64) -> BallParams {
        BallParams::new([1.0, 2.0, 3.0], 1.0, eps(e)).unwrap()
    }

    fn state() -> BallState {
        BallState::new(Vector3::new(0.3, -1.1, 0.7), Vector3::new(2.0, 3.0, 6.0) / 7.0).unwrap()
    }

    #[test]
    fn worked_density_values() {
        let g = Vector3::x();
        assert_eq!(density_chaplygin(&g, &params(0.5)).unwrap(), 12f64.sqrt());
        assert_eq!(density_rubber(&g, &params(1.0)).unwrap(), 0.5f64.sqrt());
        let free = BallParams::new([1.0, 2.0, 3.0], 0.0, eps(1.0)).unwrap();
        assert!((density_chaplygin(&state().gamma, &free).unwrap() - 6f64.sqrt()).abs() < 1e-15);
        assert!(density_rubber(&g, &params(0.0)).is_err());
    }

    #[test]
    fn chaplygin_special_cases() {
        let free = BallParams::new([1.0, 2.0, 3.0], 0.0, eps(0.4)).unwrap();
        let s = state();
        let t = vf_chaplygin(&s, &free);
        let k = free.inertia_matrix() * s.omega;
        assert_eq!(t.d_vec, k.cross(&s.omega));
        let par = BallState::new(s.gamma * 2.0, s.gamma).unwrap();
        assert!(vf_chaplygin(&par, &params(0.7)).d_gamma.norm() < 1e-15);
        let k = chaplygin_momentum(&s, &params(1.0));
        assert!((chaplygin_omega(&k, &s.gamma, &params(1.0)).unwrap() - s.omega).norm() < 1e-14);
    }

    #[test]
    fn unit_epsilon_is_plane_rolling() {
        let s = state();
        let p = params(1.0);
        assert_eq!(vf_chaplygin(&s, &p), vf_chaplygin_plane(&s, p.inertia, p.d));
    }

    #[test]
    fn rubber_preserves_constraint() {
        let p = params(1.6);
        let flow = RubberFlow::new(p, RubberForm::Multiplier);
        let x = flow.flatten(&state());
        let v = flow.field(&x).unwrap();
        let c = |y: &DVector<f64>| -> Result<f64> { Ok(y[0] * y[3] + y[1] * y[4] + y[2] * y[5]) };
        assert!(fd_directional(&c, &x, &v, DEFAULT_H_SCALE).unwrap().abs() < 1e-9);
    }

    #[test]
    fn printed_multiplier_breaks_constraint() {
        // λ = (m⃗, 𝐈⁻¹γ⃗)/(γ⃗, 𝐈⁻¹γ⃗) does not keep (ω⃗, γ⃗) constant
        let p = params(1.0);
        let s = state();
        let bold = p.shifted_matrix();
        let m = bold * s.omega;
        let inv_g = bold.try_inverse().unwrap() * s.gamma;
        let lambda = m.dot(&inv_g) / s.gamma.dot(&inv_g);
        let dm = m.cross(&s.omega) + s.gamma * lambda;
        let dw = bold.try_inverse().unwrap() * dm;
        let dg = s.gamma.cross(&s.omega);
        assert!((dw.dot(&s.gamma) + s.omega.dot(&dg)).abs() > 1e-2);
    }

    #[test]
    fn isotropic_rubber_is_stationary() {
        let p = BallParams::new([2.0; 3], 0.5, eps(0.3)).unwrap();
        let t = vf_rubber(&state(), &p).unwrap();
        assert!(t.d_vec.norm() < 1e-15);
    }

    #[test]
    fn chaplygin_matches_elpr() {
        for &e in &[-1.0, 0.5, 2.0] {
            let p = params(e);
            let s = state();
            let (lifted, spec) = lift_chaplygin_to_elpr(&s, &p).unwrap();
            let t3 = vf_chaplygin(&s, &p);
            let tg = crate::elpr::vf_elpr(&lifted, &spec, p.eps).unwrap();
            assert!((unhat(&tg.d_k_bold).unwrap() - t3.d_vec).norm() < 1e-12);
            // Π̇ = -D(γ̇γᵀ + γγ̇ᵀ) in hat coordinates
            let g = hat(&s.gamma).wedge_coords();
            let dg = hat(&t3.d_gamma).wedge_coords();
            let expect = -(&dg * g.transpose() + &g * dg.transpose()) * p.d;
            assert!((tg.d_pi - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn rubber_matches_elr_and_veselova() {
        for &e in &[-1.0, 0.5, 2.0] {
            let p = params(e);
            let s = state();
            let t3 = vf_rubber(&s, &p).unwrap();
            let (lifted, spec) = lift_rubber_to_elr(&s, &p).unwrap();
            let tg = crate::elr::vf_multiplier(&lifted, &spec, p.eps).unwrap();
            assert!((unhat(&tg.d_m).unwrap() - t3.d_vec).norm() < 1e-12);
            assert!((unhat(&tg.d_frames[0]).unwrap() - t3.d_gamma).norm() < 1e-12);

            let m = rubber_momentum(&s, &p);
            let tm = vf_rubber_momentum(&m, &s.gamma, &p).unwrap();
            let (ves, spec) = lift_rubber_to_veselova(&s, &p).unwrap();
            let tv = crate::veselova::vf_veselova(&ves, &spec, p.eps).unwrap();
            assert!((unhat(&tv.d_m_bold).unwrap() - tm.d_vec).norm() < 1e-12);
            assert!((Vector3::new(tv.d_u[0], tv.d_u[1], tv.d_u[2]) - tm.d_gamma).norm() < 1e-12);
            assert!((unhat(&tv.omega).unwrap() - s.omega).norm() < 1e-12);
        }
    }

    #[test]
    fn momentum_round_trip() {
        let p = params(0.8);
        let s = state();
        let m = rubber_momentum(&s, &p);
        assert!((rubber_omega_from_momentum(&m, &s.gamma, &p).unwrap() - s.omega).norm() < 1e-14);
    }

    #[test]
    fn transport_on_sphere_bundle() {
        let cfg = IntegratorConfig::adaptive(3.0, 6, 1e-10);
        for &e in &[-1.0, 0.5, 1.0, 2.0] {
            let p = params(e);
            let flows: Vec<(Box<dyn Flow>, Box<dyn Fn(&DVector<f64>) -> Result<f64>>, DVector<f64>)> = vec![
                {
                    let f = ChaplyginFlow::new(p, ChaplyginCoords::Velocity);
                    let x = f.flatten(&state());
                    (Box::new(f), Box::new(move |y: &DVector<f64>| f.log_density(y)), x)
                },
                {
                    let f = ChaplyginFlow::new(p, ChaplyginCoords::Momentum);
                    let x = f.flatten(&state());
                    (Box::new(f), Box::new(move |y: &DVector<f64>| f.log_density(y)), x)
                },
                {
                    let f = RubberFlow::new(p, RubberForm::Multiplier);
                    let x = f.flatten(&state());
                    (Box::new(f), Box::new(move |y: &DVector<f64>| f.log_density(y)), x)
                },
                {
                    let f = RubberFlow::new(p, RubberForm::Momentum);
                    let x = f.flatten(&state());
                    (Box::new(f), Box::new(move |y: &DVector<f64>| f.log_density(y)), x)
                },
            ];
            for (i, (flow, log_mu, x0)) in flows.iter().enumerate() {
                let res = tangent_volume_transport(flow.as_ref(), log_mu.as_ref(), x0, &cfg).unwrap();
                assert!(res.max_abs_residual() < 1e-6, "eps {e} flow {i}: {}", res.max_abs_residual());
            }
        }
    }

    #[test]
    fn lift_dispatch() {
        let p = params(0.5);
        let s = state();
        let (lifted, _) = lift_to_so3(&SystemState::BallRubber(s), &p, LiftTarget::Veselova).unwrap();
        assert!(matches!(lifted, SystemState::Veselova(_)));
        let (lifted, _) = lift_to_so3(&SystemState::BallChaplygin(s), &p, LiftTarget::Elpr).unwrap();
        assert!(matches!(lifted, SystemState::Elpr(_)));
        assert!(lift_to_so3(&SystemState::BallChaplygin(s), &p, LiftTarget::Elr).is_err());
    }

    #[test]
    fn physical_epsilon_helper() {
        assert_eq!(physical_epsilon(3.0, 1.0, false).unwrap().value(), 0.75);
        assert_eq!(physical_epsilon(3.0, 1.0, true).unwrap().value(), 1.5);
        assert!(physical_epsilon(1.0, 1.0, true).is_err());
    }
}
