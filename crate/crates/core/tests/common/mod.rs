#![allow(dead_code)]

use nalgebra::{DVector, Vector3};
use nonholo_core::ball3d::BallState;
use nonholo_core::elpr::{ElprState, LprStiefelParams, LprStiefelState};
use nonholo_core::elr::{momentum_of, ElrMomentumState, ElrMultiplierState};
use nonholo_core::liealg::{algebra_dim, InertiaSpec, SubspaceProjectors};
use nonholo_core::random;
use nonholo_core::veselova::VeselovaState;
use nonholo_core::Frame;

pub const EPSILONS: [f64; 4] = [-1.0, 0.5, 1.0, 2.0];

/// Random `(ω, e₁..e_k)` with a dense inertia; `orthonormal` picks the frame type.
pub fn elr_setup(seed: u64, n: usize, k: usize, orthonormal: bool) -> (ElrMultiplierState, InertiaSpec) {
    let mut rng = random::rng(seed);
    let spec = random::general_inertia(&mut rng, n).unwrap();
    let omega = random::alg_elem(&mut rng, n).unwrap();
    let frame = if orthonormal {
        random::orthonormal_frame(&mut rng, n, k).unwrap()
    } else {
        random::generic_frame(&mut rng, n, k).unwrap()
    };
    (ElrMultiplierState::new(omega, frame).unwrap(), spec)
}

/// Same as [`elr_setup`] with ω projected onto `𝒟`, so every `cᵢ = 0`.
pub fn elr_setup_c0(seed: u64, n: usize, k: usize) -> (ElrMultiplierState, InertiaSpec) {
    let (s, spec) = elr_setup(seed, n, k, true);
    let proj = nonholo_core::liealg::subspace_projectors(&s.frames_h).unwrap();
    let omega = SubspaceProjectors::pr_d(&proj, &s.omega);
    (ElrMultiplierState::new(omega, s.frames_h.clone()).unwrap(), spec)
}

pub fn elr_momentum_setup(seed: u64, n: usize, k: usize) -> (ElrMultiplierState, ElrMomentumState, InertiaSpec) {
    let (s, spec) = elr_setup(seed, n, k, true);
    let m = momentum_of(&s, &spec).unwrap();
    (s, m, spec)
}

pub fn veselova_setup(seed: u64, n: usize, r: usize) -> (VeselovaState, InertiaSpec) {
    let mut rng = random::rng(seed);
    let a = random::wedge_parameters(&mut rng, n, 0.5, 2.0);
    let spec = InertiaSpec::wedge_products(&a).unwrap();
    let state = VeselovaState::new(random::alg_elem(&mut rng, n).unwrap(), random::stiefel(&mut rng, n, r).unwrap()).unwrap();
    (state, spec)
}

pub fn elpr_setup(seed: u64, n: usize) -> (ElprState, InertiaSpec) {
    let mut rng = random::rng(seed);
    let spec = random::general_inertia(&mut rng, n).unwrap();
    let pi = random::symmetric_psd(&mut rng, algebra_dim(n), 0.5);
    let k = random::alg_elem(&mut rng, n).unwrap();
    (ElprState::new(k, pi, &spec).unwrap(), spec)
}

pub fn stiefel_setup(seed: u64, n: usize, r: usize) -> (LprStiefelState, LprStiefelParams) {
    let mut rng = random::rng(seed);
    let (a, d) = random::chaplygin_parameters(&mut rng, n);
    let params = LprStiefelParams::new(&a, d).unwrap();
    let state = LprStiefelState::new(random::alg_elem(&mut rng, n).unwrap(), random::stiefel(&mut rng, n, r).unwrap()).unwrap();
    (state, params)
}

pub fn ball_state(seed: u64) -> BallState {
    let mut rng = random::rng(seed);
    let w = random::normal_vector(&mut rng, 3);
    let g = random::normal_vector(&mut rng, 3);
    let g = Vector3::new(g[0], g[1], g[2]).normalize();
    BallState::new(Vector3::new(w[0], w[1], w[2]), g).unwrap()
}

/// `max |vᵢ - v₀| / max(1, |v₀|)`.
pub fn relative_drift(values: &[f64]) -> f64 {
    let v0 = values[0];
    values.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max) / v0.abs().max(1.0)
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

pub fn frame_of(state: &ElrMultiplierState) -> &Frame {
    &state.frames_h
}
