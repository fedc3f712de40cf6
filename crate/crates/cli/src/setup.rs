use nalgebra::{DMatrix, DVector, Vector3};

use nonholo_core::ball3d::{BallParams, BallState, ChaplyginCoords, ChaplyginFlow, RubberFlow, RubberForm};
use nonholo_core::elpr::{ElprCoords, ElprFlow, ElprState, LprStiefelFlow, LprStiefelParams, LprStiefelState};
use nonholo_core::elr::{momentum_of, omega_of, ElrMomentumFlow, ElrMultiplierFlow, ElrMultiplierState};
use nonholo_core::liealg::{algebra_dim, orthonormal_complement};
use nonholo_core::random::{self, SeededRng};
use nonholo_core::systems::{System, SystemKind, SystemState};
use nonholo_core::veselova::VeselovaFlow;
use nonholo_core::veselova::VeselovaState;
use nonholo_core::{Epsilon, InertiaSpec};

use crate::config::{InertiaDesc, Initial, RunConfig};
use crate::error::CliError;

/// Parameters behind a built flow.
#[derive(Clone, Debug)]
pub enum Model {
    /// ε-LR; the multiplier-form state is kept for either chart.
    Elr { spec: InertiaSpec, state: ElrMultiplierState },
    Veselova { spec: InertiaSpec },
    /// ε-L+R: nothing beyond the flow is needed.
    Plain,
    Stiefel { params: LprStiefelParams },
    Ball { params: BallParams },
}

pub struct Built {
    pub flow: Box<dyn System>,
    pub x0: DVector<f64>,
    pub state: SystemState,
    pub model: Model,
    pub eps: Epsilon,
}

/// Seed of the random initial data, or `None` for explicit values.
pub fn base_seed(cfg: &RunConfig) -> Option<u64> {
    match cfg.initial {
        Initial::Random { seed } => Some(seed),
        Initial::Explicit { .. } => None,
    }
}

fn so_inertia(cfg: &RunConfig, rng: &mut SeededRng) -> Result<InertiaSpec, CliError> {
    let n = cfg.n;
    let spec = match &cfg.inertia {
        InertiaDesc::Identity => InertiaSpec::identity(n),
        InertiaDesc::Random if cfg.system == SystemKind::Veselova => {
            InertiaSpec::wedge_products(&random::wedge_parameters(rng, n, 0.5, 2.0))
        }
        InertiaDesc::Random => random::general_inertia(rng, n),
        InertiaDesc::Diag(v) => InertiaSpec::general(DMatrix::from_diagonal(&DVector::from_column_slice(v))),
        InertiaDesc::WedgeProducts(a) => InertiaSpec::wedge_products(a),
        InertiaDesc::General(rows) => {
            let big_n = rows.len();
            InertiaSpec::general(DMatrix::from_fn(big_n, big_n, |i, j| rows[i][j]))
        }
    };
    spec.map_err(|e| CliError::Config(format!("key `inertia`: {e}")))
}

fn ball_params(cfg: &RunConfig, eps: Epsilon, rng: &mut SeededRng) -> Result<BallParams, CliError> {
    let moments = match &cfg.inertia {
        InertiaDesc::Diag(m) => [m[0], m[1], m[2]],
        InertiaDesc::Random => std::array::from_fn(|_| random::uniform(rng, 0.5, 2.0)),
        _ => [1.0; 3],
    };
    BallParams::new(moments, cfg.d.expect("validated"), eps).map_err(|e| CliError::Config(format!("key `inertia`: {e}")))
}

fn explicit_values(cfg: &RunConfig, dim: usize) -> Option<Result<DVector<f64>, CliError>> {
    match &cfg.initial {
        Initial::Random { .. } => None,
        Initial::Explicit { values } if values.len() == dim => Some(Ok(DVector::from_column_slice(values))),
        Initial::Explicit { values } => Some(Err(CliError::Config(format!(
            "key `initial.explicit.values`: {} needs {dim} coordinates, got {}",
            cfg.system,
            values.len()
        )))),
    }
}

fn bad_initial(e: nonholo_core::Error) -> CliError {
    CliError::Config(format!("key `initial.explicit.values`: {e}"))
}

/// Builds the flow and initial state. The same seed drives random inertia
/// and random initial data.
pub fn build(cfg: &RunConfig, seed: u64) -> Result<Built, CliError> {
    let mut rng = random::rng(seed);
    let eps = Epsilon::new(cfg.epsilon).map_err(|e| CliError::Config(format!("key `epsilon`: {e}")))?;
    let n = cfg.n;
    let big_n = algebra_dim(n);
    let built = match cfg.system {
        SystemKind::ElrMultiplier | SystemKind::ElrMomentum => {
            let spec = so_inertia(cfg, &mut rng)?;
            let (mult, flow, x0): (ElrMultiplierState, Box<dyn System>, DVector<f64>) = match cfg.system {
                SystemKind::ElrMultiplier => {
                    let flow = ElrMultiplierFlow::new(spec.clone(), eps, cfg.k)?;
                    let (state, x0) = match explicit_values(cfg, big_n * (cfg.k + 1)) {
                        Some(x) => {
                            let x = x?;
                            (flow.state(&x).map_err(bad_initial)?, x)
                        }
                        None => {
                            let omega = random::alg_elem(&mut rng, n)?;
                            let s = ElrMultiplierState::new(omega, random::orthonormal_frame(&mut rng, n, cfg.k)?)?;
                            let x = s.to_flat();
                            (s, x)
                        }
                    };
                    (state, Box::new(flow), x0)
                }
                _ => {
                    let flow = ElrMomentumFlow::new(spec.clone(), eps, big_n - cfg.k)?;
                    let (mult, x0) = match explicit_values(cfg, big_n * (big_n - cfg.k + 1)) {
                        Some(x) => {
                            let x = x?;
                            let m = flow.state(&x).map_err(bad_initial)?;
                            let omega = omega_of(&m, &spec).map_err(bad_initial)?;
                            let h = orthonormal_complement(&m.frames_d).map_err(bad_initial)?;
                            (ElrMultiplierState::new(omega, h)?, x)
                        }
                        None => {
                            let omega = random::alg_elem(&mut rng, n)?;
                            let s = ElrMultiplierState::new(omega, random::orthonormal_frame(&mut rng, n, cfg.k)?)?;
                            let x = momentum_of(&s, &spec)?.to_flat();
                            (s, x)
                        }
                    };
                    (mult, Box::new(flow), x0)
                }
            };
            let state = match cfg.system {
                SystemKind::ElrMultiplier => SystemState::ElrMultiplier(mult.clone()),
                _ => SystemState::ElrMomentum(momentum_of(&mult, &spec)?),
            };
            Built {
                flow,
                x0,
                state,
                model: Model::Elr { spec, state: mult },
                eps,
            }
        }
        SystemKind::Veselova => {
            let spec = so_inertia(cfg, &mut rng)?;
            let flow = VeselovaFlow::new(spec.clone(), eps, cfg.r)?;
            let state = match explicit_values(cfg, big_n + n * cfg.r) {
                Some(x) => flow.state(&x?).map_err(bad_initial)?,
                None => VeselovaState::new(random::alg_elem(&mut rng, n)?, random::stiefel(&mut rng, n, cfg.r)?)?,
            };
            Built {
                x0: state.to_flat(),
                state: SystemState::Veselova(state),
                flow: Box::new(flow),
                model: Model::Veselova { spec },
                eps,
            }
        }
        SystemKind::Elpr => {
            let spec = so_inertia(cfg, &mut rng)?;
            let flow = ElprFlow::new(spec.clone(), eps, ElprCoords::Momentum);
            let state = match explicit_values(cfg, big_n + big_n * (big_n + 1) / 2) {
                Some(x) => ElprState::from_flat(n, &x?, &spec).map_err(bad_initial)?,
                None => {
                    let k = random::alg_elem(&mut rng, n)?;
                    ElprState::new(k, random::symmetric_psd(&mut rng, big_n, 0.5), &spec)?
                }
            };
            Built {
                x0: flow.flatten(&state)?,
                state: SystemState::Elpr(state),
                flow: Box::new(flow),
                model: Model::Plain,
                eps,
            }
        }
        SystemKind::LprStiefel => {
            let params = match &cfg.inertia {
                InertiaDesc::WedgeProducts(a) => LprStiefelParams::new(a, cfg.d.expect("validated")),
                _ => {
                    let (a, d) = random::chaplygin_parameters(&mut rng, n);
                    LprStiefelParams::new(&a, d)
                }
            }
            .map_err(|e| CliError::Config(format!("key `inertia`: {e}")))?;
            let flow = LprStiefelFlow::new(params.clone(), eps, cfg.r)?;
            let state = match explicit_values(cfg, big_n + n * cfg.r) {
                Some(x) => flow.state(&x?).map_err(bad_initial)?,
                None => LprStiefelState::new(random::alg_elem(&mut rng, n)?, random::stiefel(&mut rng, n, cfg.r)?)?,
            };
            Built {
                x0: state.to_flat(),
                state: SystemState::LprStiefel(state),
                flow: Box::new(flow),
                model: Model::Stiefel { params },
                eps,
            }
        }
        SystemKind::BallChaplygin | SystemKind::BallRubber => {
            let params = ball_params(cfg, eps, &mut rng)?;
            let chaplygin = cfg.system == SystemKind::BallChaplygin;
            let flow: Box<dyn System> = if chaplygin {
                Box::new(ChaplyginFlow::new(params, ChaplyginCoords::Momentum))
            } else {
                Box::new(RubberFlow::new(params, RubberForm::Multiplier))
            };
            let state = match explicit_values(cfg, 6) {
                Some(x) => {
                    let x = x?;
                    let omega = if chaplygin {
                        ChaplyginFlow::new(params, ChaplyginCoords::Momentum).omega(&x)
                    } else {
                        RubberFlow::new(params, RubberForm::Multiplier).omega(&x)
                    }
                    .map_err(bad_initial)?;
                    BallState::new(omega, Vector3::new(x[3], x[4], x[5])).map_err(bad_initial)?
                }
                None => random_ball_state(&mut rng)?,
            };
            let state = if chaplygin {
                SystemState::BallChaplygin(state)
            } else {
                SystemState::BallRubber(state)
            };
            Built {
                x0: flow.flatten(&state)?,
                state,
                flow,
                model: Model::Ball { params },
                eps,
            }
        }
    };
    Ok(built)
}

fn random_ball_state(rng: &mut SeededRng) -> Result<BallState, CliError> {
    let w = random::normal_vector(rng, 3);
    let g = random::normal_vector(rng, 3);
    let g = Vector3::new(g[0], g[1], g[2]).normalize();
    Ok(BallState::new(Vector3::new(w[0], w[1], w[2]), g)?)
}
