//! A uniform view over all flows: names, states, densities and integrals.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::ball3d::{BallState, ChaplyginFlow, RubberFlow};
use crate::elpr::{ElprFlow, ElprState, LprStiefelFlow, LprStiefelState};
use crate::elr::{first_integrals_elr, ElrMomentumFlow, ElrMomentumState, ElrMultiplierFlow, ElrMultiplierState};
use crate::numerics::Flow;
use crate::veselova::{VeselovaFlow, VeselovaState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    ElrMultiplier,
    ElrMomentum,
    Veselova,
    Elpr,
    LprStiefel,
    BallChaplygin,
    BallRubber,
}

impl SystemKind {
    pub const ALL: [SystemKind; 7] = [
        SystemKind::ElrMultiplier,
        SystemKind::ElrMomentum,
        SystemKind::Veselova,
        SystemKind::Elpr,
        SystemKind::LprStiefel,
        SystemKind::BallChaplygin,
        SystemKind::BallRubber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::ElrMultiplier => "elr_multiplier",
            SystemKind::ElrMomentum => "elr_momentum",
            SystemKind::Veselova => "veselova",
            SystemKind::Elpr => "elpr",
            SystemKind::LprStiefel => "lpr_stiefel",
            SystemKind::BallChaplygin => "ball_chaplygin",
            SystemKind::BallRubber => "ball_rubber",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown system '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemState {
    ElrMultiplier(ElrMultiplierState),
    ElrMomentum(ElrMomentumState),
    Veselova(VeselovaState),
    Elpr(ElprState),
    LprStiefel(LprStiefelState),
    BallChaplygin(BallState),
    BallRubber(BallState),
}

impl SystemState {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemState::ElrMultiplier(_) => SystemKind::ElrMultiplier,
            SystemState::ElrMomentum(_) => SystemKind::ElrMomentum,
            SystemState::Veselova(_) => SystemKind::Veselova,
            SystemState::Elpr(_) => SystemKind::Elpr,
            SystemState::LprStiefel(_) => SystemKind::LprStiefel,
            SystemState::BallChaplygin(_) => SystemKind::BallChaplygin,
            SystemState::BallRubber(_) => SystemKind::BallRubber,
        }
    }
}

/// First integrals at one state. `phi` holds the constraint constants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Integrals {
    pub h: Option<f64>,
    pub f: Option<f64>,
    pub phi: Vec<f64>,
}

pub trait System: Flow {
    fn kind(&self) -> SystemKind;

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>>;

    /// Log of the invariant density in this flow's chart.
    fn log_density(&self, x: &DVector<f64>) -> Result<f64>;

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals>;

    /// True when the phase space is open in the chart, so the ambient
    /// Liouville residual applies.
    fn is_ambient(&self) -> bool {
        false
    }
}

fn mismatch(expected: SystemKind, state: &SystemState) -> Error {
    Error::Parameter(format!("expected a {expected} state, got {}", state.kind()))
}

impl System for ElrMultiplierFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::ElrMultiplier
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::ElrMultiplier(s) => Ok(s.to_flat()),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        ElrMultiplierFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        let i = first_integrals_elr(&self.state(x)?, &self.spec)?;
        Ok(Integrals {
            h: Some(i.h),
            f: Some(i.f),
            phi: i.phi,
        })
    }

    fn is_ambient(&self) -> bool {
        true
    }
}

impl System for ElrMomentumFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::ElrMomentum
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::ElrMomentum(s) => Ok(s.to_flat()),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        ElrMomentumFlow::log_density(self, x)
    }

    /// `H` and `F`; `φ` needs the `ℋ` frame, which this chart does not carry.
    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        let omega = self.omega(x)?;
        let iw = self.spec.apply(&omega);
        let h = 0.5 * iw.dot(&omega);
        let big_n = self.spec.algebra_dim();
        let w = omega.wedge_coords();
        let mut pr_h = w.clone();
        for j in 0..self.rank_d {
            let d = DVector::from_column_slice(&x.as_slice()[big_n * (j + 1)..big_n * (j + 2)]);
            pr_h -= &d * d.dot(&w);
        }
        let f = h - pr_h.dot(&iw.wedge_coords());
        Ok(Integrals {
            h: Some(h),
            f: Some(f),
            phi: Vec::new(),
        })
    }
}

impl System for VeselovaFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::Veselova
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::Veselova(s) => Ok(s.to_flat()),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        VeselovaFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        let omega = self.omega(x)?;
        Ok(Integrals {
            h: Some(0.5 * self.spec.apply(&omega).dot(&omega)),
            ..Integrals::default()
        })
    }
}

impl System for ElprFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::Elpr
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::Elpr(s) => ElprFlow::flatten(self, s),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        ElprFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        Ok(Integrals {
            h: Some(self.energy(x)?),
            ..Integrals::default()
        })
    }

    fn is_ambient(&self) -> bool {
        true
    }
}

impl System for LprStiefelFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::LprStiefel
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::LprStiefel(s) => Ok(s.to_flat()),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        LprStiefelFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        Ok(Integrals {
            h: Some(self.energy(x)?),
            ..Integrals::default()
        })
    }
}

impl System for ChaplyginFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::BallChaplygin
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::BallChaplygin(s) => Ok(ChaplyginFlow::flatten(self, s)),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        ChaplyginFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        Ok(Integrals {
            h: Some(self.energy(x)?),
            ..Integrals::default()
        })
    }
}

impl System for RubberFlow {
    fn kind(&self) -> SystemKind {
        SystemKind::BallRubber
    }

    fn flatten(&self, state: &SystemState) -> Result<DVector<f64>> {
        match state {
            SystemState::BallRubber(s) => Ok(RubberFlow::flatten(self, s)),
            other => Err(mismatch(self.kind(), other)),
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        RubberFlow::log_density(self, x)
    }

    fn integrals(&self, x: &DVector<f64>) -> Result<Integrals> {
        let (phi, h) = RubberFlow::integrals(self, x)?;
        Ok(Integrals {
            h: Some(h),
            f: None,
            phi: vec![phi],
        })
    }
}
