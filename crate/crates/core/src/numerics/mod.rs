//! ODE integration, finite differences, Liouville residuals and
//! tangent-volume transport.
//!
//! Everything here works on flat coordinate vectors. Vector fields are any
//! `Fn(&DVector<f64>) -> Result<DVector<f64>>`; constrained systems also
//! implement [`Flow`] so that transport can ask for the tangent space of the
//! constraint manifold at every sample.

mod chart;
mod fd;
mod integrate;
mod transport;

pub use chart::{renormalize, skew_symmetrize, BlockKind, Chart, ChartBlock, FlatState};
pub(crate) use chart::{read_sym_upper, write_sym_upper};
pub use fd::{
    fd_directional, fd_divergence, fd_jacobian, fd_jvp, liouville_residual_ambient, DEFAULT_H_SCALE,
};
pub use integrate::{integrate, integrate_observed, rk4_step, IntegratorConfig, Method, Trajectory};
pub use transport::{tangent_volume_transport, TransportResult, TransportSample, CONSTRAINT_ABORT};

use nalgebra::{DMatrix, DVector};

use crate::Result;

/// An autonomous vector field on flat coordinates.
pub trait VectorField {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> VectorField for F
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self(x)
    }
}

/// A vector field together with the manifold it lives on.
pub trait Flow: Sync {
    fn chart(&self) -> Chart;

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Orthonormal basis (columns) of the tangent space of the phase space at
    /// `x`. Open subsets of the ambient chart use the identity.
    fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = x.len();
        Ok(DMatrix::identity(d, d))
    }

    /// Distance of `x` from the constraint manifold (0 for ambient systems).
    fn constraint_defect(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
}

/// Adapter so a [`Flow`] can be passed wherever a [`VectorField`] is expected.
pub struct FieldOf<'a, F: ?Sized>(pub &'a F);

impl<F: Flow + ?Sized> VectorField for FieldOf<'_, F> {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.0.field(x)
    }
}
