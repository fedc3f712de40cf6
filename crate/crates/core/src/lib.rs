//! Modified (ε-)LR and (ε-)L+R nonholonomic systems on `so(n)`, the
//! Veselova and Stiefel-variety specializations, the three-dimensional
//! Chaplygin ball oracles, and the numerical machinery that checks their
//! invariant measures and first integrals.
//!
//! The crate is organised bottom-up:
//!
//! * [`liealg`]: the Lie algebra `so(n)` with its wedge basis, inertia
//!   operators, frames, projectors and Gram determinants.
//! * [`elr`]: the ε-LR system in multiplier and momentum form.
//! * [`veselova`]: the ε-modified Veselova problem on `so(n) × V(n,r)`.
//! * [`elpr`]: the ε-L+R system on `so(n) × Sym(so(n))` and on `so(n) × V(n,r)`.
//! * [`ball3d`]: cross-product implementations of the rolling balls.
//! * [`numerics`]: integrators, finite differences, Liouville residuals and
//!   tangent-volume transport.
//! * [`systems`]: flat-coordinate adapters that make every system usable by
//!   [`numerics`].

pub mod ball3d;
pub mod elpr;
pub mod elr;
mod error;
pub mod liealg;
pub mod numerics;
pub mod random;
pub mod systems;
pub mod veselova;

pub use error::{Error, Result};
pub use liealg::{AlgElem, Frame, GramMode, InertiaSpec, StiefelPoint};
pub use elr::Epsilon;
pub use numerics::{FlatState, Flow, IntegratorConfig, Method, TransportResult};

