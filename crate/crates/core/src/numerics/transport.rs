use nalgebra::{DMatrix, DVector};

use super::fd::{fd_jvp, DEFAULT_H_SCALE};
use super::integrate::{IntegratorConfig, Stepper};
use super::{renormalize, FieldOf, FlatState, Flow};
use crate::{Error, Result};

/// Constraint defect beyond which transport aborts.
pub const CONSTRAINT_ABORT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSample {
    pub t: f64,
    pub log_density: f64,
    /// `log` of the factor by which the flow has scaled tangent volume since `t = 0`.
    pub log_tangent_volume: f64,
    /// `log μ(x(t)) + log vol(t) - log μ(x(0))`; zero for an invariant density.
    pub residual: f64,
    pub constraint_defect: f64,
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub samples: Vec<TransportSample>,
    pub states: Vec<DVector<f64>>,
    pub tangent_dim: usize,
}

impl TransportResult {
    pub fn max_abs_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual.abs()).fold(0.0, f64::max)
    }

    pub fn max_constraint_defect(&self) -> f64 {
        self.samples.iter().map(|s| s.constraint_defect).fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

fn unpack(z: &DVector<f64>, d: usize, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let x = DVector::from_column_slice(&z.as_slice()[..d]);
    let b = DMatrix::from_column_slice(d, k, &z.as_slice()[d..]);
    (x, b)
}

fn pack(x: &DVector<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + b.len());
    z.as_mut_slice()[..x.len()].copy_from_slice(x.as_slice());
    z.as_mut_slice()[x.len()..].copy_from_slice(b.as_slice());
    z
}

/// Follows the flow from `x0` while transporting an orthonormal basis of the
/// tangent space of the phase space by the linearized flow. At every sample
/// the transported basis is projected on the current tangent space, the log of
/// its volume is accumulated and the basis is reset.
///
/// The linearization uses central-difference Jacobian–vector products, so the
/// residual is limited by the finite-difference step (about `1e-9` per unit
/// time on well-scaled problems).
pub fn tangent_volume_transport(
    flow: &dyn Flow,
    log_density: &dyn Fn(&DVector<f64>) -> Result<f64>,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<TransportResult> {
    cfg.validate()?;
    let chart = flow.chart();
    let d = x0.len();
    if chart.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            found: d,
        });
    }
    let q0 = flow.tangent_basis(x0)?;
    let k = q0.ncols();
    let field = FieldOf(flow);

    let augmented = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, b) = unpack(z, d, k);
        let fx = flow.field(&x)?;
        let mut out = DVector::zeros(z.len());
        out.as_mut_slice()[..d].copy_from_slice(fx.as_slice());
        for j in 0..k {
            let col = b.column(j).into_owned();
            let jv = fd_jvp(&field, &x, &col, DEFAULT_H_SCALE)?;
            out.as_mut_slice()[d + j * d..d + (j + 1) * d].copy_from_slice(jv.as_slice());
        }
        Ok(out)
    };
    let renorm = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, b) = unpack(z, d, k);
        let x = renormalize(&FlatState::new(x, chart.clone())?)?.coords;
        Ok(pack(&x, &b))
    };
    let renorm_ref: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>> = &renorm;
    let mut stepper = Stepper::new(&augmented, cfg, cfg.renormalize_every.map(|_| renorm_ref));

    let times = cfg.sample_times();
    let log_mu0 = log_density(x0)?;
    let defect0 = flow.constraint_defect(x0);
    let mut samples = vec![TransportSample {
        t: times[0],
        log_density: log_mu0,
        log_tangent_volume: 0.0,
        residual: 0.0,
        constraint_defect: defect0,
    }];
    let mut states = vec![x0.clone()];
    let mut z = pack(x0, &q0);
    let mut log_vol = 0.0;
    for w in times.windows(2) {
        let t = w[1];
        z = stepper.advance(z, w[0], t).map_err(|e| {
            if e.is_numerical() {
                e
            } else {
                Error::Integration {
                    t,
                    source: Box::new(e),
                }
            }
        })?;
        let (x, b) = unpack(&z, d, k);
        let defect = flow.constraint_defect(&x);
        if !(defect <= CONSTRAINT_ABORT) {
            return Err(Error::ConstraintDrift { t, defect });
        }
        let q = flow.tangent_basis(&x)?;
        if q.ncols() != k {
            return Err(Error::DegenerateBasis(format!(
                "tangent dimension changed from {k} to {} at t = {t}",
                q.ncols()
            )));
        }
        if k > 0 {
            let det = (q.transpose() * &b).determinant();
            if !(det.abs() > 0.0) || !det.is_finite() {
                return Err(Error::DegenerateBasis(format!("transported volume {det} at t = {t}")));
            }
            log_vol += det.abs().ln();
        }
        let log_mu = log_density(&x)?;
        samples.push(TransportSample {
            t,
            log_density: log_mu,
            log_tangent_volume: log_vol,
            residual: log_mu + log_vol - log_mu0,
            constraint_defect: defect,
        });
        states.push(x.clone());
        z = pack(&x, &q);
        stepper.invalidate();
    }
    Ok(TransportResult {
        samples,
        states,
        tangent_dim: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::orthonormal_span;
    use crate::numerics::{BlockKind, Chart};
    use nalgebra::Vector3;

    struct Dilation;

    impl Flow for Dilation {
        fn chart(&self) -> Chart {
            Chart::new().with("x", BlockKind::Vector { len: 1 })
        }
        fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(x.clone())
        }
    }

    /// Flows on the unit sphere in ℝ³.
    struct Sphere {
        rotation: bool,
        defect_scale: f64,
    }

    impl Flow for Sphere {
        fn chart(&self) -> Chart {
            Chart::new().with("g", BlockKind::UnitVector { len: 3 })
        }
        fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            let v = Vector3::new(x[0], x[1], x[2]);
            let out = if self.rotation {
                Vector3::new(0.3, -1.0, 0.5).cross(&v)
            } else {
                // gradient of the height function
                Vector3::z() - v * v.z
            };
            Ok(DVector::from_column_slice(out.as_slice()))
        }
        fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
            let v = Vector3::new(x[0], x[1], x[2]);
            let mut g = DMatrix::zeros(3, 3);
            for (j, e) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
                g.set_column(j, &DVector::from_column_slice(e.cross(&v).as_slice()));
            }
            Ok(orthonormal_span(&g, 1e-8))
        }
        fn constraint_defect(&self, x: &DVector<f64>) -> f64 {
            self.defect_scale * (x.norm() - 1.0).abs()
        }
    }

    fn zero(_: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn unit() -> DVector<f64> {
        DVector::from_vec(vec![0.6, 0.0, 0.8])
    }

    #[test]
    fn dilation_scales_volume_exponentially() {
        let cfg = IntegratorConfig::adaptive(1.0, 5, 1e-11);
        let x0 = DVector::from_vec(vec![2.0]);
        let flat = tangent_volume_transport(&Dilation, &zero, &x0, &cfg).unwrap();
        for s in &flat.samples {
            assert!((s.log_tangent_volume - s.t).abs() < 1e-8, "{s:?}");
        }
        let inv = |x: &DVector<f64>| -> Result<f64> { Ok(-x[0].ln()) };
        let res = tangent_volume_transport(&Dilation, &inv, &x0, &cfg).unwrap();
        assert!(res.max_abs_residual() < 1e-8);
    }

    #[test]
    fn rotation_preserves_sphere_area() {
        let flow = Sphere {
            rotation: true,
            defect_scale: 1.0,
        };
        let cfg = IntegratorConfig::adaptive(5.0, 10, 1e-11);
        let res = tangent_volume_transport(&flow, &zero, &unit(), &cfg).unwrap();
        assert_eq!(res.tangent_dim, 2);
        assert!(res.max_abs_residual() < 1e-7, "{}", res.max_abs_residual());
        assert!(res.max_constraint_defect() < 1e-8);
    }

    #[test]
    fn gradient_flow_contracts_sphere_area() {
        let flow = Sphere {
            rotation: false,
            defect_scale: 1.0,
        };
        let cfg = IntegratorConfig::adaptive(2.0, 4, 1e-11);
        let res = tangent_volume_transport(&flow, &zero, &unit(), &cfg).unwrap();
        assert!(res.samples.last().unwrap().log_tangent_volume < -0.5);
        // the area element along the height gradient scales by (1 - z²)/(1 - z0²)
        let z0: f64 = 0.8;
        let log_mu = |x: &DVector<f64>| -> Result<f64> { Ok(-(1.0 - x[2] * x[2]).ln()) };
        let res = tangent_volume_transport(&flow, &log_mu, &unit(), &cfg).unwrap();
        assert!(res.max_abs_residual() < 1e-7, "{}", res.max_abs_residual());
        assert!(res.samples[0].log_density == -(1.0 - z0 * z0).ln());
    }

    #[test]
    fn drift_aborts() {
        let flow = Sphere {
            rotation: true,
            defect_scale: 1e12,
        };
        let cfg = IntegratorConfig::adaptive(1.0, 2, 1e-6);
        let err = tangent_volume_transport(&flow, &zero, &unit(), &cfg).unwrap_err();
        assert!(matches!(err, Error::ConstraintDrift { .. }));
    }

    #[test]
    fn chart_mismatch_is_rejected() {
        let cfg = IntegratorConfig::adaptive(1.0, 2, 1e-6);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        assert!(tangent_volume_transport(&Dilation, &zero, &x0, &cfg).is_err());
    }
}
