use nalgebra::{DMatrix, DVector};

use super::VectorField;
use crate::Result;

/// `(machine epsilon)^{1/3}`, the usual central-difference step.
pub const DEFAULT_H_SCALE: f64 = 6.055_454_452_393_343e-6;

fn coordinate_step(xi: f64, h_scale: f64) -> (f64, f64) {
    let h = h_scale * xi.abs().max(1.0);
    // use the representable increments actually taken
    let plus = xi + h;
    let minus = xi - h;
    (plus, minus)
}

/// Central-difference Jacobian with per-coordinate step
/// `h_scale · max(1, |xᵢ|)`.
pub fn fd_jacobian<F: VectorField + ?Sized>(field: &F, x: &DVector<f64>, h_scale: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut jac = DMatrix::zeros(0, d);
    let mut xp = x.clone();
    for i in 0..d {
        let (plus, minus) = coordinate_step(x[i], h_scale);
        xp[i] = plus;
        let fp = field.eval(&xp)?;
        xp[i] = minus;
        let fm = field.eval(&xp)?;
        xp[i] = x[i];
        if jac.nrows() == 0 {
            jac = DMatrix::zeros(fp.len(), d);
        }
        jac.set_column(i, &((fp - fm) / (plus - minus)));
    }
    Ok(jac)
}

/// Trace of the central-difference Jacobian (the divergence in the chart).
pub fn fd_divergence<F: VectorField + ?Sized>(field: &F, x: &DVector<f64>, h_scale: f64) -> Result<f64> {
    let mut xp = x.clone();
    let mut div = 0.0;
    for i in 0..x.len() {
        let (plus, minus) = coordinate_step(x[i], h_scale);
        xp[i] = plus;
        let fp = field.eval(&xp)?[i];
        xp[i] = minus;
        let fm = field.eval(&xp)?[i];
        xp[i] = x[i];
        div += (fp - fm) / (plus - minus);
    }
    Ok(div)
}

/// Central-difference Jacobian–vector product `J(x) v`.
pub fn fd_jvp<F: VectorField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    v: &DVector<f64>,
    h_scale: f64,
) -> Result<DVector<f64>> {
    let vmax = v.amax();
    if vmax == 0.0 {
        return Ok(DVector::zeros(x.len()));
    }
    let h = h_scale * x.amax().max(1.0) / vmax;
    let fp = field.eval(&(x + v * h))?;
    let fm = field.eval(&(x - v * h))?;
    Ok((fp - fm) / (2.0 * h))
}

/// Central-difference directional derivative of a scalar function.
pub fn fd_directional(
    f: &dyn Fn(&DVector<f64>) -> Result<f64>,
    x: &DVector<f64>,
    v: &DVector<f64>,
    h_scale: f64,
) -> Result<f64> {
    let vmax = v.amax();
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let h = h_scale * x.amax().max(1.0) / vmax;
    Ok((f(&(x + v * h))? - f(&(x - v * h))?) / (2.0 * h))
}

/// `div X + d/dt log μ` at `x`: the Liouville equation `μ div X + μ̇ = 0`
/// divided by `μ`, with the divergence taken as the trace of the
/// finite-difference Jacobian and `μ̇ = ∇(log μ)·X` by a central difference
/// along `X`.
pub fn liouville_residual_ambient<F: VectorField + ?Sized>(
    field: &F,
    log_density: &dyn Fn(&DVector<f64>) -> Result<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let div = fd_divergence(field, x, DEFAULT_H_SCALE)?;
    let fx = field.eval(x)?;
    let transport = fd_directional(log_density, x, &fx, DEFAULT_H_SCALE)?;
    Ok(div + transport)
}
