use nalgebra::DVector;

use super::VectorField;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    Rk4Fixed,
    /// Dormand–Prince 5(4) with local error control.
    EmbeddedAdaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step for [`Method::Rk4Fixed`].
    pub dt: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_end: f64,
    /// Number of equal output intervals on `[0, t_end]`.
    pub samples: usize,
    /// Renormalize the state every this many accepted steps. Off by default
    /// and never used while verifying measures.
    pub renormalize_every: Option<usize>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::EmbeddedAdaptive,
            dt: 1e-3,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            t_end: 10.0,
            samples: 100,
            renormalize_every: None,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(t_end: f64, samples: usize, tol: f64) -> Self {
        Self {
            t_end,
            samples,
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn rk4(t_end: f64, samples: usize, dt: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt,
            t_end,
            samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Parameter(format!("t_end = {} must be finite and >= 0", self.t_end)));
        }
        match self.method {
            Method::Rk4Fixed if !(self.dt > 0.0 && self.dt.is_finite()) => {
                return Err(Error::Parameter(format!("dt = {} must be positive", self.dt)));
            }
            Method::EmbeddedAdaptive if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) => {
                return Err(Error::Parameter("tolerances must be positive".into()));
            }
            _ => {}
        }
        if self.t_end > 0.0 && self.samples == 0 {
            return Err(Error::Parameter("samples must be >= 1 when t_end > 0".into()));
        }
        if self.renormalize_every == Some(0) {
            return Err(Error::Parameter("renormalize_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        if self.t_end == 0.0 || self.samples == 0 {
            return vec![0.0];
        }
        (0..=self.samples)
            .map(|i| self.t_end * i as f64 / self.samples as f64)
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

fn eval_at(field: &dyn VectorField, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    field.eval(x).map_err(|e| match e {
        e @ Error::Integration { .. } => e,
        other => Error::Integration {
            t,
            source: Box::new(other),
        },
    })
}

/// One classical RK4 step.
pub fn rk4_step<F: VectorField + ?Sized>(field: &F, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt = {dt} must be positive")));
    }
    let k1 = field.eval(x)?;
    let k2 = field.eval(&(x + &k1 * (0.5 * dt)))?;
    let k3 = field.eval(&(x + &k2 * (0.5 * dt)))?;
    let k4 = field.eval(&(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Advances a state between output times, keeping the adaptive step
/// estimate across calls.
pub(crate) struct Stepper<'a> {
    field: &'a dyn VectorField,
    cfg: &'a IntegratorConfig,
    renorm: Option<&'a dyn Fn(&DVector<f64>) -> Result<DVector<f64>>>,
    h: Option<f64>,
    steps: usize,
    fsal: Option<DVector<f64>>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        field: &'a dyn VectorField,
        cfg: &'a IntegratorConfig,
        renorm: Option<&'a dyn Fn(&DVector<f64>) -> Result<DVector<f64>>>,
    ) -> Self {
        Self {
            field,
            cfg,
            renorm,
            h: None,
            steps: 0,
            fsal: None,
        }
    }

    /// Counts an accepted step and applies renormalization when due. The flag
    /// tells whether the state was modified.
    fn after_step(&mut self, y: DVector<f64>, t: f64, h: f64) -> Result<(DVector<f64>, bool)> {
        self.steps += 1;
        if self.steps > self.cfg.max_steps {
            return Err(Error::Stiffness { t, h });
        }
        match (self.renorm, self.cfg.renormalize_every) {
            (Some(renorm), Some(every)) if self.steps % every == 0 => Ok((renorm(&y)?, true)),
            _ => Ok((y, false)),
        }
    }

    /// Drops the cached derivative after the caller edited the state.
    pub(crate) fn invalidate(&mut self) {
        self.fsal = None;
    }

    pub(crate) fn advance(&mut self, y: DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        if t1 <= t0 {
            return Ok(y);
        }
        match self.cfg.method {
            Method::Rk4Fixed => self.advance_rk4(y, t0, t1),
            Method::EmbeddedAdaptive => self.advance_dp5(y, t0, t1),
        }
    }

    fn advance_rk4(&mut self, mut y: DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let span = t1 - t0;
        let n = (span / self.cfg.dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for i in 0..n {
            let t = t0 + i as f64 * h;
            y = rk4_step(self.field, &y, h).map_err(|e| Error::Integration {
                t,
                source: Box::new(e),
            })?;
            y = self.after_step(y, t + h, h)?.0;
        }
        Ok(y)
    }

    fn error_norm(&self, y: &DVector<f64>, y_new: &DVector<f64>, err: &DVector<f64>) -> f64 {
        let cfg = self.cfg;
        let sum: f64 = err
            .iter()
            .zip(y.iter().zip(y_new.iter()))
            .map(|(e, (a, b))| {
                let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (sum / err.len().max(1) as f64).sqrt()
    }

    fn initial_step(&self, y: &DVector<f64>, f0: &DVector<f64>, t0: f64, span: f64) -> Result<f64> {
        let cfg = self.cfg;
        let scale = |v: &DVector<f64>| {
            let s: f64 = v
                .iter()
                .zip(y.iter())
                .map(|(vi, yi)| (vi / (cfg.abs_tol + cfg.rel_tol * yi.abs())).powi(2))
                .sum();
            (s / y.len().max(1) as f64).sqrt()
        };
        let d0 = scale(y);
        let d1 = scale(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1 = y + f0 * h0;
        let f1 = eval_at(self.field, t0 + h0, &y1)?;
        let d2 = scale(&(f1 - f0)) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    fn advance_dp5(&mut self, mut y: DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let mut t = t0;
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        let mut f0 = match self.fsal.take() {
            Some(f) => f,
            None => eval_at(self.field, t, &y)?,
        };
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(&y, &f0, t0, t1 - t0)?,
        };
        let mut rejected = false;
        while t < t1 {
            let remaining = t1 - t;
            let clipped = h >= remaining;
            let step = if clipped { remaining } else { h };
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Stiffness { t, h: step });
            }
            k.clear();
            k.push(f0.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        ys.axpy(step * a, kj, 1.0);
                    }
                }
                k.push(eval_at(self.field, t + C[s] * step, &ys)?);
            }
            let mut y_new = y.clone();
            for (j, kj) in k.iter().enumerate().take(6) {
                let b = A[6][j];
                if b != 0.0 {
                    y_new.axpy(step * b, kj, 1.0);
                }
            }
            let mut err = DVector::zeros(y.len());
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err.axpy(step * E[j], kj, 1.0);
                }
            }
            let en = self.error_norm(&y, &y_new, &err);
            if !en.is_finite() {
                h = step * 0.2;
                rejected = true;
                continue;
            }
            if en <= 1.0 {
                t = if clipped { t1 } else { t + step };
                let f_new = k.pop().expect("seven stages");
                let (y_next, modified) = self.after_step(y_new, t, step)?;
                y = y_next;
                f0 = if modified { eval_at(self.field, t, &y)? } else { f_new };
                let mut factor = 0.9 * en.max(1e-10).powf(-0.2);
                factor = factor.clamp(0.2, 5.0);
                if rejected {
                    factor = factor.min(1.0);
                }
                // a clipped step says nothing about the natural step size
                if !clipped || step * factor > h {
                    h = step * factor;
                }
                rejected = false;
            } else {
                let factor = (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
                h = step * factor;
                rejected = true;
            }
        }
        self.h = Some(h);
        self.fsal = Some(f0);
        Ok(y)
    }
}

/// Integrates `field` from `x0`, returning the states at
/// [`IntegratorConfig::sample_times`].
pub fn integrate(field: &dyn VectorField, x0: &DVector<f64>, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_observed(field, x0, cfg, None, &mut |_, _| Ok(()))
}

/// Like [`integrate`], with an optional renormalization map (applied every
/// `cfg.renormalize_every` steps) and an observer called at each sample.
pub fn integrate_observed(
    field: &dyn VectorField,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
    renorm: Option<&dyn Fn(&DVector<f64>) -> Result<DVector<f64>>>,
    observer: &mut dyn FnMut(f64, &DVector<f64>) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let times = cfg.sample_times();
    let mut stepper = Stepper::new(field, cfg, renorm);
    let mut traj = Trajectory::default();
    let mut y = x0.clone();
    observer(times[0], &y)?;
    traj.times.push(times[0]);
    traj.states.push(y.clone());
    for w in times.windows(2) {
        y = stepper.advance(y, w[0], w[1])?;
        observer(w[1], &y)?;
        traj.times.push(w[1]);
        traj.states.push(y.clone());
    }
    Ok(traj)
}
