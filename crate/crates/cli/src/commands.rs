use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use nonholo_core::ball3d::{lift_chaplygin_to_elpr, lift_rubber_to_elr, lift_rubber_to_veselova, ChaplyginCoords, ChaplyginFlow, RubberFlow, RubberForm};
use nonholo_core::elpr::{pi_from_stiefel, pi_variants, ElprCoords, ElprFlow, LprStiefelFlow, PiKind};
use nonholo_core::elr::{momentum_of, ElrMomentumFlow, ElrMultiplierFlow};
use nonholo_core::liealg::{algebra_dim, hat, unhat};
use nonholo_core::numerics::{integrate, liouville_residual_ambient, tangent_volume_transport, FieldOf, Flow};
use nonholo_core::systems::{Integrals, System, SystemKind, SystemState};
use nonholo_core::veselova::{gamma_projector, omega_from_m, VeselovaFlow};
use nonholo_core::{Epsilon, StiefelPoint};

use crate::config::{Check, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, CsvOut};
use crate::setup::{base_seed, build, Built, Model};

pub const TOL_ENV: &str = "NONHOLO_DEFAULT_TOL";
pub const VERIFY_TOL: f64 = 1e-6;
pub const CROSSCHECK_TOL: f64 = 1e-8;
/// Crosschecks compare two integrations, so both run at least this tight.
pub const CROSSCHECK_INTEGRATOR_TOL: f64 = 1e-12;

/// Result of a command that ran to completion.
#[derive(Debug)]
pub struct Report {
    pub passed: bool,
    pub aborted: bool,
    pub summary: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> u8 {
        if self.aborted {
            4
        } else if !self.passed {
            2
        } else {
            0
        }
    }
}

/// Config value, then `NONHOLO_DEFAULT_TOL`, then `default`.
pub fn tolerance(cfg: &RunConfig, default: f64) -> Result<f64, CliError> {
    if let Some(t) = cfg.tolerance {
        return Ok(t);
    }
    match std::env::var(TOL_ENV) {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok(t),
            _ => Err(CliError::Config(format!("{TOL_ENV}: expected a positive number, got '{s}'"))),
        },
        Err(_) => Ok(default),
    }
}

fn density(flow: &dyn System, x: &DVector<f64>) -> Result<Option<f64>, CliError> {
    match flow.log_density(x) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numerical() => Err(e.into()),
        Err(_) => Ok(None),
    }
}

fn integral_columns(i0: &Integrals) -> Vec<String> {
    let mut cols = vec!["H".to_string()];
    if i0.f.is_some() {
        cols.push("F".into());
    }
    cols.extend((1..=i0.phi.len()).map(|i| format!("phi_{i}")));
    cols
}

fn integral_fields(i: &Integrals) -> Vec<String> {
    let mut out = vec![fmt_opt(i.h)];
    if i.f.is_some() {
        out.push(fmt_opt(i.f));
    }
    out.extend(i.phi.iter().map(|v| fmt_f64(*v)));
    out
}

pub fn simulate(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Report, CliError> {
    let seed = match (base_seed(cfg), seed) {
        (None, Some(_)) => return Err(CliError::Config("--seed conflicts with explicit initial values".into())),
        (None, None) => None,
        (Some(s), over) => Some(over.unwrap_or(s)),
    };
    let b = build(cfg, seed.unwrap_or(0))?;
    let flow = b.flow.as_ref();
    let i0 = flow.integrals(&b.x0)?;

    let (times, states, residuals): (Vec<f64>, Vec<DVector<f64>>, Vec<Option<f64>>) = match density(flow, &b.x0)? {
        Some(_) => {
            let log_mu = |y: &DVector<f64>| flow.log_density(y);
            let tr = tangent_volume_transport(flow, &log_mu, &b.x0, &cfg.integrator)?;
            let times = tr.samples.iter().map(|s| s.t).collect();
            let res = tr.samples.iter().map(|s| Some(s.residual)).collect();
            (times, tr.states, res)
        }
        None => {
            let traj = integrate(&FieldOf(flow), &b.x0, &cfg.integrator)?;
            let n = traj.states.len();
            (traj.times, traj.states, vec![None; n])
        }
    };

    let mut header = vec!["t".to_string()];
    header.extend(flow.chart().column_names());
    header.extend(integral_columns(&i0));
    header.extend(["log_density".to_string(), "residual".to_string()]);

    let name = match seed {
        Some(s) => format!("{}_seed{s}.csv", cfg.system),
        None => format!("{}_explicit.csv", cfg.system),
    };
    let path = out.unwrap_or(&cfg.out_dir).join(name);
    let mut csv = CsvOut::create(&path, &header)?;
    for ((t, x), res) in times.iter().zip(&states).zip(&residuals) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        row.extend(integral_fields(&flow.integrals(x)?));
        row.push(fmt_opt(density(flow, x)?));
        row.push(fmt_opt(*res));
        csv.row(&row)?;
    }
    let path = csv.finish()?;
    Ok(Report {
        summary: vec![format!("{} samples written to {}", states.len(), path.display())],
        passed: true,
        aborted: false,
    })
}

/// Which integrals are expected to be conserved for this state.
struct Conserved {
    h: bool,
    f: bool,
    phi: bool,
}

fn conserved(b: &Built) -> Result<Conserved, CliError> {
    Ok(match (&b.model, &b.state) {
        (Model::Elr { state, .. }, st) => {
            let scale = state.omega.norm().max(1.0);
            let c_zero = state.frames_h.elems().iter().all(|e| state.omega.dot(e).abs() <= 1e-12 * scale * e.norm());
            Conserved {
                h: c_zero,
                f: b.eps.value() == 1.0,
                phi: matches!(st, SystemState::ElrMultiplier(_)),
            }
        }
        (Model::Veselova { spec }, SystemState::Veselova(s)) => {
            let w = omega_from_m(s, spec)?.wedge_coords();
            let off = &w - gamma_projector(&s.u).pr_dr * &w;
            Conserved {
                h: off.amax() <= 1e-12 * w.amax().max(1.0),
                f: true,
                phi: true,
            }
        }
        // (ω⃗, γ⃗) plays the role of c
        (_, SystemState::BallRubber(s)) => Conserved {
            h: s.omega.dot(&s.gamma).abs() <= 1e-12 * s.omega.norm().max(1.0),
            f: true,
            phi: true,
        },
        _ => Conserved {
            h: true,
            f: true,
            phi: true,
        },
    })
}

fn drift(v: f64, v0: f64) -> f64 {
    (v - v0).abs() / v0.abs().max(1.0)
}

struct SeedRows {
    rows: Vec<Vec<String>>,
    worst: f64,
    aborted: bool,
    /// Integrals held to the tolerance.
    checked: Vec<&'static str>,
}

fn verify_seed(cfg: &RunConfig, check: Check, seed: Option<u64>) -> Result<SeedRows, CliError> {
    let b = build(cfg, seed.unwrap_or(0))?;
    let flow = b.flow.as_ref();
    let prefix = vec![
        cfg.system.to_string(),
        cfg.n.to_string(),
        cfg.r.to_string(),
        cfg.k.to_string(),
        fmt_f64(cfg.epsilon),
        seed.map(|s| s.to_string()).unwrap_or_default(),
    ];
    let width = match check {
        Check::Integrals => 3,
        _ => 1,
    };
    let abort = |e: nonholo_core::Error| -> Result<SeedRows, CliError> {
        if !e.is_numerical() {
            return Err(e.into());
        }
        let mut row = prefix.clone();
        row.push(String::new());
        row.extend(std::iter::repeat_n(String::new(), width));
        row.push(format!("abort: {e}"));
        Ok(SeedRows {
            rows: vec![row],
            worst: f64::INFINITY,
            aborted: true,
            checked: Vec::new(),
        })
    };
    let row = |t: f64, values: Vec<String>| {
        let mut row = prefix.clone();
        row.push(fmt_f64(t));
        row.extend(values);
        row.push("ok".into());
        row
    };

    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = Vec::new();
    match check {
        Check::Liouville => {
            let traj = match integrate(&FieldOf(flow), &b.x0, &cfg.integrator) {
                Ok(t) => t,
                Err(e) => return abort(e),
            };
            let log_mu = |y: &DVector<f64>| flow.log_density(y);
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let r = match liouville_residual_ambient(&FieldOf(flow), &log_mu, x) {
                    Ok(r) => r,
                    Err(e) => return abort(e),
                };
                worst = worst.max(r.abs());
                rows.push(row(*t, vec![fmt_f64(r)]));
            }
        }
        Check::Volume => {
            let log_mu = |y: &DVector<f64>| flow.log_density(y);
            let tr = match tangent_volume_transport(flow, &log_mu, &b.x0, &cfg.integrator) {
                Ok(t) => t,
                Err(e) => return abort(e),
            };
            for s in &tr.samples {
                worst = worst.max(s.residual.abs());
                rows.push(row(s.t, vec![fmt_f64(s.residual)]));
            }
        }
        Check::Integrals => {
            let expect = conserved(&b)?;
            let traj = match integrate(&FieldOf(flow), &b.x0, &cfg.integrator) {
                Ok(t) => t,
                Err(e) => return abort(e),
            };
            let i0 = flow.integrals(&b.x0)?;
            for (name, present, on) in [("H", i0.h.is_some(), expect.h), ("F", i0.f.is_some(), expect.f), ("phi", !i0.phi.is_empty(), expect.phi)] {
                if present && on {
                    checked.push(name);
                }
            }
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let i = flow.integrals(x)?;
                let dh = i.h.zip(i0.h).map(|(a, b)| drift(a, b));
                let df = i.f.zip(i0.f).map(|(a, b)| drift(a, b));
                let dphi = (!i.phi.is_empty())
                    .then(|| i.phi.iter().zip(&i0.phi).map(|(a, b)| drift(*a, *b)).fold(0.0, f64::max));
                for (d, on) in [(dh, expect.h), (df, expect.f), (dphi, expect.phi)] {
                    if let (Some(d), true) = (d, on) {
                        worst = worst.max(d);
                    }
                }
                rows.push(row(*t, vec![fmt_opt(dh), fmt_opt(df), fmt_opt(dphi)]));
            }
        }
        Check::Crosscheck => unreachable!("rejected by verify"),
    }
    Ok(SeedRows {
        rows,
        worst,
        aborted: false,
        checked,
    })
}

pub fn verify(cfg: &RunConfig, check: Option<Check>, seeds: usize, out: Option<&Path>) -> Result<Vec<Report>, CliError> {
    let checks: Vec<Check> = match check {
        Some(c) => vec![c],
        None => cfg.checks.iter().copied().filter(|c| *c != Check::Crosscheck).collect(),
    };
    if checks.is_empty() {
        return Err(CliError::Config("no check given (use --check or the `checks` key)".into()));
    }
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let seed_list: Vec<Option<u64>> = match base_seed(cfg) {
        Some(base) => (0..seeds as u64).map(|i| Some(base + i)).collect(),
        None if seeds == 1 => vec![None],
        None => return Err(CliError::Config("--seeds > 1 needs random initial data".into())),
    };
    let tol = tolerance(cfg, VERIFY_TOL)?;

    let mut reports = Vec::new();
    for check in checks {
        cfg.check_allowed(check)?;
        let per_seed: Vec<SeedRows> = seed_list
            .par_iter()
            .map(|s| verify_seed(cfg, check, *s))
            .collect::<Result<_, _>>()?;

        let mut header: Vec<String> = ["system", "n", "r", "k", "epsilon", "seed", "t"].map(String::from).to_vec();
        match check {
            Check::Integrals => header.extend(["drift_H", "drift_F", "drift_phi"].map(String::from)),
            _ => header.push("residual".into()),
        }
        header.push("status".into());
        let path = out.unwrap_or(&cfg.out_dir).join(format!("verify_{}_{check}.csv", cfg.system));
        let mut csv = CsvOut::create(&path, &header)?;
        for s in &per_seed {
            for row in &s.rows {
                csv.row(row)?;
            }
        }
        let path = csv.finish()?;

        let aborted = per_seed.iter().filter(|s| s.aborted).count();
        let worst = per_seed.iter().filter(|s| !s.aborted).map(|s| s.worst).fold(0.0, f64::max);
        let passed = aborted == 0 && worst <= tol;
        let mut summary = vec![format!(
            "{check} on {} ({} seeds): max {} {:.3e}, tolerance {tol:.1e}: {} ({})",
            cfg.system,
            seed_list.len(),
            if check == Check::Integrals { "drift" } else { "residual" },
            worst,
            if passed { "PASS" } else { "FAIL" },
            path.display()
        )];
        if check == Check::Integrals {
            let mut names: Vec<&str> = per_seed.iter().flat_map(|s| s.checked.iter().copied()).collect();
            names.sort_unstable();
            names.dedup();
            summary.push(if names.is_empty() {
                "no integral is conserved for this epsilon and these initial data; drifts are reported only".to_string()
            } else {
                format!("checked: {}", names.join(", "))
            });
        }
        if aborted > 0 {
            summary.push(format!("{aborted} seed(s) aborted; see the status column of {}", path.display()));
        }
        reports.push(Report {
            passed,
            aborted: aborted > 0,
            summary,
        });
    }
    Ok(reports)
}

fn parse_pair(pair: &str) -> Result<(SystemKind, SystemKind), CliError> {
    let (a, b) = pair
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("--pair expects <a:b>, got '{pair}'")))?;
    let parse = |s: &str| s.trim().parse::<SystemKind>().map_err(|e| CliError::Config(format!("--pair: {e}")));
    Ok((parse(a)?, parse(b)?))
}

/// Samples of two flows compared by `dev(x_a, x_b)`.
fn compare(
    fa: &dyn Flow,
    xa: &DVector<f64>,
    fb: &dyn Flow,
    xb: &DVector<f64>,
    cfg: &RunConfig,
    dev: &dyn Fn(&DVector<f64>, &DVector<f64>) -> nonholo_core::Result<f64>,
) -> nonholo_core::Result<(Vec<f64>, Vec<f64>)> {
    let mut icfg = cfg.integrator.clone();
    icfg.abs_tol = icfg.abs_tol.min(CROSSCHECK_INTEGRATOR_TOL);
    icfg.rel_tol = icfg.rel_tol.min(CROSSCHECK_INTEGRATOR_TOL);
    let a = integrate(&FieldOf(fa), xa, &icfg)?;
    let b = integrate(&FieldOf(fb), xb, &icfg)?;
    let devs = a.states.iter().zip(&b.states).map(|(p, q)| dev(p, q)).collect::<nonholo_core::Result<_>>()?;
    Ok((a.times, devs))
}

fn v3(x: &DVector<f64>, at: usize) -> Vector3<f64> {
    Vector3::new(x[at], x[at + 1], x[at + 2])
}

fn run_pair(cfg: &RunConfig, a: SystemKind, b: SystemKind) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    use SystemKind::*;
    let built = build(cfg, base_seed(cfg).unwrap_or(0))?;
    let eps: Epsilon = built.eps;
    let wrong_source = |src: SystemKind| CliError::Config(format!("--pair {a}:{b} needs `system` = {src}, got {}", cfg.system));
    let result = match ((a, b), &built.model, &built.state) {
        ((ElrMultiplier, ElrMomentum) | (ElrMomentum, ElrMultiplier), Model::Elr { spec, state }, _) => {
            let fm = ElrMultiplierFlow::new(spec.clone(), eps, state.rank_h())?;
            let m = momentum_of(state, spec)?;
            let fp = ElrMomentumFlow::new(spec.clone(), eps, m.rank_d())?;
            compare(&fm, &state.to_flat(), &fp, &m.to_flat(), cfg, &|p, q| {
                Ok((fm.state(p)?.omega.wedge_coords() - fp.omega(q)?.wedge_coords()).amax())
            })
        }
        ((ElrMultiplier, BallRubber) | (BallRubber, ElrMultiplier), Model::Ball { params }, SystemState::BallRubber(s)) => {
            let ball = RubberFlow::new(*params, RubberForm::Multiplier);
            let (lifted, spec) = lift_rubber_to_elr(s, params)?;
            let gen = ElrMultiplierFlow::new(spec, eps, 1)?;
            compare(&ball, &ball.flatten(s), &gen, &lifted.to_flat(), cfg, &|p, q| {
                let st = gen.state(q)?;
                let dw = (unhat(&st.omega)? - v3(p, 0)).amax();
                let dg = (unhat(&st.frames_h.elems()[0])? - v3(p, 3)).amax();
                Ok(dw.max(dg))
            })
        }
        ((Veselova, BallRubber) | (BallRubber, Veselova), Model::Ball { params }, SystemState::BallRubber(s)) => {
            let ball = RubberFlow::new(*params, RubberForm::Momentum);
            let (lifted, spec) = lift_rubber_to_veselova(s, params)?;
            let gen = VeselovaFlow::new(spec, eps, 1)?;
            compare(&ball, &ball.flatten(s), &gen, &lifted.to_flat(), cfg, &|p, q| {
                let dw = (ball.omega(p)? - unhat(&gen.omega(q)?)?).amax();
                Ok(dw.max((v3(p, 3) - v3(q, 3)).amax()))
            })
        }
        ((Elpr, BallChaplygin) | (BallChaplygin, Elpr), Model::Ball { params }, SystemState::BallChaplygin(s)) => {
            let ball = ChaplyginFlow::new(*params, ChaplyginCoords::Momentum);
            let (lifted, spec) = lift_chaplygin_to_elpr(s, params)?;
            let gen = ElprFlow::new(spec, eps, ElprCoords::Momentum);
            compare(&ball, &ball.flatten(s), &gen, &gen.flatten(&lifted)?, cfg, &|p, q| {
                let (k, _, pi) = gen.unpack(q)?;
                let dk = (unhat(&k)? - v3(p, 0)).amax();
                let expect = pi_variants(&hat(&v3(p, 3).normalize()), params.d, PiKind::DProj)?;
                Ok(dk.max((expect - pi).amax()))
            })
        }
        ((Elpr, LprStiefel) | (LprStiefel, Elpr), Model::Stiefel { params }, SystemState::LprStiefel(s)) => {
            let n = params.n();
            let big_n = algebra_dim(n);
            let stiefel = LprStiefelFlow::new(params.clone(), eps, s.rank())?;
            let gen = ElprFlow::new(params.spec.clone(), eps, ElprCoords::Momentum);
            compare(&stiefel, &s.to_flat(), &gen, &gen.flatten(&s.to_elpr(params)?)?, cfg, &|p, q| {
                let (k, _, pi) = gen.unpack(q)?;
                let dk = (p.rows(0, big_n) - k.wedge_coords()).amax();
                let u = StiefelPoint::project(&DMatrix::from_column_slice(n, s.rank(), &p.as_slice()[big_n..]))?;
                Ok(dk.max((pi_from_stiefel(&u, params.d)? - pi).amax()))
            })
        }
        ((Elpr, BallChaplygin) | (BallChaplygin, Elpr), ..) => return Err(wrong_source(BallChaplygin)),
        ((ElrMultiplier | Veselova, BallRubber) | (BallRubber, ElrMultiplier | Veselova), ..) => {
            return Err(wrong_source(BallRubber))
        }
        ((Elpr, LprStiefel) | (LprStiefel, Elpr), ..) => return Err(wrong_source(LprStiefel)),
        ((ElrMultiplier, ElrMomentum) | (ElrMomentum, ElrMultiplier), ..) => return Err(wrong_source(ElrMultiplier)),
        _ => {
            return Err(CliError::Config(format!(
                "unsupported pair {a}:{b}; supported: elr_multiplier:elr_momentum, ball_rubber:elr_multiplier, \
                 ball_rubber:veselova, ball_chaplygin:elpr, lpr_stiefel:elpr"
            )))
        }
    };
    Ok(result?)
}

pub fn crosscheck(cfg: &RunConfig, pair: &str, out: Option<&Path>) -> Result<Report, CliError> {
    let (a, b) = parse_pair(pair)?;
    if cfg.system != a && cfg.system != b {
        return Err(CliError::Config(format!("--pair {a}:{b} does not contain `system` = {}", cfg.system)));
    }
    let tol = tolerance(cfg, CROSSCHECK_TOL)?;
    let path = out.unwrap_or(&cfg.out_dir).join(format!("crosscheck_{a}_{b}.csv"));
    let (times, devs, abort) = match run_pair(cfg, a, b) {
        Ok((t, d)) => (t, d, None),
        Err(CliError::Numerical(e)) => (Vec::new(), Vec::new(), Some(e)),
        Err(e) => return Err(e),
    };
    let mut csv = CsvOut::create(&path, &["t", "deviation", "status"].map(String::from))?;
    for (t, d) in times.iter().zip(&devs) {
        csv.row(&[fmt_f64(*t), fmt_f64(*d), "ok".into()])?;
    }
    if let Some(e) = &abort {
        csv.row(&[String::new(), String::new(), format!("abort: {e}")])?;
    }
    let path = csv.finish()?;
    let worst = devs.iter().copied().fold(0.0, f64::max);
    let aborted = abort.is_some();
    let passed = !aborted && worst <= tol;
    let mut summary = vec![format!(
        "crosscheck {a}:{b}: max deviation {worst:.3e} over {} samples, tolerance {tol:.1e}: {} ({})",
        times.len(),
        if passed { "PASS" } else { "FAIL" },
        path.display()
    )];
    if let Some(e) = abort {
        summary.push(format!("numerical abort: {e}"));
    }
    Ok(Report {
        passed,
        aborted,
        summary,
    })
}
