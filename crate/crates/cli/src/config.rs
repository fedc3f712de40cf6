//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": "ball_chaplygin",
//!   "n": 3, "r": 1, "k": 1,
//!   "epsilon": 1.0,
//!   "inertia": {"diag": [1, 2, 3]},
//!   "D": 1.0,
//!   "initial": {"random": {"seed": 7}},
//!   "integrator": {"method": "adaptive", "t_end": 10, "samples": 100, "tol": 1e-10},
//!   "checks": ["volume", "integrals"],
//!   "tolerance": 1e-6,
//!   "output": {"dir": "out"}
//! }
//! ```
//!
//! `inertia` is one of `"identity"`, `"random"`, `{"diag": [..]}`,
//! `{"wedge_products": [a₁..a_n]}` or `{"general": [[..]]}`. For the balls
//! `diag` holds the three principal moments and `random` draws them from
//! the seed; elsewhere `diag` is the diagonal in wedge coordinates.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use nonholo_core::liealg::algebra_dim;
use nonholo_core::numerics::Method;
use nonholo_core::systems::SystemKind;
use nonholo_core::IntegratorConfig;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertiaDesc {
    Identity,
    Random,
    Diag(Vec<f64>),
    WedgeProducts(Vec<f64>),
    General(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Random { seed: u64 },
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Liouville,
    Volume,
    Integrals,
    Crosscheck,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Liouville => "liouville",
            Check::Volume => "volume",
            Check::Integrals => "integrals",
            Check::Crosscheck => "crosscheck",
        }
    }

    fn needs_density(self) -> bool {
        matches!(self, Check::Liouville | Check::Volume)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "liouville" => Ok(Check::Liouville),
            "volume" => Ok(Check::Volume),
            "integrals" => Ok(Check::Integrals),
            _ => Err(format!("unknown check '{s}' (expected liouville, volume or integrals)")),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorDesc {
    method: Option<String>,
    t_end: Option<f64>,
    samples: Option<usize>,
    tol: Option<f64>,
    dt: Option<f64>,
    max_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDesc {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: String,
    n: Option<usize>,
    r: Option<usize>,
    k: Option<usize>,
    epsilon: f64,
    inertia: Option<InertiaDesc>,
    #[serde(rename = "D")]
    d: Option<f64>,
    initial: Option<Initial>,
    integrator: Option<IntegratorDesc>,
    #[serde(default)]
    checks: Vec<Check>,
    tolerance: Option<f64>,
    #[serde(default)]
    output: OutputDesc,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SystemKind,
    pub n: usize,
    /// Stiefel rank (Veselova, Stiefel L+R).
    pub r: usize,
    /// Rank of `ℋ` (ε-LR).
    pub k: usize,
    pub epsilon: f64,
    pub inertia: InertiaDesc,
    pub d: Option<f64>,
    pub initial: Initial,
    pub integrator: IntegratorConfig,
    pub checks: Vec<Check>,
    pub tolerance: Option<f64>,
    pub out_dir: PathBuf,
}

fn bad(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {msg}"))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    validate(raw)
}

fn is_ball(kind: SystemKind) -> bool {
    matches!(kind, SystemKind::BallChaplygin | SystemKind::BallRubber)
}

fn validate(raw: RawConfig) -> Result<RunConfig, CliError> {
    let system: SystemKind = raw.system.parse().map_err(|e| bad("system", e))?;
    let n = match (is_ball(system), raw.n) {
        (true, None | Some(3)) => 3,
        (true, Some(n)) => return Err(bad("n", format!("{system} lives in dimension 3, got {n}"))),
        (false, Some(n)) if n >= 3 => n,
        (false, Some(n)) => return Err(bad("n", format!("n must be >= 3, got {n}"))),
        (false, None) => 3,
    };
    let big_n = algebra_dim(n);
    let r = raw.r.unwrap_or(1);
    if matches!(system, SystemKind::Veselova | SystemKind::LprStiefel) && !(1..n).contains(&r) {
        return Err(bad("r", format!("r must lie in 1..{n}, got {r}")));
    }
    let k = raw.k.unwrap_or(1);
    if matches!(system, SystemKind::ElrMultiplier | SystemKind::ElrMomentum) && !(1..big_n).contains(&k) {
        return Err(bad("k", format!("k must lie in 1..{big_n}, got {k}")));
    }

    if !raw.epsilon.is_finite() {
        return Err(bad("epsilon", "must be finite"));
    }

    let needs_d = is_ball(system) || system == SystemKind::LprStiefel;
    let random_stiefel = system == SystemKind::LprStiefel && matches!(raw.inertia, None | Some(InertiaDesc::Random));
    let d = match (needs_d, raw.d) {
        (true, Some(_)) if random_stiefel => {
            return Err(bad("D", "drawn together with a random inertia; remove it or give wedge_products"))
        }
        (true, Some(d)) if d.is_finite() && d > 0.0 => Some(d),
        (true, Some(d)) => return Err(bad("D", format!("must be positive, got {d}"))),
        (true, None) if random_stiefel => None,
        (true, None) => return Err(bad("D", format!("required for {system}"))),
        (false, Some(_)) => return Err(bad("D", format!("not used by {system}"))),
        (false, None) => None,
    };

    let inertia = raw.inertia.unwrap_or(InertiaDesc::Random);
    check_inertia(system, n, d, &inertia)?;

    let initial = raw.initial.unwrap_or(Initial::Random { seed: 0 });
    let integrator = integrator_config(raw.integrator.unwrap_or_default())?;

    if let Some(tol) = raw.tolerance {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(bad("tolerance", format!("must be positive, got {tol}")));
        }
    }

    let cfg = RunConfig {
        system,
        n,
        r,
        k,
        epsilon: raw.epsilon,
        inertia,
        d,
        initial,
        integrator,
        checks: raw.checks,
        tolerance: raw.tolerance,
        out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from(".")),
    };
    for c in &cfg.checks {
        cfg.check_allowed(*c)?;
    }
    Ok(cfg)
}

impl RunConfig {
    /// Rejects checks that make no sense for this configuration.
    pub fn check_allowed(&self, check: Check) -> Result<(), CliError> {
        if check.needs_density() && self.epsilon == 0.0 {
            return Err(bad(
                "epsilon",
                format!("the {check} check needs epsilon != 0 (the density exponent 1/(2ε) is singular)"),
            ));
        }
        if check == Check::Liouville && !matches!(self.system, SystemKind::ElrMultiplier | SystemKind::Elpr) {
            return Err(bad(
                "checks",
                format!("liouville applies to ambient systems (elr_multiplier, elpr); use volume for {}", self.system),
            ));
        }
        Ok(())
    }
}

fn positive(key: &str, values: &[f64]) -> Result<(), CliError> {
    match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(bad(key, format!("entries must be positive, got {v}"))),
        None => Ok(()),
    }
}

fn check_inertia(system: SystemKind, n: usize, d: Option<f64>, inertia: &InertiaDesc) -> Result<(), CliError> {
    let big_n = algebra_dim(n);
    let key = "inertia";
    let unsupported = || bad(key, format!("{inertia:?} is not supported for {system}"));
    match system {
        SystemKind::BallChaplygin | SystemKind::BallRubber => match inertia {
            InertiaDesc::Identity | InertiaDesc::Random => Ok(()),
            InertiaDesc::Diag(m) if m.len() == 3 => positive(key, m),
            InertiaDesc::Diag(m) => Err(bad(key, format!("diag needs 3 principal moments, got {}", m.len()))),
            _ => Err(unsupported()),
        },
        SystemKind::LprStiefel => match inertia {
            InertiaDesc::Random => Ok(()),
            InertiaDesc::WedgeProducts(a) if a.len() == n => {
                positive(key, a)?;
                let d = d.expect("validated");
                let (i, j) = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .max_by(|p, q| (a[p.0] * a[p.1]).total_cmp(&(a[q.0] * a[q.1])))
                    .expect("n >= 3");
                let p = a[i] * a[j];
                if p >= d {
                    return Err(bad(
                        "D",
                        format!("lpr_stiefel requires 0 < a_i a_j < D; a_{} a_{} = {p} >= D = {d}", i + 1, j + 1),
                    ));
                }
                Ok(())
            }
            InertiaDesc::WedgeProducts(a) => Err(bad(key, format!("wedge_products needs {n} values, got {}", a.len()))),
            _ => Err(unsupported()),
        },
        SystemKind::Veselova => match inertia {
            InertiaDesc::Random => Ok(()),
            InertiaDesc::WedgeProducts(a) if a.len() == n => positive(key, a),
            InertiaDesc::WedgeProducts(a) => Err(bad(key, format!("wedge_products needs {n} values, got {}", a.len()))),
            _ => Err(unsupported()),
        },
        _ => match inertia {
            InertiaDesc::Identity | InertiaDesc::Random => Ok(()),
            InertiaDesc::Diag(v) if v.len() == big_n => positive(key, v),
            InertiaDesc::Diag(v) => Err(bad(key, format!("diag needs {big_n} values, got {}", v.len()))),
            InertiaDesc::WedgeProducts(a) if a.len() == n => positive(key, a),
            InertiaDesc::WedgeProducts(a) => Err(bad(key, format!("wedge_products needs {n} values, got {}", a.len()))),
            InertiaDesc::General(rows) if rows.len() == big_n && rows.iter().all(|r| r.len() == big_n) => Ok(()),
            InertiaDesc::General(_) => Err(bad(key, format!("general needs a {big_n}x{big_n} matrix"))),
        },
    }
}

fn integrator_config(desc: IntegratorDesc) -> Result<IntegratorConfig, CliError> {
    let mut cfg = IntegratorConfig::default();
    match desc.method.as_deref() {
        None | Some("adaptive") => {}
        Some("rk4") => cfg.method = Method::Rk4Fixed,
        Some(other) => return Err(bad("integrator.method", format!("expected adaptive or rk4, got '{other}'"))),
    }
    if let Some(t) = desc.t_end {
        cfg.t_end = t;
    }
    if let Some(s) = desc.samples {
        cfg.samples = s;
    }
    if let Some(tol) = desc.tol {
        cfg.abs_tol = tol;
        cfg.rel_tol = tol;
    }
    if let Some(dt) = desc.dt {
        cfg.dt = dt;
    }
    if let Some(m) = desc.max_steps {
        cfg.max_steps = m;
    }
    cfg.validate().map_err(|e| bad("integrator", e))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ball_config_is_valid() {
        let cfg = parse_config(
            r#"{"system": "ball_chaplygin", "inertia": {"diag": [1, 2, 3]}, "D": 1, "epsilon": 1,
                "initial": {"random": {"seed": 7}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.system, SystemKind::BallChaplygin);
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.initial, Initial::Random { seed: 7 });
        assert_eq!(cfg.integrator, IntegratorConfig::default());
        assert_eq!(cfg.out_dir, PathBuf::from("."));
    }

    #[test]
    fn stiefel_products_must_stay_below_d() {
        let err = parse_config(
            r#"{"system": "lpr_stiefel", "inertia": {"wedge_products": [1, 2, 3]}, "D": 2, "epsilon": 1}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`D`") && msg.contains("a_2 a_3 = 6"), "{msg}");
    }

    #[test]
    fn zero_epsilon_rejected_for_density_checks() {
        let err = parse_config(r#"{"system": "elr_multiplier", "n": 4, "epsilon": 0, "checks": ["liouville"]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("`epsilon`"), "{err}");
        assert!(parse_config(r#"{"system": "elr_multiplier", "n": 4, "epsilon": 0}"#).is_ok());
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            (r#"{"system": "top", "epsilon": 1}"#, "`system`"),
            (r#"{"system": "veselova", "n": 4, "r": 4, "epsilon": 1}"#, "`r`"),
            (r#"{"system": "elr_multiplier", "n": 3, "k": 3, "epsilon": 1}"#, "`k`"),
            (r#"{"system": "elpr", "epsilon": 1, "D": 1}"#, "`D`"),
            (r#"{"system": "ball_rubber", "epsilon": 1, "inertia": "identity"}"#, "`D`"),
            (r#"{"system": "elpr", "n": 4, "epsilon": 1, "inertia": {"diag": [1, 2]}}"#, "`inertia`"),
            (r#"{"system": "veselova", "epsilon": 1, "checks": ["liouville"]}"#, "`checks`"),
            (r#"{"system": "elpr", "epsilon": 1, "integrator": {"method": "euler"}}"#, "`integrator.method`"),
            (r#"{"system": "elpr", "epsilon": 1, "integrator": {"t_end": -1}}"#, "`integrator`"),
        ];
        for (text, key) in cases {
            let msg = parse_config(text).unwrap_err().to_string();
            assert!(msg.contains(key), "{text} -> {msg}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let msg = parse_config(r#"{"system": "elpr", "epsilon": 1, "sead": 3}"#).unwrap_err().to_string();
        assert!(msg.contains("sead"), "{msg}");
    }
}
