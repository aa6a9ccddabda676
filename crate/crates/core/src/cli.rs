//! Configuration loading and report emitters behind the `sattrack` binary.
//!
//! The config file is a flat JSON object. Recognized keys:
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `R`, `omega`, `h` | number | 1, 1, 0.01 |
//! | `G0` | number | checked against `R^3 omega^2` |
//! | `mtype` | `"type1"` / `"type2"` | `"type1"` |
//! | `N`, `phi` | integer | 1000, 10 |
//! | `seed` | integer | 0 |
//! | `phi_var`, `psi_var` | number | 0.1, 0.5 |
//! | `delta_Q`, `tau_P0`, `B` | 4x4 array | 0, 0.1 I, I |
//! | `x0_mode` | `"fixed"` / `"sampled"` | `"fixed"` |
//! | `x0` | 4-array | `[0.1, 0, 0, 0]` |
//! | `x0_mean` | 4-array | zeros |
//! | `truth_model` | `"linear"` / `"nonlinear"` | `"linear"` |
//! | `synthesize_noise` | bool | true |
//! | `jitter` | number or null | 1e-12 |
//! | `are_tol`, `are_max_iter` | number, integer | 1e-10, 1000000 |

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::filters::{FilterError, SteadyState};
use crate::harness::{ExperimentConfig, MonteCarloResult, RunResult, TruthModel, X0Mode};
use crate::metrics::AmseeRecord;
use crate::orbit::{MeasurementType, OrbitParams};
use crate::smallmat::{Matrix4, Vector4};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn parse_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse { key: key.to_string(), message: message.into() }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mtype: Option<MeasurementType>,
    pub n_steps: Option<i64>,
    pub runs: Option<i64>,
}

/// Reads `path` (if any), applies `overrides`, and validates.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// Builds a config from JSON text (empty text means all defaults).
pub fn parse_config(json: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let (mut radius, mut omega, mut h) = (1.0, 1.0, 0.01);
    let mut g0 = None;
    let mut n_steps: i64 = cfg.n_steps as i64;
    let mut runs: i64 = cfg.runs as i64;
    let mut sampled = false;
    let mut x0 = match cfg.x0_mode {
        X0Mode::Fixed(x) => x,
        X0Mode::Sampled => Vector4::ZERO,
    };

    if !json.trim().is_empty() {
        let root: Value = serde_json::from_str(json).map_err(|e| parse_err("<document>", e.to_string()))?;
        let obj = root.as_object().ok_or_else(|| parse_err("<document>", "expected a JSON object"))?;
        for (key, v) in obj {
            let k = key.as_str();
            match k {
                "R" => radius = number(k, v)?,
                "omega" => omega = number(k, v)?,
                "h" => h = number(k, v)?,
                "G0" => g0 = Some(number(k, v)?),
                "mtype" => cfg.mtype = string(k, v)?.parse().map_err(|e: String| parse_err(k, e))?,
                "N" => n_steps = integer(k, v)?,
                "phi" => runs = integer(k, v)?,
                "seed" => {
                    cfg.seed = v.as_u64().ok_or_else(|| parse_err(k, "expected a non-negative integer"))?
                }
                "phi_var" => cfg.noise.phi = number(k, v)?,
                "psi_var" => cfg.noise.psi = number(k, v)?,
                "delta_Q" => cfg.delta_q = matrix(k, v)?,
                "tau_P0" => cfg.tau_p0 = matrix(k, v)?,
                "B" => cfg.b = matrix(k, v)?,
                "x0_mode" => {
                    sampled = match string(k, v)? {
                        "fixed" => false,
                        "sampled" => true,
                        other => return Err(parse_err(k, format!("expected fixed or sampled, got `{other}`"))),
                    }
                }
                "x0" => x0 = vector(k, v)?,
                "x0_mean" => cfg.x0_mean = vector(k, v)?,
                "truth_model" => {
                    cfg.truth_model = match string(k, v)? {
                        "linear" => TruthModel::Linear,
                        "nonlinear" => TruthModel::Nonlinear,
                        other => {
                            return Err(parse_err(k, format!("expected linear or nonlinear, got `{other}`")))
                        }
                    }
                }
                "synthesize_noise" => {
                    cfg.synthesize_noise = v.as_bool().ok_or_else(|| parse_err(k, "expected a boolean"))?
                }
                "jitter" => cfg.jitter = if v.is_null() { None } else { Some(number(k, v)?) },
                "are_tol" => cfg.are_tol = number(k, v)?,
                "are_max_iter" => {
                    cfg.are_max_iter = usize::try_from(integer(k, v)?)
                        .map_err(|_| ConfigError::Validation("are_max_iter must be >= 0".into()))?
                }
                _ => return Err(parse_err(k, "unknown key")),
            }
        }
    }

    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(m) = overrides.mtype {
        cfg.mtype = m;
    }
    if let Some(n) = overrides.n_steps {
        n_steps = n;
    }
    if let Some(r) = overrides.runs {
        runs = r;
    }

    cfg.orbit = match g0 {
        Some(g) => OrbitParams::with_g0(radius, omega, g, h),
        None => OrbitParams::new(radius, omega, h),
    }
    .map_err(|e| ConfigError::Validation(e.to_string()))?;
    if n_steps < 1 {
        return Err(ConfigError::Validation(format!("N must be >= 1, got {n_steps}")));
    }
    if runs < 1 {
        return Err(ConfigError::Validation(format!("phi must be >= 1, got {runs}")));
    }
    cfg.n_steps = n_steps as usize;
    cfg.runs = runs as usize;
    cfg.x0_mode = if sampled { X0Mode::Sampled } else { X0Mode::Fixed(x0) };
    cfg.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn number(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| parse_err(key, "expected a finite number"))
}

fn integer(key: &str, v: &Value) -> Result<i64, ConfigError> {
    v.as_i64().ok_or_else(|| parse_err(key, "expected an integer"))
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| parse_err(key, "expected a string"))
}

fn vector(key: &str, v: &Value) -> Result<Vector4, ConfigError> {
    let arr = v.as_array().filter(|a| a.len() == 4).ok_or_else(|| parse_err(key, "expected 4 numbers"))?;
    let mut out = [0.0; 4];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = number(key, x)?;
    }
    Ok(Vector4::new(out))
}

fn matrix(key: &str, v: &Value) -> Result<Matrix4, ConfigError> {
    let rows = v.as_array().filter(|a| a.len() == 4).ok_or_else(|| parse_err(key, "expected a 4x4 array"))?;
    let mut out = [[0.0; 4]; 4];
    for (o, r) in out.iter_mut().zip(rows) {
        *o = vector(key, r)?.0;
    }
    Ok(Matrix4::new(out))
}

/// Scientific notation with 11 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.10e}")
}

pub const TRAJECTORY_HEADER: &str =
    "k,t,x1,x2,x3,x4,ckf_x1,ckf_x2,ckf_x3,ckf_x4,mukf_x1,mukf_x2,mukf_x3,mukf_x4,y,innov";

pub const ERROR_HEADER: &str = "k,beta1,beta2,beta3,beta4,gamma1,gamma2,gamma3,gamma4";

fn push_vec(line: &mut String, v: &Vector4) {
    for x in v.0 {
        line.push(',');
        line.push_str(&fmt_num(x));
    }
}

/// One row per step: truth, both filter estimates, the measurement and the innovation.
pub fn write_trajectory_csv<W: Write>(run: &RunResult, h: f64, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (i, ((x, c), m)) in run.truth.states.iter().zip(&run.ckf).zip(&run.mukf).enumerate() {
        let k = i + 1;
        let mut line = format!("{k},{}", fmt_num(k as f64 * h));
        push_vec(&mut line, x);
        push_vec(&mut line, &c.x_post);
        push_vec(&mut line, &m.x_m);
        write!(line, ",{},{}", fmt_num(run.truth.measurements[i]), fmt_num(c.innovation)).unwrap();
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_error_csv<W: Write>(run: &RunResult, mut w: W) -> io::Result<()> {
    writeln!(w, "{ERROR_HEADER}")?;
    for (i, (b, g)) in run.trace.beta.iter().zip(&run.trace.gamma).enumerate() {
        let mut line = (i + 1).to_string();
        push_vec(&mut line, b);
        push_vec(&mut line, g);
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Which filter's MSEE a table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// κ, covariance form
    Covariance,
    /// Γ, information form
    Information,
}

/// Per-run MSEE table: one row per state, one column per run plus the average.
pub fn msee_table(mc: &MonteCarloResult, which: Estimator) -> String {
    let pick = |r: &crate::metrics::MseeRecord| match which {
        Estimator::Covariance => r.kappa,
        Estimator::Information => r.gamma,
    };
    let avg = match which {
        Estimator::Covariance => mc.amsee.xi_kappa,
        Estimator::Information => mc.amsee.xi_gamma,
    };
    let mut s = String::from("| State |");
    for r in &mc.runs {
        write!(s, " {} |", r.run_index + 1).unwrap();
    }
    s.push_str(" Averaged |\n|---|");
    s.push_str(&"---:|".repeat(mc.runs.len() + 1));
    s.push('\n');
    for state in 0..4 {
        write!(s, "| x{} |", state + 1).unwrap();
        for r in &mc.runs {
            write!(s, " {:.4} |", pick(r)[state]).unwrap();
        }
        writeln!(s, " {:.4} |", avg[state]).unwrap();
    }
    s
}

/// AMSEE comparison of both filters under both measurement types.
pub fn amsee_table(type1: &AmseeRecord, type2: &AmseeRecord) -> String {
    let mut s = String::from(
        "| State | type 1 Xi_kappa | type 1 Xi_Gamma | type 2 Xi_kappa | type 2 Xi_Gamma |\n|---|---:|---:|---:|---:|\n",
    );
    for i in 0..4 {
        writeln!(
            s,
            "| x{} | {:.4} | {:.4} | {:.4} | {:.4} |",
            i + 1,
            type1.xi_kappa[i],
            type1.xi_gamma[i],
            type2.xi_kappa[i],
            type2.xi_gamma[i]
        )
        .unwrap();
    }
    s
}

pub fn are_report(mtype: MeasurementType, ss: &SteadyState) -> String {
    let mut s = format!("steady state ({mtype})\n");
    writeln!(s, "iterations: {}", ss.iterations).unwrap();
    writeln!(s, "residual: {}", fmt_num(ss.residual)).unwrap();
    s.push_str("P_inf:\n");
    for row in ss.p_inf.rows() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
        writeln!(s, "  {}", cells.join(" ")).unwrap();
    }
    let k: Vec<String> = ss.k_inf.0.iter().map(|&x| fmt_num(x)).collect();
    writeln!(s, "K_inf: {}", k.join(" ")).unwrap();
    writeln!(s, "rho(F - K H): {}", fmt_num(ss.rho)).unwrap();
    writeln!(s, "stabilizing: {}", ss.is_stabilizing()).unwrap();
    s
}

/// Message for a failed steady-state solve.
pub fn are_failure(mtype: MeasurementType, err: &FilterError) -> String {
    format!("steady state ({mtype}) failed: {err}")
}
