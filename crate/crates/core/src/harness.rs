//! End-to-end experiment: synthesize a truth trajectory and its scalar
//! measurements, run both filters in lockstep on the same measurements,
//! and reduce the errors to MSEE records. [`monte_carlo`] repeats this over
//! independently seeded runs and averages.

use thiserror::Error;

use crate::filters::{Ckf, FilterError, FilterEstimate, FilterModel, MicroKf, MicroStep, DEFAULT_JITTER};
use crate::metrics::{self, AmseeRecord, ErrorTrace, MetricsError, MseeRecord};
use crate::noise::{self, is_psd, role, NoiseError, SeededRng};
use crate::orbit::{
    build_a, discretize, from_deviation, measurement_matrix, rk4_step, to_deviation,
    MeasurementNoise, MeasurementType, OrbitError, OrbitParams,
};
use crate::par::*;
use crate::smallmat::{Matrix4, Vector4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How the true initial state is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum X0Mode {
    Fixed(Vector4),
    /// drawn from `N(x0_mean, tau_p0)`
    Sampled,
}

impl Default for X0Mode {
    fn default() -> Self {
        X0Mode::Fixed(Vector4::new([0.1, 0.0, 0.0, 0.0]))
    }
}

/// How the truth is propagated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthModel {
    /// `x_k = F x_{k−1}` (plus process noise)
    #[default]
    Linear,
    /// RK4 integration of the polar equations, mapped back to deviations
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub orbit: OrbitParams,
    pub mtype: MeasurementType,
    /// steps per run
    pub n_steps: usize,
    /// Monte Carlo runs
    pub runs: usize,
    pub seed: u64,
    pub noise: MeasurementNoise,
    pub delta_q: Matrix4,
    pub tau_p0: Matrix4,
    pub x0_mode: X0Mode,
    /// filter prior mean (and the mean of sampled initial states)
    pub x0_mean: Vector4,
    pub b: Matrix4,
    pub truth_model: TruthModel,
    /// When false, measurements and truth are generated without any random
    /// noise while the filters keep their configured noise model.
    pub synthesize_noise: bool,
    pub jitter: Option<f64>,
    pub are_tol: f64,
    pub are_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            orbit: OrbitParams::default(),
            mtype: MeasurementType::Type1,
            n_steps: 1000,
            runs: 10,
            seed: 0,
            noise: MeasurementNoise::default(),
            delta_q: Matrix4::zeros(),
            tau_p0: Matrix4::scalar(0.1),
            x0_mode: X0Mode::default(),
            x0_mean: Vector4::ZERO,
            b: Matrix4::identity(),
            truth_model: TruthModel::Linear,
            synthesize_noise: true,
            jitter: Some(DEFAULT_JITTER),
            are_tol: 1e-10,
            are_max_iter: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_steps < 1 {
            return bad("N must be >= 1".into());
        }
        if self.runs < 1 {
            return bad("phi (run count) must be >= 1".into());
        }
        if !(self.noise.phi > 0.0 && self.noise.phi.is_finite()) {
            return bad(format!("phi_var must be > 0, got {}", self.noise.phi));
        }
        if !(self.noise.psi > 0.0 && self.noise.psi.is_finite()) {
            return bad(format!("psi_var must be > 0, got {}", self.noise.psi));
        }
        if !is_psd(&self.delta_q, 1e-12) {
            return bad("delta_Q must be symmetric positive semidefinite".into());
        }
        if !is_psd(&self.tau_p0, 1e-12) {
            return bad("tau_P0 must be symmetric positive semidefinite".into());
        }
        if !self.x0_mean.is_finite() || !self.b.is_finite() {
            return bad("x0_mean and B must be finite".into());
        }
        if let X0Mode::Fixed(x) = self.x0_mode {
            if !x.is_finite() {
                return bad("x0 must be finite".into());
            }
        }
        if let Some(j) = self.jitter {
            if !(j > 0.0) {
                return bad(format!("jitter must be > 0, got {j}"));
            }
        }
        if !(self.are_tol > 0.0) {
            return bad(format!("are_tol must be > 0, got {}", self.are_tol));
        }
        Ok(())
    }

    /// Transition matrix `exp(A h)`.
    pub fn transition(&self) -> Matrix4 {
        discretize(&build_a(&self.orbit), self.orbit.h())
    }

    pub fn filter_model(&self) -> Result<FilterModel, HarnessError> {
        self.filter_model_for(self.mtype)
    }

    pub fn filter_model_for(&self, mtype: MeasurementType) -> Result<FilterModel, HarnessError> {
        let (h, r) = measurement_matrix(mtype, &self.noise);
        let mut m = FilterModel::new(self.transition(), h, self.delta_q, r)?;
        m.b = self.b;
        Ok(m)
    }

    pub fn with_mtype(&self, mtype: MeasurementType) -> Self {
        ExperimentConfig { mtype, ..self.clone() }
    }
}

/// The three independent random streams of one run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub initial: SeededRng,
    pub process: SeededRng,
    pub measurement: SeededRng,
}

impl RunStreams {
    pub fn for_run(master_seed: u64, run_index: usize) -> Self {
        let root = SeededRng::new(noise::run_seed(master_seed, run_index as u64));
        RunStreams {
            initial: root.substream(role::INITIAL_STATE),
            process: root.substream(role::PROCESS),
            measurement: root.substream(role::MEASUREMENT),
        }
    }
}

/// True states `x_1..x_N` and measurements `y_1..y_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub initial: Vector4,
    pub states: Vec<Vector4>,
    pub measurements: Vec<f64>,
}

pub fn generate_truth(cfg: &ExperimentConfig, streams: &mut RunStreams) -> Result<Truth, HarnessError> {
    let model = cfg.filter_model()?;
    let x0 = match cfg.x0_mode {
        X0Mode::Fixed(x) => x,
        X0Mode::Sampled => noise::gaussian_vec(&mut streams.initial, &cfg.x0_mean, &cfg.tau_p0)?,
    };
    let (q, r) = if cfg.synthesize_noise { (cfg.delta_q, model.r) } else { (Matrix4::zeros(), 0.0) };
    let h = cfg.orbit.h();

    let mut states = Vec::with_capacity(cfg.n_steps);
    let mut measurements = Vec::with_capacity(cfg.n_steps);
    let mut x = x0;
    for k in 1..=cfg.n_steps {
        let w = model.b * noise::gaussian_vec(&mut streams.process, &Vector4::ZERO, &q)?;
        x = match cfg.truth_model {
            TruthModel::Linear => model.f * x + model.u_s + w,
            TruthModel::Nonlinear => {
                let t0 = (k - 1) as f64 * h;
                let s = from_deviation(&x, t0, &cfg.orbit);
                let s = rk4_step(&s, &cfg.orbit, h)?;
                to_deviation(&s, k as f64 * h, &cfg.orbit) + w
            }
        };
        let v = noise::gaussian(&mut streams.measurement, 0.0, r)?;
        states.push(x);
        measurements.push(model.h.dot(&x) + model.u_o + v);
    }
    Ok(Truth { initial: x0, states, measurements })
}

/// Everything recorded for one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_index: usize,
    pub truth: Truth,
    pub ckf: Vec<FilterEstimate>,
    pub mukf: Vec<MicroStep>,
    pub trace: ErrorTrace,
    pub msee: MseeRecord,
    /// steps where the information filter needed diagonal loading
    pub jitter_events: usize,
}

impl RunResult {
    pub fn innovations(&self) -> Vec<f64> {
        self.ckf.iter().map(|e| e.innovation).collect()
    }

    /// Largest per-step posterior gap between the two filters, (state, covariance).
    pub fn filter_gap(&self) -> (f64, f64) {
        self.ckf.iter().zip(&self.mukf).fold((0.0, 0.0), |(gx, gp), (c, m)| {
            (gx.max((c.x_post - m.x_m).max_abs()), gp.max(c.p_post.max_abs_diff(&m.m)))
        })
    }
}

pub fn run_once(cfg: &ExperimentConfig, run_index: usize) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let mut streams = RunStreams::for_run(cfg.seed, run_index);
    let truth = generate_truth(cfg, &mut streams)?;
    let model = cfg.filter_model()?;

    let mut ckf = Ckf::new(model, cfg.x0_mean, cfg.tau_p0);
    let mut mkf = MicroKf::new(model, cfg.x0_mean, cfg.tau_p0, cfg.jitter);
    let mut ckf_steps = Vec::with_capacity(cfg.n_steps);
    let mut mukf_steps = Vec::with_capacity(cfg.n_steps);
    for &y in &truth.measurements {
        ckf_steps.push(ckf.step(y)?);
        mukf_steps.push(mkf.step(y)?);
    }
    if mkf.jitter_events() > 0 {
        log::info!(
            "run {run_index}: diagonal loading applied on {} of {} steps",
            mkf.jitter_events(),
            cfg.n_steps
        );
    }

    let ckf_x: Vec<Vector4> = ckf_steps.iter().map(|e| e.x_post).collect();
    let mukf_x: Vec<Vector4> = mukf_steps.iter().map(|s| s.x_m).collect();
    let trace = metrics::collect_errors(&truth.states, &ckf_x, &mukf_x)?;
    let msee = metrics::msee(&trace, run_index)?;
    Ok(RunResult {
        run_index,
        truth,
        ckf: ckf_steps,
        mukf: mukf_steps,
        trace,
        msee,
        jitter_events: mkf.jitter_events(),
    })
}

/// Per-run MSEE records and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub amsee: AmseeRecord,
    pub runs: Vec<MseeRecord>,
}

/// Runs `cfg.runs` independent replicas (in parallel when the `parallel`
/// feature is on); records come back in run-index order either way.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloResult, HarnessError> {
    cfg.validate()?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|j| run_once(cfg, j).map(|r| r.msee))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloResult { amsee: metrics::amsee(&runs)?, runs })
}

/// [`monte_carlo`] on the calling thread only.
pub fn monte_carlo_sequential(cfg: &ExperimentConfig) -> Result<MonteCarloResult, HarnessError> {
    cfg.validate()?;
    let runs = (0..cfg.runs)
        .map(|j| run_once(cfg, j).map(|r| r.msee))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloResult { amsee: metrics::amsee(&runs)?, runs })
}

/// AMSEE with linear and with nonlinear truth propagation, same seeds.
///
/// The difference is the error attributable to the filters' linearized model.
pub fn linearization_gap(cfg: &ExperimentConfig) -> Result<(AmseeRecord, AmseeRecord), HarnessError> {
    let lin = ExperimentConfig { truth_model: TruthModel::Linear, ..cfg.clone() };
    let nl = ExperimentConfig { truth_model: TruthModel::Nonlinear, ..cfg.clone() };
    Ok((monte_carlo(&lin)?.amsee, monte_carlo(&nl)?.amsee))
}
