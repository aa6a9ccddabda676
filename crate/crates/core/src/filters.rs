//! Estimators for a linear system with a scalar observation.
//!
//! * the time-varying covariance-form Kalman filter ([`ckf_predict`] /
//!   [`ckf_update`], wrapped by [`Ckf`]),
//! * the information-form filter ([`mukf_step`], wrapped by [`MicroKf`]),
//!   which folds the measurement in through `S = Hᵀ R⁻¹ H` and
//!   `z = Hᵀ R⁻¹ y` and posts `M = (P⁻¹ + S)⁻¹`,
//! * the steady-state predictor from the fixed point of the Riccati
//!   recursion ([`solve_are`], [`steady_predict`]).
//!
//! Both time-varying filters compute the same posterior; the two forms are
//! related by the matrix inversion lemma. All covariances are symmetrized
//! after every update.

use log::warn;
use thiserror::Error;

use crate::smallmat::{MatError, Matrix4, RowVector4, Vector4};

/// Innovation variances at or below this are rejected.
pub const MIN_INNOVATION_VARIANCE: f64 = 1e-14;

/// Default diagonal loading applied when the prior covariance cannot be inverted.
pub const DEFAULT_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error("innovation variance {0:e} is not positive")]
    DegenerateInnovation(f64),
    #[error("Riccati iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid filter model: {0}")]
    InvalidModel(String),
}

/// Linear Gaussian model `x⁺ = F x + u_s + B q`, `y = H x + u_o + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterModel {
    pub f: Matrix4,
    pub h: RowVector4,
    /// process noise covariance
    pub q: Matrix4,
    /// measurement noise variance
    pub r: f64,
    pub u_s: Vector4,
    pub u_o: f64,
    /// process noise shaping
    pub b: Matrix4,
}

impl FilterModel {
    /// A model with zero inputs and identity noise shaping.
    pub fn new(f: Matrix4, h: RowVector4, q: Matrix4, r: f64) -> Result<Self, FilterError> {
        let m = FilterModel {
            f,
            h,
            q,
            r,
            u_s: Vector4::ZERO,
            u_o: 0.0,
            b: Matrix4::identity(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(FilterError::InvalidModel(format!(
                "measurement variance must be positive, got {}",
                self.r
            )));
        }
        if !crate::noise::is_psd(&self.q, 1e-12) {
            return Err(FilterError::InvalidModel("process covariance is not symmetric PSD".into()));
        }
        if !(self.f.is_finite() && self.b.is_finite() && self.u_s.is_finite() && self.u_o.is_finite())
        {
            return Err(FilterError::InvalidModel("non-finite model entry".into()));
        }
        Ok(())
    }

    /// Covariance actually added at each prediction, `B Q Bᵀ`.
    pub fn process_covariance(&self) -> Matrix4 {
        self.b.congruence(&self.q).symmetrize()
    }

    /// `S = Hᵀ R⁻¹ H`
    pub fn information_matrix(&self) -> Matrix4 {
        let ht = self.h.transpose();
        ht.outer(&ht).scale(1.0 / self.r)
    }
}

/// One covariance-form filter step: prior, posterior, gain, and innovation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterEstimate {
    pub x_pred: Vector4,
    pub p_pred: Matrix4,
    pub x_post: Vector4,
    pub p_post: Matrix4,
    pub gain: Vector4,
    pub innovation: f64,
    /// `H P_pred Hᵀ + R`
    pub innovation_variance: f64,
}

/// Time update: `x = F x + u_s`, `P = F P Fᵀ + B Q Bᵀ`.
pub fn ckf_predict(x_post: &Vector4, p_post: &Matrix4, m: &FilterModel) -> (Vector4, Matrix4) {
    let x = m.f * *x_post + m.u_s;
    let p = m.f.congruence(p_post).mat_add(&m.process_covariance()).symmetrize();
    (x, p)
}

/// Measurement update in covariance form, with the subtractive posterior
/// `P − P Hᵀ T⁻¹ H P`.
pub fn ckf_update(
    x_pred: &Vector4,
    p_pred: &Matrix4,
    m: &FilterModel,
    y: f64,
) -> Result<FilterEstimate, FilterError> {
    let pht = (m.h.mul_mat(&p_pred.transpose())).transpose(); // P Hᵀ
    let t = m.h.dot(&pht) + m.r;
    if !(t > MIN_INNOVATION_VARIANCE) {
        return Err(FilterError::DegenerateInnovation(t));
    }
    let innovation = y - (m.h.dot(x_pred) + m.u_o);
    let gain = pht.scale(1.0 / t);
    let x_post = *x_pred + gain * innovation;
    let p_post = p_pred.mat_sub(&pht.outer(&pht).scale(1.0 / t)).symmetrize();
    Ok(FilterEstimate {
        x_pred: *x_pred,
        p_pred: *p_pred,
        x_post,
        p_post,
        gain,
        innovation,
        innovation_variance: t,
    })
}

/// Output of one information-form step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroStep {
    /// posterior state
    pub x_m: Vector4,
    /// posterior covariance `(P⁻¹ + S)⁻¹`
    pub m: Matrix4,
    /// next prior covariance `F M Fᵀ + B Q Bᵀ`
    pub p_plus: Matrix4,
    /// next prior state `F x_m + u_s`
    pub x_bar_plus: Vector4,
    /// whether diagonal loading was needed to invert the prior
    pub jittered: bool,
}

/// Information-form update followed by the time update.
///
/// `jitter` enables diagonal loading: if `P` cannot be inverted, `P + jitter·I`
/// is inverted instead and the event is logged. With `None` a singular prior
/// is an error.
pub fn mukf_step(
    x_bar: &Vector4,
    p: &Matrix4,
    m: &FilterModel,
    y: f64,
    jitter: Option<f64>,
) -> Result<MicroStep, FilterError> {
    let (p_inv, jittered) = match (p.invert(), jitter) {
        (Ok(inv), _) => (inv, false),
        (Err(e), None) => return Err(e.into()),
        (Err(e), Some(j)) => {
            warn!("prior covariance not invertible ({e}); retrying with {j:e} diagonal loading");
            (p.mat_add(&Matrix4::scalar(j)).invert()?, true)
        }
    };
    let s = m.information_matrix();
    let cov = p_inv.mat_add(&s).invert()?.symmetrize();

    // z = Hᵀ R⁻¹ (y − u_o)
    let z = m.h.transpose().scale((y - m.u_o) / m.r);
    let residual = z - s * *x_bar;
    let x_m = *x_bar + cov * residual;

    let p_plus = m.f.congruence(&cov).mat_add(&m.process_covariance()).symmetrize();
    let x_bar_plus = m.f * x_m + m.u_s;
    Ok(MicroStep { x_m, m: cov, p_plus, x_bar_plus, jittered })
}

/// Stateful covariance-form filter.
#[derive(Debug, Clone)]
pub struct Ckf {
    model: FilterModel,
    x: Vector4,
    p: Matrix4,
}

impl Ckf {
    /// Starts from the posterior `(x0, p0)` at step 0.
    pub fn new(model: FilterModel, x0: Vector4, p0: Matrix4) -> Self {
        Ckf { model, x: x0, p: p0 }
    }

    pub fn step(&mut self, y: f64) -> Result<FilterEstimate, FilterError> {
        let (xp, pp) = ckf_predict(&self.x, &self.p, &self.model);
        let est = ckf_update(&xp, &pp, &self.model, y)?;
        self.x = est.x_post;
        self.p = est.p_post;
        Ok(est)
    }

    pub fn state(&self) -> (Vector4, Matrix4) {
        (self.x, self.p)
    }
}

/// Stateful information-form filter.
///
/// It carries the prior for the next measurement, so construction from a
/// step-0 posterior performs one time update up front. This keeps it in
/// lockstep with [`Ckf`], which predicts at the start of every step.
#[derive(Debug, Clone)]
pub struct MicroKf {
    model: FilterModel,
    x_bar: Vector4,
    p: Matrix4,
    jitter: Option<f64>,
    jitter_events: usize,
}

impl MicroKf {
    pub fn new(model: FilterModel, x0: Vector4, p0: Matrix4, jitter: Option<f64>) -> Self {
        let (x_bar, p) = ckf_predict(&x0, &p0, &model);
        MicroKf { model, x_bar, p, jitter, jitter_events: 0 }
    }

    pub fn step(&mut self, y: f64) -> Result<MicroStep, FilterError> {
        let s = mukf_step(&self.x_bar, &self.p, &self.model, y, self.jitter)?;
        if s.jittered {
            self.jitter_events += 1;
        }
        self.x_bar = s.x_bar_plus;
        self.p = s.p_plus;
        Ok(s)
    }

    /// Number of steps that needed diagonal loading.
    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }
}

/// Fixed point of the prediction-covariance Riccati recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub p_inf: Matrix4,
    /// predictor gain `F P Hᵀ (H P Hᵀ + R)⁻¹`
    pub k_inf: Vector4,
    /// spectral radius of `F − K H`
    pub rho: f64,
    pub iterations: usize,
    /// `‖P − Ric(P)‖_max` at the returned `P`
    pub residual: f64,
}

impl SteadyState {
    /// Whether the closed loop `F − K H` is strictly stable.
    pub fn is_stabilizing(&self) -> bool {
        self.rho < 1.0
    }
}

/// One step of the prediction Riccati recursion,
/// `F [P − P Hᵀ (H P Hᵀ + R)⁻¹ H P] Fᵀ + B Q Bᵀ`.
pub fn riccati_step(p: &Matrix4, m: &FilterModel) -> Matrix4 {
    let pht = m.h.mul_mat(p).transpose();
    let t = m.h.dot(&pht) + m.r;
    let updated = p.mat_sub(&pht.outer(&pht).scale(1.0 / t));
    m.f.congruence(&updated).mat_add(&m.process_covariance()).symmetrize()
}

/// Predictor gain `F P Hᵀ (H P Hᵀ + R)⁻¹` for a prediction covariance `P`.
pub fn predictor_gain(p: &Matrix4, m: &FilterModel) -> Vector4 {
    let pht = m.h.mul_mat(p).transpose();
    let t = m.h.dot(&pht) + m.r;
    (m.f * pht).scale(1.0 / t)
}

/// Tolerance used for the closed-loop spectral radius.
pub const RHO_TOL: f64 = 1e-12;

/// Iterates [`riccati_step`] from `p0` until the estimated distance to the
/// fixed point drops below `tol` in max-norm.
///
/// The recursion converges linearly near a stabilizing solution, so a small
/// step alone says little when the contraction rate `c` is close to one. The
/// distance is estimated as `δ·c/(1−c)` from the last step `δ` and the ratio
/// of successive steps, and both `δ` and that estimate must be below `tol`.
pub fn solve_are(
    m: &FilterModel,
    p0: &Matrix4,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState, FilterError> {
    if !(tol > 0.0) {
        return Err(FilterError::InvalidModel(format!("tolerance must be positive, got {tol}")));
    }
    let mut p = p0.symmetrize();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_step(&p, m);
        let prev = residual;
        residual = next.max_abs_diff(&p);
        p = next;
        if !p.is_finite() {
            break;
        }
        let rate = residual / prev;
        let distance = if residual == 0.0 {
            0.0
        } else if rate < 1.0 {
            residual * rate / (1.0 - rate)
        } else {
            f64::INFINITY
        };
        if residual < tol && distance < tol {
            let k_inf = predictor_gain(&p, m);
            let closed = m.f.mat_sub(&k_inf.outer(&m.h.transpose()));
            let rho = closed.spectral_radius(RHO_TOL)?;
            return Ok(SteadyState {
                p_inf: p,
                k_inf,
                rho,
                iterations: it,
                residual: riccati_step(&p, m).max_abs_diff(&p),
            });
        }
    }
    Err(FilterError::NoConvergence { iterations: max_iter, residual })
}

/// Steady-state one-step predictor: `x⁺ = F x + K e`, `ŷ⁺ = H x⁺`.
pub fn steady_predict(x_hat: &Vector4, k_inf: &Vector4, e: f64, m: &FilterModel) -> (Vector4, f64) {
    let x_next = m.f * *x_hat + *k_inf * e;
    (x_next, m.h.dot(&x_next))
}

/// Runs [`steady_predict`] over a measurement stream.
///
/// Holds the one-step prediction `x̂_{k|k−1}`; each measurement forms the
/// innovation against it and yields the next prediction.
#[derive(Debug, Clone)]
pub struct SteadyPredictor {
    model: FilterModel,
    gain: Vector4,
    x_pred: Vector4,
}

impl SteadyPredictor {
    pub fn new(model: FilterModel, gain: Vector4, x_pred: Vector4) -> Self {
        SteadyPredictor { model, gain, x_pred }
    }

    pub fn prediction(&self) -> Vector4 {
        self.x_pred
    }

    /// Consumes `y_k` and returns `x̂_{k+1|k}`.
    pub fn step(&mut self, y: f64) -> Vector4 {
        let e = y - (self.model.h.dot(&self.x_pred) + self.model.u_o);
        let (next, _) = steady_predict(&self.x_pred, &self.gain, e, &self.model);
        self.x_pred = next + self.model.u_s;
        self.x_pred
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{build_a, discretize, OrbitParams};

    fn default_f() -> Matrix4 {
        discretize(&build_a(&OrbitParams::default()), 0.01)
    }

    fn model(h: [f64; 4], r: f64) -> FilterModel {
        FilterModel::new(default_f(), RowVector4::new(h), Matrix4::zeros(), r).unwrap()
    }

    #[test]
    fn predict_trivial_cases() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let (x, p) = ckf_predict(&Vector4::ZERO, &Matrix4::zeros(), &m);
        assert_eq!(x, Vector4::ZERO);
        assert_eq!(p, Matrix4::zeros());
    }

    #[test]
    fn predict_matches_direct_product() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let f = default_f();
        let (_, p) = ckf_predict(&Vector4::ZERO, &Matrix4::scalar(0.1), &m);
        let want = (f * f.transpose()).scale(0.1);
        assert!(p.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn update_scalar_gain() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let est = ckf_update(&Vector4::ZERO, &Matrix4::identity(), &m, 0.0).unwrap();
        assert!((est.gain - Vector4::new([1.0 / 1.1, 0.0, 0.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn update_uninformative_measurement() {
        let m = model([1.0, 0.0, 0.0, 0.0], 1e12);
        let x = Vector4::new([0.3, -0.2, 0.1, 0.05]);
        let est = ckf_update(&x, &Matrix4::scalar(0.1), &m, 7.0).unwrap();
        assert!(est.gain.max_abs() < 1e-12);
        assert!((est.x_post - x).max_abs() < 1e-10);
    }

    #[test]
    fn update_zero_innovation() {
        let m = model([0.0, 0.0, 1.0, 0.0], 0.5);
        let x = Vector4::new([0.3, -0.2, 0.1, 0.05]);
        let est = ckf_update(&x, &Matrix4::scalar(0.1), &m, 0.1).unwrap();
        assert_eq!(est.innovation, 0.0);
        assert_eq!(est.x_post, x);
    }

    #[test]
    fn update_rejects_degenerate_innovation() {
        let mut m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        m.r = 0.0;
        let err = ckf_update(&Vector4::ZERO, &Matrix4::zeros(), &m, 1.0).unwrap_err();
        assert_eq!(err, FilterError::DegenerateInnovation(0.0));
    }

    #[test]
    fn model_validation() {
        let f = default_f();
        let h = RowVector4::new([1.0, 0.0, 0.0, 0.0]);
        assert!(FilterModel::new(f, h, Matrix4::zeros(), 0.0).is_err());
        assert!(FilterModel::new(f, h, Matrix4::diag([1.0, -1.0, 0.0, 0.0]), 0.1).is_err());
    }

    #[test]
    fn mukf_consistent_measurement_keeps_prior() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let xb = Vector4::new([0.2, 0.0, -0.1, 0.0]);
        let s = mukf_step(&xb, &Matrix4::scalar(0.1), &m, 0.2, None).unwrap();
        assert!((s.x_m - xb).max_abs() < 1e-15);
    }

    #[test]
    fn mukf_matches_ckf_update() {
        let m = model([0.0, 0.0, 1.0, 0.0], 0.5);
        let xb = Vector4::new([0.1, -0.05, 0.3, 0.02]);
        let p = Matrix4::new([
            [0.2, 0.01, 0.03, 0.0],
            [0.01, 0.1, 0.0, 0.02],
            [0.03, 0.0, 0.3, 0.01],
            [0.0, 0.02, 0.01, 0.15],
        ]);
        let s = mukf_step(&xb, &p, &m, 0.9, None).unwrap();
        let c = ckf_update(&xb, &p, &m, 0.9).unwrap();
        assert!((s.x_m - c.x_post).max_abs() < 1e-12);
        assert!(s.m.max_abs_diff(&c.p_post) < 1e-12);
        let (xn, pn) = ckf_predict(&c.x_post, &c.p_post, &m);
        assert!((s.x_bar_plus - xn).max_abs() < 1e-12);
        assert!(s.p_plus.max_abs_diff(&pn) < 1e-12);
    }

    #[test]
    fn mukf_near_certain_prior() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let xb = Vector4::new([0.2, 0.1, 0.0, 0.0]);
        let s = mukf_step(&xb, &Matrix4::scalar(1e-8), &m, 5.0, None).unwrap();
        assert!((s.x_m - xb).max_abs() < 1e-6);
    }

    #[test]
    fn mukf_singular_prior() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let err = mukf_step(&Vector4::ZERO, &Matrix4::zeros(), &m, 1.0, None).unwrap_err();
        assert!(matches!(err, FilterError::Matrix(MatError::SingularMatrix { .. })));

        let s = mukf_step(&Vector4::ZERO, &Matrix4::zeros(), &m, 1.0, Some(DEFAULT_JITTER)).unwrap();
        assert!(s.jittered);
        assert!(s.x_m.max_abs() < 1e-10);
    }

    #[test]
    fn are_collapses_for_stable_noise_free_system() {
        let mut f = Matrix4::zeros();
        f[(0, 0)] = 0.5;
        let m = FilterModel::new(f, RowVector4::new([1.0, 0.0, 0.0, 0.0]), Matrix4::zeros(), 1.0)
            .unwrap();
        let ss = solve_are(&m, &Matrix4::scalar(0.1), 1e-14, 1000).unwrap();
        assert!(ss.p_inf.max_abs() < 1e-13);
        assert!(ss.rho < 1.0);
    }

    #[test]
    fn are_scalar_with_process_noise() {
        // scalar p = a^2 p r/(p + r) + q with a = 0.9, q = 1, r = 1
        let mut f = Matrix4::zeros();
        f[(0, 0)] = 0.9;
        let q = Matrix4::diag([1.0, 0.0, 0.0, 0.0]);
        let m = FilterModel::new(f, RowVector4::new([1.0, 0.0, 0.0, 0.0]), q, 1.0).unwrap();
        let ss = solve_are(&m, &Matrix4::zeros(), 1e-14, 1000).unwrap();
        // p^2 + (1 - 0.81 - 1) p - 1 = 0 → positive root
        let b: f64 = 1.0 - 0.81 - 1.0;
        let want = (-b + (b * b + 4.0).sqrt()) / 2.0;
        assert!((ss.p_inf[(0, 0)] - want).abs() < 1e-12);
        assert!((ss.k_inf[0] - 0.9 * want / (want + 1.0)).abs() < 1e-12);
        assert!((ss.rho - 0.9 / (want + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn are_reports_no_convergence() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let err = solve_are(&m, &Matrix4::scalar(0.1), 1e-12, 50).unwrap_err();
        assert!(matches!(err, FilterError::NoConvergence { iterations: 50, .. }));
        assert!(solve_are(&m, &Matrix4::scalar(0.1), 0.0, 50).is_err());
    }

    #[test]
    fn steady_predict_trivial() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let x = Vector4::new([0.1, 0.0, 0.2, 0.0]);
        let k = Vector4::new([0.3, 0.1, 0.0, -0.2]);
        let (open, y) = steady_predict(&x, &k, 0.0, &m);
        assert_eq!(open, default_f() * x);
        assert_eq!(y, open[0]);
        let (kick, _) = steady_predict(&Vector4::ZERO, &k, 1.0, &m);
        assert_eq!(kick, k);
    }

    #[test]
    fn lockstep_filters_from_same_start() {
        let m = model([1.0, 0.0, 0.0, 0.0], 0.1);
        let mut ckf = Ckf::new(m, Vector4::ZERO, Matrix4::scalar(0.1));
        let mut mkf = MicroKf::new(m, Vector4::ZERO, Matrix4::scalar(0.1), None);
        for k in 0..200 {
            let y = 0.1 * (k as f64 * 0.05).cos() + if k % 2 == 0 { 0.03 } else { -0.03 };
            let c = ckf.step(y).unwrap();
            let s = mkf.step(y).unwrap();
            assert!((c.x_post - s.x_m).max_abs() < 1e-10);
            assert!(c.p_post.max_abs_diff(&s.m) < 1e-10);
        }
        assert_eq!(mkf.jitter_events(), 0);
    }
}
