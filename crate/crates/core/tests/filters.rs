//! Steady-state behavior and filter-level checks that need the full model.

use sattrack::filters::{
    ckf_predict, ckf_update, riccati_step, solve_are, Ckf, SteadyPredictor,
};
use sattrack::harness::{monte_carlo, run_once, ExperimentConfig, RunStreams, X0Mode};
use sattrack::noise::{gaussian_vec, SeededRng};
use sattrack::orbit::{
    build_a, from_deviation, nonlinear_derivative, rk4_step, to_deviation, OrbitParams, PolarState,
};
use sattrack::{Matrix4, MeasurementType, Vector4};

/// Type 2 (angle channel) is observable; process noise on every state makes
/// the Riccati fixed point unique and stabilizing.
fn detectable_config(q: f64) -> ExperimentConfig {
    ExperimentConfig { mtype: MeasurementType::Type2, delta_q: Matrix4::scalar(q), ..Default::default() }
}

fn predicted_covariance_after(cfg: &ExperimentConfig, steps: usize) -> Matrix4 {
    let model = cfg.filter_model().unwrap();
    let (mut x, mut p) = (cfg.x0_mean, cfg.tau_p0);
    let mut last = p;
    for _ in 0..steps {
        let (xp, pp) = ckf_predict(&x, &p, &model);
        last = pp;
        let e = ckf_update(&xp, &pp, &model, 0.0).unwrap();
        x = e.x_post;
        p = e.p_post;
    }
    last
}

#[test]
fn riccati_fixed_point_matches_time_varying_filter() {
    let cfg = detectable_config(1e-4);
    let model = cfg.filter_model().unwrap();
    let ss = solve_are(&model, &cfg.tau_p0, 1e-14, 100_000).unwrap();
    assert!(ss.residual < 1e-14);
    assert!(ss.rho < 1.0, "rho {}", ss.rho);
    let p10k = predicted_covariance_after(&cfg, 10_000);
    assert!(ss.p_inf.max_abs_diff(&p10k) < 1e-8, "{:e}", ss.p_inf.max_abs_diff(&p10k));
    assert!(sattrack::noise::is_psd(&ss.p_inf, 1e-12));
    // the fixed point satisfies the equation, not just the stopping rule
    assert!(riccati_step(&ss.p_inf, &model).max_abs_diff(&ss.p_inf) < 1e-13);
}

#[test]
fn steady_state_insensitive_to_tolerance() {
    let cfg = detectable_config(1e-4);
    let model = cfg.filter_model().unwrap();
    let loose = solve_are(&model, &cfg.tau_p0, 1e-8, 100_000).unwrap();
    let tight = solve_are(&model, &cfg.tau_p0, 1e-12, 100_000).unwrap();
    let gap = loose.p_inf.max_abs_diff(&tight.p_inf);
    assert!(gap < 1e-7, "{gap:e}");
    assert!(loose.iterations < tight.iterations);
}

#[test]
fn stable_scaled_transition_collapses_without_process_noise() {
    for mtype in MeasurementType::ALL {
        let cfg = ExperimentConfig { mtype, ..Default::default() };
        let mut model = cfg.filter_model().unwrap();
        model.f = model.f.scale(0.99);
        let ss = solve_are(&model, &cfg.tau_p0, 1e-14, 100_000).unwrap();
        assert!(ss.p_inf.max_abs() < 1e-10, "{mtype}: {:e}", ss.p_inf.max_abs());
        assert!(ss.rho < 1.0);
    }
}

#[test]
fn unobservable_angle_mode_blocks_stabilization() {
    // x3 never enters the range measurement and F keeps it fixed, so
    // F − K H has eigenvalue 1 for every gain.
    let cfg = ExperimentConfig::default();
    let model = cfg.filter_model().unwrap();
    let e3 = Vector4::new([0.0, 0.0, 1.0, 0.0]);
    assert_eq!(model.f * e3, e3);
    assert_eq!(model.h.dot(&e3), 0.0);
    let any_gain = Vector4::new([0.3, -0.2, 0.7, 0.1]);
    let closed = model.f - any_gain.outer(&model.h.transpose());
    assert!(closed.spectral_radius(1e-12).unwrap() >= 1.0 - 1e-9);
}

#[test]
fn steady_predictor_pays_only_a_transient_penalty() {
    // compare one-step prediction errors of the steady predictor and the
    // time-varying filter on the same measurements
    // the time-varying filter is only optimal when its prior matches the truth
    let cfg = ExperimentConfig { n_steps: 4000, x0_mode: X0Mode::Sampled, ..detectable_config(1e-4) };
    let model = cfg.filter_model().unwrap();
    let ss = solve_are(&model, &cfg.tau_p0, 1e-14, 100_000).unwrap();

    let runs = 40;
    let windows = [(0usize, 200usize), (3000, 4000)];
    let mut excess = [0.0f64; 2];
    let mut base = [0.0f64; 2];
    for j in 0..runs {
        let mut streams = RunStreams::for_run(cfg.seed, j);
        let truth = sattrack::harness::generate_truth(&cfg, &mut streams).unwrap();
        let mut ckf = Ckf::new(model, cfg.x0_mean, cfg.tau_p0);
        let mut steady = SteadyPredictor::new(model, ss.k_inf, model.f * cfg.x0_mean);
        for (k, (&y, x)) in truth.measurements.iter().zip(&truth.states).enumerate() {
            let est = ckf.step(y).unwrap();
            let e_tv = (*x - est.x_pred).map(|v| v * v);
            let e_ss = (*x - steady.prediction()).map(|v| v * v);
            steady.step(y);
            for (w, &(lo, hi)) in windows.iter().enumerate() {
                if (lo..hi).contains(&k) {
                    base[w] += e_tv.0.iter().sum::<f64>();
                    excess[w] += e_ss.0.iter().sum::<f64>() - e_tv.0.iter().sum::<f64>();
                }
            }
        }
    }
    let early = excess[0] / base[0];
    let late = excess[1] / base[1];
    assert!(early > 0.0, "steady predictor should be worse during the transient: {early}");
    assert!(late.abs() < 0.05 * early.max(1.0), "late relative excess {late} vs early {early}");
}

#[test]
fn nonlinear_rate_matches_linearization() {
    let p = OrbitParams::default();
    let a = build_a(&p);
    let mut rng = SeededRng::new(4);
    for _ in 0..20 {
        let dir = gaussian_vec(&mut rng, &Vector4::ZERO, &Matrix4::identity()).unwrap();
        let x = dir.scale(1e-4 / dir.max_abs());
        let t = 0.3;
        let s = from_deviation(&x, t, &p);
        let d = nonlinear_derivative(&s, &p).unwrap();
        let xdot = Vector4::new([d.r_dot, d.r_ddot, p.radius() * (d.theta_dot - p.omega()), p.radius() * d.theta_ddot]);
        let gap = (xdot - a * x).max_abs();
        assert!(gap < 10.0 * 1e-8, "gap {gap:e}");
    }
}

#[test]
fn rk4_global_order_is_four() {
    let p = OrbitParams::default();
    let s0 = PolarState { r: 1.3, r_dot: 0.1, theta: 0.0, theta_dot: 0.8 };
    let integrate = |steps: usize| {
        let dt = 2.0 / steps as f64;
        (0..steps).fold(s0, |s, _| rk4_step(&s, &p, dt).unwrap())
    };
    let reference = integrate(4096);
    let err = |steps| {
        let s = integrate(steps);
        (s.r - reference.r).abs().max((s.theta - reference.theta).abs())
    };
    let order = (err(20) / err(40)).log2();
    assert!((3.7..4.3).contains(&order), "order {order}");
    // deviation map stays consistent along the way
    let x = to_deviation(&reference, 2.0, &p);
    assert!((from_deviation(&x, 2.0, &p).r - reference.r).abs() < 1e-14);
}

#[test]
fn noise_free_errors_decay() {
    let cfg = ExperimentConfig { synthesize_noise: false, ..Default::default() };
    let r = run_once(&cfg, 0).unwrap();
    assert!(r.msee.kappa.max_abs() < 1e-4, "{:?}", r.msee.kappa);
    assert!(r.msee.gamma.max_abs() < 1e-4, "{:?}", r.msee.gamma);
    let first = r.trace.beta[0].max_abs();
    assert!(r.trace.beta.last().unwrap().max_abs() < 0.1 * first);
}

#[test]
fn type1_run_lands_in_published_spread() {
    // per-run x1 MSEE in the reference runs spans 0.0010..0.0043
    let cfg = ExperimentConfig { runs: 20, seed: 8, ..Default::default() };
    let mc = monte_carlo(&cfg).unwrap();
    let inside = mc.runs.iter().filter(|r| (0.0005..=0.01).contains(&r.kappa[0])).count();
    assert!(inside >= 18, "{inside}/20");
}

#[test]
fn measurement_residual_variance() {
    let cfg = ExperimentConfig::default();
    let mut streams = RunStreams::for_run(123, 0);
    let t = sattrack::harness::generate_truth(&cfg, &mut streams).unwrap();
    let res: Vec<f64> = t.measurements.iter().zip(&t.states).map(|(y, x)| y - x[0]).collect();
    let mean = res.iter().sum::<f64>() / res.len() as f64;
    let var = res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (res.len() - 1) as f64;
    assert!((var - 0.1).abs() < 0.02, "{var}");
}

#[test]
fn amsee_standard_error_shrinks_with_more_runs() {
    // spread of the run average over independent meta-experiments
    let spread = |runs: usize| {
        let xs: Vec<f64> = (0..40u64)
            .map(|m| {
                let cfg = ExperimentConfig { runs, n_steps: 200, seed: 1000 + m, ..Default::default() };
                monte_carlo(&cfg).unwrap().amsee.xi_gamma[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    };
    let ratio = spread(10) / spread(20);
    assert!((1.0..2.0).contains(&ratio), "ratio {ratio} (expected about 1.41)");
}
