use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use slowfast::averaging::{solve_averaged_ode, KhasminskiiParams};
use slowfast::deviations::{
    gram_matrix, mark_quadrature, mdp_sweep, pseudo_inverse, rate_function, rate_function_bruteforce,
    recover_optimal_control, solve_skeleton, ControlPair, MdpSweepConfig,
};
use slowfast::levy::LevyModel;
use slowfast::model::{builtin_gauss_ou, CoefficientSet, GaussOuParams};
use slowfast::rng::{stream, Channel, RngStream};
use slowfast::segment::{InitialDatum, SamplePath};
use slowfast::Error;

const M2_ALPHA2: f64 = 0.313_328_534_328_875_4;

fn model(kappa: f64, alpha: f64) -> CoefficientSet {
    let p = GaussOuParams { kappa, kappa2: 0.0, gamma_coupling: 0.0, ..Default::default() };
    builtin_gauss_ou(p, LevyModel::gauss_light(alpha, 1).unwrap(), 1.0).unwrap()
}

/// `σ = 1`, `c = 0`.
fn diffusive(kappa: f64) -> CoefficientSet {
    let mut cs = model(kappa, 1.0).silence_slow();
    cs.sigma = Arc::new(|_, o| o[0] = 1.0);
    cs
}

fn xbar(cs: &CoefficientSet, t_end: f64, dt: f64) -> SamplePath {
    let abar = cs.abar_analytic.clone().unwrap();
    solve_averaged_ode(&|s, o| abar(s, o), &InitialDatum::constant(vec![1.0]), cs.tau, t_end, dt).unwrap()
}

fn target(tau: f64, t_end: f64, dt: f64, f: impl Fn(f64) -> f64) -> SamplePath {
    SamplePath::from_fn(1, -tau, t_end, dt, |t, o| o[0] = if t <= 0.0 { 0.0 } else { f(t) }).unwrap()
}

fn sup_gap(a: &SamplePath, b: &SamplePath) -> f64 {
    let mut v = [0.0];
    a.grid_values()
        .iter()
        .map(|(t, x)| {
            b.value_at(*t, &mut v).unwrap();
            (x[0] - v[0]).abs()
        })
        .fold(0.0, f64::max)
}

fn smooth_target(rng: &mut RngStream) -> impl Fn(f64) -> f64 {
    let coef: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |t| coef.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t / 2.0).sin()).sum()
}

#[test]
fn quadrature_reproduces_moments() {
    let q = mark_quadrature(&LevyModel::gauss_light(2.0, 1).unwrap(), 32).unwrap();
    let mass: f64 = q.weights.iter().sum();
    let m2: f64 = q.weights.iter().zip(&q.nodes).map(|(w, z)| w * z[0] * z[0]).sum();
    assert!((mass - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    assert!((m2 - M2_ALPHA2).abs() < 1e-12);
    assert!(mark_quadrature(&LevyModel::strongly_tempered(1.5, 4, 1).unwrap(), 8).is_err());
}

#[test]
fn gram_examples() {
    let cs = model(1.0, 2.0);
    let mut bare = cs.clone();
    bare.c = Arc::new(|_, z, o| o[0] = z[0]);
    let zero = SamplePath::constant_segment(1.0, &[0.0]);
    let seg = zero.segment(0.0, 1.0).unwrap();
    assert!((gram_matrix(&bare, &seg).unwrap()[0] - M2_ALPHA2).abs() < 1e-9);
    let one = SamplePath::constant_segment(1.0, &[1.0]);
    let m = 1.0 + 0.1 * 1.0f64.tanh();
    assert!((gram_matrix(&cs, &one.segment(0.0, 1.0).unwrap()).unwrap()[0] - m * m * M2_ALPHA2).abs() < 1e-9);
    assert_eq!(gram_matrix(&cs.clone().silence_slow(), &seg).unwrap(), vec![0.0]);
}

#[test]
fn skeleton_examples() {
    let cs = diffusive(1.0);
    let dt = 1e-4;
    let xb = xbar(&cs, 1.0, dt);
    let eta = solve_skeleton(&cs, &xb, &ControlPair::zero(1, 10_000, dt), dt).unwrap();
    assert_eq!(eta.sup_abs_between(-1.0, 1.0), 0.0);
    let ctrl = ControlPair::from_fns(1, 10_000, dt, |_, o| o[0] = 1.0, |_, o| o[0] = 0.0);
    let eta = solve_skeleton(&cs, &xb, &ctrl, dt).unwrap();
    let exact = target(1.0, 1.0, dt, |t| 1.0 - (-t).exp());
    assert!(sup_gap(&eta, &exact) <= 1e-3);

    let mut jumpy = model(0.0, 2.0);
    jumpy.c = Arc::new(|_, z, o| o[0] = z[0]);
    jumpy.c_nu_mean = None;
    jumpy.sigma = Arc::new(|_, o| o[0] = 0.0);
    let dt = 1e-2;
    let xb = xbar(&jumpy, 1.0, dt);
    let ctrl = ControlPair::from_fns(1, 100, dt, |_, o| o[0] = 0.0, |_, o| o[0] = 2.0);
    let eta = solve_skeleton(&jumpy, &xb, &ctrl, dt).unwrap();
    assert!((eta.last()[0] - 2.0 * M2_ALPHA2).abs() < 1e-9);
}

#[test]
fn skeleton_rejects_mismatched_grids() {
    let cs = diffusive(1.0);
    let xb = xbar(&cs, 1.0, 1e-2);
    let ctrl = ControlPair::zero(1, 100, 5e-3);
    assert!(matches!(solve_skeleton(&cs, &xb, &ctrl, 5e-3), Err(Error::Shape(_))));
    let long = ControlPair::zero(1, 200, 1e-2);
    assert!(matches!(solve_skeleton(&cs, &xb, &long, 1e-2), Err(Error::Shape(_))));
}

#[test]
fn linear_target_costs_one_half() {
    let cs = diffusive(0.0);
    let dt = 1.0 / 200.0;
    let xb = xbar(&cs, 1.0, dt);
    let eta = target(1.0, 1.0, dt, |t| t);
    let r = rate_function(&cs, &xb, &eta, dt).unwrap();
    assert!((r.value - 0.5).abs() < 1e-12);
    let ctrl = recover_optimal_control(&r).unwrap();
    assert!(ctrl.f.iter().all(|&f| (f - 1.0).abs() < 1e-12));
    let bf = rate_function_bruteforce(&cs, &xb, &eta, dt, 32).unwrap();
    assert!((bf.value - 0.5).abs() <= 1e-6 * 0.5, "{}", bf.value);
}

#[test]
fn zero_target_costs_nothing() {
    let cs = model(1.0, 2.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let eta = target(1.0, 1.0, dt, |_| 0.0);
    let r = rate_function(&cs, &xb, &eta, dt).unwrap();
    assert_eq!(r.value, 0.0);
    let ctrl = recover_optimal_control(&r).unwrap();
    assert!(ctrl.f.iter().all(|&f| f == 0.0));
}

#[test]
fn nonzero_history_is_a_domain_error() {
    let cs = diffusive(0.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let eta = SamplePath::from_fn(1, -1.0, 1.0, dt, |t, o| o[0] = t + 1.0).unwrap();
    assert!(matches!(rate_function(&cs, &xb, &eta, dt), Err(Error::Domain(_))));
}

#[test]
fn unreachable_targets_have_infinite_rate() {
    let cs = model(1.0, 2.0).silence_slow();
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let eta = target(1.0, 1.0, dt, |t| t);
    let r = rate_function(&cs, &xb, &eta, dt).unwrap();
    assert!(r.value.is_infinite() && r.residual_norm > 1e-8);
    assert!(recover_optimal_control(&r).is_err());
    let bf = rate_function_bruteforce(&cs, &xb, &eta, dt, 16).unwrap();
    assert!(bf.value.is_infinite());
}

#[test]
fn both_evaluations_agree_on_random_targets() {
    let cs = model(1.0, 2.0);
    let dt = 1.0 / 200.0;
    let xb = xbar(&cs, 1.0, dt);
    let mut rng = stream(17, Channel::Probe, 0);
    for _ in 0..5 {
        let eta = target(1.0, 1.0, dt, smooth_target(&mut rng));
        let a = rate_function(&cs, &xb, &eta, dt).unwrap().value;
        let b = rate_function_bruteforce(&cs, &xb, &eta, dt, 32).unwrap().value;
        assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
    }
}

#[test]
fn rate_is_quadratic() {
    let cs = model(1.0, 2.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let base = rate_function(&cs, &xb, &target(1.0, 1.0, dt, |t| t * t - 0.3 * t), dt).unwrap().value;
    for c in [0.5, 2.0, 3.0] {
        let scaled = rate_function(&cs, &xb, &target(1.0, 1.0, dt, |t| c * (t * t - 0.3 * t)), dt).unwrap().value;
        assert!((scaled - c * c * base).abs() <= 1e-8 * c * c * base);
    }
}

#[test]
fn recovered_controls_reproduce_targets() {
    let cs = model(1.0, 2.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let mut rng = stream(3, Channel::Probe, 1);
    for _ in 0..5 {
        let eta = target(1.0, 1.0, dt, smooth_target(&mut rng));
        let r = rate_function(&cs, &xb, &eta, dt).unwrap();
        let back = solve_skeleton(&cs, &xb, &recover_optimal_control(&r).unwrap(), dt).unwrap();
        assert!(sup_gap(&back, &eta) <= 10.0 * dt);
        let cost = recover_optimal_control(&r).unwrap().cost(&cs, &xb).unwrap();
        assert!((cost - r.value).abs() <= 1e-9 * r.value.max(1.0));
    }
}

#[test]
fn representer_and_raw_forms_agree() {
    let cs = model(1.0, 2.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let ctrl = ControlPair::from_fns(1, 100, dt, |t, o| o[0] = t.cos(), |t, o| o[0] = 1.0 - t);
    let raw = ctrl.to_raw(&cs, &xb, &mark_quadrature(&cs.levy, 32).unwrap()).unwrap();
    let a = solve_skeleton(&cs, &xb, &ctrl, dt).unwrap();
    let b = solve_skeleton(&cs, &xb, &raw, dt).unwrap();
    assert!(sup_gap(&a, &b) < 1e-9);
    assert!((ctrl.cost(&cs, &xb).unwrap() - raw.cost(&cs, &xb).unwrap()).abs() < 1e-9);
}

#[test]
fn pseudo_inverse_is_consistent() {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    let (p, _) = pseudo_inverse(&m);
    assert!((&m * &p * &m - &m).amax() < 1e-10);
}

#[test]
fn skeleton_paths_are_equicontinuous_under_a_budget() {
    let cs = model(1.0, 2.0);
    let dt = 1e-2;
    let xb = xbar(&cs, 1.0, dt);
    let budget = 2.0;
    let g_max = (1.0 + 0.1f64) * (1.0 + 0.1f64) * M2_ALPHA2;
    // |η(t) − η(s)| ≤ L C |t − s| + √(2M(1 + G)) √|t − s| with C = √(2M(1 + G)) e^{L T}.
    let c_sup = (2.0 * budget * (1.0 + g_max)).sqrt() * cs.constants.l.exp();
    let bound = |h: f64| cs.constants.l * c_sup * h + (2.0 * budget * (1.0 + g_max)).sqrt() * h.sqrt();
    let mut rng = stream(8, Channel::Probe, 2);
    for _ in 0..100 {
        let amp: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let freq: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..20.0)).collect();
        let amp2 = amp.clone();
        let freq2 = freq.clone();
        let mut ctrl = ControlPair::from_fns(
            1,
            100,
            dt,
            move |t, o| o[0] = amp[0] * (freq[0] * t).sin() + amp[1] * (freq[1] * t).cos(),
            move |t, o| o[0] = amp2[2] * (freq2[2] * t).sin() + amp2[3] * (freq2[3] * t).cos(),
        );
        let cost = ctrl.cost(&cs, &xb).unwrap();
        let scale = (budget / cost).sqrt().min(1.0);
        ctrl.f.iter_mut().for_each(|v| *v *= scale);
        if let slowfast::deviations::MarkControl::Representer { lambda } = &mut ctrl.g {
            lambda.iter_mut().for_each(|v| *v *= scale);
        }
        assert!(ctrl.cost(&cs, &xb).unwrap() <= budget * (1.0 + 1e-12));
        let eta = solve_skeleton(&cs, &xb, &ctrl, dt).unwrap();
        let vals: Vec<f64> = eta.grid_values().into_iter().filter(|(t, _)| *t >= 0.0).map(|(_, x)| x[0]).collect();
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                let h = (j - i) as f64 * dt;
                assert!((vals[j] - vals[i]).abs() <= bound(h) + 1e-12);
            }
        }
    }
}

#[test]
fn oscillating_perturbations_wash_out() {
    let cs = model(1.0, 2.0);
    let dt = 1e-3;
    let xb = xbar(&cs, 1.0, dt);
    let base =
        solve_skeleton(&cs, &xb, &ControlPair::from_fns(1, 1000, dt, |t, o| o[0] = t, |_, o| o[0] = 0.5), dt).unwrap();
    let gaps: Vec<f64> = [10.0, 40.0, 160.0]
        .iter()
        .map(|&n| {
            let ctrl = ControlPair::from_fns(1, 1000, dt, move |t, o| o[0] = t + (n * t).sin(), |_, o| o[0] = 0.5);
            sup_gap(&solve_skeleton(&cs, &xb, &ctrl, dt).unwrap(), &base)
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn sweep_with_unreachable_threshold_is_censored() {
    let cs = model(1.0, 1.0);
    let cfg = MdpSweepConfig {
        eps_grid: vec![0.2, 0.1],
        delta: 1e6,
        delta_avg: 1e6,
        n_paths: 20,
        dt_ratio: 20.0,
        t_end: 1.0,
        seed: 3,
    };
    let sweep =
        mdp_sweep(&cs, &InitialDatum::constant(vec![1.0]), &[0.0], &cfg, &KhasminskiiParams::default()).unwrap();
    assert_eq!(sweep.rows.len(), 2);
    assert!(sweep.rows.iter().all(|r| r.censored && r.p.p_hat == 0.0 && r.eps_theta_log_p.is_nan()));
    assert!(!sweep.warnings.is_empty());
}

#[test]
fn sweep_log_probabilities_are_negative() {
    let cs = model(1.0, 1.0);
    let cfg = MdpSweepConfig {
        eps_grid: vec![0.2, 0.1],
        delta: 0.3,
        delta_avg: 0.1,
        n_paths: 200,
        dt_ratio: 20.0,
        t_end: 1.0,
        seed: 5,
    };
    let sweep =
        mdp_sweep(&cs, &InitialDatum::constant(vec![1.0]), &[0.0], &cfg, &KhasminskiiParams::default()).unwrap();
    for r in sweep.rows.iter().filter(|r| !r.censored) {
        assert!(r.eps_theta_log_p < 0.0 || r.p.p_hat == 1.0);
    }
    assert!(mdp_sweep(
        &cs,
        &InitialDatum::constant(vec![1.0]),
        &[0.0],
        &MdpSweepConfig { eps_grid: vec![0.1, 0.2], ..cfg },
        &KhasminskiiParams::default()
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rate_never_exceeds_a_witness_cost(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.0f64..6.0) {
        let cs = model(1.0, 2.0);
        let dt = 2e-2;
        let xb = xbar(&cs, 1.0, dt);
        let ctrl = ControlPair::from_fns(1, 50, dt, move |t, o| o[0] = a * (w * t).cos(), move |t, o| o[0] = b * t);
        let eta = solve_skeleton(&cs, &xb, &ctrl, dt).unwrap();
        let rate = rate_function(&cs, &xb, &eta, dt).unwrap().value;
        prop_assert!(rate <= ctrl.cost(&cs, &xb).unwrap() + 1e-8);
    }
}
