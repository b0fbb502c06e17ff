use std::sync::Arc;

use slowfast::averaging::solve_averaged_ode;
use slowfast::engine::{
    integrate_averaged_controlled, integrate_controlled, integrate_frozen_fast, integrate_multiscale, ControlledInputs,
    IntegratorConfig,
};
use slowfast::levy::LevyModel;
use slowfast::model::{builtin_gauss_ou, CoefficientSet, GaussOuParams};
use slowfast::rng::PathStreams;
use slowfast::segment::{InitialDatum, SamplePath};
use slowfast::stats::mean_se;
use slowfast::Error;

fn ou(params: GaussOuParams) -> CoefficientSet {
    builtin_gauss_ou(params, LevyModel::gauss_light(1.0, 1).unwrap(), 1.0).unwrap()
}

fn decoupled() -> GaussOuParams {
    GaussOuParams { kappa: 1.0, kappa2: 0.0, gamma_coupling: 0.0, ..Default::default() }
}

fn final_value(p: &SamplePath) -> f64 {
    p.last()[0]
}

#[test]
fn noiseless_slow_decays_exponentially() {
    let cs = ou(decoupled()).silence_slow().silence_fast();
    let cfg = IntegratorConfig::new(0.01, 1e-3, 1.0, 1.0, 7);
    let run = integrate_multiscale(&cs, &cfg, &InitialDatum::constant(vec![1.0]), &[0.0], &mut PathStreams::new(7, 0))
        .unwrap();
    assert!((final_value(&run.slow) - (-1.0f64).exp()).abs() <= 2.0 * cfg.dt);
}

#[test]
fn noiseless_fast_relaxes_on_the_fast_scale() {
    let cs = ou(decoupled()).silence_slow().silence_fast();
    let cfg = IntegratorConfig::new(0.01, 1e-4, 0.1, 1.0, 7);
    let run = integrate_multiscale(&cs, &cfg, &InitialDatum::constant(vec![1.0]), &[1.0], &mut PathStreams::new(7, 0))
        .unwrap();
    let y = final_value(&run.fast);
    assert!(y.abs() <= (-10.0f64).exp() + cfg.dt / cfg.epsilon);
}

#[test]
fn zero_state_is_an_equilibrium() {
    let mut cs = ou(decoupled());
    cs = cs.silence_slow();
    cs.g = Arc::new(|_, y, o| o[0] = y[0]);
    let cs = cs.without_fast_jumps();
    let cfg = IntegratorConfig::new(0.01, 1e-3, 1.0, 1.0, 3);
    let run = integrate_multiscale(&cs, &cfg, &InitialDatum::constant(vec![0.0]), &[0.0], &mut PathStreams::new(3, 0))
        .unwrap();
    assert!((0..run.slow.len()).all(|i| run.slow.knot(i)[0] == 0.0));
    assert!((0..run.fast.len()).all(|i| run.fast.knot(i)[0] == 0.0));
}

#[test]
fn trivial_controls_reproduce_the_uncontrolled_path() {
    let cs = ou(GaussOuParams::default());
    let cfg = IntegratorConfig::new(0.05, 5e-3, 1.0, 1.0, 11);
    let chi = InitialDatum::constant(vec![0.5]);
    let a = integrate_multiscale(&cs, &cfg, &chi, &[0.2], &mut PathStreams::new(11, 4)).unwrap();
    let b =
        integrate_controlled(&cs, &cfg, &chi, &[0.2], &ControlledInputs::none(), &mut PathStreams::new(11, 4)).unwrap();
    assert_eq!(a.slow, b.slow);
    assert_eq!(a.fast, b.fast);
    assert!(!a.slow.jumps().is_empty());
}

#[test]
fn identical_seeds_give_identical_paths() {
    let cs = ou(GaussOuParams { gamma_coupling: 0.5, ..Default::default() });
    let cfg = IntegratorConfig::new(0.05, 5e-3, 1.0, 1.0, 2);
    let chi = InitialDatum::constant(vec![1.0]);
    let a = integrate_multiscale(&cs, &cfg, &chi, &[0.0], &mut PathStreams::new(2, 9)).unwrap();
    let b = integrate_multiscale(&cs, &cfg, &chi, &[0.0], &mut PathStreams::new(2, 9)).unwrap();
    let c = integrate_multiscale(&cs, &cfg, &chi, &[0.0], &mut PathStreams::new(2, 10)).unwrap();
    assert_eq!(a.slow, b.slow);
    assert_ne!(a.slow, c.slow);
}

#[test]
fn constant_control_forces_the_slow_equation() {
    let cs = ou(decoupled()).silence_fast().silence_slow();
    let controls = ControlledInputs::new(
        Arc::new(|_, o: &mut [f64]| {
            o[0] = 1.0;
            o[1] = 0.0;
        }),
        Arc::new(|_, _| 1.0),
        1.0,
        1.0,
        1.0,
    )
    .unwrap();
    let mut unit_sigma = cs.clone();
    unit_sigma.sigma = Arc::new(|_, o| o[0] = 1.0);
    let cfg = IntegratorConfig { allow_coarse_dt: true, ..IntegratorConfig::new(1e-12, 1e-3, 1.0, 1.0, 5) };
    let run = integrate_controlled(
        &unit_sigma,
        &cfg,
        &InitialDatum::constant(vec![0.0]),
        &[0.0],
        &controls,
        &mut PathStreams::new(5, 0),
    )
    .unwrap();
    let exact = 1.0 - (-1.0f64).exp();
    assert!((final_value(&run.slow) - exact).abs() <= 2.0 * cfg.dt, "{}", final_value(&run.slow));
}

#[test]
fn over_budget_controls_are_rejected() {
    let cs = ou(decoupled());
    let controls =
        ControlledInputs::new(Arc::new(|_, o: &mut [f64]| o.fill(3.0)), Arc::new(|_, _| 1.0), 1.0, 0.1, 0.5).unwrap();
    let cfg = IntegratorConfig::new(0.05, 5e-3, 1.0, 1.0, 5);
    let err = integrate_controlled(
        &cs,
        &cfg,
        &InitialDatum::constant(vec![0.0]),
        &[0.0],
        &controls,
        &mut PathStreams::new(5, 0),
    );
    assert!(matches!(err, Err(Error::Contract(_))));
}

#[test]
fn symmetric_tilt_adds_no_drift() {
    let cs = ou(decoupled()).silence_fast();
    let psi = 0.5;
    let a_eps = 0.3;
    let phi = move |_: f64, _: &[f64]| 1.0 + a_eps * psi;
    let drift = cs.levy.nu_integral(&|z, o| o[0] = z[0] * (phi(0.0, z) - 1.0), 1).unwrap().value[0];
    assert!(drift.abs() < 1e-12);
}

#[test]
fn coarse_step_needs_override() {
    let cs = ou(decoupled());
    let cfg = IntegratorConfig::new(0.01, 0.01, 1.0, 1.0, 5);
    let err = integrate_multiscale(&cs, &cfg, &InitialDatum::constant(vec![0.0]), &[0.0], &mut PathStreams::new(5, 0));
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn averaged_noiseless_run_matches_the_ode_solver() {
    let cs = ou(GaussOuParams { kappa2: 0.25, ..decoupled() }).silence_slow();
    let cfg = IntegratorConfig::new(0.01, 1e-3, 2.0, 1.0, 1);
    let chi = InitialDatum::affine(vec![1.0], vec![0.5]);
    let run =
        integrate_averaged_controlled(&cs, &cfg, &chi, &ControlledInputs::none(), &mut PathStreams::new(1, 0)).unwrap();
    let abar = cs.abar_analytic.clone().unwrap();
    let ode = solve_averaged_ode(&|s, o| abar(s, o), &chi, 1.0, 2.0, 1e-3).unwrap();
    assert_eq!(run.slow.times(), ode.times());
    for i in 0..ode.len() {
        assert_eq!(run.slow.knot(i), ode.knot(i));
    }
}

#[test]
fn averaged_noiseless_run_decays() {
    let cs = ou(decoupled()).silence_slow();
    let cfg = IntegratorConfig::new(0.01, 1e-3, 1.0, 1.0, 1);
    let run = integrate_averaged_controlled(
        &cs,
        &cfg,
        &InitialDatum::constant(vec![1.0]),
        &ControlledInputs::none(),
        &mut PathStreams::new(1, 0),
    )
    .unwrap();
    assert!((final_value(&run.slow) - (-1.0f64).exp()).abs() <= 2.0 * cfg.dt);
}

#[test]
fn averaged_noise_shrinks_with_epsilon() {
    let cs = ou(decoupled());
    let chi = InitialDatum::constant(vec![1.0]);
    let mut reference = cs.clone().silence_slow();
    reference.sigma = Arc::new(|_, o| o[0] = 0.0);
    let frac = |eps: f64| {
        let cfg = IntegratorConfig::new(eps, 1e-2, 1.0, 1.0, 21);
        let cfg = IntegratorConfig { allow_coarse_dt: true, ..cfg };
        let base = integrate_averaged_controlled(
            &reference,
            &cfg,
            &chi,
            &ControlledInputs::none(),
            &mut PathStreams::new(0, 0),
        )
        .unwrap();
        let mut dev = Vec::new();
        for i in 0..200 {
            let run =
                integrate_averaged_controlled(&cs, &cfg, &chi, &ControlledInputs::none(), &mut PathStreams::new(21, i))
                    .unwrap();
            let mut worst: f64 = 0.0;
            let mut v = [0.0];
            for (t, x) in run.slow.grid_values() {
                base.slow.value_at(t, &mut v).unwrap();
                worst = worst.max((x[0] - v[0]).abs());
            }
            dev.push(worst);
        }
        dev.iter().filter(|&&d| d < 0.05).count() as f64 / dev.len() as f64
    };
    let fine = frac(1e-4);
    assert!(fine >= 0.95, "{fine}");
    assert!(frac(1e-2) < fine);
}

#[test]
fn slow_variance_scales_with_epsilon() {
    let levy = LevyModel::gauss_light(1.0, 1).unwrap();
    let mut cs = CoefficientSet::zero("bm", 1, 1, 1.0, levy);
    cs.sigma = Arc::new(|_, o| o[0] = 1.0);
    let eps = 0.01;
    let cfg = IntegratorConfig::new(eps, 1e-3, 1.0, 1.0, 0);
    let finals: Vec<f64> = (0..10_000)
        .map(|i| {
            let run = integrate_multiscale(
                &cs,
                &cfg,
                &InitialDatum::constant(vec![0.0]),
                &[0.0],
                &mut PathStreams::new(99, i),
            )
            .unwrap();
            final_value(&run.slow)
        })
        .collect();
    let sq: Vec<f64> = finals.iter().map(|x| x * x).collect();
    let (m, se) = mean_se(&sq);
    assert!((m - eps).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn frozen_variance_approaches_the_stationary_value() {
    let cs = ou(GaussOuParams::default()).without_fast_jumps();
    let zeta = SamplePath::constant_segment(1.0, &[1.0]);
    let seg = zeta.segment(0.0, 1.0).unwrap();
    let finals: Vec<f64> = (0..10_000)
        .map(|i| {
            let p = integrate_frozen_fast(&cs, &seg, &[0.0], 5.0, 1e-2, &mut PathStreams::new(5, i)).unwrap();
            p.last()[0].powi(2)
        })
        .collect();
    let (m, se) = mean_se(&finals);
    let exact = 0.5 * (1.0 - (-10.0f64).exp());
    assert!((m - exact).abs() <= 3.0 * se + 0.01, "{m} ± {se}");
}

#[test]
fn frozen_noiseless_decay() {
    let cs = ou(GaussOuParams::default()).silence_fast();
    let zeta = SamplePath::constant_segment(1.0, &[1.0]);
    let seg = zeta.segment(0.0, 1.0).unwrap();
    let p = integrate_frozen_fast(&cs, &seg, &[2.0], 1.0, 1e-4, &mut PathStreams::new(5, 0)).unwrap();
    assert!((p.last()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-3);
}

#[test]
fn frozen_chain_started_stationary_stays_stationary() {
    let cs = ou(GaussOuParams::default());
    let zeta = SamplePath::constant_segment(1.0, &[0.3]);
    let seg = zeta.segment(0.0, 1.0).unwrap();
    let sampler = cs.invariant_sampler.clone().unwrap();
    let mut at = [Vec::new(), Vec::new()];
    for i in 0..4000 {
        let mut streams = PathStreams::new(8, i);
        let mut y0 = [0.0];
        sampler(&seg, &mut streams.initial, &mut y0);
        let p = integrate_frozen_fast(&cs, &seg, &y0, 2.0, 1e-2, &mut streams).unwrap();
        at[0].push(y0[0] * y0[0]);
        at[1].push(p.last()[0].powi(2));
    }
    let (m0, s0) = mean_se(&at[0]);
    let (m1, s1) = mean_se(&at[1]);
    assert!((m0 - m1).abs() <= 3.0 * (s0 * s0 + s1 * s1).sqrt() + 0.01, "{m0} vs {m1}");
}

#[test]
fn nonfinite_state_reports_blow_up() {
    let mut cs = ou(decoupled()).silence_fast();
    cs.a = Arc::new(|s, _, o| o[0] = s.at_scalar(0.0).powi(2) * 1e3);
    let cfg = IntegratorConfig::new(0.05, 5e-3, 5.0, 1.0, 5);
    let err = integrate_multiscale(
        &cs.silence_slow(),
        &cfg,
        &InitialDatum::constant(vec![10.0]),
        &[0.0],
        &mut PathStreams::new(5, 0),
    );
    match err {
        Err(Error::BlowUp { last_finite_time, .. }) => assert!(last_finite_time < 5.0),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn exit_probability_falls_with_radius() {
    let cs = ou(GaussOuParams { gamma_coupling: 0.5, ..Default::default() });
    let chi = InitialDatum::constant(vec![0.5]);
    let exits: Vec<usize> = [0.55, 0.7, 1.0]
        .iter()
        .map(|&r| {
            (0..100)
                .filter(|&i| {
                    let cfg = IntegratorConfig {
                        localization_radius: Some(r),
                        ..IntegratorConfig::new(0.1, 1e-2, 1.0, 1.0, 0)
                    };
                    integrate_multiscale(&cs, &cfg, &chi, &[0.0], &mut PathStreams::new(4, i))
                        .unwrap()
                        .exit_time
                        .is_some()
                })
                .count()
        })
        .collect();
    assert!(exits[0] >= exits[1] && exits[1] >= exits[2], "{exits:?}");
}
