//! Subcommand bodies. Each fills an [`Artifacts`] set and returns a summary.

use std::fmt::Write as _;

use slowfast::averaging::{
    default_burn_in, estimate_abar, estimate_invariant, estimate_mixing, khasminskii_run, map_replicas,
    solve_averaged_ode,
};
use slowfast::deviations::{
    mdp_sweep, mdp_sweep_csv, rate_function, rate_function_bruteforce, recover_optimal_control, solve_skeleton,
    ControlPair,
};
use slowfast::engine::{integrate_averaged_controlled, integrate_multiscale, ControlledInputs, IntegratorConfig};
use slowfast::model::{validate_conditions, ConditionReport};
use slowfast::rng::{child_seed, stream, Channel, PathStreams};
use slowfast::segment::{SamplePath, Segment};
use slowfast::stats::median;

use crate::config::ExperimentConfig;
use crate::output::Artifacts;
use crate::CliError;

pub const SUBCOMMANDS: [&str; 9] =
    ["validate", "simulate", "invariant", "abar", "averaged", "khasminskii", "skeleton", "rate", "mdp-sweep"];

/// Probes used for the condition summary attached to every manifest.
const MANIFEST_PROBES: usize = 200;

pub fn conditions(cfg: &ExperimentConfig, probes: usize) -> Result<Vec<ConditionReport>, CliError> {
    let cs = cfg.coefficient_set()?;
    let mut rng = stream(cfg.integrator.seed, Channel::Probe, 0);
    Ok(validate_conditions(&cs, &cfg.initial_datum(), probes, &mut rng)?)
}

pub fn run(name: &str, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    cfg.validate()?;
    if name != "validate" {
        art.attach_conditions(&conditions(cfg, MANIFEST_PROBES)?);
    }
    match name {
        "validate" => validate(cfg, art),
        "simulate" => simulate(cfg, art),
        "invariant" => invariant(cfg, art),
        "abar" => abar(cfg, art),
        "averaged" => averaged(cfg, art),
        "khasminskii" => khasminskii(cfg, art),
        "skeleton" => skeleton(cfg, art),
        "rate" => rate(cfg, art),
        "mdp-sweep" => sweep(cfg, art),
        other => {
            Err(CliError::Usage(format!("unknown subcommand `{other}`; expected one of {}", SUBCOMMANDS.join(", "))))
        }
    }
}

fn validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let reports = conditions(cfg, cfg.validate.probes)?;
    art.attach_conditions(&reports);
    let mut table = format!("{:<22} {:<6} {:>12}  witness\n", "condition", "passed", "worst_ratio");
    let mut csv = String::from("condition,passed,worst_ratio,witness\n");
    for r in &reports {
        let _ =
            writeln!(table, "{:<22} {:<6} {:>12.6}  {}", r.condition_id.as_str(), r.passed, r.worst_ratio, r.witness);
        let _ = writeln!(
            csv,
            "{},{},{},\"{}\"",
            r.condition_id.as_str(),
            r.passed,
            r.worst_ratio,
            r.witness.replace('"', "'")
        );
    }
    art.csv("conditions.csv", csv);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.condition_id.as_str()).collect();
    if failed.is_empty() {
        Ok(table)
    } else {
        Err(CliError::Failed(format!("failed conditions: {}\n{table}", failed.join(", "))))
    }
}

fn constant_zeta(cfg: &ExperimentConfig) -> SamplePath {
    SamplePath::constant_segment(cfg.integrator.tau, &[cfg.ergodic.zeta])
}

fn window<'a>(path: &'a SamplePath, cfg: &ExperimentConfig) -> Result<Segment<'a>, CliError> {
    Ok(path.segment(0.0, cfg.integrator.tau)?)
}

fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let icfg = cfg.integrator_config();
    let chi = cfg.initial_datum();
    let y0 = [cfg.initial.y0];
    let runs = map_replicas(cfg.integrator.paths, |i| {
        integrate_multiscale(&cs, &icfg, &chi, &y0, &mut PathStreams::new(icfg.seed, i as u64))
    })?;
    let mut summary = String::from("path,x_T,y_T,sup_abs_x,exit_time\n");
    for (i, r) in runs.iter().enumerate() {
        let sup = r.slow.sup_abs_between(0.0, icfg.t_end);
        let exit = r.exit_time.map(|t| t.to_string()).unwrap_or_else(|| "NaN".into());
        let _ = writeln!(summary, "{i},{},{},{sup},{exit}", r.slow.last()[0], r.fast.last()[0]);
    }
    art.csv("slow_path.csv", runs[0].slow.to_csv());
    art.csv("fast_path.csv", runs[0].fast.to_csv());
    art.csv("paths_summary.csv", summary);
    let finals: Vec<f64> = runs.iter().map(|r| r.slow.last()[0]).collect();
    Ok(format!("simulated {} paths; median X(T) = {:.6}\n", runs.len(), median(&finals)))
}

fn invariant(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let zeta = constant_zeta(cfg);
    let e = &cfg.ergodic;
    let burn = e.burn_in.unwrap_or_else(|| default_burn_in(&cs));
    let est = estimate_invariant(&cs, &window(&zeta, cfg)?, e.t_run, burn, e.dt, cfg.integrator.seed)?;
    let mut csv = String::from("component,mean,mean_ci,second_moment,variance,variance_ci,n_effective,burn_in\n");
    for i in 0..cs.k {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{}",
            est.mean[i],
            est.ci_halfwidth[i],
            est.second_moment[i * cs.k + i],
            est.variance[i],
            est.variance_ci[i],
            est.n_effective,
            est.burn_in
        );
    }
    art.csv("invariant.csv", csv);
    Ok(format!("variance {:.6} ± {:.6}\n", est.variance[0], est.variance_ci[0]))
}

fn abar(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let zeta = constant_zeta(cfg);
    let seg = window(&zeta, cfg)?;
    let e = &cfg.ergodic;
    let burn = e.burn_in.unwrap_or_else(|| default_burn_in(&cs));
    let est = estimate_abar(&cs, &seg, e.t_run, burn, e.replicas, e.dt, cfg.integrator.seed)?;
    let mut analytic = [f64::NAN];
    if let Some(f) = &cs.abar_analytic {
        f(&seg, &mut analytic);
    }
    art.csv(
        "abar_probe.csv",
        format!("zeta,value,ci,analytic\nconstant:{},{},{},{}\n", e.zeta, est.value[0], est.ci[0], analytic[0]),
    );
    let pts = estimate_mixing(
        &cs,
        &seg,
        &[e.mixing_y0],
        &e.t_grid,
        e.mixing_replicas,
        0.01_f64.min(e.dt * 10.0),
        child_seed(cfg.integrator.seed, 1),
    )?;
    let mut csv = String::from("T,alpha_hat,ci\n");
    for p in &pts {
        let _ = writeln!(csv, "{},{},{}", p.t, p.alpha_hat, p.ci);
    }
    art.csv("mixing.csv", csv);
    Ok(format!("abar {:.6} ± {:.6} (analytic {:.6})\n", est.value[0], est.ci[0], analytic[0]))
}

fn averaged(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let icfg = cfg.integrator_config();
    let chi = cfg.initial_datum();
    let f = cs.abar_analytic.clone().ok_or_else(|| CliError::Config("model has no averaged drift".into()))?;
    let ode = solve_averaged_ode(&|s, o| f(s, o), &chi, icfg.tau, icfg.t_end, icfg.dt)?;
    let noisy = integrate_averaged_controlled(
        &cs,
        &icfg,
        &chi,
        &ControlledInputs::none(),
        &mut PathStreams::new(icfg.seed, 0),
    )?;
    art.csv("averaged_ode.csv", ode.to_csv());
    art.csv("averaged_path.csv", noisy.slow.to_csv());
    Ok(format!("averaged ODE X(T) = {:.6}\n", ode.last()[0]))
}

fn khasminskii(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let params = cfg.khasminskii_params();
    let chi = cfg.initial_datum();
    let y0 = [cfg.initial.y0];
    let grid = &cfg.khasminskii.eps_grid;
    let regime = params.check_regime(grid[0], grid)?;
    if !regime.delta_decreasing {
        art.warnings.push(format!("Delta(eps) does not decrease along eps_grid: {:?}", regime.delta));
    }
    if !regime.delta_over_a2_decreasing {
        art.warnings.push(format!("Delta/a^2 does not decrease along eps_grid: {:?}", regime.delta_over_a2));
    }
    if !regime.delta_over_eps_increasing {
        art.warnings.push(format!("Delta/eps does not increase along eps_grid: {:?}", regime.delta_over_eps));
    }
    let mut csv = String::from("epsilon,dev_hat_X,dev_Y_mean,dev_segment,a_eps,delta,localized_fraction\n");
    let mut text = String::new();
    for (row, &eps) in grid.iter().enumerate() {
        let icfg = IntegratorConfig { epsilon: eps, dt: eps / cfg.khasminskii.dt_ratio, ..cfg.integrator_config() };
        let seed = child_seed(cfg.integrator.seed, row as u64);
        let runs = map_replicas(cfg.integrator.paths, |i| {
            khasminskii_run(
                &cs,
                &icfg,
                &chi,
                &y0,
                &ControlledInputs::none(),
                &params,
                &mut PathStreams::new(seed, i as u64),
            )
        })?;
        let hat: Vec<f64> = runs.iter().map(|r| r.dev_hat_x).collect();
        let seg: Vec<f64> = runs.iter().map(|r| r.dev_segment).collect();
        let y: Vec<f64> = runs.iter().filter(|r| r.localized()).map(|r| r.dev_y_mean).collect();
        let frac = y.len() as f64 / runs.len() as f64;
        let (mh, my, ms) = (median(&hat), median(&y), median(&seg));
        let _ = writeln!(csv, "{eps},{mh},{my},{ms},{},{},{frac}", params.a_eps(eps), runs[0].delta_used);
        let _ = writeln!(text, "eps {eps}: dev_hat_X {mh:.4e}, dev_Y_mean {my:.4e}, dev_segment {ms:.4e}");
    }
    art.csv("khasminskii.csv", csv);
    Ok(text)
}

fn skeleton(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let s = &cfg.skeleton;
    let (xbar, steps) = averaged_path(cfg, &cs)?;
    let (f, l) = (s.f, s.lambda);
    let ctrl = ControlPair::from_fns(1, steps, s.dt, move |_, o| o[0] = f, move |_, o| o[0] = l);
    let eta = solve_skeleton(&cs, &xbar, &ctrl, s.dt)?;
    art.csv("skeleton.csv", eta.to_csv());
    Ok(format!("eta(T) = {:.6}, control cost {:.6}\n", eta.last()[0], ctrl.cost(&cs, &xbar)?))
}

fn averaged_path(
    cfg: &ExperimentConfig,
    cs: &slowfast::model::CoefficientSet,
) -> Result<(SamplePath, usize), CliError> {
    let s = &cfg.skeleton;
    let f = cs.abar_analytic.clone().ok_or_else(|| CliError::Config("model has no averaged drift".into()))?;
    let xbar = solve_averaged_ode(&|z, o| f(z, o), &cfg.initial_datum(), cs.tau, s.t_end, s.dt)?;
    Ok((xbar, slowfast::segment::grid_steps(s.t_end, s.dt)?))
}

fn rate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let s = &cfg.skeleton;
    let (xbar, _) = averaged_path(cfg, &cs)?;
    let amp = s.amplitude;
    let sine = s.target == "sine";
    let eta = SamplePath::from_fn(1, -cs.tau, s.t_end, s.dt, |t, o| {
        o[0] = if t <= 0.0 {
            0.0
        } else if sine {
            amp * (std::f64::consts::FRAC_PI_2 * t).sin()
        } else {
            amp * t
        }
    })?;
    let r = rate_function(&cs, &xbar, &eta, s.dt)?;
    let mut csv = String::from("target_id,method,value,residual_norm\n");
    let _ = writeln!(csv, "{},pointwise,{},{}", s.target, r.value, r.residual_norm);
    let mut text = format!("I = {:.10} (pointwise)\n", r.value);
    if s.bruteforce {
        match rate_function_bruteforce(&cs, &xbar, &eta, s.dt, s.mark_nodes) {
            Ok(b) => {
                let _ = writeln!(csv, "{},bruteforce,{},{}", s.target, b.value, b.residual_norm);
                let _ = writeln!(
                    text,
                    "I = {:.10} (brute force, condition {:.3e})",
                    b.value,
                    b.condition.unwrap_or(f64::NAN)
                );
            }
            Err(e) => art.warnings.push(format!("brute-force evaluation skipped: {e}")),
        }
    }
    art.csv("rate.csv", csv);
    if let Ok(ctrl) = recover_optimal_control(&r) {
        let mut c = String::from("t,f,lambda\n");
        if let slowfast::deviations::MarkControl::Representer { lambda } = &ctrl.g {
            for i in 0..ctrl.steps {
                let _ = writeln!(c, "{},{},{}", i as f64 * ctrl.dt, ctrl.f[i], lambda[i]);
            }
        }
        art.csv("control.csv", c);
    }
    Ok(text)
}

fn sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let cs = cfg.coefficient_set()?;
    let result =
        mdp_sweep(&cs, &cfg.initial_datum(), &[cfg.initial.y0], &cfg.sweep_config(), &cfg.khasminskii_params())?;
    art.warnings.extend(result.warnings.iter().cloned());
    art.csv("mdp_sweep.csv", mdp_sweep_csv(&result.rows));
    let mut text = String::new();
    for r in &result.rows {
        let _ = writeln!(
            text,
            "eps {}: p_hat {:.4} [{:.4}, {:.4}], eps^theta ln p {:.4}, averaging {:.4} [{:.4}, {:.4}]{}",
            r.epsilon,
            r.p.p_hat,
            r.p.lo,
            r.p.hi,
            r.eps_theta_log_p,
            r.avg.p_hat,
            r.avg.lo,
            r.avg.hi,
            if r.censored { " (censored)" } else { "" }
        );
    }
    Ok(text)
}
