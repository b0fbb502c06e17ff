//! wasm-bindgen exports for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layout is given per function.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use js_sys::Float64Array;
use slowfast::averaging::solve_averaged_ode;
use slowfast::deviations::{rate_function, recover_optimal_control};
use slowfast::engine::{integrate_multiscale, run_frozen_fast, IntegratorConfig};
use slowfast::levy::LevyModel;
use slowfast::model::{builtin_gauss_ou, CoefficientSet, GaussOuParams};
use slowfast::rng::PathStreams;
use slowfast::segment::{InitialDatum, SamplePath};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn js_err(e: slowfast::Error) -> String {
    e.to_string()
}

fn to_js(r: Result<Vec<f64>>) -> std::result::Result<Float64Array, JsValue> {
    r.map(|v| Float64Array::from(v.as_slice())).map_err(|e| JsValue::from_str(&e))
}

fn model(kappa: f64, gamma_coupling: f64) -> Result<CoefficientSet> {
    let p = GaussOuParams { kappa, gamma_coupling, ..Default::default() };
    builtin_gauss_ou(p, LevyModel::gauss_light(2.0, 1).map_err(js_err)?, 1.0).map_err(js_err)
}

fn averaged_path(cs: &CoefficientSet, chi: &InitialDatum, t_end: f64, dt: f64) -> Result<SamplePath> {
    let abar = cs.abar_analytic.clone().ok_or_else(|| "no averaged drift".to_string())?;
    solve_averaged_ode(&|s, o| abar(s, o), chi, cs.tau, t_end, dt).map_err(js_err)
}

/// One path of `Xᵉ` on `[0, 1]` next to the averaged path `X̄`, with
/// `dt = ε/20` and `χ ≡ 1`. Layout: `[t, x, x̄]` per grid point.
#[wasm_bindgen]
pub fn slow_vs_averaged(epsilon: f64, gamma_coupling: f64, seed: u32) -> std::result::Result<Float64Array, JsValue> {
    to_js(slow_vs_averaged_data(epsilon, gamma_coupling, seed))
}

pub fn slow_vs_averaged_data(epsilon: f64, gamma_coupling: f64, seed: u32) -> Result<Vec<f64>> {
    let cs = model(1.0, gamma_coupling)?;
    let chi = InitialDatum::constant(vec![1.0]);
    let cfg = IntegratorConfig::new(epsilon, epsilon / 20.0, 1.0, 1.0, seed as u64);
    let run = integrate_multiscale(&cs, &cfg, &chi, &[0.0], &mut PathStreams::new(seed as u64, 0)).map_err(js_err)?;
    let xbar = averaged_path(&cs, &chi, 1.0, cfg.dt)?;
    let stride = (cfg.steps() / 1000).max(1);
    let mut out = Vec::new();
    let mut v = [0.0];
    for (i, (t, x)) in run.slow.grid_values().into_iter().filter(|(t, _)| *t >= 0.0).enumerate() {
        if i % stride == 0 {
            xbar.value_at(t, &mut v).map_err(js_err)?;
            out.extend([t, x[0], v[0]]);
        }
    }
    Ok(out)
}

/// Time-weighted histogram of the frozen fast process at `ζ ≡ 0` over
/// `[0, T]`, on `bins` cells of `[−4s, 4s]` with `s² = g²/(2 f1)`.
/// Layout: `[center, empirical density, exact density]` per cell.
#[wasm_bindgen]
pub fn invariant_histogram(
    f1_base: f64,
    g_level: f64,
    t_run: f64,
    bins: u32,
    seed: u32,
) -> std::result::Result<Float64Array, JsValue> {
    to_js(invariant_histogram_data(f1_base, g_level, t_run, bins, seed))
}

pub fn invariant_histogram_data(f1_base: f64, g_level: f64, t_run: f64, bins: u32, seed: u32) -> Result<Vec<f64>> {
    if !(f1_base > 0.0) || bins == 0 {
        return Err("need f1 > 0 and at least one bin".into());
    }
    let p = GaussOuParams { f1_base, g_level, ..Default::default() };
    let cs = builtin_gauss_ou(p, LevyModel::gauss_light(2.0, 1).map_err(js_err)?, 1.0).map_err(js_err)?;
    let zeta = SamplePath::constant_segment(1.0, &[0.0]);
    let seg = zeta.segment(0.0, 1.0).map_err(js_err)?;
    let s = g_level.abs() / (2.0 * f1_base).sqrt();
    let (lo, width) = (-4.0 * s, 8.0 * s / bins as f64);
    let mut mass = vec![0.0; bins as usize];
    let mut total = 0.0;
    run_frozen_fast(
        &cs,
        &seg,
        &[0.0],
        t_run,
        1e-2,
        &mut PathStreams::new(seed as u64, 0),
        |_, h, y| {
            let b = ((y[0] - lo) / width).floor();
            if b >= 0.0 && (b as usize) < mass.len() {
                mass[b as usize] += h;
            }
            total += h;
        },
        |_, _, _| {},
    )
    .map_err(js_err)?;
    let mut out = Vec::with_capacity(3 * mass.len());
    for (i, m) in mass.iter().enumerate() {
        let c = lo + (i as f64 + 0.5) * width;
        let exact = (-(c * c) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        out.extend([c, m / (total * width), exact]);
    }
    Ok(out)
}

/// Rate of `η(t) = A sin(π t / 2)` on `[0, 1]` around `X̄` for `χ ≡ 1`.
/// Layout: `[I, t₀, f₀, t₁, f₁, ...]` with `f` the optimal diffusive control.
#[wasm_bindgen]
pub fn rate_of_sine(amplitude: f64, kappa: f64) -> std::result::Result<Float64Array, JsValue> {
    to_js(rate_of_sine_data(amplitude, kappa))
}

pub fn rate_of_sine_data(amplitude: f64, kappa: f64) -> Result<Vec<f64>> {
    let dt = 1.0 / 200.0;
    let cs = model(kappa, 0.0)?;
    let xbar = averaged_path(&cs, &InitialDatum::constant(vec![1.0]), 1.0, dt)?;
    let eta = SamplePath::from_fn(1, -1.0, 1.0, dt, |t, o| {
        o[0] = if t <= 0.0 { 0.0 } else { amplitude * (std::f64::consts::FRAC_PI_2 * t).sin() }
    })
    .map_err(js_err)?;
    let r = rate_function(&cs, &xbar, &eta, dt).map_err(js_err)?;
    let mut out = vec![r.value];
    if let Ok(ctrl) = recover_optimal_control(&r) {
        for i in 0..ctrl.steps {
            out.extend([i as f64 * ctrl.dt, ctrl.f[i]]);
        }
    }
    Ok(out)
}
