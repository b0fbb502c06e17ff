//! Ergodic estimators for the frozen fast dynamics, the averaged delay
//! equation and the Khasminskii auxiliary processes.

use crate::engine::{
    check_finite, controlled_jumps, fast_update, initial_slow_path, slow_update, ControlledInputs, Event, EventClock,
    IntegratorConfig, Work,
};
use crate::error::{Error, Result};
use crate::model::CoefficientSet;
use crate::rng::PathStreams;
use crate::segment::{grid_steps, norm, InitialDatum, SamplePath, Segment};
use crate::stats::{batch_means, mean_se, student_t_quantile};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantEstimate {
    pub mean: Vec<f64>,
    /// Row-major `k × k`.
    pub second_moment: Vec<f64>,
    pub n_effective: f64,
    pub burn_in: f64,
    pub ci_halfwidth: Vec<f64>,
    /// Diagonal of the covariance with its batch-means half-width.
    pub variance: Vec<f64>,
    pub variance_ci: Vec<f64>,
}

/// Default burn-in `5/β₁`.
pub fn default_burn_in(cs: &CoefficientSet) -> f64 {
    if cs.constants.beta1 > 0.0 {
        5.0 / cs.constants.beta1
    } else {
        5.0
    }
}

/// Validates the run and returns the burn-in rounded up to the grid.
fn check_run(t_run: f64, burn_in: f64, dt: f64) -> Result<f64> {
    if !(t_run > 0.0) || !(burn_in >= 0.0) || !(dt > 0.0) {
        return Err(Error::Argument(format!("need T_run > 0, burn_in >= 0, dt > 0 (got {t_run}, {burn_in}, {dt})")));
    }
    grid_steps(t_run, dt)?;
    let steps = (burn_in / dt - 1e-9).ceil().max(0.0);
    let burn_in = steps * dt;
    grid_steps(burn_in + t_run, dt)?;
    Ok(burn_in)
}

/// Time averages of `Y` and `Y Yᵀ` over `[burn_in, burn_in + T_run]`,
/// started from `y = 0`.
pub fn estimate_invariant(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    t_run: f64,
    burn_in: f64,
    dt: f64,
    seed: u64,
) -> Result<InvariantEstimate> {
    let burn_in = check_run(t_run, burn_in, dt)?;
    let k = cs.k;
    let width = t_run / BATCHES as f64;
    let mut first = vec![vec![0.0; k]; BATCHES];
    let mut second = vec![vec![0.0; k * k]; BATCHES];
    let mut streams = PathStreams::new(seed, 0);
    run_windowed(cs, zeta, &vec![0.0; k], burn_in, t_run, dt, &mut streams, |b, w, y| {
        for i in 0..k {
            first[b][i] += w * y[i];
            for j in 0..k {
                second[b][i * k + j] += w * y[i] * y[j];
            }
        }
    })?;
    for b in 0..BATCHES {
        first[b].iter_mut().for_each(|v| *v /= width);
        second[b].iter_mut().for_each(|v| *v /= width);
    }
    let mut mean = vec![0.0; k];
    let mut ci = vec![0.0; k];
    let mut variance = vec![0.0; k];
    let mut variance_ci = vec![0.0; k];
    let mut n_eff = f64::INFINITY;
    let mut second_moment = vec![0.0; k * k];
    for i in 0..k {
        let m: Vec<f64> = first.iter().map(|f| f[i]).collect();
        let bm = batch_means(&m);
        mean[i] = bm.mean;
        ci[i] = bm.half_width;
        let v: Vec<f64> = (0..BATCHES).map(|b| second[b][i * k + i] - first[b][i] * first[b][i]).collect();
        let bv = batch_means(&v);
        variance[i] = bv.mean;
        variance_ci[i] = bv.half_width;
        let se_mean = bm.half_width / student_t_quantile(0.975, (BATCHES - 1) as f64);
        let var_y = second.iter().map(|s| s[i * k + i]).sum::<f64>() / BATCHES as f64 - bm.mean * bm.mean;
        if se_mean > 0.0 {
            n_eff = n_eff.min(var_y.max(0.0) / (se_mean * se_mean));
        }
    }
    for i in 0..k {
        for j in 0..k {
            second_moment[i * k + j] = second.iter().map(|s| s[i * k + j]).sum::<f64>() / BATCHES as f64;
        }
    }
    if !n_eff.is_finite() || n_eff <= 0.0 {
        n_eff = BATCHES as f64;
    }
    Ok(InvariantEstimate { mean, second_moment, n_effective: n_eff, burn_in, ci_halfwidth: ci, variance, variance_ci })
}

/// Runs the frozen fast process for `burn_in + T_run` and reports, for every
/// interval after burn-in, its batch index, its length and the left state.
#[allow(clippy::too_many_arguments)]
fn run_windowed(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    y0: &[f64],
    burn_in: f64,
    t_run: f64,
    dt: f64,
    streams: &mut PathStreams,
    mut visit: impl FnMut(usize, f64, &[f64]),
) -> Result<()> {
    let width = t_run / BATCHES as f64;
    let mut cb = |t: f64, h: f64, y: &[f64]| {
        let (mut lo, hi) = (t, t + h);
        while lo < hi {
            if lo < burn_in {
                lo = burn_in.min(hi);
                continue;
            }
            let b = (((lo - burn_in) / width).floor() as usize).min(BATCHES - 1);
            let edge = if b + 1 == BATCHES { hi } else { (burn_in + (b + 1) as f64 * width).min(hi) };
            let edge = if edge <= lo { hi } else { edge };
            visit(b, edge - lo, y);
            lo = edge;
        }
    };
    crate::engine::run_frozen_fast(cs, zeta, y0, burn_in + t_run, dt, streams, &mut cb, |_, _, _| {})?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbarEstimate {
    pub value: Vec<f64>,
    pub ci: Vec<f64>,
}

/// Ergodic average of `a(ζ, Y^{ζ}(s))` over replicas and time.
pub fn estimate_abar(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    t_run: f64,
    burn_in: f64,
    replicas: usize,
    dt: f64,
    seed: u64,
) -> Result<AbarEstimate> {
    let burn_in = check_run(t_run, burn_in, dt)?;
    if replicas == 0 {
        return Err(Error::Argument("replicas must be positive".into()));
    }
    let d = cs.d;
    let zeta_path = zeta.to_owned_path();
    let one = |r: usize| -> Result<Vec<Vec<f64>>> {
        let zeta = zeta_path.segment(0.0, zeta.tau())?;
        let mut acc = vec![vec![0.0; d]; BATCHES];
        let mut out = vec![0.0; d];
        let mut streams = PathStreams::new(seed, r as u64);
        run_windowed(cs, &zeta, &vec![0.0; cs.k], burn_in, t_run, dt, &mut streams, |b, w, y| {
            (cs.a)(&zeta, y, &mut out);
            for i in 0..d {
                acc[b][i] += w * out[i];
            }
        })?;
        let width = t_run / BATCHES as f64;
        acc.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x /= width));
        Ok(acc)
    };
    let per: Vec<Vec<Vec<f64>>> = map_replicas(replicas, one)?;
    let mut value = vec![0.0; d];
    let mut ci = vec![0.0; d];
    for i in 0..d {
        let samples: Vec<f64> = if replicas >= 2 {
            per.iter().map(|b| b.iter().map(|v| v[i]).sum::<f64>() / BATCHES as f64).collect()
        } else {
            per[0].iter().map(|v| v[i]).collect()
        };
        let bm = batch_means(&samples);
        value[i] = bm.mean;
        ci[i] = bm.half_width;
    }
    Ok(AbarEstimate { value, ci })
}

/// Runs `f(0..n)` in parallel when enabled, preserving order.
pub fn map_replicas<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingPoint {
    pub t: f64,
    pub alpha_hat: f64,
    pub ci: f64,
}

/// `α̂(T) = E|T⁻¹∫₀ᵀ a(ζ, Y(s)) ds − ā(ζ)|² / (1 + ‖ζ‖² + |y|²)`.
pub fn estimate_mixing(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    y0: &[f64],
    t_grid: &[f64],
    replicas: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<MixingPoint>> {
    let abar_fn =
        cs.abar_analytic.clone().ok_or_else(|| Error::Config("the averaged drift ā is not available".into()))?;
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) || replicas < 2 {
        return Err(Error::Argument("need a nonempty positive T grid and at least 2 replicas".into()));
    }
    for &t in t_grid {
        grid_steps(t, dt)?;
    }
    let d = cs.d;
    let mut abar = vec![0.0; d];
    abar_fn(zeta, &mut abar);
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let zeta_path = zeta.to_owned_path();
    let scale = 1.0 + zeta.sup_norm().powi(2) + y0.iter().map(|v| v * v).sum::<f64>();
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&i, &j| t_grid[i].total_cmp(&t_grid[j]));
    let one = |r: usize| -> Result<Vec<f64>> {
        let zeta = zeta_path.segment(0.0, zeta_path.t1() - zeta_path.t0())?;
        let mut integral = vec![0.0; d];
        let mut out = vec![0.0; d];
        let mut errs = vec![0.0; t_grid.len()];
        let mut next = 0;
        let mut streams = PathStreams::new(seed, r as u64);
        let record = |integral: &[f64], errs: &mut [f64], idx: usize| {
            let t = t_grid[idx];
            errs[idx] = (0..d).map(|i| (integral[i] / t - abar[i]).powi(2)).sum::<f64>() / scale;
        };
        crate::engine::run_frozen_fast(
            cs,
            &zeta,
            y0,
            t_max,
            dt,
            &mut streams,
            |t, h, y| {
                while next < order.len() && t_grid[order[next]] <= t + 1e-12 {
                    record(&integral, &mut errs, order[next]);
                    next += 1;
                }
                (cs.a)(&zeta, y, &mut out);
                for i in 0..d {
                    integral[i] += h * out[i];
                }
            },
            |_, _, _| {},
        )?;
        while next < order.len() {
            record(&integral, &mut errs, order[next]);
            next += 1;
        }
        Ok(errs)
    };
    let per = map_replicas(replicas, one)?;
    let q = student_t_quantile(0.975, (replicas - 1) as f64);
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v: Vec<f64> = per.iter().map(|r| r[i]).collect();
            let (m, se) = mean_se(&v);
            MixingPoint { t, alpha_hat: m, ci: q * se }
        })
        .collect())
}

/// Explicit Euler with the method of steps for `ẋ = ā(x_t)`, `x_0 = χ`.
pub fn solve_averaged_ode(
    abar: &dyn Fn(&Segment<'_>, &mut [f64]),
    chi: &InitialDatum,
    tau: f64,
    t_end: f64,
    dt: f64,
) -> Result<SamplePath> {
    let cfg = IntegratorConfig { allow_coarse_dt: true, ..IntegratorConfig::new(1.0, dt, t_end, tau, 0) };
    cfg.validate()?;
    let n = cfg.steps();
    let mut path = initial_slow_path(chi, &cfg, n + 1)?;
    let mut x = path.last().to_vec();
    let mut drift = vec![0.0; chi.dim];
    let mut t = 0.0;
    for step in 1..=n {
        let t_next = step as f64 * dt;
        let h = t_next - t;
        let seg = path.segment(t, tau)?;
        abar(&seg, &mut drift);
        for i in 0..x.len() {
            x[i] += h * drift[i];
        }
        check_finite(&x, t, "averaged state")?;
        path.push(t_next, &x);
        t = t_next;
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KhasminskiiParams {
    pub theta: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for KhasminskiiParams {
    fn default() -> Self {
        Self { theta: 0.75, gamma: 0.1, p: 1.0, q: 4.0 }
    }
}

/// Asymptotic-regime diagnostics on an ε grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub epsilons: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_over_a2: Vec<f64>,
    pub delta_over_eps: Vec<f64>,
    pub delta_decreasing: bool,
    pub delta_over_a2_decreasing: bool,
    pub delta_over_eps_increasing: bool,
}

impl KhasminskiiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.5 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (1/2, 1), got {}", self.theta)));
        }
        if !(self.gamma > 0.0 && self.gamma < self.theta - 0.5) {
            return Err(Error::Config(format!("gamma must lie in (0, theta - 1/2), got {}", self.gamma)));
        }
        if !(self.p > 0.0) {
            return Err(Error::Config(format!("p must be positive, got {}", self.p)));
        }
        if !(self.q > 2.0 * self.gamma + 3.0) {
            return Err(Error::Config(format!("q must exceed 2 gamma + 3, got {}", self.q)));
        }
        Ok(())
    }

    pub fn a_eps(&self, eps: f64) -> f64 {
        eps.powf((1.0 - self.theta) / 2.0)
    }

    pub fn b_eps(&self, eps: f64) -> f64 {
        eps.powf(self.theta)
    }

    pub fn delta(&self, eps: f64) -> f64 {
        eps.powf(self.gamma) * self.a_eps(eps).powi(2) * eps.ln().abs().powf(self.p)
    }

    pub fn l_eps(&self, eps: f64) -> f64 {
        self.a_eps(eps).powi(2) / eps.ln().abs().powf(self.q)
    }

    pub fn r_eps(&self, eps: f64) -> f64 {
        self.a_eps(eps).powf(-0.25)
    }

    /// Checks `Δ(ε) > ε` at `eps` and reports the limits on `grid`.
    pub fn check_regime(&self, eps: f64, grid: &[f64]) -> Result<RegimeReport> {
        self.validate()?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {eps}")));
        }
        if !(self.delta(eps) > eps) {
            return Err(Error::Config(format!("Delta({eps}) = {} does not exceed epsilon", self.delta(eps))));
        }
        let mut epsilons: Vec<f64> = grid.to_vec();
        epsilons.sort_by(|a, b| b.total_cmp(a));
        let delta: Vec<f64> = epsilons.iter().map(|&e| self.delta(e)).collect();
        let delta_over_a2: Vec<f64> = epsilons.iter().map(|&e| self.delta(e) / self.a_eps(e).powi(2)).collect();
        let delta_over_eps: Vec<f64> = epsilons.iter().map(|&e| self.delta(e) / e).collect();
        let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        Ok(RegimeReport {
            delta_decreasing: dec(&delta),
            delta_over_a2_decreasing: dec(&delta_over_a2),
            delta_over_eps_increasing: delta_over_eps.windows(2).all(|w| w[1] > w[0]),
            epsilons,
            delta,
            delta_over_a2,
            delta_over_eps,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KhasminskiiResult {
    pub dev_hat_x: f64,
    pub dev_y_mean: f64,
    pub dev_segment: f64,
    pub delta_used: f64,
    pub exit_time: Option<f64>,
}

impl KhasminskiiResult {
    /// `T < τ_R`: the path stayed in the localization ball.
    pub fn localized(&self) -> bool {
        self.exit_time.is_none()
    }
}

/// Cost target for the sub-grid used by `dev_segment`.
const SEGMENT_WORK: f64 = 2.0e6;

/// Simulates `(X, Y)`, `Ŷ` and `X̂` on one noise realization. `Δ` is rounded
/// down to a multiple of `dt`. The localization radius defaults to `R(ε)`.
pub fn khasminskii_run(
    cs: &CoefficientSet,
    cfg: &IntegratorConfig,
    chi: &InitialDatum,
    y0: &[f64],
    controls: &ControlledInputs,
    params: &KhasminskiiParams,
    streams: &mut PathStreams,
) -> Result<KhasminskiiResult> {
    cfg.validate()?;
    params.validate()?;
    let eps = cfg.epsilon;
    if !(params.delta(eps) > eps) {
        return Err(Error::Config(format!("Delta({eps}) = {} does not exceed epsilon", params.delta(eps))));
    }
    if chi.dim != cs.d || y0.len() != cs.k {
        return Err(Error::Shape("initial data do not match the model dimensions".into()));
    }
    controls.check_budget(&cs.levy, cfg.t_end, cs.d + cs.k)?;
    let (d, k) = (cs.d, cs.k);
    let n = cfg.steps();
    let n_tau = grid_steps(cfg.tau, cfg.dt)?;
    let n_delta = ((params.delta(eps) / cfg.dt).floor() as usize).max(1);
    let delta_used = n_delta as f64 * cfg.dt;
    let radius = cfg.localization_radius.unwrap_or_else(|| params.r_eps(eps));

    let jumps =
        if cs.jumps_active() { controlled_jumps(&cs.levy, eps, cfg.t_end, controls, streams)? } else { Vec::new() };
    let mut slow = initial_slow_path(chi, cfg, n + 2 * jumps.len() + 1)?;
    let mut grid = Vec::with_capacity((n_tau + n + 1) * d);
    for i in 0..slow.len() {
        grid.extend_from_slice(slow.knot(i));
    }
    let mut x = slow.last().to_vec();
    let mut y = y0.to_vec();
    let mut y_hat = y0.to_vec();
    let mut hat_gap = vec![0.0; d];
    let mut w = Work::new(d, k);
    let mut w_hat = Work::new(d, k);
    let mut a_hat = vec![0.0; d];
    let mut dev_hat_x: f64 = 0.0;
    let mut y_gap_integral = 0.0;
    let mut exit_time = if norm(&x) > radius { Some(0.0) } else { None };
    let mut t = 0.0;
    let mut block_start = 0.0;
    let mut grid_index = 0usize;
    for ev in EventClock::new(cfg.dt, n, &jumps) {
        let t_next = match &ev {
            Event::Grid(g) => *g,
            Event::Jump(j) => j.time,
        };
        let h = t_next - t;
        if h > 0.0 {
            w.draw_increments(h, streams);
            w_hat.db2.copy_from_slice(&w.db2);
            (controls.xi)(t, &mut w.xi);
            w_hat.xi.copy_from_slice(&w.xi);
            let seg = slow.segment(t, cfg.tau)?;
            let frozen = slow.segment(block_start, cfg.tau)?;
            (cs.a)(&seg, &y, &mut w.drift_x);
            (cs.a)(&frozen, &y_hat, &mut a_hat);
            for i in 0..d {
                hat_gap[i] += h * (a_hat[i] - w.drift_x[i]);
            }
            y_gap_integral += h * y.iter().zip(&y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let mut x_new = x.clone();
            slow_update(cs, &seg, eps, h, &mut w, &mut x_new)?;
            fast_update(cs, &seg, eps, h, &mut w, &mut y)?;
            fast_update(cs, &frozen, eps, h, &mut w_hat, &mut y_hat)?;
            x = x_new;
            check_finite(&x, t, "slow state")?;
            check_finite(&y, t, "fast state")?;
            check_finite(&y_hat, t, "auxiliary fast state")?;
            slow.push(t_next, &x);
            dev_hat_x = dev_hat_x.max(norm(&hat_gap));
        }
        t = t_next;
        match ev {
            Event::Jump(j) => {
                let seg = slow.segment(t, cfg.tau)?;
                let frozen = slow.segment(block_start, cfg.tau)?;
                let pre_x = x.clone();
                if cs.slow_jumps {
                    (cs.c)(&seg, &j.mark, &mut w.jump_x);
                    for i in 0..d {
                        x[i] += eps * w.jump_x[i];
                    }
                }
                if cs.fast_jumps {
                    (cs.h)(&seg, &y, &j.mark, &mut w.jump_y);
                    (cs.h)(&frozen, &y_hat, &j.mark, &mut w_hat.jump_y);
                    for i in 0..k {
                        y[i] += w.jump_y[i];
                        y_hat[i] += w_hat.jump_y[i];
                    }
                }
                slow.push_jump(t, &pre_x, &x);
            }
            Event::Grid(_) => {
                grid_index += 1;
                grid.extend_from_slice(&x);
                if grid_index.is_multiple_of(n_delta) {
                    block_start = t;
                    y_hat.copy_from_slice(&y);
                }
            }
        }
        if exit_time.is_none() && norm(&x) > radius {
            exit_time = Some(t);
        }
    }
    let dev_segment = segment_deviation(&grid, d, n_tau, n, n_delta);
    Ok(KhasminskiiResult { dev_hat_x, dev_y_mean: y_gap_integral / cfg.t_end, dev_segment, delta_used, exit_time })
}

/// `sup_t ‖X_t − X_{t_Δ}‖∞` on grid values, with `t` and `θ` thinned to a
/// common stride when the exact double sweep would be too costly.
fn segment_deviation(grid: &[f64], d: usize, n_tau: usize, n: usize, n_delta: usize) -> f64 {
    let stride = ((n as f64 * n_tau as f64 / SEGMENT_WORK).sqrt().ceil() as usize).max(1);
    let at = |i: usize| &grid[i * d..(i + 1) * d];
    let mut worst: f64 = 0.0;
    let mut block = 0;
    while block * n_delta <= n {
        let b = n_tau + block * n_delta;
        let shift_max = (n_delta - 1).min(n_tau + n - b);
        let mut shifts: Vec<usize> = (1..=shift_max).step_by(stride).collect();
        shifts.push(shift_max);
        let mut rs: Vec<usize> = (b - n_tau..=b).step_by(stride).collect();
        rs.push(b);
        for &m in shifts.iter().filter(|&&m| m > 0) {
            for &r in &rs {
                let dist = at(r + m).iter().zip(at(r)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                worst = worst.max(dist);
            }
        }
        block += 1;
    }
    worst
}
