//! Jump-adapted Euler–Maruyama integration of the slow-fast system and its
//! controlled, frozen and averaged variants.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::levy::{thin_controlled, JumpRecord, LevyModel};
use crate::model::CoefficientSet;
use crate::quadrature::{integrate, ABS_TOL, REL_TOL};
use crate::rng::{PathStreams, RngStream};
use crate::segment::{grid_steps, norm, InitialDatum, SamplePath, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub tau: f64,
    pub seed: u64,
    pub localization_radius: Option<f64>,
    /// Allow `dt > ε/10`.
    pub allow_coarse_dt: bool,
}

impl IntegratorConfig {
    pub fn new(epsilon: f64, dt: f64, t_end: f64, tau: f64, seed: u64) -> Self {
        Self { epsilon, dt, t_end, tau, seed, localization_radius: None, allow_coarse_dt: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("T must be positive, got {}", self.t_end)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > self.epsilon / 10.0 * (1.0 + 1e-12) && !self.allow_coarse_dt {
            return Err(Error::Config(format!(
                "dt = {} exceeds epsilon/10 = {}; set allow_coarse_dt to override",
                self.dt,
                self.epsilon / 10.0
            )));
        }
        if let Some(r) = self.localization_radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("localization radius must be positive, got {r}")));
            }
        }
        grid_steps(self.t_end, self.dt)?;
        grid_steps(self.tau, self.dt)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        grid_steps(self.t_end, self.dt).expect("validated")
    }
}

pub type ControlFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;
pub type IntensityFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Deterministic controls `ξ = (ξ₁, ξ₂)` and the jump intensity tilt `φ`.
#[derive(Clone)]
pub struct ControlledInputs {
    pub xi: ControlFn,
    pub phi: IntensityFn,
    pub phi_max: f64,
    pub m_budget: f64,
    pub a_eps: f64,
    trivial: bool,
}

impl std::fmt::Debug for ControlledInputs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlledInputs")
            .field("phi_max", &self.phi_max)
            .field("m_budget", &self.m_budget)
            .field("a_eps", &self.a_eps)
            .field("trivial", &self.trivial)
            .finish()
    }
}

/// `ℓ(r) = r ln r − r + 1`.
pub fn control_cost(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        r * r.ln() - r + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    pub xi_cost: f64,
    pub phi_cost: f64,
    pub limit: f64,
}

impl ControlledInputs {
    /// `ξ ≡ 0`, `φ ≡ 1`.
    pub fn none() -> Self {
        Self {
            xi: Arc::new(|_, out| out.iter_mut().for_each(|v| *v = 0.0)),
            phi: Arc::new(|_, _| 1.0),
            phi_max: 1.0,
            m_budget: 0.0,
            a_eps: 1.0,
            trivial: true,
        }
    }

    pub fn new(xi: ControlFn, phi: IntensityFn, phi_max: f64, m_budget: f64, a_eps: f64) -> Result<Self> {
        if !(phi_max > 0.0) || !(m_budget >= 0.0) || !(a_eps > 0.0) {
            return Err(Error::Argument(format!(
                "need phi_max > 0, M >= 0, a(eps) > 0 (got {phi_max}, {m_budget}, {a_eps})"
            )));
        }
        Ok(Self { xi, phi, phi_max, m_budget, a_eps, trivial: false })
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// Check `½∫|ξ|² ≤ M a²` and `∫∫ℓ(φ) ν ds ≤ M a²` on `[0, T]`.
    pub fn check_budget(&self, levy: &LevyModel, t_end: f64, dim: usize) -> Result<BudgetReport> {
        let limit = self.m_budget * self.a_eps * self.a_eps;
        if self.trivial {
            return Ok(BudgetReport { xi_cost: 0.0, phi_cost: 0.0, limit });
        }
        let xi = |t: f64, out: &mut [f64]| {
            let mut v = vec![0.0; dim];
            (self.xi)(t, &mut v);
            out[0] = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
        };
        let xi_cost = integrate(&xi, 0.0, t_end, 1, ABS_TOL, REL_TOL)?.value[0];
        let phi_at = |t: f64, out: &mut [f64]| {
            out[0] = match levy.nu_integral(&|z, o| o[0] = control_cost((self.phi)(t, z)), 1) {
                Ok(q) => q.value[0],
                Err(_) => f64::INFINITY,
            };
        };
        let phi_cost = match integrate(&phi_at, 0.0, t_end, 1, ABS_TOL, 1e-6) {
            Ok(q) => q.value[0],
            Err(_) => f64::INFINITY,
        };
        let report = BudgetReport { xi_cost, phi_cost, limit };
        let tol = 1e-9 * limit.max(1e-300);
        if !(xi_cost <= limit + tol) || !(phi_cost <= limit + tol) {
            return Err(Error::Contract(format!(
                "control cost exceeds M a^2 = {limit:.6e} (xi: {xi_cost:.6e}, phi: {phi_cost:.6e})"
            )));
        }
        Ok(report)
    }
}

/// Output of a coupled run.
#[derive(Debug, Clone)]
pub struct MultiscaleRun {
    pub slow: SamplePath,
    pub fast: SamplePath,
    pub exit_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SlowRun {
    pub slow: SamplePath,
    pub exit_time: Option<f64>,
}

/// Jumps of `N^{φ/ε}` on `[0, T)`: sampled at rate `φ_max/ε`, then thinned.
pub fn controlled_jumps(
    levy: &LevyModel,
    epsilon: f64,
    t_end: f64,
    controls: &ControlledInputs,
    streams: &mut PathStreams,
) -> Result<Vec<JumpRecord>> {
    let raw = levy.sample_jumps(controls.phi_max / epsilon, t_end, &mut streams.jump_count, &mut streams.jump_mark)?;
    thin_controlled(&raw, controls.phi.as_ref(), controls.phi_max, &mut streams.thinning)
}

/// Event times: the uniform grid merged with jump times.
pub(crate) struct EventClock<'a> {
    dt: f64,
    n_steps: usize,
    next_grid: usize,
    jumps: &'a [JumpRecord],
    next_jump: usize,
}

pub(crate) enum Event<'a> {
    Grid(f64),
    Jump(&'a JumpRecord),
}

impl<'a> EventClock<'a> {
    pub(crate) fn new(dt: f64, n_steps: usize, jumps: &'a [JumpRecord]) -> Self {
        Self { dt, n_steps, next_grid: 1, jumps, next_jump: 0 }
    }
}

impl<'a> Iterator for EventClock<'a> {
    type Item = Event<'a>;

    fn next(&mut self) -> Option<Event<'a>> {
        let tg = if self.next_grid <= self.n_steps { Some(self.next_grid as f64 * self.dt) } else { None };
        let tj = self.jumps.get(self.next_jump).map(|j| j.time);
        match (tg, tj) {
            (None, None) => None,
            (Some(g), Some(j)) if j < g && j > 0.0 => {
                self.next_jump += 1;
                Some(Event::Jump(&self.jumps[self.next_jump - 1]))
            }
            (Some(g), _) => {
                self.next_grid += 1;
                Some(Event::Grid(g))
            }
            (None, Some(_)) => {
                self.next_jump += 1;
                self.next()
            }
        }
    }
}

/// Scratch buffers for one integration.
pub(crate) struct Work {
    pub d: usize,
    pub k: usize,
    pub drift_x: Vec<f64>,
    pub drift_y: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gmat: Vec<f64>,
    pub cbar: Vec<f64>,
    pub hbar: Vec<f64>,
    pub xi: Vec<f64>,
    pub db1: Vec<f64>,
    pub db2: Vec<f64>,
    pub jump_x: Vec<f64>,
    pub jump_y: Vec<f64>,
}

impl Work {
    pub(crate) fn new(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            drift_x: vec![0.0; d],
            drift_y: vec![0.0; k],
            sigma: vec![0.0; d * d],
            gmat: vec![0.0; k * k],
            cbar: vec![0.0; d],
            hbar: vec![0.0; k],
            xi: vec![0.0; d + k],
            db1: vec![0.0; d],
            db2: vec![0.0; k],
            jump_x: vec![0.0; d],
            jump_y: vec![0.0; k],
        }
    }

    pub(crate) fn draw_increments(&mut self, h: f64, streams: &mut PathStreams) {
        let s = h.sqrt();
        for v in self.db1.iter_mut() {
            *v = s * streams.slow_bm.sample::<f64, _>(StandardNormal);
        }
        for v in self.db2.iter_mut() {
            *v = s * streams.fast_bm.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Slow Euler update `x += h (a + σ ξ₁ − ∫c ν) + √ε σ ΔB¹`, with `a` replaced
/// by `drift` already stored in `w.drift_x`.
pub(crate) fn slow_update(
    cs: &CoefficientSet,
    seg: &Segment<'_>,
    eps: f64,
    h: f64,
    w: &mut Work,
    x: &mut [f64],
) -> Result<()> {
    let d = w.d;
    (cs.sigma)(seg, &mut w.sigma);
    cs.c_mean(seg, &mut w.cbar)?;
    let se = eps.sqrt();
    for i in 0..d {
        let mut ctrl = 0.0;
        let mut noise = 0.0;
        for j in 0..d {
            ctrl += w.sigma[i * d + j] * w.xi[j];
            noise += w.sigma[i * d + j] * w.db1[j];
        }
        x[i] = x[i] + h * (w.drift_x[i] + ctrl - w.cbar[i]) + se * noise;
    }
    Ok(())
}

/// Fast Euler update `y += (h/ε)(f + g ξ₂ + jump drift) + (1/√ε) g ΔB²`.
pub(crate) fn fast_update(
    cs: &CoefficientSet,
    seg: &Segment<'_>,
    eps: f64,
    h: f64,
    w: &mut Work,
    y: &mut [f64],
) -> Result<()> {
    let (d, k) = (w.d, w.k);
    (cs.f)(seg, y, &mut w.drift_y);
    (cs.g)(seg, y, &mut w.gmat);
    if cs.fast_jumps {
        cs.h_mean(seg, y, cs.fast_jump_compensated, &mut w.hbar)?;
        if cs.fast_jump_compensated {
            w.hbar.iter_mut().for_each(|v| *v = -*v);
        }
    } else {
        w.hbar.iter_mut().for_each(|v| *v = 0.0);
    }
    let se = eps.sqrt();
    for i in 0..k {
        let mut ctrl = 0.0;
        let mut noise = 0.0;
        for j in 0..k {
            ctrl += w.gmat[i * k + j] * w.xi[d + j];
            noise += w.gmat[i * k + j] * w.db2[j];
        }
        y[i] = y[i] + (h / eps) * (w.drift_y[i] + ctrl + w.hbar[i]) + noise / se;
    }
    Ok(())
}

pub(crate) fn check_finite(v: &[f64], t: f64, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { last_finite_time: t, detail: format!("{what} became non-finite") })
    }
}

pub(crate) fn initial_slow_path(chi: &InitialDatum, cfg: &IntegratorConfig, capacity: usize) -> Result<SamplePath> {
    let init = chi.to_path(cfg.tau, cfg.dt)?;
    let mut p = SamplePath::with_capacity(chi.dim, -cfg.tau, cfg.dt, init.len() + capacity);
    for i in 0..init.len() {
        p.push(init.times()[i], init.knot(i));
    }
    Ok(p)
}

fn check_shapes(cs: &CoefficientSet, cfg: &IntegratorConfig, chi: &InitialDatum, y0: &[f64]) -> Result<()> {
    cfg.validate()?;
    if chi.dim != cs.d || y0.len() != cs.k {
        return Err(Error::Shape(format!(
            "model has (d, k) = ({}, {}), initial data have ({}, {})",
            cs.d,
            cs.k,
            chi.dim,
            y0.len()
        )));
    }
    if (cfg.tau - cs.tau).abs() > 1e-12 {
        return Err(Error::Config(format!("config tau {} differs from model tau {}", cfg.tau, cs.tau)));
    }
    Ok(())
}

/// The coupled slow-fast system without controls.
pub fn integrate_multiscale(
    cs: &CoefficientSet,
    cfg: &IntegratorConfig,
    chi: &InitialDatum,
    y0: &[f64],
    streams: &mut PathStreams,
) -> Result<MultiscaleRun> {
    integrate_controlled(cs, cfg, chi, y0, &ControlledInputs::none(), streams)
}

/// The controlled system: drifts `σξ₁`, `(1/ε) g ξ₂` and jumps from `N^{φ/ε}`.
pub fn integrate_controlled(
    cs: &CoefficientSet,
    cfg: &IntegratorConfig,
    chi: &InitialDatum,
    y0: &[f64],
    controls: &ControlledInputs,
    streams: &mut PathStreams,
) -> Result<MultiscaleRun> {
    check_shapes(cs, cfg, chi, y0)?;
    controls.check_budget(&cs.levy, cfg.t_end, cs.d + cs.k)?;
    let eps = cfg.epsilon;
    let n = cfg.steps();
    let jumps =
        if cs.jumps_active() { controlled_jumps(&cs.levy, eps, cfg.t_end, controls, streams)? } else { Vec::new() };
    let mut slow = initial_slow_path(chi, cfg, n + 2 * jumps.len() + 1)?;
    let mut fast = SamplePath::with_capacity(cs.k, 0.0, cfg.dt, n + 2 * jumps.len() + 1);
    fast.push(0.0, y0);
    let mut x = slow.last().to_vec();
    let mut y = y0.to_vec();
    let mut w = Work::new(cs.d, cs.k);
    let radius = cfg.localization_radius;
    let mut exit_time = match radius {
        Some(r) if norm(&x) > r => Some(0.0),
        _ => None,
    };
    let mut t = 0.0;
    for ev in EventClock::new(cfg.dt, n, &jumps) {
        let t_next = match &ev {
            Event::Grid(g) => *g,
            Event::Jump(j) => j.time,
        };
        let h = t_next - t;
        if h > 0.0 {
            w.draw_increments(h, streams);
            (controls.xi)(t, &mut w.xi);
            let seg = slow.segment(t, cfg.tau)?;
            (cs.a)(&seg, &y, &mut w.drift_x);
            let mut x_new = x.clone();
            slow_update(cs, &seg, eps, h, &mut w, &mut x_new)?;
            fast_update(cs, &seg, eps, h, &mut w, &mut y)?;
            x = x_new;
            check_finite(&x, t, "slow state")?;
            check_finite(&y, t, "fast state")?;
            slow.push(t_next, &x);
            fast.push(t_next, &y);
        }
        t = t_next;
        if let Event::Jump(j) = ev {
            let seg = slow.segment(t, cfg.tau)?;
            let pre_x = x.clone();
            let pre_y = y.clone();
            if cs.slow_jumps {
                (cs.c)(&seg, &j.mark, &mut w.jump_x);
                for i in 0..cs.d {
                    x[i] += eps * w.jump_x[i];
                }
            }
            if cs.fast_jumps {
                (cs.h)(&seg, &pre_y, &j.mark, &mut w.jump_y);
                for i in 0..cs.k {
                    y[i] += w.jump_y[i];
                }
            }
            check_finite(&x, t, "slow state")?;
            check_finite(&y, t, "fast state")?;
            slow.push_jump(t, &pre_x, &x);
            fast.push_jump(t, &pre_y, &y);
        }
        if exit_time.is_none() {
            if let Some(r) = radius {
                if norm(&x) > r {
                    exit_time = Some(t);
                }
            }
        }
    }
    Ok(MultiscaleRun { slow, fast, exit_time })
}

/// Slow equation with `a(X_s, Y)` replaced by an averaged drift.
pub fn integrate_averaged_with(
    cs: &CoefficientSet,
    abar: &dyn Fn(&Segment<'_>, &mut [f64]) -> Result<()>,
    cfg: &IntegratorConfig,
    chi: &InitialDatum,
    controls: &ControlledInputs,
    streams: &mut PathStreams,
) -> Result<SlowRun> {
    cfg.validate()?;
    if chi.dim != cs.d {
        return Err(Error::Shape(format!("model has d = {}, initial datum {}", cs.d, chi.dim)));
    }
    controls.check_budget(&cs.levy, cfg.t_end, cs.d + cs.k)?;
    let eps = cfg.epsilon;
    let n = cfg.steps();
    let jumps = if cs.slow_jumps { controlled_jumps(&cs.levy, eps, cfg.t_end, controls, streams)? } else { Vec::new() };
    let mut slow = initial_slow_path(chi, cfg, n + 2 * jumps.len() + 1)?;
    let mut x = slow.last().to_vec();
    let mut w = Work::new(cs.d, cs.k);
    let radius = cfg.localization_radius;
    let mut exit_time = match radius {
        Some(r) if norm(&x) > r => Some(0.0),
        _ => None,
    };
    let mut t = 0.0;
    for ev in EventClock::new(cfg.dt, n, &jumps) {
        let t_next = match &ev {
            Event::Grid(g) => *g,
            Event::Jump(j) => j.time,
        };
        let h = t_next - t;
        if h > 0.0 {
            w.draw_increments(h, streams);
            (controls.xi)(t, &mut w.xi);
            let seg = slow.segment(t, cfg.tau)?;
            abar(&seg, &mut w.drift_x)?;
            let mut x_new = x.clone();
            slow_update(cs, &seg, eps, h, &mut w, &mut x_new)?;
            x = x_new;
            check_finite(&x, t, "slow state")?;
            slow.push(t_next, &x);
        }
        t = t_next;
        if let Event::Jump(j) = ev {
            let seg = slow.segment(t, cfg.tau)?;
            let pre = x.clone();
            (cs.c)(&seg, &j.mark, &mut w.jump_x);
            for i in 0..cs.d {
                x[i] += eps * w.jump_x[i];
            }
            check_finite(&x, t, "slow state")?;
            slow.push_jump(t, &pre, &x);
        }
        if exit_time.is_none() {
            if let Some(r) = radius {
                if norm(&x) > r {
                    exit_time = Some(t);
                }
            }
        }
    }
    Ok(SlowRun { slow, exit_time })
}

/// The fast-averaged controlled slow process, using the model's analytic `ā`.
pub fn integrate_averaged_controlled(
    cs: &CoefficientSet,
    cfg: &IntegratorConfig,
    chi: &InitialDatum,
    controls: &ControlledInputs,
    streams: &mut PathStreams,
) -> Result<SlowRun> {
    let abar = cs.abar_analytic.clone().ok_or_else(|| Error::Config("the averaged drift ā is not available".into()))?;
    integrate_averaged_with(
        cs,
        &|s, o| {
            abar(s, o);
            Ok(())
        },
        cfg,
        chi,
        controls,
        streams,
    )
}

/// Frozen fast dynamics at unit scale, streamed: `on_interval(t, h, y)` is
/// called for every interval `[t, t+h)` with the state at its left end and
/// `on_jump(t, pre, post)` at every jump.
pub fn run_frozen_fast(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    y0: &[f64],
    t_end: f64,
    dt: f64,
    streams: &mut PathStreams,
    mut on_interval: impl FnMut(f64, f64, &[f64]),
    mut on_jump: impl FnMut(f64, &[f64], &[f64]),
) -> Result<Vec<f64>> {
    if y0.len() != cs.k {
        return Err(Error::Shape(format!("y0 has length {}, model k = {}", y0.len(), cs.k)));
    }
    let n = grid_steps(t_end, dt)?;
    let jumps = if cs.fast_jumps {
        cs.levy.sample_jumps(1.0, t_end, &mut streams.jump_count, &mut streams.jump_mark)?
    } else {
        Vec::new()
    };
    let mut w = Work::new(cs.d, cs.k);
    let mut y = y0.to_vec();
    let mut t = 0.0;
    for ev in EventClock::new(dt, n, &jumps) {
        let t_next = match &ev {
            Event::Grid(g) => *g,
            Event::Jump(j) => j.time,
        };
        let h = t_next - t;
        if h > 0.0 {
            on_interval(t, h, &y);
            let s = h.sqrt();
            for v in w.db2.iter_mut() {
                *v = s * streams.fast_bm.sample::<f64, _>(StandardNormal);
            }
            fast_update(cs, zeta, 1.0, h, &mut w, &mut y)?;
            check_finite(&y, t, "fast state")?;
        }
        t = t_next;
        if let Event::Jump(j) = ev {
            let pre = y.clone();
            (cs.h)(zeta, &pre, &j.mark, &mut w.jump_y);
            for i in 0..cs.k {
                y[i] += w.jump_y[i];
            }
            check_finite(&y, t, "fast state")?;
            on_jump(t, &pre, &y);
        }
    }
    Ok(y)
}

/// Path of the frozen fast process `Y^{ζ,y}` on `[0, T]`.
pub fn integrate_frozen_fast(
    cs: &CoefficientSet,
    zeta: &Segment<'_>,
    y0: &[f64],
    t_end: f64,
    dt: f64,
    streams: &mut PathStreams,
) -> Result<SamplePath> {
    if !(t_end > 0.0) {
        return Err(Error::Argument(format!("T must be positive, got {t_end}")));
    }
    let path = std::cell::RefCell::new(SamplePath::new(cs.k, 0.0, dt));
    let y_end = run_frozen_fast(
        cs,
        zeta,
        y0,
        t_end,
        dt,
        streams,
        |t, _, y| path.borrow_mut().push_or_jump(t, y),
        |t, pre, post| path.borrow_mut().push_jump(t, pre, post),
    )?;
    let mut path = path.into_inner();
    path.push_or_jump(t_end, &y_end);
    Ok(path)
}

/// Streams for replica `index` of an experiment seeded with `seed`.
pub fn replica_streams(seed: u64, index: u64) -> PathStreams {
    PathStreams::new(seed, index)
}

pub fn gaussian(rng: &mut RngStream) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}
