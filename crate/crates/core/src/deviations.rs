//! Skeleton equation, rate function and the moderate-deviation sweep.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::averaging::{map_replicas, solve_averaged_ode, KhasminskiiParams};
use crate::engine::{integrate_multiscale, IntegratorConfig};
use crate::error::{Error, Result};
use crate::levy::{LevyKind, LevyModel, Region};
use crate::model::{dabar, CoefficientSet};
use crate::rng::{child_seed, PathStreams};
use crate::segment::{grid_steps, InitialDatum, SamplePath, Segment};
use crate::stats::{wilson, Proportion, Z95};

/// Singular values below `RANK_TOL · σ_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Relative residual outside the range beyond which the rate is `+∞`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest condition number the brute-force solver accepts.
pub const MAX_CONDITION: f64 = 1e12;

/// Nodes and weights with `Σ wₘ φ(zₘ) ≈ ∫ φ dν`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkQuadrature {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Gauss–Hermite rule for the one-dimensional untruncated Gauss-light measure,
/// built by the Golub–Welsch eigenvalue method.
pub fn mark_quadrature(levy: &LevyModel, n: usize) -> Result<MarkQuadrature> {
    let alpha = match levy.kind {
        LevyKind::GaussLight { alpha } if levy.dim == 1 && levy.truncation == 0.0 => alpha,
        _ => {
            return Err(Error::Config(
                "mark quadrature is available for the untruncated one-dimensional Gauss-light measure only".into(),
            ))
        }
    };
    if n == 0 || n > 64 {
        return Err(Error::Argument(format!("mark node count must lie in 1..=64, got {n}")));
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = alpha.sqrt();
    Ok(MarkQuadrature {
        dim: 1,
        nodes: pairs.iter().map(|p| vec![p.0 / s]).collect(),
        weights: pairs.iter().map(|p| p.1 / s).collect(),
    })
}

/// The mark part of a control.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkControl {
    /// `g(s, z) = c(X̄⁰_s, z)ᵀ λ(s)`; `lambda` is `steps × d`.
    Representer { lambda: Vec<f64> },
    /// `g(sᵢ, zₘ)` on a mark quadrature; `values` is `steps × nodes`.
    Raw { quadrature: MarkQuadrature, values: Vec<f64> },
}

/// Controls `(f, g)` at the left ends of `steps` grid intervals of length `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub dt: f64,
    pub steps: usize,
    pub d: usize,
    /// `steps × d`.
    pub f: Vec<f64>,
    pub g: MarkControl,
}

impl ControlPair {
    pub fn zero(d: usize, steps: usize, dt: f64) -> Self {
        Self { dt, steps, d, f: vec![0.0; steps * d], g: MarkControl::Representer { lambda: vec![0.0; steps * d] } }
    }

    pub fn representer(d: usize, dt: f64, f: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if f.len() != lambda.len() || !f.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "control arrays of lengths {} and {} for d = {d}",
                f.len(),
                lambda.len()
            )));
        }
        Ok(Self { dt, steps: f.len() / d, d, f, g: MarkControl::Representer { lambda } })
    }

    /// Samples `f(t)` and `λ(t)` at the grid's left ends.
    pub fn from_fns(
        d: usize,
        steps: usize,
        dt: f64,
        f: impl Fn(f64, &mut [f64]),
        lambda: impl Fn(f64, &mut [f64]),
    ) -> Self {
        let mut fv = vec![0.0; steps * d];
        let mut lv = vec![0.0; steps * d];
        for i in 0..steps {
            let t = i as f64 * dt;
            f(t, &mut fv[i * d..(i + 1) * d]);
            lambda(t, &mut lv[i * d..(i + 1) * d]);
        }
        Self { dt, steps, d, f: fv, g: MarkControl::Representer { lambda: lv } }
    }

    /// `½(∫|f|² + ∫∫|g|² ν)`.
    pub fn cost(&self, cs: &CoefficientSet, xbar: &SamplePath) -> Result<f64> {
        let d = self.d;
        let mut total = 0.0;
        for i in 0..self.steps {
            let fi = &self.f[i * d..(i + 1) * d];
            let mut step = fi.iter().map(|v| v * v).sum::<f64>();
            step += match &self.g {
                MarkControl::Representer { lambda } => {
                    let seg = xbar.segment(i as f64 * self.dt, cs.tau)?;
                    let g = gram_matrix(cs, &seg)?;
                    let l = &lambda[i * d..(i + 1) * d];
                    let mut q = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            q += l[a] * g[a * d + b] * l[b];
                        }
                    }
                    q
                }
                MarkControl::Raw { quadrature, values } => {
                    let m = quadrature.weights.len();
                    (0..m).map(|j| quadrature.weights[j] * values[i * m + j].powi(2)).sum()
                }
            };
            total += self.dt * step;
        }
        Ok(0.5 * total)
    }

    /// Evaluates a representer control on the quadrature nodes.
    pub fn to_raw(&self, cs: &CoefficientSet, xbar: &SamplePath, quadrature: &MarkQuadrature) -> Result<ControlPair> {
        let lambda = match &self.g {
            MarkControl::Raw { .. } => return Ok(self.clone()),
            MarkControl::Representer { lambda } => lambda,
        };
        let (d, m) = (self.d, quadrature.weights.len());
        let mut values = vec![0.0; self.steps * m];
        let mut cz = vec![0.0; d];
        for i in 0..self.steps {
            let seg = xbar.segment(i as f64 * self.dt, cs.tau)?;
            for j in 0..m {
                (cs.c)(&seg, &quadrature.nodes[j], &mut cz);
                values[i * m + j] = (0..d).map(|a| cz[a] * lambda[i * d + a]).sum();
            }
        }
        Ok(ControlPair { g: MarkControl::Raw { quadrature: quadrature.clone(), values }, ..self.clone() })
    }

    /// `σ(X̄⁰_s) f(s) + ∫ c(X̄⁰_s, z) g(s, z) ν(dz)` on the grid, `steps × d`.
    fn forcing(&self, cs: &CoefficientSet, xbar: &SamplePath) -> Result<Vec<f64>> {
        let d = self.d;
        let mut out = vec![0.0; self.steps * d];
        let mut sigma = vec![0.0; d * d];
        let mut cz = vec![0.0; d];
        for i in 0..self.steps {
            let seg = xbar.segment(i as f64 * self.dt, cs.tau)?;
            (cs.sigma)(&seg, &mut sigma);
            let row = &mut out[i * d..(i + 1) * d];
            for a in 0..d {
                row[a] = (0..d).map(|b| sigma[a * d + b] * self.f[i * d + b]).sum();
            }
            match &self.g {
                MarkControl::Representer { lambda } => {
                    if lambda[i * d..(i + 1) * d].iter().all(|&l| l == 0.0) {
                        continue;
                    }
                    let g = gram_matrix(cs, &seg)?;
                    for a in 0..d {
                        row[a] += (0..d).map(|b| g[a * d + b] * lambda[i * d + b]).sum::<f64>();
                    }
                }
                MarkControl::Raw { quadrature, values } => {
                    let m = quadrature.weights.len();
                    for j in 0..m {
                        (cs.c)(&seg, &quadrature.nodes[j], &mut cz);
                        let wg = quadrature.weights[j] * values[i * m + j];
                        for a in 0..d {
                            row[a] += wg * cz[a];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `G(ζ) = ∫ c(ζ, z) c(ζ, z)ᵀ ν(dz)`, row-major `d × d`.
pub fn gram_matrix(cs: &CoefficientSet, zeta: &Segment<'_>) -> Result<Vec<f64>> {
    let d = cs.d;
    if !cs.slow_jumps {
        return Ok(vec![0.0; d * d]);
    }
    let q = cs.levy.nu_integral_region(
        &|z, out| {
            let mut cz = vec![0.0; d];
            (cs.c)(zeta, z, &mut cz);
            for a in 0..d {
                for b in 0..d {
                    out[a * d + b] = cz[a] * cz[b];
                }
            }
        },
        d * d,
        Region::All,
    )?;
    let mut g = q.value;
    for a in 0..d {
        for b in 0..a {
            let s = 0.5 * (g[a * d + b] + g[b * d + a]);
            g[a * d + b] = s;
            g[b * d + a] = s;
        }
    }
    Ok(g)
}

fn check_grid(cs: &CoefficientSet, xbar: &SamplePath, steps: usize, dt: f64) -> Result<()> {
    if xbar.dim() != cs.d {
        return Err(Error::Shape(format!("averaged path has dimension {}, model d = {}", xbar.dim(), cs.d)));
    }
    if (xbar.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::Shape(format!("averaged path step {} differs from {dt}", xbar.dt())));
    }
    if xbar.t0() > -cs.tau + 1e-12 || xbar.t1() < steps as f64 * dt - 1e-9 * dt {
        return Err(Error::Shape(format!(
            "averaged path covers [{}, {}], need [{}, {}]",
            xbar.t0(),
            xbar.t1(),
            -cs.tau,
            steps as f64 * dt
        )));
    }
    Ok(())
}

/// Euler recursion `ηᵢ₊₁ = ηᵢ + dt (Dā(X̄⁰ₜᵢ) η_{tᵢ} + Fᵢ)` from `η ≡ 0` on `[−τ, 0]`.
fn skeleton_with_forcing(
    cs: &CoefficientSet,
    xbar: &SamplePath,
    forcing: &[f64],
    steps: usize,
    dt: f64,
) -> Result<SamplePath> {
    let d = cs.d;
    let zero = InitialDatum::constant(vec![0.0; d]);
    let init = zero.to_path(cs.tau, dt)?;
    let mut eta = SamplePath::with_capacity(d, -cs.tau, dt, init.len() + steps);
    for i in 0..init.len() {
        eta.push(init.times()[i], init.knot(i));
    }
    let mut x = vec![0.0; d];
    let mut lin = vec![0.0; d];
    for i in 0..steps {
        let t = i as f64 * dt;
        let base = xbar.segment(t, cs.tau)?;
        let dir = eta.segment(t, cs.tau)?;
        dabar(cs, &base, &dir, &mut lin)?;
        for a in 0..d {
            x[a] += dt * (lin[a] + forcing[i * d + a]);
        }
        crate::engine::check_finite(&x, t, "skeleton state")?;
        eta.push((i + 1) as f64 * dt, &x);
    }
    Ok(eta)
}

/// Solves the skeleton equation driven by `ctrl` on `[0, steps·dt]`.
pub fn solve_skeleton(cs: &CoefficientSet, xbar: &SamplePath, ctrl: &ControlPair, dt: f64) -> Result<SamplePath> {
    if (ctrl.dt - dt).abs() > 1e-12 * dt || ctrl.d != cs.d {
        return Err(Error::Shape(format!(
            "control grid (dt = {}, d = {}) does not match dt = {dt}, d = {}",
            ctrl.dt, ctrl.d, cs.d
        )));
    }
    check_grid(cs, xbar, ctrl.steps, dt)?;
    let forcing = ctrl.forcing(cs, xbar)?;
    skeleton_with_forcing(cs, xbar, &forcing, ctrl.steps, dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    /// `+∞` when the target leaves the range of `Σ`.
    pub value: f64,
    pub optimal_control: Option<ControlPair>,
    pub residual_norm: f64,
    /// Condition number of the retained spectrum (brute force only).
    pub condition: Option<f64>,
}

/// Pseudo-inverse with relative rank tolerance [`RANK_TOL`].
pub fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = RANK_TOL * smax;
    let mut smin = f64::INFINITY;
    let inv = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| {
            if s > cut && s > 0.0 {
                smin = smin.min(s);
                1.0 / s
            } else {
                0.0
            }
        }),
    );
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let pinv = vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    let condition = if smin.is_finite() { smax / smin } else { 1.0 };
    (pinv, condition)
}

fn target_steps(cs: &CoefficientSet, eta: &SamplePath, dt: f64) -> Result<usize> {
    if eta.dim() != cs.d {
        return Err(Error::Shape(format!("target has dimension {}, model d = {}", eta.dim(), cs.d)));
    }
    if eta.t0() > -cs.tau + 1e-12 {
        return Err(Error::Shape("target must be defined on [-tau, T]".into()));
    }
    if eta.sup_abs_between(-cs.tau, 0.0) > 1e-12 {
        return Err(Error::Domain("target must vanish on [-tau, 0]".into()));
    }
    grid_steps(eta.t1(), dt)
}

fn grid_value(path: &SamplePath, t: f64, out: &mut [f64]) -> Result<()> {
    path.value_at(t, out)
}

/// Pointwise minimum-norm evaluation of `I(η) = ½∫ wᵀ Σ⁺ w ds` with
/// `w = η̇ − Dā(X̄⁰) η_s` and `Σ = σσᵀ + G`.
pub fn rate_function(cs: &CoefficientSet, xbar: &SamplePath, eta: &SamplePath, dt: f64) -> Result<RateResult> {
    let steps = target_steps(cs, eta, dt)?;
    check_grid(cs, xbar, steps, dt)?;
    let d = cs.d;
    let mut value = 0.0;
    let mut residual: f64 = 0.0;
    let mut f = vec![0.0; steps * d];
    let mut lambda = vec![0.0; steps * d];
    let (mut e0, mut e1, mut lin) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut sigma = vec![0.0; d * d];
    for i in 0..steps {
        let t = i as f64 * dt;
        grid_value(eta, t, &mut e0)?;
        grid_value(eta, (i + 1) as f64 * dt, &mut e1)?;
        let base = xbar.segment(t, cs.tau)?;
        let dir = eta.segment(t, cs.tau)?;
        dabar(cs, &base, &dir, &mut lin)?;
        let w = DVector::from_iterator(d, (0..d).map(|a| (e1[a] - e0[a]) / dt - lin[a]));
        (cs.sigma)(&base, &mut sigma);
        let s = DMatrix::from_row_slice(d, d, &sigma);
        let g = DMatrix::from_row_slice(d, d, &gram_matrix(cs, &base)?);
        let big = &s * s.transpose() + g;
        let (pinv, _) = pseudo_inverse(&big);
        let l = &pinv * &w;
        let projected = &big * &l;
        let r = (&w - projected).norm() / w.norm().max(1.0);
        residual = residual.max(r);
        value += 0.5 * dt * w.dot(&l);
        let fi = s.transpose() * &l;
        f[i * d..(i + 1) * d].copy_from_slice(fi.as_slice());
        lambda[i * d..(i + 1) * d].copy_from_slice(l.as_slice());
    }
    if residual > RESIDUAL_TOL {
        return Ok(RateResult {
            value: f64::INFINITY,
            optimal_control: None,
            residual_norm: residual,
            condition: None,
        });
    }
    Ok(RateResult {
        value,
        optimal_control: Some(ControlPair { dt, steps, d, f, g: MarkControl::Representer { lambda } }),
        residual_norm: residual,
        condition: None,
    })
}

/// Equality-constrained least-cost control over `time × mark nodes`, solved
/// globally by `u = W⁻¹Aᵀ(AW⁻¹Aᵀ)⁺η` with `A` the linear control-to-path map.
pub fn rate_function_bruteforce(
    cs: &CoefficientSet,
    xbar: &SamplePath,
    eta: &SamplePath,
    dt: f64,
    n_mark_nodes: usize,
) -> Result<RateResult> {
    let steps = target_steps(cs, eta, dt)?;
    if steps > 500 {
        return Err(Error::Argument(format!("brute force limited to 500 time steps, got {steps}")));
    }
    check_grid(cs, xbar, steps, dt)?;
    let quad = mark_quadrature(&cs.levy, n_mark_nodes)?;
    let d = cs.d;
    let m = quad.weights.len();
    let per = d + m;
    let rows = steps * d;
    let cols = steps * per;

    // Response of the path to unit forcing in each (step, component).
    let mut resp = DMatrix::<f64>::zeros(rows, rows);
    let mut unit = vec![0.0; rows];
    let mut v = vec![0.0; d];
    for col in 0..rows {
        unit[col] = 1.0;
        let path = skeleton_with_forcing(cs, xbar, &unit, steps, dt)?;
        unit[col] = 0.0;
        for i in (col / d)..steps {
            grid_value(&path, (i + 1) as f64 * dt, &mut v)?;
            for a in 0..d {
                resp[(i * d + a, col)] = v[a];
            }
        }
    }

    // Control-to-forcing map, block diagonal in time.
    let mut b = DMatrix::<f64>::zeros(rows, cols);
    let mut sigma = vec![0.0; d * d];
    let mut cz = vec![0.0; d];
    for i in 0..steps {
        let seg = xbar.segment(i as f64 * dt, cs.tau)?;
        (cs.sigma)(&seg, &mut sigma);
        for a in 0..d {
            for c in 0..d {
                b[(i * d + a, i * per + c)] = sigma[a * d + c];
            }
        }
        if cs.slow_jumps {
            for j in 0..m {
                (cs.c)(&seg, &quad.nodes[j], &mut cz);
                for a in 0..d {
                    b[(i * d + a, i * per + d + j)] = quad.weights[j] * cz[a];
                }
            }
        }
    }
    let a_mat = &resp * &b;
    let w_inv = DVector::from_iterator(
        cols,
        (0..cols).map(|c| {
            let k = c % per;
            1.0 / (dt * if k < d { 1.0 } else { quad.weights[k - d] })
        }),
    );
    let mut a_winv = a_mat.clone();
    for c in 0..cols {
        let s = w_inv[c];
        a_winv.column_mut(c).scale_mut(s);
    }
    let k_mat = &a_winv * a_mat.transpose();
    let (k_pinv, condition) = pseudo_inverse(&k_mat);
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let mut target = DVector::zeros(rows);
    for i in 0..steps {
        grid_value(eta, (i + 1) as f64 * dt, &mut v)?;
        for a in 0..d {
            target[i * d + a] = v[a];
        }
    }
    let u = a_winv.transpose() * (&k_pinv * &target);
    let residual = (&a_mat * &u - &target).norm() / target.norm().max(1.0);
    if residual > RESIDUAL_TOL {
        return Ok(RateResult {
            value: f64::INFINITY,
            optimal_control: None,
            residual_norm: residual,
            condition: Some(condition),
        });
    }
    let value = 0.5 * (0..cols).map(|c| u[c] * u[c] / w_inv[c]).sum::<f64>();
    let mut f = vec![0.0; steps * d];
    let mut g = vec![0.0; steps * m];
    for i in 0..steps {
        for a in 0..d {
            f[i * d + a] = u[i * per + a];
        }
        for j in 0..m {
            g[i * m + j] = u[i * per + d + j];
        }
    }
    Ok(RateResult {
        value,
        optimal_control: Some(ControlPair { dt, steps, d, f, g: MarkControl::Raw { quadrature: quad, values: g } }),
        residual_norm: residual,
        condition: Some(condition),
    })
}

/// The minimizing control of a finite rate evaluation.
pub fn recover_optimal_control(result: &RateResult) -> Result<ControlPair> {
    result
        .optimal_control
        .clone()
        .ok_or_else(|| Error::Domain("the rate is infinite; no control reaches the target".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSweepConfig {
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub delta_avg: f64,
    pub n_paths: usize,
    /// `dt = ε / dt_ratio`.
    pub dt_ratio: f64,
    pub t_end: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSweepRow {
    pub epsilon: f64,
    pub a_eps: f64,
    pub p: Proportion,
    /// `ε^θ ln p̂`; NaN on censored rows.
    pub eps_theta_log_p: f64,
    pub avg: Proportion,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSweep {
    pub rows: Vec<MdpSweepRow>,
    pub warnings: Vec<String>,
}

impl MdpSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("eps_grid must be nonempty and strictly decreasing".into()));
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("eps_grid entries must lie in (0, 1)".into()));
        }
        if !(self.delta > 0.0) || !(self.delta_avg > 0.0) || self.n_paths == 0 || !(self.dt_ratio >= 10.0) {
            return Err(Error::Config("need delta > 0, delta_avg > 0, n_paths > 0 and dt_ratio >= 10".into()));
        }
        Ok(())
    }
}

/// Crude Monte Carlo for `P(sup|Zᵉ| > δ)`, `Zᵉ = (Xᵉ − X̄⁰)/a(ε)`, and for
/// `P(sup|Xᵉ − X̄⁰| > δ_avg)` on the uncontrolled system.
pub fn mdp_sweep(
    cs: &CoefficientSet,
    chi: &InitialDatum,
    y0: &[f64],
    cfg: &MdpSweepConfig,
    params: &KhasminskiiParams,
) -> Result<MdpSweep> {
    cfg.validate()?;
    params.validate()?;
    let abar = cs.abar_analytic.clone().ok_or_else(|| Error::Config("the averaged drift ā is not available".into()))?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (row, &eps) in cfg.eps_grid.iter().enumerate() {
        let dt = eps / cfg.dt_ratio;
        let icfg = IntegratorConfig::new(eps, dt, cfg.t_end, cs.tau, cfg.seed);
        icfg.validate()?;
        let xbar = solve_averaged_ode(&|s, o| abar(s, o), chi, cs.tau, cfg.t_end, dt)?;
        let a_eps = params.a_eps(eps);
        let seed = child_seed(cfg.seed, row as u64);
        let sups = map_replicas(cfg.n_paths, |i| {
            let run = integrate_multiscale(cs, &icfg, chi, y0, &mut PathStreams::new(seed, i as u64))?;
            let mut xb = vec![0.0; cs.d];
            let mut worst: f64 = 0.0;
            for (k, &t) in run.slow.times().iter().enumerate() {
                if t < 0.0 {
                    continue;
                }
                xbar.value_at(t, &mut xb)?;
                let gap = run.slow.knot(k).iter().zip(&xb).map(|(x, b)| (x - b) * (x - b)).sum::<f64>().sqrt();
                worst = worst.max(gap);
            }
            Ok(worst)
        })?;
        let n = cfg.n_paths as u64;
        let hits = sups.iter().filter(|&&s| s / a_eps > cfg.delta).count() as u64;
        let avg_hits = sups.iter().filter(|&&s| s > cfg.delta_avg).count() as u64;
        let p = wilson(hits, n, Z95);
        let censored = hits == 0;
        if row == 0 && (hits as f64) < 10.0 {
            warnings.push(format!(
                "pilot check: {hits} hits at epsilon = {eps} (< 10); the sweep is under-resolved for delta = {}",
                cfg.delta
            ));
        }
        rows.push(MdpSweepRow {
            epsilon: eps,
            a_eps,
            eps_theta_log_p: if censored { f64::NAN } else { params.b_eps(eps) * p.p_hat.ln() },
            p,
            avg: wilson(avg_hits, n, Z95),
            censored,
        });
    }
    Ok(MdpSweep { rows, warnings })
}

pub fn mdp_sweep_csv(rows: &[MdpSweepRow]) -> String {
    let mut s =
        String::from("epsilon,a_eps,p_hat,ci_lo,ci_hi,eps_theta_log_p,avg_p_hat,avg_ci_lo,avg_ci_hi,censored\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.epsilon,
            r.a_eps,
            r.p.p_hat,
            r.p.lo,
            r.p.hi,
            r.eps_theta_log_p,
            r.avg.p_hat,
            r.avg.lo,
            r.avg.hi,
            r.censored
        ));
    }
    s
}
