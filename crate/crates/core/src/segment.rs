//! Càdlàg paths on `[-τ, T]`, delay segments and initial data.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A càdlàg path stored as time knots. Between knots the path is linear; a
/// jump at `t` is a pair of knots with equal time, the pre-jump value first.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    dim: usize,
    t0: f64,
    dt: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    is_jump: Vec<bool>,
}

impl SamplePath {
    pub fn new(dim: usize, t0: f64, dt: f64) -> Self {
        Self { dim, t0, dt, times: Vec::new(), values: Vec::new(), is_jump: Vec::new() }
    }

    pub fn with_capacity(dim: usize, t0: f64, dt: f64, knots: usize) -> Self {
        Self {
            dim,
            t0,
            dt,
            times: Vec::with_capacity(knots),
            values: Vec::with_capacity(knots * dim),
            is_jump: Vec::with_capacity(knots),
        }
    }

    /// Sample `f` on the grid `t0 + n dt`, `n = 0..=round((t1 - t0)/dt)`.
    pub fn from_fn(dim: usize, t0: f64, t1: f64, dt: f64, f: impl Fn(f64, &mut [f64])) -> Result<Self> {
        let n = grid_steps(t1 - t0, dt)?;
        let mut p = Self::with_capacity(dim, t0, dt, n + 1);
        let mut x = vec![0.0; dim];
        for i in 0..=n {
            let t = t0 + i as f64 * dt;
            f(t, &mut x);
            p.push(t, &x);
        }
        Ok(p)
    }

    /// Constant segment on `[-tau, 0]`.
    pub fn constant_segment(tau: f64, value: &[f64]) -> Self {
        let mut p = Self::new(value.len(), -tau, tau.max(f64::MIN_POSITIVE));
        p.push(-tau, value);
        if tau > 0.0 {
            p.push(0.0, value);
        }
        p
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(self.times.last().is_none_or(|&last| t > last), "knots must increase");
        self.times.push(t);
        self.values.extend_from_slice(x);
        self.is_jump.push(false);
    }

    pub fn push_jump(&mut self, t: f64, pre: &[f64], post: &[f64]) {
        debug_assert!(self.times.last().is_none_or(|&last| t >= last));
        if self.times.last() != Some(&t) {
            self.times.push(t);
            self.values.extend_from_slice(pre);
            self.is_jump.push(false);
        }
        self.times.push(t);
        self.values.extend_from_slice(post);
        self.is_jump.push(true);
    }

    /// Append a knot at `t`; when the last knot already sits at `t` with a
    /// different value, record a jump instead.
    pub fn push_or_jump(&mut self, t: f64, x: &[f64]) {
        if let Some(&last) = self.times().last() {
            if last == t {
                if self.last() != x {
                    let pre = self.last().to_vec();
                    self.push_jump(t, &pre, x);
                }
                return;
            }
        }
        self.push(t, x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().unwrap_or(&self.t0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn knot(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn knot_is_jump(&self, i: usize) -> bool {
        self.is_jump[i]
    }

    pub fn last(&self) -> &[f64] {
        self.knot(self.len() - 1)
    }

    /// Values on the uniform grid (post-jump convention).
    pub fn grid_values(&self) -> Vec<(f64, Vec<f64>)> {
        let n = ((self.t1() - self.t0) / self.dt + 1e-9).floor() as usize;
        let mut x = vec![0.0; self.dim];
        (0..=n)
            .map(|i| {
                let t = self.t0 + i as f64 * self.dt;
                self.value_at(t.min(self.t1()), &mut x).expect("grid inside path");
                (t, x.clone())
            })
            .collect()
    }

    /// `(time, pre, post)` for every jump.
    pub fn jumps(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        (0..self.len())
            .filter(|&i| self.is_jump[i])
            .map(|i| (self.times[i], self.knot(i - 1).to_vec(), self.knot(i).to_vec()))
            .collect()
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if self.times.is_empty() || t < self.t0 - 1e-12 || t > self.t1() + 1e-12 {
            return Err(Error::Range(format!("t = {t} outside [{}, {}]", self.t0, self.t1())));
        }
        Ok(())
    }

    /// Value at `t`, right-continuous at jumps.
    pub fn value_at(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_range(t)?;
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            out.copy_from_slice(self.knot(0));
            return Ok(());
        }
        let k = i - 1;
        if self.times[k] == t || i == self.times.len() {
            out.copy_from_slice(self.knot(k));
            return Ok(());
        }
        self.interpolate(k, i, t, out);
        Ok(())
    }

    /// Left limit `x(t-)`; equals `x(t)` away from jumps.
    pub fn left_limit(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_range(t)?;
        let j = self.times.partition_point(|&s| s < t);
        if j == self.times.len() {
            out.copy_from_slice(self.last());
            return Ok(());
        }
        if self.times[j] == t || j == 0 {
            out.copy_from_slice(self.knot(j));
            return Ok(());
        }
        self.interpolate(j - 1, j, t, out);
        Ok(())
    }

    fn interpolate(&self, a: usize, b: usize, t: f64, out: &mut [f64]) {
        let (ta, tb) = (self.times[a], self.times[b]);
        let w = (t - ta) / (tb - ta);
        let (xa, xb) = (self.knot(a), self.knot(b));
        for i in 0..self.dim {
            out[i] = xa[i] + w * (xb[i] - xa[i]);
        }
    }

    pub fn segment(&self, anchor: f64, tau: f64) -> Result<Segment<'_>> {
        if anchor - tau < self.t0 - 1e-12 || anchor > self.t1() + 1e-12 {
            return Err(Error::Range(format!(
                "segment window [{}, {anchor}] outside path [{}, {}]",
                anchor - tau,
                self.t0,
                self.t1()
            )));
        }
        Ok(Segment { path: self, anchor, tau })
    }

    /// Supremum over all knots (pre- and post-jump) in `[a, b]` of `|x|`.
    pub fn sup_abs_between(&self, a: f64, b: f64) -> f64 {
        let lo = self.times.partition_point(|&s| s < a);
        let hi = self.times.partition_point(|&s| s <= b);
        (lo..hi).map(|i| norm(self.knot(i))).fold(0.0, f64::max)
    }

    /// CSV in the `t,x_0..,is_jump` layout; jumps appear as the pre-jump row
    /// followed by the post-jump row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.dim {
            s.push_str(&format!(",x_{i}"));
        }
        s.push_str(",is_jump\n");
        for k in 0..self.len() {
            s.push_str(&format!("{}", self.times[k]));
            for v in self.knot(k) {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(if self.is_jump[k] { ",1\n" } else { ",0\n" });
        }
        s
    }
}

/// Number of steps `n` with `n dt = span`; errors unless the ratio is an integer within 1e-9.
pub fn grid_steps(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(span >= 0.0) {
        return Err(Error::Argument(format!("need dt > 0 and span >= 0 (dt = {dt}, span = {span})")));
    }
    let r = span / dt;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Config(format!("span {span} is not an integer multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

pub fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        return x[0].abs();
    }
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The window `θ ↦ x(anchor + θ)`, `θ ∈ [-τ, 0]`, borrowed from a path.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    path: &'a SamplePath,
    anchor: f64,
    tau: f64,
}

impl<'a> Segment<'a> {
    pub fn dim(&self) -> usize {
        self.path.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn path(&self) -> &'a SamplePath {
        self.path
    }

    /// `x(anchor + θ)`.
    pub fn at(&self, theta: f64, out: &mut [f64]) {
        let t = (self.anchor + theta).clamp(self.path.t0, self.path.t1());
        self.path.value_at(t, out).expect("clamped into range");
    }

    pub fn at_scalar(&self, theta: f64) -> f64 {
        let mut x = [0.0];
        self.at(theta, &mut x);
        x[0]
    }

    pub fn left_limit(&self, theta: f64, out: &mut [f64]) {
        let t = (self.anchor + theta).clamp(self.path.t0, self.path.t1());
        self.path.left_limit(t, out).expect("clamped into range");
    }

    /// Abscissae in `[-τ, 0]`: both window ends and every knot inside.
    pub fn abscissae(&self) -> Vec<f64> {
        let a = self.anchor - self.tau;
        let lo = self.path.times.partition_point(|&s| s <= a);
        let hi = self.path.times.partition_point(|&s| s < self.anchor);
        let mut th = Vec::with_capacity(hi.saturating_sub(lo) + 2);
        th.push(-self.tau);
        for i in lo..hi {
            let t = self.path.times[i] - self.anchor;
            if th.last() != Some(&t) {
                th.push(t);
            }
        }
        if th.last() != Some(&0.0) {
            th.push(0.0);
        }
        th
    }

    /// `sup_θ |x(anchor + θ)|` over knots (pre and post jump values) and window ends.
    pub fn sup_norm(&self) -> f64 {
        let mut x = vec![0.0; self.dim()];
        self.at(-self.tau, &mut x);
        let mut m = norm(&x);
        self.at(0.0, &mut x);
        m = m.max(norm(&x));
        let a = self.anchor - self.tau;
        let lo = self.path.times.partition_point(|&s| s <= a);
        let hi = self.path.times.partition_point(|&s| s <= self.anchor);
        for i in lo..hi {
            m = m.max(norm(self.path.knot(i)));
        }
        m
    }

    /// Owned copy `u·self + v·other` on `[-τ, 0]`, keeping jumps of both.
    pub fn lincomb(&self, u: f64, other: &Segment<'_>, v: f64) -> Result<SamplePath> {
        check_compatible(self, other)?;
        let mut th = self.abscissae();
        th.extend(other.abscissae());
        th.sort_by(|a, b| a.total_cmp(b));
        th.dedup();
        let d = self.dim();
        let mut p = SamplePath::with_capacity(d, -self.tau, self.path.dt, th.len() + 2);
        let (mut a, mut b, mut la, mut lb) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut post = vec![0.0; d];
        let mut pre = vec![0.0; d];
        for (n, &t) in th.iter().enumerate() {
            self.at(t, &mut a);
            other.at(t, &mut b);
            for i in 0..d {
                post[i] = u * a[i] + v * b[i];
            }
            if n > 0 {
                self.left_limit(t, &mut la);
                other.left_limit(t, &mut lb);
                for i in 0..d {
                    pre[i] = u * la[i] + v * lb[i];
                }
                if pre != post {
                    p.push_jump(t, &pre, &post);
                    continue;
                }
            }
            p.push(t, &post);
        }
        Ok(p)
    }

    pub fn to_owned_path(&self) -> SamplePath {
        self.lincomb(1.0, self, 0.0).expect("self-compatible")
    }
}

fn check_compatible(s1: &Segment<'_>, s2: &Segment<'_>) -> Result<()> {
    if s1.dim() != s2.dim() || (s1.tau - s2.tau).abs() > 1e-12 * s1.tau.max(1.0) {
        return Err(Error::Shape(format!(
            "segments differ in shape (dim {} vs {}, tau {} vs {})",
            s1.dim(),
            s2.dim(),
            s1.tau,
            s2.tau
        )));
    }
    Ok(())
}

/// `sup_θ |s1(θ) − s2(θ)|` over the union of both windows' abscissae,
/// comparing values and left limits.
pub fn segment_sup_distance(s1: &Segment<'_>, s2: &Segment<'_>) -> Result<f64> {
    check_compatible(s1, s2)?;
    let mut th = s1.abscissae();
    th.extend(s2.abscissae());
    th.sort_by(|a, b| a.total_cmp(b));
    th.dedup();
    let d = s1.dim();
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let mut m: f64 = 0.0;
    let mut diff = vec![0.0; d];
    for (n, &t) in th.iter().enumerate() {
        s1.at(t, &mut a);
        s2.at(t, &mut b);
        for i in 0..d {
            diff[i] = a[i] - b[i];
        }
        m = m.max(norm(&diff));
        if n > 0 {
            s1.left_limit(t, &mut a);
            s2.left_limit(t, &mut b);
            for i in 0..d {
                diff[i] = a[i] - b[i];
            }
            m = m.max(norm(&diff));
        }
    }
    Ok(m)
}

pub type PathFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Initial segment `χ: [-τ, 0] → ℝ^d` with a declared Lipschitz constant.
#[derive(Clone)]
pub struct InitialDatum {
    pub chi: PathFn,
    pub lipschitz_lambda: f64,
    pub dim: usize,
}

impl std::fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialDatum")
            .field("dim", &self.dim)
            .field("lipschitz_lambda", &self.lipschitz_lambda)
            .finish()
    }
}

impl InitialDatum {
    pub fn new(dim: usize, lipschitz_lambda: f64, chi: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { chi: Arc::new(chi), lipschitz_lambda, dim }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        Self::new(dim, 0.0, move |_, out| out.copy_from_slice(&value))
    }

    /// `χ(θ) = value + slope·θ`.
    pub fn affine(value: Vec<f64>, slope: Vec<f64>) -> Self {
        let dim = value.len();
        let lambda = norm(&slope);
        Self::new(dim, lambda, move |th, out| {
            for i in 0..out.len() {
                out[i] = value[i] + slope[i] * th;
            }
        })
    }

    pub fn eval(&self, theta: f64, out: &mut [f64]) {
        (self.chi)(theta, out)
    }

    /// The initial segment sampled on the grid `-τ, -τ+dt, …, 0`.
    pub fn to_path(&self, tau: f64, dt: f64) -> Result<SamplePath> {
        SamplePath::from_fn(self.dim, -tau, 0.0, dt, |t, out| self.eval(t, out))
    }

    /// Largest `|χ(θ₁) − χ(θ₂)| / (λ |θ₁ − θ₂|)` over random pairs; `≤ 1` means consistent.
    pub fn lipschitz_ratio(&self, tau: f64, pairs: usize, rng: &mut RngStream) -> f64 {
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let t1 = -tau * rng.random::<f64>();
            let t2 = -tau * rng.random::<f64>();
            if t1 == t2 {
                continue;
            }
            self.eval(t1, &mut a);
            self.eval(t2, &mut b);
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let lhs = norm(&diff);
            let rhs = self.lipschitz_lambda * (t1 - t2).abs();
            let r = if rhs > 0.0 {
                lhs / rhs
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if r.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(r);
        }
        worst
    }
}

/// Random piecewise-linear segment on `[-τ, 0]` with `nodes` node values in `[-bound, bound]`.
pub fn random_segment(dim: usize, tau: f64, nodes: usize, bound: f64, rng: &mut RngStream) -> SamplePath {
    let mut p = SamplePath::with_capacity(dim, -tau, tau / (nodes - 1) as f64, nodes);
    let mut x = vec![0.0; dim];
    for n in 0..nodes {
        let t = if n + 1 == nodes { 0.0 } else { -tau + tau * n as f64 / (nodes - 1) as f64 };
        for v in x.iter_mut() {
            *v = bound * (2.0 * rng.random::<f64>() - 1.0);
        }
        p.push(t, &x);
    }
    p
}
