//! Coefficient sets, the built-in Ornstein-Uhlenbeck example and condition validators.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::levy::{LevyModel, Region};
use crate::rng::RngStream;
use crate::segment::{norm, random_segment, segment_sup_distance, InitialDatum, SamplePath, Segment};

pub type StateFn = Arc<dyn Fn(&Segment<'_>, &[f64], &mut [f64]) + Send + Sync>;
pub type SegFn = Arc<dyn Fn(&Segment<'_>, &mut [f64]) + Send + Sync>;
pub type MarkFn = Arc<dyn Fn(&Segment<'_>, &[f64], &mut [f64]) + Send + Sync>;
pub type StateMarkFn = Arc<dyn Fn(&Segment<'_>, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type DerivFn = Arc<dyn Fn(&Segment<'_>, &Segment<'_>, &mut [f64]) + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&Segment<'_>, &mut RngStream, &mut [f64]) + Send + Sync>;

/// Declared structural constants. `beta1_slow` enters the dissipativity of
/// `a`, `beta1` the dissipativity of the fast coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    pub l: f64,
    pub l1: f64,
    pub beta1_slow: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub big_lambda: f64,
    pub lambda: f64,
}

impl Default for DeclaredConstants {
    fn default() -> Self {
        Self { l: 0.0, l1: 0.0, beta1_slow: 0.0, beta1: 0.0, beta2: 0.0, big_lambda: 0.0, lambda: 0.0 }
    }
}

/// Where random probes are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDomain {
    pub segment_bound: f64,
    pub segment_nodes: usize,
    pub y_box: f64,
    pub mark_min: f64,
    pub mark_max: f64,
}

impl Default for ProbeDomain {
    fn default() -> Self {
        Self { segment_bound: 2.0, segment_nodes: 8, y_box: 2.0, mark_min: 0.5, mark_max: 3.0 }
    }
}

/// The coefficients `(a, σ, c, f, g, h)` with optional analytic pieces.
/// Matrices are row-major.
#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub d: usize,
    pub k: usize,
    pub tau: f64,
    pub levy: LevyModel,
    pub a: StateFn,
    pub sigma: SegFn,
    pub c: MarkFn,
    pub f: StateFn,
    pub g: StateFn,
    pub h: StateMarkFn,
    pub abar_analytic: Option<SegFn>,
    pub dabar_analytic: Option<DerivFn>,
    pub invariant_sampler: Option<SamplerFn>,
    /// `∫_{|z| ≥ δ} c(ζ, z) ν(dz)`.
    pub c_nu_mean: Option<SegFn>,
    /// `∫_{|z| ≥ δ} h(ζ, y, z) ν(dz)` and `∫_{|z| < δ} h(ζ, y, z) ν(dz)`.
    pub h_nu_mean: Option<(StateFn, StateFn)>,
    pub fast_jump_compensated: bool,
    pub slow_jumps: bool,
    pub fast_jumps: bool,
    pub constants: DeclaredConstants,
    pub probes: ProbeDomain,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("k", &self.k)
            .field("tau", &self.tau)
            .field("levy", &self.levy)
            .field("fast_jump_compensated", &self.fast_jump_compensated)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

fn zero_state() -> StateFn {
    Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0))
}

fn zero_seg() -> SegFn {
    Arc::new(|_, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0))
}

fn zero_mark_state() -> StateMarkFn {
    Arc::new(|_, _, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0))
}

impl CoefficientSet {
    /// All coefficients zero; set the ones you need.
    pub fn zero(name: &str, d: usize, k: usize, tau: f64, levy: LevyModel) -> Self {
        Self {
            name: name.to_string(),
            d,
            k,
            tau,
            levy,
            a: zero_state(),
            sigma: zero_seg(),
            c: zero_state(),
            f: zero_state(),
            g: zero_state(),
            h: zero_mark_state(),
            abar_analytic: None,
            dabar_analytic: None,
            invariant_sampler: None,
            c_nu_mean: None,
            h_nu_mean: None,
            fast_jump_compensated: true,
            slow_jumps: false,
            fast_jumps: false,
            constants: DeclaredConstants::default(),
            probes: ProbeDomain::default(),
        }
    }

    pub fn with_c(mut self, c: MarkFn) -> Self {
        self.c = c;
        self.c_nu_mean = None;
        self.slow_jumps = true;
        self
    }

    pub fn with_h(mut self, h: StateMarkFn) -> Self {
        self.h = h;
        self.h_nu_mean = None;
        self.fast_jumps = true;
        self
    }

    /// `σ = 0`, `c = 0`: the slow equation becomes deterministic given `Y`.
    pub fn silence_slow(mut self) -> Self {
        self.sigma = zero_seg();
        self.c = zero_state();
        self.c_nu_mean = Some(zero_seg());
        self.slow_jumps = false;
        self
    }

    /// `g = 0`, `h = 0`.
    pub fn silence_fast(mut self) -> Self {
        self.g = zero_state();
        self.h = zero_mark_state();
        self.h_nu_mean = Some((zero_state(), zero_state()));
        self.fast_jumps = false;
        self.invariant_sampler = None;
        self
    }

    /// Keep `g` but drop the fast jump channel.
    pub fn without_fast_jumps(mut self) -> Self {
        self.h = zero_mark_state();
        self.h_nu_mean = Some((zero_state(), zero_state()));
        self.fast_jumps = false;
        self.invariant_sampler = None;
        self
    }

    pub fn jumps_active(&self) -> bool {
        self.slow_jumps || self.fast_jumps
    }

    /// `∫_{|z| ≥ δ} c(ζ, z) ν(dz)`.
    pub fn c_mean(&self, seg: &Segment<'_>, out: &mut [f64]) -> Result<()> {
        if let Some(m) = &self.c_nu_mean {
            m(seg, out);
            return Ok(());
        }
        if !self.slow_jumps {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let q = self.levy.nu_integral_region(&|z, o| (self.c)(seg, z, o), self.d, Region::AboveCutoff)?;
        out.copy_from_slice(&q.value);
        Ok(())
    }

    /// `∫ h ν` over `{|z| ≥ δ}` (`above = true`) or `{|z| < δ}`.
    pub fn h_mean(&self, seg: &Segment<'_>, y: &[f64], above: bool, out: &mut [f64]) -> Result<()> {
        if let Some((hi, lo)) = &self.h_nu_mean {
            if above {
                hi(seg, y, out)
            } else {
                lo(seg, y, out)
            }
            return Ok(());
        }
        if !self.fast_jumps || (!above && self.levy.truncation == 0.0) {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let region = if above { Region::AboveCutoff } else { Region::BelowCutoff };
        let q = self.levy.nu_integral_region(&|z, o| (self.h)(seg, y, z, o), self.k, region)?;
        out.copy_from_slice(&q.value);
        Ok(())
    }
}

/// Parameters of the built-in model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussOuParams {
    pub kappa: f64,
    pub kappa2: f64,
    pub gamma_coupling: f64,
    pub f1_base: f64,
    pub g_level: f64,
    /// `f1(ζ) = f1_base + f1_slope · tanh²(ζ(0))`.
    pub f1_slope: f64,
}

impl Default for GaussOuParams {
    fn default() -> Self {
        Self { kappa: 1.0, kappa2: 0.0, gamma_coupling: 0.0, f1_base: 1.0, g_level: 1.0, f1_slope: 0.0 }
    }
}

const TANH2_LIP: f64 = 0.769_800_358_919_501_3; // max |d tanh²/dx| = 4/(3√3)

/// The scalar slow-fast example: an Ornstein-Uhlenbeck fast variable reset by
/// jumps to a scaled mark, so that its invariant law is `N(0, g²/(2 f1(ζ)))`,
/// driving a linear delayed slow drift.
///
/// ```text
/// a(ζ, y) = −κ ζ(0) − κ₂ ζ(−τ) + γ ζ(−τ) y      σ = 1
/// c(ζ, z) = z (1 + 0.1 tanh ζ(0))
/// f(ζ, y) = −f1(ζ) y     g = g_level     h(ζ, y, z) = s(ζ) z − y
/// ```
///
/// with `s(ζ) = g_level / sqrt(2 f1(ζ) m₂)` and `m₂` the normalised second
/// moment of one mark coordinate; fast jumps are not compensated.
pub fn builtin_gauss_ou(params: GaussOuParams, levy: LevyModel, tau: f64) -> Result<CoefficientSet> {
    let GaussOuParams { kappa, kappa2, gamma_coupling: gam, f1_base, g_level, f1_slope } = params;
    if !(f1_base > 0.0) || !(g_level > 0.0) {
        return Err(Error::Argument(format!("f1_base and g_level must be positive (got {f1_base}, {g_level})")));
    }
    if !(f1_slope >= 0.0) {
        return Err(Error::Argument(format!("f1_slope must be nonnegative, got {f1_slope}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be positive, got {tau}")));
    }
    if levy.dim != 1 {
        return Err(Error::Argument("the built-in model uses scalar marks".into()));
    }
    let m2 = levy.coordinate_second_moment()?;
    let f1 = move |seg: &Segment<'_>| {
        let t = seg.at_scalar(0.0).tanh();
        f1_base + f1_slope * t * t
    };
    let scale = move |seg: &Segment<'_>| g_level / (2.0 * f1(seg) * m2).sqrt();
    let mass_eff = levy.effective_mass()?;
    let mass_below = levy.mass_below_cutoff();

    let mut cs = CoefficientSet::zero("gauss_ou", 1, 1, tau, levy.clone());
    cs.a = Arc::new(move |seg, y, out| {
        let z0 = seg.at_scalar(0.0);
        let zt = seg.at_scalar(-tau);
        out[0] = -kappa * z0 - kappa2 * zt + gam * zt * y[0];
    });
    cs.sigma = Arc::new(|_, out| out[0] = 1.0);
    cs = cs.with_c(Arc::new(|seg, z, out| out[0] = z[0] * (1.0 + 0.1 * seg.at_scalar(0.0).tanh())));
    cs.c_nu_mean = Some(Arc::new(|_, out| out[0] = 0.0));
    cs.f = Arc::new(move |seg, y, out| out[0] = -f1(seg) * y[0]);
    cs.g = Arc::new(move |_, _, out| out[0] = g_level);
    cs = cs.with_h(Arc::new(move |seg, y, z, out| out[0] = scale(seg) * z[0] - y[0]));
    cs.h_nu_mean = Some((
        Arc::new(move |_, y, out| out[0] = -y[0] * mass_eff),
        Arc::new(move |_, y, out| out[0] = -y[0] * mass_below),
    ));
    cs.fast_jump_compensated = false;
    cs.abar_analytic =
        Some(Arc::new(move |seg, out| out[0] = -kappa * seg.at_scalar(0.0) - kappa2 * seg.at_scalar(-tau)));
    cs.dabar_analytic =
        Some(Arc::new(move |_, dir, out| out[0] = -kappa * dir.at_scalar(0.0) - kappa2 * dir.at_scalar(-tau)));
    cs.invariant_sampler = Some(Arc::new(move |seg, rng, out| {
        let sd = g_level / (2.0 * f1(seg)).sqrt();
        out[0] = sd * rng.sample::<f64, _>(StandardNormal);
    }));

    let probes = ProbeDomain::default();
    let b = probes.segment_bound;
    let yb = probes.y_box;
    let m1 = levy.first_absolute_moment()?;
    let mass = levy.total_mass.unwrap_or(mass_eff);
    let big_m2 = levy.second_moment()?;
    let f1_max = f1_base + f1_slope;
    let s_max = g_level / (2.0 * f1_base * m2).sqrt();
    let s_lip = s_max / (2.0 * f1_base) * f1_slope * TANH2_LIP;
    let cross = f1_slope * TANH2_LIP * yb;
    let l = [kappa.abs() + kappa2.abs() + gam.abs() * yb, gam.abs() * b, 0.1 * m1, f1_max, cross, s_lip * m1, mass]
        .into_iter()
        .fold(0.0, f64::max);
    let l1 = [kappa.abs() + kappa2.abs(), gam.abs() * b, 1.0, 1.1 * m1, f1_max, g_level, s_max * m1, mass]
        .into_iter()
        .fold(0.0, f64::max);
    cs.constants = DeclaredConstants {
        l,
        l1,
        beta1_slow: 0.0,
        beta1: 2.0 * f1_base - mass,
        beta2: (g_level * g_level + s_max * s_max * big_m2).max(cross * cross / mass),
        big_lambda: g_level.max(s_max + yb / probes.mark_min),
        lambda: 0.0,
    };
    cs.probes = probes;
    Ok(cs)
}

/// Fréchet derivative `Dā(base)·direction`: analytic when declared, otherwise a
/// central difference of the analytic `ā`.
pub fn dabar(cs: &CoefficientSet, base: &Segment<'_>, direction: &Segment<'_>, out: &mut [f64]) -> Result<()> {
    if let Some(d) = &cs.dabar_analytic {
        d(base, direction, out);
        return Ok(());
    }
    match &cs.abar_analytic {
        Some(abar) => dabar_fd(
            &|s: &Segment<'_>, o: &mut [f64]| {
                abar(s, o);
                Ok(())
            },
            base,
            direction,
            out,
        ),
        None => Err(Error::Config("Dā needs an analytic derivative or an ā evaluator".into())),
    }
}

/// Central difference `(ā(base + hη) − ā(base − hη)) / 2h` with `h = 1e-4 / ‖η‖∞`.
pub fn dabar_fd(
    abar: &dyn Fn(&Segment<'_>, &mut [f64]) -> Result<()>,
    base: &Segment<'_>,
    direction: &Segment<'_>,
    out: &mut [f64],
) -> Result<()> {
    let n = direction.sup_norm();
    if n == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let h = 1e-4 / n;
    let plus = base.lincomb(1.0, direction, h)?;
    let minus = base.lincomb(1.0, direction, -h)?;
    let tau = base.tau();
    let mut ap = vec![0.0; out.len()];
    let mut am = vec![0.0; out.len()];
    abar(&plus.segment(0.0, tau)?, &mut ap)?;
    abar(&minus.segment(0.0, tau)?, &mut am)?;
    for i in 0..out.len() {
        out[i] = (ap[i] - am[i]) / (2.0 * h);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionId {
    Lipschitz,
    SublinearGrowth,
    InitDelayLipschitz,
    DissipativityA,
    DissipativityF,
    DissipativityFLip,
    DissipativityCross,
    GBound,
    HBound,
}

impl ConditionId {
    pub const ALL: [ConditionId; 9] = [
        ConditionId::Lipschitz,
        ConditionId::SublinearGrowth,
        ConditionId::InitDelayLipschitz,
        ConditionId::DissipativityA,
        ConditionId::DissipativityF,
        ConditionId::DissipativityFLip,
        ConditionId::DissipativityCross,
        ConditionId::GBound,
        ConditionId::HBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::Lipschitz => "Lipschitz",
            ConditionId::SublinearGrowth => "SublinearGrowth",
            ConditionId::InitDelayLipschitz => "InitDelayLipschitz",
            ConditionId::DissipativityA => "Dissipativity_a",
            ConditionId::DissipativityF => "Dissipativity_f",
            ConditionId::DissipativityFLip => "Dissipativity_fLip",
            ConditionId::DissipativityCross => "Dissipativity_cross",
            ConditionId::GBound => "GBound",
            ConditionId::HBound => "HBound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub passed: bool,
    pub worst_ratio: f64,
    pub witness: String,
}

/// Ratio for an upper bound `lhs ≤ rhs`.
fn bound_ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs.is_nan() || rhs.is_nan() {
        return f64::NAN;
    }
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Ratio for a signed inequality `p ≤ q`, at most 1 exactly when it holds.
fn signed_ratio(p: f64, q: f64) -> f64 {
    if p.is_nan() || q.is_nan() {
        return f64::NAN;
    }
    let scale = p.abs() + q.abs();
    if scale == 0.0 {
        return 1.0;
    }
    1.0 + (p - q) / scale
}

struct Tracker {
    worst: f64,
    witness: String,
    failed_eval: bool,
}

impl Tracker {
    fn new() -> Self {
        Self { worst: 0.0, witness: String::new(), failed_eval: false }
    }

    fn update(&mut self, ratio: f64, witness: impl FnOnce() -> String) {
        if self.failed_eval {
            return;
        }
        if ratio.is_nan() {
            self.worst = f64::NAN;
            self.witness = format!("NaN at {}", witness());
            self.failed_eval = true;
        } else if ratio > self.worst || self.witness.is_empty() {
            self.worst = ratio;
            self.witness = witness();
        }
    }

    fn fail(&mut self, msg: String) {
        if !self.failed_eval {
            self.worst = f64::INFINITY;
            self.witness = msg;
            self.failed_eval = true;
        }
    }

    fn report(self, id: ConditionId) -> ConditionReport {
        let passed = !self.failed_eval && self.worst <= 1.0;
        ConditionReport { condition_id: id, passed, worst_ratio: self.worst, witness: self.witness }
    }
}

fn describe(path: &SamplePath) -> String {
    let vals: Vec<String> = (0..path.len()).map(|i| format!("{:.4}", path.knot(i)[0])).collect();
    format!("[{}]", vals.join(" "))
}

fn vec_str(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", s.join(" "))
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn guarded<T>(f: impl FnOnce() -> T) -> std::result::Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| e.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "coefficient panicked".into())
    })
}

/// Probe the structural conditions against the declared constants.
///
/// Each report holds the largest observed ratio of left-hand side to the
/// declared right-hand side and the probe point where it occurred.
pub fn validate_conditions(
    cs: &CoefficientSet,
    chi: &InitialDatum,
    probes: usize,
    rng: &mut RngStream,
) -> Result<Vec<ConditionReport>> {
    if probes < 100 {
        return Err(Error::Argument(format!("at least 100 probes are required, got {probes}")));
    }
    let (d, k) = (cs.d, cs.k);
    let c = cs.constants;
    let pd = cs.probes;
    let mut t: Vec<Tracker> = ConditionId::ALL.iter().map(|_| Tracker::new()).collect();
    let idx = |id: ConditionId| ConditionId::ALL.iter().position(|&x| x == id).unwrap();
    let zero = SamplePath::constant_segment(cs.tau, &vec![0.0; d]);
    let zseg = zero.segment(0.0, cs.tau)?;

    let mut nondeterministic = None;
    for n in 0..probes {
        let p1 = random_segment(d, cs.tau, pd.segment_nodes, pd.segment_bound, rng);
        let p2 = random_segment(d, cs.tau, pd.segment_nodes, pd.segment_bound, rng);
        let s1 = p1.segment(0.0, cs.tau)?;
        let s2 = p2.segment(0.0, cs.tau)?;
        let y: Vec<f64> = (0..k).map(|_| pd.y_box * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let yt: Vec<f64> = (0..k).map(|_| pd.y_box * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let mut z: Vec<f64> = (0..cs.levy.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let zn = norm(&z).max(1e-12);
        let r = pd.mark_min + (pd.mark_max - pd.mark_min) * rng.random::<f64>();
        z.iter_mut().for_each(|v| *v *= r / zn);

        let dz = segment_sup_distance(&s1, &s2)?;
        let dy = diff_norm(&y, &yt);
        let n1 = s1.sup_norm();
        let w = || {
            format!(
                "probe {n}: zeta={} zeta~={} y={} y~={} z={}",
                describe(&p1),
                describe(&p2),
                vec_str(&y),
                vec_str(&yt),
                vec_str(&z)
            )
        };

        let eval = guarded(|| {
            let mut a1 = vec![0.0; d];
            let mut a2 = vec![0.0; d];
            let mut a1b = vec![0.0; d];
            (cs.a)(&s1, &y, &mut a1);
            (cs.a)(&s1, &y, &mut a1b);
            (cs.a)(&s2, &yt, &mut a2);
            let mut sg1 = vec![0.0; d * d];
            let mut sg2 = vec![0.0; d * d];
            (cs.sigma)(&s1, &mut sg1);
            (cs.sigma)(&s2, &mut sg2);
            let mut f1 = vec![0.0; k];
            let mut f2 = vec![0.0; k];
            let mut f1b = vec![0.0; k];
            (cs.f)(&s1, &y, &mut f1);
            (cs.f)(&s1, &y, &mut f1b);
            (cs.f)(&s2, &yt, &mut f2);
            let mut f1yt = vec![0.0; k];
            (cs.f)(&s1, &yt, &mut f1yt);
            let mut g1 = vec![0.0; k * k];
            let mut g2 = vec![0.0; k * k];
            let mut g1yt = vec![0.0; k * k];
            (cs.g)(&s1, &y, &mut g1);
            (cs.g)(&s2, &yt, &mut g2);
            (cs.g)(&s1, &yt, &mut g1yt);
            let mut hz = vec![0.0; k];
            (cs.h)(&s1, &y, &z, &mut hz);
            let mut a0 = vec![0.0; d];
            (cs.a)(&zseg, &y, &mut a0);
            let deterministic = a1 == a1b && f1 == f1b;
            (a1, a2, sg1, sg2, f1, f2, f1yt, g1, g2, g1yt, hz, a0, deterministic)
        });
        let (a1, a2, sg1, sg2, f1, f2, f1yt, g1, g2, g1yt, hz, a0, deterministic) = match eval {
            Ok(v) => v,
            Err(msg) => {
                for tr in t.iter_mut() {
                    tr.fail(format!("evaluation failed ({msg}) at {}", w()));
                }
                break;
            }
        };
        if !deterministic && nondeterministic.is_none() {
            nondeterministic = Some(w());
        }

        let nu = |weight: &dyn Fn(&[f64], &mut [f64]), dim: usize| -> Result<Vec<f64>> {
            Ok(cs.levy.nu_integral(weight, dim)?.value)
        };
        let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let ip = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

        let ints = guarded(|| -> Result<[f64; 6]> {
            let dc = if cs.slow_jumps {
                nu(
                    &|m, o| {
                        let mut u = vec![0.0; d];
                        let mut v = vec![0.0; d];
                        (cs.c)(&s1, m, &mut u);
                        (cs.c)(&s2, m, &mut v);
                        o[0] = diff_norm(&u, &v);
                    },
                    1,
                )?[0]
            } else {
                0.0
            };
            let cabs = if cs.slow_jumps {
                nu(
                    &|m, o| {
                        let mut u = vec![0.0; d];
                        (cs.c)(&s1, m, &mut u);
                        o[0] = norm(&u);
                    },
                    1,
                )?[0]
            } else {
                0.0
            };
            let (dh, habs, h2, hlip2) = if cs.fast_jumps {
                let v = nu(
                    &|m, o| {
                        let mut u = vec![0.0; k];
                        let mut v = vec![0.0; k];
                        let mut w = vec![0.0; k];
                        (cs.h)(&s1, &y, m, &mut u);
                        (cs.h)(&s2, &yt, m, &mut v);
                        (cs.h)(&s1, &yt, m, &mut w);
                        o[0] = diff_norm(&u, &v);
                        o[1] = norm(&u);
                        o[2] = u.iter().map(|x| x * x).sum();
                        o[3] = u.iter().zip(&w).map(|(p, q)| (p - q) * (p - q)).sum();
                    },
                    4,
                )?;
                (v[0], v[1], v[2], v[3])
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            Ok([dc, cabs, dh, habs, h2, hlip2])
        });
        let [dc, cabs, dh, habs, h2, hlip2] = match ints {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => {
                t[idx(ConditionId::Lipschitz)].fail(format!("ν-integral failed ({e}) at {}", w()));
                continue;
            }
            Err(msg) => {
                t[idx(ConditionId::Lipschitz)].fail(format!("ν-integral panicked ({msg}) at {}", w()));
                continue;
            }
        };

        let lip_rhs = c.l * (dz + dy);
        let lip = [
            bound_ratio(diff_norm(&a1, &a2), lip_rhs),
            bound_ratio(diff_norm(&sg1, &sg2), c.l * dz),
            bound_ratio(dc, c.l * dz),
            bound_ratio(diff_norm(&f1, &f2), lip_rhs),
            bound_ratio(diff_norm(&g1, &g2), lip_rhs),
            bound_ratio(dh, lip_rhs),
        ];
        t[idx(ConditionId::Lipschitz)].update(worst(&lip), w);

        let grow_rhs = c.l1 * (1.0 + n1 + norm(&y));
        let grow = [
            bound_ratio(norm(&a1), grow_rhs),
            bound_ratio(norm(&sg1), c.l1 * (1.0 + n1)),
            bound_ratio(cabs, c.l1 * (1.0 + n1)),
            bound_ratio(norm(&f1), grow_rhs),
            bound_ratio(norm(&g1), grow_rhs),
            bound_ratio(habs, grow_rhs),
        ];
        t[idx(ConditionId::SublinearGrowth)].update(worst(&grow), w);

        let tr = &mut t[idx(ConditionId::DissipativityA)];
        if norm(&a0) != 0.0 || a0.iter().any(|v| v.is_nan()) {
            tr.fail(format!("a(0, y) = {} != 0 at y = {}", vec_str(&a0), vec_str(&y)));
        } else {
            let mut a2y = vec![0.0; d];
            (cs.a)(&s2, &y, &mut a2y);
            let mut x1 = vec![0.0; d];
            let mut x2 = vec![0.0; d];
            s1.at(0.0, &mut x1);
            s2.at(0.0, &mut x2);
            let da: Vec<f64> = a1.iter().zip(&a2y).map(|(p, q)| p - q).collect();
            let dx: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| p - q).collect();
            tr.update(signed_ratio(ip(&da, &dx), -c.beta1_slow * dz * dz), w);
        }

        let p = 2.0 * ip(&y, &f1) + sq(&g1) + h2;
        t[idx(ConditionId::DissipativityF)].update(signed_ratio(p, -c.beta1 * sq(&y) + c.beta2 * (1.0 + n1 * n1)), w);

        let dyv: Vec<f64> = y.iter().zip(&yt).map(|(p, q)| p - q).collect();
        let dfv: Vec<f64> = f1.iter().zip(&f1yt).map(|(p, q)| p - q).collect();
        let p = 2.0 * ip(&dyv, &dfv) + sq(&g1.iter().zip(&g1yt).map(|(p, q)| p - q).collect::<Vec<_>>()) + hlip2;
        t[idx(ConditionId::DissipativityFLip)].update(signed_ratio(p, -c.beta1 * dy * dy + c.beta2 * n1 * n1), w);

        let dfc: Vec<f64> = f1.iter().zip(&f2).map(|(p, q)| p - q).collect();
        let p = 2.0 * ip(&dyv, &dfc);
        t[idx(ConditionId::DissipativityCross)].update(signed_ratio(p, -c.beta1 * dy * dy + c.beta2 * dz * dz), w);

        t[idx(ConditionId::GBound)].update(bound_ratio(norm(&g1), c.big_lambda), w);
        t[idx(ConditionId::HBound)].update(bound_ratio(norm(&hz), c.big_lambda * norm(&z)), w);
    }

    let pairs = probes;
    let ratio = chi.lipschitz_ratio(cs.tau, pairs, rng);
    let tr = &mut t[idx(ConditionId::InitDelayLipschitz)];
    tr.update(ratio, || format!("worst over {pairs} pairs with declared lambda = {}", chi.lipschitz_lambda));

    if let Some(wit) = nondeterministic {
        for tr in t.iter_mut() {
            tr.fail(format!("coefficients are not deterministic: repeated evaluation differs at {wit}"));
        }
    }
    Ok(t.into_iter().zip(ConditionId::ALL).map(|(tr, id)| tr.report(id)).collect())
}

fn worst(r: &[f64]) -> f64 {
    if r.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    r.iter().copied().fold(0.0, f64::max)
}
