//! Lévy measures, compound-Poisson sampling and ν-integrals.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_radial, Quad};
use crate::rng::RngStream;

const ANGULAR_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevyKind {
    /// Density `exp(-alpha |z|^2)`.
    GaussLight { alpha: f64 },
    /// `exp(-r^2) r^(-alpha_prime - 1) dr` along `radial_count` unit directions.
    StronglyTempered { alpha_prime: f64, radial_count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    pub kind: LevyKind,
    pub dim: usize,
    pub total_mass: Option<f64>,
    pub truncation: f64,
}

/// One atom of a jump measure realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// Part of the mark space an integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    AboveCutoff,
    BelowCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrability {
    Finite(f64),
    Infinite,
    Indeterminate,
}

impl Integrability {
    pub fn is_finite(&self) -> bool {
        matches!(self, Integrability::Finite(_))
    }
}

impl LevyModel {
    pub fn gauss_light(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0) || dim == 0 {
            return Err(Error::Argument(format!(
                "GaussLight needs alpha > 0 and dim >= 1 (alpha = {alpha}, dim = {dim})"
            )));
        }
        Ok(Self {
            kind: LevyKind::GaussLight { alpha },
            dim,
            total_mass: Some((PI / alpha).powf(dim as f64 / 2.0)),
            truncation: 0.0,
        })
    }

    pub fn strongly_tempered(alpha_prime: f64, radial_count: usize, dim: usize) -> Result<Self> {
        if !(alpha_prime > 0.0 && alpha_prime < 2.0) || radial_count == 0 || dim == 0 {
            return Err(Error::Argument(format!(
                "StronglyTempered needs alpha' in (0,2), radial_count >= 1, dim >= 1 (got {alpha_prime}, {radial_count}, {dim})"
            )));
        }
        Ok(Self {
            kind: LevyKind::StronglyTempered { alpha_prime, radial_count },
            dim,
            total_mass: None,
            truncation: 1e-3,
        })
    }

    pub fn with_truncation(mut self, truncation: f64) -> Result<Self> {
        if !(truncation >= 0.0) || !truncation.is_finite() {
            return Err(Error::Argument(format!("truncation must be a finite nonnegative number, got {truncation}")));
        }
        self.truncation = truncation;
        Ok(self)
    }

    /// Log of the radial density along one direction (GaussLight: the
    /// Lebesgue density at radius `r`).
    pub fn log_radial_density(&self, r: f64) -> f64 {
        match self.kind {
            LevyKind::GaussLight { alpha } => -alpha * r * r,
            LevyKind::StronglyTempered { alpha_prime, .. } => -r * r - (alpha_prime + 1.0) * r.ln(),
        }
    }

    /// Direction of the `j`-th atom of the strongly tempered angular measure.
    pub fn atom_direction(&self, j: usize, out: &mut [f64]) {
        let LevyKind::StronglyTempered { radial_count, .. } = self.kind else {
            panic!("atom directions only exist for the strongly tempered family");
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.dim {
            1 => out[0] = if j.is_multiple_of(2) { 1.0 } else { -1.0 },
            2 => {
                let phi = 2.0 * PI * j as f64 / radial_count as f64;
                out[0] = phi.cos();
                out[1] = phi.sin();
            }
            d => out[j % d] = if (j / d).is_multiple_of(2) { 1.0 } else { -1.0 },
        }
    }

    /// Mass of `{|z| >= truncation}`.
    pub fn effective_mass(&self) -> Result<f64> {
        match self.kind {
            LevyKind::GaussLight { alpha } => {
                let d = self.dim as f64;
                let full = (PI / alpha).powf(d / 2.0);
                if self.truncation == 0.0 {
                    Ok(full)
                } else {
                    Ok(full * gamma_ur(d / 2.0, alpha * self.truncation * self.truncation))
                }
            }
            LevyKind::StronglyTempered { .. } => {
                if self.truncation == 0.0 {
                    return Err(Error::Divergence(
                        "strongly tempered measure has infinite mass without truncation".into(),
                    ));
                }
                Ok(self.nu_integral_region(&|_, out| out[0] = 1.0, 1, Region::AboveCutoff)?.value[0])
            }
        }
    }

    /// Mass of `{0 < |z| < truncation}`; infinite for the strongly tempered family.
    pub fn mass_below_cutoff(&self) -> f64 {
        match self.kind {
            LevyKind::GaussLight { alpha } => {
                let d = self.dim as f64;
                let full = (PI / alpha).powf(d / 2.0);
                if self.truncation == 0.0 {
                    0.0
                } else {
                    full * (1.0 - gamma_ur(d / 2.0, alpha * self.truncation * self.truncation))
                }
            }
            LevyKind::StronglyTempered { .. } => {
                if self.truncation == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `∫ weight(z) ν(dz)` over the whole mark space.
    pub fn nu_integral(&self, weight: &dyn Fn(&[f64], &mut [f64]), k: usize) -> Result<Quad> {
        self.nu_integral_region(weight, k, Region::All)
    }

    pub fn nu_integral_region(&self, weight: &dyn Fn(&[f64], &mut [f64]), k: usize, region: Region) -> Result<Quad> {
        let (lo, hi) = match region {
            Region::All => (0.0, f64::INFINITY),
            Region::AboveCutoff => (self.truncation, f64::INFINITY),
            Region::BelowCutoff => (0.0, self.truncation),
        };
        if hi <= lo {
            return Ok(Quad::zero(k));
        }
        let d = self.dim;
        let radial = |r: f64, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            if r >= hi {
                return;
            }
            let dens = self.log_radial_density(r).exp();
            if dens == 0.0 {
                return;
            }
            let mut z = vec![0.0; d];
            let mut w = vec![0.0; k];
            match (self.kind, d) {
                (LevyKind::GaussLight { .. }, 1) => {
                    for s in [1.0, -1.0] {
                        z[0] = s * r;
                        weight(&z, &mut w);
                        for (o, v) in out.iter_mut().zip(&w) {
                            *o += v * dens;
                        }
                    }
                }
                (LevyKind::GaussLight { .. }, 2) => {
                    let h = 2.0 * PI / ANGULAR_NODES as f64;
                    for j in 0..ANGULAR_NODES {
                        let phi = h * j as f64;
                        z[0] = r * phi.cos();
                        z[1] = r * phi.sin();
                        weight(&z, &mut w);
                        for (o, v) in out.iter_mut().zip(&w) {
                            *o += v * dens * r * h;
                        }
                    }
                }
                (LevyKind::StronglyTempered { radial_count, .. }, _) => {
                    let mut u = vec![0.0; d];
                    for j in 0..radial_count {
                        self.atom_direction(j, &mut u);
                        for (zi, ui) in z.iter_mut().zip(&u) {
                            *zi = r * ui;
                        }
                        weight(&z, &mut w);
                        for (o, v) in out.iter_mut().zip(&w) {
                            *o += v * dens;
                        }
                    }
                }
                _ => unreachable!("dimension checked before integration"),
            }
        };
        if matches!(self.kind, LevyKind::GaussLight { .. }) && d > 2 {
            return Err(Error::Argument(format!("nu_integral supports GaussLight marks of dimension 1 or 2, got {d}")));
        }
        if hi.is_finite() {
            let q = crate::quadrature::integrate(
                &radial,
                lo,
                hi,
                k,
                crate::quadrature::ABS_TOL,
                crate::quadrature::REL_TOL,
            )?;
            return Ok(q);
        }
        integrate_radial(&radial, lo, k)
    }

    /// Is `∫_{|z|>=1} exp(alpha_probe |z|^2) ν(dz)` finite?
    pub fn check_exponential_integrability(&self, alpha_probe: f64) -> Result<Integrability> {
        if !(alpha_probe > 1.0) {
            return Err(Error::Argument(format!("alpha_probe must exceed 1, got {alpha_probe}")));
        }
        let d = self.dim as f64;
        let log_integrand = |r: f64| self.log_radial_density(r) + alpha_probe * r * r + (d - 1.0) * r.ln();
        let radii = [4.0, 8.0, 16.0, 32.0, 64.0];
        let logs: Vec<f64> = radii.iter().map(|&r| log_integrand(r)).collect();
        if logs.windows(2).all(|w| w[1] >= w[0] - 1e-12) {
            return Ok(Integrability::Infinite);
        }
        if logs.windows(2).any(|w| w[1] >= w[0]) {
            return Ok(Integrability::Indeterminate);
        }
        let probe = self.clone().with_truncation(1.0)?;
        let weight = |z: &[f64], out: &mut [f64]| {
            let r2: f64 = z.iter().map(|v| v * v).sum();
            out[0] = (alpha_probe * r2).exp();
        };
        match probe.nu_integral_region(&weight, 1, Region::AboveCutoff) {
            Ok(q) if q.value[0].is_finite() => Ok(Integrability::Finite(q.value[0])),
            Ok(_) => Ok(Integrability::Infinite),
            Err(_) => Ok(Integrability::Indeterminate),
        }
    }

    /// Draw one mark from the normalised measure restricted to `|z| >= truncation`.
    pub fn sample_mark(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let delta = self.truncation;
        match self.kind {
            LevyKind::GaussLight { alpha } => {
                let sd = (0.5 / alpha).sqrt();
                let accept = if delta == 0.0 { 1.0 } else { gamma_ur(d as f64 / 2.0, alpha * delta * delta) };
                if delta == 0.0 || accept >= 0.05 || d > 2 {
                    loop {
                        for v in out.iter_mut() {
                            *v = sd * rng.sample::<f64, _>(StandardNormal);
                        }
                        if delta == 0.0 || out.iter().map(|v| v * v).sum::<f64>().sqrt() >= delta {
                            return Ok(());
                        }
                    }
                }
                // Tail proposal r^2 = delta^2 + Exp(alpha); exact in d = 2,
                // corrected by a (delta^2/r^2)^{1/2} acceptance in d = 1.
                loop {
                    let e: f64 = -(-rng.random::<f64>()).ln_1p();
                    let t = delta * delta + e / alpha;
                    let ok = if d == 1 { rng.random::<f64>() < (delta * delta / t).sqrt() } else { true };
                    if ok {
                        let r = t.sqrt();
                        random_direction(rng, out);
                        out.iter_mut().for_each(|v| *v *= r);
                        return Ok(());
                    }
                }
            }
            LevyKind::StronglyTempered { alpha_prime, radial_count } => {
                if delta <= 0.0 {
                    return Err(Error::Argument("strongly tempered sampling requires a positive truncation".into()));
                }
                loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let r = delta * u.powf(-1.0 / alpha_prime);
                    if rng.random::<f64>() < (-(r * r - delta * delta)).exp() {
                        let j = rng.random_range(0..radial_count);
                        self.atom_direction(j, out);
                        out.iter_mut().for_each(|v| *v *= r);
                        return Ok(());
                    }
                }
            }
        }
    }

    /// Jumps of a Poisson measure with intensity `rate_scale · ds ⊗ ν` on `[0, horizon)`.
    pub fn sample_jumps(
        &self,
        rate_scale: f64,
        horizon: f64,
        count_rng: &mut RngStream,
        mark_rng: &mut RngStream,
    ) -> Result<Vec<JumpRecord>> {
        if horizon < 0.0 || !horizon.is_finite() {
            return Err(Error::Argument(format!("horizon must be finite and nonnegative, got {horizon}")));
        }
        if !(rate_scale > 0.0) {
            return Err(Error::Argument(format!("rate_scale must be positive, got {rate_scale}")));
        }
        if horizon == 0.0 {
            return Ok(Vec::new());
        }
        let mass = self.effective_mass()?;
        let mean = rate_scale * mass * horizon;
        if mean == 0.0 {
            return Ok(Vec::new());
        }
        let n = poisson(mean, count_rng);
        let mut times: Vec<f64> = (0..n).map(|_| horizon * count_rng.random::<f64>()).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        let mut out = Vec::with_capacity(times.len());
        for t in times {
            let mut mark = vec![0.0; self.dim];
            loop {
                self.sample_mark(mark_rng, &mut mark)?;
                if mark.iter().any(|v| *v != 0.0) {
                    break;
                }
            }
            out.push(JumpRecord { time: t, mark });
        }
        Ok(out)
    }

    /// Normalised second moment `∫ z_0^2 ν / mass` of one coordinate, over the sampled region.
    pub fn coordinate_second_moment(&self) -> Result<f64> {
        match self.kind {
            LevyKind::GaussLight { alpha } if self.truncation == 0.0 => Ok(0.5 / alpha),
            _ => {
                let m2 = self.nu_integral_region(&|z, out| out[0] = z[0] * z[0], 1, Region::AboveCutoff)?.value[0];
                Ok(m2 / self.effective_mass()?)
            }
        }
    }

    /// `∫ |z|^2 ν(dz)` over the whole space.
    pub fn second_moment(&self) -> Result<f64> {
        match self.kind {
            LevyKind::GaussLight { alpha } => {
                let d = self.dim as f64;
                Ok((PI / alpha).powf(d / 2.0) * d / (2.0 * alpha))
            }
            LevyKind::StronglyTempered { .. } => {
                Ok(self.nu_integral(&|z, out| out[0] = z.iter().map(|v| v * v).sum(), 1)?.value[0])
            }
        }
    }

    /// `∫ |z| ν(dz)` over the whole space.
    pub fn first_absolute_moment(&self) -> Result<f64> {
        match self.kind {
            LevyKind::GaussLight { alpha } => {
                let d = self.dim as f64;
                let surface = 2.0 * PI.powf(d / 2.0) / ln_gamma(d / 2.0).exp();
                Ok(surface * 0.5 * alpha.powf(-(d + 1.0) / 2.0) * ln_gamma((d + 1.0) / 2.0).exp())
            }
            LevyKind::StronglyTempered { .. } => {
                Ok(self.nu_integral(&|z, out| out[0] = z.iter().map(|v| v * v).sum::<f64>().sqrt(), 1)?.value[0])
            }
        }
    }
}

fn random_direction(rng: &mut RngStream, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        for v in out.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

fn poisson(mean: f64, rng: &mut RngStream) -> usize {
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

/// Keep each jump with probability `phi(t, z) / phi_max`.
pub fn thin_controlled(
    jumps: &[JumpRecord],
    phi: &dyn Fn(f64, &[f64]) -> f64,
    phi_max: f64,
    rng: &mut RngStream,
) -> Result<Vec<JumpRecord>> {
    if !(phi_max > 0.0) {
        return Err(Error::Argument(format!("phi_max must be positive, got {phi_max}")));
    }
    let mut out = Vec::with_capacity(jumps.len());
    for j in jumps {
        let p = phi(j.time, &j.mark);
        if !(p >= 0.0) || p > phi_max {
            return Err(Error::Contract(format!("phi({}, {:?}) = {p} outside [0, {phi_max}]", j.time, j.mark)));
        }
        let u: f64 = rng.random();
        if u * phi_max < p {
            out.push(j.clone());
        }
    }
    Ok(out)
}

pub fn jumps_to_csv(jumps: &[JumpRecord], dim: usize) -> String {
    let mut s = String::from("time");
    for i in 0..dim {
        s.push_str(&format!(",mark_{i}"));
    }
    s.push('\n');
    for j in jumps {
        s.push_str(&format!("{}", j.time));
        for m in &j.mark {
            s.push_str(&format!(",{m}"));
        }
        s.push('\n');
    }
    s
}
