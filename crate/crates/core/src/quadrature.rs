//! Adaptive Gauss-Kronrod quadrature for vector-valued integrands.

use crate::error::{Error, Result};

pub const ABS_TOL: f64 = 1e-10;
pub const REL_TOL: f64 = 1e-8;
const MAX_INTERVALS: usize = 4000;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

/// Value and absolute error estimate of a vector integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad {
    pub value: Vec<f64>,
    pub error: f64,
}

impl Quad {
    pub fn zero(k: usize) -> Self {
        Self { value: vec![0.0; k], error: 0.0 }
    }

    pub fn add(&mut self, other: &Quad) {
        for (a, b) in self.value.iter_mut().zip(&other.value) {
            *a += b;
        }
        self.error += other.error;
    }

    pub fn magnitude(&self) -> f64 {
        self.value.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk21(f: &dyn Fn(f64, &mut [f64]), a: f64, b: f64, k: usize) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fc = vec![0.0; k];
    f(centre, &mut fc);
    let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[10]).collect();
    let mut gauss = vec![0.0; k];
    let mut abs_sum: Vec<f64> = fc.iter().map(|v| v.abs() * WGK[10]).collect();
    let mut f1 = vec![0.0; k];
    let mut f2 = vec![0.0; k];
    let mut samples: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(10);
    for j in 0..10 {
        let x = half * XGK[j];
        f(centre - x, &mut f1);
        f(centre + x, &mut f2);
        for i in 0..k {
            kron[i] += WGK[j] * (f1[i] + f2[i]);
            abs_sum[i] += WGK[j] * (f1[i].abs() + f2[i].abs());
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * (f1[i] + f2[i]);
            }
        }
        samples.push((WGK[j], f1.clone(), f2.clone()));
    }
    let mut error: f64 = 0.0;
    for i in 0..k {
        let mean = 0.5 * kron[i];
        let mut asc = WGK[10] * (fc[i] - mean).abs();
        for (w, s1, s2) in &samples {
            asc += w * ((s1[i] - mean).abs() + (s2[i] - mean).abs());
        }
        let asc = asc * half.abs();
        let raw = ((kron[i] - gauss[i]) * half).abs();
        let mut e = raw;
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        let resabs = abs_sum[i] * half.abs();
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        if !kron[i].is_finite() {
            e = f64::INFINITY;
        }
        error = error.max(e);
    }
    Panel { a, b, value: kron.iter().map(|v| v * half).collect(), error }
}

/// Adaptive bisection of the panel with the largest error until the total
/// error meets `max(abs_tol, rel_tol * |I|)`.
pub fn integrate(f: &dyn Fn(f64, &mut [f64]), a: f64, b: f64, k: usize, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    if a == b {
        return Ok(Quad::zero(k));
    }
    let mut panels = vec![gk21(f, a, b, k)];
    loop {
        let mut total = vec![0.0; k];
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            for (t, v) in total.iter_mut().zip(&p.value) {
                *t += v;
            }
            err += p.error;
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let mag = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !err.is_nan() && err <= abs_tol.max(rel_tol * mag) {
            return Ok(Quad { value: total, error: err });
        }
        if panels.len() >= MAX_INTERVALS || !err.is_finite() && panels.len() > 64 {
            return Err(Error::Quadrature(format!(
                "error estimate {err:.3e} after {} panels on [{a}, {b}]",
                panels.len()
            )));
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature(format!("panel [{}, {}] cannot be split", p.a, p.b)));
        }
        panels.push(gk21(f, p.a, mid, k));
        panels.push(gk21(f, mid, p.b, k));
    }
}

pub fn integrate_scalar(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64)> {
    let q = integrate(&|x, out: &mut [f64]| out[0] = f(x), a, b, 1, ABS_TOL, REL_TOL)?;
    Ok((q.value[0], q.error))
}

/// Integral over `[lo, inf)` of a radial integrand, `lo >= 0`.
///
/// `[lo, 1]` is summed over dyadic shells `[2^-(m+1), 2^-m]` so integrable
/// singularities at the origin converge and non-integrable ones are detected;
/// `[1, inf)` is mapped to `(0, 1]` with `u = 1/r`.
pub fn integrate_radial(f: &dyn Fn(f64, &mut [f64]), lo: f64, k: usize) -> Result<Quad> {
    let mut total = Quad::zero(k);
    if lo < 1.0 {
        let mut prev_mag = f64::INFINITY;
        let mut growing = 0;
        let mut small = 0;
        for m in 0..2000 {
            let hi = 0.5_f64.powi(m);
            let a = (0.5 * hi).max(lo);
            if a >= hi {
                break;
            }
            let shell = integrate(f, a, hi, k, ABS_TOL * 1e-3, REL_TOL)?;
            let mag = shell.magnitude();
            total.add(&shell);
            if a <= lo {
                break;
            }
            if mag >= prev_mag && mag > 0.0 {
                growing += 1;
                if growing >= 12 {
                    return Err(Error::Divergence(format!(
                        "shell contributions do not decay towards the origin (shell {m}, {mag:.3e})"
                    )));
                }
            } else {
                growing = 0;
            }
            let tail =
                if prev_mag.is_finite() && mag < prev_mag { mag * mag / (prev_mag - mag) } else { f64::INFINITY };
            if tail <= (ABS_TOL * 1e-2).max(REL_TOL * 1e-2 * total.magnitude()) || mag == 0.0 && prev_mag == 0.0 {
                small += 1;
                if small >= 3 {
                    total.error += tail.min(mag);
                    break;
                }
            } else {
                small = 0;
            }
            prev_mag = mag;
            if m == 1999 {
                return Err(Error::Divergence("dyadic shells did not settle".into()));
            }
        }
    }
    let start = lo.max(1.0);
    let tail_fn = |u: f64, out: &mut [f64]| {
        if u <= 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let r = 1.0 / u;
        f(r, out);
        let j = 1.0 / (u * u);
        for v in out.iter_mut() {
            *v *= j;
            if !v.is_finite() && j.is_infinite() {
                *v = 0.0;
            }
        }
    };
    let tail = integrate(&tail_fn, 0.0, 1.0 / start, k, ABS_TOL * 1e-1, REL_TOL).map_err(|e| match e {
        Error::Quadrature(msg) => Error::Divergence(format!("tail integral: {msg}")),
        other => other,
    })?;
    if tail.value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("tail integrand is not finite".into()));
    }
    total.add(&tail);
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate_scalar(|x| x * x * x - 2.0 * x, 0.0, 2.0).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-13);
        let (v, _) = integrate_scalar(|x| x.powi(8), -1.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        let (v, _) = integrate_scalar(|x| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn radial_gaussian_half_line() {
        let q = integrate_radial(&|r, out: &mut [f64]| out[0] = (-r * r).exp(), 0.0, 1).unwrap();
        assert_relative_eq!(q.value[0], 0.5 * std::f64::consts::PI.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn radial_integrable_singularity() {
        // r^{-1/2} e^{-r} on (0, inf) = Gamma(1/2) = sqrt(pi)
        let q = integrate_radial(&|r, out: &mut [f64]| out[0] = r.powf(-0.5) * (-r).exp(), 0.0, 1).unwrap();
        assert_relative_eq!(q.value[0], std::f64::consts::PI.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn radial_divergence_at_origin() {
        let r = integrate_radial(&|r, out: &mut [f64]| out[0] = (-r * r).exp() / (r * r), 0.0, 1);
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    #[test]
    fn radial_divergence_in_tail() {
        let r = integrate_radial(&|r, out: &mut [f64]| out[0] = (0.5 * r * r).exp(), 0.0, 1);
        assert!(r.is_err());
    }
}
