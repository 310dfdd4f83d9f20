//! Scale functions, speed measures and lattice hitting laws of one-dimensional diffusions.

use super::ProcessSpec;
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Log of the scale density `s'(x)` up to an additive constant, and `B²(x)`.
fn log_scale_density(spec: &ProcessSpec, x: f64) -> f64 {
    match *spec {
        ProcessSpec::Bm => 0.0,
        ProcessSpec::BmDrift { alpha } => -2.0 * alpha * x,
        ProcessSpec::Ou { alpha, sigma } => alpha * x * x / (sigma * sigma),
        ProcessSpec::Feller { kappa, mu, sigma } => {
            let s2 = sigma * sigma;
            -(2.0 * kappa * mu / s2) * x.ln() + (2.0 * kappa / s2) * x
        }
        ProcessSpec::Fbm { .. } => unreachable!("not a diffusion"),
    }
}

fn diffusion_sq(spec: &ProcessSpec, x: f64) -> f64 {
    match *spec {
        ProcessSpec::Bm | ProcessSpec::BmDrift { .. } => 1.0,
        ProcessSpec::Ou { sigma, .. } => sigma * sigma,
        ProcessSpec::Feller { sigma, .. } => sigma * sigma * x,
        ProcessSpec::Fbm { .. } => unreachable!("not a diffusion"),
    }
}

fn check_interval(spec: &ProcessSpec, x: f64, delta: f64) -> Result<()> {
    if !spec.is_diffusion() {
        return Err(Error::InvalidParameter(format!("{} is not a diffusion", spec.name())));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if matches!(spec, ProcessSpec::Feller { .. }) && x - delta <= 0.0 {
        return Err(Error::Boundary { lo: x - delta, hi: x + delta });
    }
    Ok(())
}

/// Probability that the diffusion started at `x` reaches `x + δ` before `x − δ`.
pub fn hitting_prob(spec: &ProcessSpec, x: f64, delta: f64) -> Result<f64> {
    check_interval(spec, x, delta)?;
    match *spec {
        ProcessSpec::Bm => Ok(0.5),
        ProcessSpec::BmDrift { alpha } if alpha == 0.0 => Ok(0.5),
        ProcessSpec::BmDrift { alpha } => {
            // (e^{2αδ} − 1) / (e^{2αδ} − e^{−2αδ}) = 1 / (1 + e^{−2αδ})
            Ok(1.0 / (1.0 + (-2.0 * alpha * delta).exp()))
        }
        _ => hitting_prob_quadrature(spec, x, delta),
    }
}

/// [`hitting_prob`] evaluated by quadrature of the scale density for any diffusion.
pub fn hitting_prob_quadrature(spec: &ProcessSpec, x: f64, delta: f64) -> Result<f64> {
    check_interval(spec, x, delta)?;
    let (a, b) = (x - delta, x + delta);
    let lmax = [a, x, b].iter().map(|&u| log_scale_density(spec, u)).fold(f64::NEG_INFINITY, f64::max);
    let f = |u: f64| (log_scale_density(spec, u) - lmax).exp();
    let tol = 1e-13 * delta;
    let lower = integrate(f, a, x, tol, 1e-13);
    let upper = integrate(f, x, b, tol, 1e-13);
    Ok(lower / (lower + upper))
}

/// Expected time for the diffusion started at `x` to leave `(x − δ, x + δ)`.
pub fn expected_crossing_time(spec: &ProcessSpec, x: f64, delta: f64) -> Result<f64> {
    check_interval(spec, x, delta)?;
    match *spec {
        ProcessSpec::Bm => return Ok(delta * delta),
        ProcessSpec::BmDrift { alpha } => {
            let ad = alpha * delta;
            return Ok(if ad.abs() < 1e-8 { delta * delta } else { delta * ad.tanh() / alpha });
        }
        _ => {}
    }
    let p = hitting_prob(spec, x, delta)?;
    let (a, b) = (x - delta, x + delta);
    let rel = 1e-11;
    let inner = |lo: f64, hi: f64, y: f64| {
        let ly = log_scale_density(spec, y);
        integrate(|z| (log_scale_density(spec, z) - ly).exp(), lo, hi, 1e-16, rel)
    };
    let i1 = integrate(|y| 2.0 / diffusion_sq(spec, y) * inner(a, y, y), a, x, 1e-16, rel);
    let i2 = integrate(|y| 2.0 / diffusion_sq(spec, y) * inner(y, b, y), x, b, 1e-16, rel);
    Ok((1.0 - p) * i1 + p * i2)
}

/// A probability law on the lattice indices `offset..offset + probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLaw {
    pub offset: i64,
    pub probs: Vec<f64>,
}

impl LatticeLaw {
    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            0.0
        } else {
            self.probs.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.probs.len() as i64).map(move |i| self.offset + i)
    }

    /// Inverse-cdf draw from a uniform `u` in `[0, 1)`.
    pub fn sample_index(&self, u: f64) -> i64 {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.offset + i as i64;
            }
        }
        self.offset + self.probs.len() as i64 - 1
    }
}

/// Stationary law of the OU crossing chain on `δℤ`, truncated to `|k| ≤ half_width`.
pub fn ou_stationary_lattice_law(alpha: f64, sigma: f64, delta: f64, half_width: usize) -> Result<LatticeLaw> {
    let spec = ProcessSpec::Ou { alpha, sigma };
    spec.validate()?;
    let sd = sigma / (2.0 * alpha).sqrt();
    if (half_width as f64) * delta < 8.0 * sd {
        return Err(Error::InvalidParameter(format!(
            "truncation {half_width} sites covers fewer than 8 stationary sd ({})",
            (8.0 * sd / delta).ceil()
        )));
    }
    let j = half_width as i64;
    let p: Vec<f64> = (-j..=j).map(|k| hitting_prob(&spec, k as f64 * delta, delta)).collect::<Result<_>>()?;
    let mut logpi = vec![0.0; p.len()];
    for i in 1..p.len() {
        logpi[i] = logpi[i - 1] + p[i - 1].ln() - (1.0 - p[i]).ln();
    }
    let m = logpi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logpi.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= total);
    let edge = probs[0] + probs[probs.len() - 1];
    if edge > 1e-10 {
        return Err(Error::InvalidParameter(format!("boundary mass {edge:e} exceeds 1e-10")));
    }
    Ok(LatticeLaw { offset: -j, probs })
}

/// Sites needed to cover `n_sd` stationary standard deviations of the OU process.
pub fn ou_half_width(alpha: f64, sigma: f64, delta: f64, n_sd: f64) -> usize {
    (n_sd * sigma / (2.0 * alpha).sqrt() / delta).ceil() as usize
}
