//! Fractional Brownian motion by circulant embedding.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::series_model::TickSeries;

/// Autocovariance of unit-spaced fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, sigma2: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    let lower = if k == 0.0 { 1.0 } else { (k - 1.0).powf(h2) };
    0.5 * sigma2 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + lower)
}

const MAX_EMBEDDING: usize = 1 << 26;

/// Reusable sampler of `n` fGn increments. Each draw yields two independent paths.
pub struct FbmGenerator {
    hurst: f64,
    sigma2: f64,
    n: usize,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("sigma2", &self.sigma2)
            .field("n", &self.n)
            .field("embedding", &self.scale.len())
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: f64, sigma2: f64, n: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0 && sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("FBM needs 0 < H < 1, sigma2 > 0 (got {hurst}, {sigma2})")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("FBM needs n >= 1".into()));
        }
        let mut m = n.next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        loop {
            let size = 2 * m;
            if size > MAX_EMBEDDING {
                return Err(Error::Simulation {
                    path: 0,
                    reason: format!("circulant embedding not nonnegative definite up to size {MAX_EMBEDDING}"),
                });
            }
            let mut c: Vec<Complex64> = (0..size)
                .map(|j| {
                    let lag = if j <= m { j } else { size - j };
                    Complex64::new(fgn_autocovariance(hurst, sigma2, lag), 0.0)
                })
                .collect();
            let fft = planner.plan_fft_forward(size);
            fft.process(&mut c);
            let max = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            if c.iter().all(|z| z.re >= -1e-10 * max) {
                let scale = c.iter().map(|z| (z.re.max(0.0) / size as f64).sqrt()).collect();
                return Ok(FbmGenerator { hurst, sigma2, n, scale, fft });
            }
            m *= 2;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn embedding_size(&self) -> usize {
        self.scale.len()
    }

    /// Two independent vectors of `n` increments.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Complex64::new(s * a, s * b)
            })
            .collect();
        self.fft.process(&mut buf);
        let re = buf[..self.n].iter().map(|z| z.re).collect();
        let im = buf[..self.n].iter().map(|z| z.im).collect();
        (re, im)
    }

    /// Two independent paths on the grid `iγ`, `i = 0..=n`, rescaled by `γ^H`.
    pub fn path_pair<R: Rng + ?Sized>(&self, gamma: f64, rng: &mut R) -> Result<(TickSeries, TickSeries)> {
        let (a, b) = self.sample_pair(rng);
        Ok((self.to_path(&a, gamma)?, self.to_path(&b, gamma)?))
    }

    fn to_path(&self, inc: &[f64], gamma: f64) -> Result<TickSeries> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {gamma}")));
        }
        let r = gamma.powf(self.hurst);
        let mut values = Vec::with_capacity(inc.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &d in inc {
            acc += d;
            values.push(r * acc);
        }
        let times = (0..values.len()).map(|i| i as f64 * gamma).collect();
        TickSeries::new(times, values, "fbm")
    }
}

/// One FBM path of `n` steps on the grid `iγ` with `Var X(t) = σ² t^{2H}`.
pub fn simulate_fbm_path<R: Rng + ?Sized>(
    hurst: f64,
    sigma2: f64,
    n: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<TickSeries> {
    let g = FbmGenerator::new(hurst, sigma2, n)?;
    Ok(g.path_pair(gamma, rng)?.0)
}
