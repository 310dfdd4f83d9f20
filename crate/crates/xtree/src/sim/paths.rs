//! Grid and tick-stream sample paths.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::series_model::TickSeries;

fn check_grid(n: usize, dt: f64) -> Result<()> {
    if n == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("need n >= 1 and dt > 0 (got {n}, {dt})")));
    }
    Ok(())
}

/// Standard BM from 0 on the grid `i·dt`, `i = 0..=n`.
pub fn bm_grid_path<R: Rng + ?Sized>(n: usize, dt: f64, rng: &mut R) -> Result<TickSeries> {
    check_grid(n, dt)?;
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    values.push(x);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        x += sd * z;
        values.push(x);
    }
    TickSeries::new((0..=n).map(|i| i as f64 * dt).collect(), values, "bm")
}

/// `exp(B_t − t/2)` on the grid `i·dt`.
pub fn exp_martingale_path<R: Rng + ?Sized>(n: usize, dt: f64, rng: &mut R) -> Result<TickSeries> {
    let b = bm_grid_path(n, dt, rng)?;
    let values = b.times().iter().zip(b.values()).map(|(t, x)| (x - 0.5 * t).exp()).collect();
    TickSeries::new(b.times().to_vec(), values, "exp_martingale")
}

/// A `±h` random walk observed at the jump times of a Poisson clock with the given rate.
pub fn bm_tick_stream<R: Rng + ?Sized>(n_ticks: usize, rate: f64, h: f64, rng: &mut R) -> Result<TickSeries> {
    if n_ticks < 2 || !(rate > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need n_ticks >= 2, rate > 0, h > 0 (got {n_ticks}, {rate}, {h})"
        )));
    }
    let gaps = Exp::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut times = Vec::with_capacity(n_ticks);
    let mut values = Vec::with_capacity(n_ticks);
    let (mut t, mut k) = (0.0, 0i64);
    for _ in 0..n_ticks {
        times.push(t);
        values.push(k as f64 * h);
        t += gaps.sample(rng);
        k += if rng.random::<bool>() { 1 } else { -1 };
    }
    TickSeries::new(times, values, "bm_tick_stream")
}

/// Tick stream of small Gaussian moves interrupted by jumps several times larger.
/// Jumps cluster: a persistent two-state regime switches the jump rate between calm and busy,
/// and the busy rate swells towards the middle of the record.
pub fn jump_fixture<R: Rng + ?Sized>(n_ticks: usize, rng: &mut R) -> Result<TickSeries> {
    const SMALL: f64 = 1e-4;
    const BUSY_JUMP_PROB: (f64, f64) = (0.3, 0.6);
    const SWITCH_PROB: f64 = 0.005;
    if n_ticks < 2 {
        return Err(Error::InvalidParameter("jump fixture needs at least 2 ticks".into()));
    }
    let small = Normal::new(0.0, SMALL).unwrap();
    let gaps = Exp::new(1.0).unwrap();
    let mut times = Vec::with_capacity(n_ticks);
    let mut values = Vec::with_capacity(n_ticks);
    let (mut t, mut x) = (0.0, 0.0);
    let mut regime = 0usize;
    for i in 0..n_ticks {
        times.push(t);
        values.push(x);
        t += gaps.sample(rng);
        if rng.random::<f64>() < SWITCH_PROB {
            regime = 1 - regime;
        }
        let jump_prob = if regime == 1 {
            let bump = (std::f64::consts::PI * i as f64 / n_ticks as f64).sin();
            BUSY_JUMP_PROB.0 + (BUSY_JUMP_PROB.1 - BUSY_JUMP_PROB.0) * bump
        } else {
            0.0
        };
        x += if rng.random::<f64>() < jump_prob {
            let size = SMALL * rng.random_range(3.0..8.0);
            if rng.random::<bool>() {
                size
            } else {
                -size
            }
        } else {
            small.sample(rng)
        };
    }
    TickSeries::new(times, values, "jump_fixture")
}

/// One Milstein step of `dX = κ(μ − X)dt + σ√X dW`, redrawing the Gaussian while the result is ≤ 0.
/// Returns the new value and the number of redraws.
pub fn milstein_feller_step<R: Rng + ?Sized>(
    x: f64,
    kappa: f64,
    mu: f64,
    sigma: f64,
    dt: f64,
    rng: &mut R,
) -> (f64, usize) {
    let sd = dt.sqrt();
    let mut rejections = 0;
    loop {
        let z = sd * rng.sample::<f64, _>(StandardNormal);
        let y = milstein_feller_update(x, z, kappa, mu, sigma, dt);
        if y > 0.0 {
            return (y, rejections);
        }
        rejections += 1;
        if rejections > 10_000 {
            return (f64::MIN_POSITIVE, rejections);
        }
    }
}

/// The Milstein update for a given Gaussian increment `z ~ N(0, dt)`; may be ≤ 0.
pub(crate) fn milstein_feller_update(x: f64, z: f64, kappa: f64, mu: f64, sigma: f64, dt: f64) -> f64 {
    x + kappa * (mu - x) * dt + sigma * x.max(0.0).sqrt() * z + 0.25 * sigma * sigma * (z * z - dt)
}
