//! Choosing δ so that a process makes on average `N` level-0 crossings in a window of length `t₀`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::{rng_for, tag, SimRng};
use crate::series_model::TickSeries;
use crate::sim::{
    expected_crossing_time, milstein_feller_update, ou_half_width, ou_stationary_lattice_law, ProcessSpec,
};

fn check_target(n: usize, t0: f64) -> Result<f64> {
    if n == 0 || !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!("need N >= 1 and t0 > 0 (got {n}, {t0})")));
    }
    Ok(t0 / n as f64)
}

/// Bisection for an increasing `f` on `[lo, hi]` until the bracket is within `rel_tol`.
fn bisect<F: FnMut(f64) -> Result<f64>>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::NotBracketed { lo, hi });
    }
    while (hi - lo) > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.is_nan() {
            return Err(Error::Undefined(format!("target function is NaN at {mid}")));
        }
        if fm < 0.0 {
            if fm < flo {
                return Err(Error::Undefined(format!("target function not increasing near {mid}")));
            }
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form δ for BM, and a bisection solve of `(δ/α)·tanh(αδ) = t₀/N` for BM with drift.
pub fn delta_closed_form(spec: &ProcessSpec, n: usize, t0: f64) -> Result<f64> {
    let target = check_target(n, t0)?;
    let bm = target.sqrt();
    match *spec {
        ProcessSpec::Bm => Ok(bm),
        ProcessSpec::BmDrift { alpha } => {
            spec.validate()?;
            if alpha == 0.0 {
                return Ok(bm);
            }
            let w = |d: f64| expected_crossing_time(spec, 0.0, d).map(|w| w - target);
            let mut hi = bm;
            while w(hi)? < 0.0 {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::NotBracketed { lo: bm, hi });
                }
            }
            bisect(w, bm, hi, 1e-13)
        }
        _ => Err(Error::InvalidParameter(format!("no closed form for {}", spec.name()))),
    }
}

/// Stationary-law mean crossing duration `Σ π(kδ) w(kδ)` of the OU chain.
pub fn ou_mean_duration(alpha: f64, sigma: f64, delta: f64) -> Result<f64> {
    let spec = ProcessSpec::Ou { alpha, sigma };
    let hw = ou_half_width(alpha, sigma, delta, 10.0);
    let law = ou_stationary_lattice_law(alpha, sigma, delta, hw)?;
    let mut total = 0.0;
    for (k, &p) in law.indices().zip(&law.probs) {
        if p < 1e-18 {
            continue;
        }
        total += p * expected_crossing_time(&spec, k as f64 * delta, delta)?;
    }
    Ok(total)
}

/// δ for which the stationary OU chain has mean crossing duration `t₀/N`.
pub fn delta_ou(alpha: f64, sigma: f64, n: usize, t0: f64) -> Result<f64> {
    ProcessSpec::Ou { alpha, sigma }.validate()?;
    let target = check_target(n, t0)?;
    let bm = target.sqrt() / sigma;
    bisect(|d| ou_mean_duration(alpha, sigma, d).map(|w| w - target), 0.5 * bm, 1.5 * bm, 1e-10)
}

/// Mean time for the Feller process started at `δ` to reach `2δ`.
fn feller_entrance_time(kappa: f64, mu: f64, sigma: f64, delta: f64) -> f64 {
    let s2 = sigma * sigma;
    let a = 2.0 * kappa * mu / s2;
    let c = 2.0 * kappa / s2;
    let l = |u: f64| -a * u.ln() + c * u;
    // ∫_δ^{2δ} ∫_0^z e^{L(z) − L(y)} 2/(σ² y) dy dz
    integrate(
        |z| {
            let lz = l(z);
            integrate(|y| if y <= 0.0 { 0.0 } else { (lz - l(y)).exp() * 2.0 / (s2 * y) }, 0.0, z, 1e-16, 1e-10)
        },
        delta,
        2.0 * delta,
        1e-16,
        1e-10,
    )
}

/// Stationary-chain mean crossing duration for the Feller process on `δℤ`.
/// Only a diagnostic: the Feller crossing chain observed in a time window is not stationary.
pub fn feller_stationary_mean_duration(kappa: f64, mu: f64, sigma: f64, delta: f64) -> Result<f64> {
    let spec = ProcessSpec::Feller { kappa, mu, sigma };
    spec.validate()?;
    let kernel = crate::sim::ChainKernel::for_spec(spec, delta)?;
    let mut logpi = vec![0.0f64];
    let mut k = 1i64;
    while let (Some(p), Some(q)) = (kernel.up_prob(k), kernel.up_prob(k + 1)) {
        logpi.push(logpi[logpi.len() - 1] + p.ln() - (1.0 - q).ln());
        k += 1;
    }
    let m = logpi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pi: Vec<f64> = logpi.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = pi.iter().sum();
    let mut total = 0.0;
    for (i, &p) in pi.iter().enumerate() {
        let p = p / z;
        if p < 1e-16 {
            continue;
        }
        let site = i as i64 + 1;
        let w = if site == 1 {
            feller_entrance_time(kappa, mu, sigma, delta)
        } else {
            expected_crossing_time(&spec, site as f64 * delta, delta)?
        };
        total += p * w;
    }
    Ok(total)
}

/// δ from the Feller stationary chain. Diagnostic only.
pub fn delta_feller_stationary(kappa: f64, mu: f64, sigma: f64, n: usize, t0: f64) -> Result<f64> {
    let target = check_target(n, t0)?;
    let guess = (target * mu * sigma * sigma).sqrt();
    bisect(|d| feller_stationary_mean_duration(kappa, mu, sigma, d).map(|w| w - target), 0.5 * guess, 2.0 * guess, 1e-7)
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Counts level-0 crossings of one sampled path for many lattice spacings at once.
///
/// For each spacing the window opens at the first lattice hit and closes `t₀` later.
/// Only spacings whose current band `(lo, hi)` the new sample leaves are touched.
struct MultiTracker {
    deltas: Vec<f64>,
    t0: f64,
    k: Vec<i64>,
    start: Vec<f64>,
    count: Vec<u32>,
    done: Vec<bool>,
    version: Vec<u32>,
    open: usize,
    up: BinaryHeap<(Reverse<Key>, u32, usize)>,
    down: BinaryHeap<(Key, u32, usize)>,
}

impl MultiTracker {
    fn new(deltas: &[f64], t0: f64, x0: f64) -> Self {
        let n = deltas.len();
        let mut tr = MultiTracker {
            deltas: deltas.to_vec(),
            t0,
            k: vec![0; n],
            start: vec![f64::NAN; n],
            count: vec![0; n],
            done: vec![false; n],
            version: vec![0; n],
            open: n,
            up: BinaryHeap::with_capacity(n),
            down: BinaryHeap::with_capacity(n),
        };
        for i in 0..n {
            let j = (x0 / deltas[i]).floor() as i64;
            tr.k[i] = j;
            tr.push(i, j as f64 * deltas[i], (j + 1) as f64 * deltas[i]);
        }
        tr
    }

    fn push(&mut self, i: usize, lo: f64, hi: f64) {
        self.version[i] += 1;
        self.up.push((Reverse(Key(hi)), self.version[i], i));
        self.down.push((Key(lo), self.version[i], i));
    }

    fn finished(&self) -> bool {
        self.open == 0
    }

    /// Handles the linear segment from `(t, x)` to `(t + dt, y)`.
    fn step(&mut self, t: f64, x: f64, dt: f64, y: f64) {
        loop {
            let Some(&(Reverse(Key(hi)), v, i)) = self.up.peek() else { break };
            if v != self.version[i] {
                self.up.pop();
                continue;
            }
            if y < hi {
                break;
            }
            self.up.pop();
            self.advance(i, t, x, dt, y);
        }
        loop {
            let Some(&(Key(lo), v, i)) = self.down.peek() else { break };
            if v != self.version[i] {
                self.down.pop();
                continue;
            }
            if y > lo {
                break;
            }
            self.down.pop();
            self.advance(i, t, x, dt, y);
        }
    }

    fn advance(&mut self, i: usize, t: f64, x: f64, dt: f64, y: f64) {
        let d = self.deltas[i];
        let started = !self.start[i].is_nan();
        let mut k = self.k[i];
        let dir: i64 = if y > x { 1 } else { -1 };
        // lattice index of the first point met on this segment
        let mut next = if started {
            k + dir
        } else if dir > 0 {
            k + 1
        } else {
            k
        };
        loop {
            let level = next as f64 * d;
            if (dir > 0 && level > y) || (dir < 0 && level < y) {
                break;
            }
            let time = if y == x { t + dt } else { t + dt * (level - x) / (y - x) };
            if self.start[i].is_nan() {
                self.start[i] = time;
            } else if time > self.start[i] + self.t0 {
                self.done[i] = true;
                self.open -= 1;
                self.version[i] += 1;
                return;
            } else {
                self.count[i] += 1;
            }
            k = next;
            next += dir;
        }
        self.k[i] = k;
        self.push(i, (k - 1) as f64 * d, (k + 1) as f64 * d);
    }
}

/// Geometric grid of `n` spacings over `[lo, hi]`.
pub fn delta_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Mean crossing counts per grid spacing with their standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct GridCounts {
    pub deltas: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_paths: usize,
}

impl GridCounts {
    fn from_paths(deltas: &[f64], per_path: &[Vec<u32>]) -> Self {
        let n = per_path.len() as f64;
        let g = deltas.len();
        let (mut s1, mut s2) = (vec![0.0; g], vec![0.0; g]);
        for c in per_path {
            for j in 0..g {
                let v = c[j] as f64;
                s1[j] += v;
                s2[j] += v * v;
            }
        }
        let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
        let se = (0..g)
            .map(|j| {
                let var = if n > 1.0 { (s2[j] - n * mean[j] * mean[j]) / (n - 1.0) } else { 0.0 };
                (var.max(0.0) / n).sqrt()
            })
            .collect();
        GridCounts { deltas: deltas.to_vec(), mean, se, n_paths: per_path.len() }
    }

    /// Spacing at which the mean count equals `target`, by log-log interpolation,
    /// with a standard error propagated through the local slope.
    pub fn solve(&self, target: f64) -> Result<(f64, f64)> {
        let g = self.deltas.len();
        for j in 0..g - 1 {
            let (c0, c1) = (self.mean[j], self.mean[j + 1]);
            if c0 >= target && c1 <= target && c0 > c1 && c1 > 0.0 {
                let (l0, l1) = (self.deltas[j].ln(), self.deltas[j + 1].ln());
                let slope = (c1.ln() - c0.ln()) / (l1 - l0);
                let w = (target.ln() - c0.ln()) / (c1.ln() - c0.ln());
                let d = (l0 + w * (l1 - l0)).exp();
                let se_count = (1.0 - w) * self.se[j] + w * self.se[j + 1];
                let se = d * (se_count / target) / slope.abs();
                return Ok((d, se));
            }
        }
        Err(Error::NotBracketed { lo: self.deltas[0], hi: self.deltas[g - 1] })
    }
}

/// Crossing counts of independently sampled paths, per spacing, in the window after the first hit.
pub fn grid_counts<F>(sampler: F, deltas: &[f64], t0: f64, n_paths: usize, seed: u64) -> Result<GridCounts>
where
    F: Fn(&mut SimRng) -> Result<TickSeries> + Sync,
{
    if deltas.is_empty() || n_paths == 0 {
        return Err(Error::InvalidParameter("need at least one spacing and one path".into()));
    }
    let per_path: Vec<Vec<u32>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(seed, &[tag("grid"), p as u64]);
            let s = sampler(&mut rng)?;
            let (t, v) = (s.times(), s.values());
            let mut tr = MultiTracker::new(deltas, t0, v[0]);
            for i in 1..s.len() {
                tr.step(t[i - 1], v[i - 1], t[i] - t[i - 1], v[i]);
                if tr.finished() {
                    return Ok(tr.count);
                }
            }
            Err(Error::Simulation { path: p, reason: format!("path ends before a window of length {t0} closes") })
        })
        .collect::<Result<_>>()?;
    Ok(GridCounts::from_paths(deltas, &per_path))
}

/// Single-resolution Monte Carlo calibration for any path sampler.
#[derive(Debug, Clone, Serialize)]
pub struct McCalibration {
    pub delta: f64,
    pub delta_se: f64,
    pub ci95: (f64, f64),
    pub counts: GridCounts,
}

pub fn delta_mc_generic<F>(
    sampler: F,
    n: usize,
    t0: f64,
    deltas: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<McCalibration>
where
    F: Fn(&mut SimRng) -> Result<TickSeries> + Sync,
{
    check_target(n, t0)?;
    let counts = grid_counts(sampler, deltas, t0, n_paths, seed)?;
    let (delta, se) = counts.solve(n as f64)?;
    Ok(McCalibration { delta, delta_se: se, ci95: (delta - 1.96 * se, delta + 1.96 * se), counts })
}

#[derive(Debug, Clone, Serialize)]
pub struct StepEstimate {
    pub m: u32,
    pub dt: f64,
    pub delta: f64,
    pub delta_se: f64,
    pub mean_count_at_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    pub a: f64,
    pub b: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FellerCalibration {
    pub steps: Vec<StepEstimate>,
    pub fit: Option<RegressionFit>,
    pub delta_inf: Option<f64>,
    pub warning: Option<String>,
    pub grid: Vec<f64>,
    pub n_paths: usize,
}

impl FellerCalibration {
    /// The extrapolated value, or the finest-step estimate when the regression was refused.
    pub fn delta(&self) -> f64 {
        self.delta_inf.unwrap_or_else(|| self.steps[self.steps.len() - 1].delta)
    }
}

/// Least-squares line through `(m, log₁₀(δ̂_{m+1} − δ̂_m))` and the limit of the extrapolated series.
pub fn extrapolate_steps(ms: &[u32], deltas: &[f64]) -> std::result::Result<(RegressionFit, f64), String> {
    if ms.len() != deltas.len() || ms.len() < 3 {
        return Err("need at least three step sizes".into());
    }
    if ms.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err("step exponents must be consecutive".into());
    }
    let diffs: Vec<f64> = deltas.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.iter().any(|&d| d <= 0.0) {
        return Err(format!("estimates are not increasing: {deltas:?}"));
    }
    let xs: Vec<f64> = ms[..ms.len() - 1].iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    if a >= 0.0 {
        return Err(format!("differences do not shrink (slope {a})"));
    }
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - a * x - b).powi(2)).sum::<f64>() / n).sqrt();
    let last = *ms.last().unwrap() as f64;
    let r = 10f64.powf(a);
    let limit = deltas[deltas.len() - 1] + 10f64.powf(a * last + b) / (1.0 - r);
    Ok((RegressionFit { a, b, residual_rms: rms }, limit))
}

/// Feller calibration at step sizes `10^{−m}`, all driven by the same Brownian increments.
#[allow(clippy::too_many_arguments)]
pub fn delta_mc_feller(
    kappa: f64,
    mu: f64,
    sigma: f64,
    n: usize,
    t0: f64,
    ms: &[u32],
    n_paths: usize,
    seed: u64,
) -> Result<FellerCalibration> {
    ProcessSpec::Feller { kappa, mu, sigma }.validate()?;
    let target = check_target(n, t0)?;
    if ms.is_empty() || n_paths == 0 {
        return Err(Error::InvalidParameter("need step exponents and at least one path".into()));
    }
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let finest = *ms.last().unwrap();
    if finest > 7 {
        return Err(Error::InvalidParameter(format!("step 1e-{finest} is too fine")));
    }
    let dt = 10f64.powi(-(finest as i32));
    let agg: Vec<usize> = ms.iter().map(|&m| 10usize.pow(finest - m)).collect();
    let guess = (target * mu).sqrt() * sigma;
    let grid = delta_grid(0.35 * guess, 1.25 * guess, 160);
    let shape = 2.0 * kappa * mu / (sigma * sigma);
    let gamma = Gamma::new(shape, sigma * sigma / (2.0 * kappa)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let sd = dt.sqrt();
    let per_path: Vec<Vec<Vec<u32>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(seed, &[tag("feller-cal"), p as u64]);
            let x0 = gamma.sample(&mut rng);
            let r = ms.len();
            let mut trackers: Vec<MultiTracker> = (0..r).map(|_| MultiTracker::new(&grid, t0, x0)).collect();
            let mut x = vec![x0; r];
            let mut zacc = vec![0.0; r];
            let mut t = vec![0.0; r];
            let mut step = 0usize;
            let max_steps = ((t0 * 1000.0) / dt) as usize;
            while trackers.iter().any(|tr| !tr.finished()) {
                step += 1;
                if step > max_steps {
                    return Err(Error::Simulation { path: p, reason: "no lattice hit for some spacing".into() });
                }
                let z = sd * rng.sample::<f64, _>(StandardNormal);
                for j in 0..r {
                    zacc[j] += z;
                    if step % agg[j] != 0 {
                        continue;
                    }
                    let h = dt * agg[j] as f64;
                    let mut y = milstein_feller_update(x[j], zacc[j], kappa, mu, sigma, h);
                    while y <= 0.0 {
                        let z2 = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
                        y = milstein_feller_update(x[j], z2, kappa, mu, sigma, h);
                    }
                    if !trackers[j].finished() {
                        trackers[j].step(t[j], x[j], h, y);
                    }
                    x[j] = y;
                    t[j] += h;
                    zacc[j] = 0.0;
                }
            }
            Ok(trackers.into_iter().map(|tr| tr.count).collect())
        })
        .collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(ms.len());
    for (j, &m) in ms.iter().enumerate() {
        let rows: Vec<Vec<u32>> = per_path.iter().map(|v| v[j].clone()).collect();
        let counts = GridCounts::from_paths(&grid, &rows);
        let (delta, delta_se) = counts.solve(n as f64)?;
        steps.push(StepEstimate { m, dt: 10f64.powi(-(m as i32)), delta, delta_se, mean_count_at_grid: counts.mean });
    }
    let est: Vec<f64> = steps.iter().map(|s| s.delta).collect();
    let (fit, delta_inf, warning) = match extrapolate_steps(&ms, &est) {
        Ok((fit, lim)) => (Some(fit), Some(lim), None),
        Err(w) => (None, None, Some(format!("regression refused: {w}"))),
    };
    Ok(FellerCalibration { steps, fit, delta_inf, warning, grid, n_paths })
}

/// Achieved mean crossing count and its 95% half-width from re-simulated paths.
pub fn achieved_count<F>(sampler: F, delta: f64, t0: f64, n_paths: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&mut SimRng) -> Result<TickSeries> + Sync,
{
    let c = grid_counts(sampler, &[delta], t0, n_paths, seed)?;
    Ok((c.mean[0], 1.96 * c.se[0]))
}

/// Everything a calibration run produced, for the report file.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub process: ProcessSpec,
    pub target_n: usize,
    pub t0: f64,
    pub method: String,
    pub steps: Vec<StepEstimate>,
    pub fit: Option<RegressionFit>,
    pub delta: f64,
    pub achieved: Option<(f64, f64)>,
    pub warning: Option<String>,
}

impl CalibrationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "process\t{}", self.process.name());
        let _ = writeln!(s, "target\tN={} t0={}", self.target_n, self.t0);
        let _ = writeln!(s, "method\t{}", self.method);
        for st in &self.steps {
            let _ = writeln!(s, "step\tm={} dt={:e} delta={:.7} se={:.2e}", st.m, st.dt, st.delta, st.delta_se);
        }
        if let Some(f) = &self.fit {
            let _ = writeln!(s, "fit\ta={:.6} b={:.6} rms={:.3e}", f.a, f.b, f.residual_rms);
        }
        let _ = writeln!(s, "delta\t{:.10}", self.delta);
        if let Some((m, h)) = self.achieved {
            let _ = writeln!(s, "achieved\t{m:.2} +- {h:.2}");
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(s, "warning\t{w}");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?
        } else {
            self.to_text()
        };
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Samples `n` grid steps of BM for generic calibration.
pub fn bm_sampler(n_steps: usize, dt: f64) -> impl Fn(&mut SimRng) -> Result<TickSeries> + Sync {
    move |rng: &mut SimRng| crate::sim::bm_grid_path(n_steps, dt, rng)
}
