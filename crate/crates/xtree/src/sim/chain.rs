//! Birth–death chains of successive lattice hits.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::diffusion::{hitting_prob, ou_half_width, ou_stationary_lattice_law, LatticeLaw};
use super::paths::milstein_feller_step;
use super::{CrossingChain, ProcessSpec};
use crate::error::{Error, Result};

/// Up-step probabilities `p(δ₀ + kδ)` tabulated on a window of sites.
#[derive(Debug, Clone)]
pub struct ChainKernel {
    spec: ProcessSpec,
    delta: f64,
    delta0: f64,
    constant: Option<f64>,
    offset: i64,
    table: Vec<f64>,
}

impl ChainKernel {
    /// Tabulates `p` for `k ∈ [lo, hi]`. Feller sites at `k = 1` (with `δ₀ = 0`) are forced up.
    pub fn new(spec: ProcessSpec, delta: f64, delta0: f64, lo: i64, hi: i64) -> Result<Self> {
        spec.validate()?;
        if !spec.is_diffusion() {
            return Err(Error::InvalidParameter(format!("{} has no crossing chain", spec.name())));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        let constant = match spec {
            ProcessSpec::Bm | ProcessSpec::BmDrift { .. } => Some(hitting_prob(&spec, delta0, delta)?),
            _ => None,
        };
        let mut table = Vec::new();
        if constant.is_none() {
            if hi < lo {
                return Err(Error::InvalidParameter(format!("empty site window [{lo}, {hi}]")));
            }
            for k in lo..=hi {
                let x = delta0 + k as f64 * delta;
                let p = match spec {
                    ProcessSpec::Feller { .. } if x - delta <= delta * 1e-9 => {
                        if x <= delta * 1e-9 {
                            return Err(Error::Boundary { lo: x - delta, hi: x + delta });
                        }
                        1.0
                    }
                    _ => hitting_prob(&spec, x, delta)?,
                };
                table.push(p);
            }
        }
        Ok(ChainKernel { spec, delta, delta0, constant, offset: lo, table })
    }

    /// Default windows: 20 stationary sd for OU, `(0, μ + 30 sd]` for Feller on `δℤ`.
    pub fn for_spec(spec: ProcessSpec, delta: f64) -> Result<Self> {
        match spec {
            ProcessSpec::Ou { alpha, sigma } => {
                let hw = ou_half_width(alpha, sigma, delta, 20.0) as i64;
                ChainKernel::new(spec, delta, 0.0, -hw, hw)
            }
            ProcessSpec::Feller { kappa, mu, sigma } => {
                let a = 2.0 * kappa * mu / (sigma * sigma);
                let scale = sigma * sigma / (2.0 * kappa);
                let top = mu + 30.0 * a.sqrt() * scale;
                ChainKernel::new(spec, delta, 0.0, 1, (top / delta).ceil() as i64 + 1)
            }
            _ => ChainKernel::new(spec, delta, 0.0, 0, 0),
        }
    }

    pub fn spec(&self) -> ProcessSpec {
        self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// `None` outside the tabulated window.
    pub fn up_prob(&self, k: i64) -> Option<f64> {
        if let Some(p) = self.constant {
            return Some(p);
        }
        let i = k - self.offset;
        if i < 0 {
            None
        } else {
            self.table.get(i as usize).copied()
        }
    }
}

/// Initial site of a chain.
#[derive(Debug, Clone, PartialEq)]
pub enum StartLaw {
    Point(i64),
    Lattice(LatticeLaw),
}

impl StartLaw {
    /// The OU stationary law truncated at 10 sd.
    pub fn ou_stationary(alpha: f64, sigma: f64, delta: f64) -> Result<Self> {
        let hw = ou_half_width(alpha, sigma, delta, 10.0);
        Ok(StartLaw::Lattice(ou_stationary_lattice_law(alpha, sigma, delta, hw)?))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match self {
            StartLaw::Point(k) => *k,
            StartLaw::Lattice(law) => law.sample_index(rng.random::<f64>()),
        }
    }
}

fn run_chain<R: Rng + ?Sized>(kernel: &ChainKernel, k0: i64, n: usize, rng: &mut R) -> Result<Vec<i64>> {
    let mut ks = Vec::with_capacity(n + 1);
    ks.push(k0);
    let mut k = k0;
    for step in 0..n {
        let p = kernel.up_prob(k).ok_or_else(|| Error::Simulation {
            path: 0,
            reason: format!("chain left the tabulated window at site {k} after {step} steps"),
        })?;
        k += if rng.random::<f64>() < p { 1 } else { -1 };
        ks.push(k);
    }
    Ok(ks)
}

/// `n` crossings of the chain driven by `kernel`. Durations are not simulated.
pub fn simulate_markov_crossings<R: Rng + ?Sized>(
    kernel: &ChainKernel,
    n: usize,
    start: &StartLaw,
    rng: &mut R,
) -> Result<CrossingChain> {
    if let StartLaw::Lattice(law) = start {
        if law.probs.is_empty() || (law.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("start law is not a probability vector".into()));
        }
    }
    let k0 = start.draw(rng);
    if kernel.up_prob(k0).is_none() {
        return Err(Error::InvalidParameter(format!("start site {k0} outside the kernel window")));
    }
    let ks = run_chain(kernel, k0, n, rng)?;
    Ok(CrossingChain { ks, times: None, delta: kernel.delta, delta0: kernel.delta0 })
}

/// Result of a Feller simulation: the chain plus the Milstein lead-in.
#[derive(Debug, Clone)]
pub struct FellerRun {
    pub chain: CrossingChain,
    pub x0: f64,
    pub first_hit_time: f64,
    pub milstein_steps: usize,
    pub rejections: usize,
}

/// Runs the Milstein scheme from a stationary Gamma draw until the path first meets `δℤ`.
/// Returns `(k, time, x0, steps, rejections)`.
pub fn feller_first_hit<R: Rng + ?Sized>(
    kappa: f64,
    mu: f64,
    sigma: f64,
    delta: f64,
    dt: f64,
    rng: &mut R,
) -> Result<(i64, f64, f64, usize, usize)> {
    ProcessSpec::Feller { kappa, mu, sigma }.validate()?;
    if !(dt > 0.0 && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt, delta > 0 (got {dt}, {delta})")));
    }
    let shape = 2.0 * kappa * mu / (sigma * sigma);
    let scale = sigma * sigma / (2.0 * kappa);
    let gamma = Gamma::new(shape, scale).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x0 = gamma.sample(rng);
    let mut x = x0;
    let mut t = 0.0;
    let mut rejections = 0;
    for step in 1..=100_000_000usize {
        let (y, rej) = milstein_feller_step(x, kappa, mu, sigma, dt, rng);
        rejections += rej;
        let j = (x / delta).floor();
        let hit = if y >= (j + 1.0) * delta {
            Some(j + 1.0)
        } else if y <= j * delta && j >= 1.0 {
            Some(j)
        } else {
            None
        };
        if let Some(kf) = hit {
            let target = kf * delta;
            let frac = if y == x { 0.0 } else { (target - x) / (y - x) };
            return Ok((kf as i64, t + frac * dt, x0, step, rejections));
        }
        x = y;
        t += dt;
    }
    Err(Error::Simulation { path: 0, reason: "no lattice hit within 1e8 Milstein steps".into() })
}

/// Feller chain: Milstein lead-in to the first lattice hit (the chain start), then `n` exact steps.
pub fn simulate_feller_crossings<R: Rng + ?Sized>(
    kernel: &ChainKernel,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<FellerRun> {
    let ProcessSpec::Feller { kappa, mu, sigma } = kernel.spec else {
        return Err(Error::InvalidParameter("kernel is not a Feller kernel".into()));
    };
    let (k0, first_hit_time, x0, milstein_steps, rejections) =
        feller_first_hit(kappa, mu, sigma, kernel.delta, dt, rng)?;
    let ks = run_chain(kernel, k0, n, rng)?;
    Ok(FellerRun {
        chain: CrossingChain { ks, times: None, delta: kernel.delta, delta0: 0.0 },
        x0,
        first_hit_time,
        milstein_steps,
        rejections,
    })
}
