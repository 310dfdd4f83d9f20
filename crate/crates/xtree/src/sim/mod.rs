//! Crossing chains and sample paths for BM, BM with drift, OU, Feller and FBM.

mod chain;
mod diffusion;
mod fbm;
mod paths;

pub use chain::{
    feller_first_hit, simulate_feller_crossings, simulate_markov_crossings, ChainKernel, FellerRun, StartLaw,
};
pub use diffusion::{
    expected_crossing_time, hitting_prob, hitting_prob_quadrature, ou_half_width, ou_stationary_lattice_law, LatticeLaw,
};
pub use fbm::{fgn_autocovariance, simulate_fbm_path, FbmGenerator};
pub(crate) use paths::milstein_feller_update;
pub use paths::{bm_grid_path, bm_tick_stream, exp_martingale_path, jump_fixture, milstein_feller_step};

use serde::{Deserialize, Serialize};

use crate::crossing_tree::{level0_points, TreeOptions};
use crate::error::{Error, Result};
use crate::series_model::{InterpolatedPath, TickSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    Bm,
    BmDrift { alpha: f64 },
    Ou { alpha: f64, sigma: f64 },
    Feller { kappa: f64, mu: f64, sigma: f64 },
    Fbm { hurst: f64, sigma2: f64 },
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            ProcessSpec::Bm => Ok(()),
            ProcessSpec::BmDrift { alpha } if !alpha.is_finite() => bad(format!("drift {alpha}")),
            ProcessSpec::BmDrift { .. } => Ok(()),
            ProcessSpec::Ou { alpha, sigma } if !(alpha > 0.0 && sigma > 0.0) => {
                bad(format!("OU needs alpha, sigma > 0 (got {alpha}, {sigma})"))
            }
            ProcessSpec::Ou { .. } => Ok(()),
            ProcessSpec::Feller { kappa, mu, sigma } => {
                if !(kappa > 0.0 && mu > 0.0 && sigma > 0.0) {
                    bad(format!("Feller needs kappa, mu, sigma > 0 (got {kappa}, {mu}, {sigma})"))
                } else if 2.0 * kappa * mu / (sigma * sigma) < 1.0 {
                    bad(format!("Feller needs 2 kappa mu / sigma^2 >= 1 (got {})", 2.0 * kappa * mu / (sigma * sigma)))
                } else {
                    Ok(())
                }
            }
            ProcessSpec::Fbm { hurst, sigma2 } if !(hurst > 0.0 && hurst < 1.0 && sigma2 > 0.0) => {
                bad(format!("FBM needs 0 < H < 1 and sigma2 > 0 (got {hurst}, {sigma2})"))
            }
            ProcessSpec::Fbm { .. } => Ok(()),
        }
    }

    pub fn is_diffusion(&self) -> bool {
        !matches!(self, ProcessSpec::Fbm { .. })
    }

    pub fn name(&self) -> String {
        match *self {
            ProcessSpec::Bm => "bm".into(),
            ProcessSpec::BmDrift { alpha } => format!("bm_drift(alpha={alpha})"),
            ProcessSpec::Ou { alpha, sigma } => format!("ou(alpha={alpha},sigma={sigma})"),
            ProcessSpec::Feller { kappa, mu, sigma } => format!("feller(kappa={kappa},mu={mu},sigma={sigma})"),
            ProcessSpec::Fbm { hurst, sigma2 } => format!("fbm(H={hurst},sigma2={sigma2})"),
        }
    }
}

/// Successive lattice values `δ₀ + k·δ`, optionally with crossing times.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingChain {
    pub ks: Vec<i64>,
    pub times: Option<Vec<f64>>,
    pub delta: f64,
    pub delta0: f64,
}

impl CrossingChain {
    pub fn values(&self) -> Vec<f64> {
        self.ks.iter().map(|&k| self.delta0 + k as f64 * self.delta).collect()
    }

    /// Number of crossings (the first entry is the starting lattice point).
    pub fn n_crossings(&self) -> usize {
        self.ks.len().saturating_sub(1)
    }

    pub fn durations(&self) -> Option<Vec<f64>> {
        self.times.as_ref().map(|t| t.windows(2).map(|w| w[1] - w[0]).collect())
    }

    pub fn to_series(&self, source: &str) -> Result<TickSeries> {
        let times = match &self.times {
            Some(t) => t.clone(),
            None => (0..self.ks.len()).map(|i| i as f64).collect(),
        };
        TickSeries::new(times, self.values(), source)
    }
}

/// Level-0 first passages of an interpolated path; the same kernel builds level 0 of a crossing tree.
pub fn extract_crossings(path: &InterpolatedPath<'_>, delta: f64, delta0: f64) -> Result<CrossingChain> {
    let pts = level0_points(path, delta, delta0, &TreeOptions::default())?;
    if pts.len() < 2 {
        return Err(Error::TooFewCrossings(0));
    }
    Ok(CrossingChain {
        ks: pts.iter().map(|p| p.k).collect(),
        times: Some(pts.iter().map(|p| p.time).collect()),
        delta,
        delta0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossing_tree::build_tree;

    #[test]
    fn spec_validation() {
        assert!(ProcessSpec::Ou { alpha: 0.0, sigma: 1.0 }.validate().is_err());
        assert!(ProcessSpec::Feller { kappa: 1.0, mu: 0.2, sigma: 1.0 }.validate().is_err());
        assert!(ProcessSpec::Feller { kappa: 6.0, mu: 0.2, sigma: 1.0 }.validate().is_ok());
        assert!(ProcessSpec::Fbm { hurst: 1.0, sigma2: 1.0 }.validate().is_err());
    }

    #[test]
    fn extraction_on_seven_point_example() {
        let s = TickSeries::from_values(vec![0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0], "").unwrap();
        let c = extract_crossings(&s.interpolated(), 1.0, 0.0).unwrap();
        assert_eq!(c.n_crossings(), 6);
        assert_eq!(c.ks, vec![0, 1, 2, 1, 2, 3, 4]);
        let tree = build_tree(&s.interpolated(), 1.0, 0.0, 0.0).unwrap();
        let ends: Vec<f64> = tree.crossings(0).iter().map(|x| x.end_time).collect();
        assert_eq!(&c.times.as_ref().unwrap()[1..], &ends[..]);
    }

    #[test]
    fn lattice_path_identity() {
        let ks = vec![3i64, 4, 5, 4, 3, 2, 3];
        let chain = CrossingChain { ks: ks.clone(), times: None, delta: 0.25, delta0: 0.1 };
        let s = chain.to_series("").unwrap();
        let back = extract_crossings(&s.interpolated(), 0.25, 0.1).unwrap();
        assert_eq!(back.ks, ks);
        assert_eq!(back.durations().unwrap(), vec![1.0; 6]);
    }
}
