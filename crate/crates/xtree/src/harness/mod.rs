//! Type-1 and power studies, dataset analysis and the QV c-sweep.

mod config;
mod report;

pub use config::{
    format_from, parse_config_file, parse_config_str, parse_list, study_config_from, Settings, FRONT_END_KEYS,
};
pub use report::{
    CellSummary, DatasetReport, Format, LevelReport, LevelSummary, QvReport, QvRow, RateCell, Render, StudyReport,
};

use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical_values::{CvSet, DEFAULT_N_MC, DEFAULT_SEED};
use crate::crossing_tree::{
    build_tree, build_tree_from_walk, build_tree_with, latticised_mean, select_base_scale, CrossingTree, TreeOptions,
};
use crate::dist_tests::{chi2_geometric_test, g_test, klp_nb_test, ks_discrete_test, twos_test};
use crate::error::{Error, Result};
use crate::indep_tests::{
    indicator_of_twos, joint_dist_test, joint_dist_test_as, lag1_autocorr_test, larsen_test, obrien76_test,
    obrien_dyck85_test, wald_wolfowitz_runs, BitOrigin, BitSequence,
};
use crate::outcome::{TestId, TestOutcome};
use crate::qv_test::qv_tests;
use crate::rng::{rng_for, tag, SimRng};
use crate::series_model::{load_ticks, log_transform, TickFormat, TickSeries};
use crate::sim::{
    bm_grid_path, exp_martingale_path, simulate_feller_crossings, simulate_markov_crossings, ChainKernel, FbmGenerator,
    ProcessSpec, StartLaw,
};

/// How the lattice offset δ₀ is chosen after the warm-up crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta0Policy {
    Zero,
    First,
    Latticed,
}

impl FromStr for Delta0Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(Delta0Policy::Zero),
            "first" => Ok(Delta0Policy::First),
            "latticed" => Ok(Delta0Policy::Latticed),
            other => Err(Error::Config(format!("unknown delta0 policy '{other}' (zero|first|latticed)"))),
        }
    }
}

impl Delta0Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Delta0Policy::Zero => "zero",
            Delta0Policy::First => "first",
            Delta0Policy::Latticed => "latticed",
        }
    }
}

/// Path generator for the QV study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QvSource {
    Bm,
    ExpMartingale,
}

impl FromStr for QvSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bm" => Ok(QvSource::Bm),
            "exp_martingale" | "exp-martingale" | "expmart" => Ok(QvSource::ExpMartingale),
            other => Err(Error::Config(format!("unknown qv source '{other}' (bm|exp-martingale)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub process: Option<ProcessSpec>,
    pub dataset: Option<PathBuf>,
    pub n_paths: usize,
    pub n_crossings: usize,
    pub delta: Option<f64>,
    pub delta0_policy: Delta0Policy,
    pub tests: Vec<TestId>,
    pub levels: Vec<usize>,
    pub seed: u64,
    pub cv_dir: Option<PathBuf>,
    pub cv_n_mc: usize,
    pub cv_seed: u64,
    pub out: Option<PathBuf>,
    pub n_warmup: usize,
    pub log_transform: bool,
    pub milstein_dt: f64,
    pub fbm_gamma: f64,
    pub fbm_steps: usize,
    pub qv_source: QvSource,
    pub qv_steps: usize,
    pub qv_dt: f64,
    pub qv_drop_last: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            process: None,
            dataset: None,
            n_paths: 1000,
            n_crossings: 1250,
            delta: None,
            delta0_policy: Delta0Policy::Latticed,
            tests: TestId::TREE_DEFAULT.to_vec(),
            levels: vec![1, 2, 3, 4],
            seed: 1,
            cv_dir: None,
            cv_n_mc: DEFAULT_N_MC,
            cv_seed: DEFAULT_SEED,
            out: None,
            n_warmup: 30,
            log_transform: false,
            milstein_dt: 1e-4,
            fbm_gamma: 1e-5,
            fbm_steps: 1 << 20,
            qv_source: QvSource::Bm,
            qv_steps: 1250,
            qv_dt: 1.0 / 250.0,
            qv_drop_last: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tests.is_empty() {
            return Err(Error::Config("test roster is empty".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("no levels requested".into()));
        }
        if let Some(p) = &self.process {
            p.validate()?;
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("delta must be positive, got {d}")));
            }
        }
        Ok(())
    }

    /// Table ids the roster needs.
    pub fn required_tables(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self.tests.iter().filter_map(|t| table_for(*t)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Loads (or generates and caches) the critical-value tables for the roster.
    pub fn load_tables(&self) -> Result<CvSet> {
        let tables = self.required_tables();
        match &self.cv_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                CvSet::ensure(dir, &tables, self.cv_n_mc, self.cv_seed)
            }
            None => CvSet::generate(&tables, self.cv_n_mc, self.cv_seed),
        }
    }
}

fn table_for(t: TestId) -> Option<&'static str> {
    match t {
        TestId::Chi2 => Some("chi2"),
        TestId::Ks => Some("ks"),
        TestId::Autocorr => Some("autocorr"),
        TestId::Larsen | TestId::LarsenUd => Some("larsen"),
        TestId::Dixob | TestId::DixobUd => Some("obrien76"),
        _ => None,
    }
}

/// Applies one roster test to level `level` of `tree`.
pub fn apply_test(id: TestId, tree: &CrossingTree, level: usize, cv: &CvSet, rng: &mut SimRng) -> Result<TestOutcome> {
    if !id.is_tree_test() {
        return Err(Error::InvalidParameter(format!("{id} is not a crossing-tree test")));
    }
    if id.uses_excursions() {
        let b = BitSequence::new(tree.v(level).to_vec(), BitOrigin::Excursions);
        return match id {
            TestId::RunsUd => wald_wolfowitz_runs(&b),
            TestId::LarsenUd => larsen_test(&b, cv.get("larsen")),
            TestId::DixobUd => obrien76_test(&b, cv.get("obrien76")),
            _ => obrien_dyck85_test(&b),
        };
    }
    let z = tree.z(level);
    if level == 0 || z.is_empty() {
        let reason =
            if level == 0 { "no subcrossing counts at level 0" } else { "no complete crossings at this level" };
        return Ok(TestOutcome {
            test: id,
            statistic: None,
            p_value: None,
            reject: false,
            n_used: 0,
            skipped: Some(reason.into()),
        });
    }
    match id {
        TestId::Chi2 => chi2_geometric_test(z, cv.get("chi2")),
        TestId::Twos => twos_test(z),
        TestId::G => g_test(z),
        TestId::Ks => ks_discrete_test(z, cv.get("ks")),
        TestId::Klp => klp_nb_test(z),
        TestId::Joint => joint_dist_test(z),
        TestId::JointPerm => {
            let mut p = z.to_vec();
            p.shuffle(rng);
            joint_dist_test_as(&p, TestId::JointPerm)
        }
        TestId::Autocorr => lag1_autocorr_test(z, cv.get("autocorr")),
        TestId::Runs => wald_wolfowitz_runs(&indicator_of_twos(z)),
        TestId::Larsen => larsen_test(&indicator_of_twos(z), cv.get("larsen")),
        TestId::Dixob => obrien76_test(&indicator_of_twos(z), cv.get("obrien76")),
        _ => obrien_dyck85_test(&indicator_of_twos(z)),
    }
}

/// Lattice offset for a chain on `δℤ` after `n_warmup` warm-up crossings; returns the index offset `k₀`.
fn chain_offset(ks: &[i64], n_warmup: usize, policy: Delta0Policy) -> i64 {
    match policy {
        Delta0Policy::Zero => 0,
        Delta0Policy::First => ks[n_warmup],
        Delta0Policy::Latticed => {
            let mean = ks[1..=n_warmup].iter().sum::<i64>() as f64 / n_warmup as f64;
            mean.round() as i64
        }
    }
}

fn tree_from_chain(ks: &[i64], delta: f64, n_warmup: usize, policy: Delta0Policy) -> Result<CrossingTree> {
    let k0 = if n_warmup == 0 && policy == Delta0Policy::Latticed { 0 } else { chain_offset(ks, n_warmup, policy) };
    let walk: Vec<i64> = ks[n_warmup..].iter().map(|k| k - k0).collect();
    build_tree_from_walk(&walk, delta, k0 as f64 * delta)
}

/// Offset for a sampled path and the time the tree may start after.
fn path_offset(s: &TickSeries, delta: f64, n_warmup: usize, policy: Delta0Policy) -> Result<(f64, f64)> {
    if n_warmup == 0 {
        let d0 = match policy {
            Delta0Policy::First => s.values()[0],
            _ => 0.0,
        };
        return Ok((d0, f64::NEG_INFINITY));
    }
    let (mean, through) = latticised_mean(s, delta, n_warmup)?;
    let d0 = match policy {
        Delta0Policy::Zero => 0.0,
        Delta0Policy::First => s.interpolated().interpolate_at(through)?,
        Delta0Policy::Latticed => mean,
    };
    Ok((d0, through))
}

fn study_delta(cfg: &StudyConfig, spec: &ProcessSpec) -> Result<f64> {
    if let Some(d) = cfg.delta {
        return Ok(d);
    }
    match spec {
        ProcessSpec::Bm | ProcessSpec::BmDrift { .. } => {
            crate::calibration::delta_closed_form(spec, cfg.n_crossings, 5.0)
        }
        ProcessSpec::Ou { alpha, sigma } => crate::calibration::delta_ou(*alpha, *sigma, cfg.n_crossings, 5.0),
        _ => Err(Error::Config(format!("{} needs an explicit delta (see the calibrate command)", spec.name()))),
    }
}

/// Per-path output of a study.
struct PathResult {
    outcomes: Vec<TestOutcome>,
    n_z: Vec<usize>,
    n_v: Vec<usize>,
    mean_dur: Vec<Option<f64>>,
}

fn evaluate_tree(cfg: &StudyConfig, tree: &CrossingTree, cv: &CvSet, rng: &mut SimRng) -> Result<PathResult> {
    let mut outcomes = Vec::with_capacity(cfg.tests.len() * cfg.levels.len());
    let mut n_z = Vec::new();
    let mut n_v = Vec::new();
    let mut mean_dur = Vec::new();
    for &l in &cfg.levels {
        for &t in &cfg.tests {
            outcomes.push(apply_test(t, tree, l, cv, rng)?);
        }
        n_z.push(tree.z(l).len());
        n_v.push(tree.v(l).len());
        mean_dur.push(tree.level_stats(l).ok().and_then(|s| s.mean_duration_prev_level));
    }
    Ok(PathResult { outcomes, n_z, n_v, mean_dur })
}

fn simulate_tree(
    cfg: &StudyConfig,
    spec: &ProcessSpec,
    delta: f64,
    ctx: &SimContext,
    rng: &mut SimRng,
) -> Result<Vec<CrossingTree>> {
    let total = cfg.n_warmup + cfg.n_crossings;
    match spec {
        ProcessSpec::Fbm { .. } => {
            let g = ctx.fbm.as_ref().expect("fbm generator");
            let (a, b) = g.path_pair(cfg.fbm_gamma, rng)?;
            [a, b]
                .iter()
                .map(|s| {
                    let (d0, through) = path_offset(s, delta, cfg.n_warmup, cfg.delta0_policy)?;
                    let opts = TreeOptions { start_after: through, max_level0: Some(cfg.n_crossings) };
                    let tree = build_tree_with(&s.interpolated(), delta, d0, &opts)?;
                    if tree.n_level0() < cfg.n_crossings {
                        return Err(Error::TooFewCrossings(tree.n_level0()));
                    }
                    Ok(tree)
                })
                .collect()
        }
        ProcessSpec::Feller { .. } => {
            let k = ctx.kernel.as_ref().expect("kernel");
            let run = simulate_feller_crossings(k, total, cfg.milstein_dt, rng)?;
            Ok(vec![tree_from_chain(&run.chain.ks, delta, cfg.n_warmup, cfg.delta0_policy)?])
        }
        _ => {
            let k = ctx.kernel.as_ref().expect("kernel");
            let chain = simulate_markov_crossings(k, total, &ctx.start, rng)?;
            Ok(vec![tree_from_chain(&chain.ks, delta, cfg.n_warmup, cfg.delta0_policy)?])
        }
    }
}

struct SimContext {
    kernel: Option<ChainKernel>,
    start: StartLaw,
    fbm: Option<FbmGenerator>,
}

fn run_study(cfg: &StudyConfig, cv: &CvSet, title: &str) -> Result<StudyReport> {
    cfg.validate()?;
    let spec = cfg.process.ok_or_else(|| Error::Config("study needs a process".into()))?;
    let delta = study_delta(cfg, &spec)?;
    let ctx = match spec {
        ProcessSpec::Fbm { hurst, sigma2 } => SimContext {
            kernel: None,
            start: StartLaw::Point(0),
            fbm: Some(FbmGenerator::new(hurst, sigma2, cfg.fbm_steps)?),
        },
        ProcessSpec::Ou { alpha, sigma } => SimContext {
            kernel: Some(ChainKernel::for_spec(spec, delta)?),
            start: StartLaw::ou_stationary(alpha, sigma, delta)?,
            fbm: None,
        },
        _ => SimContext { kernel: Some(ChainKernel::for_spec(spec, delta)?), start: StartLaw::Point(0), fbm: None },
    };
    // FBM draws two independent paths per generator call.
    let per_call = if matches!(spec, ProcessSpec::Fbm { .. }) { 2 } else { 1 };
    let calls = cfg.n_paths.div_ceil(per_call);
    let batches: Vec<Vec<PathResult>> = (0..calls)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, &[tag("study"), i as u64]);
            let trees = simulate_tree(cfg, &spec, delta, &ctx, &mut rng)
                .map_err(|e| Error::Simulation { path: i * per_call, reason: e.to_string() })?;
            trees
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    let mut trng = rng_for(cfg.seed, &[tag("tests"), (i * per_call + j) as u64]);
                    evaluate_tree(cfg, t, cv, &mut trng)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let results: Vec<PathResult> = batches.into_iter().flatten().take(cfg.n_paths).collect();
    Ok(StudyReport::aggregate(
        title,
        cfg,
        spec,
        delta,
        &results.iter().map(|r| (&r.outcomes, &r.n_z, &r.n_v, &r.mean_dur)).collect::<Vec<_>>(),
    ))
}

/// Null study: the process must be a continuous local martingale (BM, or FBM with H = 1/2).
pub fn run_type1_study(cfg: &StudyConfig, cv: &CvSet) -> Result<StudyReport> {
    require_null_process(cfg)?;
    run_study(cfg, cv, "type1")
}

pub fn require_null_process(cfg: &StudyConfig) -> Result<()> {
    match cfg.process {
        Some(ProcessSpec::Bm) => Ok(()),
        Some(ProcessSpec::Fbm { hurst, .. }) if hurst == 0.5 => Ok(()),
        Some(p) => Err(Error::Config(format!("{} is not a null process; use the power study", p.name()))),
        None => Err(Error::Config("study needs a process".into())),
    }
}

pub fn run_power_study(cfg: &StudyConfig, cv: &CvSet) -> Result<StudyReport> {
    run_study(cfg, cv, "power")
}

/// Per-level tests of one observed series.
pub fn analyze_series(series: &TickSeries, cfg: &StudyConfig, cv: &CvSet) -> Result<DatasetReport> {
    cfg.validate()?;
    let s = if cfg.log_transform { log_transform(series)? } else { series.clone() };
    let (delta, fallback) = match cfg.delta {
        Some(d) => (d, false),
        None => select_base_scale(&s)?,
    };
    let (delta0, through) = path_offset(&s, delta, cfg.n_warmup, cfg.delta0_policy)?;
    let tree = build_tree(&s.interpolated(), delta, delta0, through)?;
    let mut rng = rng_for(cfg.seed, &[tag("analyze")]);
    let mut levels = Vec::new();
    for l in 0..=tree.max_level() {
        let stats = tree.level_stats(l)?;
        let outcomes = cfg.tests.iter().map(|&t| apply_test(t, &tree, l, cv, &mut rng)).collect::<Result<Vec<_>>>()?;
        levels.push(LevelReport {
            level: l,
            n_z: stats.n_z,
            n_v: stats.n_v,
            mean_duration_prev_level: stats.mean_duration_prev_level,
            outcomes,
        });
    }
    Ok(DatasetReport {
        source: s.source.clone(),
        n_ticks: s.len(),
        collapsed: 0,
        log_transform: cfg.log_transform,
        delta,
        delta_from_smallest_increment: fallback,
        delta0,
        delta0_policy: cfg.delta0_policy,
        n_warmup: cfg.n_warmup,
        warmup_consumed_through: through.is_finite().then_some(through),
        n_level0: tree.n_level0(),
        pct_multiple_ge2: tree.multiple_crossing_pct(2),
        pct_multiple_ge4: tree.multiple_crossing_pct(4),
        levels,
    })
}

/// Loads `cfg.dataset` and analyses it.
pub fn analyze_dataset(cfg: &StudyConfig, cv: &CvSet) -> Result<DatasetReport> {
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("analyze needs a dataset".into()))?;
    let (s, load) = load_ticks(path, &TickFormat::default())?;
    let mut rep = analyze_series(&s, cfg, cv)?;
    rep.collapsed = load.collapsed;
    Ok(rep)
}

/// QV test rejection rates for each `c`, with every path reused across the sweep.
pub fn run_qv_study(cfg: &StudyConfig, c_values: &[f64]) -> Result<QvReport> {
    if c_values.is_empty() {
        return Err(Error::Config("empty c list".into()));
    }
    if cfg.n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    if let Some(c) = c_values.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::Config(format!("c must be positive, got {c}")));
    }
    let per_path: Vec<Vec<(TestOutcome, TestOutcome, TestOutcome, usize)>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(cfg.seed, &[tag("qv"), p as u64]);
            let s = match cfg.qv_source {
                QvSource::Bm => bm_grid_path(cfg.qv_steps, cfg.qv_dt, &mut rng)?,
                QvSource::ExpMartingale => exp_martingale_path(cfg.qv_steps, cfg.qv_dt, &mut rng)?,
            };
            c_values
                .iter()
                .map(|&c| {
                    let (o, n) = qv_tests(&s, c, cfg.qv_drop_last)?;
                    Ok((o.ks, o.cvm, o.sm, n))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Simulation { path: p, reason: e.to_string() })
        })
        .collect::<Result<_>>()?;
    let rows = c_values
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let pick = |f: &dyn Fn(&(TestOutcome, TestOutcome, TestOutcome, usize)) -> &TestOutcome| {
                RateCell::from_outcomes(per_path.iter().map(|v| f(&v[j])), cfg.n_paths)
            };
            QvRow {
                c,
                ks: pick(&|x| &x.0),
                cvm: pick(&|x| &x.1),
                sm: pick(&|x| &x.2),
                mean_n: per_path.iter().map(|v| v[j].3 as f64).sum::<f64>() / cfg.n_paths as f64,
            }
        })
        .collect();
    Ok(QvReport {
        source: cfg.qv_source,
        n_paths: cfg.n_paths,
        n_steps: cfg.qv_steps,
        dt: cfg.qv_dt,
        drop_last: cfg.qv_drop_last,
        seed: cfg.seed,
        rows,
    })
}
