use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xtree::calibration::{
    delta_closed_form, delta_grid, delta_mc_feller, delta_mc_generic, delta_ou, CalibrationReport,
};
use xtree::critical_values::{default_layout, generate_cv_table, DEFAULT_N_MC, DEFAULT_SEED, TABLE_TESTS};
use xtree::harness::{
    analyze_dataset, format_from, parse_config_file, parse_list, require_null_process, run_power_study, run_qv_study,
    run_type1_study, study_config_from, Render, Settings,
};
use xtree::sim::simulate_fbm_path;
use xtree::{Error, ProcessSpec, Result};

#[derive(Parser)]
#[command(name = "xtree", version, about = "Crossing-tree tests of the continuous martingale hypothesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rejection rates under a null process (BM, or FBM with H = 0.5).
    Type1(StudyArgs),
    /// Rejection rates under an alternative process.
    Power(StudyArgs),
    /// Per-level tests of a tick dataset.
    Analyze(AnalyzeArgs),
    /// Quadratic-variation test rejection rates over a sweep of c.
    Qv(QvArgs),
    /// Chooses delta so that a path of length t0 has about n level-0 crossings.
    Calibrate(CalibrateArgs),
    /// Generates critical-value tables.
    GenCv(GenCvArgs),
}

#[derive(Args, Default)]
struct ProcessArgs {
    /// bm | bm-drift | ou | feller | fbm
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// text | csv | json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Default)]
struct TreeArgs {
    #[arg(long)]
    delta: Option<f64>,
    /// zero | first | latticed
    #[arg(long)]
    delta0_policy: Option<String>,
    /// Comma-separated test ids, or "all".
    #[arg(long)]
    tests: Option<String>,
    /// Comma-separated tree levels.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    cv_dir: Option<PathBuf>,
    #[arg(long)]
    cv_n_mc: Option<usize>,
    #[arg(long)]
    n_warmup: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long)]
    n_crossings: Option<usize>,
    #[arg(long)]
    milstein_dt: Option<f64>,
    #[arg(long)]
    fbm_steps: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV with header `time,value`.
    dataset: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long)]
    log_transform: bool,
}

#[derive(Args)]
struct QvArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated c values.
    #[arg(long)]
    c_list: Option<String>,
    /// bm | exp-martingale
    #[arg(long)]
    qv_source: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Drop the last normalised increment.
    #[arg(long)]
    drop_last: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    process: ProcessArgs,
    #[arg(long)]
    n_crossings: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    /// Feller step exponents m (dt = 10^-m), comma-separated.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    fbm_steps: Option<usize>,
}

#[derive(Args)]
struct GenCvArgs {
    /// Output directory.
    #[arg(long)]
    cv_dir: PathBuf,
    /// Comma-separated table ids (default: all).
    #[arg(long)]
    tests: Option<String>,
    #[arg(long, default_value_t = DEFAULT_N_MC)]
    n_mc: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        s.insert(key.to_string(), v.to_string());
    }
}

fn put_flag(s: &mut Settings, key: &str, v: bool) {
    if v {
        s.insert(key.to_string(), "true".into());
    }
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => parse_config_file(p)?,
            None => Settings::new(),
        };
        put(&mut s, "seed", &self.seed);
        put(&mut s, "n-paths", &self.n_paths);
        put(&mut s, "out", &self.out.as_ref().map(|p| p.display().to_string()));
        put(&mut s, "format", &self.format);
        Ok(s)
    }
}

impl ProcessArgs {
    fn apply(&self, s: &mut Settings) {
        put(s, "process", &self.process);
        put(s, "alpha", &self.alpha);
        put(s, "sigma", &self.sigma);
        put(s, "kappa", &self.kappa);
        put(s, "mu", &self.mu);
        put(s, "hurst", &self.hurst);
        put(s, "sigma2", &self.sigma2);
    }
}

impl TreeArgs {
    fn apply(&self, s: &mut Settings) {
        put(s, "delta", &self.delta);
        put(s, "delta0-policy", &self.delta0_policy);
        put(s, "tests", &self.tests);
        put(s, "levels", &self.levels);
        put(s, "cv-dir", &self.cv_dir.as_ref().map(|p| p.display().to_string()));
        put(s, "cv-n-mc", &self.cv_n_mc);
        put(s, "n-warmup", &self.n_warmup);
    }
}

fn emit<R: Render>(report: &R, s: &Settings) -> Result<()> {
    let format = format_from(s)?;
    match s.get("out") {
        Some(path) => report.write_to(format, path.as_ref()),
        None => {
            print!("{}", report.render(format));
            Ok(())
        }
    }
}

fn study(a: &StudyArgs, power: bool) -> Result<()> {
    let mut s = a.common.settings()?;
    a.process.apply(&mut s);
    a.tree.apply(&mut s);
    put(&mut s, "n-crossings", &a.n_crossings);
    put(&mut s, "milstein-dt", &a.milstein_dt);
    put(&mut s, "fbm-steps", &a.fbm_steps);
    let cfg = study_config_from(&s)?;
    cfg.validate()?;
    if !power {
        require_null_process(&cfg)?;
    }
    let cv = cfg.load_tables()?;
    let report = if power { run_power_study(&cfg, &cv)? } else { run_type1_study(&cfg, &cv)? };
    emit(&report, &s)
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let mut s = a.common.settings()?;
    a.tree.apply(&mut s);
    put(&mut s, "dataset", &a.dataset.as_ref().map(|p| p.display().to_string()));
    put_flag(&mut s, "log-transform", a.log_transform);
    let cfg = study_config_from(&s)?;
    cfg.validate()?;
    if cfg.dataset.is_none() {
        return Err(Error::Config("analyze needs a dataset".into()));
    }
    let cv = cfg.load_tables()?;
    emit(&analyze_dataset(&cfg, &cv)?, &s)
}

fn qv(a: &QvArgs) -> Result<()> {
    let mut s = a.common.settings()?;
    put(&mut s, "c-list", &a.c_list);
    put(&mut s, "qv-source", &a.qv_source);
    put(&mut s, "qv-steps", &a.steps);
    put(&mut s, "qv-dt", &a.dt);
    put_flag(&mut s, "qv-drop-last", a.drop_last);
    let cfg = study_config_from(&s)?;
    let cs: Vec<f64> = parse_list("c-list", s.get("c-list").map_or("20,60,100,140", String::as_str))?;
    emit(&run_qv_study(&cfg, &cs)?, &s)
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let mut s = a.common.settings()?;
    a.process.apply(&mut s);
    put(&mut s, "n-crossings", &a.n_crossings);
    put(&mut s, "t0", &a.t0);
    put(&mut s, "steps", &a.steps);
    put(&mut s, "fbm-steps", &a.fbm_steps);
    let cfg = study_config_from(&s)?;
    let spec = cfg.process.ok_or_else(|| Error::Config("calibrate needs --process".into()))?;
    let n = cfg.n_crossings;
    let t0: f64 = match s.get("t0") {
        Some(v) => v.parse().map_err(|_| Error::Config(format!("t0: cannot parse '{v}'")))?,
        None => 5.0,
    };
    let n_paths = if s.contains_key("n-paths") { cfg.n_paths } else { 500 };
    let mut report = CalibrationReport {
        process: spec,
        target_n: n,
        t0,
        method: String::new(),
        steps: Vec::new(),
        fit: None,
        delta: f64::NAN,
        achieved: None,
        warning: None,
    };
    match spec {
        ProcessSpec::Bm | ProcessSpec::BmDrift { .. } => {
            report.method = "closed form".into();
            report.delta = delta_closed_form(&spec, n, t0)?;
        }
        ProcessSpec::Ou { alpha, sigma } => {
            report.method = "stationary lattice root solve".into();
            report.delta = delta_ou(alpha, sigma, n, t0)?;
        }
        ProcessSpec::Feller { kappa, mu, sigma } => {
            let ms: Vec<u32> = parse_list("steps", s.get("steps").map_or("3,4,5", String::as_str))?;
            let c = delta_mc_feller(kappa, mu, sigma, n, t0, &ms, n_paths, cfg.seed)?;
            report.method = format!("monte carlo, {n_paths} paths, step extrapolation");
            report.delta = c.delta();
            report.steps = c.steps.clone();
            report.fit = c.fit.clone();
            report.warning = c.warning.clone();
        }
        ProcessSpec::Fbm { hurst, sigma2 } => {
            let gamma = cfg.fbm_gamma;
            let steps = cfg.fbm_steps;
            if (steps as f64) * gamma < t0 {
                return Err(Error::Config(format!("fbm path covers {} < t0 = {t0}", steps as f64 * gamma)));
            }
            let centre = sigma2.sqrt() * (t0 / n as f64).powf(hurst);
            let grid = delta_grid(0.5 * centre, 2.0 * centre, 64);
            let sampler = move |rng: &mut xtree::rng::SimRng| simulate_fbm_path(hurst, sigma2, steps, gamma, rng);
            let c = delta_mc_generic(sampler, n, t0, &grid, n_paths, cfg.seed)?;
            report.method = format!("monte carlo, {n_paths} paths, se {:.2e}", c.delta_se);
            report.delta = c.delta;
        }
    }
    match s.get("out") {
        Some(p) => report.save(p),
        None => {
            if format_from(&s)? == xtree::harness::Format::Json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(())
        }
    }
}

fn gen_cv(a: &GenCvArgs) -> Result<()> {
    let ids: Vec<String> = match &a.tests {
        Some(t) => t.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
        None => TABLE_TESTS.iter().map(|t| t.to_string()).collect(),
    };
    for id in &ids {
        let (lengths, qs) = default_layout(id)?;
        let table = generate_cv_table(id, &lengths, &qs, a.n_mc, a.seed)?;
        let path = table.save(&a.cv_dir)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Type1(a) => study(a, false),
        Command::Power(a) => study(a, true),
        Command::Analyze(a) => analyze(a),
        Command::Qv(a) => qv(a),
        Command::Calibrate(a) => calibrate(a),
        Command::GenCv(a) => gen_cv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
