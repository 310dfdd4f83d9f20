//! `key=value` configuration files. Keys mirror the command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{Format, StudyConfig};
use crate::error::{Error, Result};
use crate::outcome::TestId;
use crate::sim::ProcessSpec;

/// Raw settings, keyed by flag name without the leading dashes.
pub type Settings = BTreeMap<String, String>;

/// Parses `key=value` lines. `#` starts a comment; blank lines are ignored; `_` in keys reads as `-`.
pub fn parse_config_str(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{raw}'", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<Settings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

fn num<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<Option<T>> {
    s.get(key).map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))).transpose()
}

fn need(s: &Settings, key: &str, process: &str) -> Result<f64> {
    num(s, key)?.ok_or_else(|| Error::Config(format!("process {process} needs --{key}")))
}

fn flag(s: &Settings, key: &str) -> Result<Option<bool>> {
    s.get(key)
        .map(|v| match v.as_str() {
            "" | "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!("{key}: expected a boolean, got '{other}'"))),
        })
        .transpose()
}

/// Parses a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{x}'"))))
        .collect()
}

fn process_from(s: &Settings) -> Result<Option<ProcessSpec>> {
    let Some(kind) = s.get("process") else { return Ok(None) };
    let spec = match kind.as_str() {
        "bm" => ProcessSpec::Bm,
        "bm-drift" | "bm_drift" | "drift" => ProcessSpec::BmDrift { alpha: need(s, "alpha", kind)? },
        "ou" => ProcessSpec::Ou { alpha: need(s, "alpha", kind)?, sigma: num(s, "sigma")?.unwrap_or(1.0) },
        "feller" => ProcessSpec::Feller {
            kappa: need(s, "kappa", kind)?,
            mu: num(s, "mu")?.unwrap_or(0.2),
            sigma: num(s, "sigma")?.unwrap_or(1.0),
        },
        "fbm" => ProcessSpec::Fbm { hurst: need(s, "hurst", kind)?, sigma2: num(s, "sigma2")?.unwrap_or(1.0 / 250.0) },
        other => return Err(Error::Config(format!("unknown process '{other}' (bm|bm-drift|ou|feller|fbm)"))),
    };
    spec.validate()?;
    Ok(Some(spec))
}

/// Keys consumed by the command line rather than the study configuration.
pub const FRONT_END_KEYS: [&str; 8] = ["format", "c-list", "steps", "t0", "n-mc", "config", "lengths", "qv-c"];

const STUDY_KEYS: [&str; 27] = [
    "process",
    "alpha",
    "sigma",
    "kappa",
    "mu",
    "hurst",
    "sigma2",
    "dataset",
    "n-paths",
    "n-crossings",
    "delta",
    "delta0-policy",
    "tests",
    "levels",
    "seed",
    "cv-dir",
    "cv-n-mc",
    "cv-seed",
    "out",
    "n-warmup",
    "log-transform",
    "milstein-dt",
    "fbm-gamma",
    "fbm-steps",
    "qv-source",
    "qv-steps",
    "qv-dt",
];

/// Builds a study configuration from settings, starting from the defaults.
pub fn study_config_from(s: &Settings) -> Result<StudyConfig> {
    if let Some(k) = s.keys().find(|k| {
        !STUDY_KEYS.contains(&k.as_str()) && !FRONT_END_KEYS.contains(&k.as_str()) && k.as_str() != "qv-drop-last"
    }) {
        return Err(Error::Config(format!("unknown setting '{k}'")));
    }
    let mut c = StudyConfig { process: process_from(s)?, ..StudyConfig::default() };
    if let Some(v) = s.get("dataset") {
        c.dataset = Some(PathBuf::from(v));
    }
    if let Some(v) = num(s, "n-paths")? {
        c.n_paths = v;
    }
    if let Some(v) = num(s, "n-crossings")? {
        c.n_crossings = v;
    }
    c.delta = num(s, "delta")?;
    if let Some(v) = s.get("delta0-policy") {
        c.delta0_policy = v.parse()?;
    }
    if let Some(v) = s.get("tests") {
        c.tests = if v.trim() == "all" {
            TestId::TREE_DEFAULT.to_vec()
        } else {
            v.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::parse).collect::<Result<_>>()?
        };
    }
    if let Some(v) = s.get("levels") {
        c.levels = parse_list("levels", v)?;
    }
    if let Some(v) = num(s, "seed")? {
        c.seed = v;
    }
    if let Some(v) = s.get("cv-dir") {
        c.cv_dir = Some(PathBuf::from(v));
    }
    if let Some(v) = num(s, "cv-n-mc")? {
        c.cv_n_mc = v;
    }
    if let Some(v) = num(s, "cv-seed")? {
        c.cv_seed = v;
    }
    if let Some(v) = s.get("out") {
        c.out = Some(PathBuf::from(v));
    }
    if let Some(v) = num(s, "n-warmup")? {
        c.n_warmup = v;
    }
    if let Some(v) = flag(s, "log-transform")? {
        c.log_transform = v;
    }
    if let Some(v) = num(s, "milstein-dt")? {
        c.milstein_dt = v;
    }
    if let Some(v) = num(s, "fbm-gamma")? {
        c.fbm_gamma = v;
    }
    if let Some(v) = num(s, "fbm-steps")? {
        c.fbm_steps = v;
    }
    if let Some(v) = s.get("qv-source") {
        c.qv_source = v.parse()?;
    }
    if let Some(v) = num(s, "qv-steps")? {
        c.qv_steps = v;
    }
    if let Some(v) = num(s, "qv-dt")? {
        c.qv_dt = v;
    }
    if let Some(v) = flag(s, "qv-drop-last")? {
        c.qv_drop_last = v;
    }
    Ok(c)
}

/// Output format from settings, defaulting to text.
pub fn format_from(s: &Settings) -> Result<Format> {
    s.get("format").map_or(Ok(Format::Text), |v| v.parse())
}
