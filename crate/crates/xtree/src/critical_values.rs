//! Monte Carlo critical values for small-sample statistics.
//!
//! The quantile at level `q` is the order statistic with 1-based index
//! `⌈q·n_mc⌉`. Each length uses its own derived seed so tables are identical
//! for any degree of parallelism.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dist_tests::{chi2_statistic, ks_statistic_from_counts};
use crate::error::{Error, Result};
use crate::indep_tests::{autocorr_statistic, dixon_s2, larsen_z, obrien76_key, OBRIEN76_TABLE_MAX};
use crate::rng::{bernoulli_bits, geometric_counts, null_z, rng_for, tag, SimRng};

pub const GENERATOR_VERSION: u32 = 1;
pub const MIN_N_MC: usize = 10_000;
pub const DEFAULT_N_MC: usize = 100_000;
pub const DEFAULT_SEED: u64 = 20_100_401;

/// Tests served by tables.
pub const TABLE_TESTS: [&str; 6] = ["chi2", "autocorr", "ks", "larsen", "obrien76", "twos"];

#[derive(Debug, Clone, PartialEq)]
pub struct CvTable {
    pub test_id: String,
    pub seed: u64,
    pub n_mc: usize,
    pub version: u32,
    entries: BTreeMap<(usize, u64), f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvLookup {
    pub value: f64,
    pub fallback: bool,
}

fn qkey(q: f64) -> u64 {
    (q * 1e9).round() as u64
}

/// Default lengths and quantiles per test.
pub fn default_layout(test_id: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let two_sided = vec![0.025, 0.975];
    Ok(match test_id {
        "chi2" => ((14..=39).collect(), vec![0.95]),
        "autocorr" => ((5..=100).collect(), two_sided),
        "ks" => ((2..=1000).collect(), vec![0.95]),
        "larsen" => ((3..=80).collect(), two_sided),
        "obrien76" => {
            let mut keys = Vec::new();
            for minor in 2..=OBRIEN76_TABLE_MAX {
                for major in minor..=OBRIEN76_TABLE_MAX {
                    keys.push(obrien76_key(minor, major));
                }
            }
            (keys, two_sided)
        }
        "twos" => ((1..=100).collect(), vec![0.025, 0.05, 0.95, 0.975]),
        other => return Err(Error::UnknownTest(other.to_string())),
    })
}

fn statistic_sampler(test_id: &str) -> Result<fn(&mut SimRng, usize, &mut Scratch) -> Option<f64>> {
    Ok(match test_id {
        "chi2" => |rng, n, s| {
            s.z.clear();
            s.z.extend((0..n).map(|_| null_z(rng)));
            Some(chi2_statistic(&s.z, 3))
        },
        "autocorr" => |rng, n, s| {
            s.z.clear();
            s.z.extend((0..n).map(|_| null_z(rng)));
            autocorr_statistic(&s.z).ok()
        },
        "ks" => |rng, n, s| {
            geometric_counts(rng, n, &mut s.counts);
            Some(ks_statistic_from_counts(&s.counts, n))
        },
        "larsen" => |rng, n, s| {
            bernoulli_bits(rng, n, &mut s.bits);
            larsen_z(&s.bits)
        },
        "obrien76" => |rng, key, s| {
            let (minor, major) = (key / 1000, key % 1000);
            s.bits.clear();
            s.bits.extend(std::iter::repeat_n(0u8, minor));
            s.bits.extend(std::iter::repeat_n(1u8, major));
            s.bits.shuffle(rng);
            Some(dixon_s2(&s.bits))
        },
        "twos" => |rng, n, _| Some(crate::rng::binomial_half(rng, n) as f64),
        other => return Err(Error::UnknownTest(other.to_string())),
    })
}

#[derive(Default)]
struct Scratch {
    z: Vec<u32>,
    counts: Vec<usize>,
    bits: Vec<u8>,
}

/// Index into a sorted sample of the empirical `q` quantile.
pub fn quantile_index(q: f64, n_mc: usize) -> usize {
    let idx = (q * n_mc as f64 - 1e-9).ceil().max(1.0) as usize;
    idx.min(n_mc) - 1
}

pub fn generate_cv_table(
    test_id: &str,
    lengths: &[usize],
    quantiles: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<CvTable> {
    if n_mc < MIN_N_MC {
        return Err(Error::Table(format!("n_mc = {n_mc} is below the minimum {MIN_N_MC}")));
    }
    let sampler = statistic_sampler(test_id)?;
    let test_tag = tag(test_id);
    let rows: Vec<Vec<((usize, u64), f64)>> = lengths
        .par_iter()
        .map(|&n| {
            let mut rng = rng_for(seed, &[test_tag, n as u64]);
            let mut scratch = Scratch::default();
            let mut stats = Vec::with_capacity(n_mc);
            while stats.len() < n_mc {
                if let Some(s) = sampler(&mut rng, n, &mut scratch) {
                    stats.push(s);
                }
            }
            stats.sort_by(f64::total_cmp);
            quantiles.iter().map(|&q| ((n, qkey(q)), stats[quantile_index(q, n_mc)])).collect()
        })
        .collect();
    Ok(CvTable {
        test_id: test_id.to_string(),
        seed,
        n_mc,
        version: GENERATOR_VERSION,
        entries: rows.into_iter().flatten().collect(),
    })
}

pub fn lookup_cv(table: &CvTable, n: usize, q: f64) -> Result<CvLookup> {
    table.lookup(n, q)
}

impl CvTable {
    pub fn lookup(&self, n: usize, q: f64) -> Result<CvLookup> {
        if let Some(&value) = self.entries.get(&(n, qkey(q))) {
            return Ok(CvLookup { value, fallback: false });
        }
        if self.test_id == "ks" {
            if let Some(max_n) = self.max_n() {
                if n > max_n {
                    if let Some(&value) = self.entries.get(&(max_n, qkey(q))) {
                        return Ok(CvLookup { value, fallback: true });
                    }
                }
            }
        }
        Err(Error::MissingCriticalValue { test: self.test_id.clone(), n, q })
    }

    pub fn max_n(&self) -> Option<usize> {
        self.entries.keys().map(|k| k.0).max()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows as `(n, q, value)` in key order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.entries.iter().map(|(&(n, q), &v)| (n, q as f64 / 1e9, v))
    }

    pub fn file_name(&self) -> String {
        table_file_name(&self.test_id, self.version, self.seed, self.n_mc)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# critical-value table");
        let _ = writeln!(s, "test_id={}", self.test_id);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "n_mc={}", self.n_mc);
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "n,q,value");
        for (n, q, v) in self.rows() {
            let _ = writeln!(s, "{n},{q},{v:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<CvTable> {
        let mut header: BTreeMap<&str, &str> = BTreeMap::new();
        let mut entries = BTreeMap::new();
        let mut in_rows = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_rows {
                if line == "n,q,value" {
                    in_rows = true;
                } else if let Some((k, v)) = line.split_once('=') {
                    header.insert(k.trim(), v.trim());
                } else {
                    return Err(Error::Table(format!("line {}: bad header {line:?}", i + 1)));
                }
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Table(format!("line {}: bad row {line:?}", i + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let n: usize = parts[0].parse().map_err(|_| bad())?;
            let q: f64 = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            entries.insert((n, qkey(q)), v);
        }
        let get = |k: &str| header.get(k).copied().ok_or_else(|| Error::Table(format!("missing header field {k}")));
        let num =
            |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Table(format!("bad header field {k}"))) };
        Ok(CvTable {
            test_id: get("test_id")?.to_string(),
            seed: num("seed")?,
            n_mc: num("n_mc")? as usize,
            version: num("version")? as u32,
            entries,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CvTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CvTable::from_text(&text)
    }
}

pub fn table_file_name(test_id: &str, version: u32, seed: u64, n_mc: usize) -> String {
    format!("{test_id}-v{version}-seed{seed}-n{n_mc}.cvt")
}

/// The tables used by the tree tests, keyed by test id.
#[derive(Debug, Clone, Default)]
pub struct CvSet {
    tables: BTreeMap<String, CvTable>,
}

impl CvSet {
    pub fn get(&self, test_id: &str) -> Option<&CvTable> {
        self.tables.get(test_id)
    }

    pub fn insert(&mut self, table: CvTable) {
        self.tables.insert(table.test_id.clone(), table);
    }

    /// Generates the default-layout tables in memory.
    pub fn generate(tests: &[&str], n_mc: usize, seed: u64) -> Result<CvSet> {
        let mut set = CvSet::default();
        for t in tests {
            let (lengths, qs) = default_layout(t)?;
            set.insert(generate_cv_table(t, &lengths, &qs, n_mc, seed)?);
        }
        Ok(set)
    }

    /// Loads each table from `dir` if its content-addressed file exists, otherwise
    /// generates it with the default layout and stores it there.
    pub fn ensure(dir: impl AsRef<Path>, tests: &[&str], n_mc: usize, seed: u64) -> Result<CvSet> {
        let dir = dir.as_ref();
        let mut set = CvSet::default();
        for t in tests {
            let path = dir.join(table_file_name(t, GENERATOR_VERSION, seed, n_mc));
            let table = if path.exists() {
                CvTable::load(&path)?
            } else {
                let (lengths, qs) = default_layout(t)?;
                let table = generate_cv_table(t, &lengths, &qs, n_mc, seed)?;
                table.save(dir)?;
                table
            };
            set.insert(table);
        }
        Ok(set)
    }

    /// The tables needed by the tree tests.
    pub fn tree_tests() -> [&'static str; 5] {
        ["chi2", "autocorr", "ks", "larsen", "obrien76"]
    }
}
