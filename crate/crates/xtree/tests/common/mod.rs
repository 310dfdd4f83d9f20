#![allow(dead_code)]

use std::path::PathBuf;

use xtree::critical_values::{CvSet, DEFAULT_N_MC, DEFAULT_SEED, TABLE_TESTS};

/// One crossing found by the exhaustive scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCrossing {
    pub start: f64,
    pub end: f64,
    pub start_k: i64,
    pub up: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ScanTree {
    pub levels: Vec<Vec<ScanCrossing>>,
    pub z: Vec<Vec<u32>>,
    pub v: Vec<Vec<u8>>,
}

/// Level-`l` crossings of a unit-step walk `(time, k)`, found by scanning the whole walk
/// for first passages between neighbouring points of `2^l ℤ`.
fn scan_level(walk: &[(f64, i64)], l: usize) -> Vec<ScanCrossing> {
    let step = 1i64 << l;
    let Some(first) = walk.iter().position(|p| p.1.rem_euclid(step) == 0) else { return Vec::new() };
    let mut out = Vec::new();
    let (mut t0, mut k0) = walk[first];
    for &(t, k) in &walk[first + 1..] {
        if (k - k0).abs() == step {
            out.push(ScanCrossing { start: t0, end: t, start_k: k0, up: k > k0 });
            t0 = t;
            k0 = k;
        }
    }
    out
}

/// Brute-force crossing tree of a unit-step walk.
pub fn scan_tree(walk: &[(f64, i64)]) -> ScanTree {
    let mut levels = Vec::new();
    for l in 0.. {
        let c = scan_level(walk, l);
        if c.is_empty() {
            break;
        }
        levels.push(c);
    }
    let mut z = vec![Vec::new()];
    let mut v = Vec::new();
    for l in 0..levels.len() {
        let mut zs = Vec::new();
        let mut vs = Vec::new();
        if let Some(parents) = levels.get(l + 1) {
            for p in parents {
                let kids: Vec<&ScanCrossing> =
                    levels[l].iter().filter(|c| c.start >= p.start && c.end <= p.end).collect();
                zs.push(kids.len() as u32);
                for pair in kids[..kids.len() - 2].chunks(2) {
                    vs.push(if pair[0].up { 0 } else { 1 });
                }
            }
            z.push(zs);
        }
        v.push(vs);
    }
    z.truncate(levels.len());
    ScanTree { levels, z, v }
}

/// Unit-step refinement of an integer-valued path observed at `times`: every
/// lattice point passed inside a segment gets its linearly interpolated time.
pub fn refine(times: &[f64], values: &[i64]) -> Vec<(f64, i64)> {
    let mut out = vec![(times[0], values[0])];
    for i in 1..values.len() {
        let (a, b) = (values[i - 1], values[i]);
        let n = (b - a).abs();
        for j in 1..=n {
            let t = times[i - 1] + (times[i] - times[i - 1]) * j as f64 / n as f64;
            out.push((t, a + j * (b - a).signum()));
        }
    }
    out
}

/// Critical-value tables shared by the integration tests, cached under the target tmpdir.
pub fn cv_tables() -> CvSet {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cv-tables");
    std::fs::create_dir_all(&dir).unwrap();
    CvSet::ensure(&dir, &TABLE_TESTS, DEFAULT_N_MC, DEFAULT_SEED).unwrap()
}

pub fn cv_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cv-tables");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
