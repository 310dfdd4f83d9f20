//! Crossing trees over the nested lattices `δ₀ + δ·2ˡ·ℤ`.
//!
//! Lattice arithmetic is done in integer units of δ: a level-`l` crossing
//! moves the lattice index by exactly `2ˡ`, so the crossing-size invariant
//! holds exactly. Level 0 is found by first passage on the interpolated
//! path; every higher level is derived from the level below.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series_model::{InterpolatedPath, TickSeries};

const SNAP: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub start_time: f64,
    pub end_time: f64,
    pub start_value: f64,
    pub orientation: i8,
    pub level: usize,
}

impl Crossing {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// A lattice visit: time and lattice index in units of δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LatticePoint {
    pub time: f64,
    pub k: i64,
    pub segment: usize,
}

/// Options controlling where the tree starts and how much of the path it uses.
#[derive(Debug, Clone, Copy)]
pub struct TreeOptions {
    pub start_after: f64,
    pub max_level0: Option<usize>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { start_after: f64::NEG_INFINITY, max_level0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub n_z: usize,
    pub n_v: usize,
    pub mean_duration_prev_level: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingTree {
    pub delta: f64,
    pub delta0: f64,
    start_time: f64,
    start_value: f64,
    levels: Vec<Vec<Crossing>>,
    z: Vec<Vec<u32>>,
    v: Vec<Vec<u8>>,
    /// For each level-0 crossing, how many level-0 crossings end in the same data segment.
    multiplicity: Vec<u32>,
}

fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() <= SNAP {
        r
    } else {
        u
    }
}

fn is_lattice(u: f64) -> bool {
    u == u.round()
}

/// First-passage kernel shared by [`build_tree`] and crossing extraction.
///
/// Returns the initial lattice hit followed by one point per level-0 crossing.
pub(crate) fn level0_points(
    path: &InterpolatedPath<'_>,
    delta: f64,
    delta0: f64,
    opts: &TreeOptions,
) -> Result<Vec<LatticePoint>> {
    let s = path.series();
    let (times, values) = (s.times(), s.values());
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let u: Vec<f64> = values.iter().map(|x| snap((x - delta0) / delta)).collect();
    let n = times.len();

    let t_begin = opts.start_after.max(times[0]);
    if t_begin > times[n - 1] {
        return Err(Error::NoLatticeHit(opts.start_after));
    }
    let mut seg = path.segment_of(t_begin);
    let u_begin = if t_begin == times[seg] {
        u[seg]
    } else if t_begin == times[n - 1] {
        u[n - 1]
    } else {
        let f = (t_begin - times[seg]) / (times[seg + 1] - times[seg]);
        snap(u[seg] + (u[seg + 1] - u[seg]) * f)
    };

    let hit_time = |seg: usize, target: f64| -> f64 {
        let (ua, ub) = (u[seg], u[seg + 1]);
        if target == ub {
            times[seg + 1]
        } else if target == ua {
            times[seg]
        } else {
            times[seg] + (target - ua) / (ub - ua) * (times[seg + 1] - times[seg])
        }
    };

    // Initial hit.
    let mut out = Vec::new();
    let init = if is_lattice(u_begin) {
        Some(LatticePoint { time: t_begin, k: u_begin as i64, segment: seg })
    } else {
        let mut found = None;
        let mut pos = u_begin;
        while seg + 1 < n {
            let ub = u[seg + 1];
            if ub > pos {
                let target = pos.floor() + 1.0;
                if ub >= target {
                    found = Some(LatticePoint { time: hit_time(seg, target), k: target as i64, segment: seg });
                    break;
                }
            } else if ub < pos {
                let target = pos.ceil() - 1.0;
                if ub <= target {
                    found = Some(LatticePoint { time: hit_time(seg, target), k: target as i64, segment: seg });
                    break;
                }
            }
            pos = ub;
            seg += 1;
        }
        found
    };
    let Some(first) = init else {
        return Err(Error::NoLatticeHit(opts.start_after));
    };
    out.push(first);
    let limit = opts.max_level0.unwrap_or(usize::MAX);
    let mut k = first.k;
    let mut seg = first.segment;
    'outer: while seg + 1 < n {
        let (ua, ub) = (u[seg], u[seg + 1]);
        if ub > ua {
            while ub >= (k + 1) as f64 {
                k += 1;
                out.push(LatticePoint { time: hit_time(seg, k as f64), k, segment: seg });
                if out.len() > limit {
                    break 'outer;
                }
            }
        } else if ub < ua {
            while ub <= (k - 1) as f64 {
                k -= 1;
                out.push(LatticePoint { time: hit_time(seg, k as f64), k, segment: seg });
                if out.len() > limit {
                    break 'outer;
                }
            }
        }
        seg += 1;
    }
    Ok(out)
}

/// Builds the crossing tree of `path` on the lattices `δ₀ + δ2ˡℤ`, starting at the
/// first lattice hit at or after `start_after`.
pub fn build_tree(path: &InterpolatedPath<'_>, delta: f64, delta0: f64, start_after: f64) -> Result<CrossingTree> {
    build_tree_with(path, delta, delta0, &TreeOptions { start_after, max_level0: None })
}

pub fn build_tree_with(
    path: &InterpolatedPath<'_>,
    delta: f64,
    delta0: f64,
    opts: &TreeOptions,
) -> Result<CrossingTree> {
    let pts = level0_points(path, delta, delta0, opts)?;
    CrossingTree::from_level0(&pts, delta, delta0)
}

/// Tree of a nearest-neighbour lattice walk observed at integer times.
///
/// `walk[i]` is the lattice index (in units of δ, relative to `delta0`) at
/// time `i`; consecutive entries must differ by exactly one.
pub fn build_tree_from_walk(walk: &[i64], delta: f64, delta0: f64) -> Result<CrossingTree> {
    if let Some(i) = walk.windows(2).position(|w| (w[1] - w[0]).abs() != 1) {
        return Err(Error::InvalidSeries(format!("walk step at index {} is not +-1", i + 1)));
    }
    let pts: Vec<LatticePoint> = walk
        .iter()
        .enumerate()
        .map(|(i, &k)| LatticePoint { time: i as f64, k, segment: i.saturating_sub(1) })
        .collect();
    CrossingTree::from_level0(&pts, delta, delta0)
}

impl CrossingTree {
    pub(crate) fn from_level0(pts: &[LatticePoint], delta: f64, delta0: f64) -> Result<CrossingTree> {
        if pts.len() < 3 {
            return Err(Error::TooFewCrossings(pts.len().saturating_sub(1)));
        }
        let value = |k: i64| delta0 + k as f64 * delta;

        let mut multiplicity = vec![0u32; pts.len() - 1];
        let mut i = 1;
        while i < pts.len() {
            let mut j = i;
            while j + 1 < pts.len() && pts[j + 1].segment == pts[i].segment {
                j += 1;
            }
            for m in &mut multiplicity[i - 1..j] {
                *m = (j - i + 1) as u32;
            }
            i = j + 1;
        }

        let mut levels: Vec<Vec<Crossing>> = Vec::new();
        let mut z: Vec<Vec<u32>> = vec![Vec::new()];
        let mut v: Vec<Vec<u8>> = Vec::new();

        // Points of the current level as (time, k).
        let mut cur: Vec<(f64, i64)> = pts.iter().map(|p| (p.time, p.k)).collect();
        let mut level = 0usize;
        loop {
            let crossings: Vec<Crossing> = cur
                .windows(2)
                .map(|w| Crossing {
                    start_time: w[0].0,
                    end_time: w[1].0,
                    start_value: value(w[0].1),
                    orientation: if w[1].1 > w[0].1 { 1 } else { -1 },
                    level,
                })
                .collect();
            if crossings.is_empty() {
                break;
            }
            levels.push(crossings);

            let step = 1i64 << (level + 1);
            let Some(i0) = cur.iter().position(|p| p.1.rem_euclid(step) == 0) else {
                v.push(Vec::new());
                break;
            };
            let mut next = vec![cur[i0]];
            let mut zs = Vec::new();
            let mut vs = Vec::new();
            let mut last = i0;
            for i in i0 + 1..cur.len() {
                let d = cur[i].1 - cur[last].1;
                if d.abs() == step {
                    zs.push((i - last) as u32);
                    let orient = |j: usize| cur[j].1 > cur[j - 1].1;
                    let mut j = last + 1;
                    while j + 1 < i {
                        match (orient(j), orient(j + 1)) {
                            (true, false) => vs.push(0),
                            (false, true) => vs.push(1),
                            _ => unreachable!("direct pair before the end of a crossing"),
                        }
                        j += 2;
                    }
                    debug_assert_eq!(orient(i - 1), d > 0);
                    debug_assert_eq!(orient(i), d > 0);
                    next.push(cur[i]);
                    last = i;
                }
            }
            v.push(vs);
            if zs.is_empty() {
                break;
            }
            z.push(zs);
            cur = next;
            level += 1;
        }
        while v.len() < levels.len() {
            v.push(Vec::new());
        }
        Ok(CrossingTree {
            delta,
            delta0,
            start_time: pts[0].time,
            start_value: value(pts[0].k),
            levels,
            z,
            v,
            multiplicity,
        })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn start_value(&self) -> f64 {
        self.start_value
    }

    pub fn crossings(&self, level: usize) -> &[Crossing] {
        self.levels.get(level).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Subcrossing counts `Z^l_k`; empty for level 0 and above the maximal level.
    pub fn z(&self, level: usize) -> &[u32] {
        self.z.get(level).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Excursion indicators of level-`l` subcrossing pairs inside level-`(l+1)` crossings.
    pub fn v(&self, level: usize) -> &[u8] {
        self.v.get(level).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn n_level0(&self) -> usize {
        self.levels[0].len()
    }

    /// Percentage of level-0 crossings that share their data segment with at least `m - 1` others.
    pub fn multiple_crossing_pct(&self, m: u32) -> f64 {
        let hit = self.multiplicity.iter().filter(|&&c| c >= m).count();
        100.0 * hit as f64 / self.multiplicity.len() as f64
    }

    pub fn level_stats(&self, level: usize) -> Result<LevelStats> {
        if level > self.max_level() {
            return Err(Error::LevelOutOfRange { level, max: self.max_level() });
        }
        let mean_duration_prev_level = (level >= 1).then(|| {
            let prev = &self.levels[level - 1];
            prev.iter().map(Crossing::duration).sum::<f64>() / prev.len() as f64
        });
        Ok(LevelStats { level, n_z: self.z(level).len(), n_v: self.v(level).len(), mean_duration_prev_level })
    }

    /// Writes one CSV file per level: `k,start_time,end_time,start_value,orientation[,Z]`.
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (l, xs) in self.levels.iter().enumerate() {
            let mut s = String::from(if l >= 1 {
                "k,start_time,end_time,start_value,orientation,Z\n"
            } else {
                "k,start_time,end_time,start_value,orientation\n"
            });
            for (k, c) in xs.iter().enumerate() {
                let _ =
                    write!(s, "{},{:?},{:?},{:?},{}", k + 1, c.start_time, c.end_time, c.start_value, c.orientation);
                if l >= 1 {
                    let _ = write!(s, ",{}", self.z[l][k]);
                }
                s.push('\n');
            }
            let path = dir.join(format!("{stem}-level{l}.csv"));
            std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
            files.push(path);
        }
        Ok(files)
    }
}

/// Median of absolute increments, with a flag set when the smallest positive increment was used instead.
pub fn select_base_scale(s: &TickSeries) -> Result<(f64, bool)> {
    let mut inc: Vec<f64> = s.values().windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    inc.sort_by(f64::total_cmp);
    let n = inc.len();
    let median = if n % 2 == 1 { inc[n / 2] } else { 0.5 * (inc[n / 2 - 1] + inc[n / 2]) };
    if median > 0.0 {
        return Ok((median, false));
    }
    inc.into_iter().find(|&d| d > 0.0).map(|d| (d, true)).ok_or(Error::ZeroIncrements)
}

/// Mean of the first `n_warmup` level-0 crossing values on the lattice `δℤ`,
/// and the time at which the last of those crossings ends.
pub fn latticised_mean(s: &TickSeries, delta: f64, n_warmup: usize) -> Result<(f64, f64)> {
    let path = s.interpolated();
    let opts = TreeOptions { start_after: f64::NEG_INFINITY, max_level0: Some(n_warmup) };
    let pts = level0_points(&path, delta, 0.0, &opts)?;
    let found = pts.len().saturating_sub(1);
    if found < n_warmup {
        return Err(Error::InsufficientWarmup { found, needed: n_warmup });
    }
    let warm = &pts[1..=n_warmup];
    let mean = warm.iter().map(|p| p.k as f64 * delta).sum::<f64>() / n_warmup as f64;
    Ok((mean, warm[n_warmup - 1].time))
}
