use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{Delta0Policy, QvSource, StudyConfig};
use crate::error::{Error, Result};
use crate::outcome::{TestId, TestOutcome};
use crate::sim::ProcessSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "text" | "txt" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (text|csv|json)"))),
        }
    }
}

pub trait Render: Serialize {
    fn text(&self) -> String;
    fn csv(&self) -> String;

    fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.text(),
            Format::Csv => self.csv(),
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
        }
    }

    fn write_to(&self, format: Format, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.render(format)).map_err(|e| Error::io(path, e))
    }
}

/// Rejection counts of one test at one level over a set of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCell {
    pub rejected: usize,
    pub tested: usize,
    pub n_paths: usize,
    pub pct_all: f64,
    pub pct_tested: Option<f64>,
    /// 95% normal-approximation half-widths, in percentage points.
    pub ci_all: f64,
    pub ci_tested: Option<f64>,
}

fn half_width(k: usize, n: usize) -> f64 {
    let p = k as f64 / n as f64;
    100.0 * 1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

impl RateCell {
    pub fn new(rejected: usize, tested: usize, n_paths: usize) -> Self {
        assert!(rejected <= tested && tested <= n_paths);
        let n = n_paths.max(1);
        RateCell {
            rejected,
            tested,
            n_paths,
            pct_all: 100.0 * rejected as f64 / n as f64,
            pct_tested: (tested > 0).then(|| 100.0 * rejected as f64 / tested as f64),
            ci_all: half_width(rejected, n),
            ci_tested: (tested > 0).then(|| half_width(rejected, tested)),
        }
    }

    pub fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a TestOutcome>, n_paths: usize) -> Self {
        let (mut rej, mut tested) = (0, 0);
        for o in outcomes {
            if o.is_tested() {
                tested += 1;
                rej += usize::from(o.reject);
            }
        }
        RateCell::new(rej, tested, n_paths)
    }

    /// `% of all (% of tested; # tested)`, or a skip marker when nothing was tested.
    pub fn cell(&self) -> String {
        match self.pct_tested {
            Some(pt) => format!("{:.1} ({:.1}; {}) +-{:.1}", self.pct_all, pt, self.tested, self.ci_all),
            None => "skip (--; 0)".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub mean_n_z: f64,
    pub mean_n_v: f64,
    pub mean_duration_prev_level: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub test: TestId,
    pub level: usize,
    pub rate: RateCell,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub kind: String,
    pub process: ProcessSpec,
    pub delta: f64,
    pub delta0_policy: Delta0Policy,
    pub n_paths: usize,
    pub n_crossings: usize,
    pub n_warmup: usize,
    pub seed: u64,
    pub levels: Vec<LevelSummary>,
    pub cells: Vec<CellSummary>,
}

type PathRow<'a> = (&'a Vec<TestOutcome>, &'a Vec<usize>, &'a Vec<usize>, &'a Vec<Option<f64>>);

impl StudyReport {
    pub(super) fn aggregate(
        kind: &str,
        cfg: &StudyConfig,
        process: ProcessSpec,
        delta: f64,
        rows: &[PathRow<'_>],
    ) -> Self {
        let n = rows.len();
        let nt = cfg.tests.len();
        let mut levels = Vec::new();
        let mut cells = Vec::new();
        for (li, &l) in cfg.levels.iter().enumerate() {
            let durs: Vec<f64> = rows.iter().filter_map(|r| r.3[li]).collect();
            levels.push(LevelSummary {
                level: l,
                mean_n_z: rows.iter().map(|r| r.1[li] as f64).sum::<f64>() / n as f64,
                mean_n_v: rows.iter().map(|r| r.2[li] as f64).sum::<f64>() / n as f64,
                mean_duration_prev_level: (!durs.is_empty()).then(|| durs.iter().sum::<f64>() / durs.len() as f64),
            });
            for (ti, &t) in cfg.tests.iter().enumerate() {
                let rate = RateCell::from_outcomes(rows.iter().map(|r| &r.0[li * nt + ti]), n);
                cells.push(CellSummary { test: t, level: l, rate });
            }
        }
        StudyReport {
            kind: kind.to_string(),
            process,
            delta,
            delta0_policy: cfg.delta0_policy,
            n_paths: n,
            n_crossings: cfg.n_crossings,
            n_warmup: cfg.n_warmup,
            seed: cfg.seed,
            levels,
            cells,
        }
    }

    pub fn cell(&self, test: TestId, level: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.test == test && c.level == level).map(|c| &c.rate)
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(j, s)| format!("{s:<w$}", w = widths[j])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 || (1e-2..1e5).contains(&x.abs()) {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

impl Render for StudyReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} study: {}  delta={}  delta0={}  paths={}  crossings={}  warmup={}  seed={}",
            self.kind,
            self.process.name(),
            self.delta,
            self.delta0_policy.as_str(),
            self.n_paths,
            self.n_crossings,
            self.n_warmup,
            self.seed
        );
        let _ = writeln!(s, "cells: % of all (% of tested; # tested) +-95% half-width of % of all\n");
        let mut rows = vec![std::iter::once("Test".to_string())
            .chain(self.levels.iter().map(|l| format!("Level {}", l.level)))
            .collect::<Vec<_>>()];
        rows.push(
            std::iter::once("N(l)".into()).chain(self.levels.iter().map(|l| format!("{:.1}", l.mean_n_z))).collect(),
        );
        rows.push(
            std::iter::once("N_V(l)".into()).chain(self.levels.iter().map(|l| format!("{:.1}", l.mean_n_v))).collect(),
        );
        if self.levels.iter().any(|l| l.mean_duration_prev_level.is_some()) {
            rows.push(
                std::iter::once("mean xing length level (l-1)".into())
                    .chain(self.levels.iter().map(|l| l.mean_duration_prev_level.map_or("--".into(), fmt_num)))
                    .collect(),
            );
        }
        let mut tests: Vec<TestId> = Vec::new();
        for c in &self.cells {
            if !tests.contains(&c.test) {
                tests.push(c.test);
            }
        }
        for t in tests {
            let mut r = vec![t.label().to_string()];
            for l in &self.levels {
                r.push(self.cell(t, l.level).map_or("--".into(), RateCell::cell));
            }
            rows.push(r);
        }
        s + &table(&rows)
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "test",
            "level",
            "rejected",
            "tested",
            "n_paths",
            "pct_all",
            "pct_tested",
            "ci_all",
            "ci_tested",
        ])
        .expect("in-memory write");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for c in &self.cells {
            let r = &c.rate;
            w.write_record([
                c.test.as_str().to_string(),
                c.level.to_string(),
                r.rejected.to_string(),
                r.tested.to_string(),
                r.n_paths.to_string(),
                r.pct_all.to_string(),
                opt(r.pct_tested),
                r.ci_all.to_string(),
                opt(r.ci_tested),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// One level of an analysed dataset.
#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub n_z: usize,
    pub n_v: usize,
    pub mean_duration_prev_level: Option<f64>,
    pub outcomes: Vec<TestOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetReport {
    pub source: String,
    pub n_ticks: usize,
    pub collapsed: usize,
    pub log_transform: bool,
    pub delta: f64,
    pub delta_from_smallest_increment: bool,
    pub delta0: f64,
    pub delta0_policy: Delta0Policy,
    pub n_warmup: usize,
    pub warmup_consumed_through: Option<f64>,
    pub n_level0: usize,
    pub pct_multiple_ge2: f64,
    pub pct_multiple_ge4: f64,
    pub levels: Vec<LevelReport>,
}

fn outcome_cell(o: &TestOutcome) -> String {
    if o.skipped.is_some() {
        return "skip".into();
    }
    let mark = if o.reject { "*" } else { "" };
    match o.p_value {
        Some(p) => format!("{p:.3}{mark}"),
        None if o.reject => "<0.05*".into(),
        None => ">0.05".into(),
    }
}

impl DatasetReport {
    pub fn outcome(&self, level: usize, test: TestId) -> Option<&TestOutcome> {
        self.levels.iter().find(|l| l.level == level)?.outcomes.iter().find(|o| o.test == test)
    }
}

impl Render for DatasetReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dataset: {}  ticks={}  collapsed={}  log={}",
            self.source, self.n_ticks, self.collapsed, self.log_transform
        );
        let _ = writeln!(
            s,
            "delta={}{}  delta0={} ({})  warmup={} through t={}",
            self.delta,
            if self.delta_from_smallest_increment { " (smallest positive increment)" } else { "" },
            self.delta0,
            self.delta0_policy.as_str(),
            self.n_warmup,
            self.warmup_consumed_through.map_or("--".into(), |t| t.to_string())
        );
        let _ = writeln!(
            s,
            "level-0 crossings={}  arising as >=2 per data segment: {:.1}%  >=4: {:.1}%",
            self.n_level0, self.pct_multiple_ge2, self.pct_multiple_ge4
        );
        let _ = writeln!(s, "cells: p-value or </> 0.05; * marks rejection at 5%\n");
        let mut rows = vec![std::iter::once("Level".to_string())
            .chain(self.levels.iter().map(|l| l.level.to_string()))
            .collect::<Vec<_>>()];
        rows.push(std::iter::once("# SubX".into()).chain(self.levels.iter().map(|l| l.n_z.to_string())).collect());
        rows.push(std::iter::once("N_V".into()).chain(self.levels.iter().map(|l| l.n_v.to_string())).collect());
        rows.push(
            std::iter::once("mean xing length level (l-1)".into())
                .chain(self.levels.iter().map(|l| l.mean_duration_prev_level.map_or("--".into(), fmt_num)))
                .collect(),
        );
        if let Some(first) = self.levels.first() {
            for (i, o) in first.outcomes.iter().enumerate() {
                let mut r = vec![o.test.label().to_string()];
                r.extend(self.levels.iter().map(|l| outcome_cell(&l.outcomes[i])));
                rows.push(r);
            }
        }
        s + &table(&rows)
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "level",
            "n_z",
            "n_v",
            "mean_duration_prev_level",
            "test",
            "n_used",
            "statistic",
            "p_value",
            "reject",
            "skipped",
        ])
        .expect("in-memory write");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for l in &self.levels {
            for o in &l.outcomes {
                w.write_record([
                    l.level.to_string(),
                    l.n_z.to_string(),
                    l.n_v.to_string(),
                    opt(l.mean_duration_prev_level),
                    o.test.as_str().to_string(),
                    o.n_used.to_string(),
                    opt(o.statistic),
                    opt(o.p_value),
                    o.reject.to_string(),
                    o.skipped.clone().unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QvRow {
    pub c: f64,
    pub ks: RateCell,
    pub cvm: RateCell,
    pub sm: RateCell,
    pub mean_n: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QvReport {
    pub source: QvSource,
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub drop_last: bool,
    pub seed: u64,
    pub rows: Vec<QvRow>,
}

impl Render for QvReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "qv study: {:?}  paths={}  steps={}  dt={}  drop_last={}  seed={}",
            self.source, self.n_paths, self.n_steps, self.dt, self.drop_last, self.seed
        );
        let _ = writeln!(s, "cells: % of all (% of tested; # tested) +-95% half-width\n");
        let mut rows = vec![vec!["c".to_string(), "mean N".into(), "KS".into(), "CVM".into(), "SM".into()]];
        for r in &self.rows {
            rows.push(vec![r.c.to_string(), format!("{:.2}", r.mean_n), r.ks.cell(), r.cvm.cell(), r.sm.cell()]);
        }
        s + &table(&rows)
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "c",
            "mean_n",
            "ks_rejected",
            "ks_tested",
            "ks_pct",
            "cvm_rejected",
            "cvm_tested",
            "cvm_pct",
            "sm_rejected",
            "sm_tested",
            "sm_pct",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.c.to_string(), r.mean_n.to_string()];
            for cell in [&r.ks, &r.cvm, &r.sm] {
                rec.push(cell.rejected.to_string());
                rec.push(cell.tested.to_string());
                rec.push(cell.pct_all.to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}
