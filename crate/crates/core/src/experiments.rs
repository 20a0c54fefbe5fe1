//! Simulation experiments: measure stability across initial points,
//! invariance of the orbit measure, replicated estimation of `s`, and plot
//! data for copula surfaces and samples.
//!
//! Every run writes plain CSV files into an output directory: a summary, the
//! raw per-replication values behind it, and a failure manifest when some
//! replications could not be completed. Numbers are written with 17
//! significant digits so summaries can be recomputed from the raw logs.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copula::{CopulaModel, Direction};
use crate::error::{domain, Result};
use crate::estimator::{estimate_ls, estimate_minmax, BranchUsed, EstimateReport};
use crate::map::{orbit, MapModel};
use crate::measure::EmpiricalMeasure;
use crate::nodes::node_endpoints;
use crate::parallel;
use crate::sampler::sample_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Table51,
    Table52,
    Table61,
    Figures,
}

/// Settings shared by the experiments; unused fields are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Parameter values; a single value for the measure tables.
    pub s_grid: Vec<f64>,
    /// Orbit lengths behind the empirical measures, ascending.
    pub ns: Vec<usize>,
    /// Grid size for node tables.
    pub m: usize,
    /// Length `N` of each observed path.
    pub path_len: usize,
    /// Initial points (measure tables) or paths per parameter value.
    pub replications: usize,
    /// Fixed initial points; drawn from `seed` when empty.
    pub initial_points: Vec<f64>,
    /// Test sets `[lo, hi]`.
    pub sets: Vec<(f64, f64)>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// `x mod 1` for the fixed initial points of the invariance table.
pub fn invariance_initial_points() -> Vec<f64> {
    use std::f64::consts::{PI, SQRT_2};
    let s7 = 7f64.sqrt();
    [PI, PI / (SQRT_2 + 1.0), PI * SQRT_2, PI + SQRT_2, s7, PI + s7, 11f64.sqrt() + s7]
        .iter()
        .map(|x| x.fract())
        .collect()
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        let base = Self {
            experiment,
            s_grid: vec![0.5],
            ns: vec![3_000_000],
            m: 100_000,
            path_len: 200,
            replications: 50,
            initial_points: Vec::new(),
            sets: Vec::new(),
            seed,
            out_dir: out_dir.into(),
        };
        match experiment {
            Experiment::Table51 => Self {
                ns: vec![300_000, 1_000_000, 3_000_000],
                sets: vec![(0.1, 0.2), (0.2, 0.3), (0.4, 0.6)],
                ..base
            },
            Experiment::Table52 => Self {
                initial_points: invariance_initial_points(),
                replications: 7,
                sets: vec![(0.05, 0.2), (0.3, 0.8), (0.7, 0.95)],
                ..base
            },
            Experiment::Table61 => Self {
                s_grid: (0..18).map(|i| (10 + 5 * i) as f64 / 100.0).collect(),
                replications: 100,
                ..base
            },
            Experiment::Figures => Self {
                s_grid: vec![0.1, 0.4],
                ns: vec![1_000_000],
                m: 10_000,
                replications: 500,
                ..base
            },
        }
    }

    /// Initial points: the fixed list, or `replications` seeded uniform draws.
    pub fn starts(&self) -> Vec<f64> {
        if !self.initial_points.is_empty() {
            return self.initial_points.clone();
        }
        seeded_points(self.seed, self.experiment as u64, self.replications)
    }
}

/// `count` uniform draws from `(0, 1)` on stream `stream` of ChaCha8.
pub fn seeded_points(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count)
        .map(|_| loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                break x;
            }
        })
        .collect()
}

/// Descriptive statistics of one group of replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: String,
    pub count: usize,
    pub failures: usize,
    /// Replications left out of the statistics for another reason, such as
    /// estimates that had to fall back to the first branch.
    pub excluded: usize,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub mean: f64,
    /// Population standard deviation (divisor `count`).
    pub sd: f64,
    /// Mean squared deviation from the true value, when there is one.
    pub mse: Option<f64>,
}

impl SummaryRow {
    pub fn new(key: impl Into<String>, values: &[f64], failures: usize, truth: Option<f64>) -> Self {
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mse = truth.map(|t| values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / n);
        Self { key: key.into(), count: values.len(), failures, excluded: 0, min, max, range: max - min, mean, sd, mse }
    }
}

/// Decimal text with 17 significant digits; scientific notation for very
/// small or very large magnitudes.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if !(-5..=16).contains(&e) {
        format!("{x:.16e}")
    } else {
        format!("{x:.*}", (16 - e) as usize)
    }
}

fn writer(dir: &Path, name: &str, header: &[&str], files: &mut Vec<PathBuf>) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    files.push(path);
    Ok(w)
}

fn set_label(set: (f64, f64)) -> String {
    format!("[{},{}]", set.0, set.1)
}

const SUMMARY_HEADER: [&str; 11] = ["key", "count", "failures", "excluded", "min", "max", "range", "mean", "sd", "mse", "extra"];

fn summary_record(row: &SummaryRow, extra: &str) -> Vec<String> {
    vec![
        row.key.clone(),
        row.count.to_string(),
        row.failures.to_string(),
        row.excluded.to_string(),
        fmt17(row.min),
        fmt17(row.max),
        fmt17(row.range),
        fmt17(row.mean),
        fmt17(row.sd),
        row.mse.map(fmt17).unwrap_or_default(),
        extra.to_string(),
    ]
}

/// Files written by a run and the number of failed replications.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

/// Measure stability rows, one per `(set, n)`.
#[derive(Debug, Clone)]
pub struct Table51 {
    pub rows: Vec<(f64, f64, usize, SummaryRow)>,
    /// `(x0, n, set index, mass)`.
    pub raw: Vec<(f64, usize, usize, f64)>,
    pub failures: Vec<(f64, String)>,
}

/// `mu_n(set)` over a family of initial points, each truncation `n` taken
/// as a prefix of one orbit.
pub fn run_table51(cfg: &ExperimentConfig) -> Result<Table51> {
    let s = single_s(cfg)?;
    let model = MapModel::new(s)?;
    let longest = *cfg.ns.iter().max().ok_or_else(|| crate::Error::Domain("no orbit lengths".into()))?;
    let starts = cfg.starts();
    let per_start = parallel::map_slice(&starts, |&x0| -> Result<Vec<(usize, usize, f64)>> {
        let points = orbit(&model, x0, longest)?.points;
        let mut out = Vec::new();
        for &n in &cfg.ns {
            let mu = EmpiricalMeasure::from_points(s, x0, points[..n].to_vec())?;
            for (i, &(lo, hi)) in cfg.sets.iter().enumerate() {
                out.push((n, i, mu.measure_interval(lo, hi)?));
            }
        }
        Ok(out)
    });
    let mut raw = Vec::new();
    let mut failures = Vec::new();
    for (&x0, r) in starts.iter().zip(per_start) {
        match r {
            Ok(v) => raw.extend(v.into_iter().map(|(n, i, m)| (x0, n, i, m))),
            Err(e) => failures.push((x0, e.to_string())),
        }
    }
    let mut rows = Vec::new();
    for (i, &set) in cfg.sets.iter().enumerate() {
        for &n in &cfg.ns {
            let values: Vec<f64> = raw.iter().filter(|r| r.1 == n && r.2 == i).map(|r| r.3).collect();
            let key = set_label(set);
            rows.push((set.0, set.1, n, SummaryRow::new(key, &values, failures.len(), None)));
        }
    }
    Ok(Table51 { rows, raw, failures })
}

fn single_s(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.s_grid.as_slice() {
        [s] => Ok(*s),
        _ => domain("this experiment takes exactly one value of s"),
    }
}

/// A test set and its difference matrix
/// `D[i][j] = |mu_n(A; x_i) - mu_n(T^{-1} A; x_j)|`.
pub type InvarianceMatrix = ((f64, f64), Vec<Vec<f64>>);

/// Invariance matrices, one per set.
#[derive(Debug, Clone)]
pub struct Table52 {
    pub starts: Vec<f64>,
    pub matrices: Vec<InvarianceMatrix>,
    /// `(set index, x0, mu_n(A), mu_n(T^{-1} A))`.
    pub raw: Vec<(usize, f64, f64, f64)>,
}

pub fn run_table52(cfg: &ExperimentConfig) -> Result<Table52> {
    let s = single_s(cfg)?;
    let model = MapModel::new(s)?;
    let n = *cfg.ns.last().ok_or_else(|| crate::Error::Domain("no orbit length".into()))?;
    let nodes = node_endpoints(&model, 1, cfg.m)?;
    let starts = cfg.starts();
    let masses = parallel::map_slice(&starts, |&x0| -> Result<Vec<(f64, f64)>> {
        let mu = EmpiricalMeasure::build(&model, x0, n, 0)?;
        cfg.sets
            .iter()
            .map(|&(lo, hi)| Ok((mu.measure_interval(lo, hi)?, mu.measure_preimage(&nodes, lo, hi)?)))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut matrices = Vec::new();
    let mut raw = Vec::new();
    for (k, &set) in cfg.sets.iter().enumerate() {
        let d = (0..starts.len())
            .map(|i| (0..starts.len()).map(|j| (masses[i][k].0 - masses[j][k].1).abs()).collect())
            .collect();
        matrices.push((set, d));
        for (i, &x0) in starts.iter().enumerate() {
            raw.push((k, x0, masses[i][k].0, masses[i][k].1));
        }
    }
    Ok(Table52 { starts, matrices, raw })
}

/// One estimation attempt.
#[derive(Debug, Clone)]
pub struct Replication {
    pub s: f64,
    pub index: usize,
    pub x0: f64,
    pub method: &'static str,
    pub outcome: std::result::Result<EstimateReport, String>,
}

#[derive(Debug, Clone)]
pub struct Table61 {
    /// `(s, method, summary)`.
    pub rows: Vec<(f64, &'static str, SummaryRow)>,
    pub raw: Vec<Replication>,
}

impl Table61 {
    pub fn failures(&self) -> usize {
        self.raw.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn row(&self, s: f64, method: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.0 == s && r.1 == method).map(|r| &r.2)
    }
}

/// Min-max and least-squares estimates of `s` from paths of length `N`, one
/// path per initial point and parameter value. The same initial points are
/// used for every `s`.
///
/// Paths with fewer than two second-branch pairs carry no information on
/// `a`; their first-branch fallback estimates are logged but left out of the
/// summary and counted in [`SummaryRow::excluded`].
pub fn run_table61(cfg: &ExperimentConfig) -> Result<Table61> {
    if cfg.path_len < 3 {
        return domain("paths need at least three points");
    }
    let starts = cfg.starts();
    let jobs: Vec<(f64, usize, f64)> = cfg
        .s_grid
        .iter()
        .flat_map(|&s| starts.iter().enumerate().map(move |(i, &x0)| (s, i, x0)))
        .collect();
    let raw: Vec<Replication> = parallel::map_slice(&jobs, |&(s, index, x0)| {
        let path = MapModel::new(s).and_then(|m| orbit(&m, x0, cfg.path_len)).map(|o| o.points);
        let run = |method: &'static str, f: fn(&[f64]) -> Result<EstimateReport>| Replication {
            s,
            index,
            x0,
            method,
            outcome: match &path {
                Ok(p) => f(p).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            },
        };
        [run("MM", estimate_minmax), run("LS", estimate_ls)]
    })
    .into_iter()
    .flatten()
    .collect();
    let mut rows = Vec::new();
    for &s in &cfg.s_grid {
        for method in ["MM", "LS"] {
            let group: Vec<&Replication> = raw.iter().filter(|r| r.s == s && r.method == method).collect();
            let ok: Vec<&EstimateReport> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let values: Vec<f64> =
                ok.iter().filter(|e| e.branch_used == BranchUsed::Second).map(|e| e.s_hat).collect();
            let failures = group.len() - ok.len();
            let mut row = SummaryRow::new(method, &values, failures, Some(s));
            row.excluded = ok.len() - values.len();
            rows.push((s, method, row));
        }
    }
    Ok(Table61 { rows, raw })
}

/// Copula grids, support segments and samples for every `(s, h)` with
/// `h` in `lags`.
pub fn emit_figure_data(cfg: &ExperimentConfig, lags: &[usize], grid: usize) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut out = ExperimentOutcome::default();
    let n = *cfg.ns.last().ok_or_else(|| crate::Error::Domain("no orbit length".into()))?;
    let x0 = cfg.initial_points.first().copied().unwrap_or(std::f64::consts::PI - 3.0);
    for &s in &cfg.s_grid {
        let model = MapModel::new(s)?;
        let mu = Arc::new(EmpiricalMeasure::build(&model, x0, n, 0)?);
        let mut cm = CopulaModel::new(model, mu, cfg.m, Direction::Increasing)?;
        cm.prepare_lags(lags)?;
        for &h in lags {
            let tag = format!("s{s}_h{h}");
            let mut w = writer(&cfg.out_dir, &format!("copula_{tag}.csv"), &["u", "v", "c"], &mut out.files)?;
            for (u, v, c) in cm.grid(h, grid)? {
                w.write_record([fmt17(u), fmt17(v), fmt17(c)])?;
            }
            w.flush()?;
            write_support(&cm, h, &cfg.out_dir, &format!("support_{tag}.csv"), &mut out.files)?;
            let batch = sample_pairs(&cm, h, cfg.replications, cfg.seed)?;
            let mut w = writer(&cfg.out_dir, &format!("samples_{tag}.csv"), &["u", "v"], &mut out.files)?;
            for (u, v) in batch.pairs {
                w.write_record([fmt17(u), fmt17(v)])?;
            }
            w.flush()?;
        }
    }
    Ok(out)
}

/// Write the support segments of lag `h` as `k,x0,y0,x1,y1`.
pub fn write_support(cm: &CopulaModel, h: usize, dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut w = writer(dir, name, &["k", "x0", "y0", "x1", "y1"], files)?;
    for seg in cm.support(h)?.segments() {
        w.write_record([seg.k.to_string(), fmt17(seg.x0), fmt17(seg.y0), fmt17(seg.x1), fmt17(seg.y1)])?;
    }
    w.flush()?;
    Ok(())
}

/// Run `cfg.experiment` and write its CSV files into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&cfg.out_dir)?;
    let dir = cfg.out_dir.as_path();
    let mut out = ExperimentOutcome::default();
    match cfg.experiment {
        Experiment::Table51 => {
            let t = run_table51(cfg)?;
            let mut w = writer(dir, "table51_summary.csv", &SUMMARY_HEADER, &mut out.files)?;
            for (_, _, n, row) in &t.rows {
                w.write_record(summary_record(row, &format!("n={n}")))?;
            }
            w.flush()?;
            let mut w = writer(dir, "table51_raw.csv", &["x0", "n", "set", "mass"], &mut out.files)?;
            for &(x0, n, i, m) in &t.raw {
                w.write_record([fmt17(x0), n.to_string(), set_label(cfg.sets[i]), fmt17(m)])?;
            }
            w.flush()?;
            out.failures = t.failures.len();
            write_failures(dir, t.failures.iter().map(|(x0, e)| vec![fmt17(*x0), e.clone()]), &["x0", "error"], &mut out)?;
        }
        Experiment::Table52 => {
            let t = run_table52(cfg)?;
            let mut header = vec!["x0".to_string()];
            header.extend((1..=t.starts.len()).map(|j| format!("x{j}")));
            for (k, (set, d)) in t.matrices.iter().enumerate() {
                let path = dir.join(format!("table52_set{}.csv", k + 1));
                let mut w = csv::Writer::from_path(&path)?;
                out.files.push(path);
                w.write_record(std::iter::once(set_label(*set)).chain(header[1..].iter().cloned()))?;
                for (i, row) in d.iter().enumerate() {
                    w.write_record(std::iter::once(format!("x{}", i + 1)).chain(row.iter().map(|v| fmt17(*v))))?;
                }
                w.flush()?;
            }
            let mut w = writer(dir, "table52_raw.csv", &["set", "x0", "mass", "preimage_mass"], &mut out.files)?;
            for &(k, x0, m, p) in &t.raw {
                w.write_record([set_label(cfg.sets[k]), fmt17(x0), fmt17(m), fmt17(p)])?;
            }
            w.flush()?;
        }
        Experiment::Table61 => {
            let t = run_table61(cfg)?;
            let mut w = writer(dir, "table61_summary.csv", &SUMMARY_HEADER, &mut out.files)?;
            for (s, _, row) in &t.rows {
                w.write_record(summary_record(row, &format!("s={s}")))?;
            }
            w.flush()?;
            let header = ["s", "replication", "x0", "method", "a_hat", "s_hat", "branch_used", "branch_count", "status"];
            let mut w = writer(dir, "table61_raw.csv", &header, &mut out.files)?;
            for r in &t.raw {
                let mut rec = vec![fmt17(r.s), r.index.to_string(), fmt17(r.x0), r.method.to_string()];
                match &r.outcome {
                    Ok(e) => rec.extend([
                        fmt17(e.a_hat),
                        fmt17(e.s_hat),
                        e.branch_used.to_string(),
                        e.branch_count.to_string(),
                        "ok".into(),
                    ]),
                    Err(_) => rec.extend(["", "", "", "", "failed"].map(String::from)),
                }
                w.write_record(rec)?;
            }
            w.flush()?;
            out.failures = t.failures();
            let failed = t.raw.iter().filter_map(|r| {
                r.outcome.as_ref().err().map(|e| {
                    vec![fmt17(r.s), r.index.to_string(), fmt17(r.x0), r.method.to_string(), e.clone()]
                })
            });
            write_failures(dir, failed, &["s", "replication", "x0", "method", "error"], &mut out)?;
        }
        Experiment::Figures => {
            let mut o = emit_figure_data(cfg, &[1, 2], 50)?;
            let wide = ExperimentConfig { s_grid: vec![0.2], ..cfg.clone() };
            o.files.extend(emit_figure_data(&wide, &[7], 50)?.files);
            out.files.extend(o.files);
        }
    }
    Ok(out)
}

fn write_failures(
    dir: &Path,
    rows: impl Iterator<Item = Vec<String>>,
    header: &[&str],
    out: &mut ExperimentOutcome,
) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.collect();
    if rows.is_empty() {
        return Ok(());
    }
    let mut w = writer(dir, "failures.csv", header, &mut out.files)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
