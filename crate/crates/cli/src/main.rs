use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mpcop_core::copula::{CopulaModel, Direction};
use mpcop_core::estimator::{self, RefineOptions, Update};
use mpcop_core::experiments::{self, fmt17, Experiment, ExperimentConfig};
use mpcop_core::{node_endpoints, orbit, sample_pairs, EmpiricalMeasure, MapModel};

const DEFAULT_X0: f64 = std::f64::consts::PI - 3.0;

/// Manneville-Pomeau maps, their copulas and estimation of `s`.
#[derive(Parser)]
#[command(name = "mpcop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an orbit as a single-column CSV.
    Iterate {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        x0: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the orbit mass of an interval.
    Measure {
        #[command(flatten)]
        orbit: OrbitArgs,
        /// `lo,hi`
        #[arg(long, value_parser = parse_pair)]
        interval: (f64, f64),
    },
    /// Evaluate the interpolated distribution function or its inverse.
    Cdf {
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long, conflicts_with = "quantile", required_unless_present = "quantile")]
        eval: Option<f64>,
        #[arg(long)]
        quantile: Option<f64>,
    },
    /// Node endpoints of the h-th iterate, as `k,a_hk`.
    Nodes {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        h: usize,
        #[arg(long, default_value_t = 100_000)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the lag-h copula at a point or on a grid.
    Copula {
        #[command(flatten)]
        model: CopulaArgs,
        /// `u,v`
        #[arg(long, value_parser = parse_pair, conflicts_with = "grid", required_unless_present = "grid")]
        eval: Option<(f64, f64)>,
        #[arg(long, requires = "out")]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Support segments of the lag-h copula, as `k,x0,y0,x1,y1`.
    Support {
        #[command(flatten)]
        model: CopulaArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw pairs from the lag-h copula.
    Sample {
        #[command(flatten)]
        model: CopulaArgs,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate s from a path stored as a CSV column `x`.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Minmax)]
        method: MethodArg,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Orbit length behind each refinement step.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        /// Bisect on the refinement mismatch instead of iterating it.
        #[arg(long)]
        bisection: bool,
    },
    /// Run a simulation experiment and write CSV tables.
    Experiment {
        #[arg(value_enum)]
        which: ExperimentArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Longest orbit length.
        #[arg(long)]
        n: Option<usize>,
        /// Initial points or paths per parameter value.
        #[arg(long)]
        replications: Option<usize>,
        /// Length of each observed path.
        #[arg(long)]
        paths: Option<usize>,
    },
}

#[derive(Args)]
struct OrbitArgs {
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = DEFAULT_X0)]
    x0: f64,
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Orbit points discarded before the measure is built.
    #[arg(long, default_value_t = 0)]
    burnin: usize,
}

impl OrbitArgs {
    fn measure(&self) -> Result<EmpiricalMeasure> {
        let model = MapModel::new(self.s)?;
        Ok(EmpiricalMeasure::build(&model, self.x0, self.n, self.burnin)?)
    }
}

#[derive(Args)]
struct CopulaArgs {
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 1)]
    h: usize,
    #[arg(long, default_value_t = DEFAULT_X0)]
    x0: f64,
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long)]
    decreasing: bool,
}

impl CopulaArgs {
    fn model(&self) -> Result<CopulaModel> {
        let direction = if self.decreasing { Direction::Decreasing } else { Direction::Increasing };
        let model = MapModel::new(self.s)?;
        let mu = Arc::new(EmpiricalMeasure::build(&model, self.x0, self.n, 0)?);
        let mut cm = CopulaModel::new(model, mu, self.m, direction)?;
        cm.prepare_lags(&[self.h])?;
        Ok(cm)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Minmax,
    Ls,
    Refined,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Table51,
    Table52,
    Table61,
    Figures,
}

fn parse_pair(text: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = text.split_once(',').ok_or("expected two comma-separated numbers")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn csv_out(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

fn read_path(input: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h.trim() == "x")
        .context("input CSV has no column named `x`")?;
    let mut path = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("").trim();
        let x: f64 = field.parse().with_context(|| format!("row {}: cannot parse {field:?}", line + 2))?;
        if !(x > 0.0 && x < 1.0) {
            bail!("row {}: value {x} is outside (0, 1)", line + 2);
        }
        path.push(x);
    }
    Ok(path)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Iterate { s, x0, n, out: path } => {
            let o = orbit(&MapModel::new(s)?, x0, n)?;
            let mut w = csv_out(&path, &["x"])?;
            for x in o.points {
                w.write_record([fmt17(x)])?;
            }
            w.flush()?;
        }
        Command::Measure { orbit, interval } => {
            let mu = orbit.measure()?;
            writeln!(out, "{}", fmt17(mu.measure_interval(interval.0, interval.1)?))?;
        }
        Command::Cdf { orbit, eval, quantile } => {
            let mu = orbit.measure()?;
            let value = match (eval, quantile) {
                (Some(x), _) => mu.cdf(x)?,
                (None, Some(u)) => mu.quantile(u)?,
                (None, None) => unreachable!("clap requires one of --eval and --quantile"),
            };
            writeln!(out, "{}", fmt17(value))?;
        }
        Command::Nodes { s, h, m, out: path } => {
            let table = node_endpoints(&MapModel::new(s)?, h, m)?;
            let sink: Box<dyn Write> = match &path {
                Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => Box::new(io::stdout()),
            };
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(["k", "a_hk"])?;
            for (k, a) in table.endpoints().iter().enumerate() {
                w.write_record([k.to_string(), fmt17(*a)])?;
            }
            w.flush()?;
        }
        Command::Copula { model, eval, grid, out: path } => {
            let cm = model.model()?;
            if let Some((u, v)) = eval {
                writeln!(out, "{}", fmt17(cm.eval(model.h, u, v)?))?;
            } else if let (Some(g), Some(path)) = (grid, path) {
                let mut w = csv_out(&path, &["u", "v", "c"])?;
                for (u, v, c) in cm.grid(model.h, g)? {
                    w.write_record([fmt17(u), fmt17(v), fmt17(c.clamp(0.0, 1.0))])?;
                }
                w.flush()?;
            }
        }
        Command::Support { model, out: path } => {
            let cm = model.model()?;
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = path.file_name().context("--out must name a file")?;
            experiments::write_support(&cm, model.h, dir, &name.to_string_lossy(), &mut Vec::new())?;
        }
        Command::Sample { model, count, seed, out: path } => {
            let cm = model.model()?;
            let batch = sample_pairs(&cm, model.h, count, seed)?;
            let mut w = csv_out(&path, &["u", "v"])?;
            for (u, v) in batch.pairs {
                w.write_record([fmt17(u), fmt17(v)])?;
            }
            w.flush()?;
        }
        Command::Estimate { input, method, eps, n, bisection } => {
            let path = read_path(&input)?;
            let report = match method {
                MethodArg::Minmax => estimator::estimate_minmax(&path)?,
                MethodArg::Ls => estimator::estimate_ls(&path)?,
                MethodArg::Refined => {
                    let update = if bisection { Update::Bisection } else { Update::FixedPoint };
                    let opts = RefineOptions { eps, n, update, ..Default::default() };
                    match estimator::estimate_refined(&path, &opts) {
                        Ok(r) => r,
                        Err(mpcop_core::Error::NotConverged { best, iterations, .. }) => {
                            log::warn!("no convergence after {iterations} iterations; reporting the last iterate");
                            *best
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            };
            if !report.in_range {
                log::warn!("a_hat = {} lies outside (1/2, (sqrt(5)-1)/2)", report.a_hat);
            }
            writeln!(out, "method,a_hat,s_hat,branch_used,branch_count")?;
            writeln!(
                out,
                "{},{},{},{},{}",
                report.method,
                fmt17(report.a_hat),
                fmt17(report.s_hat),
                report.branch_used,
                report.branch_count
            )?;
        }
        Command::Experiment { which, seed, out: dir, n, replications, paths } => {
            let experiment = match which {
                ExperimentArg::Table51 => Experiment::Table51,
                ExperimentArg::Table52 => Experiment::Table52,
                ExperimentArg::Table61 => Experiment::Table61,
                ExperimentArg::Figures => Experiment::Figures,
            };
            let mut cfg = ExperimentConfig::defaults(experiment, seed, dir);
            if let Some(n) = n {
                cfg.ns = match experiment {
                    Experiment::Table51 => vec![n / 10, n / 3, n],
                    _ => vec![n],
                };
            }
            if let Some(r) = replications {
                cfg.replications = r;
                if experiment == Experiment::Table52 {
                    cfg.initial_points.truncate(r);
                }
            }
            if let Some(p) = paths {
                cfg.path_len = p;
            }
            let outcome = experiments::run(&cfg)?;
            for f in &outcome.files {
                writeln!(out, "{}", f.display())?;
            }
            if outcome.failures > 0 {
                eprintln!("{} replications failed; see failures.csv", outcome.failures);
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
