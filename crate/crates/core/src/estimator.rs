//! Estimating `s` from an observed path `x_1, ..., x_N`.
//!
//! The lag-1 scatter `(x_i, x_{i+1})` lies close to two lines: the first
//! branch from `(0, 0)` to `(a, 1)` and the second from `(a, 0)` to `(1, 1)`.
//! A line fitted through the second-branch points crosses zero near `a`,
//! and `s = log(1 - a) / log(a) - 1`.
//!
//! * min-max: the line through the second-branch points with the smallest and
//!   largest abscissa;
//! * least squares: the OLS line through all second-branch points;
//! * refined: the min-max fit repeated on `(F_n(x_i), F_n(x_{i+1}))`, where
//!   `F_n` is rebuilt from an orbit at the current guess of `s` until the
//!   guess stops moving.
//!
//! If the second branch holds fewer than two points the first branch is used
//! and `a` is read off where its line reaches 1.

use std::fmt;

use crate::error::{domain, Error, Result};
use crate::map::{a_to_s, solve_a, MapModel};
use crate::measure::EmpiricalMeasure;

/// Paths shorter than this are rejected by the min-max and least-squares
/// estimators.
pub const MIN_PATH: usize = 20;
/// Paths shorter than this are rejected by [`estimate_refined`].
pub const MIN_REFINE_PATH: usize = 50;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MinMax,
    LeastSquares,
    Refined,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MinMax => "minmax",
            Method::LeastSquares => "ls",
            Method::Refined => "refined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchUsed {
    Second,
    FirstFallback,
}

impl fmt::Display for BranchUsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchUsed::Second => "second",
            BranchUsed::FirstFallback => "first-fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub a_hat: f64,
    pub s_hat: f64,
    pub method: Method,
    pub branch_used: BranchUsed,
    /// Points on the branch the line was fitted to.
    pub branch_count: usize,
    /// Root mean square vertical distance of those points from the line.
    pub residual: f64,
    /// Whether `a_hat` lies in `(1/2, (sqrt(5)-1)/2)`, the range of `a(s)`.
    pub in_range: bool,
    /// Refinement rounds; 1 for the direct estimators.
    pub iterations: usize,
}

/// Lag-1 pairs split by branch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Branches {
    /// Pairs with `x_{i+1} >= x_i`.
    pub first: Vec<(f64, f64)>,
    /// Pairs with `x_{i+1} < x_i`; the map wrapped.
    pub second: Vec<(f64, f64)>,
}

fn check_path(path: &[f64], min_len: usize) -> Result<()> {
    if path.len() < min_len {
        return domain(format!("path has {} points, need at least {min_len}", path.len()));
    }
    if let Some(x) = path.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return domain(format!("path values must lie in (0, 1), found {x}"));
    }
    Ok(())
}

/// Split the consecutive pairs of `path` into the two branches.
pub fn classify_branches(path: &[f64]) -> Result<Branches> {
    check_path(path, 3)?;
    Ok(split_pairs(path.windows(2).map(|w| (w[0], w[1]))))
}

fn split_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Branches {
    let mut b = Branches::default();
    for (x, y) in pairs {
        if y < x {
            b.second.push((x, y));
        } else {
            b.first.push((x, y));
        }
    }
    b
}

#[derive(Clone, Copy)]
enum Fit {
    Extremes,
    Ols,
}

fn line(points: &[(f64, f64)], fit: Fit) -> Result<(f64, f64)> {
    match fit {
        Fit::Extremes => {
            let lo = points.iter().min_by(|p, q| p.0.total_cmp(&q.0)).unwrap();
            let hi = points.iter().max_by(|p, q| p.0.total_cmp(&q.0)).unwrap();
            if hi.0 == lo.0 {
                return Err(Error::SingularFit("extreme branch points share their abscissa".into()));
            }
            let slope = (hi.1 - lo.1) / (hi.0 - lo.0);
            Ok((slope, lo.1 - slope * lo.0))
        }
        Fit::Ols => {
            let n = points.len() as f64;
            let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
            let my = points.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            if sxx == 0.0 {
                return Err(Error::SingularFit("all branch abscissae coincide".into()));
            }
            let slope = sxy / sxx;
            Ok((slope, my - slope * mx))
        }
    }
}

fn fit_branches(b: &Branches, fit: Fit, method: Method) -> Result<EstimateReport> {
    let (points, branch_used) = if b.second.len() >= 2 {
        (&b.second, BranchUsed::Second)
    } else if b.first.len() >= 2 {
        (&b.first, BranchUsed::FirstFallback)
    } else {
        return Err(Error::InsufficientData(format!(
            "{} first-branch and {} second-branch pairs",
            b.first.len(),
            b.second.len()
        )));
    };
    let (slope, intercept) = line(points, fit)?;
    if slope == 0.0 {
        return Err(Error::SingularFit("fitted line is flat".into()));
    }
    let a_hat = match branch_used {
        BranchUsed::Second => -intercept / slope,
        BranchUsed::FirstFallback => (1.0 - intercept) / slope,
    };
    if !(a_hat > 0.0 && a_hat < 1.0) {
        return Err(Error::InvalidEstimate { a_hat });
    }
    let in_range = a_hat > 0.5 && a_hat < GOLDEN;
    if !in_range {
        log::debug!("a_hat = {a_hat} lies outside the range of a(s)");
    }
    let residual = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(EstimateReport {
        a_hat,
        s_hat: a_to_s(a_hat)?,
        method,
        branch_used,
        branch_count: points.len(),
        residual,
        in_range,
        iterations: 1,
    })
}

/// Min-max estimate from lag-1 pairs `(x_i, x_{i+1})`.
pub fn estimate_minmax_pairs(pairs: &[(f64, f64)]) -> Result<EstimateReport> {
    fit_branches(&split_pairs(pairs.iter().copied()), Fit::Extremes, Method::MinMax)
}

/// Least-squares estimate from lag-1 pairs `(x_i, x_{i+1})`.
pub fn estimate_ls_pairs(pairs: &[(f64, f64)]) -> Result<EstimateReport> {
    fit_branches(&split_pairs(pairs.iter().copied()), Fit::Ols, Method::LeastSquares)
}

/// Min-max estimate from a path of at least [`MIN_PATH`] points.
pub fn estimate_minmax(path: &[f64]) -> Result<EstimateReport> {
    check_path(path, MIN_PATH)?;
    fit_branches(&classify_branches(path)?, Fit::Extremes, Method::MinMax)
}

/// Least-squares estimate from a path of at least [`MIN_PATH`] points.
pub fn estimate_ls(path: &[f64]) -> Result<EstimateReport> {
    check_path(path, MIN_PATH)?;
    fit_branches(&classify_branches(path)?, Fit::Ols, Method::LeastSquares)
}

/// How the refinement picks the next guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    /// `s_0 <- s~`.
    FixedPoint,
    /// Bisection on the sign of `s~(s_0) - s_0` over `[0.01, 0.99]`.
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub eps: f64,
    /// Starting guess; the min-max estimate of the raw path when absent.
    pub s0: Option<f64>,
    /// Orbit length behind each `F_n`.
    pub n: usize,
    /// Initial point of those orbits.
    pub x0: f64,
    pub max_iter: usize,
    pub update: Update,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            s0: None,
            n: 1_000_000,
            x0: std::f64::consts::PI - 3.0,
            max_iter: 25,
            update: Update::FixedPoint,
        }
    }
}

const GUESS_LOW: f64 = 0.01;
const GUESS_HIGH: f64 = 0.99;

/// One refinement step at the guess `s0`: transform the pairs through
/// `F_n(.; s0)`, fit the min-max line, and map its zero back through
/// `F_n^{-1}(.; s0)`.
pub fn refine_step(pairs: &[(f64, f64)], s0: f64, opts: &RefineOptions) -> Result<EstimateReport> {
    let mu = EmpiricalMeasure::build(&MapModel::new(s0)?, opts.x0, opts.n, 0)?;
    let transformed: Vec<(f64, f64)> =
        pairs.iter().map(|&(x, y)| (mu.cdf_unchecked(x), mu.cdf_unchecked(y))).collect();
    let b = split_pairs(transformed.iter().copied());
    let f = fit_branches(&b, Fit::Extremes, Method::Refined)?;
    let a_hat = mu.quantile_unchecked(f.a_hat);
    if !(a_hat > 0.0 && a_hat < 1.0) {
        return Err(Error::InvalidEstimate { a_hat });
    }
    Ok(EstimateReport {
        a_hat,
        s_hat: a_to_s(a_hat)?,
        in_range: a_hat > 0.5 && a_hat < GOLDEN,
        ..f
    })
}

/// Refined estimate; see the module docs.
///
/// Fails with [`Error::NotConverged`], carrying the last iterate, when the
/// guesses still move by `eps` or more after `max_iter` rounds.
pub fn estimate_refined(path: &[f64], opts: &RefineOptions) -> Result<EstimateReport> {
    check_path(path, MIN_REFINE_PATH)?;
    if !(opts.eps > 0.0) || opts.max_iter == 0 {
        return domain("refinement needs eps > 0 and at least one iteration");
    }
    let pairs: Vec<(f64, f64)> = path.windows(2).map(|w| (w[0], w[1])).collect();
    let start = match opts.s0 {
        Some(s0) => s0,
        None => estimate_minmax_pairs(&pairs)?.s_hat,
    }
    .clamp(GUESS_LOW, GUESS_HIGH);
    match opts.update {
        Update::FixedPoint => fixed_point(&pairs, start, opts),
        Update::Bisection => bisection(&pairs, opts),
    }
}

fn fixed_point(pairs: &[(f64, f64)], start: f64, opts: &RefineOptions) -> Result<EstimateReport> {
    let mut s0 = start;
    let mut last_step = f64::INFINITY;
    let mut best: Option<EstimateReport> = None;
    for it in 1..=opts.max_iter {
        let mut r = refine_step(pairs, s0, opts)?;
        r.iterations = it;
        last_step = (r.s_hat - s0).abs();
        log::debug!("refinement {it}: s0 = {s0}, s~ = {}", r.s_hat);
        if last_step < opts.eps {
            return Ok(r);
        }
        s0 = r.s_hat.clamp(GUESS_LOW, GUESS_HIGH);
        best = Some(r);
    }
    let best = best.expect("at least one iteration ran");
    log::warn!("refinement stopped after {} iterations without converging", opts.max_iter);
    Err(Error::NotConverged { iterations: opts.max_iter, last_step, best: Box::new(best) })
}

fn bisection(pairs: &[(f64, f64)], opts: &RefineOptions) -> Result<EstimateReport> {
    let gap = |s0: f64| refine_step(pairs, s0, opts).map(|r| (r.s_hat - s0, r));
    let (mut lo, mut hi) = (GUESS_LOW, GUESS_HIGH);
    let (g_lo, mut best) = gap(lo)?;
    let (g_hi, _) = gap(hi)?;
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Convergence(format!(
            "refinement mismatch has the same sign at s = {lo} and s = {hi}"
        )));
    }
    for it in 1..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let (g, mut r) = gap(mid)?;
        r.iterations = it;
        best = r;
        if g.abs() < opts.eps || hi - lo < opts.eps {
            return Ok(best);
        }
        if g.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, last_step: hi - lo, best: Box::new(best) })
}

/// Synthetic lag-1 pairs lying exactly on the two support lines of `T_s`,
/// with second-branch abscissae spread over `[a + margin, 1 - margin]` and
/// first-branch abscissae over `[margin, a - margin]`.
pub fn support_line_pairs(s: f64, count: usize, margin: f64) -> Result<Vec<(f64, f64)>> {
    if count < 2 {
        return domain("need at least two pairs per branch");
    }
    let a = solve_a(s)?;
    let spread = |lo: f64, hi: f64| (0..count).map(move |i| lo + (hi - lo) * i as f64 / (count - 1) as f64);
    let mut pairs: Vec<(f64, f64)> = spread(margin, a - margin).map(|x| (x, x / a)).collect();
    pairs.extend(spread(a + margin, 1.0 - margin).map(|x| (x, (x - a) / (1.0 - a))));
    Ok(pairs)
}
