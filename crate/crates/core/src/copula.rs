//! Lag copulas of the Manneville-Pomeau process and their support.
//!
//! For an increasing observation function the lag-`h` copula is
//!
//! ```text
//! C(u, v) = sum_{k < n0} mu([a_k, T_k(q(v))]) + mu([a_{n0}, min(q(u), T_{n0}(q(v)))])
//! ```
//!
//! where `a_k` are the node endpoints of `T_s^h`, `T_k` the branch inverses,
//! `q = F^{-1}` and `n0` the cell `[F(a_k), F(a_{k+1}))` holding `u`. Every
//! ingredient is replaced by its orbit approximation. A decreasing
//! observation function yields the survival copula `u + v - 1 + C(1-u, 1-v)`.
//!
//! The copula is singular: its mass sits on `2^h` line segments, one per
//! node, each rising from height 0 to height 1 across its cell.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::map::MapModel;
use crate::measure::EmpiricalMeasure;
use crate::nodes::{node_endpoints, NodeTable, MAX_LAG};
use crate::parallel;

/// Largest number of coordinates accepted by
/// [`CopulaModel::mcopula_eval_decreasing`]; the evaluation has `2^d` terms.
pub const MAX_DECREASING_DIM: usize = 6;

/// Monotonicity of the observation function applied to the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone)]
struct LagTable {
    nodes: NodeTable,
    /// `F_n(a_{h,k})` for `k = 0..=2^h`.
    bounds: Vec<f64>,
}

/// Index `k` of the half-open cell `[bounds[k], bounds[k+1])` holding `u`;
/// `u = 1` goes to the last cell.
#[inline]
pub(crate) fn cell_of(bounds: &[f64], u: f64) -> usize {
    let cells = bounds.len() - 1;
    bounds.partition_point(|&b| b <= u).saturating_sub(1).min(cells - 1)
}

fn check_unit(values: &[f64]) -> Result<()> {
    if values.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return domain(format!("copula arguments must lie in [0, 1], got {values:?}"));
    }
    Ok(())
}

/// An empirical measure plus node tables for the lags in use.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    model: MapModel,
    mu: Arc<EmpiricalMeasure>,
    m: usize,
    direction: Direction,
    lags: BTreeMap<usize, LagTable>,
}

impl CopulaModel {
    /// Assemble a model with no lags prepared yet.
    pub fn new(
        model: MapModel,
        mu: Arc<EmpiricalMeasure>,
        m: usize,
        direction: Direction,
    ) -> Result<Self> {
        if model.s() != mu.s {
            return domain(format!("map has s = {} but the measure was built for s = {}", model.s(), mu.s));
        }
        Ok(Self { model, mu, m, direction, lags: BTreeMap::new() })
    }

    /// Iterate an orbit of length `n` from `x0` and prepare the given lags on
    /// a grid of `m` points.
    pub fn build(
        s: f64,
        x0: f64,
        n: usize,
        m: usize,
        lags: &[usize],
        direction: Direction,
    ) -> Result<Self> {
        let model = MapModel::new(s)?;
        let mu = Arc::new(EmpiricalMeasure::build(&model, x0, n, 0)?);
        let mut cm = Self::new(model, mu, m, direction)?;
        cm.prepare_lags(lags)?;
        Ok(cm)
    }

    /// Compute node tables for any lag not prepared yet.
    pub fn prepare_lags(&mut self, lags: &[usize]) -> Result<()> {
        for &h in lags {
            if self.lags.contains_key(&h) {
                continue;
            }
            let nodes = node_endpoints(&self.model, h, self.m.max(1 << h))?;
            let bounds = nodes.endpoints().iter().map(|&a| self.mu.cdf_unchecked(a)).collect();
            self.lags.insert(h, LagTable { nodes, bounds });
        }
        Ok(())
    }

    /// Prepare every lag difference needed by the multivariate copulas of
    /// the time points `times`.
    pub fn prepare_times(&mut self, times: &[usize]) -> Result<()> {
        let mut diffs = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            for &r in &times[i + 1..] {
                if r > t {
                    diffs.push(r - t);
                }
            }
        }
        self.prepare_lags(&diffs)
    }

    pub fn map_model(&self) -> &MapModel {
        &self.model
    }

    pub fn measure(&self) -> &EmpiricalMeasure {
        &self.mu
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    /// Lags with a prepared node table, ascending.
    pub fn lags(&self) -> impl Iterator<Item = usize> + '_ {
        self.lags.keys().copied()
    }

    fn table(&self, h: usize) -> Result<&LagTable> {
        self.lags.get(&h).ok_or(Error::MissingLag(h))
    }

    pub fn nodes(&self, h: usize) -> Result<&NodeTable> {
        Ok(&self.table(h)?.nodes)
    }

    /// Cell bounds `F_n(a_{h,k})`, `k = 0..=2^h`.
    pub fn cell_bounds(&self, h: usize) -> Result<&[f64]> {
        Ok(&self.table(h)?.bounds)
    }

    /// Lag-`h` copula in the model's direction.
    pub fn eval(&self, h: usize, u: f64, v: f64) -> Result<f64> {
        match self.direction {
            Direction::Increasing => self.increasing(h, u, v),
            Direction::Decreasing => self.decreasing(h, u, v),
        }
    }

    /// Lag-`h` copula for an increasing observation function.
    pub fn increasing(&self, h: usize, u: f64, v: f64) -> Result<f64> {
        check_unit(&[u, v])?;
        Ok(self.increasing_unchecked(self.table(h)?, u, v))
    }

    /// Survival form `u + v - 1 + C(1 - u, 1 - v)`; may dip marginally below 0.
    pub fn decreasing(&self, h: usize, u: f64, v: f64) -> Result<f64> {
        check_unit(&[u, v])?;
        let t = self.table(h)?;
        Ok(u + v - 1.0 + self.increasing_unchecked(t, 1.0 - u, 1.0 - v))
    }

    fn increasing_unchecked(&self, t: &LagTable, u: f64, v: f64) -> f64 {
        let mu = &*self.mu;
        let a = t.nodes.endpoints();
        let branches = t.nodes.branches();
        let n0 = cell_of(&t.bounds, u);
        let qv = mu.quantile_unchecked(v);
        let mut total = 0.0;
        for k in 0..n0 {
            total += mu.segment_mass(a[k], branches[k].eval_unchecked(qv));
        }
        let qu = mu.quantile_unchecked(u);
        total + mu.segment_mass(a[n0], qu.min(branches[n0].eval_unchecked(qv)))
    }

    /// Copula of `(X_{t_1}, ..., X_{t_n})` for an increasing observation
    /// function. `times` must be strictly increasing; the node tables of
    /// `t_i - t_1` must be prepared.
    pub fn mcopula_eval(&self, u: &[f64], times: &[usize]) -> Result<f64> {
        if u.len() != times.len() || u.len() < 2 {
            return domain("need at least two coordinates, one per time point");
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("time points must be strictly increasing, got {times:?}"));
        }
        check_unit(u)?;
        let lags: Vec<usize> = times.iter().map(|&t| t - times[0]).collect();
        self.mcopula_unchecked(u, &lags)
    }

    /// `lags[0]` is 0 and the rest strictly increase.
    fn mcopula_unchecked(&self, u: &[f64], lags: &[usize]) -> Result<f64> {
        let mu = &*self.mu;
        let top = self.table(lags[lags.len() - 1])?;
        let a = top.nodes.endpoints();
        // T_{h_i, j}(q(u_i)) for every branch j, nondecreasing in j
        let mut inverses = Vec::with_capacity(lags.len() - 1);
        for (&h, &ui) in lags[1..].iter().zip(&u[1..]) {
            let t = self.table(h)?;
            let q = mu.quantile_unchecked(ui);
            let values: Vec<f64> = t.nodes.branches().iter().map(|b| b.eval_unchecked(q)).collect();
            inverses.push((t.nodes.endpoints(), values));
        }
        let b = |k: usize| {
            inverses
                .iter()
                .map(|(ends, values)| {
                    let j = values.partition_point(|&x| x <= a[k]);
                    if j < values.len() && ends[j] < a[k + 1] {
                        values[j]
                    } else {
                        a[k]
                    }
                })
                .fold(f64::INFINITY, f64::min)
        };
        let n0 = cell_of(&top.bounds, u[0]);
        let total: f64 = (0..n0).map(|k| mu.segment_mass(a[k], b(k))).sum();
        let qu = mu.quantile_unchecked(u[0]);
        Ok(total + mu.segment_mass(a[n0], qu.min(b(n0))))
    }

    /// Copula of `(X_{t_0}, ..., X_{t_n})` for a decreasing observation
    /// function, by inclusion-exclusion over the increasing-case copulas of
    /// every sub-vector. Needs node tables for all pairwise differences of
    /// `times` (see [`CopulaModel::prepare_times`]).
    pub fn mcopula_eval_decreasing(&self, u: &[f64], times: &[usize]) -> Result<f64> {
        let d = u.len();
        if d > MAX_DECREASING_DIM {
            return Err(Error::DimensionCap { dim: d, limit: MAX_DECREASING_DIM });
        }
        if d != times.len() || d < 2 {
            return domain("need at least two coordinates, one per time point");
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("time points must be strictly increasing, got {times:?}"));
        }
        check_unit(u)?;
        let reflected: Vec<f64> = u.iter().map(|x| 1.0 - x).collect();
        let mut total = 0.0;
        let mut sub_u = Vec::with_capacity(d);
        let mut sub_lags = Vec::with_capacity(d);
        for mask in 0u32..(1 << d) {
            sub_u.clear();
            sub_lags.clear();
            for i in 0..d {
                if mask & (1 << i) != 0 {
                    sub_u.push(reflected[i]);
                    sub_lags.push(times[i]);
                }
            }
            let term = match sub_u.len() {
                0 => 1.0,
                1 => sub_u[0],
                _ => {
                    let first = sub_lags[0];
                    sub_lags.iter_mut().for_each(|t| *t -= first);
                    self.mcopula_unchecked(&sub_u, &sub_lags)?
                }
            };
            if mask.count_ones() % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
        Ok(total)
    }

    /// Evaluate the lag-`h` copula on the `g x g` grid `i / (g - 1)`,
    /// row-major in `u`.
    pub fn grid(&self, h: usize, g: usize) -> Result<Vec<(f64, f64, f64)>> {
        if g < 2 {
            return domain("grid needs at least two points per axis");
        }
        let t = self.table(h)?;
        let step = 1.0 / (g - 1) as f64;
        let point = |i: usize| if i + 1 == g { 1.0 } else { i as f64 * step };
        let direction = self.direction;
        Ok(parallel::map_range(g * g, |idx| {
            let (u, v) = (point(idx / g), point(idx % g));
            let c = match direction {
                Direction::Increasing => self.increasing_unchecked(t, u, v),
                Direction::Decreasing => u + v - 1.0 + self.increasing_unchecked(t, 1.0 - u, 1.0 - v),
            };
            (u, v, c)
        }))
    }

    /// Support of the lag-`h` copula in the model's direction.
    pub fn support(&self, h: usize) -> Result<SupportPolyline> {
        let t = self.table(h)?;
        Ok(SupportPolyline::from_bounds(h, &t.bounds, self.direction))
    }
}

/// One linear piece of the copula support, rising from `(x0, y0)` to
/// `(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Node of `T_s^h` the segment comes from.
    pub k: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Segment {
    /// Height of the segment above `u`.
    #[inline]
    pub fn at(&self, u: f64) -> f64 {
        let w = self.x1 - self.x0;
        if w <= 0.0 {
            return self.y1;
        }
        self.y0 + (self.y1 - self.y0) * (u - self.x0) / w
    }
}

/// The `2^h` segments carrying the mass of the lag-`h` copula, ordered by
/// abscissa.
///
/// For an increasing observation function segment `k` spans the cell
/// `[F(a_k), F(a_{k+1})]`. The decreasing case is the point reflection
/// through `(1/2, 1/2)`: node `k` spans `[1 - F(a_{k+1}), 1 - F(a_k)]`.
/// In both cases every segment rises from 0 to 1.
#[derive(Debug, Clone)]
pub struct SupportPolyline {
    pub h: usize,
    pub direction: Direction,
    segments: Vec<Segment>,
    breaks: Vec<f64>,
}

impl SupportPolyline {
    fn from_bounds(h: usize, bounds: &[f64], direction: Direction) -> Self {
        let cells = bounds.len() - 1;
        let segments: Vec<Segment> = match direction {
            Direction::Increasing => (0..cells)
                .map(|k| Segment { k, x0: bounds[k], y0: 0.0, x1: bounds[k + 1], y1: 1.0 })
                .collect(),
            Direction::Decreasing => (0..cells)
                .rev()
                .map(|k| Segment { k, x0: 1.0 - bounds[k + 1], y0: 0.0, x1: 1.0 - bounds[k], y1: 1.0 })
                .collect(),
        };
        let mut breaks: Vec<f64> = segments.iter().map(|s| s.x0).collect();
        breaks.push(segments[cells - 1].x1);
        Self { h, direction, segments, breaks }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Abscissae delimiting the segments, ascending.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Segment whose half-open cell holds `u`.
    pub fn locate(&self, u: f64) -> &Segment {
        &self.segments[cell_of(&self.breaks, u)]
    }

    /// Distance from `(u, v)` to the nearest segment whose cell contains `u`,
    /// measured vertically.
    pub fn vertical_distance(&self, u: f64, v: f64) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.x0 <= u && u <= s.x1)
            .map(|s| (v - s.at(u)).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Support polyline of the lag-`nodes.h()` copula.
pub fn support_polyline(
    model: &MapModel,
    nodes: &NodeTable,
    mu: &EmpiricalMeasure,
    direction: Direction,
) -> Result<SupportPolyline> {
    if model.s() != nodes.s() || model.s() != mu.s {
        return domain("map, node table and measure must share the same s");
    }
    if nodes.h() > MAX_LAG {
        return domain(format!("lag {} exceeds {MAX_LAG}", nodes.h()));
    }
    let bounds: Vec<f64> = nodes.endpoints().iter().map(|&a| mu.cdf_unchecked(a)).collect();
    Ok(SupportPolyline::from_bounds(nodes.h(), &bounds, direction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map;

    const N: usize = 400_000;

    fn model(s: f64, lags: &[usize], direction: Direction) -> CopulaModel {
        CopulaModel::build(s, std::f64::consts::FRAC_1_PI, N, 10_000, lags, direction).unwrap()
    }

    /// Empirical copula of `(F(x_t), F(x_{t+lag_1}), ...)` along the measure's orbit.
    fn orbit_copula(cm: &CopulaModel, x0: f64, lags: &[usize], reflect: bool) -> impl Fn(&[f64]) -> f64 {
        let mu = cm.measure();
        let pts = map::orbit(cm.map_model(), x0, N).unwrap().points;
        let top = *lags.last().unwrap();
        let rows: Vec<Vec<f64>> = (0..N - top)
            .map(|t| {
                lags.iter()
                    .map(|&l| {
                        let f = mu.cdf(pts[t + l]).unwrap();
                        if reflect {
                            1.0 - f
                        } else {
                            f
                        }
                    })
                    .collect()
            })
            .collect();
        move |u: &[f64]| {
            let hits = rows.iter().filter(|r| r.iter().zip(u).all(|(x, b)| x <= b)).count();
            hits as f64 / rows.len() as f64
        }
    }

    #[test]
    fn cell_lookup_is_half_open() {
        let b = [0.0, 0.25, 0.5, 1.0];
        assert_eq!(cell_of(&b, 0.0), 0);
        assert_eq!(cell_of(&b, 0.25), 1);
        assert_eq!(cell_of(&b, 0.49), 1);
        assert_eq!(cell_of(&b, 1.0), 2);
    }

    #[test]
    fn grounded_and_uniform_margins() {
        for h in [1, 2] {
            let cm = model(0.4, &[h], Direction::Increasing);
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                assert_eq!(cm.increasing(h, x, 0.0).unwrap(), 0.0);
                assert_eq!(cm.increasing(h, 0.0, x).unwrap(), 0.0);
                assert!((cm.increasing(h, x, 1.0).unwrap() - x).abs() < 0.01);
                assert!((cm.increasing(h, 1.0, x).unwrap() - x).abs() < 0.01);
            }
        }
    }

    #[test]
    fn decreasing_margins() {
        let cm = model(0.4, &[1], Direction::Decreasing);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((cm.eval(1, x, 1.0).unwrap() - x).abs() < 0.01);
            assert!(cm.eval(1, 0.0, x).unwrap().abs() < 0.01);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let cm = model(0.4, &[1], Direction::Increasing);
        assert!(cm.increasing(1, 1.1, 0.5).is_err());
        assert!(matches!(cm.increasing(3, 0.5, 0.5), Err(Error::MissingLag(3))));
        assert!(cm.mcopula_eval(&[0.5, 0.5], &[2, 1]).is_err());
        let u = [0.5; 7];
        let t: Vec<usize> = (0..7).collect();
        assert!(matches!(
            cm.mcopula_eval_decreasing(&u, &t),
            Err(Error::DimensionCap { dim: 7, limit: 6 })
        ));
    }

    #[test]
    fn monotone_in_each_argument() {
        let cm = model(0.1, &[2], Direction::Increasing);
        for fixed in [0.2, 0.5, 0.9] {
            let mut prev_u = 0.0;
            let mut prev_v = 0.0;
            for i in 0..=200 {
                let x = i as f64 / 200.0;
                let cu = cm.increasing(2, x, fixed).unwrap();
                let cv = cm.increasing(2, fixed, x).unwrap();
                assert!(cu >= prev_u - 1e-12 && cv >= prev_v - 1e-12);
                prev_u = cu;
                prev_v = cv;
            }
        }
    }

    #[test]
    fn matches_orbit_pairs() {
        let x0 = std::f64::consts::FRAC_1_PI;
        for (s, h) in [(0.1, 1), (0.4, 2)] {
            let cm = model(s, &[h], Direction::Increasing);
            let oracle = orbit_copula(&cm, x0, &[0, h], false);
            for i in 1..10 {
                for j in 1..10 {
                    let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
                    let c = cm.increasing(h, u, v).unwrap();
                    assert!((c - oracle(&[u, v])).abs() < 0.01, "s={s} h={h} ({u},{v})");
                }
            }
        }
    }

    #[test]
    fn decreasing_matches_reflected_orbit_pairs() {
        let x0 = std::f64::consts::FRAC_1_PI;
        let cm = model(0.3, &[1], Direction::Decreasing);
        let oracle = orbit_copula(&cm, x0, &[0, 1], true);
        for i in 1..10 {
            for j in 1..10 {
                let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
                assert!((cm.eval(1, u, v).unwrap() - oracle(&[u, v])).abs() < 0.01);
            }
        }
    }

    #[test]
    fn two_dimensional_mcopula_is_the_bivariate_copula() {
        let mut cm = model(0.4, &[1, 3], Direction::Increasing);
        cm.prepare_times(&[2, 5]).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
                let a = cm.increasing(3, u, v).unwrap();
                assert_eq!(cm.mcopula_eval(&[u, v], &[2, 5]).unwrap(), a);
                let d = cm.decreasing(3, u, v).unwrap();
                assert!((cm.mcopula_eval_decreasing(&[u, v], &[2, 5]).unwrap() - d).abs() < 1e-12);
            }
        }
        assert_eq!(cm.mcopula_eval(&[0.0, 0.7, 0.3], &[0, 1, 3]).unwrap(), 0.0);
    }

    #[test]
    fn trivariate_matches_orbit_triples() {
        let x0 = std::f64::consts::FRAC_1_PI;
        let mut cm = model(0.3, &[1, 2], Direction::Increasing);
        cm.prepare_times(&[0, 1, 2]).unwrap();
        let plain = orbit_copula(&cm, x0, &[0, 1, 2], false);
        let reflected = orbit_copula(&cm, x0, &[0, 1, 2], true);
        for i in 1..5 {
            for j in 1..5 {
                for l in 1..5 {
                    let u = [i as f64 / 5.0, j as f64 / 5.0, l as f64 / 5.0];
                    let c = cm.mcopula_eval(&u, &[0, 1, 2]).unwrap();
                    assert!((c - plain(&u)).abs() < 0.02, "{u:?}");
                    let d = cm.mcopula_eval_decreasing(&u, &[0, 1, 2]).unwrap();
                    assert!((d - reflected(&u)).abs() < 0.03, "{u:?}");
                }
            }
        }
        let ones = cm.mcopula_eval_decreasing(&[1.0; 3], &[0, 1, 2]).unwrap();
        assert!((ones - 1.0).abs() < 0.02);
    }

    #[test]
    fn polyline_shape() {
        for h in [1, 2, 3] {
            let cm = model(0.4, &[h], Direction::Increasing);
            let p = cm.support(h).unwrap();
            assert_eq!(p.segments().len(), 1 << h);
            assert_eq!(p.breaks()[0], 0.0);
            assert_eq!(*p.breaks().last().unwrap(), 1.0);
            assert!(p.breaks().windows(2).all(|w| w[0] <= w[1]));
        }
        let cm = model(0.4, &[1], Direction::Increasing);
        let p = cm.support(1).unwrap();
        let a = cm.nodes(1).unwrap().endpoints()[1];
        assert_eq!(p.segments()[0].x1, cm.measure().cdf(a).unwrap());

        let mirrored = support_polyline(cm.map_model(), cm.nodes(1).unwrap(), cm.measure(), Direction::Decreasing).unwrap();
        for (s, m) in p.segments().iter().zip(mirrored.segments().iter().rev()) {
            assert_eq!(s.k, m.k);
            assert!((s.x0 - (1.0 - m.x1)).abs() < 1e-15);
            assert!((s.at(0.5 * (s.x0 + s.x1)) - (1.0 - m.at(1.0 - 0.5 * (s.x0 + s.x1)))).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_corners() {
        let cm = model(0.1, &[1], Direction::Increasing);
        let g = cm.grid(1, 11).unwrap();
        assert_eq!(g.len(), 121);
        assert_eq!(g[0], (0.0, 0.0, 0.0));
        assert!((g[120].2 - 1.0).abs() < 0.01);
        assert!(g[..11].iter().all(|p| p.2 == 0.0));
    }
}
