//! Orbit-average approximation `mu_n` of the invariant measure, with the
//! piecewise-linear distribution function `F_n` and its inverse.
//!
//! `F_n` interpolates the empirical CDF linearly between the knots
//! `0, x_(1), ..., x_(n), 1`, taking the value `k/n` at the k-th sorted orbit
//! point. Repeated orbit values (floating-point collisions) collapse into one
//! knot carrying their combined count.
//!
//! The empirical CDF already reaches 1 at the largest orbit point, so `F_n`
//! is flat on `[x_(n), 1]`. [`EmpiricalMeasure::quantile`] returns the left
//! end of that flat piece for `u` just below 1 and returns exactly 1 at `u = 1`.

use crate::error::{domain, Error, Result};
use crate::map::{self, MapModel};
use crate::nodes::NodeTable;
use crate::parallel;

/// Orbits shorter than this trigger a warning; the approximation is poor.
pub const RECOMMENDED_MIN_LEN: usize = 1000;
/// Fewer distinct orbit values than this is treated as a collapsed orbit.
pub const MIN_DISTINCT: usize = 10;

#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    /// Interpolation knots `0, distinct sorted orbit values, 1`.
    knots: Vec<f64>,
    /// `cum[i]` is the number of orbit points `<= knots[i]`.
    cum: Vec<u64>,
    n: u64,
    /// Whether the trailing knot at 1 was added rather than observed.
    closed_at_one: bool,
    pub s: f64,
    pub x0: f64,
    /// Set when the orbit was shorter than [`RECOMMENDED_MIN_LEN`].
    pub small_sample: bool,
}

impl EmpiricalMeasure {
    /// Iterate from `x0`, skip `burnin` points and keep the next `n`.
    pub fn build(model: &MapModel, x0: f64, n: usize, burnin: usize) -> Result<Self> {
        if model.s() >= 1.0 {
            return domain("the invariant measure is not finite for s >= 1");
        }
        let mut orbit = map::orbit(model, x0, n + burnin)?;
        orbit.points.drain(..burnin);
        Self::from_points(model.s(), x0, orbit.points)
    }

    /// Build from an arbitrary sample of points in `[0, 1]`.
    pub fn from_points(s: f64, x0: f64, mut points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return domain("measure support points must lie in [0, 1]");
        }
        let n = points.len();
        if n < RECOMMENDED_MIN_LEN {
            log::warn!("building an empirical measure from only {n} points");
        }
        parallel::sort_floats(&mut points);

        let mut knots = Vec::with_capacity(n + 2);
        let mut cum = Vec::with_capacity(n + 2);
        knots.push(0.0);
        cum.push(0u64);
        let mut count = 0u64;
        for p in points {
            count += 1;
            let last = knots.len() - 1;
            if p == knots[last] {
                cum[last] = count;
            } else {
                knots.push(p);
                cum.push(count);
            }
        }
        let distinct = knots.len() - 1 + usize::from(cum[0] > 0);
        if distinct < MIN_DISTINCT {
            return Err(Error::DegenerateOrbit { distinct, required: MIN_DISTINCT });
        }
        let closed_at_one = *knots.last().unwrap() < 1.0;
        if closed_at_one {
            knots.push(1.0);
            cum.push(count);
        }
        Ok(Self {
            knots,
            cum,
            n: count,
            closed_at_one,
            s,
            x0,
            small_sample: n < RECOMMENDED_MIN_LEN,
        })
    }

    /// Number of orbit points backing the measure.
    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distinct orbit values in ascending order.
    pub fn support(&self) -> &[f64] {
        let end = self.knots.len() - usize::from(self.closed_at_one);
        let start = usize::from(self.cum[0] == 0);
        &self.knots[start..end]
    }

    /// Number of orbit points `<= x`.
    fn count_le(&self, x: f64) -> u64 {
        let i = self.knots.partition_point(|&k| k <= x);
        if i == 0 {
            0
        } else {
            self.cum[i - 1]
        }
    }

    fn count_lt(&self, x: f64) -> u64 {
        let i = self.knots.partition_point(|&k| k < x);
        if i == 0 {
            0
        } else {
            self.cum[i - 1]
        }
    }

    /// `mu_n([lo, hi])`: fraction of orbit points in the closed interval.
    pub fn measure_interval(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return domain(format!("interval [{lo}, {hi}] is not a subinterval of [0, 1]"));
        }
        Ok(self.mass(lo, hi))
    }

    /// Closed-interval mass without argument checks.
    #[inline]
    pub(crate) fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.count_le(hi) - self.count_lt(lo)) as f64 / self.n as f64
    }

    /// Mass of `[lo, hi]`, or 0 when the interval has collapsed to a point
    /// or is empty.
    #[inline]
    pub(crate) fn segment_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            0.0
        } else {
            self.mass(lo, hi)
        }
    }

    /// `mu_n(T_s^{-h}([lo, hi]))`, summing the masses of the `2^h` branch
    /// preimages of the interval.
    pub fn measure_preimage(&self, nodes: &NodeTable, lo: f64, hi: f64) -> Result<f64> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return domain(format!("interval [{lo}, {hi}] is not a subinterval of [0, 1]"));
        }
        Ok(nodes
            .branches()
            .iter()
            .map(|b| self.mass(b.eval_unchecked(lo), b.eval_unchecked(hi)))
            .sum())
    }

    /// `F_n(x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("cdf argument must lie in [0, 1], got {x}"));
        }
        Ok(self.cdf_unchecked(x))
    }

    #[inline]
    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        let n = self.n as f64;
        let i = self.knots.partition_point(|&k| k <= x);
        if i == 0 {
            return 0.0;
        }
        let lo = i - 1;
        if self.knots[lo] == x || lo + 1 == self.knots.len() {
            return self.cum[lo] as f64 / n;
        }
        let (x0, x1) = (self.knots[lo], self.knots[lo + 1]);
        let (f0, f1) = (self.cum[lo] as f64 / n, self.cum[lo + 1] as f64 / n);
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }

    /// `F_n^{-1}(u)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return domain(format!("quantile level must lie in [0, 1], got {u}"));
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let n = self.n as f64;
        // first knot whose CDF value reaches u
        let j = self.cum.partition_point(|&c| (c as f64 / n) < u);
        if j == 0 {
            return 0.0;
        }
        let (f0, f1) = (self.cum[j - 1] as f64 / n, self.cum[j] as f64 / n);
        let (x0, x1) = (self.knots[j - 1], self.knots[j]);
        x0 + (u - f0) / (f1 - f0) * (x1 - x0)
    }
}

/// Build `mu_n` for `s` from `x0` with no burn-in.
pub fn build_measure(model: &MapModel, x0: f64, n: usize) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::build(model, x0, n, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn measure(s: f64, x0: f64, n: usize) -> EmpiricalMeasure {
        build_measure(&MapModel::new(s).unwrap(), x0, n).unwrap()
    }

    #[test]
    fn boundary_values() {
        let mu = measure(0.5, 0.3, 20_000);
        assert_eq!(mu.cdf(0.0).unwrap(), 0.0);
        assert_eq!(mu.cdf(1.0).unwrap(), 1.0);
        assert_eq!(mu.quantile(0.0).unwrap(), 0.0);
        assert_eq!(mu.quantile(1.0).unwrap(), 1.0);
        assert_eq!(mu.measure_interval(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_at_sorted_points() {
        let orbit = map::orbit(&MapModel::new(0.4).unwrap(), 0.7, 5000).unwrap();
        let mut sorted = orbit.points.clone();
        sorted.sort_by(f64::total_cmp);
        let mu = EmpiricalMeasure::from_points(0.4, 0.7, orbit.points).unwrap();
        for k in [1usize, 17, 2500, 4999, 5000] {
            let got = mu.cdf(sorted[k - 1]).unwrap();
            assert!((got - k as f64 / 5000.0).abs() < 1e-15, "k={k}: {got}");
        }
    }

    #[test]
    fn degenerate_interval() {
        let mu = measure(0.5, 0.3, 10_000);
        assert_eq!(mu.measure_interval(0.123_456, 0.123_456).unwrap(), 0.0);
        let p = mu.support()[42];
        assert_eq!(mu.measure_interval(p, p).unwrap(), 1.0 / 10_000.0);
    }

    #[test]
    fn duplicates_are_weighted() {
        let mut pts: Vec<f64> = (1..=20).map(|i| i as f64 / 25.0).collect();
        pts.extend([0.2, 0.2, 0.2]);
        let mu = EmpiricalMeasure::from_points(0.5, 0.1, pts).unwrap();
        assert_eq!(mu.len(), 23);
        assert!((mu.measure_interval(0.2, 0.2).unwrap() - 4.0 / 23.0).abs() < 1e-15);
        assert!((mu.cdf(0.2).unwrap() - 8.0 / 23.0).abs() < 1e-15);
        let before = mu.cdf(0.199).unwrap();
        assert!(before < 8.0 / 23.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mu = measure(0.5, 0.3, 5000);
        assert!(mu.measure_interval(0.6, 0.4).is_err());
        assert!(mu.measure_interval(-0.1, 0.4).is_err());
        assert!(mu.cdf(1.5).is_err());
        assert!(mu.quantile(-0.5).is_err());
        assert!(build_measure(&MapModel::new(1.0).unwrap(), 0.3, 5000).is_err());
    }

    #[test]
    fn collapsed_orbit_is_rejected() {
        let err = EmpiricalMeasure::from_points(0.5, 0.1, vec![0.25; 2000]).unwrap_err();
        assert!(matches!(err, Error::DegenerateOrbit { distinct: 1, .. }));
    }

    #[test]
    fn small_sample_flag() {
        assert!(measure(0.5, 0.3, 200).small_sample);
        assert!(!measure(0.5, 0.3, 2000).small_sample);
    }

    #[test]
    fn burnin_drops_prefix() {
        let model = MapModel::new(0.3).unwrap();
        let full = map::orbit(&model, 0.4, 1100).unwrap();
        let mu = EmpiricalMeasure::build(&model, 0.4, 1000, 100).unwrap();
        let direct = EmpiricalMeasure::from_points(0.3, 0.4, full.points[100..].to_vec()).unwrap();
        assert_eq!(mu.support(), direct.support());
    }

    #[test]
    fn cdf_difference_tracks_counts() {
        // counting oracle straight over the orbit
        let model = MapModel::new(0.5).unwrap();
        let orbit = map::orbit(&model, 0.2718, 50_000).unwrap();
        let mu = EmpiricalMeasure::from_points(0.5, 0.2718, orbit.points.clone()).unwrap();
        let n = orbit.len() as f64;
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let (p, q) = (next(), next());
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            let direct = orbit.points.iter().filter(|&&x| lo <= x && x <= hi).count() as f64 / n;
            assert_eq!(mu.measure_interval(lo, hi).unwrap(), direct);
            let diff = mu.cdf(hi).unwrap() - mu.cdf(lo).unwrap();
            assert!((diff - direct).abs() <= 2.0 / n);
        }
    }

    #[test]
    fn median_is_stable_across_initial_points() {
        let medians: Vec<f64> = [0.141_592_653_589_793, 0.414_213_562_373_095, 0.645_751_311_064_590]
            .iter()
            .map(|&x0| measure(0.5, x0, 3_000_000).quantile(0.5).unwrap())
            .collect();
        let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo <= 0.01, "medians {medians:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quantile_inverts_cdf(u in 0.0f64..=1.0, x in 0.0f64..1.0) {
            let mu = measure(0.35, 0.61, 20_000);
            prop_assert!((mu.cdf(mu.quantile(u).unwrap()).unwrap() - u).abs() < 1e-12);
            let top = *mu.support().last().unwrap();
            if x <= top {
                prop_assert!((mu.quantile(mu.cdf(x).unwrap()).unwrap() - x).abs() < 1e-10);
            }
        }

        #[test]
        fn cdf_strictly_increasing_below_top(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mu = measure(0.35, 0.61, 20_000);
            let top = *mu.support().last().unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo < hi && hi <= top {
                prop_assert!(mu.cdf(lo).unwrap() < mu.cdf(hi).unwrap());
            }
        }

        #[test]
        fn interval_mass_is_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let mu = measure(0.35, 0.61, 20_000);
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let whole = mu.measure_interval(v[0], v[2]).unwrap();
            let left = mu.measure_interval(v[0], v[1]).unwrap();
            let right = mu.measure_interval(v[1], v[2]).unwrap();
            let shared = mu.measure_interval(v[1], v[1]).unwrap();
            prop_assert!((whole - (left + right - shared)).abs() < 1e-12);
        }
    }
}
