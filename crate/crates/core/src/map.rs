//! The Manneville-Pomeau transformation `T_s(x) = x + x^(1+s) mod 1`.
//!
//! On `[0, a)` the map is `x + x^(1+s)`; on `[a, 1)` it wraps and becomes
//! `x + x^(1+s) - 1`, where `a = a(s)` is the unique root of
//! `a + a^(1+s) = 1`. Iterating `h` times splits `[0, 1)` into `2^h` nodes,
//! each mapped increasingly onto `[0, 1)`. The node containing `x` is read
//! off the sequence of wraps taken along the orbit (see [`node_index`]).

use crate::error::{domain, Error, Result};

/// Lower end of the bracket searched by [`solve_a`].
const A_LOWER: f64 = 0.5;
/// Upper end of the bracket searched by [`solve_a`]; just above `(sqrt(5)-1)/2`.
const A_UPPER: f64 = 0.6181;
const BISECTION_WIDTH: f64 = 1e-14;

/// Parameter `s` of the map together with its cached discontinuity point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapModel {
    s: f64,
    a: f64,
}

impl MapModel {
    /// Accepts `0 < s <= 1`. The boundary `s = 1` is allowed so the map can be
    /// evaluated there, but the invariant measure is only finite for `s < 1`
    /// and [`crate::measure::EmpiricalMeasure`] rejects it.
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return domain(format!("s must lie in (0, 1], got {s}"));
        }
        Ok(Self { s, a: solve_a(s)? })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Discontinuity point `a(s)`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// `T_s(x)` for `x` in `[0, 1)`.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return domain(format!("map argument must lie in [0, 1), got {x}"));
        }
        Ok(step(self.s, x).0)
    }

    /// `T_s^h(x)` without domain checks; `x = 1` is treated as the left limit
    /// and maps to 1.
    pub fn iterate(&self, x: f64, h: usize) -> f64 {
        iterate(self.s, x, h)
    }
}

/// Sequence `(x0, T(x0), ..., T^(n-1)(x0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub points: Vec<f64>,
    pub s: f64,
    pub x0: f64,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One application of the map; the flag reports whether the wrap occurred.
///
/// Subtracting 1 only when the lift reaches 1 keeps the result exact in the
/// unwrapped branch and avoids a generic `fract` near the discontinuity.
#[inline]
pub(crate) fn step(s: f64, x: f64) -> (f64, bool) {
    let lift = lift(s, x);
    if lift >= 1.0 {
        (lift - 1.0, true)
    } else {
        (lift, false)
    }
}

/// The unreduced map `x + x^(1+s)`.
#[inline]
pub(crate) fn lift(s: f64, x: f64) -> f64 {
    x + x.powf(1.0 + s)
}

pub(crate) fn iterate(s: f64, mut x: f64, h: usize) -> f64 {
    if x >= 1.0 {
        return 1.0;
    }
    for _ in 0..h {
        x = step(s, x).0;
    }
    x
}

/// `T_s^h(x)` together with the index of the node of `T_s^h` containing `x`.
///
/// The node index is the wrap sequence read as a binary number, first
/// iterate most significant. `x = 1` belongs to the last node.
pub(crate) fn iterate_with_node(s: f64, mut x: f64, h: usize) -> (f64, usize) {
    if x >= 1.0 {
        return (1.0, (1usize << h) - 1);
    }
    let mut node = 0usize;
    for _ in 0..h {
        let (y, wrapped) = step(s, x);
        node = (node << 1) | usize::from(wrapped);
        x = y;
    }
    (x, node)
}

/// Index `k` of the node `[a_{h,k}, a_{h,k+1})` of `T_s^h` containing `x`.
pub fn node_index(model: &MapModel, x: f64, h: usize) -> usize {
    iterate_with_node(model.s, x, h).1
}

/// `T_s(x)` for `x` in `[0, 1)`.
pub fn apply_map(model: &MapModel, x: f64) -> Result<f64> {
    model.apply(x)
}

/// Iterate the map `n - 1` times from `x0`.
///
/// `x0` must lie strictly inside `(0, 1)`: 0 is a fixed point and would
/// produce a constant orbit.
pub fn orbit(model: &MapModel, x0: f64, n: usize) -> Result<Orbit> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return domain(format!("initial point must lie in (0, 1), got {x0}"));
    }
    if n == 0 {
        return domain("orbit length must be at least 1");
    }
    let mut points = Vec::new();
    points.try_reserve_exact(n).map_err(|_| Error::Resource(n))?;
    let s = model.s;
    let mut x = x0;
    points.push(x);
    for _ in 1..n {
        x = step(s, x).0;
        points.push(x);
    }
    Ok(Orbit { points, s, x0 })
}

/// Root `a` of `a + a^(1+s) = 1`, found by bisection on `[0.5, 0.6181]`.
pub fn solve_a(s: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return domain(format!("s must lie in (0, 1], got {s}"));
    }
    let f = |a: f64| a + a.powf(1.0 + s) - 1.0;
    let (mut lo, mut hi) = (A_LOWER, A_UPPER);
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(Error::Convergence(format!(
            "a + a^(1+s) - 1 does not change sign on [{lo}, {hi}] for s = {s}"
        )));
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse of [`solve_a`]: `s = log(1 - a) / log(a) - 1`.
pub fn a_to_s(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return domain(format!("a must lie in (0, 1), got {a}"));
    }
    Ok((1.0 - a).ln() / a.ln() - 1.0)
}
