//! Nodes of `T_s^h` and interpolated branch inverses.
//!
//! `T_s^h` is continuous and increasing on each of its `2^h` nodes
//! `[a_{h,k}, a_{h,k+1})` and maps every node onto `[0, 1)`. The node
//! endpoints are located on a uniform grid (a drop of `T_s^h` between two
//! consecutive grid points marks a cell holding an endpoint), estimated by
//! linear interpolation of a continuous lift through 1, then polished by
//! bisection inside the cell. Each branch inverse `T_{h,k}` is the linear
//! interpolant of the grid values of `T_s^h` on node `k`, anchored at
//! `(0, a_{h,k})` and `(1, a_{h,k+1})`.
//!
//! Every cell holding an endpoint receives `m / 2^h` extra grid points so the
//! inverses stay accurate where `T_s^h` is steepest.

use crate::error::{domain, Error, Result};
use crate::map::{iterate, iterate_with_node, lift, MapModel};
use crate::parallel;

/// Largest supported lag; `2^h` branches of knot data are stored.
pub const MAX_LAG: usize = 20;

const MAX_BISECTION_STEPS: usize = 40;

/// Linear interpolant of one branch inverse of `T_s^h`.
#[derive(Debug, Clone)]
pub struct BranchInverse {
    pub h: usize,
    pub k: usize,
    /// Abscissae in node `k`, from `a_{h,k}` to `a_{h,k+1}`.
    xs: Vec<f64>,
    /// `T_s^h` at `xs`, from 0 to 1, strictly increasing.
    ys: Vec<f64>,
}

impl BranchInverse {
    /// `T^m_{h,k}(y)`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return domain(format!("branch inverse argument must lie in [0, 1], got {y}"));
        }
        Ok(self.eval_unchecked(y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, y: f64) -> f64 {
        let last = self.ys.len() - 1;
        if y <= 0.0 {
            return self.xs[0];
        }
        if y >= 1.0 {
            return self.xs[last];
        }
        let i = self.ys.partition_point(|&v| v <= y).clamp(1, last);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        x0 + (x1 - x0) / (y1 - y0) * (y - y0)
    }

    /// Left end `a_{h,k}` of the node.
    pub fn lower(&self) -> f64 {
        self.xs[0]
    }

    /// Right end `a_{h,k+1}` of the node.
    pub fn upper(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Interpolation knots as `(x, T_s^h(x))` pairs.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn knot_count(&self) -> usize {
        self.xs.len()
    }
}

/// Approximate node endpoints of `T_s^h` plus the branch inverses.
#[derive(Debug, Clone)]
pub struct NodeTable {
    s: f64,
    h: usize,
    m: usize,
    endpoints: Vec<f64>,
    branches: Vec<BranchInverse>,
}

impl NodeTable {
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> usize {
        self.h
    }

    /// Size of the uniform base grid.
    pub fn grid_size(&self) -> usize {
        self.m
    }

    /// `a_{h,0} = 0 < a_{h,1} < ... < a_{h,2^h} = 1`.
    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn branches(&self) -> &[BranchInverse] {
        &self.branches
    }

    pub fn branch(&self, k: usize) -> &BranchInverse {
        &self.branches[k]
    }

    /// Number of nodes, `2^h`.
    pub fn node_count(&self) -> usize {
        self.branches.len()
    }
}

fn check_lag(h: usize) -> Result<()> {
    if h == 0 || h > MAX_LAG {
        return domain(format!("lag must lie in 1..={MAX_LAG}, got {h}"));
    }
    Ok(())
}

fn drops(values: &[f64]) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] > w[1])
        .map(|(i, _)| i)
        .collect()
}

/// Indices `i` with `T_s^h(grid[i]) > T_s^h(grid[i+1])`.
///
/// The grid must be strictly ascending, start at 0, end at 1 and hold at
/// least `2^h` points. Fails with [`Error::Resolution`] unless exactly
/// `2^h - 1` drops are found.
pub fn detect_discontinuities(model: &MapModel, h: usize, grid: &[f64]) -> Result<Vec<usize>> {
    check_lag(h)?;
    let nodes = 1usize << h;
    if grid.len() < nodes.max(2) {
        return domain(format!("grid of {} points cannot resolve {nodes} nodes", grid.len()));
    }
    if grid[0] != 0.0 || grid[grid.len() - 1] != 1.0 {
        return domain("grid must include 0 and 1");
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return domain("grid must be strictly ascending");
    }
    let s = model.s();
    let values = parallel::map_slice(grid, |&x| iterate(s, x, h));
    let found = drops(&values);
    if found.len() != nodes - 1 {
        return Err(Error::Resolution { h, found: found.len(), expected: nodes - 1 });
    }
    Ok(found)
}

/// Locate the boundary between nodes `left_node` and `left_node + 1` inside
/// `[lo, hi]`.
///
/// Both cell ends share their wrap history up to some step `j`; there the
/// left end stays below 1 and the right end wraps. The lift
/// `G(x) = y + y^(1+s)` with `y = T_s^j(x)` is continuous and increasing
/// on the cell and crosses 1 exactly at the boundary. Returns the linear
/// interpolation of `G` through 1 and the bisection-refined boundary.
fn locate_endpoint(s: f64, h: usize, left_node: usize, lo: f64, hi: f64) -> (f64, f64) {
    let differing = left_node ^ (left_node + 1);
    let top_bit = usize::BITS as usize - 1 - differing.leading_zeros() as usize;
    let split_step = h - 1 - top_bit;
    let g = |x: f64| lift(s, iterate(s, x, split_step));

    let (g_lo, g_hi) = (g(lo), g(hi));
    let interpolated = lo + (hi - lo) / (g_hi - g_lo) * (1.0 - g_lo);

    let (mut left, mut right) = (lo, hi);
    if interpolated > left && interpolated < right {
        if g(interpolated) < 1.0 {
            left = interpolated;
        } else {
            right = interpolated;
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (left + right);
        if mid <= left || mid >= right {
            break;
        }
        if g(mid) < 1.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    (interpolated, right)
}

/// Build the node table of `T_s^h` from a uniform grid of `m` points.
pub fn node_endpoints(model: &MapModel, h: usize, m: usize) -> Result<NodeTable> {
    check_lag(h)?;
    let nodes = 1usize << h;
    if m < nodes.max(2) {
        return domain(format!("grid size {m} is below 2^h = {nodes}"));
    }
    let s = model.s();
    let step = 1.0 / (m - 1) as f64;
    let grid: Vec<f64> = (0..m)
        .map(|i| if i + 1 == m { 1.0 } else { i as f64 * step })
        .collect();
    let evaluated = parallel::map_slice(&grid, |&x| iterate_with_node(s, x, h));
    let values: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let cells = drops(&values);
    if cells.len() != nodes - 1 {
        return Err(Error::Resolution { h, found: cells.len(), expected: nodes - 1 });
    }
    // A drop must coincide with a single step in the node index, and the
    // index may not move anywhere else; otherwise a cell straddles two
    // boundaries or hides one.
    let mut next_cell = cells.iter().peekable();
    for i in 0..m - 1 {
        let expected = if next_cell.peek() == Some(&&i) {
            next_cell.next();
            1
        } else {
            0
        };
        if evaluated[i + 1].1 != evaluated[i].1 + expected {
            return Err(Error::Resolution { h, found: cells.len(), expected: nodes - 1 });
        }
    }

    let located = parallel::map_slice(&cells, |&d| {
        locate_endpoint(s, h, evaluated[d].1, grid[d], grid[d + 1])
    });
    let mut endpoints = Vec::with_capacity(nodes + 1);
    endpoints.push(0.0);
    endpoints.extend(located.iter().map(|l| l.1));
    endpoints.push(1.0);

    // local refinement inside every cell holding an endpoint
    let extra = (m >> h).max(1);
    let refined: Vec<Vec<(f64, f64, usize)>> = parallel::map_slice(&cells, |&d| {
        let (lo, hi) = (grid[d], grid[d + 1]);
        (1..=extra)
            .map(|t| {
                let x = lo + (hi - lo) * t as f64 / (extra + 1) as f64;
                let (y, k) = iterate_with_node(s, x, h);
                (x, y, k)
            })
            .collect()
    });

    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); nodes];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); nodes];
    for k in 0..nodes {
        xs[k].push(endpoints[k]);
        ys[k].push(0.0);
    }
    let mut push = |x: f64, y: f64, k: usize| {
        let (bx, by) = (&mut xs[k], &mut ys[k]);
        if x > *bx.last().unwrap() && x < endpoints[k + 1] && y > *by.last().unwrap() && y < 1.0 {
            bx.push(x);
            by.push(y);
        }
    };
    let mut refined_iter = cells.iter().zip(&refined).peekable();
    for i in 0..m {
        push(grid[i], evaluated[i].0, evaluated[i].1);
        if let Some((_, pts)) = refined_iter.next_if(|(&d, _)| d == i) {
            for &(x, y, k) in pts {
                push(x, y, k);
            }
        }
    }
    let branches = xs
        .into_iter()
        .zip(ys)
        .enumerate()
        .map(|(k, (mut bx, mut by))| {
            bx.push(endpoints[k + 1]);
            by.push(1.0);
            BranchInverse { h, k, xs: bx, ys: by }
        })
        .collect();

    Ok(NodeTable { s, h, m, endpoints, branches })
}

/// Interior endpoints from the linear interpolation step alone, before the
/// bisection polish. Exposed for diagnostics and tests.
pub fn interpolated_endpoints(model: &MapModel, h: usize, m: usize) -> Result<Vec<f64>> {
    check_lag(h)?;
    let s = model.s();
    let step = 1.0 / (m.max(2) - 1) as f64;
    let grid: Vec<f64> = (0..m)
        .map(|i| if i + 1 == m { 1.0 } else { i as f64 * step })
        .collect();
    let cells = detect_discontinuities(model, h, &grid)?;
    Ok(cells
        .iter()
        .map(|&d| {
            let left_node = iterate_with_node(s, grid[d], h).1;
            locate_endpoint(s, h, left_node, grid[d], grid[d + 1]).0
        })
        .collect())
}
