//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// `i / (g - 1)` for `i = 0..g`.
pub fn unit_grid(g: usize) -> Vec<f64> {
    (0..g).map(|i| if i + 1 == g { 1.0 } else { i as f64 / (g - 1) as f64 }).collect()
}

/// Empirical copula of `pairs` on `grid x grid`: entry `[i][j]` is the
/// fraction of pairs with `u <= grid[i]` and `v <= grid[j]`.
pub fn empirical_copula_2d(pairs: &[(f64, f64)], grid: &[f64]) -> Vec<Vec<f64>> {
    let g = grid.len();
    let mut counts = vec![vec![0u64; g]; g];
    let bin = |x: f64| grid.partition_point(|&t| t < x);
    for &(u, v) in pairs {
        let (i, j) = (bin(u), bin(v));
        if i < g && j < g {
            counts[i][j] += 1;
        }
    }
    for i in 0..g {
        for j in 0..g {
            let left = if i > 0 { counts[i - 1][j] } else { 0 };
            let below = if j > 0 { counts[i][j - 1] } else { 0 };
            let corner = if i > 0 && j > 0 { counts[i - 1][j - 1] } else { 0 };
            counts[i][j] += left + below - corner;
        }
    }
    let n = pairs.len() as f64;
    counts.into_iter().map(|r| r.into_iter().map(|c| c as f64 / n).collect()).collect()
}

/// Trivariate analogue of [`empirical_copula_2d`], entry `[i][j][k]`.
pub fn empirical_copula_3d(triples: &[[f64; 3]], grid: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let g = grid.len();
    let mut c = vec![vec![vec![0u64; g]; g]; g];
    let bin = |x: f64| grid.partition_point(|&t| t < x);
    for t in triples {
        let (i, j, k) = (bin(t[0]), bin(t[1]), bin(t[2]));
        if i < g && j < g && k < g {
            c[i][j][k] += 1;
        }
    }
    for i in 0..g {
        for j in 0..g {
            for k in 1..g {
                c[i][j][k] += c[i][j][k - 1];
            }
        }
    }
    for i in 0..g {
        for j in 1..g {
            for k in 0..g {
                c[i][j][k] += c[i][j - 1][k];
            }
        }
    }
    for i in 1..g {
        for j in 0..g {
            for k in 0..g {
                c[i][j][k] += c[i - 1][j][k];
            }
        }
    }
    let n = triples.len() as f64;
    c.into_iter()
        .map(|p| p.into_iter().map(|r| r.into_iter().map(|x| x as f64 / n).collect()).collect())
        .collect()
}

/// One-sample Kolmogorov-Smirnov statistic against Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic for `n` draws.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Brute-force fraction of `points` in `[lo, hi]`.
pub fn count_in(points: &[f64], lo: f64, hi: f64) -> f64 {
    points.iter().filter(|&&x| lo <= x && x <= hi).count() as f64 / points.len() as f64
}

/// Print one acceptance line and report whether it passed.
pub fn report(id: &str, name: &str, pass: bool, detail: String) -> bool {
    println!("[{}] criterion {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copula_counts_match_brute_force() {
        let pairs = [(0.1, 0.9), (0.5, 0.5), (0.95, 0.2), (0.3, 0.3)];
        let grid = unit_grid(5);
        let c = empirical_copula_2d(&pairs, &grid);
        for (i, &u) in grid.iter().enumerate() {
            for (j, &v) in grid.iter().enumerate() {
                let brute = pairs.iter().filter(|p| p.0 <= u && p.1 <= v).count() as f64 / 4.0;
                assert_eq!(c[i][j], brute);
            }
        }
    }
}
