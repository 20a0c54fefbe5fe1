//! Random pairs from the lag-`h` copula.
//!
//! A uniform `u` picks the support segment whose cell holds it and `v` is
//! read off that segment. Draws come from ChaCha8 seeded with the batch seed;
//! the batch is split into chunks of [`CHUNK`] draws and chunk `c` uses
//! stream `c`, so the output is identical for any number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copula::{CopulaModel, Direction};
use crate::error::{domain, Result};
use crate::parallel;

/// Draws per generator stream.
pub const CHUNK: usize = 8192;

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub pairs: Vec<(f64, f64)>,
    /// Node of `T_s^h` behind each pair.
    pub nodes: Vec<usize>,
    pub h: usize,
    pub s: f64,
    pub direction: Direction,
    pub seed: u64,
}

/// Draw `count` pairs from the lag-`h` copula of `cm`, in its direction.
pub fn sample_pairs(cm: &CopulaModel, h: usize, count: usize, seed: u64) -> Result<SampleBatch> {
    if count == 0 {
        return domain("sample size must be at least 1");
    }
    let support = cm.support(h)?;
    let chunks = count.div_ceil(CHUNK);
    let drawn = parallel::map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(count - c * CHUNK);
        (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                let seg = support.locate(u);
                ((u, seg.at(u)), seg.k)
            })
            .collect::<Vec<_>>()
    });
    let (pairs, nodes) = drawn.into_iter().flatten().unzip();
    Ok(SampleBatch { pairs, nodes, h, s: cm.map_model().s(), direction: cm.direction(), seed })
}
