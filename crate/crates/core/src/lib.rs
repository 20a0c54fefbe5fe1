//! Manneville-Pomeau maps `T_s(x) = x + x^(1+s) mod 1`, orbit approximations
//! of their invariant measure, the induced lag copulas, sampling from those
//! copulas, and estimation of `s` from an observed path.

pub mod copula;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod map;
pub mod measure;
pub mod nodes;
pub mod parallel;
pub mod sampler;

pub use error::{Error, Result};
pub use map::{a_to_s, apply_map, node_index, orbit, solve_a, MapModel, Orbit};
pub use measure::{build_measure, EmpiricalMeasure};
pub use nodes::{detect_discontinuities, node_endpoints, BranchInverse, NodeTable, MAX_LAG};
pub use copula::{support_polyline, CopulaModel, Direction, Segment, SupportPolyline};
pub use sampler::{sample_pairs, SampleBatch};
pub use estimator::{
    classify_branches, estimate_ls, estimate_minmax, estimate_refined, BranchUsed, EstimateReport, Method,
    RefineOptions,
};
