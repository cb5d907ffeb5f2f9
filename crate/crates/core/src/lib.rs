//! Weighted low-rank approximation for matrices with few distinct patterns.
//!
//! Solves `min_{U,V} ||W ∘ (U Vᵀ − A)||²_F` when the weight matrix `W` has `r`
//! distinct rows and columns and `W ∘ A` has at most `r·p` of them. Each
//! alternating half-sweep solves one sketched regression per distinct
//! `W ∘ A` pattern and broadcasts the answer over the pattern's group, so a
//! sweep costs `n · rp · poly(k/ε)` rather than `n²`.

pub mod error;
pub mod generator;
pub mod grouped_als;
pub mod matrix;
pub mod opt_bounds;
pub mod pattern_index;
pub mod sketch;
pub mod weighted_cost;

pub use error::{Result, WlraError};
pub use generator::{generate, generate_attention_mask, GenSpec, PlantedInstance, WeightStyle};
pub use grouped_als::{
    min_norm_solve, solve, update_cols, update_rows, Factorization, SolveOptions, SolveReport,
};
pub use matrix::DenseMatrix;
pub use opt_bounds::{iteration_budget, lower_bound_log2, upper_bound, BoundParams, Bracket};
pub use pattern_index::{build_instance, detect_groups, refine, Axis, PatternIndex, StructuredInstance};
pub use sketch::{gaussian_sketch, sketch_dim, sketched_design, SketchMatrix};
pub use weighted_cost::{cost_dense, cost_grouped, GroupedFactor};
