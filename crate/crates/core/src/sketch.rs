//! Seeded Gaussian sketches for the per-group regressions.
//!
//! Row `s` of a sketch is drawn from its own ChaCha stream keyed by
//! `(seed, s)`, so a sketch is bit-identical no matter how many threads
//! generate it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::weighted_cost::dot;

pub const DEFAULT_SKETCH_CONSTANT: f64 = 4.0;

/// Sketch size `t = max(k + 1, ceil(c_s · k / eps))`.
pub fn sketch_dim(k: usize, eps: f64, c_s: f64) -> Result<usize> {
    if k == 0 {
        return invalid("rank must be positive");
    }
    if !(eps > 0.0 && eps < 0.5) {
        return invalid(format!("eps must lie in (0, 0.5), got {eps}"));
    }
    if !(c_s > 0.0 && c_s.is_finite()) {
        return invalid(format!("sketch constant must be positive, got {c_s}"));
    }
    let t = (c_s * k as f64 / eps).ceil() as usize;
    Ok(t.max(k + 1))
}

/// A `t x n` sketch with i.i.d. `N(0, 1/t)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    seed: u64,
    values: DenseMatrix,
}

impl SketchMatrix {
    /// Exact embedding that selects coordinate `perm[s]` in row `s`; `t = n`
    /// and `S Sᵀ = I`, so sketched and exact regressions coincide.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return invalid("not a permutation");
            }
        }
        let mut values = DenseMatrix::zeros(n, n);
        for (s, &p) in perm.iter().enumerate() {
            values[(s, p)] = 1.0;
        }
        Ok(Self { seed: 0, values })
    }

    pub fn t(&self) -> usize {
        self.values.rows()
    }

    pub fn n(&self) -> usize {
        self.values.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    /// `S b` for a length-`n` vector.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.values.row_iter().map(|s| dot(s, b)).collect()
    }
}

pub fn gaussian_sketch(seed: u64, t: usize, n: usize) -> SketchMatrix {
    let scale = 1.0 / (t.max(1) as f64).sqrt();
    let mut values = DenseMatrix::zeros(t, n);
    if n > 0 {
        values
            .as_mut_slice()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(s, row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                for x in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = z * scale;
                }
            });
    }
    SketchMatrix { seed, values }
}

/// `Z · diag(w_row) · Sᵀ`, the `k x t` sketched design of one weight pattern.
pub fn sketched_design(z: &DenseMatrix, w_row: &[f64], s: &SketchMatrix) -> Result<DenseMatrix> {
    let n = z.cols();
    if w_row.len() != n || s.n() != n {
        return invalid(format!(
            "design is {:?}, weight row has {}, sketch covers {}",
            z.shape(),
            w_row.len(),
            s.n()
        ));
    }
    let k = z.rows();
    let t = s.t();
    let weighted: Vec<Vec<f64>> = z
        .row_iter()
        .map(|zr| zr.iter().zip(w_row).map(|(a, b)| a * b).collect())
        .collect();
    let mut out = DenseMatrix::zeros(k, t);
    for (a, zw) in weighted.iter().enumerate() {
        for (col, srow) in s.values().row_iter().enumerate() {
            out[(a, col)] = dot(zw, srow);
        }
    }
    Ok(out)
}
