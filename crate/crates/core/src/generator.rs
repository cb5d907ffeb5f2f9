//! Synthetic instances with planted `(r, p, k)` structure.
//!
//! Indices are cut into `r` contiguous coarse bands, each cut again into `p`
//! fine bands. `W` is constant on coarse cells, `A` on fine cells, and the
//! fine cell values come from a planted rank-`k_true` pair plus noise. The
//! compressed instance is built from the grids directly, so `n` can be far
//! larger than what a dense `n x n` matrix allows.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result, WlraError};
use crate::grouped_als::derive_seed;
use crate::matrix::DenseMatrix;
use crate::pattern_index::{Axis, PatternIndex, PatternSide, StructuredInstance};
use crate::weighted_cost::dot;

pub const MAX_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightStyle {
    /// Positive weights drawn uniformly from `[0.5, 2)`.
    BlockRandom,
    /// 0/1 staircase with rows and columns shuffled.
    BlockMask01,
    /// Block-causal 0/1 mask: cell `(I, J)` is one iff `I >= J`.
    AttentionBlock,
}

impl std::str::FromStr for WeightStyle {
    type Err = WlraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block_random" => Ok(Self::BlockRandom),
            "block_mask01" => Ok(Self::BlockMask01),
            "attention_block" => Ok(Self::AttentionBlock),
            other => invalid(format!("unknown weight style {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub k_true: usize,
    pub noise_sigma: f64,
    pub weight_style: WeightStyle,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n: usize, r: usize, p: usize, k_true: usize, seed: u64) -> Self {
        Self {
            n,
            r,
            p,
            k_true,
            noise_sigma: 0.0,
            weight_style: WeightStyle::BlockRandom,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r == 0 || self.p == 0 {
            return invalid("n, r and p must be positive");
        }
        if self.r.saturating_mul(self.p) > self.n {
            return invalid(format!("r·p = {} exceeds n = {}", self.r * self.p, self.n));
        }
        if self.k_true > self.n {
            return invalid(format!("k_true = {} exceeds n = {}", self.k_true, self.n));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise_sigma must be finite and nonnegative");
        }
        Ok(())
    }
}

/// A generated instance with the grids and planted factors behind it.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub spec: GenSpec,
    pub instance: StructuredInstance,
    /// `r x r` weight per coarse cell.
    pub weight_grid: DenseMatrix,
    /// `rp x rp` target value per fine cell.
    pub target_grid: DenseMatrix,
    /// `rp x k_true` planted row factor, one row per fine band.
    pub planted_u: DenseMatrix,
    /// `rp x k_true` planted column factor.
    pub planted_v: DenseMatrix,
    /// Fine band of every index (identical for rows and columns).
    pub fine_band: Vec<usize>,
}

impl PlantedInstance {
    fn coarse(&self, i: usize) -> usize {
        self.fine_band[i] / self.spec.p
    }

    pub fn dense_w(&self) -> DenseMatrix {
        let n = self.spec.n;
        DenseMatrix::from_fn(n, n, |i, j| self.weight_grid[(self.coarse(i), self.coarse(j))])
    }

    pub fn dense_a(&self) -> DenseMatrix {
        let n = self.spec.n;
        DenseMatrix::from_fn(n, n, |i, j| self.target_grid[(self.fine_band[i], self.fine_band[j])])
    }

    /// Planted factors tiled to `n x k`, zero-padded when `k > k_true`.
    pub fn planted_factors(&self, k: usize) -> (DenseMatrix, DenseMatrix) {
        let n = self.spec.n;
        let kt = self.spec.k_true;
        let tile = |f: &DenseMatrix| {
            DenseMatrix::from_fn(n, k, |i, c| if c < kt { f[(self.fine_band[i], c)] } else { 0.0 })
        };
        (tile(&self.planted_u), tile(&self.planted_v))
    }
}

/// Fine band of every index: `r` near-equal coarse bands, each split into `p`.
fn band_layout(n: usize, r: usize, p: usize) -> Vec<usize> {
    let mut band = vec![0; n];
    for c in 0..r {
        let (lo, hi) = (c * n / r, (c + 1) * n / r);
        let len = hi - lo;
        for f in 0..p {
            for b in band.iter_mut().take(lo + (f + 1) * len / p).skip(lo + f * len / p) {
                *b = c * p + f;
            }
        }
    }
    band
}

fn weight_grid(style: WeightStyle, r: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    match style {
        WeightStyle::BlockRandom => DenseMatrix::from_fn(r, r, |_, _| rng.random_range(0.5..2.0)),
        WeightStyle::AttentionBlock => DenseMatrix::from_fn(r, r, |i, j| if i >= j { 1.0 } else { 0.0 }),
        WeightStyle::BlockMask01 => {
            let mut rows: Vec<usize> = (0..r).collect();
            let mut cols: Vec<usize> = (0..r).collect();
            rows.shuffle(rng);
            cols.shuffle(rng);
            DenseMatrix::from_fn(r, r, |i, j| if rows[i] >= cols[j] { 1.0 } else { 0.0 })
        }
    }
}

fn rows_distinct(m: &DenseMatrix, within: impl Fn(usize) -> usize) -> bool {
    for i in 0..m.rows() {
        for j in (i + 1)..m.rows() {
            if within(i) == within(j) && m.row(i) == m.row(j) {
                return false;
            }
        }
    }
    true
}

/// Grid-level check that the dense matrices will show exactly `r` weight
/// patterns and `r·p` target patterns on both axes.
fn is_generic(wg: &DenseMatrix, ag: &DenseMatrix, p: usize) -> bool {
    let rp = ag.rows();
    // W ∘ A on the fine grid
    let wa = DenseMatrix::from_fn(rp, rp, |f, q| wg[(f / p, q / p)] * ag[(f, q)]);
    let wgt = wg.transpose();
    let any_zero_row = |m: &DenseMatrix| m.row_iter().any(|row| row.iter().all(|&x| x == 0.0));
    rows_distinct(wg, |_| 0)
        && rows_distinct(&wgt, |_| 0)
        && !any_zero_row(wg)
        && !any_zero_row(&wgt)
        && rows_distinct(&wa, |f| f / p)
        && rows_distinct(&wa.transpose(), |f| f / p)
}

fn build_side(
    axis: Axis,
    fine_band: &[usize],
    p: usize,
    w_vec: impl Fn(usize) -> Vec<f64>,
    wa_vec: impl Fn(usize) -> Vec<f64>,
    r: usize,
) -> PatternSide {
    let coarse: Vec<usize> = fine_band.iter().map(|&f| f / p).collect();
    let w = PatternIndex::from_labels(axis, &coarse);
    let wa = PatternIndex::from_labels(axis, fine_band);
    let n = fine_band.len();
    let mut w_reps = DenseMatrix::zeros(r, n);
    for c in 0..r {
        w_reps.row_mut(c).copy_from_slice(&w_vec(c));
    }
    let mut wa_reps = DenseMatrix::zeros(r * p, n);
    for f in 0..r * p {
        wa_reps.row_mut(f).copy_from_slice(&wa_vec(f));
    }
    PatternSide {
        w,
        wa,
        w_reps,
        wa_reps,
        wa_parent: (0..r * p).map(|f| f / p).collect(),
    }
}

/// Generates an instance whose detected structure equals the planted one.
pub fn generate(spec: &GenSpec) -> Result<PlantedInstance> {
    spec.validate()?;
    let GenSpec { n, r, p, k_true, .. } = *spec;
    let rp = r * p;
    let fine_band = band_layout(n, r, p);

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, attempt as u64));
        let wg = weight_grid(spec.weight_style, r, &mut rng);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let pu = DenseMatrix::from_fn(rp, k_true, |_, _| normal());
        let pv = DenseMatrix::from_fn(rp, k_true, |_, _| normal());
        let mut ag = DenseMatrix::from_fn(rp, rp, |f, q| dot(pu.row(f), pv.row(q)));
        if spec.noise_sigma > 0.0 {
            for x in ag.as_mut_slice() {
                *x += spec.noise_sigma * normal();
            }
        }
        if !is_generic(&wg, &ag, p) {
            continue;
        }

        let coarse = |i: usize| fine_band[i] / p;
        let rows = build_side(
            Axis::Rows,
            &fine_band,
            p,
            |c| (0..n).map(|j| wg[(c, coarse(j))]).collect(),
            |f| (0..n).map(|j| wg[(f / p, coarse(j))] * ag[(f, fine_band[j])]).collect(),
            r,
        );
        let cols = build_side(
            Axis::Cols,
            &fine_band,
            p,
            |c| (0..n).map(|i| wg[(coarse(i), c)]).collect(),
            |f| (0..n).map(|i| wg[(coarse(i), f / p)] * ag[(fine_band[i], f)]).collect(),
            r,
        );
        let instance = StructuredInstance::from_sides(rows, cols)?;
        return Ok(PlantedInstance {
            spec: *spec,
            instance,
            weight_grid: wg,
            target_grid: ag,
            planted_u: pu,
            planted_v: pv,
            fine_band,
        });
    }
    Err(WlraError::GenerationFailure {
        attempts: MAX_ATTEMPTS,
    })
}

/// Block-lower-triangular 0/1 mask with `n / block` distinct rows and columns.
pub fn generate_attention_mask(n: usize, block: usize) -> Result<DenseMatrix> {
    if block == 0 || n == 0 || !n.is_multiple_of(block) {
        return invalid(format!("block {block} must be positive and divide n = {n}"));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        if i / block >= j / block {
            1.0
        } else {
            0.0
        }
    }))
}
