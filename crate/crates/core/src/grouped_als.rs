//! Alternating sketched minimization over pattern groups.
//!
//! A half-sweep holds one factor fixed and refits the other. Rows of `U` in
//! the same `W ∘ A` row group face the identical regression
//!
//! ```text
//!     min_x || x · Vᵀ · diag(W_ℓ) · Sᵀ − (W ∘ A)_ℓ · Sᵀ ||²
//! ```
//!
//! so it is solved once at the group representative `ℓ` and the answer is
//! broadcast. The design `Vᵀ diag(W_ℓ) Sᵀ` depends only on the weight
//! pattern, so just one design per distinct `W` row is assembled and
//! factorized, then reused for every fine group under it. Columns are
//! handled by the same code on the column side of the instance.

use std::time::{Duration, Instant};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::opt_bounds::{bracket, BoundParams, Bracket};
use crate::pattern_index::{PatternSide, StructuredInstance};
use crate::sketch::{gaussian_sketch, sketch_dim, sketched_design, SketchMatrix, DEFAULT_SKETCH_CONSTANT};
use crate::weighted_cost::{dot, side_cost, GroupedFactor};

/// SplitMix64 finalizer over `base ^ index`, used to derive per-restart and
/// per-half-sweep seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub k: usize,
    pub eps: f64,
    pub max_sweeps: usize,
    /// Stop once a full sweep improves the cost by less than this fraction.
    /// Zero disables early stopping.
    pub rel_tol: f64,
    pub seed: u64,
    /// Independent initializations; the best final cost wins.
    pub restarts: usize,
    /// Singular values at or below `rank_tolerance · σ_max` are treated as zero.
    pub rank_tolerance: f64,
    /// Exact per-group regressions instead of sketched ones.
    pub sketchless: bool,
    pub sketch_constant: f64,
    /// Reuse the first sweep's sketches instead of redrawing every sweep.
    pub fixed_sketch: bool,
    /// Record the normal-equation residual of every regression (sketchless only).
    pub certify: bool,
    pub c_exp: f64,
    pub c_poly: f64,
}

impl SolveOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            eps: 0.25,
            max_sweeps: 100,
            rel_tol: 1e-6,
            seed: 0,
            restarts: 1,
            rank_tolerance: 1e-10,
            sketchless: false,
            sketch_constant: DEFAULT_SKETCH_CONSTANT,
            fixed_sketch: false,
            certify: false,
            c_exp: 1.0,
            c_poly: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("rank k must be positive");
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return invalid(format!("eps must lie in (0, 0.5), got {}", self.eps));
        }
        if self.max_sweeps == 0 || self.restarts == 0 {
            return invalid("max_sweeps and restarts must be positive");
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 || self.rank_tolerance.is_nan() || self.rank_tolerance < 0.0 {
            return invalid("rel_tol and rank_tolerance must be nonnegative");
        }
        Ok(())
    }
}

/// Pseudo-inverse of a `k x t` design `D`, for solving `min ||Dᵀ x − b||`
/// against many targets.
#[derive(Debug, Clone)]
pub struct MinNormSolver {
    k: usize,
    /// Rows are the retained left singular vectors of `Dᵀ` (length `t`).
    basis: DenseMatrix,
    /// `k x q`: right singular vectors scaled by `1/σ`.
    coef: DenseMatrix,
}

impl MinNormSolver {
    pub fn new(design: &DenseMatrix, rank_tolerance: f64) -> Result<Self> {
        let (k, t) = design.shape();
        if k == 0 || t == 0 {
            return invalid("design must be non-empty");
        }
        if !design.is_finite() {
            return invalid("design has non-finite entries");
        }
        let dt = Mat::<f64>::from_fn(t, k, |s, a| design[(a, s)]);
        let svd = dt
            .thin_svd()
            .map_err(|_| crate::WlraError::InvalidInput("SVD did not converge".into()))?;
        let (u, v) = (svd.U(), svd.V());
        let sigma = svd.S().column_vector();
        let sigma_max = (0..sigma.nrows()).map(|i| sigma[i]).fold(0.0, f64::max);
        let keep: Vec<usize> = (0..sigma.nrows())
            .filter(|&i| sigma_max > 0.0 && sigma[i] > rank_tolerance * sigma_max)
            .collect();
        let basis = DenseMatrix::from_fn(keep.len(), t, |q, s| u[(s, keep[q])]);
        let coef = DenseMatrix::from_fn(k, keep.len(), |a, q| v[(a, keep[q])] / sigma[keep[q]]);
        Ok(Self { k, basis, coef })
    }

    pub fn rank(&self) -> usize {
        self.basis.rows()
    }

    pub fn solve(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.basis.cols() {
            return invalid(format!(
                "target has length {}, design has {} columns",
                target.len(),
                self.basis.cols()
            ));
        }
        if target.iter().any(|x| !x.is_finite()) {
            return invalid("target has non-finite entries");
        }
        let proj: Vec<f64> = self.basis.row_iter().map(|b| dot(b, target)).collect();
        Ok((0..self.k).map(|a| dot(self.coef.row(a), &proj)).collect())
    }
}

/// Minimum-norm `x` minimizing `||Dᵀ x − target||₂` for a `k x t` design.
pub fn min_norm_solve(design: &DenseMatrix, target: &[f64], rank_tolerance: f64) -> Result<Vec<f64>> {
    MinNormSolver::new(design, rank_tolerance)?.solve(target)
}

/// One refit of a single factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSweep {
    pub factor: GroupedFactor,
    /// Distinct weight-pattern designs built and factorized.
    pub designs_assembled: usize,
    /// Per-group regressions solved.
    pub regressions_solved: usize,
}

/// `otherᵀ · diag(w)` without sketching: the `k x n` exact design.
fn exact_design(other_t: &DenseMatrix, w: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(other_t.rows(), other_t.cols(), |a, j| other_t[(a, j)] * w[j])
}

fn update_side(
    side: &PatternSide,
    other: &DenseMatrix,
    sketch: Option<&SketchMatrix>,
    rank_tolerance: f64,
) -> Result<HalfSweep> {
    let n = side.w.len();
    if other.rows() != n || other.cols() == 0 {
        return invalid(format!("fixed factor is {:?}, instance has n = {n}", other.shape()));
    }
    if !other.is_finite() {
        return invalid("fixed factor has non-finite entries");
    }
    if let Some(s) = sketch {
        if s.n() != n {
            return invalid(format!("sketch covers {} coordinates, instance has {n}", s.n()));
        }
    }
    let k = other.cols();
    let other_t = other.transpose();

    let solvers: Vec<MinNormSolver> = (0..side.w.num_groups())
        .into_par_iter()
        .map(|g| {
            let w = side.w_reps.row(g);
            let design = match sketch {
                Some(s) => sketched_design(&other_t, w, s)?,
                None => exact_design(&other_t, w),
            };
            MinNormSolver::new(&design, rank_tolerance)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<f64>> = (0..side.wa.num_groups())
        .into_par_iter()
        .map(|g| {
            let target = side.wa_reps.row(g);
            let solver = &solvers[side.wa_parent[g]];
            match sketch {
                Some(s) => solver.solve(&s.apply(target)),
                None => solver.solve(target),
            }
        })
        .collect::<Result<_>>()?;

    let mut factor_rows = DenseMatrix::zeros(rows.len(), k);
    for (g, row) in rows.iter().enumerate() {
        factor_rows.row_mut(g).copy_from_slice(row);
    }
    Ok(HalfSweep {
        factor: GroupedFactor::new(side.wa.clone(), factor_rows)?,
        designs_assembled: solvers.len(),
        regressions_solved: rows.len(),
    })
}

/// Refits `U` with `V` fixed, one regression per `W ∘ A` row group. `None`
/// for the sketch solves the exact regressions.
pub fn update_rows(
    inst: &StructuredInstance,
    v: &DenseMatrix,
    sketch: Option<&SketchMatrix>,
    opts: &SolveOptions,
) -> Result<HalfSweep> {
    update_side(inst.row_side(), v, sketch, opts.rank_tolerance)
}

/// Refits `V` with `U` fixed, one regression per `W ∘ A` column group.
pub fn update_cols(
    inst: &StructuredInstance,
    u: &DenseMatrix,
    sketch: Option<&SketchMatrix>,
    opts: &SolveOptions,
) -> Result<HalfSweep> {
    update_side(inst.col_side(), u, sketch, opts.rank_tolerance)
}

/// Normal-equation residual of one group's exact weighted regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalResidual {
    /// `||D (Dᵀ x − b)||_∞`.
    pub residual: f64,
    /// `||D||_F`.
    pub design_scale: f64,
    /// `||b||₂`.
    pub target_scale: f64,
}

impl NormalResidual {
    /// Residual relative to `design_scale · target_scale`; zero when both vanish.
    pub fn ratio(&self) -> f64 {
        let scale = self.design_scale * self.target_scale;
        if scale > 0.0 {
            self.residual / scale
        } else {
            self.residual
        }
    }
}

fn side_residuals(side: &PatternSide, rows: &DenseMatrix, other: &DenseMatrix) -> Vec<NormalResidual> {
    (0..side.wa.num_groups())
        .into_par_iter()
        .map(|g| {
            let w = side.w_reps.row(side.wa_parent[g]);
            let b = side.wa_reps.row(g);
            let x = rows.row(g);
            let k = x.len();
            let mut grad = vec![0.0; k];
            let mut design_sq = 0.0;
            for j in 0..w.len() {
                let vj = other.row(j);
                let fit = w[j] * dot(x, vj) - b[j];
                for a in 0..k {
                    let d = vj[a] * w[j];
                    grad[a] += d * fit;
                    design_sq += d * d;
                }
            }
            NormalResidual {
                residual: grad.iter().fold(0.0, |m, g| m.max(g.abs())),
                design_scale: design_sq.sqrt(),
                target_scale: dot(b, b).sqrt(),
            }
        })
        .collect()
}

/// Optimality certificate of each `U` group row against fixed `V`.
pub fn row_residuals(inst: &StructuredInstance, u: &GroupedFactor, v: &DenseMatrix) -> Result<Vec<NormalResidual>> {
    if u.index() != inst.wa_rows() || v.shape() != (inst.n(), u.rank()) {
        return invalid("factor shapes do not match the instance");
    }
    Ok(side_residuals(inst.row_side(), u.rows(), v))
}

/// Optimality certificate of each `V` group row against fixed `U`.
pub fn col_residuals(inst: &StructuredInstance, v: &GroupedFactor, u: &DenseMatrix) -> Result<Vec<NormalResidual>> {
    if v.index() != inst.wa_cols() || u.shape() != (inst.n(), v.rank()) {
        return invalid("factor shapes do not match the instance");
    }
    Ok(side_residuals(inst.col_side(), v.rows(), u))
}

/// Starting `V`: i.i.d. standard normal entries, columns scaled to unit norm.
pub fn initial_factor(n: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DenseMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    for a in 0..k {
        let norm = (0..n).map(|j| v[(j, a)] * v[(j, a)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..n {
                v[(j, a)] /= norm;
            }
        }
    }
    v
}

/// The pair `(U, V)` with `U Vᵀ ≈ A` under the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub grouped_u: Option<GroupedFactor>,
    pub grouped_v: Option<GroupedFactor>,
}

/// Trajectory and bookkeeping of the winning restart.
///
/// `final_cost` is the exact objective of the returned factors, so it is an
/// upper bound on OPT; no lower certificate beyond `bracket.lower` is claimed.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Exact cost after each half-sweep (rows first, then columns).
    pub cost_per_sweep: Vec<f64>,
    pub sweep_wall_times: Vec<Duration>,
    /// Sketch seed of each half-sweep; empty in sketchless mode.
    pub sketch_seeds: Vec<u64>,
    pub regressions_per_half_sweep: Vec<usize>,
    pub designs_per_half_sweep: Vec<usize>,
    /// Largest normal-equation residual ratio per half-sweep, when certifying.
    pub max_residual_ratio: Vec<f64>,
    pub final_cost: f64,
    pub regressions_solved: usize,
    pub bracket: Bracket,
    pub sketch_dim: Option<usize>,
    pub restart: usize,
    pub run_seed: u64,
    /// Final costs of every restart, in order.
    pub restart_costs: Vec<f64>,
}

impl SolveReport {
    /// Completed full sweeps.
    pub fn sweeps(&self) -> usize {
        self.cost_per_sweep.len().div_ceil(2)
    }
}

struct Run {
    factors: Factorization,
    report: SolveReport,
}

fn sketch_for(
    opts: &SolveOptions,
    t: Option<usize>,
    n: usize,
    run_seed: u64,
    sweep: usize,
    half: u64,
    seeds: &mut Vec<u64>,
) -> Option<SketchMatrix> {
    let t = t?;
    let sweep = if opts.fixed_sketch { 0 } else { sweep as u64 };
    let seed = derive_seed(run_seed, 2 * sweep + half);
    seeds.push(seed);
    Some(gaussian_sketch(seed, t, n))
}

fn run_once(
    inst: &StructuredInstance,
    opts: &SolveOptions,
    t: Option<usize>,
    run_seed: u64,
    bracket: Bracket,
) -> Result<Run> {
    let n = inst.n();
    let rows = inst.row_side();
    let mut v = initial_factor(n, opts.k, run_seed);
    let mut grouped_v: Option<GroupedFactor> = None;

    let mut costs = Vec::new();
    let mut times = Vec::new();
    let mut seeds = Vec::new();
    let mut regs = Vec::new();
    let mut designs = Vec::new();
    let mut ratios = Vec::new();
    let mut best: Option<(f64, Factorization)> = None;
    let mut prev_full: Option<f64> = None;

    let max_ratio = |res: Vec<NormalResidual>| res.iter().map(NormalResidual::ratio).fold(0.0, f64::max);
    let certify = opts.certify && t.is_none();

    for sweep in 0..opts.max_sweeps {
        let start = Instant::now();
        let s1 = sketch_for(opts, t, n, run_seed, sweep, 0, &mut seeds);
        let hu = update_side(rows, &v, s1.as_ref(), opts.rank_tolerance)?;
        let u = hu.factor.expand();
        let cost = side_cost(rows, hu.factor.rows(), &v).cost;
        times.push(start.elapsed());
        costs.push(cost);
        regs.push(hu.regressions_solved);
        designs.push(hu.designs_assembled);
        if certify {
            ratios.push(max_ratio(side_residuals(rows, hu.factor.rows(), &v)));
        }
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((
                cost,
                Factorization {
                    u: u.clone(),
                    v: v.clone(),
                    grouped_u: Some(hu.factor.clone()),
                    grouped_v: grouped_v.clone(),
                },
            ));
        }

        let start = Instant::now();
        let s2 = sketch_for(opts, t, n, run_seed, sweep, 1, &mut seeds);
        let hv = update_side(inst.col_side(), &u, s2.as_ref(), opts.rank_tolerance)?;
        v = hv.factor.expand();
        let cost = side_cost(rows, hu.factor.rows(), &v).cost;
        times.push(start.elapsed());
        costs.push(cost);
        regs.push(hv.regressions_solved);
        designs.push(hv.designs_assembled);
        if certify {
            ratios.push(max_ratio(side_residuals(inst.col_side(), hv.factor.rows(), &u)));
        }
        grouped_v = Some(hv.factor);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((
                cost,
                Factorization {
                    u,
                    v: v.clone(),
                    grouped_u: Some(hu.factor),
                    grouped_v: grouped_v.clone(),
                },
            ));
        }

        if opts.rel_tol > 0.0 {
            if let Some(prev) = prev_full {
                if prev - cost <= opts.rel_tol * prev {
                    break;
                }
            }
        }
        prev_full = Some(cost);
    }

    let (final_cost, factors) = best.expect("at least one sweep runs");
    Ok(Run {
        factors,
        report: SolveReport {
            regressions_solved: regs.iter().sum(),
            cost_per_sweep: costs,
            sweep_wall_times: times,
            sketch_seeds: seeds,
            regressions_per_half_sweep: regs,
            designs_per_half_sweep: designs,
            max_residual_ratio: ratios,
            final_cost,
            bracket,
            sketch_dim: t,
            restart: 0,
            run_seed,
            restart_costs: Vec::new(),
        },
    })
}

/// Runs alternating minimization from `opts.restarts` random starts and
/// returns the factors with the lowest exact cost.
pub fn solve(inst: &StructuredInstance, opts: &SolveOptions) -> Result<(Factorization, SolveReport)> {
    opts.validate()?;
    let n = inst.n();
    if opts.k > n {
        return invalid(format!("rank {} exceeds n = {n}", opts.k));
    }
    let t = if opts.sketchless {
        None
    } else {
        Some(sketch_dim(opts.k, opts.eps, opts.sketch_constant)?)
    };
    let params = BoundParams {
        c_exp: opts.c_exp,
        c_poly: opts.c_poly,
        ..BoundParams::for_instance(n, inst.r(), opts.k, opts.eps)
    };
    let bracket = bracket(inst, &params)?;

    let mut best: Option<Run> = None;
    let mut restart_costs = Vec::with_capacity(opts.restarts);
    for restart in 0..opts.restarts {
        let run_seed = derive_seed(opts.seed, restart as u64);
        let mut run = run_once(inst, opts, t, run_seed, bracket)?;
        run.report.restart = restart;
        restart_costs.push(run.report.final_cost);
        if best
            .as_ref()
            .is_none_or(|b| run.report.final_cost < b.report.final_cost)
        {
            best = Some(run);
        }
    }
    let Run { factors, mut report } = best.expect("restarts >= 1");
    report.restart_costs = restart_costs;
    Ok((factors, report))
}
