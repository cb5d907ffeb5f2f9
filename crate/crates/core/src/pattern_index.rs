//! Distinct row/column pattern detection.
//!
//! A [`PatternIndex`] partitions the rows (or columns) of a matrix into groups
//! of entry-wise identical vectors. A [`StructuredInstance`] keeps only one
//! representative vector per group for `W` and for `W ∘ A`, which is all the
//! solver needs: the objective depends on `A` only through `W ∘ A`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Rows,
    Cols,
}

impl Axis {
    pub fn flip(self) -> Self {
        match self {
            Axis::Rows => Axis::Cols,
            Axis::Cols => Axis::Rows,
        }
    }
}

/// Partition of `0..n` into groups of identical vectors along one axis.
///
/// Group ids are assigned in order of first appearance, so the representative
/// of group `g` (its smallest member) is increasing in `g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternIndex {
    axis: Axis,
    group_of: Vec<usize>,
    representatives: Vec<usize>,
    sizes: Vec<usize>,
}

impl PatternIndex {
    /// Builds an index from an arbitrary labelling, relabelling groups in
    /// order of first appearance.
    pub fn from_labels(axis: Axis, labels: &[usize]) -> Self {
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let mut group_of = Vec::with_capacity(labels.len());
        let mut representatives = Vec::new();
        let mut sizes = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            let g = *relabel.entry(*label).or_insert_with(|| {
                representatives.push(i);
                sizes.push(0);
                representatives.len() - 1
            });
            sizes[g] += 1;
            group_of.push(g);
        }
        Self {
            axis,
            group_of,
            representatives,
            sizes,
        }
    }

    pub fn singletons(axis: Axis, n: usize) -> Self {
        Self {
            axis,
            group_of: (0..n).collect(),
            representatives: (0..n).collect(),
            sizes: vec![1; n],
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Number of indexed positions.
    pub fn len(&self) -> usize {
        self.group_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_of.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn group(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.group_of[i] == g).collect()
    }

    /// True when every group of `self` lies inside a single group of `coarser`.
    pub fn refines(&self, coarser: &PatternIndex) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut parent = vec![usize::MAX; self.num_groups()];
        self.group_of
            .iter()
            .zip(&coarser.group_of)
            .all(|(&g, &c)| match parent[g] {
                usize::MAX => {
                    parent[g] = c;
                    true
                }
                p => p == c,
            })
    }

    /// Checks the partition invariants: ids in range, sizes sum to `n`,
    /// representatives are minimal members, first-appearance ordering.
    pub fn validate(&self) -> Result<()> {
        let g = self.num_groups();
        if self.representatives.len() != g {
            return invalid("representatives and sizes disagree on group count");
        }
        let mut counts = vec![0usize; g];
        let mut first = vec![usize::MAX; g];
        let mut next = 0;
        for (i, &gi) in self.group_of.iter().enumerate() {
            if gi >= g {
                return invalid(format!("group id {gi} out of range at index {i}"));
            }
            if first[gi] == usize::MAX {
                if gi != next {
                    return invalid("group ids not in order of first appearance");
                }
                next += 1;
                first[gi] = i;
            }
            counts[gi] += 1;
        }
        if counts != self.sizes || first != self.representatives {
            return invalid("sizes or representatives inconsistent with group_of");
        }
        Ok(())
    }
}

fn hash_vector(v: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for &x in v {
        // +0.0 and -0.0 compare equal, so they must hash equal
        let x = if x == 0.0 { 0.0 } else { x };
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

fn matches(a: &[f64], b: &[f64], tol: f64) -> bool {
    if tol == 0.0 {
        a == b
    } else {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }
}

/// Groups the rows of `vectors`, never merging rows whose `parent` labels
/// differ. Each row joins the first group (in creation order) whose
/// representative matches within `tol`; otherwise it opens a new group.
fn group_rows(vectors: &DenseMatrix, parent: Option<&[usize]>, tol: f64) -> Vec<usize> {
    let n = vectors.rows();
    let mut group_of = Vec::with_capacity(n);
    let mut reps: Vec<usize> = Vec::new();
    if tol == 0.0 {
        let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
        for i in 0..n {
            let row = vectors.row(i);
            let key = (parent.map_or(0, |p| p[i]), hash_vector(row));
            let bucket = buckets.entry(key).or_default();
            let found = bucket
                .iter()
                .copied()
                .find(|&g| vectors.row(reps[g]) == row);
            let g = found.unwrap_or_else(|| {
                reps.push(i);
                bucket.push(reps.len() - 1);
                reps.len() - 1
            });
            group_of.push(g);
        }
    } else {
        let mut by_parent: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let row = vectors.row(i);
            let candidates = by_parent.entry(parent.map_or(0, |p| p[i])).or_default();
            let found = candidates
                .iter()
                .copied()
                .find(|&g| matches(vectors.row(reps[g]), row, tol));
            let g = found.unwrap_or_else(|| {
                reps.push(i);
                candidates.push(reps.len() - 1);
                reps.len() - 1
            });
            group_of.push(g);
        }
    }
    group_of
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return invalid(format!("tolerance must be finite and nonnegative, got {tol}"));
    }
    Ok(())
}

fn vectors_along(m: &DenseMatrix, axis: Axis) -> DenseMatrix {
    match axis {
        Axis::Rows => m.clone(),
        Axis::Cols => m.transpose(),
    }
}

/// Partitions the rows or columns of `m` into classes of entry-wise equal
/// vectors (`|difference| <= tolerance` per entry; `0` means exact equality).
pub fn detect_groups(m: &DenseMatrix, axis: Axis, tolerance: f64) -> Result<PatternIndex> {
    check_tolerance(tolerance)?;
    if !m.is_finite() {
        return invalid("matrix has non-finite entries");
    }
    let vectors = vectors_along(m, axis);
    Ok(PatternIndex::from_labels(
        axis,
        &group_rows(&vectors, None, tolerance),
    ))
}

/// Intersects the groups of `outer` with the equality classes of `inner_key`
/// taken along the same axis.
pub fn refine(outer: &PatternIndex, inner_key: &DenseMatrix, tolerance: f64) -> Result<PatternIndex> {
    check_tolerance(tolerance)?;
    if !inner_key.is_finite() {
        return invalid("key matrix has non-finite entries");
    }
    let vectors = vectors_along(inner_key, outer.axis());
    if vectors.rows() != outer.len() {
        return invalid(format!(
            "key has {} vectors along {:?}, partition covers {}",
            vectors.rows(),
            outer.axis(),
            outer.len()
        ));
    }
    Ok(PatternIndex::from_labels(
        outer.axis(),
        &group_rows(&vectors, Some(outer.group_of()), tolerance),
    ))
}

/// One axis of a structured instance in compressed form.
///
/// `w_reps` row `g` is the `W` vector of weight group `g`; `wa_reps` row `h`
/// is the `W ∘ A` vector of fine group `h`; `wa_parent[h]` is the weight group
/// containing fine group `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSide {
    pub w: PatternIndex,
    pub wa: PatternIndex,
    pub w_reps: DenseMatrix,
    pub wa_reps: DenseMatrix,
    pub wa_parent: Vec<usize>,
}

impl PatternSide {
    /// Builds a side from full per-position vectors (rows of the inputs).
    fn from_vectors(w: &DenseMatrix, wa: &DenseMatrix, axis: Axis, tol: f64) -> Self {
        let w_index = PatternIndex::from_labels(axis, &group_rows(w, None, tol));
        let wa_index =
            PatternIndex::from_labels(axis, &group_rows(wa, Some(w_index.group_of()), tol));
        let pick = |m: &DenseMatrix, reps: &[usize]| {
            let mut out = DenseMatrix::zeros(reps.len(), m.cols());
            for (g, &i) in reps.iter().enumerate() {
                out.row_mut(g).copy_from_slice(m.row(i));
            }
            out
        };
        let w_reps = pick(w, w_index.representatives());
        let wa_reps = pick(wa, wa_index.representatives());
        let wa_parent = wa_index
            .representatives()
            .iter()
            .map(|&i| w_index.group(i))
            .collect();
        Self {
            w: w_index,
            wa: wa_index,
            w_reps,
            wa_reps,
            wa_parent,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        self.w.validate()?;
        self.wa.validate()?;
        if self.w.len() != n || self.wa.len() != n {
            return invalid("partition length differs from instance size");
        }
        if self.w.axis() != self.wa.axis() {
            return invalid("weight and target partitions disagree on axis");
        }
        if self.w_reps.shape() != (self.w.num_groups(), n)
            || self.wa_reps.shape() != (self.wa.num_groups(), n)
        {
            return invalid("representative matrices have the wrong shape");
        }
        if self.wa_parent.len() != self.wa.num_groups() {
            return invalid("parent map has the wrong length");
        }
        let refines = (0..n).all(|i| self.w.group(i) == self.wa_parent[self.wa.group(i)]);
        if !refines {
            return invalid("W ∘ A groups do not refine W groups");
        }
        if !self.w_reps.is_finite() || !self.wa_reps.is_finite() {
            return invalid("non-finite representative entries");
        }
        Ok(())
    }

    /// Every position in its own group; representatives are the full vectors.
    fn ungrouped(&self) -> Self {
        let n = self.w.len();
        let axis = self.w.axis();
        let mut w_full = DenseMatrix::zeros(n, n);
        let mut wa_full = DenseMatrix::zeros(n, n);
        for i in 0..n {
            w_full.row_mut(i).copy_from_slice(self.w_reps.row(self.w.group(i)));
            wa_full.row_mut(i).copy_from_slice(self.wa_reps.row(self.wa.group(i)));
        }
        Self {
            w: PatternIndex::singletons(axis, n),
            wa: PatternIndex::singletons(axis, n),
            w_reps: w_full,
            wa_reps: wa_full,
            wa_parent: (0..n).collect(),
        }
    }

    fn expand(&self, index: &PatternIndex, reps: &DenseMatrix) -> DenseMatrix {
        let n = index.len();
        let mut out = DenseMatrix::zeros(n, reps.cols());
        for i in 0..n {
            out.row_mut(i).copy_from_slice(reps.row(index.group(i)));
        }
        out
    }
}

/// `(A, W)` held through the pattern structure of `W` and `W ∘ A` on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredInstance {
    n: usize,
    r: usize,
    p: usize,
    rows: PatternSide,
    cols: PatternSide,
}

impl StructuredInstance {
    /// Assembles an instance from precomputed sides, deriving `r` and `p` and
    /// checking every invariant.
    pub fn from_sides(rows: PatternSide, cols: PatternSide) -> Result<Self> {
        let n = rows.w.len();
        if n == 0 {
            return invalid("empty instance");
        }
        if rows.w.axis() != Axis::Rows || cols.w.axis() != Axis::Cols {
            return invalid("sides must be (rows, cols)");
        }
        rows.validate(n)?;
        cols.validate(n)?;
        let r = rows.w.num_groups().max(cols.w.num_groups());
        let fine = rows.wa.num_groups().max(cols.wa.num_groups());
        let p = fine.div_ceil(r);
        Ok(Self { n, r, p, rows, cols })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distinct weight patterns, the larger of the row and column counts.
    pub fn r(&self) -> usize {
        self.r
    }

    /// `ceil(max fine group count / r)`.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn w_rows(&self) -> &PatternIndex {
        &self.rows.w
    }

    pub fn w_cols(&self) -> &PatternIndex {
        &self.cols.w
    }

    pub fn wa_rows(&self) -> &PatternIndex {
        &self.rows.wa
    }

    pub fn wa_cols(&self) -> &PatternIndex {
        &self.cols.wa
    }

    pub fn row_side(&self) -> &PatternSide {
        &self.rows
    }

    pub fn col_side(&self) -> &PatternSide {
        &self.cols
    }

    /// The instance for `(Aᵀ, Wᵀ)`: row and column sides swap.
    pub fn transposed(&self) -> Self {
        let relabel = |side: &PatternSide, axis: Axis| PatternSide {
            w: PatternIndex {
                axis,
                ..side.w.clone()
            },
            wa: PatternIndex {
                axis,
                ..side.wa.clone()
            },
            ..side.clone()
        };
        Self {
            n: self.n,
            r: self.r,
            p: self.p,
            rows: relabel(&self.cols, Axis::Rows),
            cols: relabel(&self.rows, Axis::Cols),
        }
    }

    /// Fails unless the detected `(r, p)` equal the asserted values.
    pub fn check_assumption(&self, r: usize, p: usize) -> Result<()> {
        if (self.r, self.p) != (r, p) {
            return invalid(format!(
                "expected (r, p) = ({r}, {p}), detected ({}, {})",
                self.r, self.p
            ));
        }
        Ok(())
    }

    /// Same matrices with every row and column in its own group. Costs `O(n²)`
    /// memory; used as the unstructured baseline.
    pub fn ungrouped(&self) -> Self {
        Self {
            n: self.n,
            r: self.n,
            p: 1,
            rows: self.rows.ungrouped(),
            cols: self.cols.ungrouped(),
        }
    }

    /// Dense `W`, reconstructed from row representatives.
    pub fn weight_dense(&self) -> DenseMatrix {
        self.rows.expand(&self.rows.w, &self.rows.w_reps)
    }

    /// Dense `W ∘ A`, reconstructed from row representatives.
    pub fn weighted_target_dense(&self) -> DenseMatrix {
        self.rows.expand(&self.rows.wa, &self.rows.wa_reps)
    }
}

/// Detects the pattern structure of `(A, W)` and returns it in compressed form.
pub fn build_instance(a: &DenseMatrix, w: &DenseMatrix, tolerance: f64) -> Result<StructuredInstance> {
    check_tolerance(tolerance)?;
    let n = a.rows();
    if a.shape() != (n, n) || w.shape() != (n, n) {
        return invalid(format!(
            "A {:?} and W {:?} must be square of equal size",
            a.shape(),
            w.shape()
        ));
    }
    if !a.is_finite() || !w.is_finite() {
        return invalid("A or W has non-finite entries");
    }
    let wa = w.hadamard(a)?;
    let rows = PatternSide::from_vectors(w, &wa, Axis::Rows, tolerance);
    let cols = PatternSide::from_vectors(&w.transpose(), &wa.transpose(), Axis::Cols, tolerance);
    StructuredInstance::from_sides(rows, cols)
}
