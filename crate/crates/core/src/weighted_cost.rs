//! Weighted Frobenius objective, dense and grouped.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::pattern_index::{Axis, PatternIndex, PatternSide, StructuredInstance};

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// A factor whose rows are constant on the groups of a [`PatternIndex`],
/// stored as one row per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedFactor {
    index: PatternIndex,
    rows: DenseMatrix,
}

impl GroupedFactor {
    pub fn new(index: PatternIndex, rows: DenseMatrix) -> Result<Self> {
        if rows.rows() != index.num_groups() {
            return invalid(format!(
                "{} factor rows for {} groups",
                rows.rows(),
                index.num_groups()
            ));
        }
        Ok(Self { index, rows })
    }

    /// Keeps the row of each group's representative from a full `n x k` factor.
    pub fn compress(index: PatternIndex, full: &DenseMatrix) -> Result<Self> {
        if full.rows() != index.len() {
            return invalid("factor height differs from partition length");
        }
        let mut rows = DenseMatrix::zeros(index.num_groups(), full.cols());
        for (g, &i) in index.representatives().iter().enumerate() {
            rows.row_mut(g).copy_from_slice(full.row(i));
        }
        Ok(Self { index, rows })
    }

    pub fn index(&self) -> &PatternIndex {
        &self.index
    }

    pub fn rows(&self) -> &DenseMatrix {
        &self.rows
    }

    pub fn rank(&self) -> usize {
        self.rows.cols()
    }

    /// Broadcasts each group row to all of the group's members.
    pub fn expand(&self) -> DenseMatrix {
        let n = self.index.len();
        let mut out = DenseMatrix::zeros(n, self.rows.cols());
        for i in 0..n {
            out.row_mut(i).copy_from_slice(self.rows.row(self.index.group(i)));
        }
        out
    }
}

/// `sum_{i,j} W_ij² ((U Vᵀ)_ij − A_ij)²` over every entry.
pub fn cost_dense(a: &DenseMatrix, w: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
    let n = a.rows();
    let m = a.cols();
    if w.shape() != (n, m) || u.rows() != n || v.rows() != m || u.cols() != v.cols() {
        return invalid(format!(
            "cost_dense shapes: A {:?}, W {:?}, U {:?}, V {:?}",
            a.shape(),
            w.shape(),
            u.shape(),
            v.shape()
        ));
    }
    // Same per-entry arithmetic as the grouped evaluator: (w·(u·v) − w·a)².
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ai, wi, ui) = (a.row(i), w.row(i), u.row(i));
            (0..m)
                .map(|j| {
                    let d = wi[j] * dot(ui, v.row(j)) - wi[j] * ai[j];
                    d * d
                })
                .collect::<KahanSum>()
                .value()
        })
        .collect();
    Ok(per_row.into_iter().collect::<KahanSum>().value())
}

/// Result of a grouped evaluation together with its work counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupedCost {
    pub cost: f64,
    /// Representative rows evaluated; equals the number of fine groups.
    pub representative_rows: usize,
}

/// Objective on one side: `u_rows` holds one factor row per fine group of
/// `side.wa`, `other` is the full factor on the opposite axis.
pub(crate) fn side_cost(side: &PatternSide, u_rows: &DenseMatrix, other: &DenseMatrix) -> GroupedCost {
    let sizes = side.wa.sizes();
    let terms: Vec<f64> = (0..side.wa.num_groups())
        .into_par_iter()
        .map(|g| {
            let w = side.w_reps.row(side.wa_parent[g]);
            let wa = side.wa_reps.row(g);
            let u = u_rows.row(g);
            let row_cost = (0..w.len())
                .map(|j| {
                    let d = w[j] * dot(u, other.row(j)) - wa[j];
                    d * d
                })
                .collect::<KahanSum>()
                .value();
            sizes[g] as f64 * row_cost
        })
        .collect();
    GroupedCost {
        cost: terms.iter().copied().collect::<KahanSum>().value(),
        representative_rows: terms.len(),
    }
}

fn check_grouped(inst: &StructuredInstance, u: &GroupedFactor, v: &DenseMatrix) -> Result<()> {
    if u.index().axis() != Axis::Rows || u.index() != inst.wa_rows() {
        return invalid("U must be grouped by the instance's W ∘ A row partition");
    }
    if v.shape() != (inst.n(), u.rank()) {
        return invalid(format!(
            "V is {:?}, expected ({}, {})",
            v.shape(),
            inst.n(),
            u.rank()
        ));
    }
    Ok(())
}

/// Objective evaluated at fine-group representatives only, each weighted by
/// its multiplicity: `O(G·n·k)` for `G` fine row groups.
pub fn cost_grouped(inst: &StructuredInstance, u: &GroupedFactor, v: &DenseMatrix) -> Result<f64> {
    cost_grouped_stats(inst, u, v).map(|c| c.cost)
}

pub fn cost_grouped_stats(
    inst: &StructuredInstance,
    u: &GroupedFactor,
    v: &DenseMatrix,
) -> Result<GroupedCost> {
    check_grouped(inst, u, v)?;
    Ok(side_cost(inst.row_side(), u.rows(), v))
}
