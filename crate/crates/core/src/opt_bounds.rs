//! The OPT bracket: zero-factorization upper bound, the log-domain lower
//! bound for instances with `r` distinct weight patterns, and the number of
//! bisection steps a certifying search between them would need.

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::pattern_index::StructuredInstance;
use crate::weighted_cost::side_cost;

/// Bits per stored entry when inputs are `f64`.
pub const ENTRY_BITS: f64 = 64.0;

/// Largest base-2 exponent an `f64` can hold.
const F64_MAX_EXP: f64 = 1023.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: u64,
    /// Entries need `n^gamma` bits.
    pub gamma: f64,
    pub k: usize,
    pub r: usize,
    pub eps: f64,
    /// Constant inside the `Õ(r k² / eps)` exponent.
    pub c_exp: f64,
    /// Degree of the `poly(n)` factor in the upper bound.
    pub c_poly: f64,
}

impl BoundParams {
    /// Parameters for an `n x n` instance of `f64` entries: `gamma` is chosen
    /// so that `n^gamma = 64`.
    pub fn for_instance(n: usize, r: usize, k: usize, eps: f64) -> Self {
        let gamma = if n > 1 {
            ENTRY_BITS.log2() / (n as f64).log2()
        } else {
            0.0
        };
        Self {
            n: n as u64,
            gamma,
            k,
            r,
            eps,
            c_exp: 1.0,
            c_poly: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.r == 0 {
            return invalid("n, k and r must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return invalid(format!("gamma must be finite and nonnegative, got {}", self.gamma));
        }
        for (name, x) in [("eps", self.eps), ("c_exp", self.c_exp), ("c_poly", self.c_poly)] {
            if !(x > 0.0 && x.is_finite()) {
                return invalid(format!("{name} must be positive, got {x}"));
            }
        }
        Ok(())
    }

    /// `log2(n^gamma)`.
    fn bits_log2(&self) -> f64 {
        self.gamma * (self.n as f64).log2()
    }
}

/// `log2` of the lower bound, i.e. `-n^gamma · 2^{c_exp · x · log2(max(2, x))}`
/// with `x = r k² / eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    /// `log2(lower bound)`; `-inf` when its magnitude exceeds `f64` range.
    pub log2: f64,
    /// `log2(-log2)`, always finite for valid parameters.
    pub magnitude_log2: f64,
    pub overflowed: bool,
}

pub fn lower_bound_log2(params: &BoundParams) -> Result<LowerBound> {
    params.validate()?;
    let x = params.r as f64 * (params.k as f64).powi(2) / params.eps;
    let exponent = params.c_exp * x * x.max(2.0).log2();
    let magnitude_log2 = params.bits_log2() + exponent;
    if !magnitude_log2.is_finite() {
        return invalid("lower bound exponent is not representable");
    }
    let overflowed = magnitude_log2 > F64_MAX_EXP;
    let log2 = if overflowed {
        f64::NEG_INFINITY
    } else {
        -magnitude_log2.exp2()
    };
    Ok(LowerBound {
        log2,
        magnitude_log2,
        overflowed,
    })
}

/// `log2` of the upper bound `poly(n) · 2^{n^gamma}`.
pub fn upper_bound_log2(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(params.c_poly * (params.n as f64).log2() + params.bits_log2().exp2())
}

/// `ceil(log2(gap))` where `gap = log2(upper) - log2(lower)`.
pub fn iteration_budget(params: &BoundParams) -> Result<u64> {
    let upper = upper_bound_log2(params)?;
    let lower = lower_bound_log2(params)?;
    let gap_log2 = if lower.overflowed || !upper.is_finite() {
        // log2(a + b) without forming a or b
        let a = upper.log2();
        let b = lower.magnitude_log2;
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
    } else {
        (upper - lower.log2).log2()
    };
    Ok(gap_log2.ceil().max(1.0) as u64)
}

/// `||W ∘ A||²_F`, the cost of the zero factorization.
pub fn upper_bound(inst: &StructuredInstance) -> f64 {
    let side = inst.row_side();
    let zero_rows = DenseMatrix::zeros(side.wa.num_groups(), 1);
    let zero_other = DenseMatrix::zeros(inst.n(), 1);
    side_cost(side, &zero_rows, &zero_other).cost
}

/// Theoretical lower bound and achievable upper bound on OPT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: LowerBound,
    pub upper: f64,
    pub iteration_budget: u64,
}

pub fn bracket(inst: &StructuredInstance, params: &BoundParams) -> Result<Bracket> {
    Ok(Bracket {
        lower: lower_bound_log2(params)?,
        upper: upper_bound(inst),
        iteration_budget: iteration_budget(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern_index::build_instance;
    use crate::weighted_cost::cost_dense;

    fn unit(n: u64, gamma: f64) -> BoundParams {
        BoundParams {
            n,
            gamma,
            k: 1,
            r: 1,
            eps: 1.0,
            c_exp: 1.0,
            c_poly: 1.0,
        }
    }

    #[test]
    fn unit_lower_bound_is_minus_two() {
        let lb = lower_bound_log2(&unit(16, 0.0)).unwrap();
        assert_eq!(lb.log2, -2.0);
        assert!(!lb.overflowed);
    }

    #[test]
    fn gamma_scales_by_n_to_gamma() {
        let base = lower_bound_log2(&unit(16, 0.0)).unwrap().log2;
        let scaled = lower_bound_log2(&unit(16, 0.5)).unwrap().log2;
        assert_eq!(scaled, 4.0 * base);
    }

    #[test]
    fn doubling_k_is_more_negative() {
        let mut p = BoundParams::for_instance(1024, 2, 1, 0.25);
        let a = lower_bound_log2(&p).unwrap().log2;
        p.k = 2;
        let b = lower_bound_log2(&p).unwrap().log2;
        assert!(b < a);
    }

    #[test]
    fn budget_worked_examples() {
        // gap = (1 + 1) - (-2) = 4
        assert_eq!(iteration_budget(&unit(2, 0.0)).unwrap(), 2);
        // gap = (1021 + 1) - (-2) = 1024
        let p = BoundParams { c_poly: 1021.0, ..unit(2, 0.0) };
        assert_eq!(iteration_budget(&p).unwrap(), 10);
        // gap = (4 + 4) - (-8) = 16
        assert_eq!(iteration_budget(&unit(16, 0.5)).unwrap(), 4);
    }

    #[test]
    fn overflow_is_flagged_and_budget_stays_finite() {
        let p = BoundParams {
            r: 64,
            k: 8,
            eps: 0.01,
            ..unit(1 << 20, 0.5)
        };
        let lb = lower_bound_log2(&p).unwrap();
        assert!(lb.overflowed);
        assert_eq!(lb.log2, f64::NEG_INFINITY);
        assert!(lb.magnitude_log2.is_finite());
        let budget = iteration_budget(&p).unwrap();
        assert_eq!(budget, lb.magnitude_log2.ceil() as u64);
    }

    #[test]
    fn in_range_bounds_never_overflow() {
        // r k² / eps = 64 at the edge of the supported regime
        let p = BoundParams {
            r: 4,
            k: 2,
            eps: 0.25,
            gamma: 1.0,
            ..unit(1 << 32, 1.0)
        };
        let lb = lower_bound_log2(&p).unwrap();
        assert!(lb.log2.is_finite() && !lb.overflowed);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(lower_bound_log2(&BoundParams { eps: 0.0, ..unit(2, 0.0) }).is_err());
        assert!(iteration_budget(&BoundParams { n: 0, ..unit(2, 0.0) }).is_err());
        assert!(lower_bound_log2(&BoundParams { gamma: -1.0, ..unit(2, 0.0) }).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let ones = DenseMatrix::filled(4, 4, 1.0);
        assert_eq!(upper_bound(&build_instance(&ones, &ones, 0.0).unwrap()), 16.0);
        let zero = DenseMatrix::zeros(4, 4);
        assert_eq!(upper_bound(&build_instance(&zero, &ones, 0.0).unwrap()), 0.0);

        let a = DenseMatrix::from_fn(9, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let w = DenseMatrix::from_fn(9, 9, |i, j| 0.5 + ((i / 3 + j / 4) % 3) as f64);
        let inst = build_instance(&a, &w, 0.0).unwrap();
        let z = DenseMatrix::zeros(9, 2);
        let dense = cost_dense(&a, &w, &z, &z).unwrap();
        assert!((upper_bound(&inst) - dense).abs() <= 1e-12 * dense);
    }

    mod monotone {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lower_and_budget_monotone(
                r in 1usize..4, k in 1usize..3, eps in 0.26f64..0.49,
                gamma in 0.0f64..1.0, n in 2u64..1_000_000,
            ) {
                let base = BoundParams { n, gamma, k, r, eps, c_exp: 1.0, c_poly: 1.0 };
                let lb = lower_bound_log2(&base).unwrap();
                prop_assert!(lb.log2.is_finite());
                let budget = iteration_budget(&base).unwrap();
                for bumped in [
                    BoundParams { r: r + 1, ..base },
                    BoundParams { k: k + 1, ..base },
                    BoundParams { gamma: gamma + 0.1, ..base },
                    BoundParams { eps: eps / 2.0, ..base },
                ] {
                    prop_assert!(lower_bound_log2(&bumped).unwrap().log2 < lb.log2);
                    prop_assert!(iteration_budget(&bumped).unwrap() >= budget);
                }
            }
        }
    }
}
