//! Reference evaluators for checking the structured solvers.
//!
//! Everything here is written the slow, obvious way on nested `Vec`s so it
//! shares no code path with `wlra-core`. Nothing in this crate is meant to be
//! fast.

#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn transpose(m: &Mat) -> Mat {
    if m.is_empty() {
        return Vec::new();
    }
    let mut out = zeros(m[0].len(), m.len());
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            out[j][i] = x;
        }
    }
    out
}

/// Triple-loop product.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    let mut out = zeros(a.len(), cols);
    for i in 0..a.len() {
        for j in 0..cols {
            let mut s = 0.0;
            for l in 0..inner {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// `sum_{i,j} W_ij^2 ((U V^T)_ij - A_ij)^2` by two loops over entries.
pub fn weighted_cost(a: &Mat, w: &Mat, u: &Mat, v: &Mat) -> f64 {
    let n = a.len();
    let mut total = 0.0f64;
    for i in 0..n {
        for j in 0..a[i].len() {
            let mut uv = 0.0;
            for l in 0..u[i].len() {
                uv += u[i][l] * v[j][l];
            }
            let d = w[i][j] * (uv - a[i][j]);
            total += d * d;
        }
    }
    total
}

pub fn determinant(m: &Mat) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * determinant(&minor(m, 0, j))
            })
            .sum(),
    }
}

fn minor(m: &Mat, skip_row: usize, skip_col: usize) -> Mat {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip_row)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != skip_col)
                .map(|(_, &x)| x)
                .collect()
        })
        .collect()
}

/// Inverse by Cramer's rule: `inv[i][j] = (-1)^{i+j} det(M without row j, col i) / det(M)`.
pub fn cramer_inverse(m: &Mat) -> Option<Mat> {
    let n = m.len();
    let det = determinant(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[i][j] = sign * determinant(&minor(m, j, i)) / det;
        }
    }
    Some(inv)
}

/// Least-squares `argmin_x ||D^T x - b||` for a full-row-rank `k x t` design,
/// through the normal equations `x = (D D^T)^{-1} D b` with a Cramer inverse.
pub fn normal_equations_solve(design: &Mat, target: &[f64]) -> Option<Vec<f64>> {
    let gram = matmul(design, &transpose(design));
    let inv = cramer_inverse(&gram)?;
    let db: Vec<f64> = design
        .iter()
        .map(|row| row.iter().zip(target).map(|(d, b)| d * b).sum())
        .collect();
    Some(
        inv.iter()
            .map(|row| row.iter().zip(&db).map(|(a, b)| a * b).sum())
            .collect(),
    )
}

/// Optimal row `x` for `min_x sum_j W_ij^2 (x . V_j - A_ij)^2`, solved
/// independently for row `i` through the normal equations.
pub fn weighted_row_regression(v: &Mat, w_row: &[f64], a_row: &[f64]) -> Option<Vec<f64>> {
    let k = v.first().map_or(0, |r| r.len());
    let design: Mat = (0..k)
        .map(|l| v.iter().zip(w_row).map(|(vj, &wj)| vj[l] * wj).collect())
        .collect();
    let target: Vec<f64> = a_row.iter().zip(w_row).map(|(a, w)| a * w).collect();
    normal_equations_solve(&design, &target)
}

/// Groups rows by exhaustive pairwise comparison. Returns `group_of` with ids
/// in order of first appearance.
pub fn brute_force_row_groups(m: &Mat) -> Vec<usize> {
    let mut group_of = vec![usize::MAX; m.len()];
    let mut next = 0;
    for i in 0..m.len() {
        if group_of[i] != usize::MAX {
            continue;
        }
        group_of[i] = next;
        for j in (i + 1)..m.len() {
            if group_of[j] == usize::MAX && m[i] == m[j] {
                group_of[j] = next;
            }
        }
        next += 1;
    }
    group_of
}

pub fn distinct_rows(m: &Mat) -> usize {
    brute_force_row_groups(m).into_iter().max().map_or(0, |g| g + 1)
}

pub fn distinct_cols(m: &Mat) -> usize {
    distinct_rows(&transpose(m))
}

/// Best rank-`k` residual `||A||_F^2 - sum_{i<=k} sigma_i^2`, from block power
/// iteration on `A^T A` with Rayleigh-Ritz extraction.
pub fn truncated_svd_residual(a: &Mat, k: usize) -> f64 {
    let top = top_singular_values_squared(a, k);
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    (total - top.iter().sum::<f64>()).max(0.0)
}

/// Top `k` eigenvalues of `A^T A`, largest first.
pub fn top_singular_values_squared(a: &Mat, k: usize) -> Vec<f64> {
    let n = a.first().map_or(0, |r| r.len());
    let block = (k + 8).min(n);
    let ata = matmul(&transpose(a), a);

    // Deterministic start block from a small LCG.
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut q: Mat = (0..n)
        .map(|_| {
            (0..block)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .collect()
        })
        .collect();
    orthonormalize_columns(&mut q);

    let mut prev = vec![f64::INFINITY; k];
    for _ in 0..20_000 {
        let mut z = matmul(&ata, &q);
        orthonormalize_columns(&mut z);
        q = z;
        let ritz = ritz_values(&ata, &q);
        let top: Vec<f64> = ritz.into_iter().take(k).collect();
        let done = top
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs().max(1.0));
        prev = top;
        if done {
            break;
        }
    }
    prev
}

fn ritz_values(ata: &Mat, q: &Mat) -> Vec<f64> {
    let small = matmul(&transpose(q), &matmul(ata, q));
    let mut vals = jacobi_eigenvalues(small);
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Modified Gram-Schmidt, applied twice. A column that collapses to
/// round-off against the earlier ones is replaced by a fresh pseudo-random
/// vector before being orthogonalized again.
fn orthonormalize_columns(m: &mut Mat) {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for c in 0..cols {
        for _attempt in 0..8 {
            let before = (0..rows).map(|i| m[i][c] * m[i][c]).sum::<f64>().sqrt();
            for _ in 0..2 {
                for p in 0..c {
                    let dot: f64 = (0..rows).map(|i| m[i][c] * m[i][p]).sum();
                    for i in 0..rows {
                        m[i][c] -= dot * m[i][p];
                    }
                }
            }
            let norm = (0..rows).map(|i| m[i][c] * m[i][c]).sum::<f64>().sqrt();
            if norm > 1e-8 * before && norm > 0.0 {
                for row in m.iter_mut() {
                    row[c] /= norm;
                }
                break;
            }
            for row in m.iter_mut() {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                row[c] = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            }
        }
    }
}

/// Cyclic Jacobi eigenvalue sweep for a small symmetric matrix.
pub fn jacobi_eigenvalues(mut m: Mat) -> Vec<f64> {
    let n = m.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let mrp = m[r][p];
                    let mrq = m[r][q];
                    m[r][p] = c * mrp - s * mrq;
                    m[r][q] = s * mrp + c * mrq;
                }
                for r in 0..n {
                    let mpr = m[p][r];
                    let mqr = m[q][r];
                    m[p][r] = c * mpr - s * mqr;
                    m[q][r] = s * mpr + c * mqr;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}
