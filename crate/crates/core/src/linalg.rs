//! Small dense linear algebra for node-level problems (dimension ≤ a few).

use alloc::vec::Vec;

use crate::math;

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is `n×n` row-major. Returns `None` when `A` is numerically singular.
pub fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
            }
            b.swap(pivot, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Numerical rank of a set of `dim`-vectors (flat), via modified
/// Gram–Schmidt with a tolerance relative to the largest norm.
pub fn rank(points: &[f64], dim: usize, rel_tol: f64) -> usize {
    let scale = points
        .chunks_exact(dim)
        .map(math::norm)
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in points.chunks_exact(dim) {
        let mut v: Vec<f64> = p.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = math::dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let len = math::norm(&v);
        if len > rel_tol * scale {
            basis.push(v.iter().map(|x| x / len).collect());
            if basis.len() == dim {
                break;
            }
        }
    }
    basis.len()
}

/// Eigenvalues of a symmetric `n×n` matrix by cyclic Jacobi rotations,
/// in ascending order.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_two_by_two() {
        let mut a = [1.0, -2.0, 1.0, 1.0];
        let mut b = [0.0, 1.0];
        let x = solve(&mut a, &mut b, 2).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() <= f64::EPSILON && (x[1] - 1.0 / 3.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn singular_is_none() {
        let mut a = [1.0, 2.0, 2.0, 4.0];
        let mut b = [1.0, 2.0];
        assert!(solve(&mut a, &mut b, 2).is_none());
    }

    #[test]
    fn rank_of_collinear_points() {
        assert_eq!(rank(&[1.0, 1.0, -2.0, -2.0, 0.5, 0.5], 2, 1e-9), 1);
        assert_eq!(rank(&[1.0, 0.0, 0.0, 1.0], 2, 1e-9), 2);
        assert_eq!(rank(&[0.0, 0.0], 2, 1e-9), 0);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let ev = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        // tridiagonal (2, −1): eigenvalues 2 − 2cos(kπ/4)
        let a = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let ev = symmetric_eigenvalues(&a, 3);
        for (k, v) in ev.iter().enumerate() {
            let want = 2.0 - 2.0 * (core::f64::consts::PI * (k + 1) as f64 / 4.0).cos();
            assert!((v - want).abs() < 1e-12, "{v} {want}");
        }
        assert_eq!(symmetric_eigenvalues(&[5.0], 1), vec![5.0]);
    }
}
