//! Small dense linear algebra on top of nalgebra: damped minimum-norm solves
//! and eigenvalue magnitudes.

use alloc::vec::Vec;

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Build a matrix from row slices. All rows must have the same length.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let n = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormSolution {
    pub x: Vector,
    /// Numerical rank of the system matrix.
    pub rank: usize,
    /// Rank is below `min(rows, cols)`.
    pub rank_deficient: bool,
}

/// Relative singular-value threshold for the rank estimate.
const RANK_RTOL: f64 = 1e-9;

/// Minimum-norm least-squares solution of `a x = b` with Tikhonov damping
/// `lambda`: `x = a^T (a a^T + lambda^2 I)^-1 b`, evaluated through the SVD so
/// it stays well defined and smooth when `a` loses rank.
pub fn damped_min_norm(a: &Matrix, b: &Vector, lambda: f64) -> MinNormSolution {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return MinNormSolution {
            x: Vector::zeros(n),
            rank: 0,
            rank_deficient: m != n,
        };
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut x = Vector::zeros(n);
    let mut rank = 0;
    let l2 = lambda * lambda;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_RTOL * smax {
            rank += 1;
        }
        let denom = s * s + l2;
        if denom == 0.0 {
            continue;
        }
        let coef = s * u.column(k).dot(b) / denom;
        x += vt.row(k).transpose() * coef;
    }
    MinNormSolution {
        x,
        rank,
        rank_deficient: rank < m.min(n),
    }
}

/// Undamped minimum-norm least-squares solution (pseudo-inverse).
pub fn pinv_solve(a: &Matrix, b: &Vector) -> MinNormSolution {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return MinNormSolution {
            x: Vector::zeros(n),
            rank: 0,
            rank_deficient: m != n,
        };
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut x = Vector::zeros(n);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_RTOL * smax {
            rank += 1;
            x += vt.row(k).transpose() * (u.column(k).dot(b) / s);
        }
    }
    MinNormSolution {
        x,
        rank,
        rank_deficient: rank < m.min(n),
    }
}

/// Eigenvalue magnitudes of a square matrix, sorted descending.
///
/// Orders one and two use the characteristic polynomial directly; larger
/// matrices go through Hessenberg reduction and shifted QR.
pub fn eigen_magnitudes(a: &Matrix) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    if m != n {
        return Err(Error::InvalidParameter("eigenvalues need a square matrix"));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries"));
    }
    let mut mags: Vec<f64> = match n {
        0 => Vec::new(),
        1 => alloc::vec![abs(a[(0, 0)])],
        2 => quadratic_root_magnitudes(a[(0, 0)] + a[(1, 1)], a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]),
        _ => a.complex_eigenvalues().iter().map(|c| c.modulus()).collect(),
    };
    mags.sort_by(|x, y| y.total_cmp(x));
    Ok(mags)
}

/// Magnitudes of the roots of `lambda^2 - trace lambda + det`.
fn quadratic_root_magnitudes(trace: f64, det: f64) -> Vec<f64> {
    let disc = 0.25 * trace * trace - det;
    if disc < 0.0 {
        // complex pair; |lambda|^2 = det
        let m = sqrt(det);
        alloc::vec![m, m]
    } else {
        let h = 0.5 * trace;
        let s = sqrt(disc);
        // Avoid cancellation: larger root first, the other from the product.
        let big = if h >= 0.0 { h + s } else { h - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        alloc::vec![abs(big), abs(small)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_eigenvalues() {
        let m = from_rows(&[&[0.5, 0.0], &[0.0, 0.2]]);
        let e = eigen_magnitudes(&m).unwrap();
        assert_abs_diff_eq!(e[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn rotation_has_unit_modulus_pair() {
        let m = from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert_eq!(eigen_magnitudes(&m).unwrap(), alloc::vec![1.0, 1.0]);
    }

    #[test]
    fn companion_matrix_roots() {
        // (l - 0.3)(l - 0.6)(l + 0.9) = l^3 - 0 l^2 - 0.63 l + 0.162
        let (c2, c1, c0) = (0.0, -0.63, 0.162);
        let m = from_rows(&[&[-c2, -c1, -c0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let e = eigen_magnitudes(&m).unwrap();
        for (a, b) in e.iter().zip([0.9, 0.6, 0.3]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn six_by_six_block_spectrum() {
        // Rotation-scaled 2x2 blocks with known moduli, mixed by a similarity.
        let mut d = Matrix::zeros(6, 6);
        for (k, (r, w)) in [(0.95, 0.4), (0.5, 1.3), (0.2, 2.0)].iter().enumerate() {
            let (c, s) = (r * libm::cos(*w), r * libm::sin(*w));
            d[(2 * k, 2 * k)] = c;
            d[(2 * k, 2 * k + 1)] = -s;
            d[(2 * k + 1, 2 * k)] = s;
            d[(2 * k + 1, 2 * k + 1)] = c;
        }
        let t = Matrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { 0.1 * (i as f64 - j as f64) });
        let ti = t.clone().try_inverse().unwrap();
        let m = &t * d * ti;
        let e = eigen_magnitudes(&m).unwrap();
        for (a, b) in e.iter().zip([0.95, 0.95, 0.5, 0.5, 0.2, 0.2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(eigen_magnitudes(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn min_norm_of_underdetermined_system() {
        let a = from_rows(&[&[1.0, 1.0]]);
        let s = pinv_solve(&a, &Vector::from_vec(alloc::vec![2.0]));
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-14);
        assert!(!s.rank_deficient);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let a = from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let s = damped_min_norm(&a, &Vector::from_vec(alloc::vec![1.0, 2.0]), 0.0);
        assert_eq!(s.rank, 1);
        assert!(s.rank_deficient);
        // Minimum-norm solution lies along (1, 2).
        assert_abs_diff_eq!(s.x[1], 2.0 * s.x[0], epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0] + 2.0 * s.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn damping_shrinks_the_solution() {
        let a = from_rows(&[&[1e-3, 0.0], &[0.0, 1.0]]);
        let b = Vector::from_vec(alloc::vec![1.0, 1.0]);
        let x0 = damped_min_norm(&a, &b, 0.0).x;
        let x1 = damped_min_norm(&a, &b, 0.1).x;
        assert_abs_diff_eq!(x0[0], 1e3, epsilon = 1e-9);
        assert!(x1[0] < 0.2);
        assert_abs_diff_eq!(x1[1], 1.0 / 1.01, epsilon = 1e-12);
    }
}
