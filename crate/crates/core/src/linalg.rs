//! Dense 3x3 helpers used by the circle and ellipse fits.

use crate::scalar::Scalar;

pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

pub fn zeros<T: Scalar>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn identity<T: Scalar>() -> Mat3<T> {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn transpose<T: Scalar>(m: &Mat3<T>) -> Mat3<T> {
    let mut t = zeros();
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub fn mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mul_vec<T: Scalar>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    let mut out = [T::zero(); 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|k| a[i][k] * v[k]).sum();
    }
    out
}

pub fn sub<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][j] - b[i][j];
        }
    }
    c
}

pub fn max_abs<T: Scalar>(m: &Mat3<T>) -> T {
    m.iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `rel_tol * max|a|`.
pub fn solve<T: Scalar>(a: &Mat3<T>, b: &Vec3<T>, rel_tol: T) -> Option<Vec3<T>> {
    let scale = max_abs(a);
    if !(scale > T::zero()) || !scale.is_finite() {
        return None;
    }
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() <= rel_tol * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] = m[row][k] - f * m[col][k];
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let acc: T = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - acc) / m[row][row];
    }
    Some(x)
}

/// Inverse via column-wise solves.
pub fn inverse<T: Scalar>(a: &Mat3<T>, rel_tol: T) -> Option<Mat3<T>> {
    let mut inv = zeros();
    for j in 0..3 {
        let mut e = [T::zero(); 3];
        e[j] = T::one();
        let col = solve(a, &e, rel_tol)?;
        for i in 0..3 {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns `(values, vectors)` where `vectors[k]` is the unit eigenvector
/// for `values[k]`; values are sorted ascending.
pub fn symmetric_eigen<T: Scalar>(a: &Mat3<T>) -> (Vec3<T>, [Vec3<T>; 3]) {
    let mut m = *a;
    let mut v = identity::<T>();
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        let diag = m[0][0].abs() + m[1][1].abs() + m[2][2].abs();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if m[p][q] == T::zero() {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (two * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            // m <- J^T m J with J the rotation in the (p, q) plane.
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let mut vectors = [[T::zero(); 3]; 3];
    for (slot, &k) in order.iter().enumerate() {
        vectors[slot] = [v[0][k], v[1][k], v[2][k]];
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_vector() {
        let a: Mat3<f64> = [[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]];
        let x = [1.0, -2.0, 0.5];
        let b = mul_vec(&a, &x);
        let got = solve(&a, &b, 1e-12).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let a: Mat3<f64> = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]];
        assert!(solve(&a, &[1.0, 2.0, 3.0], 1e-12).is_none());
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a: Mat3<f64> = [[2.0, -1.0, 0.3], [-1.0, 2.0, -1.0], [0.3, -1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for k in 0..3 {
            let av = mul_vec(&a, &vecs[k]);
            for i in 0..3 {
                assert!((av[i] - vals[k] * vecs[k][i]).abs() < 1e-12);
            }
        }
    }
}
