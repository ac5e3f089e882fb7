//! Fixed-size 4×4 helpers, generic over [`Real`] so they run on dual numbers.

use crate::calculus::Real;

pub type Vec4<T = f64> = [T; 4];
pub type Mat4<T = f64> = [[T; 4]; 4];

/// Minkowski metric diag(+1, −1, −1, −1).
pub const ETA_DIAG: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

pub fn eta() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (a, row) in m.iter_mut().enumerate() {
        row[a] = ETA_DIAG[a];
    }
    m
}

pub fn identity<T: Real>() -> Mat4<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { T::one() } else { T::zero() }))
}

pub fn zeros<T: Real>() -> Mat4<T> {
    [[T::zero(); 4]; 4]
}

pub fn mat_mul<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = T::zero();
            for k in 0..4 {
                s += a[i][k] * b[k][j];
            }
            s
        })
    })
}

pub fn mat_vec<T: Real>(a: &Mat4<T>, v: &Vec4<T>) -> Vec4<T> {
    std::array::from_fn(|i| {
        let mut s = T::zero();
        for k in 0..4 {
            s += a[i][k] * v[k];
        }
        s
    })
}

/// `g(a, b) = g_ij a^i b^j`.
pub fn quad<T: Real>(g: &Mat4<T>, a: &Vec4<T>, b: &Vec4<T>) -> T {
    let mut s = T::zero();
    for i in 0..4 {
        for j in 0..4 {
            s += g[i][j] * a[i] * b[j];
        }
    }
    s
}

pub fn dot<T: Real>(a: &Vec4<T>, b: &Vec4<T>) -> T {
    let mut s = T::zero();
    for k in 0..4 {
        s += a[k] * b[k];
    }
    s
}

pub fn re_vec<T: Real>(v: &Vec4<T>) -> Vec4 {
    v.map(|x| x.re())
}

pub fn re_mat<T: Real>(m: &Mat4<T>) -> Mat4 {
    m.map(|row| row.map(|x| x.re()))
}

/// Determinant and inverse by cofactor expansion over 2×2 minors.
///
/// Returns `None` only when the determinant is exactly zero.
pub fn inverse<T: Real>(m: &Mat4<T>) -> Option<(Mat4<T>, T)> {
    let [a0, a1, a2, a3] = m[0];
    let [b0, b1, b2, b3] = m[1];
    let [c0, c1, c2, c3] = m[2];
    let [d0, d1, d2, d3] = m[3];

    let s0 = a0 * b1 - b0 * a1;
    let s1 = a0 * b2 - b0 * a2;
    let s2 = a0 * b3 - b0 * a3;
    let s3 = a1 * b2 - b1 * a2;
    let s4 = a1 * b3 - b1 * a3;
    let s5 = a2 * b3 - b2 * a3;

    let c5 = c2 * d3 - d2 * c3;
    let c4 = c1 * d3 - d1 * c3;
    let c3_ = c1 * d2 - d1 * c2;
    let c2_ = c0 * d3 - d0 * c3;
    let c1_ = c0 * d2 - d0 * c2;
    let c0_ = c0 * d1 - d0 * c1;

    let det = s0 * c5 - s1 * c4 + s2 * c3_ + s3 * c2_ - s4 * c1_ + s5 * c0_;
    if det.re() == 0.0 {
        return None;
    }
    let inv = det.recip();

    let r = [
        [
            (b1 * c5 - b2 * c4 + b3 * c3_) * inv,
            (-a1 * c5 + a2 * c4 - a3 * c3_) * inv,
            (d1 * s5 - d2 * s4 + d3 * s3) * inv,
            (-c1 * s5 + c2 * s4 - c3 * s3) * inv,
        ],
        [
            (-b0 * c5 + b2 * c2_ - b3 * c1_) * inv,
            (a0 * c5 - a2 * c2_ + a3 * c1_) * inv,
            (-d0 * s5 + d2 * s2 - d3 * s1) * inv,
            (c0 * s5 - c2 * s2 + c3 * s1) * inv,
        ],
        [
            (b0 * c4 - b1 * c2_ + b3 * c0_) * inv,
            (-a0 * c4 + a1 * c2_ - a3 * c0_) * inv,
            (d0 * s4 - d1 * s2 + d3 * s0) * inv,
            (-c0 * s4 + c1 * s2 - c3 * s0) * inv,
        ],
        [
            (-b0 * c3_ + b1 * c1_ - b2 * c0_) * inv,
            (a0 * c3_ - a1 * c1_ + a2 * c0_) * inv,
            (-d0 * s3 + d1 * s1 - d2 * s0) * inv,
            (c0 * s3 - c1 * s1 + c2 * s0) * inv,
        ],
    ];
    Some((r, det))
}

/// Copy the upper triangle onto the lower one so symmetry is exact.
pub fn symmetrize_upper<T: Real>(m: &mut Mat4<T>) {
    for i in 0..4 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
}

/// Largest absolute entry of `a·b − I`.
pub fn identity_residual(a: &Mat4, b: &Mat4) -> f64 {
    let p = mat_mul(a, b);
    let mut r = 0.0_f64;
    for (i, row) in p.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            r = r.max((x - target).abs());
        }
    }
    r
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_known_matrix() {
        let m = [
            [2.0, 0.5, 0.0, 1.0],
            [0.0, 3.0, -1.0, 0.0],
            [1.0, 0.0, 4.0, 0.2],
            [0.0, 0.3, 0.0, -1.5],
        ];
        let (inv, det) = inverse(&m).unwrap();
        assert!(identity_residual(&m, &inv) < 1e-14);
        assert!(identity_residual(&inv, &m) < 1e-14);
        let na = nalgebra::Matrix4::from_fn(|i, j| m[i][j]);
        assert!((det - na.determinant()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let m = [[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0], [0.0; 4], [0.0, 0.0, 0.0, 1.0]];
        assert!(inverse(&m).is_none());
    }

    #[test]
    fn eta_is_its_own_inverse() {
        let e = eta();
        assert_eq!(identity_residual(&e, &e), 0.0);
    }
}
