//! Small helpers for spin-1/2 algebra: Pauli vectors, 2x2 matrices and exact
//! SU(2) exponentials.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

pub type Mat2 = Matrix2<C64>;
pub type Spinor = [C64; 2];

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `h . sigma` for a real vector `h`.
pub fn from_vector(h: [f64; 3]) -> Mat2 {
    Mat2::new(
        C64::new(h[2], 0.0),
        C64::new(h[0], -h[1]),
        C64::new(h[0], h[1]),
        C64::new(-h[2], 0.0),
    )
}

/// Real Pauli vector of a Hermitian traceless 2x2 matrix (trace part dropped).
pub fn to_vector(m: &Mat2) -> [f64; 3] {
    let hx = 0.5 * (m[(0, 1)] + m[(1, 0)]).re;
    let hy = 0.5 * (m[(1, 0)] - m[(0, 1)]).im;
    let hz = 0.5 * (m[(0, 0)] - m[(1, 1)]).re;
    [hx, hy, hz]
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Spinor pointing along the unit Bloch direction `n` (global phase fixed so
/// the |0> component is real and non-negative).
pub fn spinor_along(n: [f64; 3]) -> Spinor {
    let r = norm3(n);
    let z = (n[2] / r).clamp(-1.0, 1.0);
    let theta = z.acos();
    let phi = n[1].atan2(n[0]);
    [
        C64::new((0.5 * theta).cos(), 0.0),
        C64::from_polar((0.5 * theta).sin(), phi),
    ]
}

/// Applies `exp(-i dt h.sigma)` to `psi` in place.
#[inline]
pub fn rotate(psi: &mut Spinor, h: [f64; 3], dt: f64) {
    let r = norm3(h);
    if r == 0.0 {
        return;
    }
    let (s, c) = (r * dt).sin_cos();
    let k = s / r;
    // U = c I - i k (h.sigma)
    let u00 = C64::new(c, -k * h[2]);
    let u11 = C64::new(c, k * h[2]);
    let u01 = C64::new(-k * h[1], -k * h[0]);
    let u10 = C64::new(k * h[1], -k * h[0]);
    let a = psi[0];
    let b = psi[1];
    psi[0] = u00 * a + u01 * b;
    psi[1] = u10 * a + u11 * b;
}

pub fn apply(m: &Mat2, v: &Spinor) -> Spinor {
    [
        m[(0, 0)] * v[0] + m[(0, 1)] * v[1],
        m[(1, 0)] * v[0] + m[(1, 1)] * v[1],
    ]
}

pub fn dot(a: &Spinor, b: &Spinor) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn norm_sqr(a: &Spinor) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip() {
        let h = [0.3, -1.2, 0.7];
        let back = to_vector(&from_vector(h));
        for k in 0..3 {
            assert!((back[k] - h[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_matches_matrix_exponential_series() {
        let h = [0.4, 0.1, -0.3];
        let dt = 0.7;
        let mut psi = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let psi0 = psi;
        rotate(&mut psi, h, dt);
        // Taylor series of exp(-i dt H)
        let hm = from_vector(h) * C64::new(0.0, -dt);
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for n in 1..40 {
            term = term * hm / C64::new(n as f64, 0.0);
            sum += term;
        }
        let expect = apply(&sum, &psi0);
        assert!((expect[0] - psi[0]).norm() < 1e-14);
        assert!((expect[1] - psi[1]).norm() < 1e-14);
    }

    #[test]
    fn spinor_is_eigenvector_of_its_axis() {
        let n = [0.2, -0.5, 0.4];
        let chi = spinor_along(n);
        let r = norm3(n);
        let hv = apply(&from_vector(n), &chi);
        assert!((hv[0] - chi[0] * r).norm() < 1e-14);
        assert!((hv[1] - chi[1] * r).norm() < 1e-14);
    }
}
