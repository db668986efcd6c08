//! Small geometric primitives shared across the crate: unit directions with a
//! projective representative convention, tangent bases, point-to-segment
//! distance, and deterministic sphere nets for multistart solvers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Unit-norm tolerance enforced after every normalization.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Coordinates with absolute value below this are treated as zero when
/// locating the first nonzero coordinate of a projective representative.
const SIGN_EPS: f64 = 1e-14;

/// A unit vector in `R^d`.
///
/// When treated as an element of real projective space, the canonical
/// representative of the class `{u, -u}` is the one whose first nonzero
/// coordinate is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDirection(DVector<f64>);

impl UnitDirection {
    /// Normalizes `v` to unit length. Fails on zero or non-finite input.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidDirection { norm: n });
        }
        let u = v / n;
        debug_assert!((u.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self(u))
    }

    /// Builds a direction from a slice.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    /// Returns the antipodal direction.
    pub fn negated(&self) -> Self {
        Self(-&self.0)
    }

    /// Returns the canonical projective representative of `{u, -u}`:
    /// the sign is flipped so that the first coordinate larger than a tiny
    /// threshold in absolute value is positive. Idempotent.
    pub fn canonical(&self) -> Self {
        match self.0.iter().find(|c| c.abs() > SIGN_EPS) {
            Some(c) if *c < 0.0 => self.negated(),
            _ => self.clone(),
        }
    }

    /// True if this is already the canonical projective representative.
    pub fn is_canonical(&self) -> bool {
        match self.0.iter().find(|c| c.abs() > SIGN_EPS) {
            Some(c) => *c > 0.0,
            None => true,
        }
    }
}

/// Geodesic distance between projective classes `[u]` and `[v]`,
/// i.e. `acos(|u . v|)`, in `[0, pi/2]`.
pub fn geodesic_dist_projective(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = u.dot(v).abs().min(1.0);
    c.acos()
}

/// Geodesic distance between unit vectors on the sphere, `acos(u . v)`.
pub fn geodesic_dist_sphere(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    u.dot(v).clamp(-1.0, 1.0).acos()
}

/// Closest point of the closed segment `[a, b]` to `x`.
pub fn closest_point_on_segment(a: &DVector<f64>, b: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a.clone();
    }
    let t = ((x - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Distance from `x` to the closed segment `[a, b]`.
pub fn dist_point_segment(a: &DVector<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (x - closest_point_on_segment(a, b, x)).norm()
}

/// An orthonormal basis of the tangent space `u^perp` at a unit vector `u`,
/// returned as the columns of a `d x (d-1)` matrix.
///
/// Built from a Householder reflection mapping `e_k -> u` (with `k` the index
/// of the largest-magnitude coordinate), so the basis depends continuously on
/// `u` away from coordinate switches and is fully deterministic.
pub fn tangent_basis(u: &DVector<f64>) -> DMatrix<f64> {
    let d = u.len();
    debug_assert!(d >= 2);
    let k = u.iamax();
    // Householder vector w = u - sign(u_k) e_k; reflection H = I - 2 w w^T / |w|^2
    // maps sign(u_k) e_k to u, and the remaining columns of H span u^perp.
    let sign = if u[k] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = u.clone();
    w[k] -= sign;
    let w2 = w.norm_squared();
    let mut basis = DMatrix::zeros(d, d - 1);
    let mut col = 0;
    for j in 0..d {
        if j == k {
            continue;
        }
        // column j of H (times sign, irrelevant for a basis)
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        let coef = if w2 > 0.0 { 2.0 * w[j] / w2 } else { 0.0 };
        let v = e - &w * coef;
        basis.set_column(col, &v);
        col += 1;
    }
    basis
}

/// Retracts a tangent step onto the sphere: `normalize(u + Q s)` where `Q`
/// is the tangent basis at `u`.
pub fn retract_sphere(u: &DVector<f64>, basis: &DMatrix<f64>, step: &DVector<f64>) -> DVector<f64> {
    let v = u + basis * step;
    let n = v.norm();
    v / n
}

/// Deterministic multistart net on the unit sphere `S^{d-1}`.
///
/// The first half of the points is a structured low-discrepancy set
/// (uniform golden-offset angles for d = 2, a Fibonacci spiral for d = 3,
/// orthant-stratified Gaussian directions for d >= 4); the second half is
/// plain seeded Gaussian directions. The whole net is a pure function of
/// `(dim, count, seed)`.
pub fn sphere_net(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    assert!(dim >= 2, "sphere net requires dim >= 2");
    let mut pts = Vec::with_capacity(count);
    let n_struct = count / 2 + count % 2;
    match dim {
        2 => {
            // golden-ratio offset avoids aligning with coordinate axes
            let golden = 0.618_033_988_749_894_9_f64;
            for i in 0..n_struct {
                let theta = std::f64::consts::TAU * ((i as f64 * golden + 0.217) % 1.0);
                pts.push(DVector::from_vec(vec![theta.cos(), theta.sin()]));
            }
        }
        3 => {
            // Fibonacci spiral
            let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            for i in 0..n_struct {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n_struct as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden_angle * i as f64;
                pts.push(DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z]));
            }
        }
        _ => {
            let mut rng = derive_rng(seed, 0x5f3a_9e1d);
            let orthants = 1u64 << dim.min(16);
            for i in 0..n_struct {
                let pattern = (i as u64) % orthants;
                let mut v = DVector::zeros(dim);
                for j in 0..dim {
                    let mag: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal).abs();
                    let sgn = if (pattern >> (j % 16)) & 1 == 1 { -1.0 } else { 1.0 };
                    v[j] = sgn * mag.max(1e-12);
                }
                pts.push(v.normalize());
            }
        }
    }
    let mut rng = derive_rng(seed, 0x7c55_1121);
    while pts.len() < count {
        let mut v = DVector::zeros(dim);
        for j in 0..dim {
            v[j] = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let n = v.norm();
        if n > 1e-9 {
            pts.push(v / n);
        }
    }
    pts
}

/// Lexicographic comparison of coordinate vectors, total order for floats
/// that appear here (finite values only).
pub fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn canonical_flips_leading_negative() {
        let u = UnitDirection::from_slice(&[-1.0, 0.0]).unwrap();
        let c = u.canonical();
        assert_relative_eq!(c.as_vector()[0], 1.0);
        assert!(c.is_canonical());
    }

    #[test]
    fn canonical_skips_tiny_leading_coordinate() {
        let u = UnitDirection::new(DVector::from_vec(vec![1e-17, -1.0, 0.0])).unwrap();
        let c = u.canonical();
        assert!(c.as_vector()[1] > 0.0);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(UnitDirection::from_slice(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn tangent_basis_is_orthonormal_complement() {
        for v in sphere_net(4, 17, 3) {
            let q = tangent_basis(&v);
            let gram = q.transpose() * &q;
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(gram[(i, j)], want, epsilon = 1e-12);
                }
            }
            let proj = q.transpose() * &v;
            assert!(proj.norm() < 1e-12);
        }
    }

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        let a = DVector::from_vec(vec![0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let x = DVector::from_vec(vec![2.0, 1.0]);
        assert_relative_eq!(dist_point_segment(&a, &b, &x), 2.0_f64.sqrt());
        let y = DVector::from_vec(vec![0.5, 0.25]);
        assert_relative_eq!(dist_point_segment(&a, &b, &y), 0.25);
    }

    #[test]
    fn sphere_net_is_deterministic_and_unit() {
        for d in [2usize, 3, 6] {
            let a = sphere_net(d, 33, 42);
            let b = sphere_net(d, 33, 42);
            assert_eq!(a.len(), 33);
            for (u, v) in a.iter().zip(b.iter()) {
                assert_eq!(u, v);
                assert!((u.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(coords in proptest::collection::vec(-1.0f64..1.0, 2..6)) {
            prop_assume!(coords.iter().any(|c| c.abs() > 1e-3));
            let u = UnitDirection::from_slice(&coords).unwrap();
            let c1 = u.canonical();
            let c2 = c1.canonical();
            prop_assert_eq!(c1, c2);
        }

        #[test]
        fn projective_distance_ignores_sign(coords in proptest::collection::vec(-1.0f64..1.0, 2..6)) {
            prop_assume!(coords.iter().any(|c| c.abs() > 1e-3));
            let u = UnitDirection::from_slice(&coords).unwrap();
            let d = geodesic_dist_projective(u.as_vector(), u.negated().as_vector());
            prop_assert!(d < 1e-7);
        }
    }
}
