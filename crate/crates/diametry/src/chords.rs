//! Affine diameters via the antipodal-normal chord family.
//!
//! For a smooth strictly convex body the chord `[p(u), p(-u)]` is the unique
//! longest chord in its own direction (parallel supporting hyperplanes at
//! both endpoints), so the family over projective normal classes contains
//! exactly the affine diameters. Everything here is parametrized by the
//! normal `u`, never by ray-shooting from a point: residuals stay smooth and
//! no membership root-finds appear in inner loops.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::body::{membership_margin, SupportBody, SupportFn};
use crate::error::{Error, Result};
use crate::geometry::{
    closest_point_on_segment, dist_point_segment, geodesic_dist_projective, lex_cmp, sphere_net,
    UnitDirection,
};
use crate::optim::{levenberg_marquardt, Block, LmOptions, ProductState};

/// An affine diameter candidate: the chord with antipodal outer normals
/// `u` and `-u` at its endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chord {
    /// Canonical projective representative of the normal class.
    pub normal: UnitDirection,
    /// Contact point with outer normal `normal`.
    pub a: DVector<f64>,
    /// Contact point with outer normal `-normal`.
    pub b: DVector<f64>,
    /// Canonical projective representative of the chord direction.
    pub direction: UnitDirection,
    pub length: f64,
    /// The geometrically meaningful object is the open segment (endpoints
    /// are boundary points); kept as an explicit marker.
    pub open_interior: bool,
}

impl Chord {
    /// Distance from `x` to the closed segment `[a, b]`.
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        dist_point_segment(&self.a, &self.b, x)
    }
}

/// Tolerances and budgets for the diameter solvers. All fields have the
/// stated defaults; `n_starts = 0` means the per-dimension default `64 d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiameterParams {
    /// Convergence tolerance on the normalized direction residual.
    pub direction_tol: f64,
    /// Acceptance tolerance on the point-to-segment distance at a zero.
    pub zero_tol: f64,
    pub n_starts: usize,
    /// Geodesic clustering radius in projective space.
    pub cluster_delta: f64,
    pub max_results: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub membership_restarts: usize,
}

impl Default for DiameterParams {
    fn default() -> Self {
        Self {
            direction_tol: 1e-10,
            zero_tol: 1e-8,
            n_starts: 0,
            cluster_delta: 1e-4,
            max_results: 64,
            seed: 0,
            max_iters: 90,
            membership_restarts: 24,
        }
    }
}

impl DiameterParams {
    fn starts_for(&self, dim: usize) -> usize {
        if self.n_starts == 0 {
            64 * dim
        } else {
            self.n_starts
        }
    }
}

/// The chord `[p(u), p(-u)]`: the affine diameter in its own direction.
pub fn chord_of_normal(body: &SupportBody, u: &UnitDirection) -> Chord {
    let uc = u.canonical();
    let a = body.support_gradient(uc.as_vector());
    let b = body.support_gradient(uc.negated().as_vector());
    let diff = &a - &b;
    let length = diff.norm();
    let direction = UnitDirection::new(diff).expect("chord of a valid body has positive length");
    Chord {
        normal: uc,
        a,
        b,
        direction: direction.canonical(),
        length,
        open_interior: true,
    }
}

/// Greedy clustering of pre-sorted candidates; the first member of each
/// cluster is its representative.
fn greedy_clusters<T>(items: &[T], mut dist: impl FnMut(&T, &T) -> f64, delta: f64) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    'outer: for (i, it) in items.iter().enumerate() {
        for &r in &reps {
            if dist(it, &items[r]) <= delta {
                continue 'outer;
            }
        }
        reps.push(i);
    }
    reps
}

/// The affine diameter whose direction matches the projective class of `v`.
///
/// Solved by multistart damped least squares over the sphere of normals on
/// the normalized residual `(I - vv^T)(p(u) - p(-u)) / |p(u) - p(-u)|`.
/// Uniqueness holds for smooth strictly convex bodies; all multistart hits
/// are clustered and a second non-equivalent solution raises
/// `AmbiguityWarning` (a near-non-strictly-convex body).
pub fn diameter_in_direction(
    body: &SupportBody,
    v: &UnitDirection,
    params: &DiameterParams,
) -> Result<Chord> {
    let d = body.dim();
    let vc = v.canonical();
    let vv = vc.as_vector().clone();
    let residual = move |s: &ProductState| {
        let u = &s.values[0];
        let w = body.support_gradient(u) - body.support_gradient(&(-u));
        let tangential = &w - &vv * vv.dot(&w);
        tangential / w.norm()
    };
    let opts = LmOptions {
        max_iters: params.max_iters,
        tol_residual: (params.direction_tol * 1e-2).max(1e-14),
        ..Default::default()
    };

    let mut starts = vec![vc.as_vector().clone()];
    starts.extend(sphere_net(d, params.starts_for(d), params.seed));

    let mut hits: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut best_residual = f64::INFINITY;
    for s in starts {
        let res = levenberg_marquardt(
            &residual,
            ProductState::new(vec![Block::Sphere(d)], vec![s]),
            &opts,
        );
        best_residual = best_residual.min(res.residual_norm);
        if res.residual_norm < params.direction_tol {
            hits.push((res.state.values[0].clone(), res.residual_norm));
        }
    }
    if hits.is_empty() {
        return Err(Error::ConvergenceFailure { best_residual });
    }
    hits.sort_by(|x, y| {
        x.1.partial_cmp(&y.1)
            .unwrap()
            .then_with(|| lex_cmp(&x.0, &y.0))
    });
    let reps = greedy_clusters(
        &hits,
        |p, q| geodesic_dist_projective(&p.0, &q.0),
        params.cluster_delta.max(1e-6),
    );
    if reps.len() > 1 {
        return Err(Error::AmbiguityWarning { clusters: reps.len() });
    }
    let u = UnitDirection::new(hits[reps[0]].0.clone())?;
    Ok(chord_of_normal(body, &u))
}

fn require_interior(body: &SupportBody, x: &DVector<f64>, restarts: usize) -> Result<f64> {
    let margin = membership_margin(body, x, restarts);
    if margin <= 0.0 {
        Err(Error::NonInteriorPoint { margin })
    } else {
        Ok(margin)
    }
}

/// Zeros of `u -> dist(x, [p(u), p(-u)])` over projective normal classes,
/// one representative chord per solution cluster, sorted by direction.
/// The returned list is capped at `params.max_results`.
pub fn diameters_through_point(
    body: &SupportBody,
    x: &DVector<f64>,
    params: &DiameterParams,
) -> Result<Vec<Chord>> {
    let (chords, _) = diameters_through_point_capped(body, x, params)?;
    Ok(chords)
}

/// Like [`diameters_through_point`], also reporting whether the result was
/// truncated at `params.max_results` (centrally symmetric bodies yield a
/// continuum at the center, which saturates any budget).
pub fn diameters_through_point_capped(
    body: &SupportBody,
    x: &DVector<f64>,
    params: &DiameterParams,
) -> Result<(Vec<Chord>, bool)> {
    let d = body.dim();
    require_interior(body, x, params.membership_restarts)?;

    let residual = |s: &ProductState| {
        let u = &s.values[0];
        let a = body.support_gradient(u);
        let b = body.support_gradient(&(-u));
        x - closest_point_on_segment(&a, &b, x)
    };
    let opts = LmOptions {
        max_iters: params.max_iters,
        tol_residual: (params.zero_tol * 1e-4).max(1e-13),
        ..Default::default()
    };

    let mut hits: Vec<(DVector<f64>, f64)> = Vec::new();
    for s in sphere_net(d, params.starts_for(d), params.seed) {
        let res = levenberg_marquardt(
            &residual,
            ProductState::new(vec![Block::Sphere(d)], vec![s]),
            &opts,
        );
        if res.residual_norm < params.zero_tol {
            hits.push((res.state.values[0].clone(), res.residual_norm));
        }
    }

    hits.sort_by(|p, q| {
        p.1.partial_cmp(&q.1)
            .unwrap()
            .then_with(|| lex_cmp(&p.0, &q.0))
    });
    let reps = greedy_clusters(
        &hits,
        |p, q| geodesic_dist_projective(&p.0, &q.0),
        params.cluster_delta,
    );

    let mut chords: Vec<Chord> = reps
        .iter()
        .map(|&i| {
            let u = UnitDirection::new(hits[i].0.clone()).expect("solver output is unit");
            chord_of_normal(body, &u)
        })
        .collect();
    chords.sort_by(|c1, c2| lex_cmp(c1.direction.as_vector(), c2.direction.as_vector()));
    let capped = chords.len() > params.max_results;
    chords.truncate(params.max_results);
    Ok((chords, capped))
}

/// Empirical preimage multiplicity at `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Multiplicity {
    pub count: usize,
    pub chords: Vec<Chord>,
    /// True when the cluster count hit `params.max_results`.
    pub capped: bool,
}

/// Number of distinct affine diameters through `x` (capped cluster count;
/// the cap is reported so symmetric saturation is visible, not guessed at).
pub fn multiplicity_at(
    body: &SupportBody,
    x: &DVector<f64>,
    params: &DiameterParams,
) -> Result<Multiplicity> {
    let (chords, capped_over) = diameters_through_point_capped(body, x, params)?;
    let capped = capped_over || chords.len() >= params.max_results;
    Ok(Multiplicity {
        count: chords.len(),
        chords,
        capped,
    })
}

/// Brute-force ground truth for the plane.
#[derive(Debug, Clone)]
pub struct OracleSweep {
    pub roots: Vec<Chord>,
    /// Set when the signed residual vanishes identically on the sample
    /// (e.g. the center of a centrally symmetric body).
    pub identically_zero: bool,
}

fn signed_line_residual_2d(body: &SupportBody, theta: f64, x: &DVector<f64>) -> f64 {
    let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
    let a = body.support_gradient(&u);
    let b = body.support_gradient(&(-&u));
    let dir = &b - &a;
    let n = dir.norm();
    (dir[0] * (x[1] - a[1]) - dir[1] * (x[0] - a[0])) / n
}

/// Dense sweep oracle over the half-circle of normals (d = 2 only):
/// brackets sign changes of the signed point-to-line residual and bisects
/// each to 1e-12. Roots are reported as chords; roots whose chord does not
/// actually contain `x` (possible for exterior probes) are dropped.
pub fn oracle_sweep_2d(body: &SupportBody, x: &DVector<f64>, n: usize) -> Result<OracleSweep> {
    if body.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: "d = 2".into(),
            got: body.dim(),
        });
    }
    if n < 1_000 {
        return Err(Error::InvalidRange {
            reason: format!("oracle sweep needs n >= 1000, got {n}"),
        });
    }
    let pi = std::f64::consts::PI;
    let theta_of = |i: usize| pi * i as f64 / n as f64;
    let values: Vec<f64> = (0..=n)
        .map(|i| signed_line_residual_2d(body, theta_of(i), x))
        .collect();
    // values[n] = -values[0] up to roundoff (projective wrap)

    if values.iter().all(|s| s.abs() < 1e-12) {
        return Ok(OracleSweep {
            roots: Vec::new(),
            identically_zero: true,
        });
    }

    let mut thetas: Vec<f64> = Vec::new();
    for i in 0..n {
        let (s0, s1) = (values[i], values[i + 1]);
        if s0 == 0.0 {
            thetas.push(theta_of(i));
            continue;
        }
        if s0 * s1 < 0.0 {
            let (mut lo, mut hi) = (theta_of(i), theta_of(i + 1));
            let mut slo = s0;
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                let sm = signed_line_residual_2d(body, mid, x);
                if sm == 0.0 {
                    lo = mid;
                    break;
                }
                if slo * sm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    slo = sm;
                }
            }
            thetas.push(0.5 * (lo + hi));
        }
    }

    // dedupe modulo pi
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut roots: Vec<Chord> = Vec::new();
    let mut kept: Vec<f64> = Vec::new();
    for t in thetas {
        let tm = t.rem_euclid(pi);
        if kept
            .iter()
            .any(|&k| (k - tm).abs() < 1e-9 || (pi - (k - tm).abs()) < 1e-9)
        {
            continue;
        }
        kept.push(tm);
        let u = UnitDirection::from_slice(&[tm.cos(), tm.sin()])?;
        let chord = chord_of_normal(body, &u);
        if chord.distance_to(x) <= 1e-8 * (1.0 + x.norm()) {
            roots.push(chord);
        }
    }
    roots.sort_by(|c1, c2| lex_cmp(c1.direction.as_vector(), c2.direction.as_vector()));
    Ok(OracleSweep {
        roots,
        identically_zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_ellipsoid, make_perturbed_ball};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn ellipse41() -> SupportBody {
        let b = DMatrix::from_diagonal(&vec2(4.0, 1.0));
        make_ellipsoid(&b, &vec2(0.0, 0.0)).unwrap()
    }

    #[test]
    fn ball_chord_is_a_diameter() {
        let ball = SupportBody::unit_ball(3);
        let u = UnitDirection::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let c = chord_of_normal(&ball, &u);
        assert_relative_eq!(c.length, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.a[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.b[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_minor_axis_chord() {
        let body = ellipse41();
        let u = UnitDirection::from_slice(&[0.0, 1.0]).unwrap();
        let c = chord_of_normal(&body, &u);
        assert_relative_eq!(c.length, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.a[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.b[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_chords_pass_through_center() {
        let body = make_perturbed_ball(2, 2, 0.05, 11).unwrap();
        assert!(body.centrally_symmetric());
        let center = body.center().clone();
        for theta in [0.1_f64, 0.9, 2.2] {
            let u = UnitDirection::from_slice(&[theta.cos(), theta.sin()]).unwrap();
            let c = chord_of_normal(&body, &u);
            assert!(c.distance_to(&center) < 1e-12);
        }
    }

    #[test]
    fn ball_diameter_in_any_direction() {
        let ball = SupportBody::unit_ball(2);
        let v = UnitDirection::from_slice(&[0.6, 0.8]).unwrap();
        let c = diameter_in_direction(&ball, &v, &DiameterParams::default()).unwrap();
        assert_relative_eq!(c.length, 2.0, epsilon = 1e-9);
        let align = c.direction.as_vector().dot(v.as_vector()).abs();
        assert!(align > 1.0 - 1e-10);
    }

    #[test]
    fn ellipse_major_axis_diameter() {
        let body = ellipse41();
        let v = UnitDirection::from_slice(&[1.0, 0.0]).unwrap();
        let c = diameter_in_direction(&body, &v, &DiameterParams::default()).unwrap();
        assert_relative_eq!(c.length, 4.0, epsilon = 1e-8);
        assert_relative_eq!(c.a[0].abs(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn ellipse_single_diameter_through_off_center_point() {
        let body = ellipse41();
        let x = vec2(0.5, 0.0);
        let chords = diameters_through_point(&body, &x, &DiameterParams::default()).unwrap();
        assert_eq!(chords.len(), 1);
        // the horizontal diameter
        assert!(chords[0].direction.as_vector()[0].abs() > 1.0 - 1e-8);
        assert!(chords[0].distance_to(&x) < 1e-9);
    }

    #[test]
    fn ball_center_saturates_the_cap() {
        let ball = SupportBody::unit_ball(2);
        let m = multiplicity_at(&ball, &vec2(0.0, 0.0), &DiameterParams::default()).unwrap();
        assert!(m.capped);
        assert_eq!(m.count, DiameterParams::default().max_results);
    }

    #[test]
    fn ball_off_center_has_single_diameter() {
        let ball = SupportBody::unit_ball(2);
        let m = multiplicity_at(&ball, &vec2(0.5, 0.0), &DiameterParams::default()).unwrap();
        assert_eq!(m.count, 1);
        assert!(!m.capped);
    }

    #[test]
    fn non_interior_point_rejected() {
        let ball = SupportBody::unit_ball(2);
        assert!(matches!(
            diameters_through_point(&ball, &vec2(2.0, 0.0), &DiameterParams::default()),
            Err(Error::NonInteriorPoint { .. })
        ));
    }

    #[test]
    fn oracle_reports_degenerate_center() {
        let ball = SupportBody::unit_ball(2);
        let sweep = oracle_sweep_2d(&ball, &vec2(0.0, 0.0), 2000).unwrap();
        assert!(sweep.identically_zero);
    }

    #[test]
    fn oracle_matches_multiplicity_on_ellipse() {
        let body = ellipse41();
        let x = vec2(0.5, 0.0);
        let sweep = oracle_sweep_2d(&body, &x, 20_000).unwrap();
        assert_eq!(sweep.roots.len(), 1);
        let m = multiplicity_at(&body, &x, &DiameterParams::default()).unwrap();
        assert_eq!(m.count, sweep.roots.len());
        let g = geodesic_dist_projective(
            m.chords[0].direction.as_vector(),
            sweep.roots[0].direction.as_vector(),
        );
        assert!(g < 1e-6, "direction mismatch {g}");
    }

    #[test]
    fn oracle_rejects_wrong_dimension_and_small_n() {
        let ball3 = SupportBody::unit_ball(3);
        assert!(oracle_sweep_2d(&ball3, &DVector::zeros(3), 2000).is_err());
        let ball2 = SupportBody::unit_ball(2);
        assert!(oracle_sweep_2d(&ball2, &vec2(0.0, 0.0), 10).is_err());
    }
}
