//! Joint search for a point and k distinct affine diameters through it.
//!
//! The search minimizes
//! `F(x, u_1..u_k) = sum_i dist(x, [p(u_i), p(-u_i)])^2 + lambda * repulsion`
//! by multistart least squares with numeric Jacobians and a spherical
//! retraction after each step. The repulsion term
//! `max(0, delta_sep - geo_dist(u_i, u_j))^2` keeps the normals from
//! collapsing onto one diameter and is annealed away in the polish phase, so
//! it never biases the reported residual.
//!
//! The theorems behind this module guarantee existence of coincidences, not
//! that local search finds them: failures are reported (an unaccepted
//! certificate is still returned), never asserted away.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::body::{membership_margin, SupportBody, SupportFn};
use crate::chords::{chord_of_normal, Chord};
use crate::error::{Error, Result};
use crate::geometry::{
    closest_point_on_segment, geodesic_dist_projective, lex_cmp, sphere_net, UnitDirection,
};
use crate::optim::{levenberg_marquardt, Block, LmOptions, ProductState};
use crate::rng::derive_rng;
use crate::sections::Hyperplane;
use rand::seq::SliceRandom;

/// The k geometric objects of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "snake_case")]
pub enum CertificateItems {
    Chords(Vec<Chord>),
    Hyperplanes(Vec<Hyperplane>),
}

impl CertificateItems {
    pub fn len(&self) -> usize {
        match self {
            CertificateItems::Chords(v) => v.len(),
            CertificateItems::Hyperplanes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A numerically verified coincidence: a point `x` plus k items all passing
/// through (or mapping to) `x` within tolerance, pairwise separated, with
/// `x` interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCertificate {
    pub x: DVector<f64>,
    pub items: CertificateItems,
    /// Root-mean-square of the per-item distances at `x` (repulsion excluded).
    pub residual: f64,
    /// Smallest pairwise geodesic separation between item classes.
    pub min_separation: f64,
    /// Membership margin of `x` (positive = interior).
    pub interior_margin: f64,
    pub k: usize,
    pub accepted: bool,
}

/// Tolerances and budgets for coincidence searches.
///
/// `n_starts = 0` selects the per-dimension default (200 starts for d <= 3,
/// 1000 for d <= 8). `repulsion_weight = 0.0` selects the default
/// `1e-2 * (mean body width)^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchParams {
    /// Acceptance tolerance on the rms residual during the search phase.
    pub tol_accept: f64,
    /// Acceptance tolerance applied to polished certificates.
    pub tol_polish: f64,
    /// Minimum pairwise geodesic separation for distinct items.
    pub delta_sep: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub max_iters_search: usize,
    pub max_iters_polish: usize,
    pub repulsion_weight: f64,
    pub membership_restarts: usize,
    /// How many search candidates go through the polish phase.
    pub keep_top: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            tol_accept: 1e-6,
            tol_polish: 1e-10,
            delta_sep: 1e-2,
            n_starts: 0,
            seed: 0,
            max_iters_search: 60,
            max_iters_polish: 90,
            repulsion_weight: 0.0,
            membership_restarts: 16,
            keep_top: 6,
        }
    }
}

impl SearchParams {
    pub fn starts_for(&self, dim: usize) -> usize {
        if self.n_starts != 0 {
            self.n_starts
        } else if dim <= 3 {
            200
        } else {
            1000
        }
    }
}

/// Mean width over a deterministic normal sample; sets the repulsion scale.
fn mean_width(body: &SupportBody, seed: u64) -> f64 {
    let net = sphere_net(body.dim(), 64, seed);
    let mut acc = 0.0;
    for u in &net {
        acc += body.support(u) + body.support(&(-u));
    }
    acc / net.len() as f64
}

struct ChordStart {
    x: DVector<f64>,
    normals: Vec<DVector<f64>>,
}

fn chord_midpoint(body: &SupportBody, u: &DVector<f64>) -> DVector<f64> {
    (body.support_gradient(u) + body.support_gradient(&(-u))) * 0.5
}

/// Default multistart pool: k normals drawn from a seeded shuffled net,
/// x at the centroid of their chord midpoints (midpoints concentrate near
/// high-multiplicity regions).
fn default_starts(body: &SupportBody, k: usize, params: &SearchParams) -> Vec<ChordStart> {
    let d = body.dim();
    let n_starts = params.starts_for(d);
    let pool = sphere_net(d, (n_starts * k).max(64), params.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut rng = derive_rng(params.seed, 0xc0a1_e5ce);
    order.shuffle(&mut rng);

    let mut starts = Vec::with_capacity(n_starts);
    for s in 0..n_starts {
        let normals: Vec<DVector<f64>> = (0..k)
            .map(|j| pool[order[(s * k + j) % order.len()]].clone())
            .collect();
        let mut x = DVector::zeros(d);
        for u in &normals {
            x += chord_midpoint(body, u);
        }
        x /= k as f64;
        starts.push(ChordStart { x, normals });
    }
    starts
}

struct Candidate {
    state: ProductState,
    rms: f64,
    min_sep: f64,
}

/// One least-squares pass over `(x, u_1..u_k)`.
fn run_pass(
    body: &SupportBody,
    start: ProductState,
    k: usize,
    lambda: f64,
    delta_sep: f64,
    max_iters: usize,
    tol: f64,
) -> Candidate {
    let d = body.dim();
    let n_pairs = k * (k - 1) / 2;
    let sqrt_lambda = lambda.max(0.0).sqrt();
    let residual = move |s: &ProductState| {
        let x = &s.values[0];
        let mut r = DVector::zeros(k * d + n_pairs);
        for i in 0..k {
            let u = &s.values[1 + i];
            let a = body.support_gradient(u);
            let b = body.support_gradient(&(-u));
            let gap = x - closest_point_on_segment(&a, &b, x);
            for c in 0..d {
                r[i * d + c] = gap[c];
            }
        }
        if sqrt_lambda > 0.0 {
            let mut idx = k * d;
            for i in 0..k {
                for j in (i + 1)..k {
                    let g = geodesic_dist_projective(&s.values[1 + i], &s.values[1 + j]);
                    r[idx] = sqrt_lambda * (delta_sep - g).max(0.0);
                    idx += 1;
                }
            }
        }
        r
    };
    let res = levenberg_marquardt(
        residual,
        start,
        &LmOptions {
            max_iters,
            tol_residual: tol,
            ..Default::default()
        },
    );
    let rms = rms_chord_residual(body, &res.state, k);
    let mut min_sep = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            min_sep = min_sep.min(geodesic_dist_projective(
                &res.state.values[1 + i],
                &res.state.values[1 + j],
            ));
        }
    }
    Candidate {
        state: res.state,
        rms,
        min_sep,
    }
}

/// Rms of per-chord distances (repulsion excluded), the reported residual.
fn rms_chord_residual(body: &SupportBody, state: &ProductState, k: usize) -> f64 {
    let x = &state.values[0];
    let mut acc = 0.0;
    for i in 0..k {
        let u = &state.values[1 + i];
        let a = body.support_gradient(u);
        let b = body.support_gradient(&(-u));
        let gap = x - closest_point_on_segment(&a, &b, x);
        acc += gap.norm_squared();
    }
    (acc / k as f64).sqrt()
}

fn certificate_from_state(
    body: &SupportBody,
    state: &ProductState,
    k: usize,
    params: &SearchParams,
) -> CoincidenceCertificate {
    let x = state.values[0].clone();
    let mut chords: Vec<Chord> = (1..=k)
        .map(|i| {
            let u = UnitDirection::new(state.values[i].clone()).expect("solver output is unit");
            chord_of_normal(body, &u)
        })
        .collect();
    chords.sort_by(|a, b| lex_cmp(a.direction.as_vector(), b.direction.as_vector()));

    let mut acc = 0.0;
    for c in &chords {
        acc += c.distance_to(&x).powi(2);
    }
    let residual = (acc / k as f64).sqrt();

    let mut min_separation = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let g = geodesic_dist_projective(
                chords[i].direction.as_vector(),
                chords[j].direction.as_vector(),
            );
            min_separation = min_separation.min(g);
        }
    }
    if k < 2 {
        min_separation = 0.0;
    }
    let interior_margin = membership_margin(body, &x, params.membership_restarts);
    let accepted =
        residual < params.tol_polish && min_separation > params.delta_sep && interior_margin > 0.0;
    CoincidenceCertificate {
        x,
        items: CertificateItems::Chords(chords),
        residual,
        min_separation,
        interior_margin,
        k,
        accepted,
    }
}

/// Deterministic total order for reducing candidates to one certificate:
/// accepted first, then residual, then lexicographic x. Concurrent execution
/// of starts can never change the winner under this order.
fn better(a: &CoincidenceCertificate, b: &CoincidenceCertificate) -> bool {
    match (a.accepted, b.accepted) {
        (true, false) => return true,
        (false, true) => return false,
        _ => {}
    }
    match a.residual.partial_cmp(&b.residual) {
        Some(std::cmp::Ordering::Less) => true,
        Some(std::cmp::Ordering::Greater) => false,
        _ => lex_cmp(&a.x, &b.x) == std::cmp::Ordering::Less,
    }
}

fn search_with_starts(
    body: &SupportBody,
    k: usize,
    params: &SearchParams,
    starts: Vec<ChordStart>,
) -> CoincidenceCertificate {
    let d = body.dim();
    let lambda = if params.repulsion_weight != 0.0 {
        params.repulsion_weight
    } else {
        let w = mean_width(body, params.seed);
        1e-2 * w * w
    };

    // search phase, with repulsion
    let mut candidates: Vec<Candidate> = Vec::with_capacity(starts.len());
    for st in starts {
        let blocks: Vec<Block> = std::iter::once(Block::Euclidean(d))
            .chain(std::iter::repeat_n(Block::Sphere(d), k))
            .collect();
        let values: Vec<DVector<f64>> =
            std::iter::once(st.x).chain(st.normals.into_iter()).collect();
        let cand = run_pass(
            body,
            ProductState::new(blocks, values),
            k,
            lambda,
            params.delta_sep,
            params.max_iters_search,
            (params.tol_accept * 1e-2).max(1e-12),
        );
        candidates.push(cand);
    }
    // separation-valid candidates outrank collapsed ones: a duplicated
    // normal solves the residual trivially but certifies nothing
    candidates.sort_by(|a, b| {
        let a_ok = a.min_sep > params.delta_sep;
        let b_ok = b.min_sep > params.delta_sep;
        b_ok.cmp(&a_ok)
            .then(a.rms.partial_cmp(&b.rms).unwrap())
            .then_with(|| lex_cmp(&a.state.values[0], &b.state.values[0]))
    });
    candidates.truncate(params.keep_top.max(1));

    // polish phase: repulsion annealed to zero, tighter tolerance
    let mut best: Option<CoincidenceCertificate> = None;
    for cand in candidates {
        let polished = run_pass(
            body,
            cand.state,
            k,
            0.0,
            params.delta_sep,
            params.max_iters_polish,
            1e-13,
        );
        let cert = certificate_from_state(body, &polished.state, k, params);
        match &best {
            Some(b) if !better(&cert, b) => {}
            _ => best = Some(cert),
        }
    }
    best.expect("at least one start")
}

/// Searches for a point and `k` distinct affine diameters through it.
///
/// Always returns the best certificate found; `accepted` records whether it
/// clears the tolerance, separation, and interior-margin gates.
pub fn search_concurrent_diameters(
    body: &SupportBody,
    k: usize,
    params: &SearchParams,
) -> Result<CoincidenceCertificate> {
    if k < 2 {
        return Err(Error::InvalidK { k });
    }
    let starts = default_starts(body, k, params);
    Ok(search_with_starts(body, k, params, starts))
}

/// Result of the upward multiplicity scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxMultiplicity {
    /// Largest k with an accepted certificate (1 when none was accepted).
    pub k: usize,
    pub certificate: Option<CoincidenceCertificate>,
    /// Per-k outcomes of the scan: (k, accepted, residual).
    pub outcomes: Vec<(usize, bool, f64)>,
}

/// Scans k upward from 2, warm-starting k+1 from the accepted k-certificate
/// plus one fresh normal per warm start.
pub fn max_multiplicity_estimate(
    body: &SupportBody,
    k_max: usize,
    params: &SearchParams,
) -> Result<MaxMultiplicity> {
    if k_max < 2 {
        return Err(Error::InvalidK { k: k_max });
    }
    let d = body.dim();
    let mut out = MaxMultiplicity {
        k: 1,
        certificate: None,
        outcomes: Vec::new(),
    };
    let mut current: Option<CoincidenceCertificate> = None;
    for k in 2..=k_max {
        let cert = match &current {
            None => search_concurrent_diameters(body, k, params)?,
            Some(prev) => {
                // warm starts: previous normals + one fresh normal each, plus
                // a thin slice of cold starts as a safety net
                let prev_normals: Vec<DVector<f64>> = match &prev.items {
                    CertificateItems::Chords(chords) => chords
                        .iter()
                        .map(|c| c.normal.as_vector().clone())
                        .collect(),
                    CertificateItems::Hyperplanes(_) => unreachable!("chord search"),
                };
                let fresh = sphere_net(d, 48, params.seed ^ (k as u64) << 8);
                let mut starts: Vec<ChordStart> = fresh
                    .into_iter()
                    .filter(|f| {
                        prev_normals
                            .iter()
                            .all(|u| geodesic_dist_projective(u, f) > params.delta_sep)
                    })
                    .map(|f| {
                        let mut normals = prev_normals.clone();
                        normals.push(f);
                        ChordStart {
                            x: prev.x.clone(),
                            normals,
                        }
                    })
                    .collect();
                let mut cold_params = params.clone();
                cold_params.n_starts = (params.starts_for(d) / 8).max(8);
                starts.extend(default_starts(body, k, &cold_params));
                search_with_starts(body, k, params, starts)
            }
        };
        out.outcomes.push((k, cert.accepted, cert.residual));
        if cert.accepted {
            out.k = k;
            current = Some(cert.clone());
            out.certificate = Some(cert);
        } else {
            break;
        }
    }
    Ok(out)
}

/// Polish pass at tighter tolerance (1e-12 target) without repulsion.
/// The residual never increases (the underlying loop only accepts
/// cost-decreasing steps); the accepted flag is re-evaluated.
pub fn refine_certificate(
    body: &SupportBody,
    cert: &CoincidenceCertificate,
    params: &SearchParams,
) -> Result<CoincidenceCertificate> {
    if cert.k < 2 {
        return Err(Error::InvalidK { k: cert.k });
    }
    match &cert.items {
        CertificateItems::Chords(chords) => {
            let d = body.dim();
            let blocks: Vec<Block> = std::iter::once(Block::Euclidean(d))
                .chain(std::iter::repeat_n(Block::Sphere(d), cert.k))
                .collect();
            let values: Vec<DVector<f64>> = std::iter::once(cert.x.clone())
                .chain(chords.iter().map(|c| c.normal.as_vector().clone()))
                .collect();
            let polished = run_pass(
                body,
                ProductState::new(blocks, values),
                cert.k,
                0.0,
                params.delta_sep,
                params.max_iters_polish,
                1e-12,
            );
            let mut refined = certificate_from_state(body, &polished.state, cert.k, params);
            if refined.residual > cert.residual {
                // keep the better of the two; re-evaluate acceptance only
                refined = cert.clone();
                refined.accepted = refined.residual < params.tol_polish
                    && refined.min_separation > params.delta_sep
                    && refined.interior_margin > 0.0;
            }
            Ok(refined)
        }
        CertificateItems::Hyperplanes(_) => {
            crate::sections::refine_selection_certificate(body, cert, params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_ellipsoid, make_perturbed_ball};
    use nalgebra::DMatrix;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn fast_params(seed: u64) -> SearchParams {
        SearchParams {
            n_starts: 40,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_k_below_two() {
        let ball = SupportBody::unit_ball(2);
        assert!(matches!(
            search_concurrent_diameters(&ball, 1, &SearchParams::default()),
            Err(Error::InvalidK { k: 1 })
        ));
    }

    #[test]
    fn ellipse_center_accepts_k5() {
        let b = DMatrix::from_diagonal(&vec2(4.0, 1.0));
        let body = make_ellipsoid(&b, &vec2(0.0, 0.0)).unwrap();
        let cert = search_concurrent_diameters(&body, 5, &fast_params(3)).unwrap();
        assert!(cert.accepted, "residual {} sep {}", cert.residual, cert.min_separation);
        assert!(cert.residual < 1e-10);
        assert!(cert.x.norm() < 1e-7, "x = {:?}", cert.x);
    }

    #[test]
    fn perturbed_2d_k2_accepted() {
        let body = make_perturbed_ball(2, 3, 0.05, 7).unwrap();
        let cert = search_concurrent_diameters(&body, 2, &fast_params(1)).unwrap();
        assert!(cert.accepted, "residual {}", cert.residual);
        assert!(cert.interior_margin > 0.0);
        assert!(cert.min_separation > 1e-2);
    }

    #[test]
    fn ball_scan_reaches_k_max() {
        let ball = SupportBody::unit_ball(2);
        let est = max_multiplicity_estimate(&ball, 8, &fast_params(5)).unwrap();
        assert_eq!(est.k, 8);
        assert!(est.certificate.unwrap().accepted);
    }

    #[test]
    fn refine_is_monotone() {
        let body = make_perturbed_ball(2, 3, 0.05, 9).unwrap();
        let params = fast_params(2);
        let cert = search_concurrent_diameters(&body, 2, &params).unwrap();
        let refined = refine_certificate(&body, &cert, &params).unwrap();
        assert!(refined.residual <= cert.residual + 1e-15);
    }

    #[test]
    fn certificates_are_bitwise_deterministic() {
        let body = make_perturbed_ball(2, 3, 0.05, 13).unwrap();
        let params = fast_params(11);
        let a = search_concurrent_diameters(&body, 2, &params).unwrap();
        let b = search_concurrent_diameters(&body, 2, &params).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
