//! Hyperplane sections of a body, their centers, and the continuous
//! selection of a point in every hyperplane.
//!
//! A hyperplane `H = {x : x . n = t}` is identified with `(-n, -t)`; the
//! canonical class representative has the first nonzero coordinate of `n`
//! positive. Sections are traced on the sphere of normals as the level set
//! `{u : p(u) . n = t}`, which reuses the support evaluators and avoids
//! membership calls; for hyperplanes through the interior this level curve
//! maps exactly onto the relative boundary of `K intersect H`.
//!
//! The selection map is total on hyperplanes: section center where `H` meets
//! the interior, closest point of `H` to the body where they are disjoint,
//! and the contact point inside a small tangency band in between.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::body::{membership_margin, SupportBody, SupportFn};
use crate::coincidence::{CertificateItems, CoincidenceCertificate, SearchParams};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_dist_projective, lex_cmp, sphere_net, UnitDirection};
use crate::optim::{levenberg_marquardt, Block, LmOptions, ProductState};
use crate::rng::derive_rng;
use rand::Rng;

/// Affine hyperplane `{x : x . n = t}`, stored canonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: UnitDirection,
    pub offset: f64,
}

impl Hyperplane {
    /// Builds the canonical representative of the class `{(n,t), (-n,-t)}`.
    pub fn new(normal: UnitDirection, offset: f64) -> Self {
        Self { normal, offset }.canonical()
    }

    pub fn from_parts(normal: &[f64], offset: f64) -> Result<Self> {
        Ok(Self::new(UnitDirection::from_slice(normal)?, offset))
    }

    /// Canonicalization is idempotent: flip both signs when the normal's
    /// first nonzero coordinate is negative.
    pub fn canonical(&self) -> Self {
        if self.normal.is_canonical() {
            self.clone()
        } else {
            Self {
                normal: self.normal.negated(),
                offset: -self.offset,
            }
        }
    }

    /// Signed evaluation `x . n - t`.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.normal.as_vector().dot(x) - self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }
}

/// Distance between hyperplane classes: projective angle between normals
/// plus the sign-aligned offset gap.
pub fn hyperplane_class_dist(a: &Hyperplane, b: &Hyperplane) -> f64 {
    let dot = a.normal.as_vector().dot(b.normal.as_vector());
    let angle = geodesic_dist_projective(a.normal.as_vector(), b.normal.as_vector());
    let bt = if dot < 0.0 { -b.offset } else { b.offset };
    angle + (a.offset - bt).abs()
}

/// A traced hyperplane section of a body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanarSection {
    pub hyperplane: Hyperplane,
    /// A point of `H` serving as the in-plane origin (`t n`).
    pub origin: DVector<f64>,
    /// Orthonormal in-plane basis: one vector for d = 2, two for d = 3.
    pub basis: Vec<DVector<f64>>,
    /// Boundary points in ambient coordinates: the two chord endpoints for
    /// d = 2, a positively oriented simple polygon for d = 3.
    pub boundary: Vec<DVector<f64>>,
    /// In-plane coordinates of `boundary` (second coordinate 0 for d = 2).
    pub boundary_plane: Vec<[f64; 2]>,
    /// True for a traced closed curve (d = 3).
    pub closed: bool,
}

/// Tracing/quadrature parameters with the crate defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionParams {
    /// Target vertex count for traced sections (d = 3).
    pub resolution: usize,
    /// Angles of the Steiner-point trapezoid quadrature.
    pub steiner_angles: usize,
    /// Half-width of the tangency band of the selection map.
    pub tangency_band: f64,
    /// Target on the signed closing gap of traced loops.
    pub closure_tol: f64,
    /// Acceptance tolerance for selection-equation solves.
    pub solve_tol: f64,
    /// Cheaper vertex count used inside optimizer loops.
    pub search_resolution: usize,
}

impl Default for SectionParams {
    fn default() -> Self {
        Self {
            resolution: 256,
            steiner_angles: 1 << 14,
            tangency_band: 1e-9,
            closure_tol: 1e-10,
            solve_tol: 1e-7,
            search_resolution: 48,
        }
    }
}

/// Deterministic in-plane frame for a unit normal: d-1 orthonormal vectors
/// spanning `n^perp`, built from the coordinate axis least aligned with `n`.
pub fn plane_frame(n: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = n.len();
    match d {
        2 => vec![DVector::from_vec(vec![-n[1], n[0]])],
        3 => {
            let mut k = 0;
            for i in 1..3 {
                if n[i].abs() < n[k].abs() {
                    k = i;
                }
            }
            let mut e1 = DVector::zeros(3);
            e1[k] = 1.0;
            e1 -= n * n[k];
            e1 /= e1.norm();
            let e2 = cross3(n, &e1);
            vec![e1, e2]
        }
        _ => panic!("plane frames exist for d in {{2, 3}} only"),
    }
}

fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Slacks of the support slab around `H`: both positive iff `H` meets the
/// interior of the body.
fn slab_slacks(body: &SupportBody, n: &DVector<f64>, t: f64) -> (f64, f64) {
    (body.support(n) - t, body.support(&(-n)) + t)
}

fn level_value(body: &SupportBody, n: &DVector<f64>, t: f64, u: &DVector<f64>) -> f64 {
    body.support_gradient(u).dot(n) - t
}

/// Ambient gradient of `u -> p(u) . n`.
fn level_gradient(body: &SupportBody, n: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    body.support_hessian(u) * n
}

/// Newton projection of `u` onto the level curve `{p(u) . n = t}` along the
/// tangential gradient. The curve is regular for hyperplanes through the
/// interior (the tangential gradient vanishes only at `u = +-n`, which is
/// the tangency case), so this converges quadratically.
fn level_corrector(
    body: &SupportBody,
    n: &DVector<f64>,
    t: f64,
    start: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    let mut u = start.clone();
    for _ in 0..16 {
        let g = level_value(body, n, t, &u);
        if g.abs() <= tol {
            return Some(u);
        }
        let gg = level_gradient(body, n, &u);
        let gt = &gg - &u * u.dot(&gg);
        let n2 = gt.norm_squared();
        if n2 < 1e-28 {
            return None;
        }
        u = (&u - gt * (g / n2)).normalize();
    }
    let g = level_value(body, n, t, &u);
    if g.abs() <= tol * 10.0 {
        Some(u)
    } else {
        None
    }
}

/// Root of the level function on the great-circle arc from `n` towards `w`;
/// exists whenever `H` meets the interior (sign change between the poles).
fn curve_root_on_arc(
    body: &SupportBody,
    n: &DVector<f64>,
    t: f64,
    w: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    let gamma = |s: f64| n * s.cos() + w * s.sin();
    let mut lo = 0.0_f64;
    let mut hi = std::f64::consts::PI;
    let mut glo = level_value(body, n, t, &gamma(lo).normalize());
    if glo <= 0.0 {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let gm = level_value(body, n, t, &gamma(mid).normalize());
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    level_corrector(body, n, t, &gamma(0.5 * (lo + hi)).normalize(), tol)
}

/// One predictor-corrector loop pass with exactly `steps` steps of arc `h`.
/// Returns the vertices and the signed closing gap along the start tangent.
fn trace_fixed(
    body: &SupportBody,
    n: &DVector<f64>,
    t: f64,
    u0: &DVector<f64>,
    tau0: &DVector<f64>,
    h: f64,
    steps: usize,
    tol: f64,
) -> Option<(Vec<DVector<f64>>, f64)> {
    let mut verts = Vec::with_capacity(steps);
    verts.push(u0.clone());
    let mut u = u0.clone();
    for _ in 1..=steps {
        let gg = level_gradient(body, n, &u);
        let tau = cross3(&u, &gg);
        let tn = tau.norm();
        if tn < 1e-20 {
            return None;
        }
        let predictor = (&u + (&tau / tn) * h).normalize();
        u = level_corrector(body, n, t, &predictor, tol)?;
        verts.push(u.clone());
    }
    let end = verts.pop().expect("steps >= 1");
    let gap = (&end - u0).dot(tau0);
    Some((verts, gap))
}

/// Traces `{u : p(u) . n = t}` with a target vertex count, then equalizes
/// the step so the loop closes to `closure_tol`: uniform spacing keeps the
/// polygon quadratures (centroid, Steiner) free of a closing-gap glitch.
fn trace_loop_3d(
    body: &SupportBody,
    n: &DVector<f64>,
    t: f64,
    resolution: usize,
    closure_tol: f64,
) -> Result<Vec<DVector<f64>>> {
    let frame = plane_frame(n);
    let scale = 1.0 + t.abs() + body.support(n).abs();
    let tol = 1e-14 * scale;
    let fail = |reason: &str| Error::TraceFailure {
        reason: reason.to_string(),
    };

    let u0 = curve_root_on_arc(body, n, t, &frame[0], tol).ok_or_else(|| fail("no curve root"))?;
    let opp = curve_root_on_arc(body, n, t, &(-&frame[0]), tol)
        .ok_or_else(|| fail("no opposite root"))?;
    let size = (&u0 - &opp).norm().max(1e-9);

    let gg0 = level_gradient(body, n, &u0);
    let tau0 = {
        let c = cross3(&u0, &gg0);
        let nm = c.norm();
        if nm < 1e-20 {
            return Err(fail("degenerate tangent at start"));
        }
        c / nm
    };

    // phase 1: coarse walk to estimate the circumference (the corrector
    // converges quadratically, so the estimation step can be generous)
    let mut h0 = (size / 8.0).clamp(1e-7, 0.25);
    let mut arc = 0.0;
    let mut u = u0.clone();
    let mut steps = 0usize;
    loop {
        let gg = level_gradient(body, n, &u);
        let tau = cross3(&u, &gg);
        let tn = tau.norm();
        if tn < 1e-20 {
            return Err(fail("degenerate tangent"));
        }
        let mut stepped = None;
        let mut hh = h0;
        for _ in 0..24 {
            let predictor = (&u + (&tau / tn) * hh).normalize();
            if let Some(next) = level_corrector(body, n, t, &predictor, tol) {
                stepped = Some(next);
                break;
            }
            hh *= 0.5;
        }
        let next = stepped.ok_or_else(|| fail("corrector diverged"))?;
        h0 = h0.min(hh * 2.0);
        let step_dir = &next - &u;
        arc += step_dir.norm();
        u = next;
        steps += 1;
        // forward heading required: proximity on the return leg of a thin
        // section must not count as closure
        if steps >= 3 && (&u - &u0).norm() <= 1.5 * h0 && step_dir.dot(&tau0) > 0.0 {
            arc += (&u - &u0).norm();
            break;
        }
        if steps > 100_000 {
            return Err(fail("no closure after 1e5 steps"));
        }
    }

    // phase 2: exactly `resolution` steps; drive the signed closing gap to
    // zero by Newton/secant on the step length (dgap/dh ~ resolution)
    let n_target = resolution.max(16);
    let mut h = arc / n_target as f64;
    let mut best: Option<(Vec<DVector<f64>>, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..10 {
        match trace_fixed(body, n, t, &u0, &tau0, h, n_target, tol) {
            Some((verts, gap)) => {
                if best.as_ref().is_none_or(|(_, g)| gap.abs() < g.abs()) {
                    best = Some((verts, gap));
                }
                if gap.abs() < closure_tol {
                    break;
                }
                let dh = match prev {
                    Some((hp, gp)) if (gap - gp).abs() > 1e-300 => {
                        -gap * (h - hp) / (gap - gp)
                    }
                    _ => -gap / n_target as f64,
                };
                prev = Some((h, gap));
                h += dh;
            }
            None => {
                h *= 0.75;
            }
        }
    }
    let (verts, _) = best.ok_or_else(|| fail("fixed-step pass never succeeded"))?;
    Ok(verts)
}

/// Traces the section `K intersect H`.
///
/// d = 2: the two chord endpoints, by bisection + Newton on the normal
/// circle. d = 3: predictor-corrector continuation of the level curve with
/// `resolution` target vertices (0 selects the default). Errors:
/// `NoIntersection` when `H` misses the body, `TangencyDegenerate` when the
/// slab margin is at or below 1e-9.
pub fn trace_section(
    body: &SupportBody,
    hyperplane: &Hyperplane,
    resolution: usize,
) -> Result<PlanarSection> {
    trace_section_with(
        body,
        hyperplane,
        resolution,
        SectionParams::default().closure_tol,
    )
}

/// [`trace_section`] with an explicit closing-gap target; optimizer loops
/// run with a loose target, certification with the tight default.
pub fn trace_section_with(
    body: &SupportBody,
    hyperplane: &Hyperplane,
    resolution: usize,
    closure_tol: f64,
) -> Result<PlanarSection> {
    let d = body.dim();
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension {
            expected: "d in {2, 3}".into(),
            got: d,
        });
    }
    let hp = hyperplane.canonical();
    let n = hp.normal.as_vector().clone();
    let t = hp.offset;
    let (sp, sn) = slab_slacks(body, &n, t);
    let slack = sp.min(sn);
    if slack < 0.0 {
        return Err(Error::NoIntersection { slack });
    }
    if slack <= 1e-9 {
        return Err(Error::TangencyDegenerate { slack });
    }

    let origin = &n * t;
    let basis = plane_frame(&n);
    if d == 2 {
        let scale = 1.0 + t.abs() + body.support(&n).abs();
        let tol = 1e-14 * scale;
        let w = &basis[0];
        let mut endpoints: Vec<DVector<f64>> = Vec::with_capacity(2);
        for side in [w.clone(), -w] {
            let u = curve_root_on_arc(body, &n, t, &side, tol).ok_or(Error::TraceFailure {
                reason: "no boundary root on arc".into(),
            })?;
            endpoints.push(body.support_gradient(&u));
        }
        // order by in-plane coordinate
        let mut pts: Vec<(f64, DVector<f64>)> = endpoints
            .into_iter()
            .map(|x| ((&x - &origin).dot(&basis[0]), x))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let boundary_plane: Vec<[f64; 2]> = pts.iter().map(|(s, _)| [*s, 0.0]).collect();
        let boundary: Vec<DVector<f64>> = pts.into_iter().map(|(_, x)| x).collect();
        return Ok(PlanarSection {
            hyperplane: hp,
            origin,
            basis,
            boundary,
            boundary_plane,
            closed: false,
        });
    }

    let res = if resolution == 0 {
        SectionParams::default().resolution
    } else {
        resolution
    };
    let verts_u = trace_loop_3d(body, &n, t, res, closure_tol)?;
    let mut boundary: Vec<DVector<f64>> = verts_u
        .iter()
        .map(|u| body.support_gradient(u))
        .collect();
    let mut boundary_plane: Vec<[f64; 2]> = boundary
        .iter()
        .map(|x| {
            let rel = x - &origin;
            [rel.dot(&basis[0]), rel.dot(&basis[1])]
        })
        .collect();
    if polygon_area(&boundary_plane) < 0.0 {
        boundary.reverse();
        boundary_plane.reverse();
    }
    Ok(PlanarSection {
        hyperplane: hp,
        origin,
        basis,
        boundary,
        boundary_plane,
        closed: true,
    })
}

/// Shoelace signed area of an in-plane polygon.
pub fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

fn polygon_centroid(pts: &[[f64; 2]]) -> Result<[f64; 2]> {
    let a = polygon_area(pts);
    if a.abs() < 1e-12 {
        return Err(Error::DegenerateSection { area: a.abs() });
    }
    let n = pts.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        let w = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * w;
        cy += (y0 + y1) * w;
    }
    Ok([cx / (6.0 * a), cy / (6.0 * a)])
}

/// Mass center of the section: chord midpoint for d = 2, polygon area
/// centroid (Green's theorem in the frame) for d = 3.
pub fn section_centroid(section: &PlanarSection) -> Result<DVector<f64>> {
    if !section.closed {
        let a = &section.boundary[0];
        let b = &section.boundary[1];
        return Ok((a + b) * 0.5);
    }
    let [cx, cy] = polygon_centroid(&section.boundary_plane)?;
    Ok(&section.origin + &section.basis[0] * cx + &section.basis[1] * cy)
}

/// In-plane Steiner point `(1/pi) integral over S^1 of h_L(w) w dw`,
/// evaluated by the trapezoid rule over `angles` directions with
/// `h_L(w) = max_v w . v` over the boundary vertices; for d = 2 the Steiner
/// point of a segment is its midpoint.
pub fn section_steiner_point_with(section: &PlanarSection, angles: usize) -> Result<DVector<f64>> {
    if !section.closed {
        return section_centroid(section);
    }
    let area = polygon_area(&section.boundary_plane);
    if area.abs() < 1e-12 {
        return Err(Error::DegenerateSection { area: area.abs() });
    }
    let m = angles.max(16);
    let (mut sx, mut sy) = (0.0, 0.0);
    for j in 0..m {
        let th = std::f64::consts::TAU * j as f64 / m as f64;
        let (c, s) = (th.cos(), th.sin());
        let mut hl = f64::NEG_INFINITY;
        for v in &section.boundary_plane {
            let dot = c * v[0] + s * v[1];
            if dot > hl {
                hl = dot;
            }
        }
        sx += hl * c;
        sy += hl * s;
    }
    let w = std::f64::consts::TAU / m as f64 / std::f64::consts::PI;
    let (px, py) = (sx * w, sy * w);
    Ok(&section.origin + &section.basis[0] * px + &section.basis[1] * py)
}

/// [`section_steiner_point_with`] at the default quadrature resolution.
pub fn section_steiner_point(section: &PlanarSection) -> Result<DVector<f64>> {
    section_steiner_point_with(section, SectionParams::default().steiner_angles)
}

/// Which motion-equivariant center a selection uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterKind {
    Centroid,
    Steiner,
}

impl std::str::FromStr for CenterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(CenterKind::Centroid),
            "steiner" => Ok(CenterKind::Steiner),
            other => Err(Error::InvalidRange {
                reason: format!("unknown center kind '{other}'"),
            }),
        }
    }
}

/// Branch of the selection map a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBranch {
    SectionCenter,
    NearestPoint,
    Tangency,
}

/// A selection value: a point lying on its hyperplane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionPoint {
    pub value: DVector<f64>,
    pub branch: SelectionBranch,
}

fn section_center(
    body: &SupportBody,
    hp: &Hyperplane,
    center: CenterKind,
    resolution: usize,
    params: &SectionParams,
) -> Result<DVector<f64>> {
    // inside optimizer loops (coarse resolution) a loose closing gap is
    // enough; certification re-evaluates at the tight default
    let closure_tol = if resolution >= params.resolution {
        params.closure_tol
    } else {
        1e-7
    };
    let section = trace_section_with(body, hp, resolution, closure_tol)?;
    match center {
        CenterKind::Centroid => section_centroid(&section),
        CenterKind::Steiner => {
            let angles = if resolution >= params.resolution {
                params.steiner_angles
            } else {
                params.steiner_angles.min(2048)
            };
            section_steiner_point_with(&section, angles)
        }
    }
}

fn selection_value_impl(
    body: &SupportBody,
    hp: &Hyperplane,
    center: CenterKind,
    resolution: usize,
    params: &SectionParams,
) -> Result<SelectionPoint> {
    let n = hp.normal.as_vector();
    let t = hp.offset;
    let (sp, sn) = slab_slacks(body, n, t);
    let band = params.tangency_band;
    if sp.abs() <= band {
        return Ok(SelectionPoint {
            value: body.support_gradient(n),
            branch: SelectionBranch::Tangency,
        });
    }
    if sn.abs() <= band {
        return Ok(SelectionPoint {
            value: body.support_gradient(&(-n)),
            branch: SelectionBranch::Tangency,
        });
    }
    if sp < 0.0 {
        // H lies beyond the support plane of n: closest body point is p(n),
        // and its orthogonal projection onto H is the closest point of H
        let p = body.support_gradient(n);
        return Ok(SelectionPoint {
            value: &p + n * (t - body.support(n)),
            branch: SelectionBranch::NearestPoint,
        });
    }
    if sn < 0.0 {
        let mn = -n;
        let p = body.support_gradient(&mn);
        return Ok(SelectionPoint {
            value: &p + &mn * (-t - body.support(&mn)),
            branch: SelectionBranch::NearestPoint,
        });
    }
    Ok(SelectionPoint {
        value: section_center(body, hp, center, resolution, params)?,
        branch: SelectionBranch::SectionCenter,
    })
}

/// The continuous selection: section center on hyperplanes through the
/// interior, closest point of `H` to the body on disjoint hyperplanes, and
/// the contact point inside the tangency band. Continuous across branches:
/// as the slab slack shrinks, both the section center and the nearest point
/// converge to the contact point.
pub fn selection_map(
    body: &SupportBody,
    hyperplane: &Hyperplane,
    center: CenterKind,
    params: &SectionParams,
) -> Result<SelectionPoint> {
    let d = body.dim();
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension {
            expected: "d in {2, 3}".into(),
            got: d,
        });
    }
    selection_value_impl(body, &hyperplane.canonical(), center, params.resolution, params)
}

/// Infallible selection value for optimizer loops: on an (exceptional)
/// tracing failure the tangency value stands in, which keeps residuals
/// finite without biasing converged solutions.
fn selection_value_robust(
    body: &SupportBody,
    hp: &Hyperplane,
    center: CenterKind,
    resolution: usize,
    params: &SectionParams,
) -> DVector<f64> {
    match selection_value_impl(body, hp, center, resolution, params) {
        Ok(sp) => sp.value,
        Err(_) => body.support_gradient(hp.normal.as_vector()),
    }
}

fn state_hyperplane(state: &ProductState, i: usize) -> Hyperplane {
    let n = state.values[1 + 2 * i].clone();
    let t = state.values[2 + 2 * i][0];
    Hyperplane {
        normal: UnitDirection::new(n).expect("sphere block stays unit"),
        offset: t,
    }
}

fn selection_rms(
    body: &SupportBody,
    x: &DVector<f64>,
    planes: &[Hyperplane],
    center: CenterKind,
    resolution: usize,
    params: &SectionParams,
) -> f64 {
    let mut acc = 0.0;
    for hp in planes {
        let v = selection_value_robust(body, hp, center, resolution, params);
        acc += (v - x).norm_squared();
    }
    (acc / planes.len() as f64).sqrt()
}

fn selection_certificate(
    body: &SupportBody,
    x: DVector<f64>,
    mut planes: Vec<Hyperplane>,
    center: CenterKind,
    search: &SearchParams,
    params: &SectionParams,
) -> CoincidenceCertificate {
    planes = planes.into_iter().map(|h| h.canonical()).collect();
    planes.sort_by(|a, b| {
        lex_cmp(a.normal.as_vector(), b.normal.as_vector()).then_with(|| {
            a.offset
                .partial_cmp(&b.offset)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let k = planes.len();
    let residual = selection_rms(body, &x, &planes, center, params.resolution, params);
    let mut min_separation = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            min_separation = min_separation.min(hyperplane_class_dist(&planes[i], &planes[j]));
        }
    }
    if k < 2 {
        min_separation = 0.0;
    }
    let interior_margin = membership_margin(body, &x, search.membership_restarts);
    let accepted = residual < search.tol_polish
        && min_separation > search.delta_sep
        && interior_margin > 0.0;
    CoincidenceCertificate {
        x,
        items: CertificateItems::Hyperplanes(planes),
        residual,
        min_separation,
        interior_margin,
        k,
        accepted,
    }
}

/// Joint residual for the coincident-selection search: per hyperplane the
/// gap `selection(H_i) - x`, a slab barrier keeping `H_i` through the
/// interior (margin 1e-6; coincidences of two or more selections cannot
/// occur on the other branches), and pairwise class repulsion.
fn selection_search_residual(
    body: &SupportBody,
    state: &ProductState,
    k: usize,
    center: CenterKind,
    resolution: usize,
    sqrt_lambda: f64,
    delta_sep: f64,
    params: &SectionParams,
) -> DVector<f64> {
    let d = body.dim();
    let x = &state.values[0];
    let n_pairs = k * (k - 1) / 2;
    let mut r = DVector::zeros(k * (d + 2) + n_pairs);
    let margin_min = 1e-6;
    let barrier_w = 1e3;
    let planes: Vec<Hyperplane> = (0..k).map(|i| state_hyperplane(state, i)).collect();
    for (i, hp) in planes.iter().enumerate() {
        let v = selection_value_robust(body, hp, center, resolution, params);
        for c in 0..d {
            r[i * d + c] = v[c] - x[c];
        }
        let (sp, sn) = slab_slacks(body, hp.normal.as_vector(), hp.offset);
        r[k * d + 2 * i] = barrier_w * (margin_min - sp).max(0.0);
        r[k * d + 2 * i + 1] = barrier_w * (margin_min - sn).max(0.0);
    }
    if sqrt_lambda > 0.0 {
        let mut idx = k * (d + 2);
        for i in 0..k {
            for j in (i + 1)..k {
                let g = hyperplane_class_dist(&planes[i], &planes[j]);
                r[idx] = sqrt_lambda * (delta_sep - g).max(0.0);
                idx += 1;
            }
        }
    }
    r
}

fn selection_blocks(d: usize, k: usize) -> Vec<Block> {
    let mut blocks = vec![Block::Euclidean(d)];
    for _ in 0..k {
        blocks.push(Block::Sphere(d));
        blocks.push(Block::Euclidean(1));
    }
    blocks
}

/// Searches for `k` distinct hyperplane sections whose chosen centers
/// coincide. Returns the best certificate found (accepted or not).
pub fn search_coincident_selections(
    body: &SupportBody,
    k: usize,
    center: CenterKind,
    search: &SearchParams,
    params: &SectionParams,
) -> Result<CoincidenceCertificate> {
    if k < 2 {
        return Err(Error::InvalidK { k });
    }
    let d = body.dim();
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension {
            expected: "d in {2, 3}".into(),
            got: d,
        });
    }

    let n_starts = search.starts_for(d);
    let pool = sphere_net(d, (n_starts * k).max(64), search.seed);
    let mut rng = derive_rng(search.seed, 0x5e1e_c715);
    let lambda = if search.repulsion_weight != 0.0 {
        search.repulsion_weight
    } else {
        let mut acc = 0.0;
        for u in sphere_net(d, 64, search.seed) {
            acc += body.support(&u) + body.support(&(-u));
        }
        let w = acc / 64.0;
        1e-2 * w * w
    };
    let sqrt_lambda = lambda.sqrt();

    // anchor point: approximate center of the body (chord-midpoint average);
    // starts are k planes through a jittered copy of it, so every start
    // already lies in the "common point" homotopy class and the solve only
    // has to move locally (random offsets collapse onto one plane instead)
    let mut anchor = DVector::zeros(d);
    {
        let probe = sphere_net(d, 16, search.seed ^ 0x17);
        for u in &probe {
            anchor += (body.support_gradient(u) + body.support_gradient(&(-u))) * 0.5;
        }
        anchor /= probe.len() as f64;
    }
    let width_scale = {
        let u = &pool[0];
        body.support(u) + body.support(&(-u))
    };

    let mut candidates: Vec<(ProductState, f64, f64)> = Vec::new();
    for s in 0..n_starts {
        let mut x_start = anchor.clone();
        if s > 0 {
            for c in 0..d {
                x_start[c] += width_scale * 0.08 * rng.random_range(-1.0..1.0);
            }
        }
        let mut values: Vec<DVector<f64>> = vec![DVector::zeros(d)];
        let mut planes: Vec<Hyperplane> = Vec::with_capacity(k);
        for j in 0..k {
            let n = pool[(s * k + j) % pool.len()].clone();
            let t = x_start.dot(&n);
            planes.push(Hyperplane {
                normal: UnitDirection::new(n.clone()).expect("net points are unit"),
                offset: t,
            });
            values.push(n);
            values.push(DVector::from_vec(vec![t]));
        }
        let mut x0 = DVector::zeros(d);
        for hp in &planes {
            x0 += selection_value_robust(body, hp, center, params.search_resolution, params);
        }
        x0 /= k as f64;
        values[0] = x0;

        let state = ProductState::new(selection_blocks(d, k), values);
        let res = levenberg_marquardt(
            |st: &ProductState| {
                selection_search_residual(
                    body,
                    st,
                    k,
                    center,
                    params.search_resolution,
                    sqrt_lambda,
                    search.delta_sep,
                    params,
                )
            },
            state,
            &LmOptions {
                max_iters: search.max_iters_search,
                tol_residual: (search.tol_accept * 1e-2).max(1e-12),
                ..Default::default()
            },
        );
        let planes: Vec<Hyperplane> = (0..k).map(|i| state_hyperplane(&res.state, i)).collect();
        let rms = selection_rms(
            body,
            &res.state.values[0],
            &planes,
            center,
            params.search_resolution,
            params,
        );
        let mut min_sep = f64::INFINITY;
        for i in 0..k {
            for j in (i + 1)..k {
                min_sep = min_sep.min(hyperplane_class_dist(&planes[i], &planes[j]));
            }
        }
        candidates.push((res.state, rms, min_sep));
    }

    // separation-valid candidates outrank collapsed ones: a duplicated
    // hyperplane solves the residual trivially but certifies nothing
    candidates.sort_by(|a, b| {
        let a_ok = a.2 > search.delta_sep;
        let b_ok = b.2 > search.delta_sep;
        b_ok.cmp(&a_ok)
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then_with(|| lex_cmp(&a.0.values[0], &b.0.values[0]))
    });
    candidates.truncate(search.keep_top.max(1));

    // polish at certification resolution, repulsion annealed away
    let mut best: Option<CoincidenceCertificate> = None;
    for (state, _, _) in candidates {
        let res = levenberg_marquardt(
            |st: &ProductState| {
                selection_search_residual(
                    body,
                    st,
                    k,
                    center,
                    params.resolution,
                    0.0,
                    search.delta_sep,
                    params,
                )
            },
            state,
            &LmOptions {
                max_iters: search.max_iters_polish,
                tol_residual: 1e-13,
                ..Default::default()
            },
        );
        let planes: Vec<Hyperplane> = (0..k).map(|i| state_hyperplane(&res.state, i)).collect();
        let cert = selection_certificate(
            body,
            res.state.values[0].clone(),
            planes,
            center,
            search,
            params,
        );
        let take = match &best {
            None => true,
            Some(b) => match (cert.accepted, b.accepted) {
                (true, false) => true,
                (false, true) => false,
                _ => {
                    cert.residual < b.residual
                        || (cert.residual == b.residual
                            && lex_cmp(&cert.x, &b.x) == std::cmp::Ordering::Less)
                }
            },
        };
        if take {
            best = Some(cert);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Polish pass for hyperplane certificates (no repulsion, 1e-12 target).
pub fn refine_selection_certificate(
    body: &SupportBody,
    cert: &CoincidenceCertificate,
    search: &SearchParams,
) -> Result<CoincidenceCertificate> {
    let planes = match &cert.items {
        CertificateItems::Hyperplanes(h) => h.clone(),
        CertificateItems::Chords(_) => {
            return Err(Error::InvalidRange {
                reason: "certificate carries chords, not hyperplanes".into(),
            })
        }
    };
    let params = SectionParams::default();
    let d = body.dim();
    let k = cert.k;
    let mut values: Vec<DVector<f64>> = vec![cert.x.clone()];
    for hp in &planes {
        values.push(hp.normal.as_vector().clone());
        values.push(DVector::from_vec(vec![hp.offset]));
    }
    // seed the center kind from nothing: certificates do not record it, so
    // polish with the centroid (both kinds agree for d = 2 segments)
    let center = CenterKind::Centroid;
    let res = levenberg_marquardt(
        |st: &ProductState| {
            selection_search_residual(
                body,
                st,
                k,
                center,
                params.resolution,
                0.0,
                search.delta_sep,
                &params,
            )
        },
        ProductState::new(selection_blocks(d, k), values),
        &LmOptions {
            max_iters: search.max_iters_polish,
            tol_residual: 1e-12,
            ..Default::default()
        },
    );
    let new_planes: Vec<Hyperplane> = (0..k).map(|i| state_hyperplane(&res.state, i)).collect();
    let refined = selection_certificate(
        body,
        res.state.values[0].clone(),
        new_planes,
        center,
        search,
        &params,
    );
    if refined.residual <= cert.residual {
        Ok(refined)
    } else {
        let mut kept = cert.clone();
        kept.accepted = kept.residual < search.tol_polish
            && kept.min_separation > search.delta_sep
            && kept.interior_margin > 0.0;
        Ok(kept)
    }
}

/// Solves `selection(H) = x` over hyperplane space by multistart least
/// squares and returns the solution clusters (no membership precondition).
pub fn solve_selections_to_point(
    body: &SupportBody,
    x: &DVector<f64>,
    center: CenterKind,
    search: &SearchParams,
    params: &SectionParams,
) -> Result<Vec<Hyperplane>> {
    let d = body.dim();
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension {
            expected: "d in {2, 3}".into(),
            got: d,
        });
    }
    let n_starts = if search.n_starts != 0 { search.n_starts } else { 16 };
    let mut normals = sphere_net(d, n_starts, search.seed);
    let xn = x.norm();
    if xn > 1e-9 {
        normals.insert(0, x / xn); // natural first guess for exterior probes
    }

    let scale = 1.0 + xn;
    let mut sols: Vec<(Hyperplane, f64)> = Vec::new();
    for n in normals {
        // a solution hyperplane must contain x, so t = x . n is the start
        let t0 = x.dot(&n);
        let state = ProductState::new(
            vec![Block::Sphere(d), Block::Euclidean(1)],
            vec![n, DVector::from_vec(vec![t0])],
        );
        let res = levenberg_marquardt(
            |st: &ProductState| {
                let hp = Hyperplane {
                    normal: UnitDirection::new(st.values[0].clone()).expect("unit"),
                    offset: st.values[1][0],
                };
                selection_value_robust(body, &hp, center, params.search_resolution, params) - x
            },
            state,
            &LmOptions {
                max_iters: search.max_iters_search,
                tol_residual: params.solve_tol * 1e-2 * scale,
                ..Default::default()
            },
        );
        if res.residual_norm < params.solve_tol * scale {
            let hp = Hyperplane {
                normal: UnitDirection::new(res.state.values[0].clone()).expect("unit"),
                offset: res.state.values[1][0],
            }
            .canonical();
            sols.push((hp, res.residual_norm));
        }
    }
    sols.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then_with(|| lex_cmp(a.0.normal.as_vector(), b.0.normal.as_vector()))
    });
    let mut reps: Vec<Hyperplane> = Vec::new();
    for (hp, _) in sols {
        if reps
            .iter()
            .all(|r| hyperplane_class_dist(r, &hp) > 1e-3)
        {
            reps.push(hp);
        }
    }
    Ok(reps)
}

/// Number of hyperplanes whose selection value hits a strictly exterior
/// point; the case analysis of the selection map predicts exactly one (the
/// hyperplane orthogonal to the projection direction from `x` to the body).
pub fn count_selections_hitting_exterior_point(
    body: &SupportBody,
    x: &DVector<f64>,
    center: CenterKind,
    search: &SearchParams,
    params: &SectionParams,
) -> Result<usize> {
    let margin = membership_margin(body, x, search.membership_restarts);
    if margin >= 0.0 {
        return Err(Error::NotExteriorPoint { margin });
    }
    Ok(solve_selections_to_point(body, x, center, search, params)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_ellipsoid;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn vecn(coords: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(coords)
    }

    fn ball(d: usize) -> SupportBody {
        SupportBody::unit_ball(d)
    }

    #[test]
    fn hyperplane_canonicalization() {
        let h = Hyperplane::from_parts(&[-1.0, 0.0], 0.5).unwrap();
        assert!(h.normal.as_vector()[0] > 0.0);
        assert_relative_eq!(h.offset, -0.5);
        let h2 = h.canonical();
        assert_eq!(h, h2);
    }

    #[test]
    fn disc_chord_endpoints() {
        let h = Hyperplane::from_parts(&[0.0, 1.0], 0.5).unwrap();
        let s = trace_section(&ball(2), &h, 0).unwrap();
        assert_eq!(s.boundary.len(), 2);
        let r = 0.75_f64.sqrt();
        let mut xs: Vec<f64> = s.boundary.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(xs[0], -r, epsilon = 1e-10);
        assert_relative_eq!(xs[1], r, epsilon = 1e-10);
        for p in &s.boundary {
            assert_relative_eq!(p[1], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn ball_section_is_a_circle() {
        let h = Hyperplane::from_parts(&[0.0, 0.0, 1.0], 0.0).unwrap();
        let s = trace_section(&ball(3), &h, 128).unwrap();
        assert!(s.closed);
        assert_eq!(s.boundary_plane.len(), 128);
        for p in &s.boundary_plane {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-8, "radial deviation {}", (r - 1.0).abs());
        }
        for x in &s.boundary {
            assert!(x[2].abs() < 1e-12);
        }
        assert!(polygon_area(&s.boundary_plane) > 0.0);
    }

    #[test]
    fn ellipsoid_central_section_is_unit_circle() {
        let b = DMatrix::from_diagonal(&vecn(&[4.0, 1.0, 1.0]));
        let body = make_ellipsoid(&b, &vecn(&[0.0, 0.0, 0.0])).unwrap();
        let h = Hyperplane::from_parts(&[1.0, 0.0, 0.0], 0.0).unwrap();
        let s = trace_section(&body, &h, 96).unwrap();
        for p in &s.boundary_plane {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn missing_and_tangent_hyperplanes_error() {
        let h = Hyperplane::from_parts(&[0.0, 1.0], 2.0).unwrap();
        assert!(matches!(
            trace_section(&ball(2), &h, 0),
            Err(Error::NoIntersection { .. })
        ));
        let h = Hyperplane::from_parts(&[0.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            trace_section(&ball(2), &h, 0),
            Err(Error::TangencyDegenerate { .. })
        ));
    }

    #[test]
    fn ball_section_centroid_is_axis_point() {
        let h = Hyperplane::from_parts(&[0.0, 0.0, 1.0], 0.4).unwrap();
        let s = trace_section(&ball(3), &h, 256).unwrap();
        let c = section_centroid(&s).unwrap();
        assert!((c[0]).abs() < 1e-9, "cx = {}", c[0]);
        assert!((c[1]).abs() < 1e-9, "cy = {}", c[1]);
        assert_relative_eq!(c[2], 0.4, epsilon = 1e-10);
    }

    #[test]
    fn chord_centroid_is_midpoint() {
        let h = Hyperplane::from_parts(&[0.0, 1.0], 0.5).unwrap();
        let s = trace_section(&ball(2), &h, 0).unwrap();
        let c = section_centroid(&s).unwrap();
        assert!(c[0].abs() < 1e-12);
        assert_relative_eq!(c[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn steiner_equals_centroid_on_disc_section() {
        let h = Hyperplane::from_parts(&[0.0, 0.0, 1.0], 0.3).unwrap();
        let s = trace_section(&ball(3), &h, 256).unwrap();
        let c = section_centroid(&s).unwrap();
        let st = section_steiner_point(&s).unwrap();
        assert!((c - st).norm() < 1e-8);
    }

    #[test]
    fn steiner_matches_dense_quadrature_on_stub_polygon() {
        // triangle-ish stub: exact in-plane polygon, no tracing involved
        let tri = vec![[1.0, 0.0], [-0.4, 0.9], [-0.6, -0.8]];
        let section = PlanarSection {
            hyperplane: Hyperplane::from_parts(&[0.0, 0.0, 1.0], 0.0).unwrap(),
            origin: vecn(&[0.0, 0.0, 0.0]),
            basis: vec![vecn(&[1.0, 0.0, 0.0]), vecn(&[0.0, 1.0, 0.0])],
            boundary: tri
                .iter()
                .map(|p| vecn(&[p[0], p[1], 0.0]))
                .collect(),
            boundary_plane: tri,
            closed: true,
        };
        let coarse = section_steiner_point_with(&section, 1 << 14).unwrap();
        let dense = section_steiner_point_with(&section, 1_000_000).unwrap();
        assert!((coarse - dense).norm() < 1e-6);
    }

    #[test]
    fn selection_branches_on_the_ball() {
        let params = SectionParams::default();
        // disjoint hyperplane: nearest point of H to the ball
        let h = Hyperplane::from_parts(&[1.0, 0.0, 0.0], 2.0).unwrap();
        let sp = selection_map(&ball(3), &h, CenterKind::Centroid, &params).unwrap();
        assert_eq!(sp.branch, SelectionBranch::NearestPoint);
        assert!((sp.value - vecn(&[2.0, 0.0, 0.0])).norm() < 1e-12);

        // interior hyperplane: section centroid
        let h = Hyperplane::from_parts(&[0.0, 0.0, 1.0], 0.4).unwrap();
        let sp = selection_map(&ball(3), &h, CenterKind::Centroid, &params).unwrap();
        assert_eq!(sp.branch, SelectionBranch::SectionCenter);
        assert!((sp.value - vecn(&[0.0, 0.0, 0.4])).norm() < 1e-9);

        // tangency band
        let h = Hyperplane::from_parts(&[1.0, 0.0, 0.0], 1.0).unwrap();
        let sp = selection_map(&ball(3), &h, CenterKind::Centroid, &params).unwrap();
        assert_eq!(sp.branch, SelectionBranch::Tangency);
        assert!((sp.value - vecn(&[1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn selection_is_continuous_across_tangency() {
        let params = SectionParams::default();
        let p = vecn(&[1.0, 0.0, 0.0]);
        for dt in [1e-4, -1e-4] {
            let h = Hyperplane::from_parts(&[1.0, 0.0, 0.0], 1.0 + dt).unwrap();
            let sp = selection_map(&ball(3), &h, CenterKind::Centroid, &params).unwrap();
            let gap = (&sp.value - &p).norm();
            assert!(gap < 1e-3, "branch {:?} strayed by {gap}: {:?}", sp.branch, sp.value);
        }
    }

    #[test]
    fn selection_value_lies_on_hyperplane() {
        let params = SectionParams::default();
        let body = make_ellipsoid(
            &DMatrix::from_diagonal(&vecn(&[4.0, 1.0, 1.0])),
            &vecn(&[0.0, 0.0, 0.0]),
        )
        .unwrap();
        for (nrm, t) in [([0.3, -0.5, 0.8], 0.2), ([1.0, 1.0, 1.0], 0.7), ([0.0, 1.0, 0.0], 1.4)] {
            let h = Hyperplane::from_parts(&nrm, t).unwrap();
            let sp = selection_map(&body, &h, CenterKind::Centroid, &params).unwrap();
            assert!(h.eval(&sp.value).abs() < 1e-9, "off-plane by {}", h.eval(&sp.value));
        }
    }

    #[test]
    fn exterior_probe_finds_exactly_one_hyperplane() {
        let params = SectionParams::default();
        let search = SearchParams {
            n_starts: 12,
            seed: 4,
            ..Default::default()
        };
        let count = count_selections_hitting_exterior_point(
            &ball(3),
            &vecn(&[2.0, 0.0, 0.0]),
            CenterKind::Centroid,
            &search,
            &params,
        )
        .unwrap();
        assert_eq!(count, 1);

        let count2 = count_selections_hitting_exterior_point(
            &ball(2),
            &vecn(&[0.0, 3.0]),
            CenterKind::Centroid,
            &search,
            &params,
        )
        .unwrap();
        assert_eq!(count2, 1);
    }

    #[test]
    fn interior_probe_is_rejected() {
        let params = SectionParams::default();
        let search = SearchParams::default();
        assert!(matches!(
            count_selections_hitting_exterior_point(
                &ball(2),
                &vecn(&[0.1, 0.0]),
                CenterKind::Centroid,
                &search,
                &params,
            ),
            Err(Error::NotExteriorPoint { .. })
        ));
    }

    #[test]
    fn ball_selection_coincidence_k4() {
        let params = SectionParams {
            resolution: 64,
            search_resolution: 32,
            ..Default::default()
        };
        let search = SearchParams {
            n_starts: 6,
            seed: 9,
            tol_polish: 1e-7,
            max_iters_search: 30,
            max_iters_polish: 40,
            keep_top: 2,
            ..Default::default()
        };
        let cert =
            search_coincident_selections(&ball(3), 4, CenterKind::Centroid, &search, &params)
                .unwrap();
        assert!(cert.accepted, "residual {} sep {}", cert.residual, cert.min_separation);
        assert!(cert.x.norm() < 1e-5, "x = {:?}", cert.x);
    }
}
