//! Numerical laboratory for coincidence phenomena in convex geometry.
//!
//! The crate computes affine diameters of smooth strictly convex bodies,
//! searches for points where several diameters (or several hyperplane-section
//! centers) coincide, and tabulates guaranteed multiplicity brackets for
//! comparison against the empirical counts.
//!
//! Bodies are represented by support-function evaluators (value, gradient =
//! boundary contact point, Hessian); every algorithm here works on the
//! sphere of outer normals rather than on boundary meshes.

pub mod body;
pub mod chords;
pub mod coincidence;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kappa;
pub mod optim;
pub mod rng;
pub mod sections;
pub mod svg;

pub use body::{
    make_ellipsoid, make_perturbed_ball, membership_margin, strict_convexity_margin,
    BodyDescriptor, SupportBody, SupportFn,
};
pub use coincidence::{
    max_multiplicity_estimate, refine_certificate, search_concurrent_diameters, CertificateItems,
    CoincidenceCertificate, MaxMultiplicity, SearchParams,
};
pub use error::{Error, Result};
pub use geometry::UnitDirection;
pub use kappa::{bound_table, combined_lower_bound, theorem_bound, BoundWitness, KappaBound};
pub use sections::{
    count_selections_hitting_exterior_point, search_coincident_selections, section_centroid,
    section_steiner_point, selection_map, trace_section, CenterKind, Hyperplane, PlanarSection,
    SectionParams, SelectionBranch, SelectionPoint,
};
pub use chords::{
    chord_of_normal, diameter_in_direction, diameters_through_point, multiplicity_at,
    oracle_sweep_2d, Chord, DiameterParams, Multiplicity, OracleSweep,
};
