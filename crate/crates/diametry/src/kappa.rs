//! Exact integer arithmetic for guaranteed coincidence-multiplicity brackets.
//!
//! For each dimension `d` the module reports a lower bound on the guaranteed
//! multiplicity of continuous maps from d-dimensional real projective space
//! to the d-sphere, together with the witness that produced it, and the
//! companion upper bound `4d`. Two rules feed the lower bound:
//!
//! * the power-of-two rule: whenever `d = 2^l - 2 - m` with `m >= 0`, any
//!   power of two `q` with `q(m+1) < 2^l - 1` is guaranteed;
//! * the non-homeomorphism floor: `2` for every `d >= 2`.
//!
//! Everything here is exact `u128`-backed integer arithmetic; no floats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The witness recording which rule produced a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundWitness {
    /// Power-of-two rule with parameters `d = 2^l - 2 - m`, `q(m+1) < 2^l - 1`.
    Theorem { l: u32, m: u64, q: u64 },
    /// The floor `kappa >= 2` for `d >= 2` (projective space and the sphere
    /// are not homeomorphic there).
    NonHomeomorphismFloor,
}

impl std::fmt::Display for BoundWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundWitness::Theorem { l, m, q } => write!(f, "l={l} m={m} q={q}"),
            BoundWitness::NonHomeomorphismFloor => write!(f, "non-homeomorphism floor"),
        }
    }
}

/// Lower/upper multiplicity bracket for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaBound {
    pub d: u64,
    pub lower: u64,
    pub witness: BoundWitness,
    pub upper: u64,
}

impl KappaBound {
    /// Re-checks the structural invariants, including re-evaluating the
    /// witness inequality from scratch.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidRange { reason };
        if self.upper != 4 * self.d {
            return Err(fail(format!("upper {} != 4d for d={}", self.upper, self.d)));
        }
        if self.lower > self.upper || self.lower == 0 {
            return Err(fail(format!("lower {} outside (0, upper]", self.lower)));
        }
        if self.d >= 2 && self.lower < 2 {
            return Err(fail(format!("lower {} < 2 for d={} >= 2", self.lower, self.d)));
        }
        match self.witness {
            BoundWitness::Theorem { l, m, q } => {
                let two_l = 1u128 << l;
                if two_l < 2 + m as u128 || two_l - 2 - m as u128 != self.d as u128 {
                    return Err(fail(format!("witness (l={l}, m={m}) does not match d={}", self.d)));
                }
                if !q.is_power_of_two() {
                    return Err(fail(format!("witness q={q} is not a power of two")));
                }
                if (q as u128) * (m as u128 + 1) >= two_l - 1 {
                    return Err(fail(format!("witness fails q(m+1) < 2^l - 1 for q={q}, m={m}, l={l}")));
                }
                let floor = if self.d >= 2 { 2 } else { 1 };
                if self.lower != q.max(floor) {
                    return Err(fail(format!("lower {} != max(q={q}, floor={floor})", self.lower)));
                }
            }
            BoundWitness::NonHomeomorphismFloor => {
                if self.d < 2 || self.lower != 2 {
                    return Err(fail(format!("floor witness invalid for d={}, lower={}", self.d, self.lower)));
                }
            }
        }
        Ok(())
    }
}

fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

fn check_dim(d: u64) -> Result<()> {
    if d < 1 {
        Err(Error::InvalidRange {
            reason: format!("dimension must be >= 1, got {d}"),
        })
    } else if d > 1 << 62 {
        Err(Error::InvalidRange {
            reason: format!("dimension {d} exceeds the supported range (2^62)"),
        })
    } else {
        Ok(())
    }
}

/// Largest power of two `q` with `q * (m+1) < bound`, at least 1.
fn largest_power_of_two_below(m_plus_1: u128, bound: u128) -> u128 {
    debug_assert!(m_plus_1 < bound);
    let mut q = 1u128;
    while 2 * q * m_plus_1 < bound {
        q *= 2;
    }
    q
}

/// The power-of-two rule, maximized over admissible `l`, with its witness.
///
/// Returns `(1, (l_min, m, 1))` when no `q >= 2` qualifies.
pub fn theorem_bound_with_witness(d: u64) -> Result<(u64, (u32, u64, u64))> {
    check_dim(d)?;
    let l_min = ceil_log2(d + 2); // smallest l with 2^l - 2 >= d
    let l_cut = 2 * l_min + 2; // explicit safety cutoff, validated against a wide scan
    let mut best_q = 1u128;
    let mut best_witness = (l_min, (1u128 << l_min) - 2 - d as u128, 1u128);
    for l in l_min..=l_cut {
        let two_l = 1u128 << l;
        // q >= 2 needs 2(m+1) < 2^l - 1 with m + 1 = 2^l - 1 - d, which
        // rearranges to 2^l < 2d + 1. Larger l only grows m linearly in 2^l,
        // so once this fails it fails for every larger l; the scan stops here
        // (the explicit cutoff above is a belt-and-braces guard on top).
        if two_l > 2 * d as u128 {
            break;
        }
        let m = two_l - 2 - d as u128;
        let q = largest_power_of_two_below(m + 1, two_l - 1);
        if q > best_q {
            best_q = q;
            best_witness = (l, m, q);
        }
    }
    Ok((
        best_q as u64,
        (best_witness.0, best_witness.1 as u64, best_witness.2 as u64),
    ))
}

/// Largest power of two guaranteed by the power-of-two rule; 1 when the rule
/// yields nothing nontrivial for this `d`.
pub fn theorem_bound(d: u64) -> Result<u64> {
    theorem_bound_with_witness(d).map(|(q, _)| q)
}

/// Combines the power-of-two rule with the `d >= 2` floor and attaches the
/// upper bound `4d`. The theorem witness is kept on ties.
pub fn combined_lower_bound(d: u64) -> Result<KappaBound> {
    let (q, (l, m, qq)) = theorem_bound_with_witness(d)?;
    let floor = if d >= 2 { 2 } else { 1 };
    let (lower, witness) = if q >= floor {
        (q, BoundWitness::Theorem { l, m, q: qq })
    } else {
        (floor, BoundWitness::NonHomeomorphismFloor)
    };
    Ok(KappaBound {
        d,
        lower,
        witness,
        upper: 4 * d,
    })
}

/// One bound per dimension of the inclusive range.
pub fn bound_table(d_min: u64, d_max: u64) -> Result<Vec<KappaBound>> {
    if d_min < 1 || d_min > d_max {
        return Err(Error::InvalidRange {
            reason: format!("need 1 <= d_min <= d_max, got [{d_min}, {d_max}]"),
        });
    }
    (d_min..=d_max).map(combined_lower_bound).collect()
}
