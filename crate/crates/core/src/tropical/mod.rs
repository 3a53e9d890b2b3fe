//! Zero-temperature side: max-plus graph over grid nodes, maximal cycle
//! mean, calibrated subactions, the Mañé potential as a tropical path
//! closure, the Aubry set and densities of invariant idempotent
//! probabilities.
//!
//! Edges always point in the direction the maps move points: node `x` has
//! one edge per letter `j`, to the node nearest `φ_j(x)`, weighted by
//! `w(j, x)`. The closure entry `S[x][y]` is the best total weight of a
//! path that starts at `y` and ends at `x`.

mod closure;
mod cycle;
mod density;
mod matrix;
mod oracle;
mod subaction;
mod value;

use thiserror::Error;

pub use closure::{
    aubry_set, aubry_set_sparse, irreducibility_check, kleene_star, mane_column, AubrySet,
    TropicalClosure,
};
pub use cycle::max_cycle_mean;
pub use density::{
    default_aubry_tolerance, eq7_residual, idempotent_density_general,
    idempotent_density_irreducible, verify_invariance, Density,
    InvarianceReport,
};
pub use matrix::{build_maxplus_matrix, Edge, MaxPlusMatrix, ResolutionReport};
pub use oracle::{
    brute_force_mane, brute_force_mane_column, nonplace_density_full_shift,
    nonplace_density_symbolic, MAX_ENUMERATION,
};
pub use subaction::{
    calibrated_subaction, calibration_residual, exact_cycle_mean, normalized_q, refinement_trend, solve_tropical, SubactionMethod,
    TropicalSettings, TropicalState, ZeroTempPack,
};
pub use value::MaxPlusValue;

use crate::ifs::IfsError;

#[derive(Debug, Error)]
pub enum TropicalError {
    #[error("weights not normalized: edge weight {weight:e} at node {node}, letter {letter} exceeds tolerance {tol:e}")]
    NotNormalized { node: usize, letter: usize, weight: f64, tol: f64 },
    #[error("empty Aubry set at tolerance {tol:e}; the largest diagonal closure entry is {best_diagonal}")]
    EmptyAubry { tol: f64, best_diagonal: f64 },
    #[error("density depends on the Aubry reference point: node {node} differs by {deviation:e} (tolerance {tol:e})")]
    AubryDependence { node: usize, deviation: f64, tol: f64 },
    #[error("prescribed Aubry restriction is identically -inf")]
    BottomRestriction,
    #[error("restriction has {got} entries but the Aubry set has {expected}")]
    RestrictionLength { expected: usize, got: usize },
    #[error("density hull is not normalized: its maximum is {max}")]
    UnnormalizedDensity { max: f64 },
    #[error("node {node} only reaches cycles of mean {mean}, below m(A) = {m_a}; no calibrated subaction exists on this grid")]
    NoCalibratedSubaction { node: usize, mean: f64, m_a: f64 },
    #[error("calibration residual {residual:e} at node {node} exceeds {tol:e} after the full discount schedule")]
    Calibration { residual: f64, node: usize, tol: f64 },
    #[error("policy iteration did not terminate after {0} rounds")]
    PolicyIteration(usize),
    #[error("enumeration of {words} words exceeds the limit of {limit}")]
    TooManyWords { words: String, limit: usize },
    #[error("symbolic density needs a constant-per-map potential")]
    NotConstantPerMap,
    #[error("constant weights must have maximum 0, got {0}")]
    ConstantsNotNormalized(f64),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}
