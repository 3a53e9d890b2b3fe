use serde::Serialize;

use super::matrix::add;
use super::{AubrySet, MaxPlusMatrix, MaxPlusValue, TropicalClosure, TropicalError};
use crate::ifs::{Grid, IfsSystem, Potential};

/// Density `λ ∈ [-∞, 0]` of an idempotent probability over the grid nodes,
/// normalized so that `⊕_x λ(x) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub values: Vec<f64>,
}

impl Density {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, x: usize) -> MaxPlusValue {
        MaxPlusValue::new(self.values[x])
    }

    /// `⊕_x λ(x)`.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `μ(f) = ⊕_x λ(x) ⊙ f(x)`.
    pub fn functional(&self, f: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(f)
            .map(|(&l, &v)| add(l, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Default tolerance separating float noise from discretization error:
/// `1e-8` for potentials constant on each map, otherwise
/// `10·Lip(q)·h/(1-γ)` with `Lip(q) <= 2·Lip(A)/(1-γ)`.
pub fn default_aubry_tolerance(sys: &IfsSystem, potential: &Potential, grid: &Grid) -> f64 {
    if potential.is_constant_per_map() {
        return 1e-8;
    }
    let g = sys.gamma();
    let lip_q = 2.0 * potential.lip_bound() / (1.0 - g);
    (10.0 * lip_q * grid.spacing() / (1.0 - g)).max(1e-8)
}

/// `λ(x) = S[x][z]` for the lowest-index Aubry node `z`, after checking
/// that every other Aubry node gives the same column within `tol`.
pub fn idempotent_density_irreducible(
    s: &TropicalClosure,
    aubry: &AubrySet,
    tol: f64,
) -> Result<Density, TropicalError> {
    let z0 = *aubry.nodes.first().ok_or(TropicalError::EmptyAubry {
        tol: aubry.tol,
        best_diagonal: f64::NEG_INFINITY,
    })?;
    let mut values = s.column(z0);
    for &z in &aubry.nodes[1..] {
        let col = s.column(z);
        for (x, (&a, &b)) in values.iter().zip(&col).enumerate() {
            let deviation = if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
                0.0
            } else {
                (a - b).abs()
            };
            if deviation > tol || deviation.is_nan() {
                return Err(TropicalError::AubryDependence { node: x, deviation, tol });
            }
        }
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter_mut().for_each(|v| *v -= top);
    Ok(Density { values })
}

/// `λ(x) = ⊕_{z ∈ Ω} S[x][z] ⊙ λ̄(z)` for a prescribed restriction `λ̄` on
/// the Aubry set.
pub fn idempotent_density_general(
    s: &TropicalClosure,
    aubry: &AubrySet,
    restriction: &[f64],
    tol: f64,
) -> Result<Density, TropicalError> {
    if restriction.len() != aubry.len() {
        return Err(TropicalError::RestrictionLength { expected: aubry.len(), got: restriction.len() });
    }
    if restriction.iter().all(|&r| r == f64::NEG_INFINITY) {
        return Err(TropicalError::BottomRestriction);
    }
    let n = s.n_nodes();
    let mut values = vec![f64::NEG_INFINITY; n];
    for (&z, &r) in aubry.nodes.iter().zip(restriction) {
        if r == f64::NEG_INFINITY {
            continue;
        }
        let col = s.column(z);
        for (v, c) in values.iter_mut().zip(col) {
            *v = v.max(add(c, r));
        }
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.abs() > tol {
        return Err(TropicalError::UnnormalizedDensity { max });
    }
    Ok(Density { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// `‖L⁰λ - λ‖_∞` over nodes where either side is finite
    pub residual: f64,
    pub worst_node: usize,
    /// largest discrepancy in `⊕ λ ⊙ 𝓛⁰f = ⊕ L⁰λ ⊙ f` over the test battery
    pub dual_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Deterministic test functions for the duality check.
fn dual_battery(n: usize) -> Vec<Vec<f64>> {
    (1..=4u64)
        .map(|seed| {
            (0..n as u64)
                .map(|i| {
                    let h = (i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(seed.wrapping_mul(0xD1B5_4A32_D192_ED03));
                    ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                })
                .collect()
        })
        .collect()
}

pub fn verify_invariance(density: &Density, m: &MaxPlusMatrix, tol: f64) -> InvarianceReport {
    let lambda = &density.values;
    let pushed = m.dual(lambda);
    let mut residual: f64 = 0.0;
    let mut worst_node = 0;
    for (x, (&a, &b)) in pushed.iter().zip(lambda).enumerate() {
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            continue;
        }
        let d = (a - b).abs();
        if d > residual {
            residual = d;
            worst_node = x;
        }
    }
    let mut dual_residual: f64 = 0.0;
    for f in dual_battery(lambda.len()) {
        let forward = m.forward(&f);
        let lhs = lambda.iter().zip(&forward).map(|(&l, &g)| add(l, g)).fold(f64::NEG_INFINITY, f64::max);
        let rhs = pushed.iter().zip(&f).map(|(&l, &g)| add(l, g)).fold(f64::NEG_INFINITY, f64::max);
        if lhs != rhs {
            dual_residual = dual_residual.max((lhs - rhs).abs());
        }
    }
    let pass = residual <= tol && dual_residual <= tol;
    InvarianceReport { residual, worst_node, dual_residual, tol, pass }
}

/// Largest violation of `V(x) = ⊕_{z ∈ Ω} [S_A(z, x) ⊙ V(z)]`, with
/// `S_A(z, x) = S_q(z, x) - V(z) + V(x)`. Needs a full closure.
pub fn eq7_residual(s: &TropicalClosure, aubry: &AubrySet, v: &[f64]) -> Option<f64> {
    let rows: Vec<&[f64]> = aubry.nodes.iter().map(|&z| s.row(z)).collect::<Option<_>>()?;
    let mut worst: f64 = 0.0;
    for (x, &vx) in v.iter().enumerate() {
        let rhs = aubry
            .nodes
            .iter()
            .zip(&rows)
            .map(|(&z, row)| add(row[x] - v[z] + vx, v[z]))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((vx - rhs).abs());
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{Grid, IfsSystem, Potential};
    use crate::tropical::{aubry_set, build_maxplus_matrix, irreducibility_check, kleene_star};

    fn s1_closure(q: Vec<f64>, n: usize) -> (MaxPlusMatrix, TropicalClosure) {
        let grid = Grid::new(n).unwrap();
        let m = build_maxplus_matrix(&IfsSystem::binary(), &grid, &Potential::constant(q).sample(&grid));
        let s = kleene_star(&m, 1e-12).unwrap();
        (m, s)
    }

    #[test]
    fn zero_potential_density_is_zero() {
        let (m, s) = s1_closure(vec![0.0, 0.0], 17);
        let a = aubry_set(&s, 1e-9).unwrap();
        assert_eq!(a.len(), 17);
        assert!(irreducibility_check(&s, &a, 1e-9));
        let d = idempotent_density_irreducible(&s, &a, 1e-9).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        let r = verify_invariance(&d, &m, 1e-12);
        assert_eq!(r.residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn binary_density_counts_ones() {
        let (m, s) = s1_closure(vec![0.0, -1.0], 65);
        let a = aubry_set(&s, 1e-9).unwrap();
        let d = idempotent_density_irreducible(&s, &a, 1e-9).unwrap();
        assert_eq!(d.max(), 0.0);
        assert_eq!(d.values[0], 0.0);
        assert_eq!(d.values[32], -1.0);
        assert_eq!(d.values[48], -2.0);
        // node k/64 is reached from 0 by the binary digits of k
        for k in 0..64u32 {
            assert_eq!(d.values[k as usize], -(k.count_ones() as f64), "node {k}");
        }
        assert!(verify_invariance(&d, &m, 1e-9).pass);
        let mut bad = d.clone();
        bad.values[48] -= 0.5;
        let r = verify_invariance(&bad, &m, 1e-9);
        assert!(r.residual >= 0.5 - 1e-9 && !r.pass);
    }

    #[test]
    fn restriction_reduces_to_irreducible_density() {
        let (_, s) = s1_closure(vec![0.0, -1.0], 33);
        let a = aubry_set(&s, 1e-9).unwrap();
        let d1 = idempotent_density_irreducible(&s, &a, 1e-9).unwrap();
        let d2 = idempotent_density_general(&s, &a, &[0.0], 1e-9).unwrap();
        assert_eq!(d1, d2);
        let restricted: Vec<f64> = a.nodes.iter().map(|&z| d2.values[z]).collect();
        assert_eq!(idempotent_density_general(&s, &a, &restricted, 1e-9).unwrap(), d2);
        assert!(matches!(
            idempotent_density_general(&s, &a, &[f64::NEG_INFINITY], 1e-9),
            Err(TropicalError::BottomRestriction)
        ));
    }

    #[test]
    fn functional_is_max_plus_pairing() {
        let d = Density::new(vec![0.0, -1.0, f64::NEG_INFINITY]);
        assert_eq!(d.functional(&[-0.5, 2.0, 10.0]), 1.0);
    }
}
