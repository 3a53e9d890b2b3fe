use serde::{Deserialize, Serialize};

use super::{
    aubry_set, aubry_set_sparse, build_maxplus_matrix, default_aubry_tolerance, eq7_residual,
    idempotent_density_general, idempotent_density_irreducible, irreducibility_check, kleene_star,
    max_cycle_mean, verify_invariance, AubrySet, Density, InvarianceReport, MaxPlusMatrix,
    ResolutionReport, TropicalClosure, TropicalError,
};
use crate::ifs::{Grid, IfsSystem, JointTable, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubactionMethod {
    /// Howard-style policy iteration for the max-plus eigenproblem.
    Policy,
    /// Fixed points of `T⁰_s(u)(x) = max_j [A(j, x) + s·u(φ_j(x))]` along
    /// `s_k = 1 - 2^{-k}`.
    Discounted,
}

/// `m(A)`, a calibrated subaction `V` with `sup V = 0`, and the normalized
/// weights `q(j, x) = A(j, x) + V(φ_j(x)) - V(x) - m(A)`.
#[derive(Debug, Clone)]
pub struct ZeroTempPack {
    pub m_a: f64,
    pub v: Vec<f64>,
    pub q: JointTable,
    /// `max_x |max_j q(j, x)|`
    pub calibration_residual: f64,
    pub method: SubactionMethod,
}

/// `q(j, x) = w(j, x) + V(next_j(x)) - V(x) - m` on the matrix graph.
pub fn normalized_q(m: &MaxPlusMatrix, v: &[f64], m_a: f64) -> JointTable {
    JointTable::from_fn(m.n_maps(), m.n_nodes(), |j, x| {
        m.letter_weight(j, x) + v[m.successor(j, x)] - v[x] - m_a
    })
}

/// `(max_x |max_j q(j, x)|, worst node)`.
pub fn calibration_residual(q: &JointTable) -> (f64, usize) {
    q.max_over_letters()
        .iter()
        .enumerate()
        .fold((0.0, 0), |(r, k), (x, v)| if v.abs() > r { (v.abs(), x) } else { (r, k) })
}

/// Calibrated subaction of the weights carried by `m` (built from `A`).
pub fn calibrated_subaction(
    m: &MaxPlusMatrix,
    m_a: f64,
    method: SubactionMethod,
    tol: f64,
) -> Result<Vec<f64>, TropicalError> {
    let v = match method {
        SubactionMethod::Policy => policy_iteration(m, m_a, tol)?.0,
        SubactionMethod::Discounted => discounted(m, m_a, tol)?,
    };
    let (residual, node) = calibration_residual(&normalized_q(m, &v, m_a));
    if residual > tol {
        return Err(TropicalError::Calibration { residual, node, tol });
    }
    Ok(v)
}

const POLICY_MAX_ROUNDS: usize = 10_000;

/// Multichain policy iteration: each policy (one letter per node) is
/// evaluated into a cycle mean `η` and a bias `v`, then improved first on
/// `η`, then on `v`. Representatives of cycles keep their previous bias,
/// which makes the iteration monotone.
/// Returns the normalized bias and the cycle mean reached from each node.
fn policy_iteration(m: &MaxPlusMatrix, m_a: f64, tol: f64) -> Result<(Vec<f64>, Vec<f64>), TropicalError> {
    let n = m.n_nodes();
    let k = m.n_maps();
    let scale = 1.0 + m.max_weight().0.abs().max(m_a.abs());
    let eps = 1e-13 * scale;

    let mut policy: Vec<usize> = (0..n)
        .map(|x| {
            (0..k).fold(0, |b, j| if m.letter_weight(j, x) > m.letter_weight(b, x) { j } else { b })
        })
        .collect();
    let mut eta = vec![0.0; n];
    let mut v = vec![0.0; n];

    for _ in 0..POLICY_MAX_ROUNDS {
        evaluate_policy(m, &policy, &mut eta, &mut v);

        let mut changed = false;
        for x in 0..n {
            let mut best = eta[x];
            let mut pick = policy[x];
            for j in 0..k {
                let e = eta[m.successor(j, x)];
                if e > best + eps {
                    best = e;
                    pick = j;
                }
            }
            if pick != policy[x] {
                policy[x] = pick;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        for x in 0..n {
            let mut best = v[x];
            let mut pick = policy[x];
            for j in 0..k {
                let y = m.successor(j, x);
                if eta[y] < eta[x] - eps {
                    continue;
                }
                let val = m.letter_weight(j, x) - eta[x] + v[y];
                if val > best + eps {
                    best = val;
                    pick = j;
                }
            }
            if pick != policy[x] {
                policy[x] = pick;
                changed = true;
            }
        }
        if !changed {
            if let Some(node) = (0..n).find(|&x| eta[x] < m_a - tol) {
                return Err(TropicalError::NoCalibratedSubaction { node, mean: eta[node], m_a });
            }
            let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Ok((v.iter().map(|x| x - top).collect(), eta));
        }
    }
    Err(TropicalError::PolicyIteration(POLICY_MAX_ROUNDS))
}

/// Cycle means and biases of the functional graph `x → next_{policy(x)}(x)`.
fn evaluate_policy(m: &MaxPlusMatrix, policy: &[usize], eta: &mut [f64], v: &mut [f64]) {
    let n = m.n_nodes();
    let next = |x: usize| m.successor(policy[x], x);
    let w = |x: usize| m.letter_weight(policy[x], x);
    // 0 = unvisited, 1 = on the current walk, 2 = evaluated
    let mut state = vec![0u8; n];
    let mut walk = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        walk.clear();
        let mut x = start;
        while state[x] == 0 {
            state[x] = 1;
            walk.push(x);
            x = next(x);
        }
        let mut tail_end = walk.len();
        if state[x] == 1 {
            // new cycle: the walk from position p onwards
            let p = walk.iter().position(|&y| y == x).expect("cycle node on walk");
            let cycle = &walk[p..];
            let mean = cycle.iter().map(|&y| w(y)).sum::<f64>() / cycle.len() as f64;
            let (ri, &rep) = cycle.iter().enumerate().min_by_key(|&(_, &y)| y).expect("non-empty cycle");
            // keep the representative's previous bias
            let base = v[rep];
            let len = cycle.len();
            let mut value = base;
            for step in 1..len {
                let y = cycle[(ri + len - step) % len];
                value += w(y) - mean;
                v[y] = value;
                eta[y] = mean;
            }
            v[rep] = base;
            eta[rep] = mean;
            for &y in cycle {
                state[y] = 2;
            }
            tail_end = p;
        }
        for &y in walk[..tail_end].iter().rev() {
            let z = next(y);
            eta[y] = eta[z];
            v[y] = w(y) - eta[y] + v[z];
            state[y] = 2;
        }
    }
}

/// Replaces an approximate maximal cycle mean by the mean of an optimal
/// cycle, summed along the cycle itself. Karp's formula divides long walk
/// sums and leaves rounding of order `n·ε·|A|`; the cycle sum does not.
/// The approximation is kept if the two disagree beyond rounding.
pub fn exact_cycle_mean(m: &MaxPlusMatrix, approx: f64) -> f64 {
    let Ok((_, eta)) = policy_iteration(m, approx, f64::INFINITY) else {
        return approx;
    };
    let best = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 + m.max_weight().0.abs().max(approx.abs());
    if (best - approx).abs() <= 1e-9 * scale {
        best
    } else {
        approx
    }
}

const DISCOUNT_MAX_K: i32 = 40;

fn discounted(m: &MaxPlusMatrix, m_a: f64, tol: f64) -> Result<Vec<f64>, TropicalError> {
    let n = m.n_nodes();
    let k = m.n_maps();
    let mut w = vec![0.0; n];
    let mut residual = (f64::INFINITY, 0);
    for step in 1..=DISCOUNT_MAX_K {
        let s = 1.0 - 0.5f64.powi(step);
        let inner_tol = (tol * 1e-3).max(1e-14);
        loop {
            let g: Vec<f64> = (0..n)
                .map(|x| {
                    (0..k)
                        .map(|j| m.letter_weight(j, x) + s * w[m.successor(j, x)])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let (lo, hi) = g.iter().zip(&w).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a - b), hi.max(a - b))
            });
            let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w = g.iter().map(|v| v - top).collect();
            if hi - lo < inner_tol {
                break;
            }
        }
        residual = calibration_residual(&normalized_q(m, &w, m_a));
        if residual.0 <= tol {
            return Ok(w);
        }
    }
    Err(TropicalError::Calibration { residual: residual.0, node: residual.1, tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TropicalSettings {
    pub method: SubactionMethod,
    /// `None` selects [`default_aubry_tolerance`]
    pub aubry_tol: Option<f64>,
    /// `None` uses the Aubry tolerance
    pub calibration_tol: Option<f64>,
    /// above this many nodes the closure is kept column-wise
    pub dense_limit: usize,
}

impl Default for TropicalSettings {
    fn default() -> Self {
        Self { method: SubactionMethod::Policy, aubry_tol: None, calibration_tol: None, dense_limit: 1025 }
    }
}

/// Everything the zero-temperature side produces for one system.
#[derive(Debug, Clone)]
pub struct TropicalState {
    pub pack: ZeroTempPack,
    pub a_matrix: MaxPlusMatrix,
    pub q_matrix: MaxPlusMatrix,
    pub closure: TropicalClosure,
    pub aubry: AubrySet,
    pub irreducible: bool,
    pub density: Density,
    pub invariance: InvarianceReport,
    pub eq7_residual: Option<f64>,
    pub aubry_tol: f64,
    pub calibration_tol: f64,
    pub resolution: ResolutionReport,
}

pub fn solve_tropical(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    settings: &TropicalSettings,
) -> Result<TropicalState, TropicalError> {
    potential.check_arity(sys)?;
    let aubry_tol = settings.aubry_tol.unwrap_or_else(|| default_aubry_tolerance(sys, potential, grid));
    let calibration_tol = settings.calibration_tol.unwrap_or(aubry_tol);
    let a_matrix = build_maxplus_matrix(sys, grid, &potential.sample(grid));
    let m_a = exact_cycle_mean(&a_matrix, max_cycle_mean(&a_matrix));
    let v = calibrated_subaction(&a_matrix, m_a, settings.method, calibration_tol)?;
    let q = normalized_q(&a_matrix, &v, m_a);
    let (calibration_residual, _) = calibration_residual(&q);
    let q_matrix = a_matrix.reweighted(&q);

    let (closure, aubry) = if grid.len() <= settings.dense_limit {
        let s = kleene_star(&q_matrix, calibration_tol)?;
        let a = aubry_set(&s, aubry_tol)?;
        (s, a)
    } else {
        let a = aubry_set_sparse(&q_matrix, aubry_tol)?;
        let s = TropicalClosure::from_columns(&q_matrix, &a.nodes, calibration_tol)?;
        (s, a)
    };
    let irreducible = irreducibility_check(&closure, &aubry, aubry_tol);
    let density = if irreducible {
        idempotent_density_irreducible(&closure, &aubry, aubry_tol)?
    } else {
        idempotent_density_general(&closure, &aubry, &vec![0.0; aubry.len()], aubry_tol)?
    };
    let invariance = verify_invariance(&density, &q_matrix, aubry_tol);
    let eq7 = eq7_residual(&closure, &aubry, &v);
    let resolution = a_matrix.resolution();
    Ok(TropicalState {
        pack: ZeroTempPack { m_a, v, q, calibration_residual, method: settings.method },
        a_matrix,
        q_matrix,
        closure,
        aubry,
        irreducible,
        density,
        invariance,
        eq7_residual: eq7,
        aubry_tol,
        calibration_tol,
        resolution,
    })
}

/// Density of the idempotent probability at the nodes nearest `points`,
/// recomputed on each grid size. The closure couples the resolution `ε` of
/// the Mañé potential to the grid spacing, so this is the only available
/// view of the `ε → 0` limit.
pub fn refinement_trend(
    sys: &IfsSystem,
    potential: &Potential,
    sizes: &[usize],
    points: &[f64],
    settings: &TropicalSettings,
) -> Result<Vec<Vec<f64>>, TropicalError> {
    sizes
        .iter()
        .map(|&n| {
            let grid = Grid::new(n)?;
            let st = solve_tropical(sys, potential, &grid, settings)?;
            Ok(points.iter().map(|&x| st.density.values[grid.nearest(x)]).collect())
        })
        .collect()
}
