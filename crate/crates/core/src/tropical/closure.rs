use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::Serialize;

use super::{MaxPlusMatrix, TropicalError};

/// Path closure `S[x][y]`: best total weight of a path of length `>= 1`
/// from `y` to `x`. Either every entry is stored, or only the columns
/// `S[·][z]` for selected sources `z`.
#[derive(Debug, Clone)]
pub struct TropicalClosure {
    n: usize,
    storage: Storage,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f64>),
    Columns(BTreeMap<usize, Vec<f64>>),
}

impl TropicalClosure {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// `S[x][y]`. Panics if the column of `y` was not computed.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        match &self.storage {
            Storage::Dense(s) => s[x * self.n + y],
            Storage::Columns(cols) => cols.get(&y).expect("closure column not computed")[x],
        }
    }

    /// `S[·][y]`.
    pub fn column(&self, y: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(s) => (0..self.n).map(|x| s[x * self.n + y]).collect(),
            Storage::Columns(cols) => cols.get(&y).expect("closure column not computed").clone(),
        }
    }

    /// `S[x][·]`; only available for a full closure.
    pub fn row(&self, x: usize) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(s) => Some(&s[x * self.n..(x + 1) * self.n]),
            Storage::Columns(_) => None,
        }
    }

    pub fn has_column(&self, y: usize) -> bool {
        match &self.storage {
            Storage::Dense(_) => y < self.n,
            Storage::Columns(cols) => cols.contains_key(&y),
        }
    }

    /// Closure restricted to the columns of `sources`, each computed by a
    /// longest-path search on the nonpositive edge weights.
    pub fn from_columns(m: &MaxPlusMatrix, sources: &[usize], tol: f64) -> Result<Self, TropicalError> {
        check_normalized(m, tol)?;
        let cols = sources
            .par_iter()
            .map(|&z| (z, column_search(m, z, None)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        Ok(Self { n: m.n_nodes(), storage: Storage::Columns(cols) })
    }
}

fn check_normalized(m: &MaxPlusMatrix, tol: f64) -> Result<(), TropicalError> {
    let (w, node, letter) = m.max_weight();
    if w > tol {
        return Err(TropicalError::NotNormalized { node, letter, weight: w, tol });
    }
    Ok(())
}

/// Edge weights in `(0, tol]` count as `0`.
#[inline]
fn clamp(w: f64) -> f64 {
    w.min(0.0)
}

/// Tropical Floyd–Warshall closure of a matrix built from normalized
/// weights. Rows are relaxed in parallel for each pivot.
pub fn kleene_star(m: &MaxPlusMatrix, tol: f64) -> Result<TropicalClosure, TropicalError> {
    check_normalized(m, tol)?;
    let n = m.n_nodes();
    let mut s = vec![f64::NEG_INFINITY; n * n];
    for y in 0..n {
        for e in m.out_edges(y) {
            let slot = &mut s[e.target * n + y];
            *slot = slot.max(clamp(e.weight));
        }
    }
    let mut pivot_row = vec![0.0; n];
    for k in 0..n {
        // row k is unchanged by pivot k because S[k][k] <= 0
        pivot_row.copy_from_slice(&s[k * n..(k + 1) * n]);
        let pr = &pivot_row;
        s.par_chunks_mut(n).for_each(|row| {
            let sxk = row[k];
            if sxk == f64::NEG_INFINITY {
                return;
            }
            for (cell, &sky) in row.iter_mut().zip(pr) {
                let cand = sxk + sky;
                if cand > *cell {
                    *cell = cand;
                }
            }
        });
    }
    Ok(TropicalClosure { n, storage: Storage::Dense(s) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Dijkstra on costs `-w` over paths of length `>= 1` starting at `z`.
/// With `stop_at = Some((x, bound))` the search ends once `x` is settled
/// or every remaining cost exceeds `bound`.
fn column_search(m: &MaxPlusMatrix, z: usize, stop_at: Option<(usize, f64)>) -> Vec<f64> {
    let n = m.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for e in m.out_edges(z) {
        let c = -clamp(e.weight);
        if c < dist[e.target] {
            dist[e.target] = c;
            heap.push(Reverse((Cost(c), e.target)));
        }
    }
    while let Some(Reverse((Cost(c), v))) = heap.pop() {
        if done[v] || c > dist[v] {
            continue;
        }
        if let Some((x, bound)) = stop_at {
            if c > bound {
                break;
            }
            if v == x {
                done[v] = true;
                break;
            }
        }
        done[v] = true;
        for e in m.out_edges(v) {
            let nc = c - clamp(e.weight);
            if nc < dist[e.target] {
                dist[e.target] = nc;
                heap.push(Reverse((Cost(nc), e.target)));
            }
        }
    }
    dist.iter().map(|&d| if d == f64::INFINITY { f64::NEG_INFINITY } else { -d }).collect()
}

/// `S[·][z]` without forming the full closure.
pub fn mane_column(m: &MaxPlusMatrix, z: usize, tol: f64) -> Result<Vec<f64>, TropicalError> {
    check_normalized(m, tol)?;
    Ok(column_search(m, z, None))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AubrySet {
    pub nodes: Vec<usize>,
    pub tol: f64,
}

impl AubrySet {
    pub fn contains(&self, x: usize) -> bool {
        self.nodes.binary_search(&x).is_ok()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `{x : S[x][x] >= -tol}`; an empty result is an error.
pub fn aubry_set(s: &TropicalClosure, tol: f64) -> Result<AubrySet, TropicalError> {
    let n = s.n_nodes();
    let diag: Vec<f64> = (0..n).map(|x| s.get(x, x)).collect();
    let nodes: Vec<usize> = (0..n).filter(|&x| diag[x] >= -tol).collect();
    if nodes.is_empty() {
        let best_diagonal = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(TropicalError::EmptyAubry { tol, best_diagonal });
    }
    Ok(AubrySet { nodes, tol })
}

/// Aubry set from one truncated search per node, for grids too large for
/// the full closure.
pub fn aubry_set_sparse(m: &MaxPlusMatrix, tol: f64) -> Result<AubrySet, TropicalError> {
    check_normalized(m, tol)?;
    let diag: Vec<f64> = (0..m.n_nodes())
        .into_par_iter()
        .map(|x| column_search(m, x, Some((x, tol)))[x])
        .collect();
    let nodes: Vec<usize> = (0..diag.len()).filter(|&x| diag[x] >= -tol).collect();
    if nodes.is_empty() {
        let best_diagonal = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(TropicalError::EmptyAubry { tol, best_diagonal });
    }
    Ok(AubrySet { nodes, tol })
}

/// True iff `S[x][y] >= -tol` for every pair of Aubry nodes.
pub fn irreducibility_check(s: &TropicalClosure, aubry: &AubrySet, tol: f64) -> bool {
    aubry
        .nodes
        .iter()
        .all(|&y| aubry.nodes.iter().all(|&x| s.get(x, y) >= -tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{Grid, IfsSystem, Potential};
    use crate::tropical::build_maxplus_matrix;

    fn s1(q: Vec<f64>, n: usize) -> MaxPlusMatrix {
        let grid = Grid::new(n).unwrap();
        build_maxplus_matrix(&IfsSystem::binary(), &grid, &Potential::constant(q).sample(&grid))
    }

    fn reachable_from(m: &MaxPlusMatrix, y: usize) -> Vec<bool> {
        let mut seen = vec![false; m.n_nodes()];
        let mut stack: Vec<usize> = m.out_edges(y).iter().map(|e| e.target).collect();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(m.out_edges(v).iter().map(|e| e.target));
            }
        }
        seen
    }

    #[test]
    fn zero_weights_give_reachability() {
        let m = s1(vec![0.0, 0.0], 17);
        let s = kleene_star(&m, 1e-12).unwrap();
        for y in 0..17 {
            let r = reachable_from(&m, y);
            for x in 0..17 {
                let expected = if r[x] { 0.0 } else { f64::NEG_INFINITY };
                assert_eq!(s.get(x, y), expected);
            }
        }
        // every node reaches every node on the binary system
        assert!((0..17).all(|y| reachable_from(&m, y).iter().all(|&b| b)));
    }

    #[test]
    fn binary_examples() {
        let grid = Grid::new(65).unwrap();
        let m = s1(vec![0.0, -1.0], 65);
        let s = kleene_star(&m, 1e-12).unwrap();
        let node = |x: f64| grid.nearest(x);
        assert!((0..65).all(|y| s.get(0, y) == 0.0));
        assert_eq!(s.get(node(0.75), node(0.0)), -2.0);
        let a = aubry_set(&s, 1e-9).unwrap();
        assert_eq!(a.nodes, vec![0]);
        assert!(irreducibility_check(&s, &a, 1e-9));

        let s = kleene_star(&s1(vec![-1.0, 0.0], 65), 1e-12).unwrap();
        assert_eq!(aubry_set(&s, 1e-9).unwrap().nodes, vec![64]);
    }

    #[test]
    fn rejects_positive_weights_and_clamps_tiny_ones() {
        let m = s1(vec![1e-3, -1.0], 9);
        assert!(matches!(kleene_star(&m, 1e-8), Err(TropicalError::NotNormalized { .. })));
        let m = s1(vec![1e-10, -1.0], 9);
        let s = kleene_star(&m, 1e-8).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn column_search_matches_floyd_warshall() {
        let grid = Grid::new(33).unwrap();
        let sys = IfsSystem::binary();
        let w = Potential::affine(vec![0.0, -1.0], vec![-1.0, 1.0]).unwrap().sample(&grid);
        let m = build_maxplus_matrix(&sys, &grid, &w);
        let s = kleene_star(&m, 1e-12).unwrap();
        for z in [0, 7, 16, 32] {
            let col = mane_column(&m, z, 1e-12).unwrap();
            for x in 0..33 {
                assert!((col[x] - s.get(x, z)).abs() < 1e-12);
            }
        }
        let sparse = aubry_set_sparse(&m, 1e-9).unwrap();
        assert_eq!(sparse, aubry_set(&s, 1e-9).unwrap());
    }
}
