use serde::Serialize;

use super::MaxPlusValue;
use crate::ifs::{Grid, IfsSystem, JointTable};

/// Collapsed edge `source → target`; `letters` lists every map attaining
/// the weight, in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub target: usize,
    pub weight: f64,
    pub letters: Vec<usize>,
}

/// How far the nearest-node projection moved the exact images `φ_j(x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub spacing: f64,
    pub max_snap: f64,
    pub worst_node: usize,
    pub worst_letter: usize,
}

/// Sparse max-plus matrix over grid nodes with at most `|J|` edges per row.
#[derive(Debug, Clone)]
pub struct MaxPlusMatrix {
    n: usize,
    n_maps: usize,
    succ: Vec<usize>,
    weight: Vec<f64>,
    out: Vec<Vec<Edge>>,
    incoming: Vec<Vec<(usize, f64)>>,
    resolution: ResolutionReport,
}

pub fn build_maxplus_matrix(sys: &IfsSystem, grid: &Grid, weights: &JointTable) -> MaxPlusMatrix {
    let n = grid.len();
    let m = sys.n_maps();
    assert_eq!(weights.n_maps(), m, "weight table arity");
    assert_eq!(weights.n_nodes(), n, "weight table size");
    let mut succ = Vec::with_capacity(m * n);
    let mut resolution =
        ResolutionReport { spacing: grid.spacing(), max_snap: 0.0, worst_node: 0, worst_letter: 0 };
    for j in 0..m {
        for i in 0..n {
            let y = sys.apply(j, grid.point(i));
            let k = grid.nearest(y);
            let snap = (grid.point(k) - y).abs();
            if snap > resolution.max_snap {
                resolution.max_snap = snap;
                resolution.worst_node = i;
                resolution.worst_letter = j;
            }
            succ.push(k);
        }
    }
    MaxPlusMatrix::from_successors(n, m, succ, weights.values().to_vec(), resolution)
}

impl MaxPlusMatrix {
    fn from_successors(
        n: usize,
        n_maps: usize,
        succ: Vec<usize>,
        weight: Vec<f64>,
        resolution: ResolutionReport,
    ) -> Self {
        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for (x, edges) in out.iter_mut().enumerate() {
            for j in 0..n_maps {
                let target = succ[j * n + x];
                let w = weight[j * n + x];
                match edges.iter_mut().find(|e| e.target == target) {
                    Some(e) if w > e.weight => {
                        e.weight = w;
                        e.letters = vec![j];
                    }
                    Some(e) if w == e.weight => e.letters.push(j),
                    Some(_) => {}
                    None => edges.push(Edge { target, weight: w, letters: vec![j] }),
                }
            }
            edges.sort_by_key(|e| e.target);
        }
        let mut incoming = vec![Vec::new(); n];
        for (x, edges) in out.iter().enumerate() {
            for e in edges {
                incoming[e.target].push((x, e.weight));
            }
        }
        Self { n, n_maps, succ, weight, out, incoming, resolution }
    }

    /// Same graph with new per-letter weights.
    pub fn reweighted(&self, weights: &JointTable) -> Self {
        assert_eq!(weights.values().len(), self.weight.len(), "weight table size");
        Self::from_successors(
            self.n,
            self.n_maps,
            self.succ.clone(),
            weights.values().to_vec(),
            self.resolution,
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_maps(&self) -> usize {
        self.n_maps
    }

    /// Node reached from `x` by letter `j`.
    #[inline]
    pub fn successor(&self, j: usize, x: usize) -> usize {
        self.succ[j * self.n + x]
    }

    #[inline]
    pub fn letter_weight(&self, j: usize, x: usize) -> f64 {
        self.weight[j * self.n + x]
    }

    pub fn out_edges(&self, x: usize) -> &[Edge] {
        &self.out[x]
    }

    /// `(source, weight)` for every edge into `x`.
    pub fn in_edges(&self, x: usize) -> &[(usize, f64)] {
        &self.incoming[x]
    }

    /// Weight of the edge `x → y`, `-∞` if there is none.
    pub fn entry(&self, x: usize, y: usize) -> MaxPlusValue {
        self.out[x]
            .iter()
            .find(|e| e.target == y)
            .map_or(MaxPlusValue::BOTTOM, |e| MaxPlusValue::new(e.weight))
    }

    pub fn resolution(&self) -> ResolutionReport {
        self.resolution
    }

    /// Largest edge weight together with its node and letter.
    pub fn max_weight(&self) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for j in 0..self.n_maps {
            for x in 0..self.n {
                let w = self.letter_weight(j, x);
                if w > best.0 {
                    best = (w, x, j);
                }
            }
        }
        best
    }

    /// `(𝓛⁰ f)(x) = ⊕_j w(j, x) ⊙ f(φ_j(x))`.
    pub fn forward(&self, f: &[f64]) -> Vec<f64> {
        self.out
            .iter()
            .map(|edges| {
                edges
                    .iter()
                    .map(|e| add(e.weight, f[e.target]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// `(L⁰ λ)(x) = ⊕_{y → x} w ⊙ λ(y)`.
    pub fn dual(&self, lambda: &[f64]) -> Vec<f64> {
        self.incoming
            .iter()
            .map(|edges| {
                edges
                    .iter()
                    .map(|&(y, w)| add(w, lambda[y]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

#[inline]
pub(crate) fn add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a + b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Potential;

    #[test]
    fn three_point_grid_rounding() {
        let sys = IfsSystem::binary();
        let grid = Grid::new(3).unwrap();
        let a = Potential::constant(vec![0.0, -1.0]).sample(&grid);
        let m = build_maxplus_matrix(&sys, &grid, &a);
        assert_eq!(m.entry(0, 0), MaxPlusValue::ZERO);
        assert_eq!(m.entry(0, 1), MaxPlusValue::new(-1.0));
        // φ_0(1/2) = 1/4 is a tie between nodes 0 and 1; ties go to node 0
        assert_eq!(m.successor(0, 1), 0);
        // φ_1(1/2) = 3/4 ties between nodes 1 and 2 and goes to node 2
        assert_eq!(m.successor(1, 1), 2);
        assert_eq!(m.resolution().max_snap, 0.25);
        assert_eq!(m.entry(2, 0), MaxPlusValue::BOTTOM);
    }

    #[test]
    fn zero_potential_has_zero_entries() {
        let sys = IfsSystem::binary();
        let grid = Grid::new(17).unwrap();
        let m = build_maxplus_matrix(&sys, &grid, &Potential::constant(vec![0.0, 0.0]).sample(&grid));
        for x in 0..17 {
            for e in m.out_edges(x) {
                assert_eq!(e.weight, 0.0);
            }
        }
    }

    #[test]
    fn out_degree_bounded_by_alphabet() {
        let sys = IfsSystem::binary();
        let grid = Grid::new(257).unwrap();
        let m = build_maxplus_matrix(&sys, &grid, &Potential::constant(vec![0.0, -1.0]).sample(&grid));
        assert!((0..257).all(|x| (1..=2).contains(&m.out_edges(x).len())));
    }

    #[test]
    fn parallel_letters_collapse_with_provenance() {
        // φ_0(0) = 0 and φ_1(0) = 1/4 both project to node 0 on the 3-point grid
        let sys = IfsSystem::new(
            vec![crate::ifs::MapSpec::new(0.5, 0.0), crate::ifs::MapSpec::new(0.5, 0.25)],
            vec![0.5, 0.5],
            0.5,
        )
        .unwrap();
        let grid = Grid::new(3).unwrap();
        let w = JointTable::from_fn(2, 3, |_, _| -1.0);
        let m = build_maxplus_matrix(&sys, &grid, &w);
        assert_eq!(m.out_edges(0).len(), 1);
        let e = &m.out_edges(0)[0];
        assert_eq!(e.target, 0);
        assert_eq!(e.letters, vec![0, 1]);
    }

    #[test]
    fn forward_and_dual_pairing() {
        let sys = IfsSystem::binary();
        let grid = Grid::new(9).unwrap();
        let w = Potential::affine(vec![0.0, -1.0], vec![-1.0, 1.0]).unwrap().sample(&grid);
        let m = build_maxplus_matrix(&sys, &grid, &w);
        let lambda: Vec<f64> = (0..9).map(|i| -(i as f64) * 0.3).collect();
        let f: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
        let lhs = lambda.iter().zip(m.forward(&f)).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
        let rhs = m.dual(&lambda).iter().zip(&f).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
