use super::matrix::add;
use super::MaxPlusMatrix;

/// Maximum mean weight over directed cycles, by Karp's characterization
///
/// `μ* = max_v min_{0 <= k < n} (D_n(v) - D_k(v)) / (n - k)`
///
/// where `D_k(v)` is the best weight of a walk with exactly `k` edges ending
/// at `v` and `D_0 ≡ 0` (a virtual source attached to every node, so the
/// graph need not be strongly connected). Two sweeps keep memory at `O(n)`:
/// the first computes `D_n`, the second replays `D_0..D_{n-1}`.
pub fn max_cycle_mean(m: &MaxPlusMatrix) -> f64 {
    let n = m.n_nodes();
    let step = |d: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|v| {
                m.in_edges(v)
                    .iter()
                    .map(|&(u, w)| add(d[u], w))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let mut d = vec![0.0; n];
    for _ in 0..n {
        d = step(&d);
    }
    let d_n = d;
    let mut worst = vec![f64::INFINITY; n];
    let mut d = vec![0.0; n];
    for k in 0..n {
        for v in 0..n {
            if d_n[v] > f64::NEG_INFINITY && d[v] > f64::NEG_INFINITY {
                let r = (d_n[v] - d[v]) / (n - k) as f64;
                if r < worst[v] {
                    worst[v] = r;
                }
            }
        }
        d = step(&d);
    }
    (0..n)
        .filter(|&v| d_n[v] > f64::NEG_INFINITY)
        .map(|v| worst[v])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{Grid, IfsSystem, Potential};
    use crate::tropical::build_maxplus_matrix;

    /// Best mean over simple cycles up to `max_len` edges, by enumeration.
    fn enumerate_cycles(m: &MaxPlusMatrix, max_len: usize) -> f64 {
        fn walk(
            m: &MaxPlusMatrix,
            start: usize,
            at: usize,
            total: f64,
            len: usize,
            max_len: usize,
            best: &mut f64,
        ) {
            for e in m.out_edges(at) {
                let t = total + e.weight;
                if e.target == start {
                    *best = best.max(t / (len + 1) as f64);
                }
                if len + 1 < max_len {
                    walk(m, start, e.target, t, len + 1, max_len, best);
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        for s in 0..m.n_nodes() {
            walk(m, s, s, 0.0, 0, max_len, &mut best);
        }
        best
    }

    fn s1_matrix(a: Vec<f64>, n: usize) -> MaxPlusMatrix {
        let grid = Grid::new(n).unwrap();
        build_maxplus_matrix(&IfsSystem::binary(), &grid, &Potential::constant(a).sample(&grid))
    }

    #[test]
    fn zero_potential() {
        assert_eq!(max_cycle_mean(&s1_matrix(vec![0.0, 0.0], 9)), 0.0);
    }

    #[test]
    fn constant_potentials_match_cycle_enumeration() {
        for a in [vec![0.0, -1.0], vec![-2.0, -1.0], vec![-0.3, -0.7]] {
            let m = s1_matrix(a, 9);
            let karp = max_cycle_mean(&m);
            let oracle = enumerate_cycles(&m, 3);
            assert!((karp - oracle).abs() < 1e-12, "{karp} vs {oracle}");
        }
        assert_eq!(max_cycle_mean(&s1_matrix(vec![0.0, -1.0], 9)), 0.0);
        assert_eq!(max_cycle_mean(&s1_matrix(vec![-2.0, -1.0], 9)), -1.0);
    }

    #[test]
    fn place_dependent_matches_enumeration() {
        let grid = Grid::new(9).unwrap();
        let a = Potential::affine(vec![0.3, -0.2], vec![-1.0, 0.8]).unwrap().sample(&grid);
        let m = build_maxplus_matrix(&IfsSystem::binary(), &grid, &a);
        // simple cycles have at most 9 edges
        let oracle = enumerate_cycles(&m, 9);
        assert!((max_cycle_mean(&m) - oracle).abs() < 1e-12);
    }
}
