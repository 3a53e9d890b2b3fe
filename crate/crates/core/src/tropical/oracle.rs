//! Exhaustive word enumeration, used as an independent check on the grid
//! closure.

use super::{MaxPlusValue, TropicalError};
use crate::ifs::{Grid, IfsSystem, SymbolicSpace};

/// Largest number of words any enumeration here will visit at full depth.
pub const MAX_ENUMERATION: usize = 1 << 24;

fn check_size(alphabet: usize, depth: usize) -> Result<(), TropicalError> {
    let count = u32::try_from(depth).ok().and_then(|d| alphabet.checked_pow(d));
    match count {
        Some(c) if c <= MAX_ENUMERATION => Ok(()),
        _ => Err(TropicalError::TooManyWords {
            words: format!("{alphabet}^{depth}"),
            limit: MAX_ENUMERATION,
        }),
    }
}

fn check_constants(q: &[f64]) -> Result<usize, TropicalError> {
    let (best, top) = q
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(b, t), (j, &v)| if v > t { (j, v) } else { (b, t) });
    if top.abs() > 1e-12 {
        return Err(TropicalError::ConstantsNotNormalized(top));
    }
    Ok(best)
}

/// Density of the idempotent probability for constant weights `q_j` with
/// `max_j q_j = 0`, over grid nodes: the best `Σ q_{j_i}` over words of
/// length `depth` whose image of the anchor lands nearest to the node.
/// The anchor is the fixed point of the lowest-index map with `q_j = 0`, so
/// the infinite tail of every address contributes nothing. Nodes no word
/// reaches get `-∞`.
pub fn nonplace_density_symbolic(
    sys: &IfsSystem,
    q: &[f64],
    grid: &Grid,
    space: &SymbolicSpace,
) -> Result<Vec<f64>, TropicalError> {
    check_size(space.alphabet(), space.depth())?;
    let best = check_constants(q)?;
    let anchor = sys.maps()[best].fixed_point();
    let mut out = vec![f64::NEG_INFINITY; grid.len()];
    // letters are applied innermost first, so depth-first expansion visits
    // every word of the target length exactly once
    let mut stack = vec![(anchor, 0.0, 0usize)];
    while let Some((p, s, len)) = stack.pop() {
        if len == space.depth() {
            let k = grid.nearest(p);
            out[k] = out[k].max(s);
            continue;
        }
        for (j, &qj) in q.iter().enumerate() {
            stack.push((sys.apply(j, p), s + qj, len + 1));
        }
    }
    Ok(out)
}

/// Full-shift backend: the value on cylinder `(j_1 .. j_n)` is
/// `Σ_{i <= n} q_{j_i}`, indexed as in [`SymbolicSpace::cylinder`].
pub fn nonplace_density_full_shift(q: &[f64], space: &SymbolicSpace) -> Result<Vec<f64>, TropicalError> {
    check_size(space.alphabet(), space.depth())?;
    check_constants(q)?;
    let count = space.cylinder_count().expect("size checked");
    Ok((0..count)
        .map(|idx| space.cylinder(idx).iter().map(|&j| q[j]).sum())
        .collect())
}

/// `max` of `Sum(q, w, y)` over words with `1 <= |w| <= n_max` and
/// `|x - φ_w(y)| < eps`; `-∞` if no word qualifies.
pub fn brute_force_mane(
    sys: &IfsSystem,
    q: impl Fn(usize, f64) -> f64,
    x: f64,
    y: f64,
    n_max: usize,
    eps: f64,
) -> Result<MaxPlusValue, TropicalError> {
    check_size(sys.n_maps(), n_max)?;
    let mut best = f64::NEG_INFINITY;
    enumerate(sys, &q, y, n_max, &mut |p, s| {
        if (x - p).abs() < eps {
            best = best.max(s);
        }
    });
    Ok(MaxPlusValue::new(best))
}

/// [`brute_force_mane`] for every grid node `x` at once.
pub fn brute_force_mane_column(
    sys: &IfsSystem,
    q: impl Fn(usize, f64) -> f64,
    grid: &Grid,
    y: f64,
    n_max: usize,
    eps: f64,
) -> Result<Vec<f64>, TropicalError> {
    check_size(sys.n_maps(), n_max)?;
    let h = grid.spacing();
    let last = grid.len() - 1;
    let mut out = vec![f64::NEG_INFINITY; grid.len()];
    enumerate(sys, &q, y, n_max, &mut |p, s| {
        let lo = (((p - eps) / h).floor().max(0.0) as usize).min(last);
        let hi = (((p + eps) / h).ceil().max(0.0) as usize).min(last);
        for (i, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            if (grid.point(i) - p).abs() < eps && s > *slot {
                *slot = s;
            }
        }
    });
    Ok(out)
}

/// Visits `(φ_w(y), Sum(q, w, y))` for every word of length `1..=n_max`.
/// Extending a word by a new first letter `j` maps the point by `φ_j` and
/// adds `q(j, point)`.
fn enumerate(
    sys: &IfsSystem,
    q: &impl Fn(usize, f64) -> f64,
    y: f64,
    n_max: usize,
    visit: &mut impl FnMut(f64, f64),
) {
    let mut stack = vec![(y, 0.0, 0usize)];
    while let Some((p, s, len)) = stack.pop() {
        if len == n_max {
            continue;
        }
        for j in 0..sys.n_maps() {
            let np = sys.apply(j, p);
            let ns = s + q(j, p);
            visit(np, ns);
            stack.push((np, ns, len + 1));
        }
    }
}
