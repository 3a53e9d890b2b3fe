//! Finite-temperature thermodynamic formalism on a grid.
//!
//! The transfer operator `(L f)(x) = Σ_j p_j e^{βA(j,x)} f(φ_j(x))` reads
//! `f(φ_j(x))` by linear interpolation between grid nodes. The measure push
//! used for the Gibbs state deposits mass with the same interpolation
//! weights, so `⟨L f, μ⟩ = ⟨f, M μ⟩` holds to rounding.

use thiserror::Error;

use crate::ifs::{Grid, IfsError, IfsSystem, JointTable, Potential};

/// Above this value of `β·max|A|` all exponentials are handled in log space.
pub const LOG_SPACE_THRESHOLD: f64 = 600.0;

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("inverse temperature must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { solver: &'static str, iterations: usize, residual: f64 },
    #[error("discount schedule exhausted before successive eigenvalue estimates agreed: {}", format_trend(.trend))]
    ScheduleExhausted { trend: Vec<DiscountStep> },
    #[error("invalid discount schedule: {0}")]
    BadSchedule(String),
    #[error("eigenfunction vanishes at node {node}")]
    DegenerateEigenfunction { node: usize },
    #[error("grid function has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

fn format_trend(trend: &[DiscountStep]) -> String {
    trend
        .iter()
        .map(|s| format!("s={:.6}: log λ={:.12}", s.s, s.log_lambda_extrapolated))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Interpolation cells `(k, t)` of `φ_j(x_i)` for every letter and node.
#[derive(Debug, Clone)]
pub struct Transition {
    n_maps: usize,
    n: usize,
    cells: Vec<(usize, f64)>,
}

impl Transition {
    pub fn new(sys: &IfsSystem, grid: &Grid) -> Self {
        let n = grid.len();
        let mut cells = Vec::with_capacity(sys.n_maps() * n);
        for j in 0..sys.n_maps() {
            for i in 0..n {
                cells.push(grid.locate(sys.apply(j, grid.point(i))));
            }
        }
        Self { n_maps: sys.n_maps(), n, cells }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cell(&self, j: usize, i: usize) -> (usize, f64) {
        self.cells[j * self.n + i]
    }

    /// `Σ_j w(j, i)·f(φ_j(x_i))` with `f` interpolated.
    pub fn pull(&self, weights: &[f64], f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for j in 0..self.n_maps {
            for (i, o) in out.iter_mut().enumerate() {
                let idx = j * self.n + i;
                let (k, t) = self.cells[idx];
                let v = if t == 0.0 { f[k] } else { f[k] * (1.0 - t) + f[k + 1] * t };
                *o += weights[idx] * v;
            }
        }
        out
    }

    /// Adjoint of [`Transition::pull`]: mass at `x_i` times `w(j, i)` is
    /// split between the nodes neighbouring `φ_j(x_i)`.
    pub fn push(&self, weights: &[f64], mass: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for j in 0..self.n_maps {
            for (i, &m) in mass.iter().enumerate() {
                let idx = j * self.n + i;
                let (k, t) = self.cells[idx];
                let w = weights[idx] * m;
                if t == 0.0 {
                    out[k] += w;
                } else {
                    out[k] += w * (1.0 - t);
                    out[k + 1] += w * t;
                }
            }
        }
        out
    }

    /// `log` of the interpolated value of `e^u` at `φ_j(x_i)`.
    #[inline]
    fn log_interp(&self, idx: usize, u: &[f64]) -> f64 {
        let (k, t) = self.cells[idx];
        if t == 0.0 {
            u[k]
        } else if t == 1.0 {
            u[k + 1]
        } else {
            log_add_exp((1.0 - t).ln() + u[k], t.ln() + u[k + 1])
        }
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.into_iter().collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `L_{βA}` on a fixed grid.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    beta: f64,
    transition: Transition,
    /// `log p_j + βA(j, x_i)`
    log_weights: Vec<f64>,
    /// `p_j e^{βA(j, x_i)}`; unused in log space
    weights: Vec<f64>,
    log_space: bool,
}

impl TransferOperator {
    pub fn new(
        sys: &IfsSystem,
        potential: &Potential,
        grid: &Grid,
        beta: f64,
    ) -> Result<Self, ThermoError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(ThermoError::NonPositiveBeta(beta));
        }
        potential.check_arity(sys)?;
        let table = potential.sample(grid);
        let n = grid.len();
        let mut log_weights = Vec::with_capacity(sys.n_maps() * n);
        for (j, p) in sys.weights().iter().enumerate() {
            log_weights.extend(table.row(j).iter().map(|a| p.ln() + beta * a));
        }
        let log_space = beta * potential.sup_abs() > LOG_SPACE_THRESHOLD;
        let weights = if log_space {
            Vec::new()
        } else {
            log_weights.iter().map(|l| l.exp()).collect()
        };
        Ok(Self { beta, transition: Transition::new(sys, grid), log_weights, weights, log_space })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_space(&self) -> bool {
        self.log_space
    }

    pub fn transition(&self) -> &Transition {
        &self.transition
    }

    pub fn n_nodes(&self) -> usize {
        self.transition.n
    }

    /// `L f` at every node.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        if !self.log_space {
            return self.transition.pull(&self.weights, f);
        }
        // shift each row by its largest exponent before exponentiating
        let n = self.transition.n;
        let m = self.transition.n_maps;
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let shift = (0..m).map(|j| self.log_weights[j * n + i]).fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            for j in 0..m {
                let idx = j * n + i;
                let (k, t) = self.transition.cells[idx];
                let v = if t == 0.0 { f[k] } else { f[k] * (1.0 - t) + f[k + 1] * t };
                acc += (self.log_weights[idx] - shift).exp() * v;
            }
            *o = acc * shift.exp();
        }
        out
    }

    /// `log L(e^u)` at every node, computed without leaving log space.
    pub fn apply_log(&self, u: &[f64]) -> Vec<f64> {
        let n = self.transition.n;
        let m = self.transition.n_maps;
        let mut terms = vec![0.0; m];
        (0..n)
            .map(|i| {
                for (j, term) in terms.iter_mut().enumerate() {
                    let idx = j * n + i;
                    *term = self.log_weights[idx] + self.transition.log_interp(idx, u);
                }
                log_sum_exp(terms.iter().copied())
            })
            .collect()
    }

    /// Adjoint of [`TransferOperator::apply`] acting on node masses.
    pub fn push(&self, mass: &[f64]) -> Vec<f64> {
        if self.log_space {
            let w: Vec<f64> = self.log_weights.iter().map(|l| l.exp()).collect();
            self.transition.push(&w, mass)
        } else {
            self.transition.push(&self.weights, mass)
        }
    }

    /// `‖L h - λh‖_∞ / λ` for `h = e^{log_h}`.
    pub fn eigen_residual(&self, log_lambda: f64, log_h: &[f64]) -> f64 {
        let lh = self.apply_log(log_h);
        lh.iter()
            .zip(log_h)
            .fold(0.0_f64, |m, (a, u)| m.max(((a - log_lambda).exp() - u.exp()).abs()))
    }
}

/// `L f` for a fresh operator.
pub fn apply_transfer(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    f: &[f64],
) -> Result<Vec<f64>, ThermoError> {
    if f.len() != grid.len() {
        return Err(ThermoError::LengthMismatch { expected: grid.len(), got: f.len() });
    }
    Ok(TransferOperator::new(sys, potential, grid, beta)?.apply(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Power,
    Discounted,
}

/// Leading eigenvalue and eigenfunction of `L_{βA}`, stored in log form.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub beta: f64,
    pub log_lambda: f64,
    /// `log h`, with `max log h = 0`
    pub log_h: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub log_space: bool,
    pub method: EigenMethod,
}

impl EigenPair {
    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn h(&self) -> Vec<f64> {
        self.log_h.iter().map(|u| u.exp()).collect()
    }

    /// Largest grid difference quotient of `log h`.
    pub fn log_lipschitz(&self, grid: &Grid) -> f64 {
        self.log_h
            .windows(2)
            .fold(0.0_f64, |m, w| m.max((w[1] - w[0]).abs()))
            / grid.spacing()
    }
}

/// Power iteration `h ← L h / sup(L h)` from `h ≡ 1`.
pub fn eigen_power(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair, ThermoError> {
    let op = TransferOperator::new(sys, potential, grid, beta)?;
    eigen_power_with(&op, tol, max_iter)
}

pub fn eigen_power_with(
    op: &TransferOperator,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair, ThermoError> {
    let n = op.n_nodes();
    let mut diff = f64::INFINITY;
    if op.log_space() {
        let mut u = vec![0.0; n];
        for it in 1..=max_iter {
            let g = op.apply_log(&u);
            let s = sup(&g);
            let next: Vec<f64> = g.iter().map(|v| v - s).collect();
            diff = next.iter().zip(&u).fold(0.0_f64, |m, (a, b)| m.max((a.exp() - b.exp()).abs()));
            u = next;
            if diff < tol {
                return Ok(finish_pair(op, s, u, it, EigenMethod::Power));
            }
        }
    } else {
        let mut h = vec![1.0; n];
        for it in 1..=max_iter {
            let g = op.apply(&h);
            let s = sup(&g);
            let next: Vec<f64> = g.iter().map(|v| v / s).collect();
            diff = sup_diff(&next, &h);
            h = next;
            if diff < tol {
                let u = h.iter().map(|v| v.ln()).collect();
                return Ok(finish_pair(op, s.ln(), u, it, EigenMethod::Power));
            }
        }
    }
    Err(ThermoError::NoConvergence { solver: "power iteration", iterations: max_iter, residual: diff })
}

fn finish_pair(
    op: &TransferOperator,
    log_lambda: f64,
    log_h: Vec<f64>,
    iterations: usize,
    method: EigenMethod,
) -> EigenPair {
    let residual = op.eigen_residual(log_lambda, &log_h);
    EigenPair {
        beta: op.beta(),
        log_lambda,
        log_h,
        residual,
        iterations,
        log_space: op.log_space(),
        method,
    }
}

/// One discount level of [`eigen_discounted`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DiscountStep {
    pub s: f64,
    /// `(1 - s)·max u_s`
    pub log_lambda_raw: f64,
    /// polynomial extrapolation of the raw estimates to `s = 1`
    pub log_lambda_extrapolated: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct DiscountedEigen {
    pub pair: EigenPair,
    pub trend: Vec<DiscountStep>,
}

/// `s_k = 1 - 2^{-k}` for `k = 1..=k_max`.
pub fn dyadic_schedule(k_max: u32) -> Vec<f64> {
    (1..=k_max).map(|k| 1.0 - 0.5f64.powi(k as i32)).collect()
}

/// Inner Banach iterations stop once the oscillation of `T_s(u) - u` drops
/// below this (relative to the outer tolerance, floored at float noise).
fn inner_tolerance(tol: f64) -> f64 {
    (tol * 1e-3).max(1e-14)
}

const INNER_MAX_ITER: usize = 2_000_000;

/// Eigenpair through the fixed points `u_s` of the discounted operators
/// `T_s(u) = log L(e^{s·u})`, each an `s`-contraction in the sup norm.
///
/// Each `u_s` is written as `c + w` with `max w = 0`; since
/// `T_s(c + w) = s·c + T_s(w)` the iteration runs on `w` alone and the
/// constant is recovered as `(1 - s)·max u_s = T_s(w) - w` at the fixed point.
/// The raw estimates `(1 - s)·max u_s` carry an `O(1 - s)` bias; the returned
/// eigenvalue and eigenfunction are extrapolated to `s = 1` through the last
/// three discount levels.
pub fn eigen_discounted(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    schedule: &[f64],
    tol: f64,
) -> Result<DiscountedEigen, ThermoError> {
    let op = TransferOperator::new(sys, potential, grid, beta)?;
    eigen_discounted_with(&op, schedule, tol)
}

pub fn eigen_discounted_with(
    op: &TransferOperator,
    schedule: &[f64],
    tol: f64,
) -> Result<DiscountedEigen, ThermoError> {
    if schedule.is_empty() {
        return Err(ThermoError::BadSchedule("empty schedule".into()));
    }
    if schedule.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(ThermoError::BadSchedule("discounts must lie in (0, 1)".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ThermoError::BadSchedule("discounts must be strictly increasing".into()));
    }
    let n = op.n_nodes();
    let inner_tol = inner_tolerance(tol);
    let mut w = vec![0.0; n];
    let mut gaps: Vec<f64> = Vec::new();
    let mut raws: Vec<f64> = Vec::new();
    let mut profiles: Vec<Vec<f64>> = Vec::new();
    let mut trend = Vec::new();
    let mut total_iters = 0usize;

    for &s in schedule {
        let mut inner = 0usize;
        let log_lambda_s = loop {
            let scaled: Vec<f64> = w.iter().map(|v| s * v).collect();
            let g = op.apply_log(&scaled);
            let (lo, hi) = g
                .iter()
                .zip(&w)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                    (lo.min(a - b), hi.max(a - b))
                });
            let top = sup(&g);
            w = g.iter().map(|v| v - top).collect();
            inner += 1;
            if hi - lo < inner_tol {
                break 0.5 * (lo + hi);
            }
            if inner >= INNER_MAX_ITER {
                return Err(ThermoError::NoConvergence {
                    solver: "discounted fixed point",
                    iterations: inner,
                    residual: hi - lo,
                });
            }
        };
        total_iters += inner;
        gaps.push(1.0 - s);
        raws.push(log_lambda_s);
        profiles.push(w.clone());

        let extrapolated = extrapolate_to_zero(&gaps, &raws);
        trend.push(DiscountStep {
            s,
            log_lambda_raw: log_lambda_s,
            log_lambda_extrapolated: extrapolated,
            inner_iterations: inner,
        });
        let k = trend.len();
        if k >= 3 {
            let prev = trend[k - 2].log_lambda_extrapolated;
            // relative agreement of successive λ estimates
            if (extrapolated - prev).abs() < tol {
                let log_h = extrapolate_profiles(&gaps, &profiles);
                let pair = finish_pair(op, extrapolated, log_h, total_iters, EigenMethod::Discounted);
                return Ok(DiscountedEigen { pair, trend });
            }
        }
    }
    Err(ThermoError::ScheduleExhausted { trend })
}

/// Lagrange weights at 0 for the last (up to) three abscissae.
fn lagrange_at_zero(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|a| {
            xs.iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &xb)| xb / (xb - xs[a]))
                .product()
        })
        .collect()
}

fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let start = xs.len().saturating_sub(3);
    let c = lagrange_at_zero(&xs[start..]);
    c.iter().zip(&ys[start..]).map(|(c, y)| c * y).sum()
}

fn extrapolate_profiles(xs: &[f64], profiles: &[Vec<f64>]) -> Vec<f64> {
    let start = xs.len().saturating_sub(3);
    let c = lagrange_at_zero(&xs[start..]);
    let n = profiles[0].len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| c.iter().zip(&profiles[start..]).map(|(c, p)| c * p[i]).sum())
        .collect();
    let top = sup(&out);
    out.iter_mut().for_each(|v| *v -= top);
    out
}

/// `q^β(j, x) = e^{βA(j,x)} h(φ_j(x)) / (λ h(x))`, stored as `log q^β`.
#[derive(Debug, Clone)]
pub struct NormalizedWeights {
    pub beta: f64,
    log_q: JointTable,
    weights: Vec<f64>,
    /// largest `|log Σ_j p_j q^β(j, x)|` removed by the explicit
    /// renormalization step
    pub renormalization: f64,
}

impl NormalizedWeights {
    pub fn n_maps(&self) -> usize {
        self.log_q.n_maps()
    }

    pub fn n_nodes(&self) -> usize {
        self.log_q.n_nodes()
    }

    pub fn q(&self, j: usize, i: usize) -> f64 {
        self.log_q.get(j, i).exp()
    }

    pub fn log_q(&self, j: usize, i: usize) -> f64 {
        self.log_q.get(j, i)
    }

    pub fn log_table(&self) -> &JointTable {
        &self.log_q
    }

    /// `max_x |Σ_j p_j q^β(j, x) - 1|`.
    pub fn normalization_error(&self) -> f64 {
        (0..self.n_nodes())
            .map(|i| {
                let s: f64 = (0..self.n_maps()).map(|j| self.weights[j] * self.q(j, i)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `p_j q^β(j, x_i)` in letter-major order.
    pub fn transition_weights(&self) -> Vec<f64> {
        let n = self.n_nodes();
        self.log_q
            .values()
            .iter()
            .enumerate()
            .map(|(idx, l)| self.weights[idx / n] * l.exp())
            .collect()
    }
}

pub fn normalize(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    ep: &EigenPair,
) -> Result<NormalizedWeights, ThermoError> {
    let op = TransferOperator::new(sys, potential, grid, ep.beta)?;
    normalize_with(&op, sys, ep)
}

pub fn normalize_with(
    op: &TransferOperator,
    sys: &IfsSystem,
    ep: &EigenPair,
) -> Result<NormalizedWeights, ThermoError> {
    let n = op.n_nodes();
    if ep.log_h.len() != n {
        return Err(ThermoError::LengthMismatch { expected: n, got: ep.log_h.len() });
    }
    if let Some(node) = ep.log_h.iter().position(|u| !u.is_finite()) {
        return Err(ThermoError::DegenerateEigenfunction { node });
    }
    let m = sys.n_maps();
    let log_p: Vec<f64> = sys.weights().iter().map(|p| p.ln()).collect();
    let mut raw = JointTable::from_fn(m, n, |j, i| {
        let idx = j * n + i;
        op.log_weights[idx] - log_p[j] + op.transition.log_interp(idx, &ep.log_h)
            - ep.log_lambda
            - ep.log_h[i]
    });
    let mut renormalization: f64 = 0.0;
    let corrections: Vec<f64> = (0..n)
        .map(|i| {
            let c = log_sum_exp((0..m).map(|j| log_p[j] + raw.get(j, i)));
            renormalization = renormalization.max(c.abs());
            c
        })
        .collect();
    raw = JointTable::from_fn(m, n, |j, i| raw.get(j, i) - corrections[i]);
    Ok(NormalizedWeights {
        beta: ep.beta,
        log_q: raw,
        weights: sys.weights().to_vec(),
        renormalization,
    })
}

/// Node masses of the Gibbs probability `ρ_{βA}`, kept both linearly and
/// as logarithms so that exponentially small masses stay resolvable.
#[derive(Debug, Clone)]
pub struct GibbsMeasure {
    pub beta: f64,
    pub mass: Vec<f64>,
    pub log_mass: Vec<f64>,
    pub iterations: usize,
    /// `‖ρ - Mρ‖_∞`, i.e. the invariance defect tested on the hat-function
    /// basis of the grid
    pub residual: f64,
}

impl GibbsMeasure {
    fn nodes_within(&self, grid: &Grid, x: f64, r: f64, closed: bool) -> impl Iterator<Item = usize> + '_ {
        let grid = *grid;
        (0..self.mass.len()).filter(move |&i| {
            let d = (grid.point(i) - x).abs();
            if closed {
                d <= r
            } else {
                d < r
            }
        })
    }

    /// `ρ(B(x, r))` over nodes with `|x_i - x| < r`.
    pub fn ball(&self, grid: &Grid, x: f64, r: f64) -> f64 {
        self.nodes_within(grid, x, r, false).map(|i| self.mass[i]).sum()
    }

    /// `log ρ(B(x, r))`, accumulated in log space; `-inf` for an empty ball.
    pub fn log_ball(&self, grid: &Grid, x: f64, r: f64, closed: bool) -> f64 {
        log_sum_exp(self.nodes_within(grid, x, r, closed).map(|i| self.log_mass[i]))
    }

    /// `log ∫ e^{βf} dρ`.
    pub fn log_exp_integral(&self, grid: &Grid, f: impl Fn(f64) -> f64, beta: f64) -> f64 {
        log_sum_exp(
            self.log_mass
                .iter()
                .enumerate()
                .map(|(i, m)| m + beta * f(grid.point(i))),
        )
    }
}

/// `ρ(B(x, r))` (open ball on node centres).
pub fn measure_ball(rho: &GibbsMeasure, grid: &Grid, x: f64, r: f64) -> f64 {
    rho.ball(grid, x, r)
}

/// `log ∫ e^{βf} dρ`, computed in log-sum-exp form.
pub fn measure_exp_integral(
    rho: &GibbsMeasure,
    grid: &Grid,
    f: impl Fn(f64) -> f64,
    beta: f64,
) -> f64 {
    rho.log_exp_integral(grid, f, beta)
}

/// Relative change of log-masses below which the log-space polish stops.
const LOG_MASS_TOL: f64 = 1e-10;

/// Invariant probability of the normalized dual operator, by iterating the
/// measure push from uniform mass until the L1 change drops below `tol`,
/// then continuing in log space until every log-mass has settled.
pub fn gibbs_measure(
    sys: &IfsSystem,
    grid: &Grid,
    qw: &NormalizedWeights,
    tol: f64,
    max_iter: usize,
) -> Result<GibbsMeasure, ThermoError> {
    let transition = Transition::new(sys, grid);
    let weights = qw.transition_weights();
    let n = grid.len();
    let mut mass = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut next = transition.push(&weights, &mass);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|m| *m /= total);
        change = next.iter().zip(&mass).map(|(a, b)| (a - b).abs()).sum();
        mass = next;
        iterations += 1;
        if change < tol {
            break;
        }
    }
    if change >= tol {
        return Err(ThermoError::NoConvergence { solver: "Gibbs push", iterations, residual: change });
    }

    let incoming = log_push_table(&transition, qw);
    let mut log_mass: Vec<f64> = mass.iter().map(|m| m.ln()).collect();
    loop {
        let mut next: Vec<f64> = incoming
            .iter()
            .map(|terms| log_sum_exp(terms.iter().map(|&(i, lw)| lw + log_mass[i])))
            .collect();
        let total = log_sum_exp(next.iter().copied());
        next.iter_mut().for_each(|m| *m -= total);
        let settle = next.iter().zip(&log_mass).fold(0.0_f64, |acc, (a, b)| {
            if a == b {
                acc
            } else {
                acc.max((a - b).abs())
            }
        });
        log_mass = next;
        iterations += 1;
        if settle < LOG_MASS_TOL {
            break;
        }
        if iterations >= max_iter {
            return Err(ThermoError::NoConvergence {
                solver: "Gibbs log-space push",
                iterations,
                residual: settle,
            });
        }
    }
    let mass: Vec<f64> = log_mass.iter().map(|l| l.exp()).collect();
    let pushed = transition.push(&weights, &mass);
    let residual = sup_diff(&pushed, &mass);
    Ok(GibbsMeasure { beta: qw.beta, mass, log_mass, iterations, residual })
}

/// For each target node, `(source, log weight)` of every deposit the push
/// makes into it.
fn log_push_table(transition: &Transition, qw: &NormalizedWeights) -> Vec<Vec<(usize, f64)>> {
    let n = transition.n;
    let mut incoming = vec![Vec::new(); n];
    for j in 0..transition.n_maps {
        let lp = qw.weights[j].ln();
        for i in 0..n {
            let (k, t) = transition.cell(j, i);
            let lw = lp + qw.log_q(j, i);
            if t == 0.0 {
                incoming[k].push((i, lw));
            } else {
                incoming[k].push((i, lw + (1.0 - t).ln()));
                incoming[k + 1].push((i, lw + t.ln()));
            }
        }
    }
    incoming
}

/// `P(βA) = log λ_{βA}`.
pub fn pressure(ep: &EigenPair) -> f64 {
    ep.log_lambda
}

/// Joint law `π(j, x_i) = p_j q^β(j, x_i) ρ(x_i)`.
#[derive(Debug, Clone)]
pub struct HolonomicLift {
    joint: JointTable,
    /// sup over hat functions `g` of `|∫ g(x) dπ - ∫ g(φ_j(x)) dπ|`
    pub holonomy_residual: f64,
}

impl HolonomicLift {
    pub fn mass(&self, j: usize, i: usize) -> f64 {
        self.joint.get(j, i)
    }

    pub fn table(&self) -> &JointTable {
        &self.joint
    }

    /// Marginal on the nodes.
    pub fn x_marginal(&self) -> Vec<f64> {
        (0..self.joint.n_nodes())
            .map(|i| (0..self.joint.n_maps()).map(|j| self.joint.get(j, i)).sum())
            .collect()
    }

    /// Marginal on the letters.
    pub fn j_marginal(&self) -> Vec<f64> {
        (0..self.joint.n_maps()).map(|j| self.joint.row(j).iter().sum()).collect()
    }
}

pub fn holonomic_lift(
    sys: &IfsSystem,
    grid: &Grid,
    qw: &NormalizedWeights,
    rho: &GibbsMeasure,
) -> HolonomicLift {
    let n = grid.len();
    let joint = JointTable::from_fn(sys.n_maps(), n, |j, i| {
        sys.weights()[j] * qw.q(j, i) * rho.mass[i]
    });
    let transition = Transition::new(sys, grid);
    // ∫ g(φ_j(x)) dπ for every hat g: push unit node mass with weights π
    let pushed = transition.push(joint.values(), &vec![1.0; n]);
    let marginal: Vec<f64> =
        (0..n).map(|i| (0..sys.n_maps()).map(|j| joint.get(j, i)).sum()).collect();
    let holonomy_residual = sup_diff(&pushed, &marginal);
    HolonomicLift { joint, holonomy_residual }
}

/// `H_ν(π) = -Σ π(j, x) log q^β(j, x)`.
pub fn entropy(lift: &HolonomicLift, qw: &NormalizedWeights) -> f64 {
    let mut h = 0.0;
    for j in 0..qw.n_maps() {
        for i in 0..qw.n_nodes() {
            let m = lift.mass(j, i);
            if m > 0.0 {
                h -= m * qw.log_q(j, i);
            }
        }
    }
    h
}

/// Both sides of `log λ = ∫ βA dπ + H_ν(π)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PressureIdentity {
    pub pressure: f64,
    pub energy: f64,
    pub entropy: f64,
    pub residual: f64,
}

pub fn pressure_identity(
    potential_table: &JointTable,
    ep: &EigenPair,
    lift: &HolonomicLift,
    qw: &NormalizedWeights,
) -> PressureIdentity {
    let energy: f64 = lift
        .table()
        .values()
        .iter()
        .zip(potential_table.values())
        .map(|(m, a)| m * ep.beta * a)
        .sum();
    let h = entropy(lift, qw);
    let p = pressure(ep);
    PressureIdentity { pressure: p, energy, entropy: h, residual: (p - (energy + h)).abs() }
}

/// Solver settings shared by the finite-temperature pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermoSettings {
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub gibbs_tol: f64,
    pub gibbs_max_iter: usize,
}

impl Default for ThermoSettings {
    fn default() -> Self {
        Self { eigen_tol: 1e-13, eigen_max_iter: 1_000_000, gibbs_tol: 1e-14, gibbs_max_iter: 1_000_000 }
    }
}

/// Everything the finite-temperature side produces at one `β`.
#[derive(Debug, Clone)]
pub struct ThermoState {
    pub eigen: EigenPair,
    pub weights: NormalizedWeights,
    pub gibbs: GibbsMeasure,
    pub lift: HolonomicLift,
    pub identity: PressureIdentity,
}

pub fn solve_thermo(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    settings: &ThermoSettings,
) -> Result<ThermoState, ThermoError> {
    solve_thermo_method(sys, potential, grid, beta, settings, EigenMethod::Power)
}

/// Discounted eigen-solves use `s_k = 1 - 2^{-k}` up to this `k`.
pub const DISCOUNT_K_MAX: u32 = 16;

/// [`solve_thermo`] with an explicit eigen-solver.
pub fn solve_thermo_method(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    settings: &ThermoSettings,
    method: EigenMethod,
) -> Result<ThermoState, ThermoError> {
    let op = TransferOperator::new(sys, potential, grid, beta)?;
    let eigen = match method {
        EigenMethod::Power => eigen_power_with(&op, settings.eigen_tol, settings.eigen_max_iter)?,
        EigenMethod::Discounted => {
            // extrapolated estimates are not better than ~1e-10
            let tol = settings.eigen_tol.max(1e-10);
            eigen_discounted_with(&op, &dyadic_schedule(DISCOUNT_K_MAX), tol)?.pair
        }
    };
    let weights = normalize_with(&op, sys, &eigen)?;
    let gibbs = gibbs_measure(sys, grid, &weights, settings.gibbs_tol, settings.gibbs_max_iter)?;
    let lift = holonomic_lift(sys, grid, &weights, &gibbs);
    let identity = pressure_identity(&potential.sample(grid), &eigen, &lift, &weights);
    Ok(ThermoState { eigen, weights, gibbs, lift, identity })
}

/// `|log λ - (∫ βA dπ + H_ν(π))|` for the full pipeline at `β`.
pub fn pressure_identity_residual(
    sys: &IfsSystem,
    potential: &Potential,
    grid: &Grid,
    beta: f64,
    settings: &ThermoSettings,
) -> Result<f64, ThermoError> {
    Ok(solve_thermo(sys, potential, grid, beta, settings)?.identity.residual)
}
