//! Systems of affine contractions on the unit interval, their discretizations,
//! word evaluation and Birkhoff-type sums along words.
//!
//! The state space is `X = [0, 1]` and the index set `J = {0, .., |J|-1}` is
//! finite, carrying the discrete metric. With that metric the joint
//! contraction condition
//!
//! `d(φ_{j1}(x1), φ_{j2}(x2)) <= γ [d_J(j1, j2) + d(x1, x2)]`
//!
//! reduces to two finite checks: `|slope_j| <= γ` for every map, and
//! `sup_x |φ_{j1}(x) - φ_{j2}(x)| <= γ` for every pair of distinct maps.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when comparing floating-point quantities against declared
/// bounds during validation.
const VALIDATION_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IfsError {
    #[error("invalid system: {0}")]
    Invalid(ValidationReport),
    #[error("letter {letter} is not a valid map index (alphabet size {alphabet})")]
    BadLetter { letter: usize, alphabet: usize },
    #[error("words must contain at least one letter")]
    EmptyWord,
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("potential is defined for {potential} maps but the system has {system}")]
    PotentialArity { potential: usize, system: usize },
    #[error("malformed potential: {0}")]
    BadPotential(String),
    #[error("declared Lipschitz bound {declared} is below the actual constant {actual}")]
    LipschitzBound { declared: f64, actual: f64 },
    #[error("symbolic depth must be at least 1")]
    ZeroDepth,
    #[error("periodic tail of an address must be non-empty")]
    EmptyPeriod,
}

/// One affine map `x ↦ slope·x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub slope: f64,
    pub offset: f64,
}

impl MapSpec {
    pub fn new(slope: f64, offset: f64) -> Self {
        Self { slope, offset }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }

    /// Image of `[0, 1]` as `(lo, hi)`.
    pub fn image(&self) -> (f64, f64) {
        let a = self.offset;
        let b = self.slope + self.offset;
        (a.min(b), a.max(b))
    }

    /// Unique fixed point. Requires `slope != 1`.
    pub fn fixed_point(&self) -> f64 {
        self.offset / (1.0 - self.slope)
    }
}

/// A single inequality that failed during validation, with its witnesses.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptySystem,
    LengthMismatch { maps: usize, weights: usize },
    GammaOutOfRange { gamma: f64 },
    NonPositiveWeight { index: usize, weight: f64 },
    WeightsNotNormalized { sum: f64 },
    NonFinite { map: usize },
    SlopeExceedsGamma { map: usize, slope: f64, gamma: f64 },
    ImageOutsideUnit { map: usize, lo: f64, hi: f64 },
    CrossDistanceExceedsGamma { map_a: usize, map_b: usize, distance: f64, gamma: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySystem => write!(f, "system has no maps"),
            Violation::LengthMismatch { maps, weights } => {
                write!(f, "{maps} maps but {weights} weights")
            }
            Violation::GammaOutOfRange { gamma } => {
                write!(f, "gamma = {gamma} is not in (0, 1)")
            }
            Violation::NonPositiveWeight { index, weight } => {
                write!(f, "weight {index} = {weight} is not positive (reference measure must have full support)")
            }
            Violation::WeightsNotNormalized { sum } => {
                write!(f, "weights sum to {sum}, expected 1 within 1e-12")
            }
            Violation::NonFinite { map } => write!(f, "map {map} has a non-finite coefficient"),
            Violation::SlopeExceedsGamma { map, slope, gamma } => {
                write!(f, "map {map}: |slope| = {} > gamma = {gamma}", slope.abs())
            }
            Violation::ImageOutsideUnit { map, lo, hi } => {
                write!(f, "map {map}: image [{lo}, {hi}] is not contained in [0, 1]")
            }
            Violation::CrossDistanceExceedsGamma { map_a, map_b, distance, gamma } => write!(
                f,
                "maps {map_a} and {map_b}: sup |φ_a - φ_b| = {distance} > gamma = {gamma}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A finite family of affine contractions with a fully supported reference
/// probability on the index set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IfsSystem {
    maps: Vec<MapSpec>,
    weights: Vec<f64>,
    gamma: f64,
}

impl IfsSystem {
    /// Builds and validates a system.
    pub fn new(maps: Vec<MapSpec>, weights: Vec<f64>, gamma: f64) -> Result<Self, IfsError> {
        let sys = Self::from_parts_unchecked(maps, weights, gamma);
        let report = validate_system(&sys);
        if report.is_valid() {
            Ok(sys)
        } else {
            Err(IfsError::Invalid(report))
        }
    }

    /// Builds a system without validation; pair with [`validate_system`].
    pub fn from_parts_unchecked(maps: Vec<MapSpec>, weights: Vec<f64>, gamma: f64) -> Self {
        Self { maps, weights, gamma }
    }

    /// `φ_0(x) = x/2`, `φ_1(x) = x/2 + 1/2` with equal weights and `γ = 1/2`.
    pub fn binary() -> Self {
        Self::new(
            vec![MapSpec::new(0.5, 0.0), MapSpec::new(0.5, 0.5)],
            vec![0.5, 0.5],
            0.5,
        )
        .expect("binary system is valid")
    }

    pub fn maps(&self) -> &[MapSpec] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    /// `φ(j, x) = φ_j(x)`.
    #[inline]
    pub fn apply(&self, j: usize, x: f64) -> f64 {
        self.maps[j].apply(x)
    }

    pub fn check_word(&self, w: &Word) -> Result<(), IfsError> {
        match w.letters().iter().find(|&&j| j >= self.n_maps()) {
            Some(&letter) => Err(IfsError::BadLetter { letter, alphabet: self.n_maps() }),
            None => Ok(()),
        }
    }
}

/// Checks every structural invariant of `sys` and lists each violation.
pub fn validate_system(sys: &IfsSystem) -> ValidationReport {
    let mut violations = Vec::new();
    let gamma = sys.gamma;
    if sys.maps.is_empty() {
        violations.push(Violation::EmptySystem);
    }
    if sys.maps.len() != sys.weights.len() {
        violations.push(Violation::LengthMismatch {
            maps: sys.maps.len(),
            weights: sys.weights.len(),
        });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        violations.push(Violation::GammaOutOfRange { gamma });
    }
    for (index, &weight) in sys.weights.iter().enumerate() {
        if !(weight > 0.0) || !weight.is_finite() {
            violations.push(Violation::NonPositiveWeight { index, weight });
        }
    }
    let sum: f64 = sys.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        violations.push(Violation::WeightsNotNormalized { sum });
    }
    for (map, m) in sys.maps.iter().enumerate() {
        if !m.slope.is_finite() || !m.offset.is_finite() {
            violations.push(Violation::NonFinite { map });
            continue;
        }
        if m.slope.abs() > gamma + VALIDATION_SLACK {
            violations.push(Violation::SlopeExceedsGamma { map, slope: m.slope, gamma });
        }
        let (lo, hi) = m.image();
        if lo < -VALIDATION_SLACK || hi > 1.0 + VALIDATION_SLACK {
            violations.push(Violation::ImageOutsideUnit { map, lo, hi });
        }
    }
    for a in 0..sys.maps.len() {
        for b in (a + 1)..sys.maps.len() {
            let (ma, mb) = (sys.maps[a], sys.maps[b]);
            // affine difference: extremes at the endpoints
            let at0 = (ma.offset - mb.offset).abs();
            let at1 = (ma.apply(1.0) - mb.apply(1.0)).abs();
            let distance = at0.max(at1);
            if distance > gamma + VALIDATION_SLACK {
                violations.push(Violation::CrossDistanceExceedsGamma {
                    map_a: a,
                    map_b: b,
                    distance,
                    gamma,
                });
            }
        }
    }
    // shape problems first, then weights, then per-map checks
    violations.sort_by_key(|v| match v {
        Violation::EmptySystem | Violation::LengthMismatch { .. } => 0,
        Violation::GammaOutOfRange { .. } => 1,
        Violation::NonPositiveWeight { .. } | Violation::WeightsNotNormalized { .. } => 2,
        _ => 3,
    });
    ValidationReport { violations }
}

/// How a potential `A(j, x)` is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `A(j, x) = values[j]`.
    ConstantPerMap { values: Vec<f64> },
    /// `A(j, x) = intercepts[j] + slopes[j]·x`.
    AffinePerMap { intercepts: Vec<f64>, slopes: Vec<f64> },
    /// `A(j, ·)` is the piecewise-linear interpolant of `table[j]` on
    /// uniformly spaced knots over `[0, 1]`.
    Tabulated { table: Vec<Vec<f64>> },
}

/// A Lipschitz function on `J × [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    kind: PotentialKind,
    lip_bound: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Result<Self, IfsError> {
        let lip_bound = exact_lipschitz(&kind)?;
        Ok(Self { kind, lip_bound })
    }

    /// Like [`Potential::new`] but keeps a user-declared Lipschitz bound,
    /// which must dominate the actual constant.
    pub fn with_declared_lip(kind: PotentialKind, declared: f64) -> Result<Self, IfsError> {
        let actual = exact_lipschitz(&kind)?;
        if declared + VALIDATION_SLACK < actual {
            return Err(IfsError::LipschitzBound { declared, actual });
        }
        Ok(Self { kind, lip_bound: declared })
    }

    pub fn constant(values: Vec<f64>) -> Self {
        Self::new(PotentialKind::ConstantPerMap { values }).expect("finite constants")
    }

    pub fn affine(intercepts: Vec<f64>, slopes: Vec<f64>) -> Result<Self, IfsError> {
        Self::new(PotentialKind::AffinePerMap { intercepts, slopes })
    }

    pub fn tabulated(table: Vec<Vec<f64>>) -> Result<Self, IfsError> {
        Self::new(PotentialKind::Tabulated { table })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn lip_bound(&self) -> f64 {
        self.lip_bound
    }

    pub fn n_maps(&self) -> usize {
        match &self.kind {
            PotentialKind::ConstantPerMap { values } => values.len(),
            PotentialKind::AffinePerMap { intercepts, .. } => intercepts.len(),
            PotentialKind::Tabulated { table } => table.len(),
        }
    }

    /// True when `A(j, x)` does not depend on `x`.
    pub fn is_constant_per_map(&self) -> bool {
        match &self.kind {
            PotentialKind::ConstantPerMap { .. } => true,
            PotentialKind::AffinePerMap { slopes, .. } => slopes.iter().all(|&s| s == 0.0),
            PotentialKind::Tabulated { table } => {
                table.iter().all(|row| row.iter().all(|&v| v == row[0]))
            }
        }
    }

    /// Per-map constants when the potential is constant per map.
    pub fn constants(&self) -> Option<Vec<f64>> {
        if !self.is_constant_per_map() {
            return None;
        }
        Some((0..self.n_maps()).map(|j| self.value(j, 0.0)).collect())
    }

    pub fn check_arity(&self, sys: &IfsSystem) -> Result<(), IfsError> {
        if self.n_maps() != sys.n_maps() {
            return Err(IfsError::PotentialArity { potential: self.n_maps(), system: sys.n_maps() });
        }
        Ok(())
    }

    pub fn value(&self, j: usize, x: f64) -> f64 {
        match &self.kind {
            PotentialKind::ConstantPerMap { values } => values[j],
            PotentialKind::AffinePerMap { intercepts, slopes } => intercepts[j] + slopes[j] * x,
            PotentialKind::Tabulated { table } => interpolate_uniform(&table[j], x),
        }
    }

    /// `A + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let kind = match &self.kind {
            PotentialKind::ConstantPerMap { values } => PotentialKind::ConstantPerMap {
                values: values.iter().map(|v| v + c).collect(),
            },
            PotentialKind::AffinePerMap { intercepts, slopes } => PotentialKind::AffinePerMap {
                intercepts: intercepts.iter().map(|v| v + c).collect(),
                slopes: slopes.clone(),
            },
            PotentialKind::Tabulated { table } => PotentialKind::Tabulated {
                table: table.iter().map(|row| row.iter().map(|v| v + c).collect()).collect(),
            },
        };
        Self { kind, lip_bound: self.lip_bound }
    }

    /// `A(j, x_i)` at every grid node.
    pub fn sample(&self, grid: &Grid) -> JointTable {
        JointTable::from_fn(self.n_maps(), grid.len(), |j, i| self.value(j, grid.point(i)))
    }

    /// `max_{j, x} |A(j, x)|`, exact for every supported kind.
    pub fn sup_abs(&self) -> f64 {
        match &self.kind {
            PotentialKind::ConstantPerMap { values } => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
            PotentialKind::AffinePerMap { intercepts, slopes } => intercepts
                .iter()
                .zip(slopes)
                .fold(0.0, |m, (a, b)| m.max(a.abs()).max((a + b).abs())),
            PotentialKind::Tabulated { table } => {
                table.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    }
}

fn exact_lipschitz(kind: &PotentialKind) -> Result<f64, IfsError> {
    let finite = |v: &f64| v.is_finite();
    match kind {
        PotentialKind::ConstantPerMap { values } => {
            if values.is_empty() || !values.iter().all(finite) {
                return Err(IfsError::BadPotential("constants must be finite and non-empty".into()));
            }
            Ok(0.0)
        }
        PotentialKind::AffinePerMap { intercepts, slopes } => {
            if intercepts.is_empty() || intercepts.len() != slopes.len() {
                return Err(IfsError::BadPotential(
                    "affine potential needs one intercept and one slope per map".into(),
                ));
            }
            if !intercepts.iter().chain(slopes).all(finite) {
                return Err(IfsError::BadPotential("non-finite affine coefficient".into()));
            }
            Ok(slopes.iter().fold(0.0, |m, s| m.max(s.abs())))
        }
        PotentialKind::Tabulated { table } => {
            if table.is_empty() {
                return Err(IfsError::BadPotential("empty table".into()));
            }
            let mut lip: f64 = 0.0;
            for row in table {
                if row.len() < 2 {
                    return Err(IfsError::BadPotential("each table row needs >= 2 knots".into()));
                }
                if !row.iter().all(finite) {
                    return Err(IfsError::BadPotential("non-finite table value".into()));
                }
                let step = 1.0 / (row.len() - 1) as f64;
                for w in row.windows(2) {
                    lip = lip.max((w[1] - w[0]).abs() / step);
                }
            }
            Ok(lip)
        }
    }
}

fn interpolate_uniform(knots: &[f64], x: f64) -> f64 {
    let segments = knots.len() - 1;
    let pos = x.clamp(0.0, 1.0) * segments as f64;
    let k = (pos.floor() as usize).min(segments - 1);
    let t = pos - k as f64;
    knots[k] * (1.0 - t) + knots[k + 1] * t
}

/// Values indexed by `(letter j, grid node i)`, stored letter-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    n_maps: usize,
    n: usize,
    values: Vec<f64>,
}

impl JointTable {
    pub fn from_fn(n_maps: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_maps * n);
        for j in 0..n_maps {
            for i in 0..n {
                values.push(f(j, i));
            }
        }
        Self { n_maps, n, values }
    }

    pub fn n_maps(&self) -> usize {
        self.n_maps
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n_maps: self.n_maps, n: self.n, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `max_j` at every node.
    pub fn max_over_letters(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n_maps).map(|j| self.get(j, i)).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Uniform grid `x_i = i / (n - 1)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    n_points: usize,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self, IfsError> {
        if n_points < 2 {
            return Err(IfsError::GridTooSmall(n_points));
        }
        Ok(Self { n_points })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        i as f64 / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Left node and barycentric weight of the right node for linear
    /// interpolation at `y`.
    #[inline]
    pub fn locate(&self, y: f64) -> (usize, f64) {
        let last = self.n_points - 1;
        let pos = y.clamp(0.0, 1.0) * last as f64;
        let k = (pos.floor() as usize).min(last - 1);
        let t = (pos - k as f64).clamp(0.0, 1.0);
        (k, t)
    }

    /// Nearest node; exact ties go to the even index.
    #[inline]
    pub fn nearest(&self, y: f64) -> usize {
        let last = self.n_points - 1;
        let pos = (y.clamp(0.0, 1.0) * last as f64).round_ties_even();
        (pos as usize).min(last)
    }

    /// Piecewise-linear evaluation of grid values at `y`.
    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        let (k, t) = self.locate(y);
        if t == 0.0 {
            values[k]
        } else {
            values[k] * (1.0 - t) + values[k + 1] * t
        }
    }
}

/// A finite word `(j_1, .., j_n)` over the index set, `n >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Result<Self, IfsError> {
        if letters.is_empty() {
            return Err(IfsError::EmptyWord);
        }
        Ok(Self(letters))
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `u ⧺ v`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }
}

/// `φ_{j_1} ∘ … ∘ φ_{j_n}(x)`: the last letter is applied first.
pub fn eval_word(sys: &IfsSystem, w: &Word, x: f64) -> f64 {
    w.letters().iter().rev().fold(x, |p, &j| sys.apply(j, p))
}

/// `A(j_1, φ_{(j_2..j_n)}(x)) + … + A(j_n, x) - n·m_a`.
pub fn word_sum(sys: &IfsSystem, a: &Potential, w: &Word, x: f64, m_a: f64) -> f64 {
    let mut p = x;
    let mut total = 0.0;
    for &j in w.letters().iter().rev() {
        total += a.value(j, p);
        p = sys.apply(j, p);
    }
    total - w.len() as f64 * m_a
}

/// An eventually periodic infinite address `prefix · period^∞`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Address {
    pub prefix: Vec<usize>,
    pub period: Vec<usize>,
}

impl Address {
    pub fn new(prefix: Vec<usize>, period: Vec<usize>) -> Result<Self, IfsError> {
        if period.is_empty() {
            return Err(IfsError::EmptyPeriod);
        }
        Ok(Self { prefix, period })
    }

    /// The `k`-th letter (0-based).
    pub fn letter(&self, k: usize) -> usize {
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.period[(k - self.prefix.len()) % self.period.len()]
        }
    }
}

/// Full shift on `|J|` letters truncated at a finite depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolicSpace {
    alphabet: usize,
    depth: usize,
}

impl SymbolicSpace {
    pub fn new(alphabet: usize, depth: usize) -> Result<Self, IfsError> {
        if depth == 0 {
            return Err(IfsError::ZeroDepth);
        }
        Ok(Self { alphabet, depth })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `|J|^depth`, or `None` on overflow.
    pub fn cylinder_count(&self) -> Option<usize> {
        u32::try_from(self.depth).ok().and_then(|d| self.alphabet.checked_pow(d))
    }

    /// Letters of the cylinder with lexicographic index `idx` (first letter
    /// most significant).
    pub fn cylinder(&self, mut idx: usize) -> Vec<usize> {
        let mut letters = vec![0; self.depth];
        for slot in letters.iter_mut().rev() {
            *slot = idx % self.alphabet;
            idx /= self.alphabet;
        }
        letters
    }
}

/// The coding map `π(ω) = lim_n φ_{j_1} ∘ … ∘ φ_{j_n}(x)`, evaluated by
/// truncating the address once `γ^n` drops below `1e-14`.
pub fn coding_point(sys: &IfsSystem, address: &Address) -> f64 {
    let gamma = sys.gamma();
    let mut n = 1usize;
    let mut diam = gamma;
    while diam >= 1e-14 {
        diam *= gamma;
        n += 1;
    }
    let n = n.max(address.prefix.len() + address.period.len());
    (0..n).rev().fold(0.0, |p, k| sys.apply(address.letter(k), p))
}
