use std::fmt;
use std::ops::{Add, BitOr};

use serde::{Serialize, Serializer};

/// An element of `R ∪ {-∞}` with `⊕ = max` and `⊙ = +`.
///
/// `a | b` is `a ⊕ b` and `a + b` is `a ⊙ b`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MaxPlusValue(f64);

impl MaxPlusValue {
    pub const BOTTOM: Self = Self(f64::NEG_INFINITY);
    pub const ZERO: Self = Self(0.0);

    /// Panics on NaN or `+∞`.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan() && v != f64::INFINITY, "not an element of R_max: {v}");
        Self(v)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_bottom(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn oplus(self, other: Self) -> Self {
        Self(self.0.max(other.0))
    }

    pub fn otimes(self, other: Self) -> Self {
        if self.is_bottom() || other.is_bottom() {
            Self::BOTTOM
        } else {
            Self(self.0 + other.0)
        }
    }

    /// `⊕` over an iterator; `-∞` when empty.
    pub fn sum(values: impl IntoIterator<Item = Self>) -> Self {
        values.into_iter().fold(Self::BOTTOM, Self::oplus)
    }
}

impl From<f64> for MaxPlusValue {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl BitOr for MaxPlusValue {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        self.oplus(rhs)
    }
}

impl Add for MaxPlusValue {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.otimes(rhs)
    }
}

impl fmt::Display for MaxPlusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bottom() {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for MaxPlusValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_bottom() {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}
