//! Forward-mode differentiable scalar with sparse partials.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::Serialize;

/// Identifier of an independent variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

/// A value together with its partial derivatives with respect to a set of
/// independent variables. Variables absent from `partials` have derivative 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffScalar {
    value: f64,
    partials: BTreeMap<VarId, f64>,
}

impl DiffScalar {
    pub fn constant(value: f64) -> Self {
        DiffScalar {
            value,
            partials: BTreeMap::new(),
        }
    }

    pub fn variable(value: f64, id: VarId) -> Self {
        DiffScalar {
            value,
            partials: BTreeMap::from([(id, 1.0)]),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn partial(&self, id: VarId) -> f64 {
        self.partials.get(&id).copied().unwrap_or(0.0)
    }

    pub fn partials(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.partials.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_constant(&self) -> bool {
        self.partials.values().all(|&d| d == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.partials.values().all(|d| d.is_finite())
    }

    /// Applies a scalar function given its value and derivative at
    /// `self.value()` (chain rule).
    pub fn map(&self, value: f64, derivative: f64) -> Self {
        DiffScalar {
            value,
            partials: self
                .partials
                .iter()
                .map(|(&k, &d)| (k, d * derivative))
                .collect(),
        }
    }

    fn combine(&self, other: &DiffScalar, value: f64, da: f64, db: f64) -> Self {
        let mut partials: BTreeMap<VarId, f64> =
            self.partials.iter().map(|(&k, &d)| (k, d * da)).collect();
        for (&k, &d) in &other.partials {
            *partials.entry(k).or_insert(0.0) += d * db;
        }
        DiffScalar { value, partials }
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.map(e, e)
    }

    pub fn ln(&self) -> Self {
        self.map(self.value.ln(), 1.0 / self.value)
    }

    pub fn powf(&self, p: f64) -> Self {
        self.map(self.value.powf(p), p * self.value.powf(p - 1.0))
    }

    pub fn recip(&self) -> Self {
        self.map(1.0 / self.value, -1.0 / (self.value * self.value))
    }
}

impl From<f64> for DiffScalar {
    fn from(v: f64) -> Self {
        DiffScalar::constant(v)
    }
}

impl fmt::Display for DiffScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)?;
        for (k, d) in &self.partials {
            write!(f, " [d/dx{}={}]", k.0, d)?;
        }
        Ok(())
    }
}

impl Add<&DiffScalar> for &DiffScalar {
    type Output = DiffScalar;
    fn add(self, rhs: &DiffScalar) -> DiffScalar {
        self.combine(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub<&DiffScalar> for &DiffScalar {
    type Output = DiffScalar;
    fn sub(self, rhs: &DiffScalar) -> DiffScalar {
        self.combine(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul<&DiffScalar> for &DiffScalar {
    type Output = DiffScalar;
    fn mul(self, rhs: &DiffScalar) -> DiffScalar {
        self.combine(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Div<&DiffScalar> for &DiffScalar {
    type Output = DiffScalar;
    fn div(self, rhs: &DiffScalar) -> DiffScalar {
        let q = self.value / rhs.value;
        self.combine(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl Add<f64> for &DiffScalar {
    type Output = DiffScalar;
    fn add(self, rhs: f64) -> DiffScalar {
        self.map(self.value + rhs, 1.0)
    }
}

impl Sub<f64> for &DiffScalar {
    type Output = DiffScalar;
    fn sub(self, rhs: f64) -> DiffScalar {
        self.map(self.value - rhs, 1.0)
    }
}

impl Mul<f64> for &DiffScalar {
    type Output = DiffScalar;
    fn mul(self, rhs: f64) -> DiffScalar {
        self.map(self.value * rhs, rhs)
    }
}

impl Div<f64> for &DiffScalar {
    type Output = DiffScalar;
    fn div(self, rhs: f64) -> DiffScalar {
        self.map(self.value / rhs, 1.0 / rhs)
    }
}

impl Neg for &DiffScalar {
    type Output = DiffScalar;
    fn neg(self) -> DiffScalar {
        self.map(-self.value, -1.0)
    }
}

macro_rules! forward_owned {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr<DiffScalar> for DiffScalar {
            type Output = DiffScalar;
            fn $method(self, rhs: DiffScalar) -> DiffScalar { (&self).$method(&rhs) }
        }
        impl $tr<&DiffScalar> for DiffScalar {
            type Output = DiffScalar;
            fn $method(self, rhs: &DiffScalar) -> DiffScalar { (&self).$method(rhs) }
        }
        impl $tr<DiffScalar> for &DiffScalar {
            type Output = DiffScalar;
            fn $method(self, rhs: DiffScalar) -> DiffScalar { self.$method(&rhs) }
        }
        impl $tr<f64> for DiffScalar {
            type Output = DiffScalar;
            fn $method(self, rhs: f64) -> DiffScalar { (&self).$method(rhs) }
        }
    )*};
}

forward_owned!(Add add, Sub sub, Mul mul, Div div);

impl Neg for DiffScalar {
    type Output = DiffScalar;
    fn neg(self) -> DiffScalar {
        -&self
    }
}

impl std::iter::Sum for DiffScalar {
    fn sum<I: Iterator<Item = DiffScalar>>(iter: I) -> Self {
        iter.fold(DiffScalar::constant(0.0), |acc, x| acc + x)
    }
}
