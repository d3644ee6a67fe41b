use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::Real;

/// A point `(v, v', v'', v''')` of the phase space of the cylindrical ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylState<T> {
    pub v: T,
    pub dv: T,
    pub d2v: T,
    pub d3v: T,
}

impl<T: Real> CylState<T> {
    pub fn new(v: T, dv: T, d2v: T, d3v: T) -> Self {
        Self { v, dv, d2v, d3v }
    }

    /// The state of an orbit at its minimum: `(eps, 0, kappa, 0)`.
    pub fn at_minimum(eps: T, kappa: T) -> Self {
        Self::new(eps, T::zero(), kappa, T::zero())
    }

    pub fn constant(v: T) -> Self {
        Self::new(v, T::zero(), T::zero(), T::zero())
    }

    pub fn to_array(self) -> [T; 4] {
        [self.v, self.dv, self.d2v, self.d3v]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Time reversal `t -> -t` flips the odd derivatives.
    pub fn reflected(self) -> Self {
        Self::new(self.v, -self.dv, self.d2v, -self.d3v)
    }

    pub fn max_abs(self) -> T {
        self.v.abs().max(self.dv.abs()).max(self.d2v.abs()).max(self.d3v.abs())
    }

    pub fn norm(self) -> T {
        (self.v * self.v + self.dv * self.dv + self.d2v * self.d2v + self.d3v * self.d3v).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.v.is_finite() && self.dv.is_finite() && self.d2v.is_finite() && self.d3v.is_finite()
    }
}

impl<T: Real> Add for CylState<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.dv + o.dv, self.d2v + o.d2v, self.d3v + o.d3v)
    }
}

impl<T: Real> Sub for CylState<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.dv - o.dv, self.d2v - o.d2v, self.d3v - o.d3v)
    }
}

impl<T: Real> Mul<T> for CylState<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.v * k, self.dv * k, self.d2v * k, self.d3v * k)
    }
}
