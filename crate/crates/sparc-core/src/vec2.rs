use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A 2-vector in road coordinates: `par` runs along the road, `perp` across it.
///
/// Used for both positions (meters) and velocities (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub par: f64,
    pub perp: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { par: 0.0, perp: 0.0 };

    pub fn new(par: f64, perp: f64) -> Self {
        Self { par, perp }
    }

    /// Euclidean norm.
    pub fn norm(self) -> f64 {
        self.par.hypot(self.perp)
    }

    pub fn is_finite(self) -> bool {
        self.par.is_finite() && self.perp.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.par + rhs.par, self.perp + rhs.perp)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.par - rhs.par, self.perp - rhs.perp)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.par * s, self.perp * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.par / s, self.perp / s)
    }
}
