//! Planar points and angle helpers shared by every module.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (other - self).norm()
    }

    /// Direction of the vector in degrees, in `[0, 360)`.
    pub fn bearing_deg(self) -> f64 {
        let deg = self.y.atan2(self.x).to_degrees();
        if deg < 0.0 {
            deg + 360.0
        } else {
            deg
        }
    }

    /// Point at `distance` along the absolute direction `deg`.
    pub fn offset(self, deg: f64, distance: f64) -> Point {
        let (c, s) = unit(deg);
        Point::new(self.x + distance * c, self.y + distance * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// `(cos, sin)` of an angle in degrees, exact on multiples of 90°.
pub fn unit(deg: f64) -> (f64, f64) {
    let wrapped = deg.rem_euclid(360.0);
    if wrapped == 0.0 {
        (1.0, 0.0)
    } else if wrapped == 90.0 {
        (0.0, 1.0)
    } else if wrapped == 180.0 {
        (-1.0, 0.0)
    } else if wrapped == 270.0 {
        (0.0, -1.0)
    } else {
        let r = wrapped.to_radians();
        (r.cos(), r.sin())
    }
}

/// Signed difference `to - from` wrapped into `(-180, 180]`.
pub fn angle_diff_deg(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_is_exact_on_axes() {
        assert_eq!(unit(0.0), (1.0, 0.0));
        assert_eq!(unit(450.0), (0.0, 1.0));
        assert_eq!(unit(-90.0), (0.0, -1.0));
    }

    #[test]
    fn angle_diff_wraps() {
        assert_eq!(angle_diff_deg(350.0, 10.0), 20.0);
        assert_eq!(angle_diff_deg(10.0, 350.0), -20.0);
        assert_eq!(angle_diff_deg(0.0, 180.0), 180.0);
    }

    #[test]
    fn bearing_range() {
        assert_eq!(Point::new(0.0, -1.0).bearing_deg(), 270.0);
        assert_eq!(Point::new(1.0, 0.0).bearing_deg(), 0.0);
    }
}
