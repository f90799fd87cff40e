//! Planar geometry shared by the simulator, label extraction, and baselines.

use serde::{Deserialize, Serialize};

/// Rigid motion `p -> R(angle) p + translation` in workspace coordinates.
///
/// The rotation acts on raw `(x, y)` workspace coordinates (rows downward),
/// i.e. it is the usual matrix `[[cos, -sin], [sin, cos]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for RigidTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform2D {
    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn new(angle: f64, tx: f64, ty: f64) -> Self {
        Self { angle, tx, ty }
    }

    /// Rotation by `angle` about `(cx, cy)` followed by a translation.
    pub fn about(angle: f64, cx: f64, cy: f64, shift: (f64, f64)) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            angle,
            tx: cx - (c * cx - s * cy) + shift.0,
            ty: cy - (s * cx + c * cy) + shift.1,
        }
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (c * x - s * y + self.tx, s * x + c * y + self.ty)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.angle.sin_cos();
        Self {
            angle: -self.angle,
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform2D) -> Self {
        let (tx, ty) = self.apply((first.tx, first.ty));
        Self {
            angle: self.angle + first.angle,
            tx,
            ty,
        }
    }
}

pub fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// A segment swept by a disk: all points within `radius` of `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
}

impl Capsule {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        dist_to_segment(p, self.a, self.b) <= self.radius
    }

    /// Intersection with the horizontal line `y`, as an `x` interval.
    pub fn row_span(&self, y: f64) -> Option<(f64, f64)> {
        let r = self.radius;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(cx, cy) in &[self.a, self.b] {
            let dy = y - cy;
            if dy.abs() <= r {
                let h = (r * r - dy * dy).sqrt();
                lo = lo.min(cx - h);
                hi = hi.max(cx + h);
            }
        }
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len > 1e-12 {
            // Slab: 0 <= u.(p - a) <= len and |n.(p - a)| <= r, each linear in x.
            let (ux, uy) = (dx / len, dy / len);
            let (nx, ny) = (-uy, ux);
            let ry = y - self.a.1;
            let mut slab_lo = f64::NEG_INFINITY;
            let mut slab_hi = f64::INFINITY;
            let mut feasible = true;
            let mut constrain = |coef: f64, offset: f64, lo_b: f64, hi_b: f64| {
                // lo_b <= coef * x' + offset <= hi_b with x' = x - a.x
                if coef.abs() < 1e-12 {
                    if offset < lo_b || offset > hi_b {
                        feasible = false;
                    }
                } else {
                    let (p, q) = ((lo_b - offset) / coef, (hi_b - offset) / coef);
                    slab_lo = slab_lo.max(p.min(q));
                    slab_hi = slab_hi.min(p.max(q));
                }
            };
            constrain(ux, uy * ry, 0.0, len);
            constrain(nx, ny * ry, -r, r);
            if feasible && slab_lo <= slab_hi {
                lo = lo.min(slab_lo + self.a.0);
                hi = hi.max(slab_hi + self.a.0);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Vertical extent.
    pub fn y_range(&self) -> (f64, f64) {
        (
            self.a.1.min(self.b.1) - self.radius,
            self.a.1.max(self.b.1) + self.radius,
        )
    }

    pub fn x_range(&self) -> (f64, f64) {
        (
            self.a.0.min(self.b.0) - self.radius,
            self.a.0.max(self.b.0) + self.radius,
        )
    }
}
