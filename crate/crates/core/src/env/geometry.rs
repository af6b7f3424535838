//! Oriented rectangles in the plane.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    /// Unit length axis.
    pub ax: f64,
    pub ay: f64,
    /// Half extent along the length axis.
    pub half_len: f64,
    /// Half extent along the normal.
    pub half_wid: f64,
}

impl Rect {
    pub fn new(cx: f64, cy: f64, angle: f64, half_len: f64, half_wid: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            cx,
            cy,
            ax: c,
            ay: s,
            half_len,
            half_wid,
        }
    }

    /// Unit normal (length axis rotated by +90 degrees).
    pub fn normal(&self) -> (f64, f64) {
        (-self.ay, self.ax)
    }

    fn radius_along(&self, dx: f64, dy: f64) -> f64 {
        let (nx, ny) = self.normal();
        self.half_len * (self.ax * dx + self.ay * dy).abs() + self.half_wid * (nx * dx + ny * dy).abs()
    }

    /// Separating-axis test; touching edges count as intersecting.
    pub fn intersects(&self, other: &Rect) -> bool {
        let (tx, ty) = (other.cx - self.cx, other.cy - self.cy);
        let (n1x, n1y) = self.normal();
        let (n2x, n2y) = other.normal();
        for (dx, dy) in [(self.ax, self.ay), (n1x, n1y), (other.ax, other.ay), (n2x, n2y)] {
            let dist = (tx * dx + ty * dy).abs();
            if dist > self.radius_along(dx, dy) + other.radius_along(dx, dy) {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (nx, ny) = self.normal();
        (dx * self.ax + dy * self.ay).abs() <= self.half_len && (dx * nx + dy * ny).abs() <= self.half_wid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn axis_aligned_overlap() {
        let a = Rect::new(0.0, 0.0, 0.0, 1.0, 0.5);
        assert!(a.intersects(&Rect::new(1.5, 0.0, 0.0, 0.6, 0.1)));
        assert!(!a.intersects(&Rect::new(1.7, 0.0, 0.0, 0.6, 0.1)));
        assert!(!a.intersects(&Rect::new(0.0, 0.7, 0.0, 0.6, 0.1)));
    }

    #[test]
    fn rotated_corner_case() {
        // A diamond whose corner approaches an axis-aligned square.
        let square = Rect::new(0.0, 0.0, 0.0, 1.0, 1.0);
        let half_diag = 0.5f64.sqrt();
        assert!(!square.intersects(&Rect::new(1.0 + half_diag + 0.01, 0.0, FRAC_PI_4, 0.5, 0.5)));
        assert!(square.intersects(&Rect::new(1.0 + half_diag - 0.01, 0.0, FRAC_PI_4, 0.5, 0.5)));
    }

    #[test]
    fn contains_respects_rotation() {
        let r = Rect::new(0.0, 0.0, FRAC_PI_4, 1.0, 0.1);
        assert!(r.contains(0.5, 0.5));
        assert!(!r.contains(0.5, -0.5));
    }
}
