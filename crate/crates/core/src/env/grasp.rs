//! Planar parallel-gripper grasping on extruded 2D shapes.
//!
//! Each shape is a union of rectangular limbs. A grasp at `(x, y, alpha)`
//! closes along `e = (cos alpha, sin alpha)` and succeeds when some limb
//!
//! 1. fills at least `presence` of the claw width across the window,
//! 2. has its centerline within `center_margin * limb width` of the gripper
//!    center,
//! 3. has its cross-section normal within `angle_margin` of the closing axis,
//!
//! and neither claw footprint touches any limb of the shape.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::geometry::Rect;
use crate::models::action::{POSE_CENTER, POSE_CENTER_GAIN, POSE_ROTATION, POSE_SCALE};
use crate::error::Error;
use crate::models::action::NormAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeKind {
    H,
    Eight,
    T,
    Spoon,
    Box,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [Self::H, Self::Eight, Self::T, Self::Spoon, Self::Box];
    /// Shapes drawn during training; `Box` is held out for testing.
    pub const TRAINING: [ShapeKind; 4] = [Self::H, Self::Eight, Self::T, Self::Spoon];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::H => "H",
            Self::Eight => "Eight",
            Self::T => "T",
            Self::Spoon => "Spoon",
            Self::Box => "Box",
        }
    }

    /// Sampling ranges of limb width and the two length parameters.
    pub fn geometry_ranges(self) -> [(f64, f64); 3] {
        match self {
            Self::H => [(0.03, 0.05), (0.30, 0.42), (0.24, 0.34)],
            Self::Eight => [(0.03, 0.045), (0.34, 0.44), (0.20, 0.30)],
            Self::T => [(0.03, 0.05), (0.28, 0.40), (0.28, 0.40)],
            Self::Spoon => [(0.025, 0.04), (0.28, 0.40), (0.06, 0.08)],
            Self::Box => [(0.03, 0.05), (0.24, 0.36), (0.24, 0.36)],
        }
    }

    pub fn canonical_geometry(self) -> [f64; 3] {
        match self {
            Self::H => [0.04, 0.40, 0.30],
            _ => self.geometry_ranges().map(|(lo, hi)| 0.5 * (lo + hi)),
        }
    }

    /// Limbs in the shape's local frame, as (cx, cy, angle, half_len, half_wid).
    fn local_limbs(self, geom: [f64; 3]) -> Vec<(f64, f64, f64, f64, f64)> {
        let [t, a, b] = geom;
        let hw = 0.5 * t;
        let vert = 0.5 * PI;
        match self {
            // two verticals of height a, spaced b apart, joined by a crossbar
            Self::H => vec![
                (-0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.0, 0.0, 0.0, 0.5 * b, hw),
            ],
            // two stacked rings sharing the middle bar; height a, width b
            Self::Eight => vec![
                (-0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.0, 0.5 * a, 0.0, 0.5 * b, hw),
                (0.0, 0.0, 0.0, 0.5 * b, hw),
                (0.0, -0.5 * a, 0.0, 0.5 * b, hw),
            ],
            // stem of length a under a top bar of length b
            Self::T => vec![
                (0.0, 0.0, vert, 0.5 * a, hw),
                (0.0, 0.5 * a, 0.0, 0.5 * b, hw),
            ],
            // handle of length a, head of width b and length 0.14
            Self::Spoon => vec![
                (0.0, -0.07, vert, 0.5 * a, hw),
                (0.0, 0.5 * a, vert, 0.07, 0.5 * b),
            ],
            // hollow rectangle of height a and width b
            Self::Box => vec![
                (-0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.5 * b, 0.0, vert, 0.5 * a, hw),
                (0.0, 0.5 * a, 0.0, 0.5 * b, hw),
                (0.0, -0.5 * a, 0.0, 0.5 * b, hw),
            ],
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "H" | "h" => Ok(Self::H),
            "Eight" | "eight" | "8" => Ok(Self::Eight),
            "T" | "t" => Ok(Self::T),
            "Spoon" | "spoon" => Ok(Self::Spoon),
            "Box" | "box" => Ok(Self::Box),
            other => Err(Error::Config(format!("unknown shape '{other}'"))),
        }
    }
}

/// Gripper geometry and success margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspSpec {
    /// Maximum aperture.
    pub aperture: f64,
    /// Claw width.
    pub claw_width: f64,
    /// Allowed centerline offset as a fraction of the limb width.
    pub center_margin: f64,
    /// Allowed misalignment in radians.
    pub angle_margin: f64,
    /// Minimum fraction of the claw width covered by material.
    pub presence: f64,
}

impl Default for GraspSpec {
    fn default() -> Self {
        Self {
            aperture: 0.12,
            claw_width: 0.02,
            center_margin: 0.25,
            angle_margin: 15f64.to_radians(),
            presence: 0.8,
        }
    }
}

/// Observation of one grasping problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeState {
    pub shape: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub phi: f64,
    pub scale: f64,
    /// Limb width and two length parameters.
    pub geometry: [f64; 3],
    /// Nuisance; never affects feasibility.
    pub color: [f64; 3],
}

pub const CENTER_RANGE: (f64, f64) = (0.4, 0.6);
pub const SCALE_RANGE: (f64, f64) = (0.85, 1.0);
pub const FEATURE_DIM: usize = 16;

impl ShapeState {
    pub fn canonical(shape: ShapeKind) -> Self {
        Self {
            shape,
            cx: 0.5,
            cy: 0.5,
            phi: 0.0,
            scale: 1.0,
            geometry: shape.canonical_geometry(),
            color: [0.5; 3],
        }
    }

    pub fn sample<R: Rng + ?Sized>(shape: ShapeKind, rng: &mut R) -> Self {
        let cx = rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1);
        let cy = rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1);
        let phi = rng.random_range(0.0..TAU);
        let scale = rng.random_range(SCALE_RANGE.0..SCALE_RANGE.1);
        let ranges = shape.geometry_ranges();
        let geometry = [
            rng.random_range(ranges[0].0..ranges[0].1),
            rng.random_range(ranges[1].0..ranges[1].1),
            rng.random_range(ranges[2].0..ranges[2].1),
        ];
        let color = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        Self {
            shape,
            cx,
            cy,
            phi,
            scale,
            geometry,
            color,
        }
    }

    /// One-hot shape, center, rotation as (cos, sin), scale, geometry, color.
    pub fn features(&self) -> Vec<f64> {
        let mut f = vec![0.0; FEATURE_DIM];
        f[self.shape.index()] = 1.0;
        f[POSE_CENTER] = (self.cx - 0.5) * POSE_CENTER_GAIN;
        f[POSE_CENTER + 1] = (self.cy - 0.5) * POSE_CENTER_GAIN;
        f[POSE_ROTATION] = self.phi.cos();
        f[POSE_ROTATION + 1] = self.phi.sin();
        f[POSE_SCALE] = self.scale;
        f[10] = self.geometry[0] * 20.0;
        f[11] = self.geometry[1] * 2.0;
        f[12] = self.geometry[2] * 2.0;
        f[13..16].copy_from_slice(&self.color);
        f
    }

    /// World-frame limbs.
    pub fn limbs(&self) -> Vec<Rect> {
        let (s, c) = self.phi.sin_cos();
        self.shape
            .local_limbs(self.geometry)
            .into_iter()
            .map(|(lx, ly, ang, hl, hw)| {
                let x = self.cx + self.scale * (c * lx - s * ly);
                let y = self.cy + self.scale * (s * lx + c * ly);
                Rect::new(x, y, ang + self.phi, self.scale * hl, self.scale * hw)
            })
            .collect()
    }
}

/// A shape with its limbs resolved, ready for repeated grasp queries.
#[derive(Debug, Clone)]
pub struct GraspScene {
    limbs: Vec<Rect>,
    spec: GraspSpec,
    bounds: (f64, f64),
}

impl GraspScene {
    pub fn new(state: &ShapeState, spec: GraspSpec, bounds: (f64, f64)) -> Self {
        Self {
            limbs: state.limbs(),
            spec,
            bounds,
        }
    }

    pub fn limbs(&self) -> &[Rect] {
        &self.limbs
    }

    pub fn evaluate(&self, action: &NormAction) -> bool {
        let (lo, hi) = self.bounds;
        if !(action.x >= lo && action.x <= hi && action.y >= lo && action.y <= hi) {
            return false;
        }
        // closing axis e = (cos alpha, sin alpha)
        let (ex, ey) = (action.cos_a, action.sin_a);
        let cos_margin = self.spec.angle_margin.cos();
        let mut candidate = false;
        for limb in &self.limbs {
            if self.limb_admits(limb, action.x, action.y, ex, ey, cos_margin) {
                candidate = true;
                break;
            }
        }
        candidate && self.claws_clear(action.x, action.y, ex, ey)
    }

    fn limb_admits(&self, limb: &Rect, px: f64, py: f64, ex: f64, ey: f64, cos_margin: f64) -> bool {
        let (nx, ny) = limb.normal();
        let e_n = ex * nx + ey * ny;
        // alignment, modulo the gripper's half-turn symmetry
        if e_n.abs() < cos_margin {
            return false;
        }
        let (dx, dy) = (px - limb.cx, py - limb.cy);
        let off_n = dx * nx + dy * ny;
        if off_n.abs() > self.spec.center_margin * 2.0 * limb.half_wid {
            return false;
        }
        // Lines parallel to the closing axis at offset o in [-w/2, w/2]
        // along f = (-ey, ex) hit the limb centerline at length coordinate
        // t0 + k o.
        let (fx, fy) = (-ey, ex);
        let e_d = ex * limb.ax + ey * limb.ay;
        let f_d = fx * limb.ax + fy * limb.ay;
        let f_n = fx * nx + fy * ny;
        let t0 = dx * limb.ax + dy * limb.ay - off_n * e_d / e_n;
        let k = f_d - f_n * e_d / e_n;
        let half_w = 0.5 * self.spec.claw_width;
        // {o : |t0 + k o| <= half_len}
        let (a, b) = ((-limb.half_len - t0) / k, (limb.half_len - t0) / k);
        let (o_lo, o_hi) = (a.min(b).max(-half_w), a.max(b).min(half_w));
        let covered = (o_hi - o_lo).max(0.0);
        covered >= self.spec.presence * self.spec.claw_width
    }

    fn claws_clear(&self, px: f64, py: f64, ex: f64, ey: f64) -> bool {
        let reach = 0.5 * (self.spec.aperture + self.spec.claw_width);
        let half = 0.5 * self.spec.claw_width;
        let angle = ey.atan2(ex);
        for sign in [-1.0, 1.0] {
            let claw = Rect::new(px + sign * reach * ex, py + sign * reach * ey, angle, half, half);
            if self.limbs.iter().any(|l| l.intersects(&claw)) {
                return false;
            }
        }
        true
    }
}
