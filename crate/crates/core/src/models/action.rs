//! Action parametrization.
//!
//! The grasp actor emits `[x, y, r sin a, r cos a]`. The environment only
//! sees `[x, y, sin a, cos a]` with `a` folded into `[0, pi)` since the
//! gripper is symmetric. The radius is kept away from the `r = 0`
//! singularity by an unnormalized Gaussian weight.
//!
//! Grasp networks work in the object's frame: the actor head is placed by
//! the object pose, and the critic sees the position relative to the object
//! and the doubled relative angle, which is continuous across the fold.

use crate::error::{Error, Result};

pub const RADIUS_CENTER: f64 = 0.5;
pub const RADIUS_STD: f64 = 0.4;

/// Bounds of the grasp position, the normalized central crop of the image.
pub const GRASP_LO: f64 = 0.11;
pub const GRASP_HI: f64 = 0.89;

/// Grasp state feature layout of the pose: center offsets at `[5, 6]` as
/// `4 (c - 0.5)`, rotation at `[7, 8]` as `(cos, sin)`, scale at `[9]`.
pub const POSE_CENTER: usize = 5;
pub const POSE_ROTATION: usize = 7;
pub const POSE_SCALE: usize = 9;
pub const POSE_CENTER_GAIN: f64 = 4.0;

/// Gain on object-frame positions in the critic input.
const LOCAL_GAIN: f64 = 4.0;

/// Similarity transform of a grasped object:
/// `world = origin + scale * R(phi) * local`, angles shift by `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub ox: f64,
    pub oy: f64,
    pub cos: f64,
    pub sin: f64,
    pub scale: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        ox: 0.0,
        oy: 0.0,
        cos: 1.0,
        sin: 0.0,
        scale: 1.0,
    };

    pub fn from_features(f: &[f64]) -> Self {
        Self {
            ox: 0.5 + f[POSE_CENTER] / POSE_CENTER_GAIN,
            oy: 0.5 + f[POSE_CENTER + 1] / POSE_CENTER_GAIN,
            cos: f[POSE_ROTATION],
            sin: f[POSE_ROTATION + 1],
            scale: f[POSE_SCALE],
        }
    }

    /// Object-frame raw action `[x, y, u, v]` to world frame.
    pub fn to_world(&self, l: &[f64]) -> [f64; 4] {
        let (c, s, k) = (self.cos, self.sin, self.scale);
        [
            self.ox + k * (c * l[0] - s * l[1]),
            self.oy + k * (s * l[0] + c * l[1]),
            c * l[2] + s * l[3],
            c * l[3] - s * l[2],
        ]
    }

    /// Pulls a gradient w.r.t. the world raw action back to the local one.
    pub fn grad_to_local(&self, d: &[f64]) -> [f64; 4] {
        let (c, s, k) = (self.cos, self.sin, self.scale);
        [
            k * (c * d[0] + s * d[1]),
            k * (c * d[1] - s * d[0]),
            c * d[2] - s * d[3],
            s * d[2] + c * d[3],
        ]
    }

    /// Critic encoding of a world normalized action `[x, y, sin a, cos a]`:
    /// scaled object-frame position and `(sin 2b, cos 2b)` with `b = a - phi`.
    pub fn encode(&self, n: &[f64]) -> [f64; 4] {
        let (c, s) = (self.cos, self.sin);
        let g = LOCAL_GAIN / self.scale;
        let (dx, dy) = (n[0] - self.ox, n[1] - self.oy);
        let (c2, s2) = (c * c - s * s, 2.0 * s * c);
        let (sa, ca) = (n[2], n[3]);
        let (sin2a, cos2a) = (2.0 * sa * ca, ca * ca - sa * sa);
        [
            g * (c * dx + s * dy),
            g * (c * dy - s * dx),
            sin2a * c2 - cos2a * s2,
            cos2a * c2 + sin2a * s2,
        ]
    }

    /// Transposed Jacobian of [`Frame::encode`] applied to `d`.
    pub fn encode_grad(&self, n: &[f64], d: &[f64]) -> [f64; 4] {
        let (c, s) = (self.cos, self.sin);
        let g = LOCAL_GAIN / self.scale;
        let (c2, s2) = (c * c - s * s, 2.0 * s * c);
        let (sa, ca) = (n[2], n[3]);
        // d sin2a = (2 ca, 2 sa), d cos2a = (-2 sa, 2 ca) w.r.t. (sa, ca)
        let d_sin2a = d[2] * c2 + d[3] * s2;
        let d_cos2a = d[3] * c2 - d[2] * s2;
        [
            g * (c * d[0] - s * d[1]),
            g * (s * d[0] + c * d[1]),
            2.0 * ca * d_sin2a - 2.0 * sa * d_cos2a,
            2.0 * sa * d_sin2a + 2.0 * ca * d_cos2a,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawAction {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

impl RawAction {
    pub fn from_slice(a: &[f64]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            u: a[2],
            v: a[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.u, self.v]
    }

    pub fn radius(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormAction {
    pub x: f64,
    pub y: f64,
    pub sin_a: f64,
    pub cos_a: f64,
}

impl NormAction {
    /// Builds a normalized action from a gripper angle, folding it into `[0, pi)`.
    pub fn from_angle(x: f64, y: f64, alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        let (s, c) = fold(s, c);
        Self {
            x,
            y,
            sin_a: s,
            cos_a: c,
        }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            sin_a: a[2],
            cos_a: a[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.sin_a, self.cos_a]
    }

    /// Gripper angle in `[0, pi)`.
    pub fn alpha(&self) -> f64 {
        let a = self.sin_a.atan2(self.cos_a);
        if a >= std::f64::consts::PI {
            0.0
        } else {
            a.max(0.0)
        }
    }
}

// Maps (sin, cos) onto the half circle with angle in [0, pi).
fn fold(s: f64, c: f64) -> (f64, f64) {
    if s < 0.0 || (s == 0.0 && c < 0.0) {
        (-s + 0.0, -c + 0.0)
    } else {
        (s + 0.0, c + 0.0)
    }
}

fn fold_sign(u: f64, v: f64) -> f64 {
    if u < 0.0 || (u == 0.0 && v < 0.0) {
        -1.0
    } else {
        1.0
    }
}

/// Splits a raw action into its normalized form and radius.
pub fn normalize_action(raw: RawAction, eps_r: f64) -> Result<(NormAction, f64)> {
    let r = raw.radius();
    if !(r > eps_r) {
        return Err(Error::DegenerateAction(r));
    }
    let (s, c) = fold(raw.u / r, raw.v / r);
    Ok((
        NormAction {
            x: raw.x,
            y: raw.y,
            sin_a: s,
            cos_a: c,
        },
        r,
    ))
}

/// Unnormalized Gaussian on the radius, centered at 0.5 with std 0.4.
pub fn radius_weight(r: f64) -> f64 {
    let d = r - RADIUS_CENTER;
    (-d * d / (2.0 * RADIUS_STD * RADIUS_STD)).exp()
}

/// Layout of an environment's actions: what the actor emits, how it is
/// squashed into bounds, and what the critic receives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    /// One coordinate in `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// A point in the box `[lo, hi]^2`.
    Plane { lo: f64, hi: f64 },
    /// Grasp position in `[lo, hi]^2` plus the radial angle encoding.
    Grasp { lo: f64, hi: f64 },
}

/// The critic's view of one raw action.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticView {
    pub input: [f64; 4],
    /// Multiplier applied to the critic output (radius weight, or 1).
    pub weight: f64,
}

impl ActionSpace {
    pub fn raw_dim(&self) -> usize {
        match self {
            Self::Interval { .. } => 1,
            Self::Plane { .. } => 2,
            Self::Grasp { .. } => 4,
        }
    }

    pub fn critic_dim(&self) -> usize {
        self.raw_dim()
    }

    /// Squashing range of raw coordinate `d` of the actor head. Grasp
    /// positions are object-frame offsets, as wide as the world bounds.
    pub fn raw_bounds(&self, d: usize) -> (f64, f64) {
        match *self {
            Self::Interval { lo, hi } | Self::Plane { lo, hi } => (lo, hi),
            Self::Grasp { lo, hi } => {
                if d < 2 {
                    (-0.5 * (hi - lo), 0.5 * (hi - lo))
                } else {
                    (-1.0, 1.0)
                }
            }
        }
    }

    /// Object frame of a state, identity outside grasping.
    pub fn frame(&self, features: &[f64]) -> Option<Frame> {
        match self {
            Self::Grasp { .. } => Some(Frame::from_features(features)),
            _ => None,
        }
    }

    /// Appends the critic encoding of a normalized action under `features`.
    pub fn encode(&self, features: &[f64], action: &[f64], out: &mut Vec<f64>) {
        match self.frame(features) {
            Some(frame) => out.extend_from_slice(&frame.encode(action)),
            None => out.extend_from_slice(&action[..self.critic_dim()]),
        }
    }

    /// Bounds of the critic/environment coordinates that are position-like.
    pub fn position_bounds(&self) -> (f64, f64) {
        match *self {
            Self::Interval { lo, hi } | Self::Plane { lo, hi } | Self::Grasp { lo, hi } => (lo, hi),
        }
    }

    /// Clips the position coordinates into bounds and normalizes. `None`
    /// means the action sits at the radius singularity and scores zero.
    pub fn critic_view(&self, raw: &[f64], eps_r: f64) -> Option<CriticView> {
        let (lo, hi) = self.position_bounds();
        match self {
            Self::Interval { .. } => Some(CriticView {
                input: [raw[0].clamp(lo, hi), 0.0, 0.0, 0.0],
                weight: 1.0,
            }),
            Self::Plane { .. } => Some(CriticView {
                input: [raw[0].clamp(lo, hi), raw[1].clamp(lo, hi), 0.0, 0.0],
                weight: 1.0,
            }),
            Self::Grasp { .. } => {
                let clipped = RawAction {
                    x: raw[0].clamp(lo, hi),
                    y: raw[1].clamp(lo, hi),
                    u: raw[2],
                    v: raw[3],
                };
                let (n, r) = normalize_action(clipped, eps_r).ok()?;
                Some(CriticView {
                    input: n.to_array(),
                    weight: radius_weight(r),
                })
            }
        }
    }

    /// Chains a gradient w.r.t. the encoded critic input, plus
    /// `d_log_weight` times the gradient of `log weight`, back to the raw
    /// action. Clipping of the position is treated as the identity.
    pub fn critic_grad_to_raw(
        &self,
        features: &[f64],
        raw: &[f64],
        d_encoded: &[f64],
        d_log_weight: f64,
        eps_r: f64,
    ) -> [f64; 4] {
        match self {
            Self::Interval { .. } => [d_encoded[0], 0.0, 0.0, 0.0],
            Self::Plane { .. } => [d_encoded[0], d_encoded[1], 0.0, 0.0],
            Self::Grasp { lo, hi } => {
                let (u, v) = (raw[2], raw[3]);
                let r = u.hypot(v).max(eps_r);
                let s = fold_sign(u, v);
                let (su, sv) = (u / r, v / r);
                let norm = [raw[0].clamp(*lo, *hi), raw[1].clamp(*lo, *hi), s * su, s * sv];
                let d_input = Frame::from_features(features).encode_grad(&norm, d_encoded);
                // d(u/r)/du = (1 - su^2)/r, d(u/r)/dv = -su sv / r, etc.
                let (gs, gc) = (s * d_input[2], s * d_input[3]);
                let mut du = (gs * (1.0 - su * su) - gc * su * sv) / r;
                let mut dv = (gc * (1.0 - sv * sv) - gs * su * sv) / r;
                // log radius weight: -(r - c)^2 / (2 std^2)
                let dlogw_dr = -d_log_weight * (r - RADIUS_CENTER) / (RADIUS_STD * RADIUS_STD);
                du += dlogw_dr * su;
                dv += dlogw_dr * sv;
                [d_input[0], d_input[1], du, dv]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn axis_case() {
        let (n, r) = normalize_action(RawAction { x: 0.2, y: 0.3, u: 0.5, v: 0.0 }, 1e-6).unwrap();
        assert_eq!(r, 0.5);
        assert_eq!((n.sin_a, n.cos_a), (1.0, 0.0));
        assert!((n.alpha() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn folding_symmetry() {
        let a = normalize_action(RawAction { x: 0.2, y: 0.3, u: -0.3, v: 0.0 }, 1e-6).unwrap();
        let b = normalize_action(RawAction { x: 0.2, y: 0.3, u: 0.3, v: 0.0 }, 1e-6).unwrap();
        assert_eq!(a, b);
        let c = normalize_action(RawAction { x: 0.0, y: 0.0, u: -0.2, v: -0.7 }, 1e-6).unwrap();
        let d = normalize_action(RawAction { x: 0.0, y: 0.0, u: 0.2, v: 0.7 }, 1e-6).unwrap();
        assert_eq!(c.0, d.0);
    }

    #[test]
    fn three_four_five() {
        let (n, r) = normalize_action(RawAction { x: 0.0, y: 0.0, u: 0.3, v: 0.4 }, 1e-6).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!((n.sin_a - 0.6).abs() < 1e-15 && (n.cos_a - 0.8).abs() < 1e-15);
    }

    #[test]
    fn degenerate_radius() {
        assert!(matches!(
            normalize_action(RawAction { x: 0.0, y: 0.0, u: 1e-7, v: 0.0 }, 1e-6),
            Err(Error::DegenerateAction(_))
        ));
        let space = ActionSpace::Grasp { lo: GRASP_LO, hi: GRASP_HI };
        assert!(space.critic_view(&[0.5, 0.5, 0.0, 0.0], 1e-6).is_none());
    }

    #[test]
    fn radius_weight_values() {
        assert_eq!(radius_weight(0.5), 1.0);
        assert!((radius_weight(0.9) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((radius_weight(0.0) - (-0.78125f64).exp()).abs() < 1e-15);
        assert!((radius_weight(0.0) - 0.4578).abs() < 1e-4);
    }

    #[test]
    fn alpha_in_half_open_range() {
        for k in 0..360 {
            let a = k as f64 * PI / 180.0;
            let n = NormAction::from_angle(0.5, 0.5, a);
            let folded = n.alpha();
            assert!((0.0..PI).contains(&folded));
            assert!((n.sin_a * n.sin_a + n.cos_a * n.cos_a - 1.0).abs() < 1e-9);
        }
    }

    fn posed_features() -> Vec<f64> {
        let mut f = vec![0.0; 16];
        f[0] = 1.0;
        f[POSE_CENTER] = 0.3;
        f[POSE_CENTER + 1] = -0.2;
        let phi: f64 = 2.2;
        f[POSE_ROTATION] = phi.cos();
        f[POSE_ROTATION + 1] = phi.sin();
        f[POSE_SCALE] = 0.9;
        f
    }

    #[test]
    fn grasp_chain_rule_matches_finite_difference() {
        // f(raw) = g . encode(input(raw)) + log w(r), for a fixed g.
        let space = ActionSpace::Grasp { lo: GRASP_LO, hi: GRASP_HI };
        let feats = posed_features();
        let g = [0.3, -0.7, 1.1, 0.4];
        let f = |raw: &[f64]| {
            let view = space.critic_view(raw, 1e-6).unwrap();
            let mut enc = Vec::new();
            space.encode(&feats, &view.input, &mut enc);
            enc.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() + view.weight.ln()
        };
        for raw in [[0.4, 0.5, 0.3, 0.4], [0.6, 0.2, -0.5, 0.1], [0.3, 0.3, 0.05, -0.9]] {
            let analytic = space.critic_grad_to_raw(&feats, &raw, &g, 1.0, 1e-6);
            for d in 0..4 {
                let h = 1e-6;
                let mut p = raw;
                let mut m = raw;
                p[d] += h;
                m[d] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                assert!((fd - analytic[d]).abs() < 1e-6, "d={d} fd={fd} an={}", analytic[d]);
            }
        }
    }

    #[test]
    fn encoding_recovers_the_local_action() {
        let frame = Frame::from_features(&posed_features());
        for (x, y, b) in [(0.1, -0.2, 0.3), (-0.25, 0.05, 2.9), (0.0, 0.0, 1.6)] {
            let (sb, cb) = f64::sin_cos(b);
            let world = frame.to_world(&[x, y, 0.7 * sb, 0.7 * cb]);
            let (n, r) = normalize_action(RawAction::from_slice(&world), 1e-6).unwrap();
            assert!((r - 0.7).abs() < 1e-12);
            let enc = frame.encode(&n.to_array());
            let want = [LOCAL_GAIN * x, LOCAL_GAIN * y, (2.0 * b).sin(), (2.0 * b).cos()];
            for d in 0..4 {
                assert!((enc[d] - want[d]).abs() < 1e-12, "{enc:?} {want:?}");
            }
        }
    }

    #[test]
    fn frame_gradient_is_the_transpose() {
        let frame = Frame::from_features(&posed_features());
        let g = [0.5, -1.5, 0.25, 2.0];
        let local = [0.1, -0.3, 0.4, -0.6];
        let analytic = frame.grad_to_local(&g);
        for d in 0..4 {
            let h = 1e-6;
            let (mut p, mut m) = (local, local);
            p[d] += h;
            m[d] -= h;
            let dot = |l: &[f64; 4]| frame.to_world(l).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let fd = (dot(&p) - dot(&m)) / (2.0 * h);
            assert!((fd - analytic[d]).abs() < 1e-8);
        }
    }
}
