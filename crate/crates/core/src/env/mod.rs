//! Deterministic feasibility environments and their ground-truth grids.

pub mod geometry;
pub mod grasp;
pub mod grid;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use grasp::{GraspScene, GraspSpec, ShapeKind, ShapeState};
pub use grid::{label_modes, FeasibilityGrid, ModeLabels};

use crate::error::Error;
use crate::models::action::{ActionSpace, NormAction, GRASP_HI, GRASP_LO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Grasp2d,
    Bimodal1d,
    Rings2d,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grasp2d => "grasp2d",
            Self::Bimodal1d => "bimodal1d",
            Self::Rings2d => "rings2d",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "grasp2d" => Ok(Self::Grasp2d),
            "bimodal1d" => Ok(Self::Bimodal1d),
            "rings2d" => Ok(Self::Rings2d),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }
}

/// Half-width of each feasible interval in `bimodal1d`.
pub const BIMODAL_HALF_WIDTH: f64 = 0.1;
/// Distance of each interval center from the state.
pub const BIMODAL_OFFSET: f64 = 0.5;
pub const BIMODAL_STATE_RANGE: (f64, f64) = (-0.2, 0.2);
pub const RING_INNER: f64 = 0.4;
pub const RING_OUTER: f64 = 0.5;
pub const RING_CENTER_RANGE: (f64, f64) = (-0.2, 0.2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateDescriptor {
    Bimodal1d { c: f64 },
    Rings2d { cx: f64, cy: f64 },
    Grasp(ShapeState),
}

impl StateDescriptor {
    /// Network observation vector.
    pub fn features(&self) -> Vec<f64> {
        match self {
            Self::Bimodal1d { c } => vec![*c * 5.0],
            Self::Rings2d { cx, cy } => vec![*cx * 5.0, *cy * 5.0],
            Self::Grasp(s) => s.features(),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Self::Bimodal1d { .. } => EnvKind::Bimodal1d,
            Self::Rings2d { .. } => EnvKind::Rings2d,
            Self::Grasp(_) => EnvKind::Grasp2d,
        }
    }

    /// Shape label used to group evaluation reports.
    pub fn group(&self) -> &'static str {
        match self {
            Self::Bimodal1d { .. } => "bimodal1d",
            Self::Rings2d { .. } => "rings2d",
            Self::Grasp(s) => s.shape.as_str(),
        }
    }

    /// Copy with the nuisance fields replaced.
    pub fn with_color(&self, color: [f64; 3]) -> Self {
        match self {
            Self::Grasp(s) => Self::Grasp(ShapeState { color, ..*s }),
            other => *other,
        }
    }
}

/// A feasibility environment `g(s, a) -> {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub kind: EnvKind,
    pub grasp: GraspSpec,
    /// Shapes drawn by `generate_state` (grasp only).
    pub shapes: Vec<ShapeKind>,
}

impl Env {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            grasp: GraspSpec::default(),
            shapes: ShapeKind::TRAINING.to_vec(),
        }
    }

    pub fn with_shapes(mut self, shapes: Vec<ShapeKind>) -> Self {
        self.shapes = shapes;
        self
    }

    pub fn action_space(&self) -> ActionSpace {
        match self.kind {
            EnvKind::Bimodal1d => ActionSpace::Interval { lo: -1.0, hi: 1.0 },
            EnvKind::Rings2d => ActionSpace::Plane { lo: -1.0, hi: 1.0 },
            EnvKind::Grasp2d => ActionSpace::Grasp {
                lo: GRASP_LO,
                hi: GRASP_HI,
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::Bimodal1d => 1,
            EnvKind::Rings2d => 2,
            EnvKind::Grasp2d => grasp::FEATURE_DIM,
        }
    }

    /// Default KDE bandwidth over raw actions.
    pub fn default_bandwidth(&self) -> Vec<f64> {
        match self.kind {
            EnvKind::Bimodal1d => vec![0.02],
            EnvKind::Rings2d => vec![0.02, 0.02],
            EnvKind::Grasp2d => vec![0.025, 0.025, 0.4, 0.4],
        }
    }

    /// Draws a training state.
    pub fn generate_state<R: Rng + ?Sized>(&self, rng: &mut R) -> StateDescriptor {
        match self.kind {
            EnvKind::Bimodal1d => StateDescriptor::Bimodal1d {
                c: rng.random_range(BIMODAL_STATE_RANGE.0..BIMODAL_STATE_RANGE.1),
            },
            EnvKind::Rings2d => StateDescriptor::Rings2d {
                cx: rng.random_range(RING_CENTER_RANGE.0..RING_CENTER_RANGE.1),
                cy: rng.random_range(RING_CENTER_RANGE.0..RING_CENTER_RANGE.1),
            },
            EnvKind::Grasp2d => {
                let shape = self.shapes[rng.random_range(0..self.shapes.len())];
                StateDescriptor::Grasp(ShapeState::sample(shape, rng))
            }
        }
    }

    /// Draws a state of a specific shape (grasp) or a training state.
    pub fn generate_shape_state<R: Rng + ?Sized>(&self, shape: ShapeKind, rng: &mut R) -> StateDescriptor {
        match self.kind {
            EnvKind::Grasp2d => StateDescriptor::Grasp(ShapeState::sample(shape, rng)),
            _ => self.generate_state(rng),
        }
    }

    /// A fixed, documented state per environment for oracle dumps.
    pub fn canonical_state(&self, shape: ShapeKind) -> StateDescriptor {
        match self.kind {
            EnvKind::Bimodal1d => StateDescriptor::Bimodal1d { c: 0.0 },
            EnvKind::Rings2d => StateDescriptor::Rings2d { cx: 0.0, cy: 0.0 },
            EnvKind::Grasp2d => StateDescriptor::Grasp(ShapeState::canonical(shape)),
        }
    }

    /// Uniform random action in the environment's (normalized) action
    /// space, returned as `(raw, normalized)`.
    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            EnvKind::Bimodal1d => {
                let a = rng.random_range(-1.0..1.0);
                (vec![a], vec![a])
            }
            EnvKind::Rings2d => {
                let x = rng.random_range(-1.0..1.0);
                let y = rng.random_range(-1.0..1.0);
                (vec![x, y], vec![x, y])
            }
            EnvKind::Grasp2d => {
                let x = rng.random_range(GRASP_LO..GRASP_HI);
                let y = rng.random_range(GRASP_LO..GRASP_HI);
                let alpha = rng.random_range(0.0..PI);
                let n = NormAction::from_angle(x, y, alpha);
                let r = 0.5;
                (vec![x, y, r * n.sin_a, r * n.cos_a], n.to_array().to_vec())
            }
        }
    }

    /// Feasibility of a normalized action. Out-of-bounds actions fail.
    pub fn evaluate(&self, state: &StateDescriptor, action: &[f64]) -> bool {
        match (self.kind, state) {
            (EnvKind::Bimodal1d, StateDescriptor::Bimodal1d { c }) => bimodal_feasible(*c, action[0]),
            (EnvKind::Rings2d, StateDescriptor::Rings2d { cx, cy }) => {
                rings_feasible(*cx, *cy, action[0], action[1])
            }
            (EnvKind::Grasp2d, StateDescriptor::Grasp(s)) => {
                GraspScene::new(s, self.grasp, (GRASP_LO, GRASP_HI)).evaluate(&NormAction::from_slice(action))
            }
            _ => panic!("state does not belong to environment {}", self.kind),
        }
    }

    /// A reusable evaluator for many actions on one state.
    pub fn evaluator<'a>(&'a self, state: &'a StateDescriptor) -> Evaluator<'a> {
        match state {
            StateDescriptor::Grasp(s) => {
                Evaluator::Scene(GraspScene::new(s, self.grasp, (GRASP_LO, GRASP_HI)))
            }
            other => Evaluator::Direct(self, other),
        }
    }

    /// Maps a normalized action to grid coordinates `(x, y, alpha)`.
    pub fn grid_point(&self, action: &[f64]) -> [f64; 3] {
        match self.kind {
            EnvKind::Bimodal1d => [action[0], 0.0, 0.0],
            EnvKind::Rings2d => [action[0], action[1], 0.0],
            EnvKind::Grasp2d => [action[0], action[1], NormAction::from_slice(action).alpha()],
        }
    }

    /// Inverse of `grid_point`.
    pub fn action_from_grid_point(&self, p: [f64; 3]) -> Vec<f64> {
        match self.kind {
            EnvKind::Bimodal1d => vec![p[0]],
            EnvKind::Rings2d => vec![p[0], p[1]],
            EnvKind::Grasp2d => NormAction::from_angle(p[0], p[1], p[2]).to_array().to_vec(),
        }
    }

    /// Grid extent and periodicity: `(lo, hi, periodic)` per axis.
    pub fn grid_axes(&self) -> [(f64, f64, bool); 3] {
        match self.kind {
            EnvKind::Bimodal1d => [(-1.0, 1.0, false), (0.0, 1.0, false), (0.0, 1.0, false)],
            EnvKind::Rings2d => [(-1.0, 1.0, false), (-1.0, 1.0, false), (0.0, 1.0, false)],
            EnvKind::Grasp2d => [
                (GRASP_LO, GRASP_HI, false),
                (GRASP_LO, GRASP_HI, false),
                (0.0, PI, true),
            ],
        }
    }

    /// Clamps the requested resolution to the axes this environment uses.
    pub fn grid_resolution(&self, res: [usize; 3]) -> [usize; 3] {
        match self.kind {
            EnvKind::Bimodal1d => [res[0], 1, 1],
            EnvKind::Rings2d => [res[0], res[1], 1],
            EnvKind::Grasp2d => res,
        }
    }

    /// Exhaustive evaluation at every cell center.
    pub fn feasible_grid(&self, state: &StateDescriptor, res: [usize; 3]) -> FeasibilityGrid {
        let axes = self.grid_axes();
        let mut grid = FeasibilityGrid::empty(self.grid_resolution(res), axes);
        let eval = self.evaluator(state);
        let dims = grid.dims();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let action = self.action_from_grid_point(grid.cell_center([i, j, k]));
                    if eval.evaluate(&action) {
                        grid.set([i, j, k], true);
                    }
                }
            }
        }
        grid
    }

    /// Fraction of the action space that is feasible, when known in closed form.
    pub fn analytic_feasible_fraction(&self) -> Option<f64> {
        match self.kind {
            EnvKind::Bimodal1d => Some(4.0 * BIMODAL_HALF_WIDTH / 2.0),
            EnvKind::Rings2d => Some(PI * (RING_OUTER * RING_OUTER - RING_INNER * RING_INNER) / 4.0),
            EnvKind::Grasp2d => None,
        }
    }
}

pub enum Evaluator<'a> {
    Direct(&'a Env, &'a StateDescriptor),
    Scene(GraspScene),
}

impl Evaluator<'_> {
    pub fn evaluate(&self, action: &[f64]) -> bool {
        match self {
            Self::Direct(env, state) => env.evaluate(state, action),
            Self::Scene(scene) => scene.evaluate(&NormAction::from_slice(action)),
        }
    }
}

pub fn bimodal_feasible(c: f64, a: f64) -> bool {
    if !(-1.0..=1.0).contains(&a) {
        return false;
    }
    (a - (c - BIMODAL_OFFSET)).abs() < BIMODAL_HALF_WIDTH || (a - (c + BIMODAL_OFFSET)).abs() < BIMODAL_HALF_WIDTH
}

pub fn rings_feasible(cx: f64, cy: f64, x: f64, y: f64) -> bool {
    if !((-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y)) {
        return false;
    }
    let d = (x - cx).hypot(y - cy);
    (RING_INNER..=RING_OUTER).contains(&d)
}
