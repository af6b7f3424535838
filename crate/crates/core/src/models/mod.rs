//! Actor and critic networks, action parametrization, optimizer and
//! checkpoint container.

pub mod action;
pub mod actor;
pub mod adam;
pub mod critic;
pub mod mlp;

pub use action::{normalize_action, radius_weight, ActionSpace, NormAction, RawAction};
pub use actor::{Actor, KdeGradTerm};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use critic::{Critic, CriticInputGrads};
pub use mlp::{Dense, Mlp, MlpGrads};
pub mod checkpoint;

pub use checkpoint::{Checkpoint, NetRecord, RngState};
