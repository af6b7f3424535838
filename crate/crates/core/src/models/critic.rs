use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::action::ActionSpace;
use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// Critic `(state, normalized action) -> xi in (0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    pub space: ActionSpace,
    state_dim: usize,
    eps_c: f64,
}

/// Output and input gradients of the critic at a batch of inputs.
#[derive(Debug, Clone)]
pub struct CriticInputGrads {
    pub xi: Vec<f64>,
    /// `d log xi / d input`, one row per input.
    pub d_log_xi: Array2<f64>,
    /// `d log(1 - xi) / d input`.
    pub d_log_one_minus_xi: Array2<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        space: ActionSpace,
        eps_c: f64,
        rng: &mut R,
    ) -> Self {
        let sizes = Self::layer_sizes(state_dim, hidden, space);
        Self {
            net: Mlp::new(&sizes, rng),
            space,
            state_dim,
            eps_c,
        }
    }

    pub fn from_net(net: Mlp, state_dim: usize, space: ActionSpace, eps_c: f64) -> Result<Self> {
        if net.input_dim() != state_dim + space.critic_dim() || net.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: state_dim + space.critic_dim(),
                got: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            space,
            state_dim,
            eps_c,
        })
    }

    pub fn layer_sizes(state_dim: usize, hidden: &[usize], space: ActionSpace) -> Vec<usize> {
        let mut sizes = vec![state_dim + space.critic_dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        sizes
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.space.critic_dim()
    }

    /// Appends `[state, encoded action]` as one input row of `out`, for a
    /// normalized action.
    pub fn push_row(&self, out: &mut Vec<f64>, state: &[f64], action: &[f64]) {
        debug_assert_eq!(state.len(), self.state_dim);
        out.extend_from_slice(state);
        self.space.encode(state, action, out);
    }

    pub fn rows(&self, flat: Vec<f64>) -> Array2<f64> {
        let cols = self.input_dim();
        Array2::from_shape_vec((flat.len() / cols, cols), flat).expect("critic input rows")
    }

    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.eps_c, 1.0 - self.eps_c)
    }

    pub fn logits(&self, inputs: ArrayView2<f64>) -> Vec<f64> {
        self.net.forward(inputs).column(0).to_vec()
    }

    /// Clamped sigmoid outputs for a batch of input rows.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Vec<f64> {
        self.logits(inputs)
            .into_iter()
            .map(|z| self.clamp(sigmoid(z)))
            .collect()
    }

    pub fn forward(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(self.input_dim());
        self.push_row(&mut row, state, action);
        self.forward_batch(self.rows(row).view())[0]
    }

    /// Mean binary cross-entropy against soft targets in [0, 1] and its
    /// parameter gradient. The loss is computed from logits,
    /// `softplus(z) - t z`.
    pub fn bce_grad(&self, inputs: Array2<f64>, targets: &[f64]) -> (f64, MlpGrads) {
        let n = targets.len();
        assert_eq!(inputs.nrows(), n, "one target per input row");
        let (out, tape) = self.net.forward_tape(inputs);
        let mut d_out = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let z = out[[i, 0]];
            loss += softplus(z) - t * z;
            d_out[[i, 0]] = (sigmoid(z) - t) / n as f64;
        }
        let (grads, _) = self.net.backward(&tape, d_out.view());
        (loss / n as f64, grads)
    }

    /// Loss only, matching `bce_grad`.
    pub fn bce_loss(&self, inputs: ArrayView2<f64>, targets: &[f64]) -> f64 {
        let logits = self.logits(inputs);
        logits
            .iter()
            .zip(targets)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum::<f64>()
            / targets.len() as f64
    }

    /// Input gradients of `log sigmoid(z)` and `log(1 - sigmoid(z))`.
    pub fn input_grads(&self, inputs: Array2<f64>) -> CriticInputGrads {
        let n = inputs.nrows();
        let (out, tape) = self.net.forward_tape(inputs);
        let ones = Array2::from_elem((n, 1), 1.0);
        let (_, d_logit) = self.net.backward(&tape, ones.view());
        let mut d_log_xi = d_logit.clone();
        let mut d_log_one_minus_xi = d_logit;
        let mut xi = Vec::with_capacity(n);
        for i in 0..n {
            let p = sigmoid(out[[i, 0]]);
            d_log_xi.row_mut(i).mapv_inplace(|g| g * (1.0 - p));
            d_log_one_minus_xi.row_mut(i).mapv_inplace(|g| -g * p);
            xi.push(self.clamp(p));
        }
        CriticInputGrads {
            xi,
            d_log_xi,
            d_log_one_minus_xi,
        }
    }
}
