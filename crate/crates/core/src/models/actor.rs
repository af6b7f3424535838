use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::action::{ActionSpace, Frame};
use super::mlp::{Mlp, MlpGrads, MlpTape};
use crate::error::{Error, Result};
use crate::kde::Kde;

/// Generative actor `(state, z) -> raw action`. The head is squashed into
/// `space.raw_bounds` with a scaled tanh; for grasps that is an action in the
/// object frame, which is then placed in the world by the state's pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub space: ActionSpace,
    state_dim: usize,
    latent_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ActorTape {
    net: MlpTape,
    head: Array2<f64>,
    // one per row when the space is posed
    frames: Vec<Frame>,
}

/// One state's contribution to the KDE-traced actor gradient.
#[derive(Debug, Clone, Copy)]
pub struct KdeGradTerm<'a> {
    pub state: &'a [f64],
    pub latents: ArrayView2<'a, f64>,
    /// Resampled points (constants), flat `M x D`.
    pub resampled: &'a [f64],
    pub weights: &'a [f64],
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        space: ActionSpace,
        rng: &mut R,
    ) -> Self {
        let sizes = Self::layer_sizes(state_dim, latent_dim, hidden, space);
        Self {
            net: Mlp::new(&sizes, rng),
            space,
            state_dim,
            latent_dim,
        }
    }

    pub fn from_net(net: Mlp, state_dim: usize, latent_dim: usize, space: ActionSpace) -> Result<Self> {
        if net.input_dim() != state_dim + latent_dim || net.output_dim() != space.raw_dim() {
            return Err(Error::DimensionMismatch {
                expected: state_dim + latent_dim,
                got: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            space,
            state_dim,
            latent_dim,
        })
    }

    pub fn layer_sizes(state_dim: usize, latent_dim: usize, hidden: &[usize], space: ActionSpace) -> Vec<usize> {
        let mut sizes = vec![state_dim + latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(space.raw_dim());
        sizes
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn action_dim(&self) -> usize {
        self.space.raw_dim()
    }

    /// Network input rows `[state, z_i]` for every latent row.
    pub fn inputs(&self, state: &[f64], latents: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(state.len(), self.state_dim, "state dimension");
        assert_eq!(latents.ncols(), self.latent_dim, "latent dimension");
        let n = latents.nrows();
        let mut x = Array2::zeros((n, self.state_dim + self.latent_dim));
        for (mut row, z) in x.axis_iter_mut(Axis(0)).zip(latents.axis_iter(Axis(0))) {
            for (d, s) in state.iter().enumerate() {
                row[d] = *s;
            }
            for (d, v) in z.iter().enumerate() {
                row[self.state_dim + d] = *v;
            }
        }
        x
    }

    fn squash(&self, mut head: Array2<f64>) -> Array2<f64> {
        for (d, mut col) in head.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = self.space.raw_bounds(d);
            col.mapv_inplace(|h| lo + (hi - lo) * 0.5 * (h.tanh() + 1.0));
        }
        head
    }

    fn place(&self, actions: &mut Array2<f64>, frames: &[Frame]) {
        for (mut row, f) in actions.axis_iter_mut(Axis(0)).zip(frames) {
            let w = f.to_world(&[row[0], row[1], row[2], row[3]]);
            for (d, v) in w.into_iter().enumerate() {
                row[d] = v;
            }
        }
    }

    fn frames(&self, inputs: ArrayView2<f64>) -> Vec<Frame> {
        inputs
            .axis_iter(Axis(0))
            .filter_map(|row| {
                let features = row.slice(ndarray::s![..self.state_dim]);
                self.space.frame(features.as_slice().expect("contiguous input row"))
            })
            .collect()
    }

    pub fn forward(&self, state: &[f64], latents: ArrayView2<f64>) -> Array2<f64> {
        let x = self.inputs(state, latents);
        let mut actions = self.squash(self.net.forward(x.view()));
        if let Some(f) = self.space.frame(state) {
            self.place(&mut actions, &vec![f; latents.nrows()]);
        }
        actions
    }

    pub fn act(&self, state: &[f64], z: &[f64]) -> Vec<f64> {
        let z = ArrayView2::from_shape((1, z.len()), z).expect("latent row");
        self.forward(state, z).row(0).to_vec()
    }

    /// Forward pass over prepared input rows, keeping what `backward` needs.
    pub fn forward_inputs_tape(&self, inputs: Array2<f64>) -> (Array2<f64>, ActorTape) {
        let frames = self.frames(inputs.view());
        let (head, net) = self.net.forward_tape(inputs);
        let mut actions = self.squash(head.clone());
        self.place(&mut actions, &frames);
        (actions, ActorTape { net, head, frames })
    }

    pub fn forward_tape(&self, state: &[f64], latents: ArrayView2<f64>) -> (Array2<f64>, ActorTape) {
        self.forward_inputs_tape(self.inputs(state, latents))
    }

    /// Parameter gradient of `sum_i d_actions[i] . a_i`.
    pub fn backward(&self, tape: &ActorTape, d_actions: ArrayView2<f64>) -> MlpGrads {
        self.backward_with_input(tape, d_actions).0
    }

    pub fn backward_with_input(&self, tape: &ActorTape, d_actions: ArrayView2<f64>) -> (MlpGrads, Array2<f64>) {
        let mut d_head = d_actions.to_owned();
        for (mut row, f) in d_head.axis_iter_mut(Axis(0)).zip(&tape.frames) {
            let l = f.grad_to_local(&[row[0], row[1], row[2], row[3]]);
            for (d, v) in l.into_iter().enumerate() {
                row[d] = v;
            }
        }
        for (d, (mut col, h)) in d_head
            .axis_iter_mut(Axis(1))
            .zip(tape.head.axis_iter(Axis(1)))
            .enumerate()
        {
            let (lo, hi) = self.space.raw_bounds(d);
            col.zip_mut_with(&h, |g, &h| {
                let t = h.tanh();
                *g *= (hi - lo) * 0.5 * (1.0 - t * t);
            });
        }
        self.net.backward(&tape.net, d_head.view())
    }

    /// Averages `(1/M) sum_j w_j grad_theta log q(a*_j)` over the terms,
    /// where `q` is the KDE with the given bandwidth over this actor's
    /// outputs for each term's latents. The resampled points carry no
    /// gradient.
    pub fn param_grad_through_kde(&self, terms: &[KdeGradTerm<'_>], bandwidth: &[f64]) -> Result<MlpGrads> {
        if terms.is_empty() {
            return Err(Error::Empty("kde gradient terms"));
        }
        let mut total = self.net.zero_grads();
        for term in terms {
            let (actions, tape) = self.forward_tape(term.state, term.latents);
            let upstream = self.kde_upstream(&actions, term.resampled, term.weights, bandwidth)?;
            total.add_assign(&self.backward(&tape, upstream.view()));
        }
        total.scale(1.0 / terms.len() as f64);
        Ok(total)
    }

    /// `d/da_i (1/M) sum_j w_j log q(a*_j)` for every support `a_i`, as an
    /// `N x D` matrix.
    pub fn kde_upstream(
        &self,
        actions: &Array2<f64>,
        resampled: &[f64],
        weights: &[f64],
        bandwidth: &[f64],
    ) -> Result<Array2<f64>> {
        let (n, dim) = actions.dim();
        let flat: Vec<f64> = actions.iter().copied().collect();
        let kde = Kde::new(flat, dim, bandwidth.to_vec())?;
        let m = weights.len().max(1) as f64;
        let coeffs: Vec<f64> = weights.iter().map(|w| w / m).collect();
        let g = kde.weighted_support_grads(resampled, &coeffs)?;
        Ok(Array2::from_shape_vec((n, dim), g).expect("support gradient shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::action::{GRASP_HI, GRASP_LO};
    use ndarray::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // shape features, then centre (0.6, 0.45), rotation 30 degrees, scale 0.8
    const STATE: [f64; 10] = [0.1, 0.2, 0.3, 0.0, 0.0, 0.4, -0.2, 0.866_025_403_784_438_6, 0.5, 0.8];

    fn grasp_actor(seed: u64) -> Actor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Actor::new(STATE.len(), 2, &[16, 16], ActionSpace::Grasp { lo: GRASP_LO, hi: GRASP_HI }, &mut rng)
    }

    #[test]
    fn deterministic_and_bounded() {
        let actor = grasp_actor(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Array::from_shape_fn((64, 2), |_| rng.random::<f64>());
        let a = actor.forward(&STATE, z.view());
        let b = actor.forward(&STATE, z.view());
        assert_eq!(a, b);
        for row in a.axis_iter(Axis(0)) {
            assert!(row[0] >= GRASP_LO && row[0] <= GRASP_HI);
            assert!(row[1] >= GRASP_LO && row[1] <= GRASP_HI);
            assert!(row[2].hypot(row[3]) <= 2f64.sqrt());
        }
    }

    #[test]
    fn zero_weights_ignore_latent() {
        let mut actor = grasp_actor(1);
        for l in actor.net.layers_mut() {
            l.w.fill(0.0);
        }
        let z = Array::from_shape_fn((8, 2), |(i, j)| (i + j) as f64 * 0.1);
        let a = actor.forward(&STATE, z.view());
        for row in a.axis_iter(Axis(0)) {
            assert_eq!(row, a.row(0));
        }
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let actor = grasp_actor(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = Array::from_shape_fn((6, 2), |_| rng.random::<f64>());
        let resampled: Vec<f64> = (0..48).map(|_| rng.random::<f64>()).collect();
        let w = vec![0.0; 12];
        let term = KdeGradTerm {
            state: &STATE,
            latents: z.view(),
            resampled: &resampled,
            weights: &w,
        };
        let g = actor.param_grad_through_kde(&[term], &[0.1, 0.1, 0.4, 0.4]).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }
}
