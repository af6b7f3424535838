//! The interaction/training loop: maximum-uncertainty collection, balanced
//! critic updates and actor updates for every divergence kind.
//!
//! Randomness comes from one `ChaCha8Rng` seeded from `cfg.seed` and is
//! consumed in a fixed order: actor init, critic init, discriminator init
//! (GAN only), prefill, then per outer step the interaction phase, the
//! critic phase and the actor phase. Within a phase all draws happen before
//! any parallel work, so results do not depend on the thread count.

pub mod config;

use std::io::Write;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{Profile, TrainConfig};

use crate::divergence::{estimate_divergence, grad_weights, DivergenceKind, SampleBatch};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::kde::Kde;
use crate::models::checkpoint::{arch_hash, Checkpoint, NetRecord, RngState};
use crate::models::{Actor, AdamState, Critic, MlpGrads};
use crate::replay::{raw_radius, BalancedMemory, Experience};

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Mean divergence estimate (f-divergences) or actor objective (ME, GAN)
    /// over the actor updates of this step.
    pub divergence: Option<f64>,
    pub critic_loss: f64,
    /// Fraction of this step's collected experiences that succeeded.
    pub positive_rate: f64,
    pub volume_mean: Option<f64>,
    pub volume_min: Option<f64>,
    pub degenerate: usize,
    pub actor_grad_norm: f64,
}

pub const LOG_HEADER: &str =
    "step,divergence,critic_loss,positive_rate,volume_mean,volume_min,degenerate,actor_grad_norm";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            opt(self.divergence),
            self.critic_loss,
            self.positive_rate,
            opt(self.volume_mean),
            opt(self.volume_min),
            self.degenerate,
            self.actor_grad_norm
        )
    }
}

pub fn write_log_csv<W: Write>(out: &mut W, records: &[StepRecord]) -> Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Statistics of one actor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    pub grad_norm: f64,
    pub objective: Option<f64>,
    pub volume_mean: Option<f64>,
    pub volume_min: Option<f64>,
    pub degenerate: usize,
}

/// Executed phase counts since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseCounters {
    pub interactions: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Index of the proposal whose critic output is closest to 1/2; ties go to
/// the lowest index and `None` entries (unscorable actions) are skipped.
/// Returns 0 when nothing is scorable.
pub fn select_uncertain(xi: &[Option<f64>]) -> usize {
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (i, x) in xi.iter().enumerate() {
        if let Some(x) = x {
            let gap = (0.5 - x).abs();
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
    }
    best
}

/// Layer sizes of every network a config trains, in checkpoint order.
pub fn network_sizes(cfg: &TrainConfig) -> Vec<(&'static str, Vec<usize>)> {
    let env = cfg.make_env();
    let space = env.action_space();
    let mut nets = vec![
        (
            "actor",
            Actor::layer_sizes(env.state_dim(), cfg.latent_dim, &cfg.hidden, space),
        ),
        ("critic", Critic::layer_sizes(env.state_dim(), &cfg.hidden, space)),
    ];
    if cfg.divergence == DivergenceKind::Gan {
        nets.push(("discriminator", Critic::layer_sizes(env.state_dim(), &cfg.hidden, space)));
    }
    nets
}

pub fn expected_arch(cfg: &TrainConfig) -> [u8; 32] {
    arch_hash(network_sizes(cfg).into_iter())
}

/// Restores the configuration and actor stored in a checkpoint, rejecting
/// architecture mismatches.
pub fn load_actor(ck: &Checkpoint) -> Result<(TrainConfig, Actor)> {
    let cfg = TrainConfig::from_text(&ck.config_text)?;
    ck.expect_arch(expected_arch(&cfg))?;
    let env = cfg.make_env();
    let actor = Actor::from_net(
        ck.net("actor")?.net.clone(),
        env.state_dim(),
        cfg.latent_dim,
        env.action_space(),
    )?;
    Ok((cfg, actor))
}

/// Input rows `[state_s, z]` for `per` consecutive latent rows per state.
fn stacked_inputs(features: &[Vec<f64>], latents: ArrayView2<f64>, per: usize) -> Array2<f64> {
    let sd = features[0].len();
    let ld = latents.ncols();
    let mut x = Array2::zeros((latents.nrows(), sd + ld));
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        let f = &features[r / per];
        for d in 0..sd {
            row[d] = f[d];
        }
        for d in 0..ld {
            row[sd + d] = latents[[r, d]];
        }
    }
    x
}

fn uniform_latents<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |_| rng.random::<f64>())
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub env: Env,
    pub actor: Actor,
    pub critic: Critic,
    pub discriminator: Option<Critic>,
    actor_opt: AdamState,
    critic_opt: AdamState,
    disc_opt: Option<AdamState>,
    pub memory: BalancedMemory,
    rng: ChaCha8Rng,
    step: u64,
    pub counters: PhaseCounters,
}

impl Trainer {
    /// Initializes networks and prefills the replay memory.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let mut t = Self::without_prefill(cfg)?;
        let (prefill, budget) = (t.cfg.prefill, t.cfg.prefill_budget);
        t.memory.prefill(&t.env, prefill, budget, &mut t.rng)?;
        Ok(t)
    }

    /// Initializes networks with an empty memory.
    pub fn without_prefill(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.make_env();
        let space = env.action_space();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actor = Actor::new(env.state_dim(), cfg.latent_dim, &cfg.hidden, space, &mut rng);
        let critic = Critic::new(env.state_dim(), &cfg.hidden, space, cfg.eps_c, &mut rng);
        let discriminator = (cfg.divergence == DivergenceKind::Gan)
            .then(|| Critic::new(env.state_dim(), &cfg.hidden, space, cfg.eps_c, &mut rng));
        Ok(Self {
            actor_opt: AdamState::new(&actor.net),
            critic_opt: AdamState::new(&critic.net),
            disc_opt: discriminator.as_ref().map(|d| AdamState::new(&d.net)),
            memory: BalancedMemory::new(cfg.memory_positive, cfg.memory_negative),
            env,
            actor,
            critic,
            discriminator,
            rng,
            step: 0,
            counters: PhaseCounters::default(),
            cfg,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Generates a state, proposes `U` actions and executes the one the
    /// critic is least sure about.
    pub fn collect_step(&mut self) -> Result<Experience> {
        let cfg = &self.cfg;
        let state = self.env.generate_state(&mut self.rng);
        let features = state.features();
        let latents = uniform_latents(cfg.u, cfg.latent_dim, &mut self.rng);
        let actions = self.actor.forward(&features, latents.view());
        let space = self.env.action_space();
        let cd = space.critic_dim();
        let views: Vec<_> = actions
            .rows()
            .into_iter()
            .map(|a| space.critic_view(a.as_slice().expect("contiguous row"), cfg.eps_r))
            .collect();
        let mut flat = Vec::with_capacity(cfg.u * self.critic.input_dim());
        for v in &views {
            let input = v.as_ref().map(|v| v.input).unwrap_or([0.0; 4]);
            self.critic.push_row(&mut flat, &features, &input[..cd]);
        }
        let xi = self.critic.forward_batch(self.critic.rows(flat).view());
        let scored: Vec<Option<f64>> = views.iter().zip(&xi).map(|(v, x)| v.as_ref().map(|_| *x)).collect();
        let j = select_uncertain(&scored);
        let raw = actions.row(j).to_vec();
        let norm = match &views[j] {
            Some(v) => v.input[..cd].to_vec(),
            None => degenerate_norm(&raw, cd),
        };
        let outcome = views[j].is_some() && self.env.evaluate(&state, &norm);
        let exp = Experience::new(state, norm, raw_radius(&raw), outcome);
        self.memory.push(exp.clone());
        self.counters.interactions += 1;
        Ok(exp)
    }

    /// One Adam step of the critic on a balanced batch; returns the loss.
    pub fn critic_step(&mut self) -> Result<f64> {
        let batch = self.memory.sample_balanced(self.cfg.l, &mut self.rng)?;
        let mut flat = Vec::with_capacity(batch.len() * self.critic.input_dim());
        let mut targets = Vec::with_capacity(batch.len());
        for e in &batch {
            self.critic.push_row(&mut flat, &e.features, &e.action);
            targets.push(if e.outcome { 1.0 } else { 0.0 });
        }
        let (loss, grads) = self.critic.bce_grad(self.critic.rows(flat), &targets);
        ensure_finite(&grads, "critic")?;
        self.critic_opt.step(&mut self.critic.net, &grads, &self.cfg.critic_adam());
        self.counters.critic_updates += 1;
        Ok(loss)
    }

    /// Dispatches on the configured divergence kind.
    pub fn actor_step(&mut self) -> Result<ActorStats> {
        let stats = match self.cfg.divergence {
            DivergenceKind::Js | DivergenceKind::Fkl | DivergenceKind::Rkl => self.actor_step_fdiv()?,
            DivergenceKind::Me => self.actor_step_me()?,
            DivergenceKind::Gan => self.actor_step_gan()?,
        };
        self.counters.actor_updates += 1;
        Ok(stats)
    }

    fn sample_state_features(&mut self, k: usize, positive_only: bool) -> Result<Vec<Vec<f64>>> {
        let exps = if positive_only {
            self.memory.sample_positive(k, &mut self.rng)?
        } else {
            self.memory.sample_states(k, &mut self.rng)?
        };
        Ok(exps.into_iter().map(|e| e.features.clone()).collect())
    }

    /// Score `xi * radius_weight` of every flat raw action under `critic`,
    /// with states repeated `per` rows each. Unscorable actions score 0.
    fn scores(&self, critic: &Critic, features: &[Vec<f64>], points: &[f64], per: usize) -> Vec<f64> {
        let space = self.env.action_space();
        let dim = space.raw_dim();
        let cd = space.critic_dim();
        let n = points.len() / dim;
        let mut flat = Vec::with_capacity(n * critic.input_dim());
        let mut weight = Vec::with_capacity(n);
        for (r, p) in points.chunks_exact(dim).enumerate() {
            let view = space.critic_view(p, self.cfg.eps_r);
            let input = view.as_ref().map(|v| v.input).unwrap_or([0.0; 4]);
            weight.push(view.map_or(0.0, |v| v.weight));
            critic.push_row(&mut flat, &features[r / per], &input[..cd]);
        }
        critic
            .forward_batch(critic.rows(flat).view())
            .into_iter()
            .zip(weight)
            .map(|(x, w)| x * w)
            .collect()
    }

    /// KDE score-function update for JS, FKL and RKL.
    pub fn actor_step_fdiv(&mut self) -> Result<ActorStats> {
        let (k, n, m) = (self.cfg.k, self.cfg.n, self.cfg.m);
        let dim = self.env.action_space().raw_dim();
        let sigma = self.cfg.sigma.clone();
        let sigma_p = self.cfg.sigma_prime();
        let scale = self.cfg.sigma_scale;
        let kind = self.cfg.divergence;
        let clamps = self.cfg.clamps();

        let features = self.sample_state_features(k, false)?;
        let latents = uniform_latents(k * n, self.cfg.latent_dim, &mut self.rng);
        let (actions, tape) = self
            .actor
            .forward_inputs_tape(stacked_inputs(&features, latents.view(), n));
        let supports: Vec<Vec<f64>> = (0..k)
            .map(|s| actions.slice(s![s * n..(s + 1) * n, ..]).iter().copied().collect())
            .collect();
        let mut resampled = Vec::with_capacity(k);
        for sup in &supports {
            let proposal = Kde::new(sup.clone(), dim, sigma_p.clone())?;
            resampled.push(proposal.sample(m, &mut self.rng)?);
        }
        let all_points: Vec<f64> = resampled.iter().flatten().copied().collect();
        let scores = self.scores(&self.critic, &features, &all_points, n * m);

        let big_m = n * m;
        let per_state: Vec<Result<(Vec<f64>, Option<(f64, f64)>)>> = (0..k)
            .into_par_iter()
            .map(|s| {
                let narrow = Kde::new(supports[s].clone(), dim, sigma.clone())?;
                let pts = &resampled[s];
                let pair = narrow.paired_eval(pts, scale)?;
                let density = |logs: &[f64]| -> Vec<f64> { logs.iter().map(|l| l.exp().max(f64::MIN_POSITIVE)).collect() };
                let batch = SampleBatch::from_scores(
                    pts.clone(),
                    dim,
                    density(&pair.log_narrow),
                    density(&pair.log_wide),
                    scores[s * big_m..(s + 1) * big_m].to_vec(),
                    clamps,
                )?;
                if batch.volume.degenerate {
                    return Ok((vec![0.0; n * dim], None));
                }
                let w = grad_weights(kind, &batch)?;
                let div = estimate_divergence(kind, &batch)?.value;
                let coeffs: Vec<f64> = w.iter().map(|x| x / big_m as f64).collect();
                let up = pair.weighted_support_grads(&narrow, pts, &coeffs)?;
                Ok((up, Some((div, batch.volume.value))))
            })
            .collect();

        let mut upstream = Array2::zeros((k * n, dim));
        let mut divs = Vec::new();
        let mut vols = Vec::new();
        let mut degenerate = 0;
        for (s, res) in per_state.into_iter().enumerate() {
            let (up, stats) = res?;
            for (i, g) in up.chunks_exact(dim).enumerate() {
                for d in 0..dim {
                    upstream[[s * n + i, d]] = g[d] / k as f64;
                }
            }
            match stats {
                Some((div, vol)) => {
                    divs.push(div);
                    vols.push(vol);
                }
                None => degenerate += 1,
            }
        }
        let grads = self.actor.backward(&tape, upstream.view());
        ensure_finite(&grads, "actor")?;
        self.actor_opt.step(&mut self.actor.net, &grads, &self.cfg.actor_adam());
        Ok(ActorStats {
            grad_norm: grads.norm(),
            objective: mean(&divs),
            volume_mean: mean(&vols),
            volume_min: vols.iter().copied().reduce(f64::min),
            degenerate,
        })
    }

    /// Maximum-entropy baseline: descends `log q(a) - log(xi(a) w(a))` with
    /// the KDE entropy term differentiated through queries and supports.
    pub fn actor_step_me(&mut self) -> Result<ActorStats> {
        let (k, n) = (self.cfg.k, self.cfg.n);
        let space = self.env.action_space();
        let dim = space.raw_dim();
        let cd = space.critic_dim();
        let sd = self.env.state_dim();
        let sigma = self.cfg.sigma.clone();
        let eps_r = self.cfg.eps_r;

        let features = self.sample_state_features(k, false)?;
        let latents = uniform_latents(k * n, self.cfg.latent_dim, &mut self.rng);
        let (actions, tape) = self
            .actor
            .forward_inputs_tape(stacked_inputs(&features, latents.view(), n));

        let mut flat = Vec::with_capacity(k * n * self.critic.input_dim());
        let mut views = Vec::with_capacity(k * n);
        for (r, a) in actions.rows().into_iter().enumerate() {
            let view = space.critic_view(a.as_slice().expect("contiguous row"), eps_r);
            let input = view.as_ref().map(|v| v.input).unwrap_or([0.0; 4]);
            self.critic.push_row(&mut flat, &features[r / n], &input[..cd]);
            views.push(view);
        }
        let cg = self.critic.input_grads(self.critic.rows(flat));

        let entropy: Vec<Result<(Vec<f64>, f64)>> = (0..k)
            .into_par_iter()
            .map(|s| {
                let sup: Vec<f64> = actions.slice(s![s * n..(s + 1) * n, ..]).iter().copied().collect();
                let kde = Kde::new(sup.clone(), dim, sigma.clone())?;
                let logq = kde.log_eval_many(&sup)?;
                let mut g = kde.weighted_support_grads(&sup, &vec![1.0; n])?;
                for (i, a) in sup.chunks_exact(dim).enumerate() {
                    let gq = kde.grad_query(a)?;
                    for d in 0..dim {
                        g[i * dim + d] += gq[d];
                    }
                }
                Ok((g, logq.iter().sum::<f64>() / n as f64))
            })
            .collect();

        let scale = 1.0 / (n * k) as f64;
        let mut upstream = Array2::zeros((k * n, dim));
        let mut objective = 0.0;
        for (s, res) in entropy.into_iter().enumerate() {
            let (g, mean_logq) = res?;
            objective += mean_logq / k as f64;
            for (i, gi) in g.chunks_exact(dim).enumerate() {
                for d in 0..dim {
                    upstream[[s * n + i, d]] = gi[d] * scale;
                }
            }
        }
        for (r, view) in views.iter().enumerate() {
            let Some(view) = view else { continue };
            let raw = actions.row(r).to_vec();
            let d_in: Vec<f64> = (0..cd).map(|c| cg.d_log_xi[[r, sd + c]]).collect();
            let g = space.critic_grad_to_raw(&features[r / n], &raw, &d_in, 1.0, eps_r);
            for d in 0..dim {
                upstream[[r, d]] -= g[d] * scale;
            }
            objective -= (cg.xi[r] * view.weight).ln() * scale;
        }
        let grads = self.actor.backward(&tape, upstream.view());
        ensure_finite(&grads, "actor")?;
        self.actor_opt.step(&mut self.actor.net, &grads, &self.cfg.actor_adam());
        Ok(ActorStats {
            grad_norm: grads.norm(),
            objective: Some(objective),
            volume_mean: None,
            volume_min: None,
            degenerate: 0,
        })
    }

    /// Conditional GAN baseline: one discriminator step (real = positive
    /// memory, fake = actor) and one generator step descending
    /// `log(1 - xi_D w)`.
    pub fn actor_step_gan(&mut self) -> Result<ActorStats> {
        let (k, n, l) = (self.cfg.k, self.cfg.n, self.cfg.l);
        let space = self.env.action_space();
        let dim = space.raw_dim();
        let cd = space.critic_dim();
        let sd = self.env.state_dim();
        let eps_r = self.cfg.eps_r;
        let mut disc = self
            .discriminator
            .take()
            .ok_or(Error::NotReady("discriminator not initialized"))?;

        // Discriminator.
        let n_real = l.div_ceil(2);
        let n_fake = l - n_real;
        let real: Vec<(Vec<f64>, Vec<f64>)> = self
            .memory
            .sample_positive(n_real, &mut self.rng)?
            .into_iter()
            .map(|e| (e.features.clone(), e.action.clone()))
            .collect();
        let fake_states = self.sample_state_features(n_fake, true)?;
        let fake_latents = uniform_latents(n_fake, self.cfg.latent_dim, &mut self.rng);
        let (fake, _) = self
            .actor
            .forward_inputs_tape(stacked_inputs(&fake_states, fake_latents.view(), 1));
        let mut flat = Vec::with_capacity(l * disc.input_dim());
        let mut targets = Vec::with_capacity(l);
        for (f, a) in &real {
            disc.push_row(&mut flat, f, a);
            targets.push(1.0);
        }
        for (r, a) in fake.rows().into_iter().enumerate() {
            let raw = a.to_vec();
            let norm = match space.critic_view(&raw, eps_r) {
                Some(v) => v.input[..cd].to_vec(),
                None => degenerate_norm(&raw, cd),
            };
            disc.push_row(&mut flat, &fake_states[r], &norm);
            targets.push(0.0);
        }
        let (_, dgrads) = disc.bce_grad(disc.rows(flat), &targets);
        ensure_finite(&dgrads, "discriminator")?;
        let cfg_c = self.cfg.critic_adam();
        self.disc_opt
            .as_mut()
            .expect("discriminator optimizer")
            .step(&mut disc.net, &dgrads, &cfg_c);

        // Generator.
        let features = self.sample_state_features(k, true)?;
        let latents = uniform_latents(k * n, self.cfg.latent_dim, &mut self.rng);
        let (actions, tape) = self
            .actor
            .forward_inputs_tape(stacked_inputs(&features, latents.view(), n));
        let mut flat = Vec::with_capacity(k * n * disc.input_dim());
        let mut views = Vec::with_capacity(k * n);
        for (r, a) in actions.rows().into_iter().enumerate() {
            let view = space.critic_view(a.as_slice().expect("contiguous row"), eps_r);
            let input = view.as_ref().map(|v| v.input).unwrap_or([0.0; 4]);
            disc.push_row(&mut flat, &features[r / n], &input[..cd]);
            views.push(view);
        }
        let cg = disc.input_grads(disc.rows(flat));
        let scale = 1.0 / (n * k) as f64;
        let mut upstream = Array2::zeros((k * n, dim));
        let mut objective = 0.0;
        for (r, view) in views.iter().enumerate() {
            let Some(view) = view else { continue };
            let sw = cg.xi[r] * view.weight;
            // d log(1 - sw) = -sw / (1 - sw) * (d log xi + d log w)
            let c = -sw / (1.0 - sw);
            let raw = actions.row(r).to_vec();
            let d_in: Vec<f64> = (0..cd).map(|j| c * cg.d_log_xi[[r, sd + j]]).collect();
            let g = space.critic_grad_to_raw(&features[r / n], &raw, &d_in, c, eps_r);
            for d in 0..dim {
                upstream[[r, d]] = g[d] * scale;
            }
            objective += (1.0 - sw).ln() * scale;
        }
        self.discriminator = Some(disc);
        let grads = self.actor.backward(&tape, upstream.view());
        ensure_finite(&grads, "actor")?;
        self.actor_opt.step(&mut self.actor.net, &grads, &self.cfg.actor_adam());
        Ok(ActorStats {
            grad_norm: grads.norm(),
            objective: Some(objective),
            volume_mean: None,
            volume_min: None,
            degenerate: 0,
        })
    }

    /// One outer step: interaction, critic and actor phases.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let mut positives = 0usize;
        for _ in 0..self.cfg.interaction_steps {
            positives += self.collect_step()?.outcome as usize;
        }
        let mut critic_loss = 0.0;
        for _ in 0..self.cfg.critic_steps {
            critic_loss += self.critic_step()?;
        }
        let mut objectives = Vec::new();
        let mut vol_means = Vec::new();
        let mut vol_min: Option<f64> = None;
        let mut degenerate = 0;
        let mut grad_norm = 0.0;
        for _ in 0..self.cfg.actor_steps {
            let st = self.actor_step()?;
            objectives.extend(st.objective);
            vol_means.extend(st.volume_mean);
            if let Some(v) = st.volume_min {
                vol_min = Some(vol_min.map_or(v, |m| m.min(v)));
            }
            degenerate += st.degenerate;
            grad_norm += st.grad_norm / self.cfg.actor_steps as f64;
        }
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            divergence: mean(&objectives),
            critic_loss: critic_loss / self.cfg.critic_steps as f64,
            positive_rate: positives as f64 / self.cfg.interaction_steps as f64,
            volume_mean: mean(&vol_means),
            volume_min: vol_min,
            degenerate,
            actor_grad_norm: grad_norm,
        })
    }

    /// Runs `steps` outer steps, calling `hook` after each.
    pub fn run(
        &mut self,
        steps: usize,
        mut hook: impl FnMut(&Trainer, &StepRecord) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let mut log = Vec::with_capacity(steps);
        for _ in 0..steps {
            let rec = self.train_step()?;
            hook(self, &rec)?;
            log.push(rec);
        }
        Ok(log)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut nets = vec![
            NetRecord {
                name: "actor".into(),
                net: self.actor.net.clone(),
                adam: self.actor_opt.clone(),
            },
            NetRecord {
                name: "critic".into(),
                net: self.critic.net.clone(),
                adam: self.critic_opt.clone(),
            },
        ];
        if let (Some(d), Some(o)) = (&self.discriminator, &self.disc_opt) {
            nets.push(NetRecord {
                name: "discriminator".into(),
                net: d.net.clone(),
                adam: o.clone(),
            });
        }
        Checkpoint {
            config_text: self.cfg.to_text(),
            step: self.step,
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            },
            nets,
        }
    }

    /// Restores networks, optimizer moments, step and RNG position from a
    /// checkpoint written by a trainer with the same architecture. The
    /// replay memory is not part of a checkpoint and is left untouched.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.expect_arch(expected_arch(&self.cfg))?;
        let a = ck.net("actor")?;
        self.actor.net = a.net.clone();
        self.actor_opt = a.adam.clone();
        let c = ck.net("critic")?;
        self.critic.net = c.net.clone();
        self.critic_opt = c.adam.clone();
        if let Some(d) = self.discriminator.as_mut() {
            let rec = ck.net("discriminator")?;
            d.net = rec.net.clone();
            self.disc_opt = Some(rec.adam.clone());
        }
        let mut rng = ChaCha8Rng::from_seed(ck.rng.seed);
        rng.set_stream(ck.rng.stream);
        rng.set_word_pos(ck.rng.word_pos);
        self.rng = rng;
        self.step = ck.step;
        Ok(())
    }
}

/// Normalized stand-in for an action at the radius singularity.
fn degenerate_norm(raw: &[f64], cd: usize) -> Vec<f64> {
    let mut v = raw[..cd.min(raw.len())].to_vec();
    if cd == 4 {
        v[2] = 0.0;
        v[3] = 1.0;
    }
    v
}

fn ensure_finite(g: &MlpGrads, what: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite {what} gradient")))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
