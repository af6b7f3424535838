//! Post-training evaluation: accuracy, per-state mode-rank shares and
//! density-based action optimization.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{label_modes, Env, EnvKind, ShapeKind, StateDescriptor};
use crate::error::{Error, Result};
use crate::kde::Kde;
use crate::models::Actor;

/// Anything that proposes raw actions for a state.
pub trait Policy: Sync {
    fn raw_dim(&self) -> usize;
    /// `count` raw actions, flat row-major.
    fn sample_raw(&self, state: &StateDescriptor, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl Policy for Actor {
    fn raw_dim(&self) -> usize {
        self.action_dim()
    }

    fn sample_raw(&self, state: &StateDescriptor, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z = Array2::from_shape_fn((count, self.latent_dim()), |_| rng.random::<f64>());
        self.forward(&state.features(), z.view()).iter().copied().collect()
    }
}

/// Uniform random actions over the environment's action space.
pub struct UniformPolicy<'a>(pub &'a Env);

impl Policy for UniformPolicy<'_> {
    fn raw_dim(&self) -> usize {
        self.0.action_space().raw_dim()
    }

    fn sample_raw(&self, _state: &StateDescriptor, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..count).flat_map(|_| self.0.random_action(rng).0).collect()
    }
}

/// Indices kept after dropping the `floor(fraction * A)` actions of lowest
/// density under a KDE built from the batch itself. Ties drop the earliest
/// index. Kept indices are returned in input order.
pub fn action_optimization(actions: &[f64], dim: usize, sigma: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Domain(format!("rejection fraction {fraction} not in [0, 1)")));
    }
    let a = actions.len() / dim;
    let drop = (fraction * a as f64).floor() as usize;
    if drop == 0 {
        return Ok((0..a).collect());
    }
    let kde = Kde::new(actions.to_vec(), dim, sigma.to_vec())?;
    let logq = kde.log_eval_many(actions)?;
    let mut order: Vec<usize> = (0..a).collect();
    order.sort_by(|&i, &j| logq[i].partial_cmp(&logq[j]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let mut keep = vec![true; a];
    for &i in &order[..drop] {
        keep[i] = false;
    }
    Ok((0..a).filter(|&i| keep[i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub states: usize,
    pub actions: usize,
    pub action_opt: f64,
    /// KDE bandwidth for action optimization.
    pub sigma: Vec<f64>,
    /// Oracle grid resolution.
    pub resolution: [usize; 3],
    pub seed: u64,
}

impl EvalSpec {
    pub fn new(states: usize, actions: usize, sigma: Vec<f64>, seed: u64) -> Self {
        Self {
            states,
            actions,
            action_opt: 0.0,
            sigma,
            resolution: [64, 64, 32],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 {
            return Err(Error::Config("states and actions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.action_opt) {
            return Err(Error::Config("action_opt must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of one state's actions.
#[derive(Debug, Clone, PartialEq)]
struct StateOutcome {
    total: usize,
    feasible: usize,
    /// Share of each mode, sorted descending and padded to the state's mode
    /// count.
    ranked: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    /// Shape name, or the environment name for toy environments.
    pub name: String,
    pub accuracy: f64,
    /// Mean share per rank; rank 1 first.
    pub rank_shares: Vec<f64>,
    /// Mean share of actions that failed or could not be assigned a mode.
    pub failure: f64,
    pub states: usize,
    pub actions: usize,
}

impl GroupReport {
    /// Share of the last (least frequent) rank.
    pub fn least_mode(&self) -> f64 {
        self.rank_shares.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRankReport {
    pub groups: Vec<GroupReport>,
}

/// Feasible / total over `spec.states` random states.
pub fn accuracy<P: Policy + ?Sized>(policy: &P, env: &Env, spec: &EvalSpec) -> Result<f64> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let states: Vec<_> = (0..spec.states).map(|_| env.generate_state(&mut rng)).collect();
    let outcomes = evaluate_states(policy, env, &states, spec, false)?;
    let total: usize = outcomes.iter().map(|o| o.total).sum();
    let feasible: usize = outcomes.iter().map(|o| o.feasible).sum();
    Ok(feasible as f64 / total as f64)
}

/// Mode-rank shares per shape (grasp) or for the single toy group.
pub fn mode_rank_shares<P: Policy + ?Sized>(
    policy: &P,
    env: &Env,
    shapes: &[ShapeKind],
    spec: &EvalSpec,
) -> Result<ModeRankReport> {
    spec.validate()?;
    let mut groups = Vec::new();
    let names: Vec<Option<ShapeKind>> = match env.kind {
        EnvKind::Grasp2d => shapes.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    for (gi, shape) in names.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(gi as u64);
        let states: Vec<_> = (0..spec.states)
            .map(|_| match shape {
                Some(s) => env.generate_shape_state(s, &mut rng),
                None => env.generate_state(&mut rng),
            })
            .collect();
        let outcomes = evaluate_states(policy, env, &states, spec, true)?;
        groups.push(aggregate(
            shape.map_or_else(|| env.kind.to_string(), |s| s.to_string()),
            &outcomes,
            spec.actions,
        ));
    }
    Ok(ModeRankReport { groups })
}

fn aggregate(name: String, outcomes: &[StateOutcome], actions: usize) -> GroupReport {
    let width = outcomes.iter().map(|o| o.ranked.len()).max().unwrap_or(0);
    let mut rank_shares = vec![0.0; width];
    let mut failure = 0.0;
    let mut total = 0;
    let mut feasible = 0;
    for o in outcomes {
        for (r, s) in o.ranked.iter().enumerate() {
            rank_shares[r] += s;
        }
        failure += 1.0 - o.ranked.iter().sum::<f64>();
        total += o.total;
        feasible += o.feasible;
    }
    let n = outcomes.len() as f64;
    rank_shares.iter_mut().for_each(|s| *s /= n);
    GroupReport {
        name,
        accuracy: feasible as f64 / total as f64,
        rank_shares,
        failure: failure / n,
        states: outcomes.len(),
        actions,
    }
}

fn evaluate_states<P: Policy + ?Sized>(
    policy: &P,
    env: &Env,
    states: &[StateDescriptor],
    spec: &EvalSpec,
    with_modes: bool,
) -> Result<Vec<StateOutcome>> {
    states
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 << 32 | i as u64);
            evaluate_state(policy, env, state, spec, with_modes, &mut rng)
        })
        .collect()
}

fn evaluate_state<P: Policy + ?Sized>(
    policy: &P,
    env: &Env,
    state: &StateDescriptor,
    spec: &EvalSpec,
    with_modes: bool,
    rng: &mut ChaCha8Rng,
) -> Result<StateOutcome> {
    let dim = policy.raw_dim();
    let raw = policy.sample_raw(state, spec.actions, rng);
    let keep = action_optimization(&raw, dim, &spec.sigma, spec.action_opt)?;
    let space = env.action_space();
    let eval = env.evaluator(state);
    let (grid, labels) = if with_modes {
        let g = env.feasible_grid(state, spec.resolution);
        let l = label_modes(&g);
        (Some(g), Some(l))
    } else {
        (None, None)
    };
    let mut counts = vec![0usize; labels.as_ref().map_or(0, |l| l.count)];
    let mut feasible = 0;
    for &i in &keep {
        let a = &raw[i * dim..(i + 1) * dim];
        let Some(view) = space.critic_view(a, 1e-6) else { continue };
        let norm = &view.input[..space.critic_dim()];
        if !eval.evaluate(norm) {
            continue;
        }
        feasible += 1;
        if let (Some(g), Some(l)) = (&grid, &labels) {
            if let Some(m) = g.nearest_mode(l, env.grid_point(norm)) {
                counts[m as usize] += 1;
            }
        }
    }
    let total = keep.len();
    let mut ranked: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    ranked.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    Ok(StateOutcome {
        total,
        feasible,
        ranked,
    })
}

impl ModeRankReport {
    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Checks that rank shares and failure share partition the action mass.
    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            let sum = g.rank_shares.iter().sum::<f64>() + g.failure;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("{}: shares sum to {sum}", g.name)));
            }
        }
        Ok(())
    }

    /// `shape,rank,share,failure,accuracy`, one row per rank.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "shape,rank,share,failure,accuracy")?;
        for g in &self.groups {
            for (r, s) in g.rank_shares.iter().enumerate() {
                writeln!(out, "{},{},{},{},{}", g.name, r + 1, s, g.failure, g.accuracy)?;
            }
        }
        Ok(())
    }

    /// Human-readable table: accuracy and least-ranked mode per group, in
    /// percent.
    pub fn summary(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<14}", "");
        for g in &self.groups {
            let _ = write!(s, "{:>10}", g.name);
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<14}", format!("{label} acc %"));
        for g in &self.groups {
            let _ = write!(s, "{:>10.1}", 100.0 * g.accuracy);
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<14}", format!("{label} least %"));
        for g in &self.groups {
            let _ = write!(s, "{:>10.1}", 100.0 * g.least_mode());
        }
        let _ = writeln!(s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Policy for Fixed {
        fn raw_dim(&self) -> usize {
            self.0.len()
        }

        fn sample_raw(&self, _: &StateDescriptor, count: usize, _: &mut ChaCha8Rng) -> Vec<f64> {
            (0..count).flat_map(|_| self.0.clone()).collect()
        }
    }

    /// Offsets relative to the state: `c + 0.5` always.
    struct RightMode;

    impl Policy for RightMode {
        fn raw_dim(&self) -> usize {
            1
        }

        fn sample_raw(&self, state: &StateDescriptor, count: usize, _: &mut ChaCha8Rng) -> Vec<f64> {
            let StateDescriptor::Bimodal1d { c } = state else { unreachable!() };
            vec![c + 0.5; count]
        }
    }

    #[test]
    fn optimization_identity_and_outlier() {
        let a: Vec<f64> = (0..10).map(|i| 0.1 + 0.001 * i as f64).chain([0.9]).collect();
        assert_eq!(action_optimization(&a, 1, &[0.02], 0.0).unwrap(), (0..11).collect::<Vec<_>>());
        // floor(0.09 * 11) = 0: nothing is dropped
        assert_eq!(action_optimization(&a, 1, &[0.02], 0.09).unwrap(), (0..11).collect::<Vec<_>>());
        assert_eq!(action_optimization(&a, 1, &[0.02], 0.1).unwrap(), (0..10).collect::<Vec<_>>());
        // identical densities: earliest index dropped
        assert_eq!(action_optimization(&[0.0, 0.0, 0.0], 1, &[0.1], 0.34).unwrap(), vec![1, 2]);
    }

    #[test]
    fn single_mode_collapse() {
        let env = Env::new(EnvKind::Bimodal1d);
        let spec = EvalSpec {
            resolution: [512, 1, 1],
            ..EvalSpec::new(20, 50, vec![0.02], 1)
        };
        let r = mode_rank_shares(&RightMode, &env, &[], &spec).unwrap();
        r.validate().unwrap();
        let g = &r.groups[0];
        assert_eq!(g.rank_shares, vec![1.0, 0.0]);
        assert_eq!(g.accuracy, 1.0);
    }

    #[test]
    fn infeasible_fixed_action() {
        let env = Env::new(EnvKind::Bimodal1d);
        let spec = EvalSpec::new(5, 10, vec![0.02], 1);
        assert_eq!(accuracy(&Fixed(vec![0.0]), &env, &spec).unwrap(), 0.0);
        assert!(accuracy(&Fixed(vec![0.0]), &env, &EvalSpec::new(0, 10, vec![0.02], 1)).is_err());
    }
}
