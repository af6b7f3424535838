//! Balanced replay: successes and failures live in separate FIFO rings and
//! critic batches draw half from each.

use rand::Rng;

use crate::env::{Env, StateDescriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: StateDescriptor,
    /// Cached `state.features()`.
    pub features: Vec<f64>,
    /// Normalized action as consumed by the environment and critic.
    pub action: Vec<f64>,
    /// Radius of the raw action (1 for environments without one).
    pub radius: f64,
    pub outcome: bool,
}

impl Experience {
    pub fn new(state: StateDescriptor, action: Vec<f64>, radius: f64, outcome: bool) -> Self {
        let features = state.features();
        Self {
            state,
            features,
            action,
            radius,
            outcome,
        }
    }
}

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring<T> {
    items: Vec<T>,
    capacity: usize,
    /// Index of the oldest item once full.
    head: usize,
}

impl<T> Ring<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "ring capacity must be >= 1");
        Self {
            items: Vec::new(),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Item by age, 0 = oldest.
    pub fn get(&self, i: usize) -> &T {
        &self.items[(self.head + i) % self.items.len()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        (0..self.items.len()).map(move |i| self.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedMemory {
    positive: Ring<Experience>,
    negative: Ring<Experience>,
}

impl BalancedMemory {
    pub fn new(positive_capacity: usize, negative_capacity: usize) -> Self {
        Self {
            positive: Ring::new(positive_capacity),
            negative: Ring::new(negative_capacity),
        }
    }

    pub fn positive(&self) -> &Ring<Experience> {
        &self.positive
    }

    pub fn negative(&self) -> &Ring<Experience> {
        &self.negative
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_ready(&self) -> bool {
        !self.positive.is_empty() && !self.negative.is_empty()
    }

    pub fn push(&mut self, exp: Experience) {
        if exp.outcome {
            self.positive.push(exp);
        } else {
            self.negative.push(exp);
        }
    }

    /// `ceil(l/2)` positives followed by `floor(l/2)` negatives, uniform with
    /// replacement within each store.
    pub fn sample_balanced<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.positive.is_empty() {
            return Err(Error::NotReady("positive memory is empty"));
        }
        if self.negative.is_empty() {
            return Err(Error::NotReady("negative memory is empty"));
        }
        let n_pos = l.div_ceil(2);
        let mut out = Vec::with_capacity(l);
        for _ in 0..n_pos {
            out.push(self.positive.get(rng.random_range(0..self.positive.len())));
        }
        for _ in n_pos..l {
            out.push(self.negative.get(rng.random_range(0..self.negative.len())));
        }
        Ok(out)
    }

    /// Uniform draw over positives only.
    pub fn sample_positive<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.positive.is_empty() {
            return Err(Error::NotReady("positive memory is empty"));
        }
        Ok((0..k)
            .map(|_| self.positive.get(rng.random_range(0..self.positive.len())))
            .collect())
    }

    /// Uniform over the union of both stores; returns the experiences whose
    /// states are used.
    pub fn sample_states<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        let total = self.len();
        if total == 0 {
            return Err(Error::NotReady("memory is empty"));
        }
        Ok((0..k)
            .map(|_| {
                let i = rng.random_range(0..total);
                if i < self.positive.len() {
                    self.positive.get(i)
                } else {
                    self.negative.get(i - self.positive.len())
                }
            })
            .collect())
    }

    /// Pushes `count` randomly drawn, environment-labeled experiences, then
    /// keeps drawing (up to `max_extra` more) until both stores are non-empty.
    pub fn prefill<R: Rng + ?Sized>(&mut self, env: &Env, count: usize, max_extra: usize, rng: &mut R) -> Result<()> {
        let mut attempts = 0usize;
        while attempts < count || (!self.is_ready() && attempts < count + max_extra) {
            let state = env.generate_state(rng);
            let (raw, norm) = env.random_action(rng);
            let radius = raw_radius(&raw);
            let outcome = env.evaluate(&state, &norm);
            self.push(Experience::new(state, norm, radius, outcome));
            attempts += 1;
        }
        if !self.is_ready() {
            return Err(Error::EnvironmentTooSparse { attempts });
        }
        Ok(())
    }
}

/// Radius of a raw grasp action, 1 for lower-dimensional actions.
pub fn raw_radius(raw: &[f64]) -> f64 {
    if raw.len() == 4 {
        raw[2].hypot(raw[3])
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(c: f64, outcome: bool) -> Experience {
        Experience::new(StateDescriptor::Bimodal1d { c }, vec![0.0], 1.0, outcome)
    }

    #[test]
    fn routing_and_fifo() {
        let mut m = BalancedMemory::new(3, 3);
        m.push(exp(0.0, true));
        assert_eq!((m.positive().len(), m.negative().len()), (1, 0));
        for i in 1..=3 {
            m.push(exp(i as f64, true));
        }
        assert_eq!(m.positive().len(), 3);
        let cs: Vec<f64> = m
            .positive()
            .iter()
            .map(|e| match e.state {
                StateDescriptor::Bimodal1d { c } => c,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(cs, vec![1.0, 2.0, 3.0]);
        assert!(m.negative().is_empty());
    }

    #[test]
    fn balanced_split() {
        let mut m = BalancedMemory::new(10, 10);
        m.push(exp(0.0, true));
        assert!(matches!(m.sample_balanced(4, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::NotReady(_))));
        m.push(exp(0.1, false));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = m.sample_balanced(3, &mut rng).unwrap();
        assert_eq!(b.iter().filter(|e| e.outcome).count(), 2);
        let b = m.sample_balanced(32, &mut rng).unwrap();
        assert_eq!(b.iter().filter(|e| e.outcome).count(), 16);
    }

    #[test]
    fn single_state_memory() {
        let mut m = BalancedMemory::new(4, 4);
        m.push(exp(0.05, false));
        let s = m.sample_states(1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s[0].state, StateDescriptor::Bimodal1d { c: 0.05 });
        assert!(BalancedMemory::new(1, 1).sample_states(1, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn prefill_fills_both_stores() {
        let env = Env::new(EnvKind::Bimodal1d);
        let mut m = BalancedMemory::new(1000, 1000);
        m.prefill(&env, 200, 1000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(m.is_ready());
        assert_eq!(m.len(), 200);
        for e in m.positive().iter().chain(m.negative().iter()) {
            assert_eq!(env.evaluate(&e.state, &e.action), e.outcome);
        }
    }
}
