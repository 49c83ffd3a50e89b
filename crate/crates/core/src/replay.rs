//! Fixed-capacity experience store with uniform sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::networks::{Action, Observation, SwitchChoice};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub x: Observation,
    pub a: Action,
    pub r: f64,
    pub x_next: Observation,
    /// Which branch produced `a`.
    pub sigma: SwitchChoice,
    /// True only when the episode ended absorbingly (reach or crash).
    pub terminal: bool,
}

/// Ring buffer; once full, the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of pushes so far.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.pushed % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.pushed += 1;
    }

    /// Current contents, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            (self.pushed % self.capacity as u64) as usize
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Result<Vec<&'a Transition>> {
        if self.items.len() < n || n == 0 {
            return Err(Error::NotEnoughData {
                have: self.items.len(),
                need: n.max(1),
            });
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn t(r: f64) -> Transition {
        let obs = Observation {
            scan_stack: vec![Arc::from(vec![1.0])],
            speed: [0.0, 0.0],
            target_local: [1.0, 0.0],
        };
        Transition {
            x: obs.clone(),
            a: Action::default(),
            r,
            x_next: obs,
            sigma: SwitchChoice::Policy,
            terminal: false,
        }
    }

    #[test]
    fn fifo_overwrite() {
        let mut b = ReplayBuffer::new(2).unwrap();
        b.push(t(1.0));
        assert_eq!(b.len(), 1);
        b.push(t(2.0));
        b.push(t(3.0));
        assert_eq!(b.len(), 2);
        assert_eq!(b.pushed(), 3);
        let rs: Vec<f64> = b.iter().map(|x| x.r).collect();
        assert_eq!(rs, vec![2.0, 3.0]);
    }

    #[test]
    fn sample_single_and_insufficient() {
        let mut b = ReplayBuffer::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(1, &mut rng), Err(Error::NotEnoughData { have: 0, need: 1 })));
        b.push(t(7.0));
        assert_eq!(b.sample(1, &mut rng).unwrap()[0].r, 7.0);
        assert!(b.sample(2, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_non_mutating() {
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            b.push(t(i as f64));
        }
        let before: Vec<Transition> = b.iter().cloned().collect();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(8, &mut rng).unwrap().iter().map(|x| x.r).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        let after: Vec<Transition> = b.iter().cloned().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            b.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..n / 10 {
            for x in b.sample(10, &mut rng).unwrap() {
                counts[x.r as usize] += 1;
            }
        }
        // binomial(n, 1/10): 3σ band around n/10
        let p = 0.1;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
