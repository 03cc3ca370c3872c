use rand::seq::index;
use rand::Rng;

use crate::error::{DqsError, Result};

pub const DEFAULT_BUFFER_CAPACITY: usize = 250_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True environment termination. Time-limit truncation is not terminal.
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(DqsError::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions in storage order (not insertion order once wrapped).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct stored transitions chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if n > self.items.len() {
            return Err(DqsError::NotReady {
                size: self.items.len(),
                requested: n,
            });
        }
        Ok(index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(i: usize) -> Transition {
        Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: i as f64,
            next_state: vec![i as f64 + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(5).unwrap();
        for i in 0..6 {
            b.push(t(i));
        }
        assert_eq!(b.len(), 5);
        assert!(b.iter().all(|x| x.reward != 0.0));
        assert!(b.iter().any(|x| x.reward == 5.0));
    }

    #[test]
    fn exhaustive_sample_is_permutation() {
        let mut b = ReplayBuffer::new(8).unwrap();
        for i in 0..8 {
            b.push(t(i));
        }
        let mut got: Vec<f64> = b.sample(8, &mut seeded(1)).unwrap().iter().map(|x| x.reward).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, (0..8).map(|i| i as f64).collect::<Vec<_>>());
        assert!(matches!(b.sample(9, &mut seeded(1)), Err(DqsError::NotReady { size: 8, requested: 9 })));
    }
}
