//! Fixed-capacity FIFO experience buffer with uniform sampling.

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, CarState};

pub const DEFAULT_CAPACITY: usize = 4000;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("cannot sample from an empty replay buffer")]
    Empty,
    #[error("replay capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: CarState,
    pub action: Action,
    pub reward: f64,
    pub next_state: CarState,
    /// Set only when the goal was reached; a step-limit cutoff is not terminal.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    // next slot to overwrite once full
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.storage.len() == self.capacity
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.cursor] = transition;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Chronological access: `0` is the oldest stored transition.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        if index >= self.storage.len() {
            return None;
        }
        let slot = if self.is_full() {
            (self.cursor + index) % self.capacity
        } else {
            index
        };
        self.storage.get(slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.len()).filter_map(move |i| self.get(i))
    }

    /// Storage slots for `batch_size` independent uniform draws with replacement.
    pub fn sample_slots<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) -> Result<(), ReplayError> {
        if self.storage.is_empty() {
            return Err(ReplayError::Empty);
        }
        let n = self.storage.len();
        out.clear();
        out.extend((0..batch_size).map(|_| rng.random_range(0..n)));
        Ok(())
    }

    pub fn slot(&self, slot: usize) -> &Transition {
        &self.storage[slot]
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>, ReplayError> {
        let mut slots = Vec::with_capacity(batch_size);
        self.sample_slots(batch_size, rng, &mut slots)?;
        Ok(slots.into_iter().map(|s| self.storage[s]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(k: usize) -> Transition {
        Transition {
            state: CarState::new(-0.5, 0.0),
            action: Action::Coast,
            reward: -1.0,
            next_state: CarState::new(-0.5, k as f64 * 1e-6),
            terminal: false,
        }
    }

    fn tag(t: &Transition) -> usize {
        (t.next_state.velocity * 1e6).round() as usize
    }

    #[test]
    fn fills_to_capacity() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        for k in 0..5 {
            buf.push(tagged(k));
        }
        assert_eq!(buf.len(), 5);
        assert!(buf.is_full());
    }

    #[test]
    fn evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        for k in 1..=6 {
            buf.push(tagged(k));
        }
        assert_eq!(buf.len(), 5);
        let tags: Vec<usize> = buf.iter().map(tag).collect();
        assert_eq!(tags, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn singleton_sampled_with_replacement() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push(tagged(7));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = buf.sample(3, &mut rng).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|t| tag(t) == 7));
    }

    #[test]
    fn empty_buffer_errors() {
        let buf = ReplayBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.sample(1, &mut rng).unwrap_err(), ReplayError::Empty);
        assert_eq!(ReplayBuffer::new(0).unwrap_err(), ReplayError::ZeroCapacity);
    }

    #[test]
    fn default_sizes() {
        assert_eq!(DEFAULT_CAPACITY, 4000);
        assert_eq!(DEFAULT_BATCH_SIZE, 32);
    }
}
