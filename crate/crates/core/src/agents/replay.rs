//! Fixed-capacity FIFO replay storage with uniform sampling.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// One interaction tuple. `terminal` is true only for physical termination;
/// time-limit ends keep it false so the TD bootstrap continues there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Ring buffer evicting oldest-first once `capacity` is reached. Sampling is
/// uniform with replacement across stored items.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> ReplayBuffer<T> {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
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

    pub fn sample(&self, rng: &mut dyn RngCore) -> &T {
        &self.items[rng.gen_range(0..self.items.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn never_exceeds_capacity_and_evicts_oldest() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 + 7u32 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 10);
        let held: Vec<u32> = buf.iter().copied().collect();
        for old in 0..7 {
            assert!(!held.contains(&old), "evicted item {old} still present");
        }
        for recent in 7..17 {
            assert!(held.contains(&recent));
        }
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..4usize {
            buf.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0u32; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[*buf.sample(&mut rng)] += 1;
        }
        // 3-sigma band around n/4 for a binomial with p = 1/4.
        let expected = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "count {c} outside band");
        }
    }
}
