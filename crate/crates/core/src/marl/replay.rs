use rand::seq::index;
use rand::Rng;

/// One joint transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    /// Per-agent rewards, adapted when reward inference is on.
    pub rewards: Vec<f64>,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
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

    /// Inserts `e`, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` distinct entries drawn uniformly (all of them if fewer are stored).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: f64) -> Experience {
        Experience {
            state: vec![tag],
            actions: vec![0],
            rewards: vec![tag],
            next_state: vec![tag],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(exp(i as f64));
        }
        assert_eq!(b.len(), 3);
        let tags: Vec<f64> = b.iter().map(|e| e.state[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut b = ReplayBuffer::new(50);
        for i in 0..50 {
            b.push(exp(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tags: Vec<i64> = b.sample(50, &mut rng).iter().map(|e| e.state[0] as i64).collect();
        tags.sort();
        assert_eq!(tags, (0..50).collect::<Vec<_>>());
    }
}
