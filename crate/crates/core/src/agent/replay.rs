//! Experience replay: a FIFO ring and a two-part selective/FIFO variant.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::agent::{ActionId, ReplayKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Experience<I> {
    pub state: I,
    pub action: ActionId,
    /// Discounted return observed from this decision to the end of its episode.
    pub target: f64,
}

/// Fixed-capacity buffer that evicts the oldest entry first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<I> {
    items: VecDeque<Experience<I>>,
    capacity: usize,
}

impl<I> ReplayBuffer<I> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
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

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience<I>> {
        self.items.iter()
    }

    pub fn push(&mut self, e: Experience<I>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    /// `n` distinct entries chosen uniformly, or `None` if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Experience<I>>> {
        if n > self.items.len() {
            return None;
        }
        Some(
            index::sample(rng, self.items.len(), n)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

/// A long-term part filled by reservoir sampling over the whole experience
/// stream, plus a short FIFO part holding the most recent experiences.
/// Batches draw half from each part.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReplayBuffer<I> {
    selective: Vec<Experience<I>>,
    selective_capacity: usize,
    seen: u64,
    recent: ReplayBuffer<I>,
}

impl<I: Clone> SplitReplayBuffer<I> {
    pub fn new(selective_capacity: usize, fifo_capacity: usize) -> Self {
        assert!(selective_capacity > 0, "selective capacity must be positive");
        Self {
            selective: Vec::with_capacity(selective_capacity),
            selective_capacity,
            seen: 0,
            recent: ReplayBuffer::new(fifo_capacity),
        }
    }

    /// 90% / 10% split of a total capacity.
    pub fn with_total(capacity: usize) -> Self {
        let fifo = (capacity / 10).max(1);
        Self::new(capacity - fifo, fifo)
    }

    pub fn selective_len(&self) -> usize {
        self.selective.len()
    }

    pub fn fifo_len(&self) -> usize {
        self.recent.len()
    }

    pub fn len(&self) -> usize {
        self.selective.len() + self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience<I>> {
        self.selective.iter().chain(self.recent.iter())
    }

    pub fn push<R: Rng + ?Sized>(&mut self, e: Experience<I>, rng: &mut R) {
        self.seen += 1;
        if self.selective.len() < self.selective_capacity {
            self.selective.push(e.clone());
        } else {
            let j = rng.gen_range(0..self.seen);
            if (j as usize) < self.selective_capacity {
                self.selective[j as usize] = e.clone();
            }
        }
        self.recent.push(e);
    }

    /// `n / 2` from the selective part and `n − n / 2` from the FIFO part.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Experience<I>>> {
        let half = n / 2;
        if half > self.selective.len() || n - half > self.recent.len() {
            return None;
        }
        let mut out: Vec<_> = index::sample(rng, self.selective.len(), half)
            .into_iter()
            .map(|i| &self.selective[i])
            .collect();
        out.extend(self.recent.sample(n - half, rng)?);
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayMemory<I> {
    Fifo(ReplayBuffer<I>),
    Split(SplitReplayBuffer<I>),
}

impl<I: Clone> ReplayMemory<I> {
    pub fn new(kind: ReplayKind, capacity: usize) -> Self {
        match kind {
            ReplayKind::Fifo => Self::Fifo(ReplayBuffer::new(capacity)),
            ReplayKind::Split => Self::Split(SplitReplayBuffer::with_total(capacity)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Fifo(b) => b.len(),
            Self::Split(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = &Experience<I>> + '_> {
        match self {
            Self::Fifo(b) => Box::new(b.iter()),
            Self::Split(b) => Box::new(b.iter()),
        }
    }

    pub fn push<R: Rng + ?Sized>(&mut self, e: Experience<I>, rng: &mut R) {
        match self {
            Self::Fifo(b) => b.push(e),
            Self::Split(b) => b.push(e, rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Experience<I>>> {
        match self {
            Self::Fifo(b) => b.sample(n, rng),
            Self::Split(b) => b.sample(n, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(i: usize) -> Experience<usize> {
        Experience {
            state: i,
            action: ActionId::Go,
            target: 0.0,
        }
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut b = ReplayBuffer::new(1000);
        for i in 0..1001 {
            b.push(exp(i));
        }
        assert_eq!(b.len(), 1000);
        assert_eq!(b.iter().next().unwrap().state, 1);
        assert!(b.iter().all(|e| e.state != 0));
    }

    #[test]
    fn sample_is_distinct() {
        let mut b = ReplayBuffer::new(1000);
        for i in 0..1000 {
            b.push(exp(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<_> = b.sample(60, &mut rng).unwrap().iter().map(|e| e.state).collect();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 60);
        assert!(b.sample(1001, &mut rng).is_none());
    }

    #[test]
    fn split_sample_draws_half_from_each_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = SplitReplayBuffer::new(900, 100);
        for i in 0..5000 {
            b.push(exp(i), &mut rng);
        }
        assert_eq!(b.selective_len(), 900);
        assert_eq!(b.fifo_len(), 100);
        let s = b.sample(60, &mut rng).unwrap();
        assert_eq!(s.len(), 60);
        let recent = s[30..].iter().filter(|e| e.state >= 4900).count();
        assert_eq!(recent, 30);
    }

    #[test]
    fn reservoir_keeps_old_experiences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = SplitReplayBuffer::new(900, 100);
        for i in 0..9000 {
            b.push(exp(i), &mut rng);
        }
        let early = b.iter().take(900).filter(|e| e.state < 4500).count();
        // uniform reservoir: about half the selective part predates the midpoint
        assert!((350..=550).contains(&early), "{early}");
    }
}
