//! Episode ring buffer with uniform sampling (with replacement).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::episode::Episode;
use crate::{Error, Result};

#[derive(Debug)]
pub struct ReplayBuffer {
    episodes: Vec<Episode>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            episodes: Vec::with_capacity(capacity.min(1024)),
            capacity,
            next: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Stores an episode, overwriting the oldest once at capacity.
    pub fn store(&mut self, episode: Episode) {
        if self.episodes.len() < self.capacity {
            self.episodes.push(episode);
        } else {
            self.episodes[self.next] = episode;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Episode>> {
        if self.episodes.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch)
            .map(|_| &self.episodes[rng.gen_range(0..self.episodes.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn marker_episode(id: f64) -> Episode {
        Episode {
            n_agents: 1,
            n_actions: 2,
            len: 1,
            states: vec![vec![id]; 2],
            obs: vec![vec![vec![id]]; 2],
            avail: vec![vec![vec![true; 2]]; 2],
            actions: vec![vec![0]],
            rewards: vec![id],
        }
    }

    #[test]
    fn ring_overwrites_oldest_first() {
        let mut buf = ReplayBuffer::new(2);
        buf.store(marker_episode(1.0));
        buf.store(marker_episode(2.0));
        buf.store(marker_episode(3.0));
        let ids: Vec<f64> = buf.episodes.iter().map(|e| e.rewards[0]).collect();
        assert_eq!(buf.len(), 2);
        assert!(ids.contains(&2.0) && ids.contains(&3.0) && !ids.contains(&1.0));
        assert_eq!(buf.inserted(), 3);
    }

    #[test]
    fn sampling_with_replacement_from_singleton() {
        let mut buf = ReplayBuffer::new(4);
        buf.store(marker_episode(7.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = buf.sample(4, &mut rng).unwrap();
        assert_eq!(sample.len(), 4);
        assert!(sample.iter().all(|e| e.rewards[0] == 7.0));
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let buf = ReplayBuffer::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn sampling_is_uniform_by_chi_square() {
        let mut buf = ReplayBuffer::new(8);
        for i in 0..8 {
            buf.store(marker_episode(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut counts = [0usize; 8];
        for e in buf.sample(n, &mut rng).unwrap() {
            counts[e.rewards[0] as usize] += 1;
        }
        let expect = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expect).powi(2) / expect).sum();
        // 7 degrees of freedom, 99.9th percentile ≈ 24.3
        assert!(chi2 < 24.3, "chi2 = {chi2}, counts = {counts:?}");
    }
}
