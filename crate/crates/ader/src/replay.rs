//! Fixed-capacity FIFO experience store with uniform random sampling.

use rand::Rng;

use crate::{Error, Result};

/// One environment interaction record. `done` is true only on a real
/// terminal (goal reached), never on a timeout, so timed-out transitions
/// still bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

impl Transition {
    fn validate(&self) -> Result<()> {
        if self.obs.len() != self.next_obs.len() {
            return Err(Error::InvalidTransition(format!(
                "obs length {} != next_obs length {}",
                self.obs.len(),
                self.next_obs.len()
            )));
        }
        if !self.reward.is_finite() {
            return Err(Error::InvalidTransition("non-finite reward".into()));
        }
        if self
            .obs
            .iter()
            .chain(&self.next_obs)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidTransition("non-finite observation".into()));
        }
        if self.action.iter().any(|&a| !(-1.0..=1.0).contains(&a)) {
            return Err(Error::InvalidTransition(
                "action component outside [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Ring buffer over [`Transition`]s. Once full, each push evicts the oldest
/// entry; sampling is uniform with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Access in insertion-agnostic storage order. Use [`ReplayBuffer::iter_fifo`]
    /// for oldest-to-newest order.
    #[inline]
    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Iterates transitions from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Appends a transition, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if let Some(first) = self.items.first() {
            if t.obs.len() != first.obs.len() {
                return Err(Error::InvalidTransition(format!(
                    "obs length {} != buffered obs length {}",
                    t.obs.len(),
                    first.obs.len()
                )));
            }
            if t.action.len() != first.action.len() {
                return Err(Error::InvalidTransition(format!(
                    "action length {} != buffered action length {}",
                    t.action.len(),
                    first.action.len()
                )));
            }
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Draws `batch_size` storage indices uniformly with replacement.
    /// The draws consume exactly `batch_size` values from `rng`, in order.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok((0..batch_size)
            .map(|_| rng.gen_range(0..self.items.len()))
            .collect())
    }

    /// Uniform sample of `batch_size` transitions, with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(idx.into_iter().map(|i| &self.items[i]).collect())
    }
}
