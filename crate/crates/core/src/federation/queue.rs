use crate::error::{Error, Result};
use crate::federation::ClientUpdate;

/// Outcome of an enqueue.
#[derive(Debug, Clone, PartialEq)]
pub enum Flush<T> {
    Pending,
    /// Exactly `tau` updates in arrival order; the queue is now empty.
    Ready(Vec<ClientUpdate<T>>),
}

/// Server-side buffer of client updates, flushed when it reaches `tau`.
#[derive(Debug, Clone)]
pub struct UpdateQueue<T> {
    items: Vec<ClientUpdate<T>>,
    tau: usize,
}

impl<T> UpdateQueue<T> {
    pub fn new(tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::arg("tau", "must be >= 1"));
        }
        Ok(Self {
            items: Vec::with_capacity(tau),
            tau,
        })
    }

    pub fn enqueue(&mut self, update: ClientUpdate<T>) -> Flush<T> {
        self.items.push(update);
        if self.items.len() == self.tau {
            Flush::Ready(std::mem::replace(&mut self.items, Vec::with_capacity(self.tau)))
        } else {
            Flush::Pending
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn pending(&self) -> &[ClientUpdate<T>] {
        &self.items
    }
}
