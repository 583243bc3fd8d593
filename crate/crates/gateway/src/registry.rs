//! Connected consoles and their bounded send queues.

use std::collections::BTreeMap;

use axum::extract::ws::Utf8Bytes;
use tokio::sync::mpsc::error::TrySendError;
use tokio::sync::mpsc::{self, Receiver, Sender};

/// Messages a console may have queued before it is dropped.
pub const DEFAULT_BACKLOG: usize = 64;

pub type ClientId = u64;

/// Owned by the dispatcher task; nothing else touches it.
#[derive(Debug)]
pub struct Registry {
    backlog: usize,
    clients: BTreeMap<ClientId, Sender<Utf8Bytes>>,
}

impl Registry {
    pub fn new(backlog: usize) -> Self {
        Self { backlog: backlog.max(1), clients: BTreeMap::new() }
    }

    /// Adds a client and returns the receiving end of its queue.
    pub fn register(&mut self, id: ClientId) -> Receiver<Utf8Bytes> {
        let (tx, rx) = mpsc::channel(self.backlog);
        self.clients.insert(id, tx);
        rx
    }

    pub fn remove(&mut self, id: ClientId) -> bool {
        self.clients.remove(&id).is_some()
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Queues `msg` for every client. Clients whose queue is full, or whose
    /// connection is gone, are removed; their ids are returned.
    pub fn broadcast(&mut self, msg: &Utf8Bytes) -> Vec<ClientId> {
        let mut dropped = Vec::new();
        for (&id, tx) in &self.clients {
            match tx.try_send(msg.clone()) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) | Err(TrySendError::Closed(_)) => dropped.push(id),
            }
        }
        for id in &dropped {
            self.clients.remove(id);
        }
        dropped
    }
}
