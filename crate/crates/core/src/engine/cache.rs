use std::fmt;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use sha2::{Digest, Sha256};

use crate::expr::{Signature, Value};

pub const DEFAULT_CACHE_ENTRIES: usize = 1 << 20;

/// Identity of an input batch: a digest of the batch seed and phase label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BatchToken(pub [u8; 32]);

impl BatchToken {
    pub fn new(seed: u64, phase: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"batch\0");
        h.update(seed.to_le_bytes());
        h.update(phase.as_bytes());
        BatchToken(h.finalize().into())
    }
}

impl fmt::Debug for BatchToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BatchToken({})", &hex::encode(self.0)[..12])
    }
}

/// Digest of a node's full upstream computation under a path.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubpathKey(pub [u8; 32]);

/// One parameter's contribution to a [`SubpathKey`].
pub enum KeyPart<'a> {
    Node(&'a SubpathKey),
    Input(&'a str),
}

impl SubpathKey {
    pub fn new(node: &str, signature: &Signature, parts: &[KeyPart<'_>], batch: &BatchToken) -> Self {
        let mut h = Sha256::new();
        h.update((node.len() as u64).to_le_bytes());
        h.update(node.as_bytes());
        h.update(signature.0);
        for p in parts {
            match p {
                KeyPart::Node(k) => {
                    h.update([1u8]);
                    h.update(k.0);
                }
                KeyPart::Input(name) => {
                    h.update([2u8]);
                    h.update((name.len() as u64).to_le_bytes());
                    h.update(name.as_bytes());
                }
            }
        }
        h.update(batch.0);
        SubpathKey(h.finalize().into())
    }
}

impl fmt::Debug for SubpathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubpathKey({})", &hex::encode(self.0)[..12])
    }
}

/// Bounded LRU map from subpath keys to per-record node values, shared across paths.
pub struct GlobalCache {
    entries: Mutex<LruCache<SubpathKey, Arc<Vec<Value>>>>,
    enabled: bool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl GlobalCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("non-zero");
        GlobalCache {
            entries: Mutex::new(LruCache::new(cap)),
            enabled: capacity > 0,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// A cache that never stores anything; lookups always miss.
    pub fn disabled() -> Self {
        GlobalCache::new(0)
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn get(&self, key: &SubpathKey) -> Option<Arc<Vec<Value>>> {
        let found = if self.enabled {
            self.entries.lock().expect("cache lock").get(key).cloned()
        } else {
            None
        };
        match &found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    /// Inserts unless a value is already present; returns the stored value.
    pub fn insert_if_absent(&self, key: SubpathKey, value: Arc<Vec<Value>>) -> Arc<Vec<Value>> {
        if !self.enabled {
            return value;
        }
        let mut map = self.entries.lock().expect("cache lock");
        if let Some(existing) = map.get(&key) {
            return existing.clone();
        }
        map.put(key, value.clone());
        value
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        if self.enabled {
            self.entries.lock().expect("cache lock").len()
        } else {
            0
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for GlobalCache {
    fn default() -> Self {
        GlobalCache::new(DEFAULT_CACHE_ENTRIES)
    }
}
