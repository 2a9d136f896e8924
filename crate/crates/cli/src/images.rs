//! Content-addressed PNG store. Each image remembers the sessions that
//! reference it and is dropped once none of them remain.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Mutex, PoisonError};

#[derive(Debug)]
struct Entry {
    png: Vec<u8>,
    sessions: BTreeSet<String>,
}

#[derive(Debug, Default)]
pub struct ImageStore {
    entries: Mutex<HashMap<String, Entry>>,
}

/// True for a lowercase hex SHA-256 digest.
pub fn is_image_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl ImageStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `png` under `id` on behalf of `session_id`. Storing the same
    /// content again only adds the reference.
    pub fn put(&self, id: &str, png: Vec<u8>, session_id: &str) {
        let mut entries = self.entries.lock().unwrap_or_else(PoisonError::into_inner);
        entries
            .entry(id.to_owned())
            .or_insert_with(|| Entry {
                png,
                sessions: BTreeSet::new(),
            })
            .sessions
            .insert(session_id.to_owned());
    }

    pub fn get(&self, id: &str) -> Option<Vec<u8>> {
        let entries = self.entries.lock().unwrap_or_else(PoisonError::into_inner);
        entries.get(id).map(|e| e.png.clone())
    }

    /// Drops `session_id`'s references; returns how many images were freed.
    pub fn release_session(&self, session_id: &str) -> usize {
        let mut entries = self.entries.lock().unwrap_or_else(PoisonError::into_inner);
        let before = entries.len();
        entries.retain(|_, e| {
            e.sessions.remove(session_id);
            !e.sessions.is_empty()
        });
        before - entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa";

    #[test]
    fn shared_images_survive_until_last_session() {
        let store = ImageStore::new();
        store.put(A, vec![1], "s1");
        store.put(A, vec![1], "s2");
        assert_eq!(store.release_session("s1"), 0);
        assert_eq!(store.get(A), Some(vec![1]));
        assert_eq!(store.release_session("s2"), 1);
        assert!(store.is_empty());
    }

    #[test]
    fn id_format() {
        assert!(is_image_id(A));
        assert!(!is_image_id("abc"));
        assert!(!is_image_id(&A.to_uppercase()));
        assert!(!is_image_id(&format!("{}/", &A[..63])));
    }
}
