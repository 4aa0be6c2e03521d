use std::collections::HashMap;
use std::sync::RwLock;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::IdentityError;
use crate::crypto::{SessionId, UserId};

pub const DEFAULT_SESSION_TTL_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub user_id: UserId,
    pub issued_at: u64,
    pub expires_at: u64,
}

/// Issued sessions. Reads run concurrently; issuing takes the write lock.
#[derive(Debug)]
pub struct SessionStore {
    ttl_ms: u64,
    sessions: RwLock<HashMap<SessionId, Session>>,
}

impl SessionStore {
    pub fn new(ttl_ms: u64) -> Self {
        Self {
            ttl_ms,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    pub fn issue<R: RngCore + CryptoRng>(&self, user_id: UserId, now: u64, rng: &mut R) -> Session {
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        let session = Session {
            session_id: SessionId(id),
            user_id,
            issued_at: now,
            expires_at: now.saturating_add(self.ttl_ms),
        };
        self.sessions
            .write()
            .expect("session lock poisoned")
            .insert(session.session_id, session.clone());
        session
    }

    /// The session's user iff it exists and `now < expires_at`.
    pub fn validate(&self, id: &SessionId, now: u64) -> Result<UserId, IdentityError> {
        let guard = self.sessions.read().expect("session lock poisoned");
        let s = guard.get(id).ok_or(IdentityError::SessionUnknown)?;
        if now < s.expires_at {
            Ok(s.user_id)
        } else {
            Err(IdentityError::SessionExpired)
        }
    }

    pub fn get(&self, id: &SessionId) -> Option<Session> {
        self.sessions
            .read()
            .expect("session lock poisoned")
            .get(id)
            .cloned()
    }

    /// Drop expired sessions; returns how many were removed.
    pub fn purge_expired(&self, now: u64) -> usize {
        let mut guard = self.sessions.write().expect("session lock poisoned");
        let before = guard.len();
        guard.retain(|_, s| now < s.expires_at);
        before - guard.len()
    }

    pub fn snapshot(&self) -> Vec<Session> {
        let mut all: Vec<Session> = self
            .sessions
            .read()
            .expect("session lock poisoned")
            .values()
            .cloned()
            .collect();
        all.sort_by_key(|s| (s.issued_at, s.session_id));
        all
    }

    pub fn restore(&self, sessions: impl IntoIterator<Item = Session>) {
        let mut guard = self.sessions.write().expect("session lock poisoned");
        for s in sessions {
            guard.insert(s.session_id, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn expiry_boundary() {
        let store = SessionStore::new(DEFAULT_SESSION_TTL_MS);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let user = UserId([4u8; 32]);
        let s = store.issue(user, 1_000, &mut rng);
        let ttl = DEFAULT_SESSION_TTL_MS;
        assert_eq!(s.expires_at - s.issued_at, ttl);
        assert_eq!(store.validate(&s.session_id, 1_000 + ttl - 1), Ok(user));
        assert_eq!(
            store.validate(&s.session_id, 1_000 + ttl),
            Err(IdentityError::SessionExpired)
        );
        assert_eq!(store.purge_expired(1_000 + ttl), 1);
        assert_eq!(
            store.validate(&s.session_id, 1_000),
            Err(IdentityError::SessionUnknown)
        );
    }

    #[test]
    fn random_tokens_never_validate() {
        let store = SessionStore::new(60_000);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let issued = store.issue(UserId([1u8; 32]), 0, &mut rng);
        let mut probe = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let mut raw = [0u8; 16];
            probe.fill_bytes(&mut raw);
            let id = SessionId(raw);
            if id == issued.session_id {
                continue;
            }
            assert_eq!(store.validate(&id, 1), Err(IdentityError::SessionUnknown));
        }
    }
}
