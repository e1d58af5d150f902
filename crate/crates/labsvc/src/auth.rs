//! Salted credential hashes and bearer session tokens.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use labassess_core::Role;
use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;

const SCHEME: &str = "pbkdf2-sha256";
pub const DEFAULT_ITERATIONS: u32 = 100_000;
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

/// Hashes a password as `pbkdf2-sha256$<iterations>$<salt hex>$<hash hex>`.
pub fn hash_password(password: &str, iterations: u32) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    hash_with_salt(password, &salt, iterations)
}

fn hash_with_salt(password: &str, salt: &[u8], iterations: u32) -> String {
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    format!("{SCHEME}${iterations}${}${}", hex::encode(salt), hex::encode(out))
}

struct ParsedHash {
    iterations: u32,
    salt: Vec<u8>,
    hash: Vec<u8>,
}

fn parse_hash(encoded: &str) -> Option<ParsedHash> {
    let mut parts = encoded.split('$');
    if parts.next()? != SCHEME {
        return None;
    }
    let iterations = parts.next()?.parse().ok()?;
    let salt = hex::decode(parts.next()?).ok()?;
    let hash = hex::decode(parts.next()?).ok()?;
    if parts.next().is_some() || hash.len() != HASH_LEN || iterations == 0 {
        return None;
    }
    Some(ParsedHash { iterations, salt, hash })
}

/// Checks a password against an encoded hash. The digest comparison is
/// constant-time; a malformed hash never verifies.
pub fn verify_password(password: &str, encoded: &str) -> bool {
    let Some(p) = parse_hash(encoded) else {
        return false;
    };
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), &p.salt, p.iterations, &mut out);
    out.ct_eq(p.hash.as_slice()).into()
}

/// Burns the same work as a real verification, so a missing user cannot be
/// told apart from a wrong password by timing.
pub fn dummy_verify(password: &str, iterations: u32) {
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), &[0u8; SALT_LEN], iterations, &mut out);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: String,
    pub role: Role,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

/// In-memory session table. Sessions are not persisted: a restart logs
/// everybody out.
#[derive(Default)]
pub struct SessionTable {
    sessions: Mutex<HashMap<String, SessionToken>>,
}

impl SessionTable {
    pub fn issue(&self, user_id: &str, role: Role, now: DateTime<Utc>, ttl: Duration) -> SessionToken {
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = SessionToken {
            token: hex::encode(raw),
            user_id: user_id.to_string(),
            role,
            issued_at: now,
            expires_at: now + ttl,
        };
        self.sessions.lock().unwrap().insert(token.token.clone(), token.clone());
        token
    }

    /// The live session for a token; expired sessions are dropped.
    pub fn resolve(&self, token: &str, now: DateTime<Utc>) -> Option<SessionToken> {
        let mut map = self.sessions.lock().unwrap();
        let s = map.get(token)?.clone();
        if now >= s.expires_at {
            map.remove(token);
            return None;
        }
        Some(s)
    }

    pub fn revoke_user(&self, user_id: &str) {
        self.sessions.lock().unwrap().retain(|_, s| s.user_id != user_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_round_trip() {
        let h = hash_password("s3cret", 1000);
        assert!(h.starts_with("pbkdf2-sha256$1000$"));
        assert!(verify_password("s3cret", &h));
        assert!(!verify_password("s3cret ", &h));
        assert!(!verify_password("s3cret", "plain"));
    }

    #[test]
    fn salts_differ() {
        assert_ne!(hash_password("x", 10), hash_password("x", 10));
    }

    #[test]
    fn known_vector() {
        // PBKDF2-HMAC-SHA256("password", "salt", 1) from RFC 7914 test vectors
        let h = hash_with_salt("password", b"salt", 1);
        assert!(h.ends_with("120fb6cffcf8b32c43e7225256c4f837a86548c92ccc35480805987cb70be17b"));
    }

    #[test]
    fn expired_tokens_are_rejected() {
        let t = SessionTable::default();
        let now = Utc::now();
        let s = t.issue("u1", Role::Student, now, Duration::minutes(5));
        assert!(t.resolve(&s.token, now + Duration::minutes(4)).is_some());
        assert!(t.resolve(&s.token, now + Duration::minutes(5)).is_none());
        assert!(t.resolve(&s.token, now).is_none());
    }
}
