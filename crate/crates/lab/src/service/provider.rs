use rand::RngCore;
use serde::{Deserialize, Serialize};

const BASE32: &[u8; 32] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";
pub const CODE_LEN: usize = 12;

/// Twelve RFC 4648 base32 characters, 60 random bits.
pub fn base32_code(rng: &mut dyn RngCore) -> String {
    let bits = rng.next_u64();
    (0..CODE_LEN)
        .map(|i| BASE32[((bits >> (5 * i)) & 31) as usize] as char)
        .collect()
}

pub fn is_valid_code(code: &str) -> bool {
    code.len() == CODE_LEN && code.bytes().all(|b| BASE32.contains(&b))
}

/// Payload sent to a provider's completion callback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionNotice {
    pub session_id: String,
    pub code: String,
}

/// A crowdsourcing platform that pays participants on presentation of a
/// completion code. The service guarantees uniqueness across sessions.
pub trait CrowdProvider: Send + Sync {
    fn name(&self) -> &str;

    fn issue_code(&self, rng: &mut dyn RngCore) -> String {
        base32_code(rng)
    }

    /// Where completion notices are posted, if anywhere.
    fn callback_url(&self) -> Option<&str> {
        None
    }
}

/// Provider that shows the code to the participant and, optionally, posts
/// each notice to a URL.
#[derive(Debug, Clone, Default)]
pub struct GenericProvider {
    pub callback: Option<String>,
}

impl CrowdProvider for GenericProvider {
    fn name(&self) -> &str {
        "generic"
    }

    fn callback_url(&self) -> Option<&str> {
        self.callback.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn codes_are_base32_and_spread() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let codes: std::collections::BTreeSet<String> =
            (0..10_000).map(|_| base32_code(&mut rng)).collect();
        assert_eq!(codes.len(), 10_000);
        assert!(codes.iter().all(|c| is_valid_code(c)));
        assert!(!is_valid_code("ABCDEFGHIJK1"));
        assert!(!is_valid_code("abcdefghijkl"));
    }
}
