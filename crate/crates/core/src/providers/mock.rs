use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ItemRef, ProviderError, SimilarityProvider, SimilarityTask};

/// Offline provider: token-set Jaccard similarity after lowercasing and
/// stripping punctuation.
///
/// With `noise > 0`, a deterministic perturbation derived from `(seed, pair)`
/// is added and the result clamped to `[0, 1]`. The perturbation depends on
/// the unordered pair, so symmetry is preserved.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    seed: u64,
    noise: f64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed, noise: 0.0 }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise.max(0.0);
        self
    }

    pub fn jaccard(a: &str, b: &str) -> Result<f64, ProviderError> {
        if a.trim().is_empty() {
            return Err(ProviderError::EmptyText("first text".into()));
        }
        if b.trim().is_empty() {
            return Err(ProviderError::EmptyText("second text".into()));
        }
        let (ta, tb) = (tokens(a), tokens(b));
        let union = ta.union(&tb).count();
        if union == 0 {
            // punctuation-only texts: equal token sets
            return Ok(1.0);
        }
        Ok(ta.intersection(&tb).count() as f64 / union as f64)
    }

    fn pair_noise(&self, a: &str, b: &str) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut h = fnv1a(self.seed.to_le_bytes().as_slice(), 0xcbf2_9ce4_8422_2325);
        h = fnv1a(lo.as_bytes(), h);
        h = fnv1a(&[0xff], h);
        h = fnv1a(hi.as_bytes(), h);
        ChaCha8Rng::seed_from_u64(h).gen_range(-self.noise..=self.noise)
    }
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

impl SimilarityProvider for MockProvider {
    fn id(&self) -> String {
        if self.noise > 0.0 {
            format!("mock:jaccard:seed={}:noise={}", self.seed, self.noise)
        } else {
            "mock:jaccard".to_string()
        }
    }

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, _task: &SimilarityTask) -> Result<f64, ProviderError> {
        let base = Self::jaccard(a.text, b.text)?;
        if self.noise > 0.0 && a.text != b.text {
            Ok((base + self.pair_noise(a.text, b.text)).clamp(0.0, 1.0))
        } else {
            Ok(base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ItemKind;
    use proptest::prelude::*;

    fn item(text: &str) -> ItemRef<'_> {
        ItemRef { question_id: "q", kind: ItemKind::Answer, id: "x", text }
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(MockProvider::jaccard("count of patients", "count of patients").unwrap(), 1.0);
        assert!((MockProvider::jaccard("alpha beta", "beta gamma").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(MockProvider::jaccard("alpha", "beta").unwrap(), 0.0);
        assert_eq!(MockProvider::jaccard("Count, of PATIENTS!", "count of patients").unwrap(), 1.0);
        assert!(matches!(MockProvider::jaccard("", "x"), Err(ProviderError::EmptyText(_))));
    }

    #[test]
    fn noisy_mock_is_symmetric_and_bounded() {
        let p = MockProvider::new(3).with_noise(0.2);
        let task = SimilarityTask::default();
        let ab = p.similarity(&item("alpha beta"), &item("beta gamma"), &task).unwrap();
        let ba = p.similarity(&item("beta gamma"), &item("alpha beta"), &task).unwrap();
        assert_eq!(ab, ba);
        assert!((0.0..=1.0).contains(&ab));
        assert_eq!(p.similarity(&item("same"), &item("same"), &task).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_reflexive(a in "[a-z ,.]{1,30}[a-z]", b in "[a-z ,.]{1,30}[a-z]") {
            let p = MockProvider::new(0);
            let task = SimilarityTask::default();
            prop_assert_eq!(
                p.similarity(&item(&a), &item(&b), &task).unwrap(),
                p.similarity(&item(&b), &item(&a), &task).unwrap()
            );
            prop_assert_eq!(p.similarity(&item(&a), &item(&a), &task).unwrap(), 1.0);
        }
    }
}
