use super::LlmError;

pub trait Embedder: Send + Sync {
    /// Provider-level embedding; use [`embed`] for checked, normalized output.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

/// Embeds `texts`, rejecting empty inputs and returning L2-normalized vectors
/// of a common dimension.
pub fn embed(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(LlmError::EmptyText { index });
    }
    let mut vectors = embedder.embed_raw(texts)?;
    if vectors.len() != texts.len() {
        return Err(LlmError::Unparseable(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    for v in &mut vectors {
        if v.len() != dim || dim == 0 {
            return Err(LlmError::Unparseable(
                "inconsistent embedding dimensions".into(),
            ));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(LlmError::Unparseable("zero or non-finite embedding".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(vectors)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is",
    "it", "its", "of", "on", "or", "that", "the", "their", "this", "to", "was", "were", "which",
    "with", "what", "who", "how", "does", "do",
];

/// Deterministic hashed bag-of-tokens embedder for offline use.
///
/// Tokens are lowercase alphanumeric runs minus a short stopword list, hashed
/// with FNV-1a into `dimension` buckets and weighted `1 + ln(tf)`.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dimension: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self { dimension: 1024 }
    }
}

impl StubEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut counts = std::collections::BTreeMap::<usize, u32>::new();
        let lower = text.to_lowercase();
        for token in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        {
            *counts.entry(self.bucket(token)).or_default() += 1;
        }
        if counts.is_empty() {
            counts.insert(self.bucket(lower.trim()), 1);
        }
        let mut v = vec![0.0; self.dimension];
        for (bucket, tf) in counts {
            v[bucket] += 1.0 + f64::from(tf).ln();
        }
        v
    }

    fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl Embedder for StubEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identical_texts_have_cosine_one() {
        let e = StubEmbedder::default();
        let v = embed(&e, &["ctr1 rosettes".into(), "ctr1 rosettes".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!((cos(&v[0], &v[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bitwise_stable_across_instances() {
        let a = embed(&StubEmbedder::default(), &["leaf area".into()]).unwrap();
        let b = embed(&StubEmbedder::default(), &["leaf area".into()]).unwrap();
        assert_eq!(
            a[0].iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b[0].iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_list_and_empty_text() {
        let e = StubEmbedder::default();
        assert!(embed(&e, &[]).unwrap().is_empty());
        assert!(matches!(
            embed(&e, &["ok".into(), " ".into()]),
            Err(LlmError::EmptyText { index: 1 })
        ));
    }

    #[test]
    fn punctuation_only_still_embeds() {
        let v = embed(&StubEmbedder::default(), &["?!".into()]).unwrap();
        let norm: f64 = v[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn vectors_are_unit_norm(texts in proptest::collection::vec("[a-zA-Z0-9 ,.]{1,80}", 1..8)) {
            let texts: Vec<String> = texts.into_iter().filter(|t| !t.trim().is_empty()).collect();
            prop_assume!(!texts.is_empty());
            for v in embed(&StubEmbedder::new(64), &texts).unwrap() {
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
