use std::collections::{BTreeMap, HashMap};

pub const UNK: u32 = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Token string ↔ id bijection. Id 0 is always `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary with `<unk>` at id 0 followed by `tokens` in order.
    /// Repeats and the literal `<unk>` are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: vec![UNK_TOKEN.to_string()],
            index: HashMap::from([(UNK_TOKEN.to_string(), UNK)]),
        };
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len() as u32);
                v.tokens.push(t);
            }
        }
        v
    }

    /// Keeps tokens seen at least `min_count` times, in lexicographic order.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_count: usize) -> Self {
        Self::from_tokens(
            counts
                .iter()
                .filter(|(_, &c)| c >= min_count)
                .map(|(t, _)| t.clone()),
        )
    }

    /// `<unk>` plus `n` synthetic tokens whose lexicographic order matches
    /// their id order.
    pub fn synthetic(n: usize) -> Self {
        let width = n.max(1).to_string().len();
        Self::from_tokens((1..=n).map(|i| format!("w{i:0width$}")))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // <unk> is always present
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace tokenization; empty text becomes a single `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let ids: Vec<u32> = text.split_whitespace().map(|t| self.id(t)).collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
