use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token <-> index map. Index 0 is PAD and index 1 is UNK.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v
    }

    /// Returns the index of `token`, adding it if absent.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds the lookup map, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

/// Dense interning of small label sets (categories, entity ids).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interner whose index 0 is a reserved padding slot.
    pub fn with_padding() -> Self {
        let mut i = Self::new();
        i.intern(PAD_TOKEN);
        i
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> Option<&str> {
        self.names.get(i).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Normalizes `text`, maps tokens to indices (UNK for unknown tokens) and
/// truncates or right-pads with PAD to exactly `max_len` entries.
pub fn tokenize_title(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = normalize(text)
        .iter()
        .take(max_len)
        .map(|t| vocab.index_or_unk(t))
        .collect();
    out.resize(max_len, PAD);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::new();
        for w in words {
            v.insert(w);
        }
        v
    }

    #[test]
    fn pad_is_zero() {
        let v = Vocabulary::new();
        assert_eq!(v.get(PAD_TOKEN), Some(PAD));
        assert_eq!(v.get(UNK_TOKEN), Some(UNK));
        assert_eq!(PAD, 0);
    }

    #[test]
    fn hello_world() {
        let v = vocab(&["hello", "world"]);
        assert_eq!(tokenize_title("Hello, WORLD", &v, 4), vec![2, 3, PAD, PAD]);
    }

    #[test]
    fn all_oov_title() {
        let v = vocab(&["hello"]);
        assert_eq!(tokenize_title("foo bar", &v, 3), vec![UNK, UNK, PAD]);
    }

    #[test]
    fn long_title_truncates() {
        let v = vocab(&["a", "b", "c", "d"]);
        assert_eq!(tokenize_title("a b c d", &v, 2), vec![2, 3]);
    }

    #[test]
    fn empty_title_is_all_pad() {
        let v = Vocabulary::new();
        assert_eq!(tokenize_title("", &v, 3), vec![PAD; 3]);
    }

    #[test]
    fn reindex_restores_lookup() {
        let mut v = vocab(&["x", "y"]);
        let json = serde_json::to_string(&v).unwrap();
        let mut back: Vocabulary = serde_json::from_str(&json).unwrap();
        back.reindex();
        v.reindex();
        assert_eq!(back, v);
        assert_eq!(back.get("y"), Some(3));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s).join(" ");
            let twice = normalize(&once).join(" ");
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn bijection_between_map_and_list(words in proptest::collection::vec("[a-z]{1,6}", 0..30)) {
            let mut v = Vocabulary::new();
            for w in &words { v.insert(w); }
            for (i, t) in v.tokens().iter().enumerate() {
                prop_assert_eq!(v.get(t), Some(i));
            }
        }
    }
}
