use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Lowercased runs of alphanumerics and hyphens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Word → row id of the embedding table. Rows 0 and 1 are padding and
/// unknown-word placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Lexicon {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Lexicon {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Lexicon { words, index }
    }
}

impl From<Lexicon> for Vec<String> {
    fn from(l: Lexicon) -> Self {
        l.words
    }
}

impl Lexicon {
    /// Words seen at least `min_freq` times, ordered by descending count then
    /// alphabetically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_freq.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut words = vec!["<pad>".to_string(), "<unk>".to_string()];
        words.extend(kept.into_iter().map(|(w, _)| w));
        Lexicon::from(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().filter(|&i| i > UNK).unwrap_or(UNK)
    }

    /// Token ids truncated to `max_len`, then padded with [`PAD`]. Returns the
    /// ids and the count of real tokens (at least 1: empty text becomes one UNK).
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<usize>, usize) {
        let mut ids: Vec<usize> = tokenize(text).take(max_len).map(|t| self.id(&t)).collect();
        if ids.is_empty() {
            ids.push(UNK);
        }
        let n = ids.len();
        ids.resize(max_len, PAD);
        (ids, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_hyphens() {
        let t: Vec<String> = tokenize("Single-Cell analysis, (2016).").collect();
        assert_eq!(t, vec!["single-cell", "analysis", "2016"]);
    }

    #[test]
    fn build_respects_min_frequency() {
        let lex = Lexicon::build(["b a a", "c b a"], 2);
        assert_eq!(lex.words(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(lex.id("c"), UNK);
        assert_eq!(lex.id("<pad>"), UNK);
    }

    #[test]
    fn encode_pads_and_truncates() {
        let lex = Lexicon::build(["x y", "x y"], 1);
        assert_eq!(lex.encode("x z", 4), (vec![lex.id("x"), UNK, PAD, PAD], 2));
        assert_eq!(lex.encode("x y x y x", 3).1, 3);
        assert_eq!(lex.encode("", 2), (vec![UNK, PAD], 1));
    }

    #[test]
    fn serde_is_a_word_list() {
        let lex = Lexicon::build(["x y", "x"], 1);
        let json = serde_json::to_string(&lex).unwrap();
        assert_eq!(json, r#"["<pad>","<unk>","x","y"]"#);
        assert_eq!(serde_json::from_str::<Lexicon>(&json).unwrap(), lex);
    }
}
