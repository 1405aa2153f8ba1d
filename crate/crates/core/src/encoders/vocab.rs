use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Dense token ↔ id mapping with reserved padding (id 0) and unknown (id 1) entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    lowercase: bool,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    lowercase: bool,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let mut v = Vocabulary::new(r.lowercase);
        for t in r.tokens.into_iter().skip(2) {
            v.insert(&t);
        }
        v
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            lowercase: v.lowercase,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    pub fn new(lowercase: bool) -> Self {
        let tokens = vec![PAD.to_string(), UNK.to_string()];
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            index,
            lowercase,
        }
    }

    /// Keeps tokens seen at least `min_count` times, plus any token for which
    /// `keep` holds. Ids are assigned by descending frequency, then lexically.
    pub fn build<'a>(
        words: impl IntoIterator<Item = &'a str>,
        min_count: usize,
        lowercase: bool,
        keep: impl Fn(&str) -> bool,
    ) -> Self {
        let mut v = Vocabulary::new(lowercase);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(v.normalize(w)).or_default() += 1;
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count || keep(w))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (w, _) in kept {
            v.insert(&w);
        }
        v
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn normalize(&self, word: &str) -> String {
        if self.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        }
    }

    pub fn insert(&mut self, word: &str) -> usize {
        let w = self.normalize(word);
        if let Some(&id) = self.index.get(&w) {
            return id;
        }
        self.tokens.push(w.clone());
        self.index.insert(w, self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(&self.normalize(word)).copied()
    }

    /// Id of `word`, falling back to the unknown id.
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    /// Tokens other than the two reserved entries, in id order.
    pub fn words(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().skip(2).map(|(i, t)| (i, t.as_str()))
    }
}

/// Printable ASCII plus an unknown-character entry at id 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharAlphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for CharAlphabet {
    fn default() -> Self {
        Self::ascii()
    }
}

impl CharAlphabet {
    pub const UNK_ID: usize = 0;

    pub fn ascii() -> Self {
        let chars: Vec<char> = std::iter::once('\u{fffd}').chain((0x20u8..=0x7e).map(char::from)).collect();
        let index = chars.iter().enumerate().skip(1).map(|(i, &c)| (c, i)).collect();
        CharAlphabet { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn char(&self, id: usize) -> Option<char> {
        self.chars.get(id).copied()
    }

    /// Character ids of `word`; an empty word maps to a single unknown character.
    pub fn ids(&self, word: &str) -> Vec<usize> {
        let ids: Vec<usize> = word.chars().map(|c| self.id(c)).collect();
        if ids.is_empty() {
            vec![Self::UNK_ID]
        } else {
            ids
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids() {
        let v = Vocabulary::new(true);
        assert_eq!(v.get(PAD), Some(Vocabulary::PAD_ID));
        assert_eq!(v.get(UNK), Some(Vocabulary::UNK_ID));
        assert_ne!(Vocabulary::PAD_ID, Vocabulary::UNK_ID);
        assert!(v.is_empty());
    }

    #[test]
    fn build_orders_by_frequency() {
        let words = ["Quiz", "quiz", "video", "lecture", "video", "quiz", "rare"];
        let v = Vocabulary::build(words, 2, true, |w| w == "lecture");
        let got: Vec<&str> = v.words().map(|(_, w)| w).collect();
        assert_eq!(got, ["quiz", "video", "lecture"]);
        assert_eq!(v.id("QUIZ"), 2);
        assert_eq!(v.id("rare"), Vocabulary::UNK_ID);
    }

    #[test]
    fn case_preserved_without_folding() {
        let mut v = Vocabulary::new(false);
        let a = v.insert("Video");
        let b = v.insert("video");
        assert_ne!(a, b);
    }

    #[test]
    fn serde_roundtrip() {
        let v = Vocabulary::build(["a", "b", "a"], 1, true, |_| false);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn alphabet_covers_printable_ascii() {
        let a = CharAlphabet::ascii();
        assert_eq!(a.len(), 96);
        for c in (0x20u8..=0x7e).map(char::from) {
            assert_ne!(a.id(c), CharAlphabet::UNK_ID);
            assert_eq!(a.char(a.id(c)), Some(c));
        }
        assert_eq!(a.id('é'), CharAlphabet::UNK_ID);
        assert_eq!(a.ids(""), vec![CharAlphabet::UNK_ID]);
        assert_ne!(a.id('Q'), a.id('q'));
    }
}
