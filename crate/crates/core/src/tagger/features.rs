use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::TaggerConfig;
use super::neural::{decode, transition_mask, TagPrediction};
use crate::corpus::{Sentence, Tag};
use crate::crf::EmissionScores;
use crate::error::{Error, Result};
use crate::numerics::{grad_check, Checkpoint, GradCheckConfig, GradCheckReport, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Part-of-speech source for the baseline features.
pub trait PosTagger: Send + Sync + fmt::Debug {
    fn tag(&self, words: &[&str]) -> Vec<String>;
}

/// Small rule-and-lexicon tagger producing Penn-style tags.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexiconPosTagger;

const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those", "each", "every", "any", "some", "no"];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "for", "to", "from", "with", "by", "about", "into", "after", "before", "during", "under",
    "over", "between", "through",
];
const PRONOUNS: &[&str] = &["i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them"];
const POSSESSIVES: &[&str] = &["my", "your", "his", "its", "our", "their"];
const CONJUNCTIONS: &[&str] = &["and", "or", "but", "nor", "so", "yet"];
const MODALS: &[&str] = &["can", "could", "will", "would", "should", "may", "might", "must", "shall"];
const VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "am", "do", "does", "did", "have", "has", "had", "see", "watch", "check",
    "get", "got", "find", "found", "think", "know", "help", "try", "look", "read", "submit", "understand",
];
const WH: &[&str] = &["what", "which", "who", "where", "when", "why", "how"];

impl LexiconPosTagger {
    fn tag_word(word: &str) -> &'static str {
        let lower = word.to_lowercase();
        let l = lower.as_str();
        if !word.is_empty() && word.chars().all(|c| c.is_ascii_digit()) {
            return "CD";
        }
        if word.chars().all(|c| !c.is_alphanumeric()) {
            return ".";
        }
        let in_list = |list: &[&str]| list.contains(&l);
        match () {
            _ if in_list(DETERMINERS) => "DT",
            _ if in_list(PREPOSITIONS) => "IN",
            _ if in_list(PRONOUNS) => "PRP",
            _ if in_list(POSSESSIVES) => "PRP$",
            _ if in_list(CONJUNCTIONS) => "CC",
            _ if in_list(MODALS) => "MD",
            _ if in_list(VERBS) => "VB",
            _ if in_list(WH) => "WDT",
            _ if l.ends_with("ly") && l.len() > 4 => "RB",
            _ if l.ends_with("ing") && l.len() > 4 => "VBG",
            _ if l.ends_with("ed") && l.len() > 3 => "VBD",
            _ if word.chars().next().is_some_and(char::is_uppercase) => "NNP",
            _ if l.ends_with('s') && l.len() > 3 && !l.ends_with("ss") => "NNS",
            _ => "NN",
        }
    }
}

impl PosTagger for LexiconPosTagger {
    fn tag(&self, words: &[&str]) -> Vec<String> {
        words.iter().map(|w| Self::tag_word(w).to_string()).collect()
    }
}

fn prefix(w: &str, n: usize) -> String {
    w.chars().take(n).collect()
}

fn suffix(w: &str, n: usize) -> String {
    let len = w.chars().count();
    w.chars().skip(len.saturating_sub(n)).collect()
}

fn is_title(w: &str) -> bool {
    let mut chars = w.chars();
    chars.next().is_some_and(char::is_uppercase) && !chars.any(char::is_uppercase)
}

fn is_upper(w: &str) -> bool {
    w.chars().any(char::is_alphabetic) && !w.chars().any(char::is_lowercase)
}

fn is_digit(w: &str) -> bool {
    !w.is_empty() && w.chars().all(|c| c.is_ascii_digit())
}

/// Features of position `t`: word, 2/3-character prefixes and suffixes,
/// digit/title/upper flags, POS tag and its first two symbols, for each
/// offset in −2..=2. Out-of-sentence offsets emit a single boundary marker.
/// Names follow `f<k>@<offset>=<value>`; a constant `bias` feature is added.
pub fn extract_baseline_features(words: &[&str], pos: &[String], t: usize) -> Vec<String> {
    let n = words.len() as isize;
    let mut out = vec!["bias".to_string()];
    for off in -2isize..=2 {
        let i = t as isize + off;
        if i < 0 {
            out.push(format!("f1@{off}=<BOS>"));
            continue;
        }
        if i >= n {
            out.push(format!("f1@{off}=<EOS>"));
            continue;
        }
        let w = words[i as usize];
        let p = &pos[i as usize];
        out.push(format!("f1@{off}={}", w.to_lowercase()));
        out.push(format!("f2@{off}={}", prefix(w, 2)));
        out.push(format!("f3@{off}={}", prefix(w, 3)));
        out.push(format!("f4@{off}={}", suffix(w, 2)));
        out.push(format!("f5@{off}={}", suffix(w, 3)));
        out.push(format!("f6@{off}={}", is_digit(w)));
        out.push(format!("f7@{off}={}", is_title(w)));
        out.push(format!("f8@{off}={}", is_upper(w)));
        out.push(format!("f9@{off}={p}"));
        out.push(format!("f10@{off}={}", prefix(p, 2)));
    }
    out
}

/// Features of every position of a sentence.
pub fn sentence_features(pos_tagger: &dyn PosTagger, sentence: &Sentence) -> Vec<Vec<String>> {
    let words: Vec<&str> = sentence.words().collect();
    let pos = pos_tagger.tag(&words);
    (0..words.len()).map(|t| extract_baseline_features(&words, &pos, t)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureIndex {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for FeatureIndex {
    fn from(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        FeatureIndex { names, index }
    }
}

impl From<FeatureIndex> for Vec<String> {
    fn from(f: FeatureIndex) -> Self {
        f.names
    }
}

impl FeatureIndex {
    pub fn insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExample {
    pub features: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

/// Linear-chain CRF over sparse indicator features: `e[t,k] = Σ_f w[f,k]`.
#[derive(Clone, Debug)]
pub struct FeatureCrf {
    pub config: TaggerConfig,
    pub features: FeatureIndex,
    pub params: ParamStore<f32>,
    weights: ParamId,
    transitions: ParamId,
    pos: Arc<dyn PosTagger>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    kind: String,
    config: TaggerConfig,
    features: FeatureIndex,
}

pub(crate) const FEATURE_KIND: &str = "feature-crf";

impl FeatureCrf {
    /// Indexes every feature seen in `sentences`; weights start at zero.
    pub fn new(config: TaggerConfig, sentences: &[&Sentence], pos: Arc<dyn PosTagger>) -> Result<Self> {
        config.validate()?;
        let mut features = FeatureIndex::default();
        for s in sentences {
            for f in sentence_features(pos.as_ref(), s).iter().flatten() {
                features.insert(f);
            }
        }
        Self::with_index(config, features, pos, None)
    }

    fn with_index(
        config: TaggerConfig,
        features: FeatureIndex,
        pos: Arc<dyn PosTagger>,
        params: Option<ParamStore<f32>>,
    ) -> Result<Self> {
        let k = Tag::COUNT;
        let (params, weights, transitions) = match params {
            None => {
                let mut p = ParamStore::new();
                let w = p.add("crf.weights", Tensor::zeros(&[features.len(), k]));
                let a = p.add("crf.transitions", Tensor::zeros(&[k + 2, k + 2]));
                (p, w, a)
            }
            Some(p) => {
                let w = crate::encoders::resolve(&p, "crf.weights", &[features.len(), k])?;
                let a = crate::encoders::resolve(&p, "crf.transitions", &[k + 2, k + 2])?;
                (p, w, a)
            }
        };
        Ok(FeatureCrf {
            config,
            features,
            params,
            weights,
            transitions,
            pos,
        })
    }

    pub fn weights(&self) -> &Tensor<f32> {
        self.params.get(self.weights)
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Unseen features are dropped.
    pub fn encode(&self, sentence: &Sentence, gold: Option<&[Tag]>) -> FeatureExample {
        let features = sentence_features(self.pos.as_ref(), sentence)
            .iter()
            .map(|fs| fs.iter().filter_map(|f| self.features.get(f)).collect())
            .collect();
        FeatureExample {
            features,
            gold: gold.map(|g| g.iter().map(|t| t.index()).collect()).unwrap_or_default(),
        }
    }

    fn emissions_on_tape<R: Real>(&self, tape: &mut Tape<R>, ex: &FeatureExample) -> Result<Var> {
        if ex.features.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let w = tape.param(self.weights);
        tape.gather_sum_rows(w, ex.features.clone())
    }

    /// Negative log-likelihood of one sentence (regularizer excluded).
    pub fn loss_on_tape<R: Real>(&self, tape: &mut Tape<R>, ex: &FeatureExample) -> Result<Var> {
        let e = self.emissions_on_tape(tape, ex)?;
        let a = tape.param(self.transitions);
        tape.crf_nll(e, a, &ex.gold, transition_mask(&self.config))
    }

    /// `λ/2 · ‖w‖²` over the feature weights.
    pub fn regularizer_on_tape<R: Real>(&self, tape: &mut Tape<R>) -> Option<Var> {
        (self.config.l2 > 0.0).then(|| {
            let w = tape.param(self.weights);
            let sq = tape.sum_squares(w);
            tape.scale(sq, R::from_f64_lossy(self.config.l2 / 2.0))
        })
    }

    pub fn predict(&self, ex: &FeatureExample) -> Result<TagPrediction> {
        let mut tape = Tape::new(&self.params);
        let e = self.emissions_on_tape(&mut tape, ex)?;
        let ev = tape.value(e);
        let e = EmissionScores::new(ev.rows(), ev.cols(), ev.data().iter().map(|&v| v as f64).collect())?;
        let (tags, score) = decode(&self.config, &e, Some(self.params.get(self.transitions)))?;
        Ok(TagPrediction {
            tags,
            score,
            attention: None,
        })
    }

    pub fn tag_sentence(&self, sentence: &Sentence) -> Result<TagPrediction> {
        if sentence.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        self.predict(&self.encode(sentence, None))
    }

    /// Finite-difference check of the regularized loss in double precision.
    pub fn grad_check(&self, ex: &FeatureExample, config: GradCheckConfig) -> Result<GradCheckReport> {
        let store: ParamStore<f64> = self.params.cast();
        grad_check(
            &store,
            |t| {
                let l = self.loss_on_tape(t, ex)?;
                match self.regularizer_on_tape(t) {
                    Some(r) => t.add(l, r),
                    None => Ok(l),
                }
            },
            config,
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Metadata {
            kind: FEATURE_KIND.into(),
            config: self.config.clone(),
            features: self.features.clone(),
        };
        Checkpoint {
            metadata: serde_json::to_string(&meta).expect("metadata serializes"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint, pos: Arc<dyn PosTagger>) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(&ck.metadata)?;
        if meta.kind != FEATURE_KIND {
            return Err(Error::Checkpoint(format!("expected a feature CRF, found '{}'", meta.kind)));
        }
        Self::with_index(meta.config, meta.features, pos, Some(ck.params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(words: &[&str], t: usize) -> Vec<String> {
        let pos = LexiconPosTagger.tag(words);
        extract_baseline_features(words, &pos, t)
    }

    #[test]
    fn word_shape_features() {
        let f = feats(&["the", "Video", "42"], 1);
        for want in ["f2@0=Vi", "f3@0=Vid", "f4@0=eo", "f5@0=deo", "f7@0=true", "f8@0=false", "f1@0=video"] {
            assert!(f.contains(&want.to_string()), "missing {want} in {f:?}");
        }
        assert!(f.contains(&"f6@1=true".to_string()));
        assert!(f.contains(&"f9@1=CD".to_string()));
        assert!(f.contains(&"f9@-1=DT".to_string()));
    }

    #[test]
    fn boundary_markers() {
        let f = feats(&["Quiz", "2"], 0);
        assert!(f.contains(&"f1@-1=<BOS>".to_string()));
        assert!(f.contains(&"f1@-2=<BOS>".to_string()));
        assert!(f.contains(&"f1@2=<EOS>".to_string()));
        assert_eq!(f, feats(&["Quiz", "2"], 0));
    }

    #[test]
    fn pos_rules() {
        let tags = LexiconPosTagger.tag(&["I", "watched", "the", "lectures", "quickly", ",", "OK"]);
        assert_eq!(tags, ["PRP", "VBD", "DT", "NNS", "RB", ".", "NNP"]);
    }

    #[test]
    fn index_serde() {
        let mut ix = FeatureIndex::default();
        ix.insert("b");
        ix.insert("a");
        ix.insert("b");
        let back: FeatureIndex = serde_json::from_str(&serde_json::to_string(&ix).unwrap()).unwrap();
        assert_eq!(back, ix);
        assert_eq!(back.get("a"), Some(1));
    }
}
