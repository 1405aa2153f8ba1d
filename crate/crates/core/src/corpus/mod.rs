//! Threads, sentences, tokens, mention spans and BIO tag sequences.

mod bio;
mod io;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::bio::{bio_decode, bio_encode, DecodeWarning};
pub use self::io::{
    read_tagged_corpus, read_tagged_corpus_from, read_threads, read_threads_from, write_tagged_corpus,
    write_tagged_corpus_to, write_threads,
};
pub use self::tokenize::{split_sentences, tokenize};

/// The seven resource types annotators label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceTypeFine {
    Assessments,
    Exams,
    Videos,
    Readings,
    Slides,
    Transcripts,
    AdditionalResources,
}

impl ResourceTypeFine {
    pub const ALL: [ResourceTypeFine; 7] = [
        ResourceTypeFine::Assessments,
        ResourceTypeFine::Exams,
        ResourceTypeFine::Videos,
        ResourceTypeFine::Readings,
        ResourceTypeFine::Slides,
        ResourceTypeFine::Transcripts,
        ResourceTypeFine::AdditionalResources,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceTypeFine::Assessments => "Assessments",
            ResourceTypeFine::Exams => "Exams",
            ResourceTypeFine::Videos => "Videos",
            ResourceTypeFine::Readings => "Readings",
            ResourceTypeFine::Slides => "Slides",
            ResourceTypeFine::Transcripts => "Transcripts",
            ResourceTypeFine::AdditionalResources => "AdditionalResources",
        }
    }

    /// Folds the teaching-material types into `Coursewares`.
    pub fn collapse(self) -> ResourceType {
        match self {
            ResourceTypeFine::Assessments => ResourceType::Assessments,
            ResourceTypeFine::Exams => ResourceType::Exams,
            ResourceTypeFine::Videos => ResourceType::Videos,
            ResourceTypeFine::Readings
            | ResourceTypeFine::Slides
            | ResourceTypeFine::Transcripts
            | ResourceTypeFine::AdditionalResources => ResourceType::Coursewares,
        }
    }
}

impl fmt::Display for ResourceTypeFine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResourceTypeFine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown fine resource type '{s}'")))
    }
}

/// The four resource types used for tagging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceType {
    Assessments,
    Exams,
    Videos,
    Coursewares,
}

impl ResourceType {
    pub const ALL: [ResourceType; 4] = [
        ResourceType::Assessments,
        ResourceType::Exams,
        ResourceType::Videos,
        ResourceType::Coursewares,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceType::Assessments => "Assessments",
            ResourceType::Exams => "Exams",
            ResourceType::Videos => "Videos",
            ResourceType::Coursewares => "Coursewares",
        }
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResourceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown resource type '{s}'")))
    }
}

/// A BIO tag over the four coarse resource types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(ResourceType),
    I(ResourceType),
}

impl Tag {
    pub const COUNT: usize = 9;

    pub const ALL: [Tag; 9] = [
        Tag::O,
        Tag::B(ResourceType::Assessments),
        Tag::I(ResourceType::Assessments),
        Tag::B(ResourceType::Exams),
        Tag::I(ResourceType::Exams),
        Tag::B(ResourceType::Videos),
        Tag::I(ResourceType::Videos),
        Tag::B(ResourceType::Coursewares),
        Tag::I(ResourceType::Coursewares),
    ];

    /// Dense index in `0..9`; `O` is 0.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(t) => 1 + 2 * t.index(),
            Tag::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        Self::ALL.get(index).copied()
    }

    pub fn resource_type(self) -> Option<ResourceType> {
        match self {
            Tag::O => None,
            Tag::B(t) | Tag::I(t) => Some(t),
        }
    }

    pub fn is_outside(self) -> bool {
        self == Tag::O
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(t) => write!(f, "{t}_B"),
            Tag::I(t) => write!(f, "{t}_I"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let bad = || Error::Invalid(format!("unknown tag '{s}'"));
        let (ty, pos) = s.rsplit_once('_').ok_or_else(bad)?;
        let ty: ResourceType = ty.parse().map_err(|_| bad())?;
        match pos {
            "B" => Ok(Tag::B(ty)),
            "I" => Ok(Tag::I(ty)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A token with half-open character offsets into its sentence string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, char_start: usize, char_end: usize) -> Self {
        Token {
            text: text.into(),
            char_start,
            char_end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub post_index: usize,
    /// Position in the unfolded thread.
    pub sentence_index: usize,
}

impl Sentence {
    /// Builds a sentence from pre-split words, assigning offsets as if the
    /// words were joined by single spaces.
    pub fn from_words<S: AsRef<str>>(words: &[S], post_index: usize, sentence_index: usize) -> Self {
        let mut tokens = Vec::with_capacity(words.len());
        let mut pos = 0;
        for w in words {
            let w = w.as_ref();
            let len = w.chars().count();
            tokens.push(Token::new(w, pos, pos + len));
            pos += len + 1;
        }
        Sentence {
            tokens,
            post_index,
            sentence_index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

/// A discussion thread. Post 0 is the title.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    #[serde(default)]
    pub course_id: String,
    pub posts: Vec<Vec<String>>,
}

/// Half-open token range `[start, end)` within one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(sentence_index: usize, start: usize, end: usize) -> Self {
        Span {
            sentence_index,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of shared token positions (zero across sentences).
    pub fn overlap(&self, other: &Span) -> usize {
        if self.sentence_index != other.sentence_index {
            return 0;
        }
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.overlap(other) > 0
    }
}

/// A mention label, either before or after type collapsing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MentionType {
    Fine(ResourceTypeFine),
    Coarse(ResourceType),
}

impl MentionType {
    pub fn coarse(self) -> ResourceType {
        match self {
            MentionType::Fine(t) => t.collapse(),
            MentionType::Coarse(t) => t,
        }
    }

    pub fn is_fine(self) -> bool {
        matches!(self, MentionType::Fine(_))
    }
}

impl From<ResourceType> for MentionType {
    fn from(t: ResourceType) -> Self {
        MentionType::Coarse(t)
    }
}

impl From<ResourceTypeFine> for MentionType {
    fn from(t: ResourceTypeFine) -> Self {
        MentionType::Fine(t)
    }
}

/// Where a mention came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Group1,
    Group2,
    /// Span union of an agreeing pair.
    Agreed,
    /// Span union of a type-disagreeing pair, labelled with group 1's type.
    TypeDisagreement,
    /// Recovered from a tag sequence.
    Decoded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedMention {
    pub span: Span,
    pub rtype: MentionType,
    pub group: Group,
}

impl AnnotatedMention {
    pub fn new(span: Span, rtype: impl Into<MentionType>, group: Group) -> Self {
        AnnotatedMention {
            span,
            rtype: rtype.into(),
            group,
        }
    }
}

/// A sentence paired with its gold tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub thread_id: String,
    pub sentence: Sentence,
    pub tags: Vec<Tag>,
}

/// A tagging corpus. Sentences of one thread are stored contiguously in
/// thread order, so the context of an example is the run of sentences of the
/// same thread that precede it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
}

impl TaggedCorpus {
    pub fn new(sentences: Vec<TaggedSentence>) -> Self {
        TaggedCorpus { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Up to `cap` sentences of the same thread immediately preceding example `i`.
    pub fn context(&self, i: usize, cap: usize) -> Vec<&Sentence> {
        let thread = &self.sentences[i].thread_id;
        let mut first = i;
        while first > 0
            && i - first < cap
            && self.sentences[first - 1].thread_id == *thread
            && self.sentences[first - 1].sentence.sentence_index
                < self.sentences[i].sentence.sentence_index
        {
            first -= 1;
        }
        self.sentences[first..i].iter().map(|s| &s.sentence).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.sentence.len()).sum()
    }
}

/// Lays out a thread as one ordered list of sentences: title first, then each
/// post in order. Sentences that tokenize to nothing are skipped.
pub fn unfold_thread(thread: &Thread) -> Vec<Sentence> {
    let mut out = Vec::new();
    for (post_index, post) in thread.posts.iter().enumerate() {
        for raw in post {
            let tokens = tokenize(raw);
            if tokens.is_empty() {
                continue;
            }
            let sentence_index = out.len();
            out.push(Sentence {
                tokens,
                post_index,
                sentence_index,
            });
        }
    }
    out
}

/// The `min(i, cap)` sentences immediately preceding sentence `i`.
pub fn context_window(sentences: &[Sentence], i: usize, cap: usize) -> &[Sentence] {
    let i = i.min(sentences.len());
    &sentences[i - i.min(cap)..i]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventories_have_expected_sizes() {
        assert_eq!(ResourceTypeFine::ALL.len(), 7);
        assert_eq!(ResourceType::ALL.len(), 4);
        assert_eq!(Tag::ALL.len(), Tag::COUNT);
        for (i, t) in Tag::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(Tag::from_index(i), Some(*t));
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), *t);
        }
        for (i, t) in ResourceTypeFine::ALL.iter().enumerate() {
            assert_eq!(t.code() as usize, i);
            assert_eq!(t.name().parse::<ResourceTypeFine>().unwrap(), *t);
        }
    }

    #[test]
    fn tag_names() {
        assert_eq!(Tag::B(ResourceType::Exams).to_string(), "Exams_B");
        assert_eq!(Tag::I(ResourceType::Coursewares).to_string(), "Coursewares_I");
        assert!("Exams_X".parse::<Tag>().is_err());
        assert!("Quiz_B".parse::<Tag>().is_err());
    }

    fn thread(posts: &[&[&str]]) -> Thread {
        Thread {
            thread_id: "t".into(),
            course_id: "c".into(),
            posts: posts.iter().map(|p| p.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn unfold_orders_posts() {
        let t = thread(&[&["Title here"], &["One.", "Two."], &["Three."]]);
        let s = unfold_thread(&t);
        assert_eq!(s.len(), 4);
        assert_eq!(s.iter().map(|s| s.post_index).collect::<Vec<_>>(), [0, 1, 1, 2]);
        assert_eq!(s.iter().map(|s| s.sentence_index).collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn unfold_skips_empty_posts() {
        let t = thread(&[&["Title"], &[], &["Reply."]]);
        let s = unfold_thread(&t);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].post_index, 2);

        let single = unfold_thread(&thread(&[&["Only a title"]]));
        assert_eq!(single.len(), 1);
        assert_eq!((single[0].post_index, single[0].sentence_index), (0, 0));
    }

    #[test]
    fn context_windows() {
        let sents: Vec<Sentence> = (0..10).map(|i| Sentence::from_words(&["w"], 0, i)).collect();
        assert!(context_window(&sents, 0, 5).is_empty());
        let w = context_window(&sents, 7, 5);
        assert_eq!(w.iter().map(|s| s.sentence_index).collect::<Vec<_>>(), [2, 3, 4, 5, 6]);
        let w = context_window(&sents, 2, 5);
        assert_eq!(w.iter().map(|s| s.sentence_index).collect::<Vec<_>>(), [0, 1]);
        assert!(context_window(&sents, 4, 0).is_empty());
    }

    #[test]
    fn corpus_context_stops_at_thread_boundary() {
        let mk = |tid: &str, idx: usize| TaggedSentence {
            thread_id: tid.into(),
            sentence: Sentence::from_words(&["w"], 0, idx),
            tags: vec![Tag::O],
        };
        let corpus = TaggedCorpus::new(vec![mk("a", 0), mk("a", 1), mk("b", 0), mk("b", 2), mk("b", 3)]);
        assert!(corpus.context(0, 5).is_empty());
        assert_eq!(corpus.context(1, 5).len(), 1);
        assert!(corpus.context(2, 5).is_empty());
        let ctx = corpus.context(4, 5);
        assert_eq!(ctx.iter().map(|s| s.sentence_index).collect::<Vec<_>>(), [0, 2]);
        assert_eq!(corpus.context(4, 1).len(), 1);
    }

    #[test]
    fn span_overlap() {
        let a = Span::new(0, 2, 5);
        assert_eq!(a.overlap(&Span::new(0, 4, 8)), 1);
        assert_eq!(a.overlap(&Span::new(0, 5, 8)), 0);
        assert_eq!(a.overlap(&Span::new(1, 2, 5)), 0);
    }
}
