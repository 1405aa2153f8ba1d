//! Deterministic synthetic forum corpora with planted resource mentions.
//!
//! Mentions come in three kinds: plain phrases built from dictionary words,
//! out-of-vocabulary tokens recognisable from their spelling, and anaphoric
//! phrases ("this video") that count as mentions only when a plain mention of
//! the same type occurs within the preceding `context_window` sentences of the
//! thread. Look-alike anaphora without such an antecedent stay untagged.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{write_standoff, ThreadMention};
use crate::corpus::{write_threads, AnnotatedMention, Group, MentionType, ResourceType, ResourceTypeFine, Span, Thread};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Probability that the second group misses a mention.
    pub drop: f64,
    /// Probability that a kept mention's span is widened or narrowed by one token.
    pub span: f64,
    /// Probability that a kept mention gets another fine type.
    pub retype: f64,
    /// Per-sentence probability of an extra single-token mention.
    pub spurious: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            drop: 0.1,
            span: 0.1,
            retype: 0.1,
            spurious: 0.05,
        }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation {
            drop: 0.0,
            span: 0.0,
            retype: 0.0,
            spurious: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub train_sentences: usize,
    pub test_sentences: usize,
    /// Replies per thread, besides the title.
    pub min_replies: usize,
    pub max_replies: usize,
    pub max_sentences_per_post: usize,
    /// Target share of mentions using out-of-vocabulary templates.
    pub oov_rate: f64,
    /// Target share of mentions that are anaphoric.
    pub anaphora_rate: f64,
    /// Untagged look-alike anaphora planted per valid anaphoric mention.
    pub distractor_ratio: f64,
    /// Per-sentence probability of a second mention.
    pub second_mention_rate: f64,
    /// Per-sentence probability of an out-of-vocabulary non-mention token.
    pub noise_rate: f64,
    pub context_window: usize,
    pub vector_dim: usize,
    pub perturbation: Perturbation,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            train_sentences: 2000,
            test_sentences: 400,
            min_replies: 2,
            max_replies: 5,
            max_sentences_per_post: 3,
            oov_rate: 0.3,
            anaphora_rate: 0.3,
            distractor_ratio: 1.0,
            second_mention_rate: 0.3,
            noise_rate: 0.3,
            context_window: 5,
            vector_dim: 200,
            perturbation: Perturbation::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("oov_rate", self.oov_rate),
            ("anaphora_rate", self.anaphora_rate),
            ("second_mention_rate", self.second_mention_rate),
            ("noise_rate", self.noise_rate),
            ("perturbation.drop", self.perturbation.drop),
            ("perturbation.span", self.perturbation.span),
            ("perturbation.retype", self.perturbation.retype),
            ("perturbation.spurious", self.perturbation.spurious),
        ];
        if let Some((name, _)) = rates.iter().find(|(_, r)| !(0.0..=1.0).contains(r)) {
            return Err(Error::Invalid(format!("{name} must lie in [0, 1]")));
        }
        if self.oov_rate + self.anaphora_rate > 1.0 {
            return Err(Error::Invalid("oov_rate + anaphora_rate must not exceed 1".into()));
        }
        if !(self.distractor_ratio >= 0.0 && self.distractor_ratio.is_finite()) {
            return Err(Error::Invalid("distractor_ratio must be non-negative".into()));
        }
        if self.min_replies > self.max_replies || self.max_sentences_per_post == 0 {
            return Err(Error::Invalid("thread shape bounds are inconsistent".into()));
        }
        if self.context_window == 0 || self.vector_dim == 0 {
            return Err(Error::Invalid("context_window and vector_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Plain,
    Oov,
    Anaphoric,
}

/// One planted phrase. Invalid entries are look-alike anaphora tagged O.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub thread_id: String,
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub fine_type: ResourceTypeFine,
    pub kind: MentionKind,
    pub valid: bool,
    /// Sentence of the antecedent, for valid anaphora.
    pub antecedent: Option<usize>,
}

impl GoldEntry {
    pub fn span(&self) -> Span {
        Span::new(self.sentence_index, self.start, self.end)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthSplit {
    pub threads: Vec<Thread>,
    pub gold: Vec<GoldEntry>,
    pub group1: Vec<ThreadMention>,
    pub group2: Vec<ThreadMention>,
    /// Planted sentence tokens per thread, in sentence order.
    pub tokens: Vec<Vec<Vec<String>>>,
}

impl SynthSplit {
    pub fn sentence_count(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }

    pub fn gold_jsonl(&self) -> String {
        self.gold
            .iter()
            .map(|g| serde_json::to_string(g).expect("gold entry serializes") + "\n")
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub train: SynthSplit,
    pub test: SynthSplit,
    /// Pretrained-vector text covering the dictionary words only.
    pub vectors: String,
}

const FRAMES_1: &[&str] = &[
    "can someone explain {} ?",
    "I am stuck on {} .",
    "{} is really confusing .",
    "where can I find {} ?",
    "thanks for posting {} .",
    "has anyone finished {} yet ?",
    "I think {} has a typo .",
    "please take a look at {} .",
    "I could not follow {} at all .",
    "is there a deadline for {} ?",
];
const FRAMES_2: &[&str] = &[
    "I compared {} with {} .",
    "is {} related to {} ?",
    "after {} I looked at {} .",
    "both {} and {} are confusing .",
    "{} mentions {} but I am lost .",
    "I finished {} but not {} .",
];
const FRAMES_3: &[&str] = &[
    "I went through {} , {} and {} .",
    "{} , {} and {} all seem related .",
    "today I checked {} , {} and also {} .",
];

const TOPICS: &[&str] = &[
    "gradient descent",
    "linear regression",
    "recursion",
    "sorting",
    "probability",
    "neural networks",
    "hash tables",
    "dynamic programming",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "dat", "tor", "vex", "qu", "zan", "pil", "mor", "sep", "ul", "bri", "gan", "fo",
];

fn plain_templates(t: ResourceTypeFine) -> &'static [&'static str] {
    use ResourceTypeFine::*;
    match t {
        Assessments => &[
            "assignment {n}",
            "homework {n}",
            "problem set {n}",
            "the programming assignment",
            "question {n} of homework {k}",
            "the peer review assignment",
        ],
        Exams => &["quiz {n}", "the quiz for week {k}", "the final exam", "the midterm exam", "exam question {n}"],
        Videos => &[
            "lecture {n} video",
            "the video on {topic}",
            "video {n}",
            "the lecture video for week {k}",
        ],
        Readings => &["the reading for week {k}", "chapter {n} of the textbook", "the assigned reading"],
        Slides => &["the slides for lecture {n}", "lecture {n} slides"],
        Transcripts => &["the transcript of lecture {n}", "the video transcript"],
        AdditionalResources => &["the course wiki", "the supplementary notes", "the practice dataset"],
    }
}

fn anaphor_phrases(t: ResourceTypeFine) -> &'static [&'static str] {
    use ResourceTypeFine::*;
    match t {
        Assessments => &["this assignment", "that homework"],
        Exams => &["this quiz", "that exam"],
        Videos => &["this video", "that lecture video"],
        Readings => &["this reading", "that chapter"],
        Slides => &["these slides", "those slides"],
        Transcripts => &["this transcript"],
        AdditionalResources => &["this wiki page", "those notes"],
    }
}

fn name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn oov_token(t: ResourceTypeFine, rng: &mut ChaCha8Rng) -> String {
    use ResourceTypeFine::*;
    let n = rng.gen_range(1..=300);
    let m = rng.gen_range(1..=9);
    let pick = rng.gen_range(0..3);
    match (t, pick) {
        (Assessments, 0) => format!("hw{n}"),
        (Assessments, 1) => format!("pset{n}"),
        (Assessments, _) => format!("HW{n}_{m}"),
        (Exams, 0) => format!("Q{n}"),
        (Exams, 1) => format!("quiz{n}"),
        (Exams, _) => format!("midterm{n}v{m}"),
        (Videos, 0) => format!("lec{n}.mp4"),
        (Videos, 1) => format!("L{n}V{m}"),
        (Videos, _) => format!("vid{n}_{m}.mp4"),
        (Readings, 0) => format!("{}.pdf", name(rng)),
        (Readings, _) => format!("ch{n}_{}.pdf", name(rng)),
        (Slides, 0) => format!("lec{n}_slides.pdf"),
        (Slides, _) => format!("{}.pptx", name(rng)),
        (Transcripts, 0) => format!("lec{n}_transcript.txt"),
        (Transcripts, _) => format!("{}.srt", name(rng)),
        (AdditionalResources, 0) => format!("{}.html", name(rng)),
        (AdditionalResources, 1) => format!("{}_data_g{m}", name(rng)),
        (AdditionalResources, _) => format!("{}.csv", name(rng)),
    }
}

/// Out-of-vocabulary tokens that are not resources.
fn noise_token(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=300);
    match rng.gen_range(0..4) {
        0 => format!("{}_{n}", name(rng)),
        1 => format!("v{}.{}", rng.gen_range(1..=9), rng.gen_range(0..=9)),
        2 => format!("err{n}"),
        _ => format!("{}{n}", name(rng)),
    }
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    let topic = *TOPICS.choose(rng).unwrap();
    template
        .replace("{n}", &rng.gen_range(1..=12).to_string())
        .replace("{k}", &rng.gen_range(1..=12).to_string())
        .replace("{topic}", topic)
        .split(' ')
        .map(str::to_string)
        .collect()
}

/// Every word the plain generator can emit; these receive pretrained vectors.
fn dictionary() -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    let mut add = |s: &str| {
        for w in s.split(' ').filter(|w| !w.contains('{')) {
            words.insert(w.to_lowercase());
        }
    };
    for f in FRAMES_1.iter().chain(FRAMES_2).chain(FRAMES_3).chain(TOPICS) {
        add(f);
    }
    for t in ResourceTypeFine::ALL {
        for s in plain_templates(t).iter().chain(anaphor_phrases(t)) {
            add(s);
        }
    }
    for n in 0..=100 {
        words.insert(n.to_string());
    }
    words.insert("!".into());
    words
}

struct Slot {
    tokens: Vec<String>,
    mention: Option<(ResourceTypeFine, MentionKind, bool, Option<usize>)>,
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
    mentions: usize,
    oov: usize,
    anaphoric: usize,
    distractors: usize,
}

impl Generator<'_> {
    /// Plain and anaphoric mentions (by fine type) of the last sentences.
    fn window<'w>(
        &self,
        planted: &'w [Vec<(ResourceTypeFine, MentionKind)>],
    ) -> impl Iterator<Item = (usize, &'w (ResourceTypeFine, MentionKind))> {
        let lo = planted.len().saturating_sub(self.spec.context_window);
        planted[lo..].iter().enumerate().flat_map(move |(i, v)| v.iter().map(move |m| (lo + i, m)))
    }

    fn mention_slot(&mut self, planted: &[Vec<(ResourceTypeFine, MentionKind)>]) -> Slot {
        let spec = self.spec;
        let antecedents: Vec<(usize, ResourceTypeFine)> = self
            .window(planted)
            .filter(|(_, m)| m.1 == MentionKind::Plain)
            .map(|(i, m)| (i, m.0))
            .collect();
        let behind = (self.anaphoric as f64) < spec.anaphora_rate * (self.mentions + 1) as f64;
        self.mentions += 1;
        if !antecedents.is_empty() && behind && self.rng.gen_bool(0.9) {
            let (at, t) = *antecedents.choose(&mut self.rng).unwrap();
            self.anaphoric += 1;
            let phrase = *anaphor_phrases(t).choose(&mut self.rng).unwrap();
            return Slot {
                tokens: phrase.split(' ').map(str::to_string).collect(),
                mention: Some((t, MentionKind::Anaphoric, true, Some(at))),
            };
        }
        let t = *ResourceTypeFine::ALL.choose(&mut self.rng).unwrap();
        let oov_behind = (self.oov as f64) < spec.oov_rate * self.mentions as f64;
        if oov_behind && self.rng.gen_bool(0.9) {
            self.oov += 1;
            Slot {
                tokens: vec![oov_token(t, &mut self.rng)],
                mention: Some((t, MentionKind::Oov, true, None)),
            }
        } else {
            let template = *plain_templates(t).choose(&mut self.rng).unwrap();
            Slot {
                tokens: fill(template, &mut self.rng),
                mention: Some((t, MentionKind::Plain, true, None)),
            }
        }
    }

    /// A look-alike anaphor whose coarse type has no mention in the window.
    fn distractor_slot(&mut self, planted: &[Vec<(ResourceTypeFine, MentionKind)>], same: &[ResourceTypeFine]) -> Option<Slot> {
        let present: BTreeSet<ResourceType> = self
            .window(planted)
            .map(|(_, m)| m.0.collapse())
            .chain(same.iter().map(|t| t.collapse()))
            .collect();
        let free: Vec<ResourceTypeFine> = ResourceTypeFine::ALL
            .into_iter()
            .filter(|t| !present.contains(&t.collapse()))
            .collect();
        let t = *free.choose(&mut self.rng)?;
        self.distractors += 1;
        let phrase = *anaphor_phrases(t).choose(&mut self.rng).unwrap();
        Some(Slot {
            tokens: phrase.split(' ').map(str::to_string).collect(),
            mention: Some((t, MentionKind::Anaphoric, false, None)),
        })
    }

    fn sentence(
        &mut self,
        thread_id: &str,
        planted: &mut Vec<Vec<(ResourceTypeFine, MentionKind)>>,
        gold: &mut Vec<GoldEntry>,
    ) -> Vec<String> {
        let mut slots = vec![self.mention_slot(planted)];
        if self.rng.gen_bool(self.spec.second_mention_rate) {
            slots.push(self.mention_slot(planted));
        }
        let valid_types: Vec<ResourceTypeFine> = slots.iter().filter_map(|s| s.mention.map(|m| m.0)).collect();
        let want_distractor =
            (self.distractors as f64) < self.spec.distractor_ratio * self.anaphoric as f64 && self.rng.gen_bool(0.8);
        if want_distractor && slots.len() < 3 {
            if let Some(d) = self.distractor_slot(planted, &valid_types) {
                slots.push(d);
            }
        }
        if slots.len() < 3 && self.rng.gen_bool(self.spec.noise_rate) {
            slots.push(Slot {
                tokens: vec![noise_token(&mut self.rng)],
                mention: None,
            });
        }
        slots.shuffle(&mut self.rng);
        let frames = match slots.len() {
            1 => FRAMES_1,
            2 => FRAMES_2,
            _ => FRAMES_3,
        };
        let frame = *frames.choose(&mut self.rng).unwrap();
        let sentence_index = planted.len();
        let mut tokens = Vec::new();
        let mut next = slots.into_iter();
        let mut this_sentence = Vec::new();
        for piece in frame.split(' ') {
            if piece != "{}" {
                tokens.push(piece.to_string());
                continue;
            }
            let slot = next.next().expect("frame arity matches slot count");
            let start = tokens.len();
            tokens.extend(slot.tokens);
            if let Some((t, kind, valid, antecedent)) = slot.mention {
                gold.push(GoldEntry {
                    thread_id: thread_id.to_string(),
                    sentence_index,
                    start,
                    end: tokens.len(),
                    fine_type: t,
                    kind,
                    valid,
                    antecedent,
                });
                if valid {
                    this_sentence.push((t, kind));
                }
            }
        }
        planted.push(this_sentence);
        tokens
    }

    fn split(&mut self, prefix: &str, sentences: usize) -> SynthSplit {
        let mut out = SynthSplit::default();
        let mut remaining = sentences;
        let mut thread_no = 0;
        while remaining > 0 {
            thread_no += 1;
            let thread_id = format!("{prefix}-{thread_no:04}");
            let replies = self.rng.gen_range(self.spec.min_replies..=self.spec.max_replies);
            let mut post_sizes = vec![1];
            post_sizes.extend((0..replies).map(|_| self.rng.gen_range(1..=self.spec.max_sentences_per_post)));
            let mut planted = Vec::new();
            let mut posts = Vec::new();
            let mut tokens = Vec::new();
            let start = out.gold.len();
            'posts: for size in post_sizes {
                let mut post = Vec::new();
                for _ in 0..size {
                    if remaining == 0 {
                        if !post.is_empty() {
                            posts.push(post);
                        }
                        break 'posts;
                    }
                    let s = self.sentence(&thread_id, &mut planted, &mut out.gold);
                    post.push(s.join(" "));
                    tokens.push(s);
                    remaining -= 1;
                }
                posts.push(post);
            }
            for g in &out.gold[start..] {
                if g.valid {
                    let m = AnnotatedMention::new(g.span(), g.fine_type, Group::Group1);
                    out.group1.push(ThreadMention {
                        thread_id: thread_id.clone(),
                        mention: m,
                    });
                }
            }
            out.threads.push(Thread {
                thread_id,
                course_id: "synthetic".into(),
                posts,
            });
            out.tokens.push(tokens);
        }
        out.group2 = perturb(&out, &self.spec.perturbation, &mut self.rng);
        out
    }
}

/// The second annotator group: the first group's mentions with drops, span
/// shifts, type changes and spurious additions.
fn perturb(split: &SynthSplit, p: &Perturbation, rng: &mut ChaCha8Rng) -> Vec<ThreadMention> {
    let mut out = Vec::new();
    let mut by_sentence: std::collections::BTreeMap<(String, usize), Vec<ThreadMention>> = Default::default();
    for tm in &split.group1 {
        by_sentence
            .entry((tm.thread_id.clone(), tm.mention.span.sentence_index))
            .or_default()
            .push(tm.clone());
    }
    let thread_pos = |id: &str| split.threads.iter().position(|t| t.thread_id == id).unwrap();
    for ((thread_id, sentence), mentions) in by_sentence {
        let len = split.tokens[thread_pos(&thread_id)][sentence].len();
        let mut kept: Vec<ThreadMention> = Vec::new();
        for tm in mentions {
            if rng.gen_bool(p.drop) {
                continue;
            }
            let mut m = tm.mention.clone();
            m.group = Group::Group2;
            if rng.gen_bool(p.span) {
                let s = m.span;
                m.span = match rng.gen_range(0..3) {
                    0 if s.start > 0 => Span::new(sentence, s.start - 1, s.end),
                    1 if s.end < len => Span::new(sentence, s.start, s.end + 1),
                    _ if s.len() > 1 => Span::new(sentence, s.start + 1, s.end),
                    _ => s,
                };
            }
            if rng.gen_bool(p.retype) {
                let others: Vec<ResourceTypeFine> = ResourceTypeFine::ALL
                    .into_iter()
                    .filter(|t| m.rtype != MentionType::Fine(*t))
                    .collect();
                m.rtype = (*others.choose(rng).unwrap()).into();
            }
            if kept.iter().all(|k| !k.mention.span.overlaps(&m.span)) {
                kept.push(ThreadMention {
                    thread_id: thread_id.clone(),
                    mention: m,
                });
            }
        }
        if rng.gen_bool(p.spurious) {
            let at = rng.gen_range(0..len);
            let span = Span::new(sentence, at, at + 1);
            if kept.iter().all(|k| !k.mention.span.overlaps(&span)) {
                let t = *ResourceTypeFine::ALL.choose(rng).unwrap();
                kept.push(ThreadMention {
                    thread_id: thread_id.clone(),
                    mention: AnnotatedMention::new(span, t, Group::Group2),
                });
            }
        }
        kept.sort_by_key(|k| k.mention.span.start);
        out.extend(kept);
    }
    out
}

/// Generates the corpus described by `spec`; a pure function of the spec.
pub fn synth_gen(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut generator = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        mentions: 0,
        oov: 0,
        anaphoric: 0,
        distractors: 0,
    };
    let train = generator.split("train", spec.train_sentences);
    let test = generator.split("test", spec.test_sentences);
    let mut vectors = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_7ec7);
    for w in dictionary() {
        vectors.push_str(&w);
        for _ in 0..spec.vector_dim {
            write!(vectors, " {:.4}", rng.gen_range(-0.5..0.5)).unwrap();
        }
        vectors.push('\n');
    }
    Ok(SynthCorpus { train, test, vectors })
}

/// Writes `<split>.threads.jsonl`, `<split>.g1.tsv`, `<split>.g2.tsv` and
/// `<split>.gold.jsonl` for each non-empty split, plus `vectors.txt`.
pub fn write_synth(dir: impl AsRef<Path>, corpus: &SynthCorpus) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, split) in [("train", &corpus.train), ("test", &corpus.test)] {
        if split.threads.is_empty() {
            continue;
        }
        let p = dir.join(format!("{name}.threads.jsonl"));
        write_threads(&p, &split.threads)?;
        written.push(p);
        for (g, mentions) in [("g1", &split.group1), ("g2", &split.group2)] {
            let p = dir.join(format!("{name}.{g}.tsv"));
            write_standoff(&p, mentions)?;
            written.push(p);
        }
        let p = dir.join(format!("{name}.gold.jsonl"));
        fs::write(&p, split.gold_jsonl()).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    let p = dir.join("vectors.txt");
    fs::write(&p, &corpus.vectors).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

/// Reads a gold key written by [`write_synth`].
pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<GoldEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::{agreement_table, build_dataset, MergePolicy};
    use crate::corpus::unfold_thread;
    use crate::encoders::PretrainedVectors;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            train_sentences: 300,
            test_sentences: 60,
            vector_dim: 4,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_gen(&small(1)).unwrap();
        let b = synth_gen(&small(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train.threads, synth_gen(&small(2)).unwrap().train.threads);
    }

    #[test]
    fn sentence_counts_are_exact() {
        let c = synth_gen(&small(3)).unwrap();
        assert_eq!(c.train.sentence_count(), 300);
        assert_eq!(c.test.sentence_count(), 60);
        let unfolded: usize = c.train.threads.iter().map(|t| unfold_thread(t).len()).sum();
        assert_eq!(unfolded, 300);
    }

    #[test]
    fn gold_spans_index_real_tokens() {
        let c = synth_gen(&small(4)).unwrap();
        for split in [&c.train, &c.test] {
            for (thread, planned) in split.threads.iter().zip(&split.tokens) {
                let sentences = unfold_thread(thread);
                let words: Vec<Vec<String>> = sentences.iter().map(|s| s.words().map(str::to_string).collect()).collect();
                assert_eq!(&words, planned, "tokenization must reproduce the planted tokens");
            }
            for g in &split.gold {
                let t = split.threads.iter().position(|t| t.thread_id == g.thread_id).unwrap();
                assert!(g.start < g.end && g.end <= split.tokens[t][g.sentence_index].len());
            }
        }
    }

    #[test]
    fn anaphora_rules_hold() {
        let spec = small(5);
        let c = synth_gen(&spec).unwrap();
        for g in c.train.gold.iter().filter(|g| g.kind == MentionKind::Anaphoric) {
            let window = g.sentence_index.saturating_sub(spec.context_window)..g.sentence_index;
            let same_thread = c.train.gold.iter().filter(|o| o.thread_id == g.thread_id && o.valid);
            if g.valid {
                let at = g.antecedent.unwrap();
                assert!(window.contains(&at));
                assert!(same_thread.clone().any(|o| o.sentence_index == at
                    && o.kind == MentionKind::Plain
                    && o.fine_type == g.fine_type));
            } else {
                assert!(!same_thread.filter(|o| window.contains(&o.sentence_index)).any(|o| o.fine_type.collapse() == g.fine_type.collapse()));
            }
        }
    }

    #[test]
    fn rates_are_close_to_targets() {
        let c = synth_gen(&SynthSpec {
            vector_dim: 2,
            ..Default::default()
        })
        .unwrap();
        let valid: Vec<&GoldEntry> = c.train.gold.iter().filter(|g| g.valid).collect();
        let share = |k| valid.iter().filter(|g| g.kind == k).count() as f64 / valid.len() as f64;
        assert!((share(MentionKind::Oov) - 0.3).abs() < 0.03, "{}", share(MentionKind::Oov));
        assert!((share(MentionKind::Anaphoric) - 0.3).abs() < 0.03, "{}", share(MentionKind::Anaphoric));
        let distractors = c.train.gold.iter().filter(|g| !g.valid).count();
        assert!(distractors > valid.len() / 5, "{distractors}");
    }

    #[test]
    fn oov_mentions_are_outside_the_vectors() {
        let c = synth_gen(&small(6)).unwrap();
        let vectors = PretrainedVectors::read_from(c.vectors.as_bytes(), "vectors.txt").unwrap();
        for g in &c.train.gold {
            let t = c.train.threads.iter().position(|t| t.thread_id == g.thread_id).unwrap();
            let words = &c.train.tokens[t][g.sentence_index][g.start..g.end];
            let oov = words.iter().any(|w| !vectors.contains(w));
            assert_eq!(oov, g.kind == MentionKind::Oov, "{words:?}");
        }
    }

    #[test]
    fn unperturbed_groups_agree_fully() {
        let spec = SynthSpec {
            perturbation: Perturbation::none(),
            ..small(7)
        };
        let c = synth_gen(&spec).unwrap();
        let built = build_dataset(&c.train.threads, &c.train.group1, &c.train.group2, MergePolicy::IntersectionM).unwrap();
        let report = built.agreement.report();
        for row in report.per_type.values() {
            assert_eq!(row.p_pos, Some(1.0));
        }
        assert_eq!(built.corpus.len(), 300);
    }

    #[test]
    fn perturbation_lowers_agreement() {
        let c = synth_gen(&small(8)).unwrap();
        assert_ne!(c.train.group1.len(), 0);
        let built = build_dataset(&c.train.threads, &c.train.group1, &c.train.group2, MergePolicy::UnionL).unwrap();
        let p = built.agreement.report().total.p_pos.unwrap();
        assert!(p < 1.0 && p > 0.5, "{p}");
        assert_eq!(agreement_table(&c.train.group1, &c.train.group2), built.agreement);
    }
}
