//! Tag-level metrics, the prediction error taxonomy and the OOV split.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::report::{corpus_fingerprint, evaluate, sha256_hex, EvaluationReport};
use crate::agreement::greedy_overlap_pairs;
use crate::corpus::{AnnotatedMention, ResourceType, Sentence, Span, Tag};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Zero denominators give zero.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Self::from_pr(ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

fn check_aligned(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Length {
            what: "predicted sentences",
            got: pred.len(),
            expected: gold.len(),
        });
    }
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(Error::Length {
                what: "predicted tags",
                got: p.len(),
                expected: g.len(),
            });
        }
    }
    Ok(())
}

/// Token-level micro precision, recall and F1 over all tags except O.
pub fn micro_prf(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<Prf> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().flatten().zip(pred.iter().flatten()) {
        match (g.is_outside(), p.is_outside()) {
            (_, false) if g == p => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {
                fp += 1;
                fn_ += 1;
            }
            (true, true) => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Per-tag TP/FP/FN counts over the non-O tags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagConfusion {
    counts: [TagCounts; Tag::COUNT],
}

impl TagConfusion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sequences(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<Self> {
        check_aligned(gold, pred)?;
        let mut c = Self::new();
        for (g, p) in gold.iter().zip(pred) {
            c.add(g, p)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, gold: &[Tag], pred: &[Tag]) -> Result<()> {
        if gold.len() != pred.len() {
            return Err(Error::Length {
                what: "predicted tags",
                got: pred.len(),
                expected: gold.len(),
            });
        }
        for (&g, &p) in gold.iter().zip(pred) {
            if g == p {
                self.counts[g.index()].tp += 1;
            } else {
                self.counts[p.index()].fp += 1;
                self.counts[g.index()].fn_ += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &TagConfusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
    }

    pub fn get(&self, tag: Tag) -> TagCounts {
        self.counts[tag.index()]
    }

    /// Sums of the per-tag counts, excluding O.
    pub fn totals(&self) -> TagCounts {
        let mut t = TagCounts::default();
        for tag in Tag::ALL.iter().filter(|t| !t.is_outside()) {
            let c = self.get(*tag);
            t.tp += c.tp;
            t.fp += c.fp;
            t.fn_ += c.fn_;
        }
        t
    }

    pub fn micro(&self) -> Prf {
        let t = self.totals();
        Prf::from_counts(t.tp, t.fp, t.fn_)
    }

    pub fn per_tag(&self) -> Vec<TagScore> {
        Tag::ALL
            .iter()
            .filter(|t| !t.is_outside())
            .map(|&tag| {
                let c = self.get(tag);
                TagScore {
                    tag,
                    counts: c,
                    prf: Prf::from_counts(c.tp, c.fp, c.fn_),
                    no_support: c.tp + c.fp + c.fn_ == 0,
                }
            })
            .collect()
    }
}

/// One-vs-rest score of a single tag. `no_support` marks a tag absent from
/// both gold and prediction, whose scores are reported as 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagScore {
    pub tag: Tag,
    pub counts: TagCounts,
    pub prf: Prf,
    pub no_support: bool,
}

/// F1 for each of the eight non-O tags.
pub fn per_tag_f1(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<Vec<TagScore>> {
    Ok(TagConfusion::from_sequences(gold, pred)?.per_tag())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    ExactlyCorrect,
    Missing,
    WronglyExtracted,
    ScopeWrongTypeRight,
    ScopeRightTypeWrong,
    ScopeWrongTypeWrong,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::ExactlyCorrect,
        ErrorCategory::Missing,
        ErrorCategory::WronglyExtracted,
        ErrorCategory::ScopeWrongTypeRight,
        ErrorCategory::ScopeRightTypeWrong,
        ErrorCategory::ScopeWrongTypeWrong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::ExactlyCorrect => "exactly_correct",
            ErrorCategory::Missing => "missing",
            ErrorCategory::WronglyExtracted => "wrongly_extracted",
            ErrorCategory::ScopeWrongTypeRight => "scope_wrong_type_right",
            ErrorCategory::ScopeRightTypeWrong => "scope_right_type_wrong",
            ErrorCategory::ScopeWrongTypeWrong => "scope_wrong_type_wrong",
        }
    }

    /// Classifies a matched gold/prediction pair.
    pub fn of_pair(gold: &AnnotatedMention, pred: &AnnotatedMention) -> Self {
        let scope = gold.span == pred.span;
        let kind = gold.rtype.coarse() == pred.rtype.coarse();
        match (scope, kind) {
            (true, true) => ErrorCategory::ExactlyCorrect,
            (false, true) => ErrorCategory::ScopeWrongTypeRight,
            (true, false) => ErrorCategory::ScopeRightTypeWrong,
            (false, false) => ErrorCategory::ScopeWrongTypeWrong,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorizedPair {
    pub gold: Option<AnnotatedMention>,
    pub pred: Option<AnnotatedMention>,
    pub category: ErrorCategory,
}

impl CategorizedPair {
    /// The gold type when there is a gold mention, else the predicted type.
    pub fn resource_type(&self) -> ResourceType {
        self.gold
            .as_ref()
            .or(self.pred.as_ref())
            .map(|m| m.rtype.coarse())
            .expect("a categorized pair holds at least one mention")
    }
}

/// Overlap-matches gold and predicted mentions (greedy, largest shared token
/// count first) and assigns every mention to exactly one category.
pub fn categorize_prediction(gold: &[AnnotatedMention], pred: &[AnnotatedMention]) -> Vec<CategorizedPair> {
    let gs: Vec<Span> = gold.iter().map(|m| m.span).collect();
    let ps: Vec<Span> = pred.iter().map(|m| m.span).collect();
    let pairs = greedy_overlap_pairs(&gs, &ps);
    let mut gold_match = vec![None; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    for (i, j) in pairs {
        gold_match[i] = Some(j);
        pred_used[j] = true;
    }
    let mut out = Vec::with_capacity(gold.len() + pred.len());
    for (g, m) in gold.iter().zip(&gold_match) {
        out.push(match m {
            Some(j) => CategorizedPair {
                gold: Some(g.clone()),
                pred: Some(pred[*j].clone()),
                category: ErrorCategory::of_pair(g, &pred[*j]),
            },
            None => CategorizedPair {
                gold: Some(g.clone()),
                pred: None,
                category: ErrorCategory::Missing,
            },
        });
    }
    for (p, _) in pred.iter().zip(&pred_used).filter(|(_, used)| !**used) {
        out.push(CategorizedPair {
            gold: None,
            pred: Some(p.clone()),
            category: ErrorCategory::WronglyExtracted,
        });
    }
    out
}

/// Category counts per resource type, with a total row.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub per_type: BTreeMap<ResourceType, BTreeMap<ErrorCategory, usize>>,
    pub total: BTreeMap<ErrorCategory, usize>,
}

impl ErrorCounts {
    pub fn new() -> Self {
        let zero: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
        ErrorCounts {
            per_type: ResourceType::ALL.iter().map(|t| (*t, zero.clone())).collect(),
            total: zero,
        }
    }

    pub fn record(&mut self, pairs: &[CategorizedPair]) {
        for p in pairs {
            *self.per_type.entry(p.resource_type()).or_default().entry(p.category).or_default() += 1;
            *self.total.entry(p.category).or_default() += 1;
        }
    }

    pub fn cases(&self) -> usize {
        self.total.values().sum()
    }

    /// Mention-level scores: exact matches over predicted and gold mentions.
    pub fn mention_prf(&self) -> Prf {
        let get = |c| self.total.get(&c).copied().unwrap_or(0);
        let exact = get(ErrorCategory::ExactlyCorrect);
        let matched_inexact = get(ErrorCategory::ScopeWrongTypeRight)
            + get(ErrorCategory::ScopeRightTypeWrong)
            + get(ErrorCategory::ScopeWrongTypeWrong);
        let fp = matched_inexact + get(ErrorCategory::WronglyExtracted);
        let fn_ = matched_inexact + get(ErrorCategory::Missing);
        Prf::from_counts(exact, fp, fn_)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OovRow {
    pub correct: usize,
    pub total: usize,
    pub ratio: f64,
}

impl OovRow {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.ratio = self.correct as f64 / self.total as f64;
    }

    pub fn from_counts(correct: usize, total: usize) -> Self {
        OovRow {
            correct,
            total,
            ratio: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OovReport {
    pub all: OovRow,
    pub oov: OovRow,
    pub non_oov: OovRow,
}

/// Splits gold mentions by whether any of their tokens is out of vocabulary;
/// a mention counts as correct when it is `ExactlyCorrect`.
pub fn oov_report<'a>(
    sentences: impl IntoIterator<Item = (&'a Sentence, &'a [CategorizedPair])>,
    is_oov: impl Fn(&str) -> bool,
) -> OovReport {
    let mut r = OovReport::default();
    for (sentence, pairs) in sentences {
        for p in pairs {
            let Some(g) = &p.gold else { continue };
            let correct = p.category == ErrorCategory::ExactlyCorrect;
            let oov = sentence.tokens[g.span.start..g.span.end].iter().any(|t| is_oov(&t.text));
            r.all.add(correct);
            if oov {
                r.oov.add(correct);
            } else {
                r.non_oov.add(correct);
            }
        }
    }
    r
}

/// Token recall restricted to the gold spans in `spans`: the fraction of their
/// tokens whose predicted tag equals the gold tag.
pub fn span_token_recall(gold: &[Vec<Tag>], pred: &[Vec<Tag>], spans: &[(usize, Span)]) -> Result<OovRow> {
    check_aligned(gold, pred)?;
    let (mut hit, mut total) = (0, 0);
    for &(i, span) in spans {
        let (g, p) = (&gold[i], &pred[i]);
        if span.end > g.len() {
            return Err(Error::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: g.len(),
            });
        }
        for t in span.start..span.end {
            total += 1;
            hit += usize::from(g[t] == p[t]);
        }
    }
    Ok(OovRow::from_counts(hit, total))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{bio_decode, Group};

    fn tag(s: &str) -> Tag {
        s.parse().unwrap()
    }

    fn tags(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(tag).collect()
    }

    fn mention(start: usize, end: usize, t: ResourceType) -> AnnotatedMention {
        AnnotatedMention::new(Span::new(0, start, end), t, Group::Decoded)
    }

    #[test]
    fn perfect_prediction() {
        let g = vec![tags("O Exams_B Exams_I O Videos_B")];
        let p = micro_prf(&g, &g).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn handcrafted_confusion() {
        let p = Prf::from_counts(3, 1, 2);
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.recall, 0.6);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        let gold = vec![tags("Exams_B Exams_I Exams_I Videos_B Videos_I O")];
        let pred = vec![tags("Exams_B Exams_I Exams_I Videos_B O Videos_B")];
        let m = micro_prf(&gold, &pred).unwrap();
        assert_eq!(m, Prf::from_counts(4, 1, 1));
    }

    #[test]
    fn published_f1() {
        let p = Prf::from_pr(0.7291, 0.7920);
        assert!((p.f1 - 0.7592).abs() < 5e-4, "{}", p.f1);
    }

    #[test]
    fn misaligned_input_rejected() {
        assert!(micro_prf(&[tags("O O")], &[tags("O")]).is_err());
        assert!(micro_prf(&[tags("O O")], &[]).is_err());
    }

    #[test]
    fn per_tag_scores() {
        let gold = vec![tags("Exams_B Exams_I O Videos_B")];
        let pred = vec![tags("Exams_B O O Exams_B")];
        let table = per_tag_f1(&gold, &pred).unwrap();
        assert_eq!(table.len(), 8);
        let eb = table.iter().find(|s| s.tag == tag("Exams_B")).unwrap();
        assert_eq!(eb.counts, TagCounts { tp: 1, fp: 1, fn_: 0 });
        assert!((eb.prf.f1 - 2.0 / 3.0).abs() < 1e-12);
        let cb = table.iter().find(|s| s.tag == tag("Coursewares_B")).unwrap();
        assert!(cb.no_support);
        assert_eq!(cb.prf.f1, 0.0);
        let gold = vec![tags("Videos_B Videos_I")];
        let vb = per_tag_f1(&gold, &gold).unwrap();
        assert_eq!(vb.iter().find(|s| s.tag == tag("Videos_B")).unwrap().prf.f1, 1.0);
    }

    #[test]
    fn taxonomy_examples() {
        use ResourceType::*;
        // "the quiz" predicted inside gold "the quiz for week 2"
        let c = categorize_prediction(&[mention(0, 5, Exams)], &[mention(0, 2, Exams)]);
        assert_eq!(c[0].category, ErrorCategory::ScopeWrongTypeRight);
        let c = categorize_prediction(&[mention(1, 4, Videos)], &[mention(1, 4, Assessments)]);
        assert_eq!(c[0].category, ErrorCategory::ScopeRightTypeWrong);
        let c = categorize_prediction(&[mention(3, 4, Coursewares)], &[]);
        assert_eq!(c[0].category, ErrorCategory::Missing);
        let c = categorize_prediction(&[], &[mention(3, 4, Coursewares)]);
        assert_eq!(c[0].category, ErrorCategory::WronglyExtracted);
        let c = categorize_prediction(&[mention(0, 2, Videos)], &[mention(1, 3, Exams)]);
        assert_eq!(c[0].category, ErrorCategory::ScopeWrongTypeWrong);
        let c = categorize_prediction(&[mention(0, 2, Videos)], &[mention(0, 2, Videos)]);
        assert_eq!(c[0].category, ErrorCategory::ExactlyCorrect);
    }

    #[test]
    fn published_oov_ratio() {
        let r = OovRow::from_counts(93, 163);
        assert!((r.ratio - 0.5706).abs() < 5e-5);
    }

    #[test]
    fn oov_split() {
        let s = Sentence::from_words(&["see", "hw3", "and", "the", "quiz"], 0, 0);
        let gold = [mention(1, 2, ResourceType::Assessments), mention(3, 5, ResourceType::Exams)];
        let pred = [mention(1, 2, ResourceType::Assessments)];
        let pairs = categorize_prediction(&gold, &pred);
        let r = oov_report([(&s, &pairs[..])], |w| w == "hw3");
        assert_eq!(r.oov, OovRow::from_counts(1, 1));
        assert_eq!(r.non_oov, OovRow::from_counts(0, 1));
        assert_eq!(r.all.total, r.oov.total + r.non_oov.total);
        let none = oov_report([(&s, &pairs[..])], |_| false);
        assert_eq!(none.oov.total, 0);
    }

    #[test]
    fn subset_recall() {
        let gold = vec![tags("Videos_B Videos_I O")];
        let pred = vec![tags("Videos_B O O")];
        let r = span_token_recall(&gold, &pred, &[(0, Span::new(0, 0, 2))]).unwrap();
        assert_eq!(r, OovRow::from_counts(1, 2));
    }

    fn tag_seq(len: usize) -> impl Strategy<Value = Vec<Tag>> {
        prop::collection::vec((0..Tag::COUNT).prop_map(|i| Tag::from_index(i).unwrap()), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn taxonomy_partitions_mentions((g, p) in (1usize..20).prop_flat_map(|n| (tag_seq(n), tag_seq(n)))) {
            let (gm, _) = bio_decode(&g, 0);
            let (pm, _) = bio_decode(&p, 0);
            let pairs = categorize_prediction(&gm, &pm);
            let gold_seen = pairs.iter().filter(|c| c.gold.is_some()).count();
            let pred_seen = pairs.iter().filter(|c| c.pred.is_some()).count();
            prop_assert_eq!(gold_seen, gm.len());
            prop_assert_eq!(pred_seen, pm.len());
            for c in &pairs {
                let expected = match (&c.gold, &c.pred) {
                    (Some(a), Some(b)) => {
                        prop_assert!(a.span.overlaps(&b.span));
                        ErrorCategory::of_pair(a, b)
                    }
                    (Some(_), None) => ErrorCategory::Missing,
                    (None, Some(_)) => ErrorCategory::WronglyExtracted,
                    (None, None) => unreachable!(),
                };
                prop_assert_eq!(c.category, expected);
            }
        }

        #[test]
        fn two_metric_paths_agree(seqs in prop::collection::vec((1usize..12).prop_flat_map(|n| (tag_seq(n), tag_seq(n))), 1..6)) {
            let gold: Vec<Vec<Tag>> = seqs.iter().map(|s| s.0.clone()).collect();
            let pred: Vec<Vec<Tag>> = seqs.iter().map(|s| s.1.clone()).collect();
            let a = micro_prf(&gold, &pred).unwrap();
            let b = TagConfusion::from_sequences(&gold, &pred).unwrap().micro();
            prop_assert!((a.precision - b.precision).abs() < 1e-9);
            prop_assert!((a.recall - b.recall).abs() < 1e-9);
            prop_assert!((a.f1 - b.f1).abs() < 1e-9);
            prop_assert!((a.f1 * (a.precision + a.recall) - 2.0 * a.precision * a.recall).abs() < 1e-9);
        }
    }
}
