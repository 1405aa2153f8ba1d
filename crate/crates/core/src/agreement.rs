//! Two-group annotation reconciliation and dataset construction.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    bio_encode, unfold_thread, AnnotatedMention, Group, MentionType, ResourceType, ResourceTypeFine, Span,
    TaggedCorpus, TaggedSentence, Thread,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComparisonCase {
    /// Overlapping spans, same type.
    AG,
    /// Overlapping spans, different type.
    TD,
    G1Only,
    G2Only,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementCounts {
    pub ag: u64,
    pub td: u64,
    pub g1_only: u64,
    pub g2_only: u64,
}

impl AgreementCounts {
    pub fn g1_total(&self) -> u64 {
        self.ag + self.td + self.g1_only
    }

    pub fn g2_total(&self) -> u64 {
        self.ag + self.td + self.g2_only
    }

    /// `g1_total + g2_total - ag`, the size of the union as tabulated.
    pub fn union(&self) -> u64 {
        self.g1_total() + self.g2_total() - self.ag
    }

    /// Counts from group totals and their intersection, with no type disagreement.
    pub fn from_totals(g1_total: u64, g2_total: u64, intersection: u64) -> Result<Self> {
        if intersection > g1_total.min(g2_total) {
            return Err(Error::Invalid(format!(
                "intersection {intersection} exceeds a group total ({g1_total}, {g2_total})"
            )));
        }
        Ok(AgreementCounts {
            ag: intersection,
            td: 0,
            g1_only: g1_total - intersection,
            g2_only: g2_total - intersection,
        })
    }

    fn add(&mut self, other: &AgreementCounts) {
        self.ag += other.ag;
        self.td += other.td;
        self.g1_only += other.g1_only;
        self.g2_only += other.g2_only;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergePolicy {
    /// Agreeing pairs only.
    IntersectionM,
    /// Agreeing pairs, single-group mentions and type-disagreeing pairs.
    UnionL,
}

/// A mention together with the thread it belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadMention {
    pub thread_id: String,
    pub mention: AnnotatedMention,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchEntry {
    pub case: ComparisonCase,
    pub m1: Option<AnnotatedMention>,
    pub m2: Option<AnnotatedMention>,
}

pub fn collapse_type(t: ResourceTypeFine) -> ResourceType {
    t.collapse()
}

/// `2·AG / (g1_total + g2_total)`.
pub fn positive_specific_agreement(c: &AgreementCounts) -> Result<f64> {
    let denom = c.g1_total() + c.g2_total();
    if denom == 0 {
        return Err(Error::EmptyAgreement);
    }
    Ok(2.0 * c.ag as f64 / denom as f64)
}

/// Smallest span covering two overlapping spans.
pub fn merge_span_union(a: Span, b: Span) -> Result<Span> {
    if !a.overlaps(&b) {
        return Err(Error::DisjointSpans {
            first: (a.start, a.end),
            second: (b.start, b.end),
        });
    }
    Ok(Span::new(a.sentence_index, a.start.min(b.start), a.end.max(b.end)))
}

/// Greedy one-to-one matching of overlapping mentions, largest overlap first;
/// ties go to the pair with the earlier start. Types are compared after
/// collapsing.
pub fn match_mentions(g1: &[AnnotatedMention], g2: &[AnnotatedMention]) -> Vec<MatchEntry> {
    let pairs = greedy_overlap_pairs(
        &g1.iter().map(|m| m.span).collect::<Vec<_>>(),
        &g2.iter().map(|m| m.span).collect::<Vec<_>>(),
    );
    let mut used1 = vec![false; g1.len()];
    let mut used2 = vec![false; g2.len()];
    let mut out = Vec::with_capacity(g1.len() + g2.len());
    for (i, j) in pairs {
        used1[i] = true;
        used2[j] = true;
        let case = if g1[i].rtype.coarse() == g2[j].rtype.coarse() {
            ComparisonCase::AG
        } else {
            ComparisonCase::TD
        };
        out.push(MatchEntry {
            case,
            m1: Some(g1[i].clone()),
            m2: Some(g2[j].clone()),
        });
    }
    for m in g1.iter().zip(&used1).filter(|(_, u)| !**u).map(|(m, _)| m) {
        out.push(MatchEntry {
            case: ComparisonCase::G1Only,
            m1: Some(m.clone()),
            m2: None,
        });
    }
    for m in g2.iter().zip(&used2).filter(|(_, u)| !**u).map(|(m, _)| m) {
        out.push(MatchEntry {
            case: ComparisonCase::G2Only,
            m1: None,
            m2: Some(m.clone()),
        });
    }
    out
}

/// Indices of greedily matched overlapping span pairs, in acceptance order.
pub(crate) fn greedy_overlap_pairs(a: &[Span], b: &[Span]) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, sa) in a.iter().enumerate() {
        for (j, sb) in b.iter().enumerate() {
            let ov = sa.overlap(sb);
            if ov > 0 {
                candidates.push((ov, sa.sentence_index, sa.start.min(sb.start), sa.start, sb.start, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.0.cmp(&x.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
            .then(x.4.cmp(&y.4))
            .then(x.5.cmp(&y.5))
            .then(x.6.cmp(&y.6))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (.., i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Matches two groups' mentions of a single thread.
pub fn match_annotations(g1: &[ThreadMention], g2: &[ThreadMention]) -> Result<Vec<MatchEntry>> {
    let mut thread: Option<&str> = None;
    for tm in g1.iter().chain(g2) {
        match thread {
            None => thread = Some(&tm.thread_id),
            Some(t) if t != tm.thread_id => return Err(Error::CrossThread(t.to_string(), tm.thread_id.clone())),
            _ => {}
        }
    }
    let m1: Vec<AnnotatedMention> = g1.iter().map(|t| t.mention.clone()).collect();
    let m2: Vec<AnnotatedMention> = g2.iter().map(|t| t.mention.clone()).collect();
    Ok(match_mentions(&m1, &m2))
}

/// Agreement over any number of threads, matching mentions thread by thread.
pub fn agreement_table(g1: &[ThreadMention], g2: &[ThreadMention]) -> AgreementTable {
    let by1 = group_by_thread(g1);
    let by2 = group_by_thread(g2);
    let threads: std::collections::BTreeSet<&str> = by1.keys().chain(by2.keys()).copied().collect();
    let mut table = AgreementTable::default();
    for t in threads {
        let m1 = by1.get(t).map_or(&[][..], Vec::as_slice);
        let m2 = by2.get(t).map_or(&[][..], Vec::as_slice);
        table.record(&match_mentions(m1, m2));
    }
    table
}

/// Overall counts plus one row per coarse type.
///
/// In per-type rows a type-disagreeing pair cannot be attributed to a single
/// type, so each side is counted in its own type's "only" column; the overall
/// row keeps it as `td`. Group totals and agreement counts are exact in both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub per_type: BTreeMap<ResourceType, AgreementCounts>,
    pub total: AgreementCounts,
}

impl AgreementTable {
    pub fn record(&mut self, entries: &[MatchEntry]) {
        for e in entries {
            let t1 = e.m1.as_ref().map(|m| m.rtype.coarse());
            let t2 = e.m2.as_ref().map(|m| m.rtype.coarse());
            match e.case {
                ComparisonCase::AG => {
                    self.total.ag += 1;
                    self.per_type.entry(t1.unwrap()).or_default().ag += 1;
                }
                ComparisonCase::TD => {
                    self.total.td += 1;
                    self.per_type.entry(t1.unwrap()).or_default().g1_only += 1;
                    self.per_type.entry(t2.unwrap()).or_default().g2_only += 1;
                }
                ComparisonCase::G1Only => {
                    self.total.g1_only += 1;
                    self.per_type.entry(t1.unwrap()).or_default().g1_only += 1;
                }
                ComparisonCase::G2Only => {
                    self.total.g2_only += 1;
                    self.per_type.entry(t2.unwrap()).or_default().g2_only += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &AgreementTable) {
        self.total.add(&other.total);
        for (t, c) in &other.per_type {
            self.per_type.entry(*t).or_default().add(c);
        }
    }

    pub fn report(&self) -> AgreementReport {
        let row = |c: &AgreementCounts| AgreementRow {
            counts: *c,
            g1_total: c.g1_total(),
            g2_total: c.g2_total(),
            union: c.union(),
            p_pos: positive_specific_agreement(c).ok(),
        };
        AgreementReport {
            per_type: ResourceType::ALL
                .iter()
                .map(|t| (t.name().to_string(), row(&self.per_type.get(t).copied().unwrap_or_default())))
                .collect(),
            total: row(&self.total),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    #[serde(flatten)]
    pub counts: AgreementCounts,
    pub g1_total: u64,
    pub g2_total: u64,
    pub union: u64,
    /// `None` when neither group annotated anything of this type.
    pub p_pos: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_type: BTreeMap<String, AgreementRow>,
    pub total: AgreementRow,
}

/// Output of [`build_dataset`].
#[derive(Clone, Debug)]
pub struct BuiltDataset {
    pub corpus: TaggedCorpus,
    pub agreement: AgreementTable,
    /// Mentions that ended up in the corpus, with their thread.
    pub mentions: Vec<ThreadMention>,
    pub warnings: Vec<String>,
}

impl BuiltDataset {
    pub fn mention_count(&self) -> usize {
        self.mentions.len()
    }
}

fn group_by_thread(mentions: &[ThreadMention]) -> HashMap<&str, Vec<AnnotatedMention>> {
    let mut map: HashMap<&str, Vec<AnnotatedMention>> = HashMap::new();
    for tm in mentions {
        map.entry(tm.thread_id.as_str()).or_default().push(tm.mention.clone());
    }
    map
}

/// Reconciles two groups and builds a tagging corpus under `policy`. Only
/// sentences with at least one mention become examples.
pub fn build_dataset(
    threads: &[Thread],
    g1: &[ThreadMention],
    g2: &[ThreadMention],
    policy: MergePolicy,
) -> Result<BuiltDataset> {
    let by1 = group_by_thread(g1);
    let by2 = group_by_thread(g2);
    let known: std::collections::HashSet<&str> = threads.iter().map(|t| t.thread_id.as_str()).collect();
    for id in by1.keys().chain(by2.keys()) {
        if !known.contains(id) {
            return Err(Error::Invalid(format!("annotation refers to unknown thread '{id}'")));
        }
    }

    let mut agreement = AgreementTable::default();
    let mut sentences_out = Vec::new();
    let mut mentions_out = Vec::new();
    let mut warnings = Vec::new();
    let empty = Vec::new();

    for thread in threads {
        let sentences = unfold_thread(thread);
        let m1 = by1.get(thread.thread_id.as_str()).unwrap_or(&empty);
        let m2 = by2.get(thread.thread_id.as_str()).unwrap_or(&empty);
        for m in m1.iter().chain(m2) {
            let s = m.span;
            let len = sentences.get(s.sentence_index).map(|s| s.len()).ok_or_else(|| {
                Error::Invalid(format!(
                    "thread '{}': sentence {} does not exist ({} sentences)",
                    thread.thread_id,
                    s.sentence_index,
                    sentences.len()
                ))
            })?;
            if s.start >= s.end || s.end > len {
                return Err(Error::SpanOutOfRange {
                    start: s.start,
                    end: s.end,
                    len,
                });
            }
        }

        let entries = match_mentions(m1, m2);
        agreement.record(&entries);

        let mut merged: Vec<AnnotatedMention> = Vec::new();
        for e in &entries {
            match (e.case, policy) {
                (ComparisonCase::AG, _) => {
                    let (a, b) = (e.m1.as_ref().unwrap(), e.m2.as_ref().unwrap());
                    let span = merge_span_union(a.span, b.span)?;
                    merged.push(AnnotatedMention::new(span, a.rtype.coarse(), Group::Agreed));
                }
                (ComparisonCase::TD, MergePolicy::UnionL) => {
                    let (a, b) = (e.m1.as_ref().unwrap(), e.m2.as_ref().unwrap());
                    let span = merge_span_union(a.span, b.span)?;
                    merged.push(AnnotatedMention::new(span, a.rtype.coarse(), Group::TypeDisagreement));
                }
                (ComparisonCase::G1Only, MergePolicy::UnionL) => {
                    let a = e.m1.as_ref().unwrap();
                    merged.push(AnnotatedMention::new(a.span, a.rtype.coarse(), Group::Group1));
                }
                (ComparisonCase::G2Only, MergePolicy::UnionL) => {
                    let b = e.m2.as_ref().unwrap();
                    merged.push(AnnotatedMention::new(b.span, b.rtype.coarse(), Group::Group2));
                }
                _ => {}
            }
        }
        merged.sort_by_key(|m| (m.span.sentence_index, m.span.start, m.span.end));

        let mut kept: Vec<AnnotatedMention> = Vec::new();
        for m in merged {
            if let Some(prev) = kept.last() {
                if prev.span.overlaps(&m.span) {
                    warnings.push(format!(
                        "thread '{}' sentence {}: dropped [{}, {}) overlapping [{}, {})",
                        thread.thread_id,
                        m.span.sentence_index,
                        m.span.start,
                        m.span.end,
                        prev.span.start,
                        prev.span.end
                    ));
                    continue;
                }
            }
            kept.push(m);
        }

        let mut i = 0;
        while i < kept.len() {
            let si = kept[i].span.sentence_index;
            let j = kept[i..].iter().position(|m| m.span.sentence_index != si).map_or(kept.len(), |p| i + p);
            let sentence = sentences[si].clone();
            let tags = bio_encode(sentence.len(), &kept[i..j])?;
            sentences_out.push(TaggedSentence {
                thread_id: thread.thread_id.clone(),
                sentence,
                tags,
            });
            i = j;
        }
        mentions_out.extend(kept.into_iter().map(|mention| ThreadMention {
            thread_id: thread.thread_id.clone(),
            mention,
        }));
    }

    Ok(BuiltDataset {
        corpus: TaggedCorpus::new(sentences_out),
        agreement,
        mentions: mentions_out,
        warnings,
    })
}

/// Reads a standoff annotation file: `thread_id<TAB>sent<TAB>start<TAB>end<TAB>fine_type`.
pub fn read_standoff(path: impl AsRef<Path>, group: Group) -> Result<Vec<ThreadMention>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_standoff_from(BufReader::new(file), path, group)
}

pub fn read_standoff_from(reader: impl BufRead, path: impl AsRef<Path>, group: Group) -> Result<Vec<ThreadMention>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                path,
                n,
                format!("expected 5 tab-separated columns (thread, sent, start, end, type), got {}", cols.len()),
            ));
        }
        let num = |v: &str, what: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(path, n, format!("{what} is not a non-negative integer: '{v}'")))
        };
        let sent = num(cols[1], "sentence index")?;
        let start = num(cols[2], "start")?;
        let end = num(cols[3], "end")?;
        if start >= end {
            return Err(Error::parse(path, n, format!("empty span [{start}, {end})")));
        }
        let fine: ResourceTypeFine = cols[4]
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(path, n, e.to_string()))?;
        out.push(ThreadMention {
            thread_id: cols[0].to_string(),
            mention: AnnotatedMention::new(Span::new(sent, start, end), MentionType::Fine(fine), group),
        });
    }
    Ok(out)
}

pub fn write_standoff(path: impl AsRef<Path>, mentions: &[ThreadMention]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for tm in mentions {
        let ty = match tm.mention.rtype {
            MentionType::Fine(t) => t.name(),
            MentionType::Coarse(t) => t.name(),
        };
        let s = tm.mention.span;
        writeln!(w, "{}\t{}\t{}\t{}\t{}", tm.thread_id, s.sentence_index, s.start, s.end, ty)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
