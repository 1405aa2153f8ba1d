use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{categorize_prediction, oov_report, ErrorCategory, ErrorCounts, OovReport, Prf, TagConfusion, TagScore};
use crate::corpus::{bio_decode, write_tagged_corpus_to, Tag, TaggedCorpus};
use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the corpus in column format.
pub fn corpus_fingerprint(corpus: &TaggedCorpus) -> String {
    let mut buf = Vec::new();
    write_tagged_corpus_to(&mut buf, corpus).expect("writing to memory");
    sha256_hex(&buf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub corpus_fingerprint: String,
    pub sentences: usize,
    pub tokens: usize,
    pub micro: Prf,
    pub mention_level: Prf,
    pub per_tag: Vec<TagScore>,
    pub errors: ErrorCounts,
    pub oov: Option<OovReport>,
    /// Ill-formed predicted sequences repaired while decoding mentions.
    pub repaired_tags: usize,
}

/// Scores `pred` against `gold`. `config_json` is hashed into the report;
/// `is_oov` enables the OOV split.
pub fn evaluate(
    gold: &TaggedCorpus,
    pred: &[Vec<Tag>],
    config_json: &str,
    is_oov: Option<&dyn Fn(&str) -> bool>,
) -> Result<EvaluationReport> {
    let gold_tags: Vec<Vec<Tag>> = gold.sentences.iter().map(|s| s.tags.clone()).collect();
    let confusion = TagConfusion::from_sequences(&gold_tags, pred)?;
    let mut errors = ErrorCounts::new();
    let mut repaired = 0;
    let mut categorized = Vec::with_capacity(gold.len());
    for (g, p) in gold_tags.iter().zip(pred) {
        let (gm, _) = bio_decode(g, 0);
        let (pm, warnings) = bio_decode(p, 0);
        repaired += warnings.len();
        let pairs = categorize_prediction(&gm, &pm);
        errors.record(&pairs);
        categorized.push(pairs);
    }
    let oov = is_oov.map(|f| {
        oov_report(
            gold.sentences.iter().zip(&categorized).map(|(s, c)| (&s.sentence, &c[..])),
            f,
        )
    });
    Ok(EvaluationReport {
        config_hash: sha256_hex(config_json.as_bytes()),
        corpus_fingerprint: corpus_fingerprint(gold),
        sentences: gold.len(),
        tokens: gold.total_tokens(),
        micro: confusion.micro(),
        mention_level: errors.mention_prf(),
        per_tag: confusion.per_tag(),
        errors,
        oov,
        repaired_tags: repaired,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        writeln!(s, "config   {}", self.config_hash).unwrap();
        writeln!(s, "corpus   {}", self.corpus_fingerprint).unwrap();
        writeln!(s, "sentences {}  tokens {}", self.sentences, self.tokens).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "{:<16}{:>8}{:>8}{:>8}", "", "P", "R", "F1").unwrap();
        for (name, p) in [("micro (tags)", self.micro), ("mentions", self.mention_level)] {
            writeln!(s, "{:<16}{:>8}{:>8}{:>8}", name, pct(p.precision), pct(p.recall), pct(p.f1)).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "{:<16}{:>6}{:>6}{:>6}{:>8}", "tag", "TP", "FP", "FN", "F1").unwrap();
        for t in &self.per_tag {
            let f1 = if t.no_support { "n/a".to_string() } else { pct(t.prf.f1) };
            writeln!(s, "{:<16}{:>6}{:>6}{:>6}{:>8}", t.tag.to_string(), t.counts.tp, t.counts.fp, t.counts.fn_, f1)
                .unwrap();
        }
        writeln!(s).unwrap();
        write!(s, "{:<14}", "type").unwrap();
        for c in ErrorCategory::ALL {
            write!(s, "{:>24}", c.name()).unwrap();
        }
        writeln!(s).unwrap();
        let rows = self
            .errors
            .per_type
            .iter()
            .map(|(t, m)| (t.to_string(), m))
            .chain(std::iter::once(("total".to_string(), &self.errors.total)));
        for (name, m) in rows {
            write!(s, "{name:<14}").unwrap();
            for c in ErrorCategory::ALL {
                write!(s, "{:>24}", m.get(&c).copied().unwrap_or(0)).unwrap();
            }
            writeln!(s).unwrap();
        }
        if let Some(o) = &self.oov {
            writeln!(s).unwrap();
            writeln!(s, "{:<10}{:>9}{:>7}{:>9}", "mentions", "correct", "total", "ratio").unwrap();
            for (name, r) in [("all", o.all), ("oov", o.oov), ("non-oov", o.non_oov)] {
                writeln!(s, "{:<10}{:>9}{:>7}{:>9}", name, r.correct, r.total, pct(r.ratio)).unwrap();
            }
        }
        if self.repaired_tags > 0 {
            writeln!(s, "\nrepaired ill-formed predicted tags: {}", self.repaired_tags).unwrap();
        }
        s
    }
}
