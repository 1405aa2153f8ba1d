use super::{AnnotatedMention, Group, MentionType, Span, Tag};
use crate::error::{Error, Result};

/// Raised when decoding repairs an `I` tag that does not continue a mention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeWarning {
    pub position: usize,
    pub tag: Tag,
}

/// Encodes mentions of one sentence as a BIO tag sequence of length `len`.
pub fn bio_encode(len: usize, mentions: &[AnnotatedMention]) -> Result<Vec<Tag>> {
    let mut sorted: Vec<&AnnotatedMention> = mentions.iter().collect();
    sorted.sort_by_key(|m| (m.span.start, m.span.end));
    for m in &sorted {
        let Span { start, end, .. } = m.span;
        if start >= end || end > len {
            return Err(Error::SpanOutOfRange { start, end, len });
        }
    }
    for w in sorted.windows(2) {
        if w[0].span.end > w[1].span.start {
            return Err(Error::OverlappingSpans {
                first: (w[0].span.start, w[0].span.end),
                second: (w[1].span.start, w[1].span.end),
            });
        }
    }
    let mut tags = vec![Tag::O; len];
    for m in sorted {
        let ty = m.rtype.coarse();
        tags[m.span.start] = Tag::B(ty);
        for t in &mut tags[m.span.start + 1..m.span.end] {
            *t = Tag::I(ty);
        }
    }
    Ok(tags)
}

/// Recovers mentions from a tag sequence. Maximal `B I*` runs of one type
/// become mentions; an `I` that does not continue a run of its own type opens
/// a new mention and records a warning.
pub fn bio_decode(tags: &[Tag], sentence_index: usize) -> (Vec<AnnotatedMention>, Vec<DecodeWarning>) {
    let mut mentions = Vec::new();
    let mut warnings = Vec::new();
    let mut open: Option<(usize, super::ResourceType)> = None;

    let close = |open: &mut Option<(usize, super::ResourceType)>, end: usize, out: &mut Vec<AnnotatedMention>| {
        if let Some((start, ty)) = open.take() {
            out.push(AnnotatedMention {
                span: Span::new(sentence_index, start, end),
                rtype: MentionType::Coarse(ty),
                group: Group::Decoded,
            });
        }
    };

    for (pos, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => close(&mut open, pos, &mut mentions),
            Tag::B(ty) => {
                close(&mut open, pos, &mut mentions);
                open = Some((pos, ty));
            }
            Tag::I(ty) => match open {
                Some((_, cur)) if cur == ty => {}
                _ => {
                    close(&mut open, pos, &mut mentions);
                    warnings.push(DecodeWarning { position: pos, tag });
                    open = Some((pos, ty));
                }
            },
        }
    }
    close(&mut open, tags.len(), &mut mentions);
    (mentions, warnings)
}
