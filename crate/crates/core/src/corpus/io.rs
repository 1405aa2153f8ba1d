//! Thread JSON-lines files and the tagged column format.
//!
//! Column format: each sentence is preceded by a header line
//! `# thread=<id> post=<k> sent=<n>` and followed by a blank line; every token
//! line is `token<TAB>tag`. The writer appends `offsets=s:e,...` to the
//! header so character offsets survive a roundtrip; readers fall back to
//! single-space offsets when it is absent.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Sentence, Tag, TaggedCorpus, TaggedSentence, Thread, Token};
use crate::error::{Error, Result};

pub fn read_threads(path: impl AsRef<Path>) -> Result<Vec<Thread>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_threads_from(BufReader::new(file), path)
}

pub fn read_threads_from(reader: impl BufRead, path: impl AsRef<Path>) -> Result<Vec<Thread>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.as_ref(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let thread: Thread =
            serde_json::from_str(&line).map_err(|e| Error::parse(path.as_ref(), n + 1, e.to_string()))?;
        if thread.posts.is_empty() {
            return Err(Error::parse(path.as_ref(), n + 1, "thread has no posts (title missing)"));
        }
        out.push(thread);
    }
    Ok(out)
}

pub fn write_threads(path: impl AsRef<Path>, threads: &[Thread]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in threads {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tagged_corpus(path: impl AsRef<Path>, corpus: &TaggedCorpus) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tagged_corpus_to(&mut w, corpus).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tagged_corpus_to(w: &mut impl Write, corpus: &TaggedCorpus) -> std::io::Result<()> {
    for ts in &corpus.sentences {
        let offsets: Vec<String> = ts
            .sentence
            .tokens
            .iter()
            .map(|t| format!("{}:{}", t.char_start, t.char_end))
            .collect();
        writeln!(
            w,
            "# thread={} post={} sent={} offsets={}",
            ts.thread_id,
            ts.sentence.post_index,
            ts.sentence.sentence_index,
            offsets.join(",")
        )?;
        for (tok, tag) in ts.sentence.tokens.iter().zip(&ts.tags) {
            writeln!(w, "{}\t{}", tok.text, tag)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_tagged_corpus(path: impl AsRef<Path>) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tagged_corpus_from(BufReader::new(file), path)
}

struct Header {
    thread_id: String,
    post_index: usize,
    sentence_index: usize,
    offsets: Option<Vec<(usize, usize)>>,
    line: usize,
}

fn parse_header(line: &str, n: usize, path: &Path) -> Result<Header> {
    let mut thread_id = None;
    let mut post_index = None;
    let mut sentence_index = None;
    let mut offsets = None;
    for field in line.trim_start_matches('#').split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(path, n, format!("malformed header field '{field}'")))?;
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::parse(path, n, format!("'{key}' is not a non-negative integer: '{v}'")))
        };
        match key {
            "thread" => thread_id = Some(value.to_string()),
            "post" => post_index = Some(num(value)?),
            "sent" => sentence_index = Some(num(value)?),
            "offsets" => {
                let mut v = Vec::new();
                for pair in value.split(',').filter(|p| !p.is_empty()) {
                    let (s, e) = pair
                        .split_once(':')
                        .ok_or_else(|| Error::parse(path, n, format!("malformed offset '{pair}'")))?;
                    v.push((num(s)?, num(e)?));
                }
                offsets = Some(v);
            }
            _ => {}
        }
    }
    let missing = |k: &str| Error::parse(path, n, format!("sentence header lacks '{k}='"));
    Ok(Header {
        thread_id: thread_id.ok_or_else(|| missing("thread"))?,
        post_index: post_index.ok_or_else(|| missing("post"))?,
        sentence_index: sentence_index.ok_or_else(|| missing("sent"))?,
        offsets,
        line: n,
    })
}

fn finish_sentence(
    header: Header,
    rows: Vec<(String, Tag)>,
    path: &Path,
    out: &mut Vec<TaggedSentence>,
) -> Result<()> {
    let name = format!("thread={} sent={}", header.thread_id, header.sentence_index);
    if rows.is_empty() {
        return Err(Error::parse(path, header.line, format!("sentence {name} has no tokens")));
    }
    let words: Vec<&str> = rows.iter().map(|(w, _)| w.as_str()).collect();
    let mut sentence = Sentence::from_words(&words, header.post_index, header.sentence_index);
    if let Some(offsets) = header.offsets {
        if offsets.len() != rows.len() {
            return Err(Error::parse(
                path,
                header.line,
                format!("sentence {name}: {} offsets for {} tokens", offsets.len(), rows.len()),
            ));
        }
        sentence.tokens = rows
            .iter()
            .zip(offsets)
            .map(|((w, _), (s, e))| Token::new(w.clone(), s, e))
            .collect();
    }
    out.push(TaggedSentence {
        thread_id: header.thread_id,
        sentence,
        tags: rows.into_iter().map(|(_, t)| t).collect(),
    });
    Ok(())
}

pub fn read_tagged_corpus_from(reader: impl BufRead, path: impl AsRef<Path>) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut header: Option<Header> = None;
    let mut rows: Vec<(String, Tag)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with("# ") || line == "#" {
            if let Some(h) = header.take() {
                finish_sentence(h, std::mem::take(&mut rows), path, &mut out)?;
            }
            header = Some(parse_header(&line, n, path)?);
        } else if line.trim().is_empty() {
            if let Some(h) = header.take() {
                finish_sentence(h, std::mem::take(&mut rows), path, &mut out)?;
            }
        } else {
            let h = header
                .as_ref()
                .ok_or_else(|| Error::parse(path, n, "token line outside a sentence (missing '# thread=' header)"))?;
            let (word, tag) = line.split_once('\t').ok_or_else(|| {
                Error::parse(
                    path,
                    n,
                    format!(
                        "sentence thread={} sent={}: expected 'token<TAB>tag', tag count does not match token count",
                        h.thread_id, h.sentence_index
                    ),
                )
            })?;
            if word.is_empty() {
                return Err(Error::parse(path, n, "empty token"));
            }
            let tag: Tag = tag.trim().parse().map_err(|e: Error| Error::parse(path, n, e.to_string()))?;
            rows.push((word.to_string(), tag));
        }
    }
    if let Some(h) = header.take() {
        finish_sentence(h, rows, path, &mut out)?;
    }
    Ok(TaggedCorpus::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, ResourceType};

    fn sample() -> TaggedCorpus {
        let mut sentences = Vec::new();
        for t in 0..3 {
            for s in 0..2 {
                let tokens = tokenize("I watched  video 3 , then quiz.pdf !");
                let n = tokens.len();
                let mut tags = vec![Tag::O; n];
                tags[2] = Tag::B(ResourceType::Videos);
                tags[3] = Tag::I(ResourceType::Videos);
                sentences.push(TaggedSentence {
                    thread_id: format!("th{t}"),
                    sentence: Sentence {
                        tokens,
                        post_index: s,
                        sentence_index: s * 2,
                    },
                    tags,
                });
            }
        }
        TaggedCorpus::new(sentences)
    }

    #[test]
    fn column_roundtrip() {
        let corpus = sample();
        let mut buf = Vec::new();
        write_tagged_corpus_to(&mut buf, &corpus).unwrap();
        let back = read_tagged_corpus_from(&buf[..], "mem").unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.context(1, 5).len(), 1);
    }

    #[test]
    fn file_roundtrip_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conll");
        write_tagged_corpus(&p, &sample()).unwrap();
        assert_eq!(read_tagged_corpus(&p).unwrap(), sample());

        std::fs::write(&p, "").unwrap();
        assert!(read_tagged_corpus(&p).unwrap().is_empty());
        assert!(read_threads(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_tag_names_sentence() {
        let text = "# thread=abc post=0 sent=4\nhello\tO\nworld\n\n";
        let err = read_tagged_corpus_from(text.as_bytes(), "x.conll").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.conll:3"), "{msg}");
        assert!(msg.contains("thread=abc sent=4"), "{msg}");
    }

    #[test]
    fn bad_tag_and_header() {
        let err = read_tagged_corpus_from("# thread=a post=0 sent=0\nw\tBogus\n".as_bytes(), "f").unwrap_err();
        assert!(err.to_string().starts_with("f:2"));
        let err = read_tagged_corpus_from("# thread=a post=x sent=0\n".as_bytes(), "f").unwrap_err();
        assert!(err.to_string().starts_with("f:1"));
        let err = read_tagged_corpus_from("w\tO\n".as_bytes(), "f").unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn thread_jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let threads: Vec<Thread> = (0..3)
            .map(|i| Thread {
                thread_id: format!("t{i}"),
                course_id: "ml-101".into(),
                posts: vec![vec!["Title".into()], vec!["A.".into(), "B c.".into()]],
            })
            .collect();
        write_threads(&p, &threads).unwrap();
        assert_eq!(read_threads(&p).unwrap(), threads);

        std::fs::write(&p, "{\"thread_id\": \"x\", \"posts\": [[\"t\"]]}\n{oops\n").unwrap();
        let err = read_threads(&p).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
