//! WebAssembly bindings behind `www/index.html`. Every export takes and
//! returns plain strings; results are JSON, errors are one-line messages.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use forumtag::agreement::{positive_specific_agreement, AgreementCounts};
use forumtag::corpus::{bio_decode, split_sentences, tokenize, ResourceType, Tag};
use forumtag::crf::{
    bio_transition_mask, brute_force_oracle, log_partition, marginals, viterbi_decode, EmissionScores,
    TransitionMatrix,
};

type Result<T> = std::result::Result<T, String>;

/// Largest path count cross-checked by enumeration.
const ENUMERATION_LIMIT: u128 = 20_000;

fn numbers(line: &str, what: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{what}: '{s}' is not a number")))
        .collect()
}

fn rows(text: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| numbers(l, &format!("{what} row {}", i + 1)))
        .collect()
}

/// Agreement table from lines of `type group1 group2 intersection`.
#[wasm_bindgen]
pub fn agreement_table(text: &str) -> Result<String> {
    let mut out = Vec::new();
    let mut total = (0, 0, 0);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [name, g1, g2, inter] = parts[..] else {
            return Err(format!("line {}: expected 'type group1 group2 intersection'", i + 1));
        };
        let parse = |s: &str| s.parse::<u64>().map_err(|_| format!("line {}: '{s}' is not a count", i + 1));
        let (g1, g2, inter) = (parse(g1)?, parse(g2)?, parse(inter)?);
        out.push(row(name, g1, g2, inter)?);
        total = (total.0 + g1, total.1 + g2, total.2 + inter);
    }
    if out.is_empty() {
        return Err("enter at least one row".into());
    }
    out.push(row("Total", total.0, total.1, total.2)?);
    Ok(Value::from(out).to_string())
}

fn row(name: &str, g1: u64, g2: u64, inter: u64) -> Result<Value> {
    let c = AgreementCounts::from_totals(g1, g2, inter).map_err(|e| e.to_string())?;
    let p = positive_specific_agreement(&c).map_err(|e| e.to_string())?;
    Ok(json!({ "type": name, "group1": g1, "group2": g2, "intersection": inter, "union": c.union(), "p_pos": p }))
}

/// Viterbi path, log-partition and marginals for an emission matrix (one row
/// per position) and an optional `(K+2)×(K+2)` transition matrix whose last
/// two rows/columns are START and STOP. With `bio` the nine BIO tags are used
/// and invalid transitions are forbidden.
#[wasm_bindgen]
pub fn crf_explore(emissions: &str, transitions: &str, bio: bool) -> Result<String> {
    let e_rows = rows(emissions, "emissions")?;
    let Some(k) = e_rows.first().map(Vec::len) else {
        return Err("enter at least one emission row".into());
    };
    if k == 0 || e_rows.iter().any(|r| r.len() != k) {
        return Err(format!("every emission row needs the same number of scores ({k})"));
    }
    if bio && k != Tag::COUNT {
        return Err(format!("BIO constraints need {} columns, one per tag", Tag::COUNT));
    }
    let n = e_rows.len();
    let e = EmissionScores::new(n, k, e_rows.concat()).map_err(|e| e.to_string())?;
    let t_rows = rows(transitions, "transitions")?;
    let mut a = if t_rows.is_empty() {
        TransitionMatrix::zeros(k)
    } else {
        TransitionMatrix::from_values(k, t_rows.concat()).map_err(|e| format!("transitions: {e}"))?
    };
    if bio {
        a = a.with_allowed(bio_transition_mask()).map_err(|e| e.to_string())?;
    }
    let (path, score) = viterbi_decode(&e, &a).map_err(|e| e.to_string())?;
    let log_z = log_partition(&e, &a).map_err(|e| e.to_string())?;
    let probs = marginals(&e, &a).map_err(|e| e.to_string())?;
    let labels: Vec<String> = (0..k)
        .map(|j| if bio { Tag::ALL[j].to_string() } else { format!("tag {j}") })
        .collect();
    let enumerable = (k as u128).checked_pow(n as u32).is_some_and(|c| c <= ENUMERATION_LIMIT);
    let oracle = if enumerable {
        let b = brute_force_oracle(&e, &a).map_err(|e| e.to_string())?;
        json!({ "log_partition": b.log_partition, "best": b.best, "best_score": b.best_score })
    } else {
        Value::Null
    };
    Ok(json!({
        "labels": labels,
        "path": path,
        "path_labels": path.iter().map(|&j| labels[j].clone()).collect::<Vec<_>>(),
        "score": score,
        "probability": (score - log_z).exp(),
        "log_partition": log_z,
        "marginals": probs.chunks(k).collect::<Vec<_>>(),
        "oracle": oracle,
    })
    .to_string())
}

/// Sentences and tokens of `text`; with `tags` (one per token, whitespace
/// separated, `O` or `<Type>_B`/`<Type>_I`) also the decoded mentions.
#[wasm_bindgen]
pub fn tokenize_and_decode(text: &str, tags: &str) -> Result<String> {
    let sentences: Vec<Value> = split_sentences(text)
        .iter()
        .map(|s| Value::from(tokenize(s).into_iter().map(|t| t.text).collect::<Vec<_>>()))
        .collect();
    let tokens = tokenize(text);
    let mut out = json!({
        "sentences": sentences,
        "tokens": tokens.iter().map(|t| json!({ "text": t.text, "start": t.char_start, "end": t.char_end })).collect::<Vec<_>>(),
    });
    if tags.trim().is_empty() {
        return Ok(out.to_string());
    }
    let tags: Vec<Tag> = tags
        .split_whitespace()
        .map(|t| t.parse::<Tag>().map_err(|_| format!("'{t}' is not a tag; use O or e.g. Videos_B")))
        .collect::<Result<_>>()?;
    if tags.len() != tokens.len() {
        return Err(format!("{} tags for {} tokens", tags.len(), tokens.len()));
    }
    let (mentions, warnings) = bio_decode(&tags, 0);
    out["mentions"] = mentions
        .iter()
        .map(|m| {
            let words: Vec<&str> = tokens[m.span.start..m.span.end].iter().map(|t| t.text.as_str()).collect();
            json!({ "start": m.span.start, "end": m.span.end, "type": m.rtype.coarse().name(), "text": words.join(" ") })
        })
        .collect();
    out["repaired"] = warnings.iter().map(|w| json!({ "position": w.position, "tag": w.tag.to_string() })).collect();
    Ok(out.to_string())
}

/// Resource type names in tag order.
#[wasm_bindgen]
pub fn resource_types() -> String {
    Value::from(ResourceType::ALL.iter().map(|t| t.name()).collect::<Vec<_>>()).to_string()
}
