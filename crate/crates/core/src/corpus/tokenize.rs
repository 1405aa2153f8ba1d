use super::Token;

// Characters that stay inside a token when flanked by alphanumerics on both
// sides, so `dishdetail.html`, `week-2` and `don't` survive whole.
fn is_connector(c: char) -> bool {
    matches!(c, '.' | '/' | '-' | '\'' | ':')
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits one sentence into tokens. Whitespace separates tokens; punctuation
/// becomes its own token unless it sits inside a filename or URL-like word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_connector(chars[i]) && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                    i += 2;
                } else if chars[i] == ':'
                    && chars.get(i + 1) == Some(&'/')
                    && chars.get(i + 2) == Some(&'/')
                    && chars.get(i + 3).is_some_and(|c| is_word_char(*c))
                {
                    // scheme separator of a URL
                    i += 4;
                } else {
                    break;
                }
            }
            out.push(Token::new(chars[start..i].iter().collect::<String>(), start, i));
        } else {
            out.push(Token::new(c.to_string(), i, i + 1));
            i += 1;
        }
    }
    out
}

// "e.g." / "i.e." / "U.S.": single letters separated by dots.
fn is_dotted_abbreviation(word: &[char]) -> bool {
    word.len() >= 4
        && word.len() % 2 == 0
        && word
            .chunks(2)
            .all(|pair| pair[0].is_alphabetic() && pair[1] == '.')
}

/// Splits a post into sentences at terminal punctuation followed by
/// whitespace. Every returned sentence is a trimmed slice of the input.
pub fn split_sentences(post_text: &str) -> Vec<String> {
    let chars: Vec<char> = post_text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '!' | '?') {
                end += 1;
            }
            let at_break = end == chars.len() || chars[end].is_whitespace();
            if at_break {
                let mut word_start = i;
                while word_start > start && !chars[word_start - 1].is_whitespace() {
                    word_start -= 1;
                }
                if !is_dotted_abbreviation(&chars[word_start..end]) {
                    push_trimmed(&mut out, &chars[start..end]);
                    start = end;
                }
            }
            i = end;
        } else {
            i += 1;
        }
    }
    push_trimmed(&mut out, &chars[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
