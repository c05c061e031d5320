//! Tokenization and matching helpers shared by corpus statistics and the
//! quality gates.

/// Whitespace-delimited token count of the trimmed text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercases, replaces every non-alphanumeric, non-whitespace character with
/// a space, and collapses whitespace runs to single spaces.
pub fn normalize_for_match(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn match_tokens(text: &str) -> Vec<String> {
    normalize_for_match(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Light suffix stripping so that "poses"/"pose" and "resting"/"rest" match.
/// Only applied to tokens longer than four characters.
pub fn stem(token: &str) -> &str {
    if token.chars().count() <= 4 {
        return token;
    }
    for suffix in ["ing", "ed", "s"] {
        if let Some(base) = token.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base;
            }
        }
    }
    token
}

/// True when `needle` occurs as a contiguous token run inside `haystack`.
pub fn contains_run<S: AsRef<str>>(haystack: &[S], needle: &[S]) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref()))
}

/// Length of the longest common subsequence of two token lists.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Splits prose into sentences on `.`, `!` or `?` followed by whitespace or
/// end of text. Empty fragments are dropped.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn jaccard<S: AsRef<str> + Ord>(a: &[S], b: &[S]) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let sb: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "in", "on", "at", "to", "for", "with", "by",
    "from", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this", "that",
    "these", "those", "as", "into", "onto", "up", "down", "out", "over", "he", "she", "they",
    "them", "his", "her", "their", "there", "which", "who", "while", "has", "have", "had", "so",
    "then", "than", "also", "very", "just", "not", "no", "do", "does", "did",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}
