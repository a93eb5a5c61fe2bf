//! Measure of Textual Lexical Diversity, bidirectional.

use super::dictionary::normalize_token;

/// Tokens for diversity: lowercased, ASCII punctuation stripped, empties dropped.
pub fn diversity_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(normalize_token).filter(|t| !t.is_empty()).collect()
}

/// Number of factors in one pass. A factor closes when the running TTR
/// falls to the threshold or below; the trailing segment counts
/// `(1 - ttr) / (1 - threshold)`.
fn factors<'a>(tokens: impl Iterator<Item = &'a String>, threshold: f64) -> f64 {
    let mut seen = std::collections::HashSet::new();
    let mut len = 0usize;
    let mut count = 0.0;
    let mut ttr = 1.0;
    for tok in tokens {
        len += 1;
        seen.insert(tok.as_str());
        ttr = seen.len() as f64 / len as f64;
        if ttr <= threshold {
            count += 1.0;
            len = 0;
            seen.clear();
        }
    }
    if len > 0 {
        count += (1.0 - ttr) / (1.0 - threshold);
    }
    count
}

/// Mean of the forward and backward MTLD passes; `None` when either pass has
/// no factor at all (empty text, or every token distinct).
pub fn mtld_tokens(tokens: &[String], threshold: f64) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let fwd = factors(tokens.iter(), threshold);
    let bwd = factors(tokens.iter().rev(), threshold);
    if fwd <= 0.0 || bwd <= 0.0 {
        return None;
    }
    let n = tokens.len() as f64;
    Some(0.5 * (n / fwd + n / bwd))
}

pub fn mtld(text: &str, threshold: f64) -> Option<f64> {
    mtld_tokens(&diversity_tokens(text), threshold)
}
