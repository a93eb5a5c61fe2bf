//! Pluggable word-category dictionary: `[category]` sections with one pattern
//! per line (`stem*` matches any suffix) and a `[summaries]` section of
//! linear composites.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

const DEMO: &str = include_str!("../../assets/demo_dictionary.txt");

/// The seven dictionary-derived analysis cues.
pub const ANALYSIS_CUES: [&str; 7] = [
    "authenticity",
    "function_word_rate",
    "affect_density",
    "tone_score",
    "negation_rate",
    "analytic_style",
    "conversationality",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub constant: f64,
    pub terms: Vec<(f64, usize)>,
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueDictionary {
    categories: Vec<String>,
    patterns: Vec<Vec<String>>,
    exact: HashMap<String, Vec<usize>>,
    prefixes: Vec<(String, usize)>,
    summaries: Vec<Summary>,
}

/// Lowercases and strips ASCII punctuation from one whitespace token.
pub fn normalize_token(tok: &str) -> String {
    tok.chars().filter(|c| !c.is_ascii_punctuation()).flat_map(char::to_lowercase).collect()
}

impl CueDictionary {
    pub fn demo() -> Self {
        Self::parse(DEMO).expect("bundled dictionary parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut categories: Vec<String> = Vec::new();
        let mut patterns: Vec<Vec<String>> = Vec::new();
        let mut summary_lines: Vec<(usize, String)> = Vec::new();
        let mut in_summaries = false;
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Dictionary {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(Error::Dictionary { line: line_no, message: format!("bad section name `{name}`") });
                }
                if name == "summaries" {
                    in_summaries = true;
                    current = None;
                    continue;
                }
                in_summaries = false;
                if categories.iter().any(|c| c == name) {
                    return Err(Error::Dictionary { line: line_no, message: format!("duplicate category `{name}`") });
                }
                categories.push(name.to_string());
                patterns.push(Vec::new());
                current = Some(categories.len() - 1);
                continue;
            }
            if in_summaries {
                summary_lines.push((line_no, line.to_string()));
                continue;
            }
            let ci = current.ok_or_else(|| Error::Dictionary {
                line: line_no,
                message: "pattern outside any [category] section".into(),
            })?;
            let pat = line.to_lowercase();
            let stem = pat.strip_suffix('*').unwrap_or(&pat);
            if stem.is_empty() || stem.contains(|c: char| c.is_whitespace() || c == '*') {
                return Err(Error::Dictionary { line: line_no, message: format!("bad pattern `{line}`") });
            }
            patterns[ci].push(pat);
        }

        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes = Vec::new();
        for (ci, pats) in patterns.iter().enumerate() {
            for p in pats {
                match p.strip_suffix('*') {
                    Some(stem) => prefixes.push((stem.to_string(), ci)),
                    None => exact.entry(p.clone()).or_default().push(ci),
                }
            }
        }
        let mut summaries = Vec::new();
        for (line_no, line) in summary_lines {
            summaries.push(
                parse_summary(&line, &categories).map_err(|message| Error::Dictionary { line: line_no, message })?,
            );
        }
        let dict = CueDictionary { categories, patterns, exact, prefixes, summaries };
        let missing: Vec<&str> = ANALYSIS_CUES.iter().copied().filter(|c| !dict.has_cue(c)).collect();
        if !missing.is_empty() {
            return Err(Error::Dictionary {
                line: text.lines().count(),
                message: format!("analysis cues not defined: {}", missing.join(", ")),
            });
        }
        Ok(dict)
    }

    fn has_cue(&self, name: &str) -> bool {
        self.categories.iter().any(|c| c == name) || self.summaries.iter().any(|s| s.name == name)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Patterns of one category as written (wildcards included).
    pub fn patterns(&self, category: &str) -> Option<&[String]> {
        self.categories.iter().position(|c| c == category).map(|i| self.patterns[i].as_slice())
    }

    /// Literal words that match a category: exact patterns plus bare stems.
    pub fn words(&self, category: &str) -> Vec<String> {
        self.patterns(category)
            .map(|ps| ps.iter().map(|p| p.trim_end_matches('*').to_string()).collect())
            .unwrap_or_default()
    }

    /// True when the normalized token matches no category.
    pub fn is_unmatched(&self, token: &str) -> bool {
        let mut hit = false;
        self.for_each_match(token, |_| hit = true);
        !hit
    }

    fn for_each_match(&self, token: &str, mut f: impl FnMut(usize)) {
        let mut hits: Vec<usize> = self.exact.get(token).cloned().unwrap_or_default();
        hits.extend(self.prefixes.iter().filter(|(stem, _)| token.starts_with(stem.as_str())).map(|(_, ci)| *ci));
        hits.sort_unstable();
        hits.dedup();
        hits.into_iter().for_each(&mut f);
    }

    /// Categories matched by an already normalized token.
    pub fn matches(&self, token: &str) -> Vec<&str> {
        let mut out = Vec::new();
        self.for_each_match(token, |ci| out.push(self.categories[ci].as_str()));
        out
    }

    /// Per-category match rates (percent of whitespace tokens) plus summary
    /// cues. Empty text gives all zeros.
    pub fn score(&self, text: &str) -> UtteranceScore {
        let mut counts = vec![0usize; self.categories.len()];
        let mut wc = 0u32;
        for tok in text.split_whitespace() {
            wc += 1;
            let norm = normalize_token(tok);
            if norm.is_empty() {
                continue;
            }
            self.for_each_match(&norm, |ci| counts[ci] += 1);
        }
        let rates: Vec<f64> =
            counts.iter().map(|&c| if wc == 0 { 0.0 } else { 100.0 * c as f64 / wc as f64 }).collect();
        let mut values = BTreeMap::new();
        for (name, r) in self.categories.iter().zip(&rates) {
            values.insert(name.clone(), *r);
        }
        for s in &self.summaries {
            let v = if wc == 0 {
                0.0
            } else {
                let mut v = s.constant + s.terms.iter().map(|(k, ci)| k * rates[*ci]).sum::<f64>();
                if let Some((lo, hi)) = s.clamp {
                    v = v.clamp(lo, hi);
                }
                v
            };
            values.insert(s.name.clone(), v);
        }
        UtteranceScore { word_count: wc, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub word_count: u32,
    pub values: BTreeMap<String, f64>,
}

pub fn score_utterance(dict: &CueDictionary, text: &str) -> UtteranceScore {
    dict.score(text)
}

fn parse_summary(line: &str, categories: &[String]) -> std::result::Result<Summary, String> {
    let (def, clamp) = match line.split_once('|') {
        Some((d, c)) => (d, Some(c.trim())),
        None => (line, None),
    };
    let (name, expr) = def.split_once('=').ok_or("summary needs `name = expression`")?;
    let name = name.trim().to_string();
    if name.is_empty() {
        return Err("empty summary name".into());
    }
    let clamp = match clamp {
        None => None,
        Some(c) => {
            let parts: Vec<&str> = c.split_whitespace().collect();
            match parts.as_slice() {
                ["clamp", lo, hi] => Some((
                    lo.parse::<f64>().map_err(|e| format!("clamp bound: {e}"))?,
                    hi.parse::<f64>().map_err(|e| format!("clamp bound: {e}"))?,
                )),
                _ => return Err(format!("expected `clamp LO HI`, got `{c}`")),
            }
        }
    };
    let mut constant = 0.0;
    let mut terms = Vec::new();
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty expression".into());
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in compact.char_indices() {
        if (c == '+' || c == '-') && i > start {
            pieces.push(&compact[start..i]);
            start = i;
        }
    }
    pieces.push(&compact[start..]);
    for piece in pieces {
        let (sign, body) = match piece.as_bytes()[0] {
            b'-' => (-1.0, &piece[1..]),
            b'+' => (1.0, &piece[1..]),
            _ => (1.0, piece),
        };
        let (coef, ident) = match body.split_once('*') {
            Some((k, n)) => (k.parse::<f64>().map_err(|e| format!("coefficient `{k}`: {e}"))?, Some(n)),
            None => match body.parse::<f64>() {
                Ok(v) => (v, None),
                Err(_) => (1.0, Some(body)),
            },
        };
        match ident {
            None => constant += sign * coef,
            Some(n) => {
                let ci = categories
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| format!("unknown category `{n}` in summary"))?;
                terms.push((sign * coef, ci));
            }
        }
    }
    Ok(Summary { name, constant, terms, clamp })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "[negate]\nno\nnot\nnever*\n[rep]\nrepeat*\n[summaries]\nauthenticity = rep\nfunction_word_rate = rep\naffect_density = rep\ntone_score = 50 + 10*negate | clamp 0 100\nnegation_rate = negate\nanalytic_style = rep\nconversationality = rep\n";

    #[test]
    fn full_negation_match_is_100() {
        let d = CueDictionary::parse(TINY).unwrap();
        let s = d.score("no not never");
        assert_eq!(s.word_count, 3);
        assert_eq!(s.values["negation_rate"], 100.0);
        assert_eq!(s.values["tone_score"], 100.0);
    }

    #[test]
    fn zero_matches_and_empty_text() {
        let d = CueDictionary::parse(TINY).unwrap();
        assert_eq!(d.score("the cat sat").values["negation_rate"], 0.0);
        let e = d.score("   ");
        assert_eq!(e.word_count, 0);
        assert!(e.values.values().all(|&v| v == 0.0));
    }

    #[test]
    fn wildcard_matches_suffixes() {
        let d = CueDictionary::parse(TINY).unwrap();
        assert_eq!(d.score("repeating").values["rep"], 100.0);
        assert_eq!(d.score("Never!").values["negate"], 100.0);
        assert_eq!(d.score("repeat it").values["rep"], 50.0);
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = CueDictionary::parse("[negate\nno\n").unwrap_err();
        assert!(matches!(err, Error::Dictionary { line: 1, .. }));
        let err = CueDictionary::parse("# c\nno\n").unwrap_err();
        assert!(matches!(err, Error::Dictionary { line: 2, .. }));
        let err = CueDictionary::parse("[a]\nx\n[summaries]\ntone_score = 2*b\n").unwrap_err();
        assert!(matches!(err, Error::Dictionary { line: 4, .. }));
    }

    #[test]
    fn missing_analysis_cue_is_rejected() {
        assert!(CueDictionary::parse("[negate]\nno\n").is_err());
    }

    #[test]
    fn demo_dictionary_defines_every_cue_and_disjoint_pools() {
        let d = CueDictionary::demo();
        for cat in d.categories() {
            for w in d.words(cat) {
                assert_eq!(d.matches(&w), vec![cat.as_str()], "{w}");
            }
        }
        let s = d.score("honestly i think that is a great idea");
        assert!(s.values["authenticity"] > 0.0);
        assert!(s.values["tone_score"] > 50.0);
    }
}
