//! Rule-based sentence segmentation.
//!
//! A boundary is a `.`, `!` or `?` (optionally followed by closing quotes or
//! brackets), then whitespace, then an uppercase letter. A period ending a
//! known abbreviation or a dotted token such as `U.S.` is not a boundary.

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "mt", "ft", "jr", "sr", "no", "nos", "vs", "etc",
    "approx", "inc", "ltd", "co", "corp", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "gen", "gov", "sen", "rep", "rev", "ave", "blvd", "est", "pop",
    "ca", "c", "cf", "al", "fig", "vol", "ed", "dept", "univ", "sq", "km", "mi", "lt", "col",
    "capt", "sgt", "hon", "pres",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

fn is_abbreviation(token: &str) -> bool {
    let token = token.trim_start_matches(|c: char| !c.is_alphanumeric());
    if token.is_empty() {
        return false;
    }
    if token.contains('.') {
        return true;
    }
    let lower = token.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Split cleaned paragraph text into sentences. Whitespace inside each
/// sentence is collapsed; fragments without any alphanumeric are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && CLOSERS.contains(&chars[end]) {
                end += 1;
            }
            let mut next = end;
            while next < chars.len() && chars[next].is_whitespace() {
                next += 1;
            }
            let has_gap = next > end;
            let next_upper = next < chars.len() && starts_upper(&chars[next..]);
            if has_gap && next_upper && !(c == '.' && is_abbreviation(&preceding_token(&chars, i))) {
                push_sentence(&mut out, &chars[start..end]);
                start = next;
                i = next;
                continue;
            }
        }
        i += 1;
    }
    if start < chars.len() {
        push_sentence(&mut out, &chars[start..]);
    }
    out
}

fn starts_upper(rest: &[char]) -> bool {
    // Allow an opening quote or bracket before the capital.
    let mut it = rest.iter().skip_while(|c| matches!(c, '"' | '\'' | '(' | '\u{201c}' | '\u{2018}'));
    it.next().is_some_and(|c| c.is_uppercase())
}

fn preceding_token(chars: &[char], dot: usize) -> String {
    let mut s = dot;
    while s > 0 && !chars[s - 1].is_whitespace() {
        s -= 1;
    }
    chars[s..dot].iter().collect()
}

fn push_sentence(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = collapse_whitespace(&s);
    if s.chars().any(char::is_alphanumeric) {
        out.push(s);
    }
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
