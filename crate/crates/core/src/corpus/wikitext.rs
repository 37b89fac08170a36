//! Article markup cleanup: turns raw wikitext into body sentences.

use std::sync::LazyLock;

use regex::Regex;

use super::sentences::{collapse_whitespace, split_sentences};
use super::CorpusError;

/// Sections dropped entirely, together with their subsections.
const SKIPPED_SECTIONS: &[&str] = &[
    "references",
    "external links",
    "see also",
    "notes",
    "footnotes",
    "further reading",
    "bibliography",
    "sources",
    "citations",
    "works cited",
    "notes and references",
];

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static REF_PAIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<ref\b[^>]*>.*?</ref\s*>").unwrap());
static REF_SELF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<ref\b[^>]*/>").unwrap());
static DROPPED_TAGS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<(gallery|math|timeline|imagemap|syntaxhighlight|score)\b.*?</\s*(gallery|math|timeline|imagemap|syntaxhighlight|score)\s*>")
        .unwrap()
});
static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^>]*>").unwrap());
static EXT_LINK_LABELED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(?:https?:)?//[^\s\]]+\s+([^\]]*)\]").unwrap());
static EXT_LINK_BARE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(?:https?:)?//[^\s\]]+\]").unwrap());
static HEADING_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(={1,6})\s*(.*?)\s*={1,6}\s*$").unwrap());
static INLINE_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"={2,6}[^=\n]*?={2,6}").unwrap());
static CITATION_MARK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\[\s*(?:\d+|[a-z]|note\s*\d+|nb\s*\d+|citation needed|clarification needed|when\?|who\?|according to whom\?|dubious[^\]]*|failed verification|update)\s*\]")
        .unwrap()
});
static SPACE_BEFORE_PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\s+([.,;:!?])").unwrap());

/// Extract cleaned body sentences from every section, in document order.
pub fn extract_sentences(raw: &str) -> Result<Vec<String>, CorpusError> {
    let paragraphs = body_paragraphs(raw);
    let sentences: Vec<String> = paragraphs
        .iter()
        .flat_map(|p| split_sentences(p))
        .collect();
    if sentences.is_empty() {
        return Err(CorpusError::EmptyArticle);
    }
    Ok(sentences)
}

/// Body paragraphs after markup removal, headings and skipped sections dropped.
pub fn body_paragraphs(raw: &str) -> Vec<String> {
    let text = strip_markup(raw);
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut skip_level: Option<usize> = None;

    let flush = |current: &mut Vec<&str>, paragraphs: &mut Vec<String>| {
        if !current.is_empty() {
            let p = clean_paragraph(&current.join(" "));
            if !p.is_empty() {
                paragraphs.push(p);
            }
            current.clear();
        }
    };

    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(caps) = HEADING_LINE.captures(trimmed) {
            flush(&mut current, &mut paragraphs);
            let level = caps[1].len();
            let title = caps[2].trim().to_lowercase();
            if let Some(l) = skip_level {
                if level > l {
                    continue;
                }
                skip_level = None;
            }
            if SKIPPED_SECTIONS.contains(&title.as_str()) {
                skip_level = Some(level);
            }
            continue;
        }
        if skip_level.is_some() {
            continue;
        }
        if trimmed.is_empty() {
            flush(&mut current, &mut paragraphs);
            continue;
        }
        if is_non_prose(trimmed) {
            flush(&mut current, &mut paragraphs);
            continue;
        }
        current.push(trimmed);
    }
    flush(&mut current, &mut paragraphs);
    paragraphs
}

fn is_non_prose(line: &str) -> bool {
    line.starts_with(['*', '#', ':', ';', '|', '!', '{', '}'])
        || line.starts_with("__")
        || line.starts_with("----")
}

fn clean_paragraph(p: &str) -> String {
    let p = INLINE_HEADING.replace_all(p, " ");
    let p = CITATION_MARK.replace_all(&p, "");
    let p = decode_entities(&p);
    let p = collapse_whitespace(&p);
    SPACE_BEFORE_PUNCT.replace_all(&p, "$1").into_owned()
}

fn decode_entities(s: &str) -> String {
    s.replace("&nbsp;", " ")
        .replace("&ndash;", "\u{2013}")
        .replace("&mdash;", "\u{2014}")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

/// Remove comments, references, templates, tables, files and link syntax.
pub fn strip_markup(raw: &str) -> String {
    let s = COMMENT.replace_all(raw, "");
    let s = REF_SELF.replace_all(&s, "");
    let s = REF_PAIR.replace_all(&s, "");
    let s = DROPPED_TAGS.replace_all(&s, "");
    let s = remove_nested(&s, "{{", "}}");
    let s = remove_nested(&s, "{|", "|}");
    let s = rewrite_wikilinks(&s);
    let s = EXT_LINK_LABELED.replace_all(&s, "$1");
    let s = EXT_LINK_BARE.replace_all(&s, "");
    let s = HTML_TAG.replace_all(&s, "");
    s.replace("'''", "").replace("''", "")
}

/// Drop every balanced `open ... close` span, honouring nesting.
pub(crate) fn remove_nested(s: &str, open: &str, close: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    let mut rest = s;
    while !rest.is_empty() {
        if rest.starts_with(open) {
            depth += 1;
            rest = &rest[open.len()..];
        } else if depth > 0 && rest.starts_with(close) {
            depth -= 1;
            rest = &rest[close.len()..];
        } else {
            let ch = rest.chars().next().unwrap();
            if depth == 0 {
                out.push(ch);
            }
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

/// `[[target|label]]` becomes `label`, `[[target]]` becomes `target`, and
/// file, image and category links vanish along with nested captions.
fn rewrite_wikilinks(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find("[[") {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 2..];
        match matching_close(after) {
            Some(end) => {
                let inner = &after[..end];
                out.push_str(&link_text(inner));
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[pos..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn matching_close(s: &str) -> Option<usize> {
    let mut depth = 1usize;
    let bytes = s.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'[' && bytes[i + 1] == b'[' {
            depth += 1;
            i += 2;
        } else if bytes[i] == b']' && bytes[i + 1] == b']' {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    None
}

fn link_text(inner: &str) -> String {
    let lower = inner.trim_start().to_lowercase();
    let namespace = lower.split(':').next().unwrap_or("");
    if lower.contains(':')
        && matches!(
            namespace,
            "file" | "image" | "category" | "media" | "wikt" | "wiktionary"
        )
    {
        return String::new();
    }
    let label = match inner.find('|') {
        Some(bar) => &inner[bar + 1..],
        None => inner,
    };
    rewrite_wikilinks(label)
}
