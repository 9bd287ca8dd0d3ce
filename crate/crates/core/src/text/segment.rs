use super::{Origin, RawDocument, Sentence};
use crate::error::{Error, Result};

/// Tokens ending in a period that do not close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "vs.", "etc.", "e.g.", "i.e.", "cf.", "approx.",
    "no.", "fig.", "inc.", "ltd.", "co.", "jan.", "feb.", "aug.", "sept.", "oct.", "nov.", "dec.", "u.s.", "a.m.",
    "p.m.",
];

/// Characters that may trail a terminator and still belong to the sentence.
const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

/// Splits a document into sentences.
///
/// Paragraphs (blank-line separated) never share a sentence. Inside a
/// paragraph a sentence ends at `.`, `!` or `?` (plus trailing closing
/// quotes or brackets) followed by whitespace or end of text, unless the
/// token is a known abbreviation or a single-letter initial.
pub fn split_sentences(doc: &RawDocument) -> Result<Vec<Sentence>> {
    if doc.body().trim().is_empty() {
        return Err(Error::EmptyInput(format!(
            "document for class {:?} has an empty body",
            doc.class_label()
        )));
    }
    let mut out = Vec::new();
    for paragraph in paragraphs(doc.body()) {
        split_paragraph(&paragraph, &mut out);
    }
    Ok(out)
}

fn paragraphs(body: &str) -> Vec<String> {
    let mut paras = Vec::new();
    let mut current = Vec::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paras.push(current.join(" "));
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    if !current.is_empty() {
        paras.push(current.join(" "));
    }
    paras
}

fn split_paragraph(paragraph: &str, out: &mut Vec<Sentence>) {
    let tokens: Vec<&str> = paragraph.split_whitespace().collect();
    let mut current: Vec<&str> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        current.push(token);
        let last = i + 1 == tokens.len();
        if last || ends_sentence(token) {
            out.push(Sentence::new(&current.join(" "), Origin::Document));
            current.clear();
        }
    }
}

fn ends_sentence(token: &str) -> bool {
    let core = token.trim_end_matches(CLOSERS);
    let Some(last) = core.chars().last() else {
        return false;
    };
    match last {
        '!' | '?' => true,
        '.' => !is_abbreviation(core),
        _ => false,
    }
}

fn is_abbreviation(token: &str) -> bool {
    let lower = token.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single-letter initial such as "J."
    let mut chars = lower.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}
