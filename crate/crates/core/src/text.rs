//! Rule-based sentence segmentation and sentence-group chunking.
//!
//! A sentence ends after `.`, `?` or `!` when the next character is
//! whitespace and the first non-whitespace character after it is an
//! uppercase letter or a digit, unless the word ending in the terminator is
//! one of [`ABBREVIATIONS`]. Paragraph text is whitespace-normalized before
//! chunking so chunk texts are single-space joins of their sentences.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{Chunk, FigureRef, Paragraph};

/// Words whose trailing period never ends a sentence. Matched case-sensitively.
pub const ABBREVIATIONS: [&str; 9] = ["e.g.", "i.e.", "etc.", "Fig.", "Dr.", "Mr.", "Mrs.", "St.", "No."];

/// Default number of sentences per chunk.
pub const DEFAULT_GROUP_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("text is empty after trimming whitespace")]
    EmptyText,
    #[error("group size must be at least 1")]
    ZeroGroupSize,
}

/// One sentence as a byte range of the text it was split from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Collapses whitespace runs to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(['(', '[', '"', '\'']);
    ABBREVIATIONS.contains(&word)
}

/// Splits `text` into ordered, non-overlapping sentence spans.
///
/// Every non-whitespace character of `text` falls in exactly one span and
/// spans never begin or end with whitespace.
pub fn split_sentences(text: &str) -> Result<Vec<SentenceSpan>, TextError> {
    if text.trim().is_empty() {
        return Err(TextError::EmptyText);
    }

    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    // Byte offset just past the last non-whitespace character seen.
    let mut last_end = 0;
    // Byte offset where the current whitespace-delimited word begins.
    let mut word_start = 0;
    let mut chars = text.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        let prev_ws = i == 0 || text[..i].ends_with(char::is_whitespace);
        if prev_ws {
            word_start = i;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_end = i + c.len_utf8();

        if !is_terminator(c) {
            continue;
        }
        let Some(&(_, next)) = chars.peek() else {
            continue;
        };
        if !next.is_whitespace() {
            continue;
        }
        let following = text[last_end..].trim_start().chars().next();
        let opens_sentence = following.is_some_and(|f| f.is_uppercase() || f.is_ascii_digit());
        if !opens_sentence || is_abbreviation(&text[word_start..last_end]) {
            continue;
        }
        if let Some(s) = start.take() {
            spans.push(SentenceSpan {
                start: s,
                end: last_end,
                text: String::from(&text[s..last_end]),
            });
        }
    }
    if let Some(s) = start {
        spans.push(SentenceSpan {
            start: s,
            end: last_end,
            text: String::from(&text[s..last_end]),
        });
    }
    Ok(spans)
}

/// Does `text` mention `figure` by its label?
///
/// For labels carrying a number the mention pattern is `[Ff]ig(ure)?\.?\s*<number>`,
/// starting at a word boundary and not followed by further label characters
/// (so `Figure 1.2` does not match `Figure 1.23`). Labels without a number
/// match literally.
pub fn mentions_figure(text: &str, figure: &FigureRef) -> bool {
    match figure.label_number() {
        Some(number) => find_numbered_mention(text, number),
        None => {
            let label = figure.label.trim();
            !label.is_empty() && text.contains(label)
        }
    }
}

fn find_numbered_mention(text: &str, number: &str) -> bool {
    for (i, _) in text.match_indices(['F', 'f']) {
        let boundary = text[..i]
            .chars()
            .next_back()
            .is_none_or(|p| !p.is_alphanumeric());
        if !boundary {
            continue;
        }
        let mut rest = &text[i + 1..];
        let Some(r) = rest.strip_prefix("ig") else {
            continue;
        };
        rest = r;
        rest = rest.strip_prefix("ure").unwrap_or(rest);
        rest = rest.strip_prefix('.').unwrap_or(rest);
        rest = rest.trim_start();
        let Some(after) = rest.strip_prefix(number) else {
            continue;
        };
        let mut tail = after.chars();
        let ends = match tail.next() {
            None => true,
            Some('.') => tail.next().is_none_or(|c| !c.is_alphanumeric()),
            Some(c) => !c.is_alphanumeric(),
        };
        if ends {
            return true;
        }
    }
    false
}

/// Splits a paragraph into chunks of up to `group_size` consecutive sentences.
///
/// Each figure attaches to every chunk that mentions it; a figure mentioned
/// nowhere attaches to the first chunk.
pub fn chunk_paragraph(para: &Paragraph, group_size: usize) -> Result<Vec<Chunk>, TextError> {
    if group_size == 0 {
        return Err(TextError::ZeroGroupSize);
    }
    let normalized = normalize_whitespace(&para.text);
    let sentences = split_sentences(&normalized)?;

    let mut chunks: Vec<Chunk> = sentences
        .chunks(group_size)
        .enumerate()
        .map(|(seq, group)| {
            let mut text = String::new();
            for (n, s) in group.iter().enumerate() {
                if n > 0 {
                    text.push(' ');
                }
                text.push_str(&s.text);
            }
            Chunk {
                chunk_id: chunk_id(&para.para_id, seq),
                source_para_id: para.para_id.clone(),
                seq,
                text,
                sentence_count: group.len(),
                figures: Vec::new(),
            }
        })
        .collect();

    for figure in &para.figures {
        let mut attached = false;
        for chunk in chunks.iter_mut() {
            if mentions_figure(&chunk.text, figure) {
                chunk.figures.push(figure.clone());
                attached = true;
            }
        }
        if !attached {
            chunks[0].figures.push(figure.clone());
        }
    }
    Ok(chunks)
}

/// Identifier of the `seq`-th chunk of a paragraph.
pub fn chunk_id(para_id: &str, seq: usize) -> String {
    format!("{para_id}#{seq}")
}
