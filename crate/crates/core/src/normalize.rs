//! Content normalization for both pipelines, and the lowercase/zero-digit
//! token normalization used before language-model scoring.

use unicode_general_category::{get_general_category, GeneralCategory as Gc};
use unicode_normalization::UnicodeNormalization;

/// Unicode general category `L*`.
pub fn is_letter(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::UppercaseLetter
            | Gc::LowercaseLetter
            | Gc::TitlecaseLetter
            | Gc::ModifierLetter
            | Gc::OtherLetter
    )
}

/// Unicode general category `P*`.
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
    )
}

/// NFKC, markup removal, whitespace cleanup.
///
/// Markup steps repeat until the text stops changing, so decoded entities
/// that spell out further markup (`&amp;lt;`) are fully resolved and the
/// function is idempotent.
pub fn normalize_content(text: &str) -> String {
    let mut cur: String = text.nfkc().collect();
    for _ in 0..64 {
        let next: String = decode_entities(&strip_tags(&cur)).nfkc().collect();
        if next == cur {
            break;
        }
        cur = next;
    }
    clean_whitespace(&cur)
}

pub fn is_idempotent_check(text: &str) -> bool {
    let once = normalize_content(text);
    normalize_content(&once) == once
}

/// Removes every `<...>` span that contains no `<` or `>` inside.
fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        match after.find(['<', '>']) {
            Some(i) if i > 0 && after.as_bytes()[i] == b'>' => {
                out.push_str(&rest[..open]);
                rest = &after[i + 1..];
            }
            _ => {
                out.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        match decode_one(tail) {
            Some((c, used)) => {
                out.push(c);
                rest = &tail[used..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_one(s: &str) -> Option<(char, usize)> {
    const NAMED: [(&str, char); 4] = [
        ("&amp;", '&'),
        ("&lt;", '<'),
        ("&gt;", '>'),
        ("&quot;", '"'),
    ];
    for (name, c) in NAMED {
        if s.starts_with(name) {
            return Some((c, name.len()));
        }
    }
    let digits = s.strip_prefix("&#")?;
    let end = digits.find(|c: char| !c.is_ascii_digit())?;
    if end == 0 || end > 7 || !digits[end..].starts_with(';') {
        return None;
    }
    let code: u32 = digits[..end].parse().ok()?;
    let c = char::from_u32(code)?;
    // Decoded line breaks would add lines; decoded whitespace is a plain space.
    let c = match c {
        c if c.is_whitespace() => ' ',
        c if c.is_control() => return None,
        c => c,
    };
    Some((c, 2 + end + 1))
}

fn clean_whitespace(text: &str) -> String {
    let text = text.replace("\r\n", "\n");
    let mut lines: Vec<String> = Vec::new();
    for line in text.split('\n') {
        let mut out = String::with_capacity(line.len());
        let mut in_space = false;
        for c in line.chars() {
            if c.is_whitespace() {
                in_space = true;
            } else {
                if in_space {
                    out.push(' ');
                }
                in_space = false;
                out.push(c);
            }
        }
        lines.push(out);
    }
    // Re-join, allowing at most one empty line between content lines.
    let mut out = String::with_capacity(text.len());
    let mut blank_run = 0usize;
    for line in lines {
        if line.is_empty() {
            blank_run += 1;
            continue;
        }
        blank_run_sep(&mut out, blank_run);
        blank_run = 0;
        out.push_str(if out.is_empty() {
            line.trim_start()
        } else {
            &line
        });
    }
    out
}

fn blank_run_sep(out: &mut String, blank_run: usize) {
    if !out.is_empty() {
        out.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
    }
}

/// Lowercase, strip accents, map every decimal digit to `0`, delete
/// punctuation, split on whitespace.
pub fn normalize_for_lm(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .nfd()
        .filter(|&c| get_general_category(c) != Gc::NonspacingMark)
        .filter(|&c| !is_punctuation(c))
        .map(|c| {
            if get_general_category(c) == Gc::DecimalNumber {
                '0'
            } else {
                c
            }
        })
        .nfc()
        // Letters with no lowercase mapping (e.g. U+03D2) cannot be folded.
        .filter(|c| !c.is_uppercase())
        .collect();
    stripped.split_whitespace().map(str::to_string).collect()
}
