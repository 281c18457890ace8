use super::ClinicalReport;

/// Tokens ending in a period that never close a sentence.
pub const ABBREVIATIONS: &[&str] = &["Dr.", "Mr.", "Mrs.", "Ms.", "vs.", "e.g.", "i.e.", "mg.", "ml.", "No."];

/// Rule-based sentence segmentation.
///
/// A boundary sits after `.`, `!` or `?` when the next characters are
/// whitespace followed by an uppercase letter or a digit, unless the word
/// carrying the period is one of [`ABBREVIATIONS`]. Returned slices borrow
/// the input verbatim.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    let text = text.trim();
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();

    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let mut j = i + 1;
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        let Some(&(next_pos, next)) = chars.get(j) else {
            continue;
        };
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            continue;
        }
        let end = pos + c.len_utf8();
        if c == '.' && is_abbreviation(&text[start..end]) {
            continue;
        }
        sentences.push(&text[start..end]);
        start = next_pos;
    }
    if start < text.len() {
        sentences.push(&text[start..]);
    }
    sentences
}

fn is_abbreviation(segment: &str) -> bool {
    let word = segment
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or(segment)
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&word)
}

/// The first three sentences of the report body, original text preserved.
pub fn lead3(report: &ClinicalReport) -> String {
    lead_n(&report.body, 3)
}

pub(crate) fn lead_n(text: &str, n: usize) -> String {
    let sentences = segment_sentences(text);
    let Some(first) = sentences.first() else {
        return String::new();
    };
    let last = sentences[n.min(sentences.len()) - 1];
    // Both slices point into `text`, so the span between them is verbatim.
    let begin = first.as_ptr() as usize - text.as_ptr() as usize;
    let end = last.as_ptr() as usize - text.as_ptr() as usize + last.len();
    text[begin..end].to_owned()
}
