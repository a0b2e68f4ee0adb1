//! Text normalization shared by the graph, filter and metric code.

/// Trims and collapses every run of whitespace into a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Unicode lowercasing. Used as the casefold for all matching.
pub fn casefold(text: &str) -> String {
    text.to_lowercase()
}

/// Identity key for entities: casefolded with whitespace collapsed.
pub fn identity_key(text: &str) -> String {
    casefold(&collapse_whitespace(text))
}

/// Metric tokenization: casefold, replace punctuation with spaces, split on
/// whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = casefold(text)
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    folded.split_whitespace().map(str::to_owned).collect()
}

/// Tokens re-joined with single spaces; the form substring checks run on.
pub fn match_form(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Whether `needle` occurs in `haystack` once both are reduced to
/// [`match_form`]. Empty needles never match.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = match_form(needle);
    !needle.is_empty() && match_form(haystack).contains(&needle)
}
