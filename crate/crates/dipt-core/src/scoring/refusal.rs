//! Keyword-based refusal detection.

use std::path::Path;

use crate::error::{Error, Result};

const BUILTIN_KEYWORDS: &str = include_str!("../../../../assets/refusal_keywords.txt");

/// True iff any keyword occurs in the text, case-insensitively. A refusal
/// means the attack failed on this item.
pub fn refusal_detect(text: &str, keywords: &[String]) -> bool {
    debug_assert!(!keywords.is_empty(), "refusal detection needs a keyword list");
    let lower = text.to_lowercase();
    keywords.iter().any(|k| !k.is_empty() && lower.contains(&k.to_lowercase()))
}

/// Parse a keyword list: one keyword per line, `#` comments and blank lines
/// ignored.
pub fn parse_keyword_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// The bundled refusal keyword list.
pub fn builtin_keywords() -> Vec<String> {
    parse_keyword_list(BUILTIN_KEYWORDS)
}

/// Load a keyword list from a file.
pub fn load_keywords(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let list = parse_keyword_list(&text);
    if list.is_empty() {
        return Err(Error::Input(format!("no keywords in {}", path.display())));
    }
    Ok(list)
}
