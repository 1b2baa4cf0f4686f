//! Shared string normalization rules.
//!
//! Two tiers are used throughout the crate:
//! - entity normalization: casefold + trim + collapse internal whitespace,
//!   used by fallback entity resolution;
//! - answer normalization: entity normalization plus stripping surrounding
//!   punctuation, used identically by trajectory retention and evaluation.

/// Casefold, trim, and collapse runs of internal whitespace to single spaces.
pub fn normalize_entity(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut last_space = true;
    for ch in s.trim().chars() {
        if ch.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else {
            for lc in ch.to_lowercase() {
                out.push(lc);
            }
            last_space = false;
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Entity normalization plus stripping surrounding punctuation.
pub fn normalize_answer(s: &str) -> String {
    let folded = normalize_entity(s);
    folded
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Lowercased alphanumeric tokens of a string; `_` and every other
/// non-alphanumeric character act as separators.
pub fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Quote a string the way Python's repr does, which is the list style used
/// in action-history lines.
pub fn pyish_quote(s: &str) -> String {
    if s.contains('\'') && !s.contains('"') {
        format!("\"{s}\"")
    } else if s.contains('\'') {
        format!("'{}'", s.replace('\'', "\\'"))
    } else {
        format!("'{s}'")
    }
}

/// Render a list of strings as `['a', 'b']`.
pub fn pyish_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| pyish_quote(s)).collect();
    format!("[{}]", quoted.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_normalization_collapses_and_folds() {
        assert_eq!(normalize_entity(" Kenji  Mizoguchi "), "kenji mizoguchi");
        assert_eq!(normalize_entity("DRAMA"), "drama");
        assert_eq!(normalize_entity(""), "");
    }

    #[test]
    fn answer_normalization_strips_surrounding_punctuation() {
        assert_eq!(normalize_answer("\"Drama\""), "drama");
        assert_eq!(normalize_answer("drama "), "drama");
        assert_eq!(normalize_answer("  'The  End'. "), "the end");
        // internal punctuation survives
        assert_eq!(normalize_answer("well-known"), "well-known");
    }

    #[test]
    fn tokenizer_splits_on_underscores() {
        assert_eq!(tokens("directed_by"), vec!["directed", "by"]);
        assert_eq!(tokens("Who directed Ugetsu?"), vec!["who", "directed", "ugetsu"]);
    }

    #[test]
    fn pyish_quoting_matches_repr_style() {
        assert_eq!(pyish_quote("Ugetsu"), "'Ugetsu'");
        assert_eq!(pyish_quote("Schindler's List"), "\"Schindler's List\"");
        assert_eq!(
            pyish_list(&["a".to_string(), "b".to_string()]),
            "['a', 'b']"
        );
    }
}
