//! Shared text utilities: tokenization, n-grams, and a stable hash.
//!
//! One tokenizer is used everywhere (encoder features, BLEU, vocabulary
//! statistics) so that metrics and models agree on word boundaries:
//! lowercase, split on whitespace and punctuation, keeping alphanumeric
//! runs as tokens.

/// Lowercase and split on any non-alphanumeric character.
///
/// `"Alright, Dr. Morgan is free at 2 pm!"` tokenizes to
/// `["alright", "dr", "morgan", "is", "free", "at", "2", "pm"]`.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// All contiguous n-grams of `tokens` for n in `1..=max_n`, each rendered as
/// a single keyed string (`"u:foo"`, `"b:foo bar"`).
pub fn ngram_keys(tokens: &[String], max_n: usize) -> Vec<String> {
    let mut keys = Vec::new();
    for n in 1..=max_n {
        if n > tokens.len() {
            break;
        }
        for window in tokens.windows(n) {
            let mut key = String::with_capacity(2 + window.iter().map(|t| t.len() + 1).sum::<usize>());
            key.push_str(match n {
                1 => "u:",
                2 => "b:",
                _ => "n:",
            });
            for (i, tok) in window.iter().enumerate() {
                if i > 0 {
                    key.push(' ');
                }
                key.push_str(tok);
            }
            keys.push(key);
        }
    }
    keys
}

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike
/// `DefaultHasher`, so hashed feature indices are reproducible.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Convert a `PascalCase` or `camelCase` identifier to `snake_case`.
/// Used to expose knowledge-base field names (`AverageRating`) under the
/// identifiers templates use (`average_rating`).
pub fn snake_case(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    let mut prev_lower = false;
    for c in name.chars() {
        if c.is_uppercase() {
            if prev_lower {
                out.push('_');
            }
            for lc in c.to_lowercase() {
                out.push(lc);
            }
            prev_lower = false;
        } else {
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Alright, Dr. Morgan is free at 2 pm!"),
            vec!["alright", "dr", "morgan", "is", "free", "at", "2", "pm"]
        );
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("   ...  "), Vec::<String>::new());
    }

    #[test]
    fn ngrams_cover_unigrams_and_bigrams() {
        let toks = tokenize("a b c");
        let keys = ngram_keys(&toks, 2);
        assert_eq!(keys, vec!["u:a", "u:b", "u:c", "b:a b", "b:b c"]);
    }

    #[test]
    fn fnv_is_stable() {
        // Reference value for "hello" from the FNV-1a specification.
        assert_eq!(fnv1a(b"hello"), 0xa430_d846_80aa_bd0b);
    }

    #[test]
    fn snake_case_handles_acronym_free_names() {
        assert_eq!(snake_case("AverageRating"), "average_rating");
        assert_eq!(snake_case("Message"), "message");
        assert_eq!(snake_case("RideWait"), "ride_wait");
        assert_eq!(snake_case("already_snake"), "already_snake");
    }
}
