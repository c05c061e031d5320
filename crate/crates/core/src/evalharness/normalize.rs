use unicode_normalization::UnicodeNormalization;

/// Recorded in every accuracy report so scores stay comparable across runs.
pub const NORMALIZATION_RULES: &str = "nfc+lowercase; trim; collapse whitespace; \
     drop terminal [.?!]; strip leading option letter ('a.', 'a)', '(a)') when options are present";

/// Answer normalization without option-letter handling.
pub fn normalize(text: &str) -> String {
    normalize_answer(text, false)
}

/// Normalizes an answer string for exact-match comparison. The rules are
/// applied until the string stops changing, so the function is idempotent.
pub fn normalize_answer(text: &str, options_present: bool) -> String {
    let mut current = normalize_once(text, options_present);
    // Each pass only removes characters on ASCII input; the bound covers
    // pathological Unicode case mappings.
    for _ in 0..8 {
        let next = normalize_once(&current, options_present);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_once(text: &str, options_present: bool) -> String {
    let lowered: String = text.to_lowercase().nfc().collect();
    let mut s = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if options_present {
        if let Some(rest) = strip_option_prefix(&s) {
            s = rest.to_string();
        }
    }
    let trimmed = s.trim_end_matches(['.', '?', '!']).trim_end();
    trimmed.to_string()
}

/// Returns the remainder after a leading option marker such as `a.`, `b)`,
/// `c:` or `(d)`, provided the remainder is non-empty.
fn strip_option_prefix(s: &str) -> Option<&str> {
    let bytes = s.as_bytes();
    let marker_len = if bytes.len() >= 3
        && bytes[0] == b'('
        && bytes[1].is_ascii_alphabetic()
        && bytes[2] == b')'
    {
        3
    } else if bytes.len() >= 2
        && bytes[0].is_ascii_alphabetic()
        && matches!(bytes[1], b'.' | b')' | b':')
    {
        2
    } else {
        return None;
    };
    let rest = &s[marker_len..];
    if !rest.starts_with(' ') {
        return None;
    }
    let rest = rest.trim_start();
    (!rest.is_empty()).then_some(rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trims_case_and_terminal_punctuation() {
        assert_eq!(normalize(" To take a photo."), "to take a photo");
        assert_eq!(normalize("Why?!"), "why");
        assert_eq!(normalize("a  b\t c"), "a b c");
    }

    #[test]
    fn option_letter_stripped_only_with_options() {
        assert_eq!(normalize_answer("(B) resting", true), "resting");
        assert_eq!(normalize_answer("C. the dog", true), "the dog");
        assert_eq!(normalize_answer("(B) resting", false), "(b) resting");
        // A bare letter is left for option-letter resolution.
        assert_eq!(normalize_answer("(B)", true), "(b)");
    }

    #[test]
    fn interior_punctuation_survives() {
        assert_eq!(normalize("Mr. Smith's dog."), "mr. smith's dog");
    }

    #[test]
    fn composes_to_nfc() {
        assert_eq!(normalize("Cafe\u{301}"), "caf\u{e9}");
    }

    fn fuzz_string() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("(a) ".to_string()),
                Just("B. ".to_string()),
                Just(" ".to_string()),
                Just("\t".to_string()),
                Just(".".to_string()),
                Just("?!".to_string()),
                "[A-Za-z]{1,6}",
                Just("e\u{301}".to_string()),
            ],
            0..12,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn idempotent(s in fuzz_string(), opts in any::<bool>()) {
            let once = normalize_answer(&s, opts);
            prop_assert_eq!(normalize_answer(&once, opts), once);
        }

        #[test]
        fn never_lengthens(s in fuzz_string(), opts in any::<bool>()) {
            prop_assert!(normalize_answer(&s, opts).chars().count() <= s.chars().count());
        }

        #[test]
        fn idempotent_on_arbitrary_text(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }
    }
}
