use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Cleans one comment: strips emoji, decimal digits (ASCII, Arabic-Indic and
/// Extended Arabic-Indic) and URLs, then collapses whitespace. `None` means
/// nothing is left and the comment should be dropped.
pub fn normalize(text: &str) -> Option<String> {
    let stripped: String = text.chars().filter(|&c| !is_emoji(c) && !is_decimal_digit(c)).collect();
    let mut out = String::with_capacity(stripped.len());
    for run in stripped.split_whitespace() {
        let kept = strip_url(run);
        if kept.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(kept);
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

pub fn normalize_bytes(bytes: &[u8]) -> Result<Option<String>> {
    let text = core::str::from_utf8(bytes)
        .map_err(|e| Error::Input(alloc::format!("invalid UTF-8 at byte {}", e.valid_up_to())))?;
    Ok(normalize(text))
}

pub fn is_decimal_digit(c: char) -> bool {
    c.is_ascii_digit() || ('\u{0660}'..='\u{0669}').contains(&c) || ('\u{06F0}'..='\u{06F9}').contains(&c)
}

/// Pictographic and emoji codepoints, plus the joiners and selectors that
/// glue emoji sequences together.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x200D                  // zero width joiner
        | 0x20E3                // combining enclosing keycap
        | 0x2190..=0x21FF       // arrows
        | 0x2300..=0x23FF       // misc technical (watch, hourglass, ...)
        | 0x24C2
        | 0x25A0..=0x25FF       // geometric shapes
        | 0x2600..=0x27BF       // misc symbols, dingbats
        | 0x2900..=0x297F
        | 0x2B00..=0x2BFF       // misc symbols and arrows
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0xFE00..=0xFE0F       // variation selectors
        | 0x1F000..=0x1FAFF     // mahjong .. symbols and pictographs extended-A
        | 0xE0020..=0xE007F     // tag sequences
    )
}

/// Removes a URL suffix from a whitespace-free run: everything from the start
/// of a `scheme://` (scheme = letter followed by letters, digits, `+`, `-`,
/// `.`), or the whole run when it begins with `www.`.
fn strip_url(run: &str) -> &str {
    if run.len() >= 4 && run.as_bytes()[..4].eq_ignore_ascii_case(b"www.") {
        return "";
    }
    let bytes = run.as_bytes();
    let mut search = 0;
    while let Some(pos) = run[search..].find("://").map(|p| p + search) {
        let scheme_chars: Vec<usize> = (0..pos)
            .rev()
            .take_while(|&i| bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'+' | b'-' | b'.'))
            .collect();
        // Scheme starts at the first letter of the maximal run before "://".
        if let Some(start) = scheme_chars.iter().rev().copied().find(|&i| bytes[i].is_ascii_alphabetic()) {
            return &run[..start];
        }
        search = pos + 3;
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn removes_urls() {
        assert_eq!(normalize("see http://x.y ok").as_deref(), Some("see ok"));
        assert_eq!(normalize("HTTPS://a.b/c?d=1 x www.site.ir y").as_deref(), Some("x y"));
        assert_eq!(normalize("(http://a.b) z").as_deref(), Some("( z"));
        assert_eq!(normalize("a://b").as_deref(), None);
        assert_eq!(normalize("-://x kept").as_deref(), Some("-://x kept"));
    }

    #[test]
    fn removes_numbers() {
        assert_eq!(normalize("غالی 100").as_deref(), Some("غالی"));
        assert_eq!(normalize("غالی ۱۰۰").as_deref(), Some("غالی"));
        assert_eq!(normalize("غالی ١٢٣").as_deref(), Some("غالی"));
        assert_eq!(normalize("x2y").as_deref(), Some("xy"));
    }

    #[test]
    fn drops_emoji_only_comments() {
        assert_eq!(normalize("😀😀"), None);
        assert_eq!(normalize("  \t\n "), None);
        assert_eq!(normalize("خوب 👍🏽 بود ❤️").as_deref(), Some("خوب بود"));
        assert_eq!(normalize("👨‍👩‍👧"), None);
    }

    #[test]
    fn keeps_persian_zero_width_non_joiner() {
        assert_eq!(normalize("می\u{200C}خواهم").as_deref(), Some("می\u{200C}خواهم"));
    }

    #[test]
    fn invalid_utf8_is_an_input_error() {
        assert!(matches!(normalize_bytes(&[0x61, 0xFF]), Err(Error::Input(_))));
        assert_eq!(normalize_bytes(b" a  b ").unwrap().as_deref(), Some("a b"));
    }

    fn mixed_text() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            Just("http://".to_string()),
            Just("www.".to_string()),
            Just("://".to_string()),
            Just(" ".to_string()),
            Just("\u{200D}".to_string()),
            Just("😀".to_string()),
            Just("۵".to_string()),
            "[a-z0-9.:/+-]{1,6}",
            "[\u{0600}-\u{06FF}]{1,3}",
            "\\PC{1,3}",
        ];
        proptest::collection::vec(piece, 0..12).prop_map(|v| v.concat())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn normalize_is_idempotent(s in mixed_text()) {
            if let Some(once) = normalize(&s) {
                prop_assert_eq!(normalize(&once), Some(once.clone()));
                prop_assert!(!once.chars().any(is_decimal_digit));
                prop_assert!(!once.chars().any(is_emoji));
                prop_assert!(!once.contains("  "));
            }
        }
    }
}
