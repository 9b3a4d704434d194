use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes, lowercases and splits on whitespace; every punctuation
/// character becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase().nfc().collect();
    let mut tokens = Vec::new();
    for word in normalized.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punct(c) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

pub(crate) fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00AB}' | '\u{00BB}' | '\u{00BF}'
        )
}
