/// Lowercases, splits on whitespace and detaches punctuation. Placeholder
/// tokens such as `<cuisine>` stay atomic; apostrophes inside words
/// (`i'm`) are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            flush(&mut word, &mut out);
        } else if ch == '<' {
            if let Some(len) = placeholder_len(&chars[i..]) {
                flush(&mut word, &mut out);
                out.push(chars[i..i + len].iter().collect());
                i += len;
                continue;
            }
            flush(&mut word, &mut out);
            out.push(ch.to_string());
        } else if ch.is_alphanumeric()
            || ch == '_'
            || (ch == '\'' && !word.is_empty() && chars.get(i + 1).is_some_and(|c| c.is_alphanumeric()))
        {
            word.push(ch);
        } else {
            flush(&mut word, &mut out);
            out.push(ch.to_string());
        }
        i += 1;
    }
    flush(&mut word, &mut out);
    out
}

/// Length of a `<name>` placeholder (`name` in `[a-z0-9_]+`) at the start of
/// `chars`, if there is one.
pub(crate) fn placeholder_len(chars: &[char]) -> Option<usize> {
    if chars.first() != Some(&'<') {
        return None;
    }
    let body = chars[1..].iter().take_while(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || **c == '_').count();
    (body > 0 && chars.get(1 + body) == Some(&'>')).then_some(body + 2)
}

pub fn is_placeholder(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    placeholder_len(&chars) == Some(chars.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(
            tokenize("Sure, is there anything else?"),
            toks(&["sure", ",", "is", "there", "anything", "else", "?"])
        );
        assert_eq!(tokenize("I want <cuisine> food"), toks(&["i", "want", "<cuisine>", "food"]));
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn edge_cases() {
        assert_eq!(tokenize("<city>, right?"), toks(&["<city>", ",", "right", "?"]));
        assert_eq!(tokenize("I'm on it"), toks(&["i'm", "on", "it"]));
        assert_eq!(tokenize("a < b"), toks(&["a", "<", "b"]));
        assert_eq!(tokenize("<Weather_Attribute>"), toks(&["<weather_attribute>"]));
        assert_eq!(tokenize("'quoted'"), toks(&["'", "quoted", "'"]));
        assert!(is_placeholder("<poi_type>"));
        assert!(!is_placeholder("<>"));
        assert!(!is_placeholder("<a b>"));
    }
}
