use super::{ClassId, LayoutGrammar, MarkupError, Token, TokenSequence};

/// Parses XML-like transcript markup (`<B>text</B>`) into tokens.
///
/// Every tag becomes one layout token and every other codepoint one
/// character token. Tags carry no attributes and there is no escaping.
pub fn parse_markup(text: &str, grammar: &LayoutGrammar) -> Result<TokenSequence, MarkupError> {
    let mut tokens = Vec::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    while let Some((offset, c)) = chars.next() {
        if c == '<' {
            let mut tag = String::new();
            let mut closed = false;
            for (_, t) in chars.by_ref() {
                if t == '>' {
                    closed = true;
                    break;
                }
                if t == '<' {
                    break;
                }
                tag.push(t);
            }
            if !closed {
                return Err(MarkupError::MalformedTag { offset });
            }
            let (is_end, name) = match tag.strip_prefix('/') {
                Some(rest) => (true, rest),
                None => (false, tag.as_str()),
            };
            let id = ClassId::new(name).map_err(|_| MarkupError::MalformedTag { offset })?;
            if !grammar.contains_class(id) {
                return Err(MarkupError::UnknownTag {
                    tag: name.to_string(),
                    offset,
                });
            }
            tokens.push(if is_end { Token::End(id) } else { Token::Begin(id) });
        } else if grammar.alphabet().contains(c) {
            tokens.push(Token::Char(c));
        } else {
            return Err(MarkupError::IllegalCharacter { ch: c, offset });
        }
    }
    Ok(TokenSequence::from_vec_unchecked(tokens))
}

/// Canonical markup string: `<id>`/`</id>` tags, no whitespace inside tags.
pub fn serialize(seq: &TokenSequence) -> String {
    seq.to_string()
}

/// Keeps the character tokens only.
pub fn strip_layout(seq: &TokenSequence) -> TokenSequence {
    TokenSequence::from_vec_unchecked(seq.iter().copied().filter(Token::is_char).collect())
}

/// Keeps the layout tokens only.
pub fn extract_layout(seq: &TokenSequence) -> TokenSequence {
    TokenSequence::from_vec_unchecked(seq.iter().copied().filter(Token::is_layout).collect())
}
