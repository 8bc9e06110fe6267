//! Hand-rolled lexer producing spanned tokens.

use super::Span;
use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Let,
    In,
    New,
    Free,
    Mut,
    Ident(String),
    Int(BigInt),
    Star,
    Amp,
    ColonEq,
    Eq,
    Semi,
    LParen,
    RParen,
    Eof,
}

impl TokenKind {
    /// Human-readable name used in "expected ..." diagnostics.
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Let => "`let`".into(),
            TokenKind::In => "`in`".into(),
            TokenKind::New => "`new`".into(),
            TokenKind::Free => "`free`".into(),
            TokenKind::Mut => "`mut`".into(),
            TokenKind::Ident(name) => format!("identifier `{name}`"),
            TokenKind::Int(n) => format!("integer `{n}`"),
            TokenKind::Star => "`*`".into(),
            TokenKind::Amp => "`&`".into(),
            TokenKind::ColonEq => "`:=`".into(),
            TokenKind::Eq => "`=`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    let span_at = |line: u32, col: u32, offset: usize, len: usize| Span {
        line,
        col,
        offset,
        len,
    };

    while pos < bytes.len() {
        let b = bytes[pos];
        match b {
            b'\n' => {
                pos += 1;
                line += 1;
                col = 1;
            }
            b' ' | b'\t' | b'\r' => {
                pos += 1;
                col += 1;
            }
            b'/' if bytes.get(pos + 1) == Some(&b'/') => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                    col += 1;
                }
            }
            b'*' | b'&' | b';' | b'(' | b')' | b'=' => {
                let kind = match b {
                    b'*' => TokenKind::Star,
                    b'&' => TokenKind::Amp,
                    b';' => TokenKind::Semi,
                    b'(' => TokenKind::LParen,
                    b')' => TokenKind::RParen,
                    _ => TokenKind::Eq,
                };
                tokens.push(Token {
                    kind,
                    span: span_at(line, col, pos, 1),
                });
                pos += 1;
                col += 1;
            }
            b':' => {
                if bytes.get(pos + 1) == Some(&b'=') {
                    tokens.push(Token {
                        kind: TokenKind::ColonEq,
                        span: span_at(line, col, pos, 2),
                    });
                    pos += 2;
                    col += 2;
                } else {
                    return Err(LexError {
                        message: "expected `=` after `:`".into(),
                        span: span_at(line, col, pos, 1),
                    });
                }
            }
            b'-' | b'0'..=b'9' => {
                let start = pos;
                let start_col = col;
                if b == b'-' {
                    if !bytes.get(pos + 1).is_some_and(u8::is_ascii_digit) {
                        return Err(LexError {
                            message: "expected a digit after `-`".into(),
                            span: span_at(line, col, pos, 1),
                        });
                    }
                    pos += 1;
                    col += 1;
                }
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                    col += 1;
                }
                let text = &source[start..pos];
                let value: BigInt = text.parse().expect("digits form a valid integer");
                tokens.push(Token {
                    kind: TokenKind::Int(value),
                    span: span_at(line, start_col, start, pos - start),
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = pos;
                let start_col = col;
                while pos < bytes.len()
                    && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_')
                {
                    pos += 1;
                    col += 1;
                }
                let text = &source[start..pos];
                let kind = match text {
                    "let" => TokenKind::Let,
                    "in" => TokenKind::In,
                    "new" => TokenKind::New,
                    "free" => TokenKind::Free,
                    "mut" => TokenKind::Mut,
                    _ => TokenKind::Ident(text.to_string()),
                };
                tokens.push(Token {
                    kind,
                    span: span_at(line, start_col, start, pos - start),
                });
            }
            _ => {
                return Err(LexError {
                    message: format!("unexpected character `{}`", &source[pos..].chars().next().unwrap()),
                    span: span_at(line, col, pos, 1),
                });
            }
        }
    }

    tokens.push(Token {
        kind: TokenKind::Eof,
        span: span_at(line, col, pos, 0),
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn lexes_borrow_sequence() {
        assert_eq!(
            kinds("&mut *x"),
            vec![
                TokenKind::Amp,
                TokenKind::Mut,
                TokenKind::Star,
                TokenKind::Ident("x".into()),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("42 // the answer\n; 7"),
            vec![
                TokenKind::Int(42.into()),
                TokenKind::Semi,
                TokenKind::Int(7.into()),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn spans_are_byte_accurate() {
        let toks = tokenize("let x := new(42)").unwrap();
        let x = &toks[1];
        assert_eq!((x.span.line, x.span.col, x.span.offset, x.span.len), (1, 5, 4, 1));
        let assign = &toks[2];
        assert_eq!(assign.span.len, 2);
        assert_eq!(assign.span.offset, 6);
    }

    #[test]
    fn negative_literals_lex_as_one_token() {
        assert_eq!(
            kinds("-12"),
            vec![TokenKind::Int((-12).into()), TokenKind::Eof]
        );
    }

    #[test]
    fn stray_colon_is_an_error() {
        assert!(tokenize("x : 1").is_err());
    }

    #[test]
    fn multiline_line_tracking() {
        let toks = tokenize("let x := new(1) in\nfree(x)").unwrap();
        let free_tok = toks.iter().find(|t| t.kind == TokenKind::Free).unwrap();
        assert_eq!((free_tok.span.line, free_tok.span.col), (2, 1));
    }
}
