//! Recursive descent parser for lambda-PA.
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! program := seq EOF
//! seq     := 'let' IDENT (':=' | '=') assign 'in' seq
//!          | assign (';' seq)?
//! assign  := unary (':=' assign)?          -- LHS must be a dereference
//! unary   := '*' unary | '&' 'mut' '*' unary | '&' '*' unary | atom
//! atom    := INT | IDENT | 'new' '(' seq ')' | 'free' '(' seq ')' | '(' seq ')'
//! ```

use super::lexer::{tokenize, LexError, Token, TokenKind};
use super::{Expr, ExprKind, Span};
use thiserror::Error;

/// Parse failure, carrying the offending span and the token set that would
/// have been accepted.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("parse error at {span}: unexpected {found}, expected {}", expected.join(" or "))]
    UnexpectedToken {
        expected: Vec<String>,
        found: String,
        span: Span,
    },
    #[error("parse error at {span}: assignment target must be a dereference like `*x`")]
    BadAssignTarget { span: Span },
    #[error("parse error at {span}: expected `mut` or `*` after `&` (borrows are `&mut *e` or `&*e`)")]
    BareAmpersand { span: Span },
    #[error("lex error at {span}: {message}")]
    Lex { message: String, span: Span },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::UnexpectedToken { span, .. }
            | ParseError::BadAssignTarget { span }
            | ParseError::BareAmpersand { span }
            | ParseError::Lex { span, .. } => *span,
        }
    }
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError::Lex {
            message: e.message,
            span: e.span,
        }
    }
}

/// Parses a complete program. Total and deterministic: the same input
/// yields the same tree or the same error.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.seq()?;
    p.expect_eof()?;
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if &self.peek().kind == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, ParseError> {
        if self.peek().kind == kind {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[kind.describe()]))
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        if self.peek().kind == TokenKind::Eof {
            Ok(())
        } else {
            Err(self.unexpected(&["`;`".into(), "end of input".into()]))
        }
    }

    fn unexpected(&self, expected: &[String]) -> ParseError {
        ParseError::UnexpectedToken {
            expected: expected.to_vec(),
            found: self.peek().kind.describe(),
            span: self.peek().span,
        }
    }

    fn seq(&mut self) -> Result<Expr, ParseError> {
        if self.peek().kind == TokenKind::Let {
            let let_tok = self.advance();
            let name = match self.advance() {
                Token {
                    kind: TokenKind::Ident(name),
                    ..
                } => name,
                other => {
                    return Err(ParseError::UnexpectedToken {
                        expected: vec!["identifier".into()],
                        found: other.kind.describe(),
                        span: other.span,
                    })
                }
            };
            // Both `:=` and `=` introduce a binding.
            if !self.eat(&TokenKind::ColonEq) && !self.eat(&TokenKind::Eq) {
                return Err(self.unexpected(&["`:=`".into(), "`=`".into()]));
            }
            let bound = self.assign()?;
            self.expect(TokenKind::In)?;
            let body = self.seq()?;
            let span = let_tok.span.cover(body.span);
            return Ok(Expr::new(
                ExprKind::Let(name, Box::new(bound), Box::new(body)),
                span,
            ));
        }

        let first = self.assign()?;
        if self.eat(&TokenKind::Semi) {
            let second = self.seq()?;
            let span = first.span.cover(second.span);
            Ok(Expr::new(
                ExprKind::Seq(Box::new(first), Box::new(second)),
                span,
            ))
        } else {
            Ok(first)
        }
    }

    fn assign(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.unary()?;
        if self.peek().kind == TokenKind::ColonEq {
            let target = match lhs.kind {
                ExprKind::Read(target) => target,
                _ => return Err(ParseError::BadAssignTarget { span: lhs.span }),
            };
            self.advance();
            let value = self.assign()?;
            let span = lhs.span.cover(value.span);
            Ok(Expr::new(
                ExprKind::Write(target, Box::new(value)),
                span,
            ))
        } else {
            Ok(lhs)
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().kind {
            TokenKind::Star => {
                let star = self.advance();
                let inner = self.unary()?;
                let span = star.span.cover(inner.span);
                Ok(Expr::new(ExprKind::Read(Box::new(inner)), span))
            }
            TokenKind::Amp => {
                let amp = self.advance();
                if self.eat(&TokenKind::Mut) {
                    self.expect(TokenKind::Star)?;
                    let inner = self.unary()?;
                    let span = amp.span.cover(inner.span);
                    Ok(Expr::new(ExprKind::MutBorrow(Box::new(inner)), span))
                } else if self.eat(&TokenKind::Star) {
                    let inner = self.unary()?;
                    let span = amp.span.cover(inner.span);
                    Ok(Expr::new(ExprKind::ShrBorrow(Box::new(inner)), span))
                } else {
                    Err(ParseError::BareAmpersand { span: amp.span })
                }
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Int(ref n) => {
                self.advance();
                Ok(Expr::new(ExprKind::Int(n.clone()), tok.span))
            }
            TokenKind::Ident(ref name) => {
                self.advance();
                Ok(Expr::new(ExprKind::Var(name.clone()), tok.span))
            }
            TokenKind::New => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let inner = self.seq()?;
                let rparen = self.expect(TokenKind::RParen)?;
                Ok(Expr::new(
                    ExprKind::New(Box::new(inner)),
                    tok.span.cover(rparen.span),
                ))
            }
            TokenKind::Free => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let inner = self.seq()?;
                let rparen = self.expect(TokenKind::RParen)?;
                Ok(Expr::new(
                    ExprKind::Free(Box::new(inner)),
                    tok.span.cover(rparen.span),
                ))
            }
            TokenKind::LParen => {
                self.advance();
                let inner = self.seq()?;
                let rparen = self.expect(TokenKind::RParen)?;
                Ok(Expr { span: tok.span.cover(rparen.span), ..inner })
            }
            _ => Err(self.unexpected(&[
                "integer".into(),
                "identifier".into(),
                "`new`".into(),
                "`free`".into(),
                "`(`".into(),
                "`*`".into(),
                "`&`".into(),
                "`let`".into(),
            ])),
        }
    }
}
