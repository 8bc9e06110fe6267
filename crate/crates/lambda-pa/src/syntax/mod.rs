//! Abstract syntax, parsing, pretty-printing and scope checking for
//! lambda-PA programs.
//!
//! The surface language models Rust's allocation and borrowing primitives:
//!
//! ```text
//! e ::= n | x | new(e) | free(e) | *e | *e := e | &mut *e | &*e
//!     | let x := e in e | e ; e
//! ```
//!
//! `;` binds loosest and associates to the right, `let ... in` extends
//! maximally to the right, and borrows are the fixed two-token sequences
//! `&mut *` and `&*` (a bare `&x` does not parse). Line comments start
//! with `//`.

mod lexer;
mod parser;
mod pretty;

pub use parser::{parse, ParseError};
pub use pretty::pretty;

use num_bigint::BigInt;
use thiserror::Error;

/// A source location: 1-based line and column plus byte offset and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
    pub len: usize,
}

impl Span {
    /// Span for synthesized nodes (generated programs have no source text).
    pub const SYNTHETIC: Span = Span {
        line: 0,
        col: 0,
        offset: 0,
        len: 0,
    };

    /// Smallest span covering both `self` and `rhs`.
    pub fn cover(self, rhs: Span) -> Span {
        let end = (self.offset + self.len).max(rhs.offset + rhs.len);
        let (line, col, offset) = if rhs.offset < self.offset {
            (rhs.line, rhs.col, rhs.offset)
        } else {
            (self.line, self.col, self.offset)
        };
        Span {
            line,
            col,
            offset,
            len: end - offset,
        }
    }

    /// The text this span covers in `source`.
    pub fn slice<'s>(&self, source: &'s str) -> &'s str {
        source.get(self.offset..self.offset + self.len).unwrap_or("")
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// An expression node. Equality is structural and ignores spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

/// The expression forms of lambda-PA.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Integer literal (arbitrary precision).
    Int(BigInt),
    /// Variable reference.
    Var(String),
    /// `new(e)`: allocate a cell initialized with the value of `e`.
    New(Box<Expr>),
    /// `free(e)`: deallocate the cell behind the reference `e` evaluates to.
    Free(Box<Expr>),
    /// `*e`: read through a reference.
    Read(Box<Expr>),
    /// `*e := e'`: write through a reference.
    Write(Box<Expr>, Box<Expr>),
    /// `&mut *e`: take a mutable borrow of the reference `e` evaluates to.
    MutBorrow(Box<Expr>),
    /// `&*e`: take a shared borrow of the reference `e` evaluates to.
    ShrBorrow(Box<Expr>),
    /// `let x := e in body`.
    Let(String, Box<Expr>, Box<Expr>),
    /// `e ; e'`: sequencing, value of the second.
    Seq(Box<Expr>, Box<Expr>),
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    /// Node without source attribution, for generated programs.
    pub fn synthetic(kind: ExprKind) -> Expr {
        Expr::new(kind, Span::SYNTHETIC)
    }

    /// The span of the statement that finishes last when this expression
    /// runs: descends through `let` bodies and `;` tails.
    pub fn tail_span(&self) -> Span {
        match &self.kind {
            ExprKind::Let(_, _, body) => body.tail_span(),
            ExprKind::Seq(_, second) => second.tail_span(),
            _ => self.span,
        }
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty(self))
    }
}

/// A variable occurrence with no enclosing `let` binding.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unbound variable `{name}` at {span}")]
pub struct ScopeError {
    pub name: String,
    pub span: Span,
}

/// Checks that every variable occurrence is bound by an enclosing `let`.
pub fn check_scopes(e: &Expr) -> Result<(), ScopeError> {
    fn walk(e: &Expr, scope: &mut Vec<String>) -> Result<(), ScopeError> {
        match &e.kind {
            ExprKind::Int(_) => Ok(()),
            ExprKind::Var(name) => {
                if scope.iter().any(|s| s == name) {
                    Ok(())
                } else {
                    Err(ScopeError {
                        name: name.clone(),
                        span: e.span,
                    })
                }
            }
            ExprKind::New(inner)
            | ExprKind::Free(inner)
            | ExprKind::Read(inner)
            | ExprKind::MutBorrow(inner)
            | ExprKind::ShrBorrow(inner) => walk(inner, scope),
            ExprKind::Write(target, value) => {
                walk(target, scope)?;
                walk(value, scope)
            }
            ExprKind::Let(name, bound, body) => {
                walk(bound, scope)?;
                scope.push(name.clone());
                let r = walk(body, scope);
                scope.pop();
                r
            }
            ExprKind::Seq(first, second) => {
                walk(first, scope)?;
                walk(second, scope)
            }
        }
    }
    walk(e, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(n: i64) -> Expr {
        Expr::synthetic(ExprKind::Int(BigInt::from(n)))
    }

    fn var(name: &str) -> Expr {
        Expr::synthetic(ExprKind::Var(name.into()))
    }

    fn let_(name: &str, bound: Expr, body: Expr) -> Expr {
        Expr::synthetic(ExprKind::Let(name.into(), Box::new(bound), Box::new(body)))
    }

    #[test]
    fn scopes_let_bound_var_ok() {
        assert!(check_scopes(&let_("x", int(1), var("x"))).is_ok());
    }

    #[test]
    fn scopes_unbound_var_rejected() {
        let err = check_scopes(&var("x")).unwrap_err();
        assert_eq!(err.name, "x");
    }

    #[test]
    fn scopes_binding_not_visible_in_its_own_bound_expr() {
        let e = let_("x", var("x"), int(0));
        assert!(check_scopes(&e).is_err());
    }

    #[test]
    fn scopes_shadowing_ok() {
        let e = let_("x", int(1), let_("x", int(2), var("x")));
        assert!(check_scopes(&e).is_ok());
    }

    #[test]
    fn scopes_full_shared_listing_ok() {
        let src = "let x := new(42) in\nlet y := &*x in\nlet z := &*x in\n*y;\n*z;\n*x := 43;\nfree(x)";
        let e = parse(src).unwrap();
        assert!(check_scopes(&e).is_ok());
    }

    #[test]
    fn span_cover_joins_ranges() {
        let a = Span {
            line: 1,
            col: 1,
            offset: 0,
            len: 3,
        };
        let b = Span {
            line: 2,
            col: 1,
            offset: 10,
            len: 5,
        };
        let c = a.cover(b);
        assert_eq!((c.offset, c.len, c.line, c.col), (0, 15, 1, 1));
    }
}
