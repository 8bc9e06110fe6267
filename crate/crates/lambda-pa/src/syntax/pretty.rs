//! Canonical single-line rendering. `parse(pretty(e))` reproduces `e`
//! structurally; parentheses are inserted exactly where precedence
//! requires them.

use super::{Expr, ExprKind};
use std::fmt::Write;

// Binding strength: statements (seq/let) < assignment < unary < atoms.
const STMT: u8 = 0;
const ASSIGN: u8 = 1;
const UNARY: u8 = 2;

fn level(e: &Expr) -> u8 {
    match e.kind {
        ExprKind::Seq(..) | ExprKind::Let(..) => STMT,
        ExprKind::Write(..) => ASSIGN,
        ExprKind::Read(_) | ExprKind::MutBorrow(_) | ExprKind::ShrBorrow(_) => UNARY,
        ExprKind::Int(_) | ExprKind::Var(_) | ExprKind::New(_) | ExprKind::Free(_) => 3,
    }
}

/// Renders `e` canonically; `let` bindings always print with `:=`.
pub fn pretty(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, STMT);
    out
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    if level(e) < min {
        out.push('(');
        write_expr(out, e, STMT);
        out.push(')');
        return;
    }
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::New(inner) => {
            out.push_str("new(");
            write_expr(out, inner, STMT);
            out.push(')');
        }
        ExprKind::Free(inner) => {
            out.push_str("free(");
            write_expr(out, inner, STMT);
            out.push(')');
        }
        ExprKind::Read(target) => {
            out.push('*');
            write_expr(out, target, UNARY);
        }
        ExprKind::MutBorrow(target) => {
            out.push_str("&mut *");
            write_expr(out, target, UNARY);
        }
        ExprKind::ShrBorrow(target) => {
            out.push_str("&*");
            write_expr(out, target, UNARY);
        }
        ExprKind::Write(target, value) => {
            out.push('*');
            write_expr(out, target, UNARY);
            out.push_str(" := ");
            write_expr(out, value, ASSIGN);
        }
        ExprKind::Let(name, bound, body) => {
            let _ = write!(out, "let {name} := ");
            write_expr(out, bound, ASSIGN);
            out.push_str(" in ");
            write_expr(out, body, STMT);
        }
        ExprKind::Seq(first, second) => {
            write_expr(out, first, ASSIGN);
            out.push_str("; ");
            write_expr(out, second, STMT);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Expr, ExprKind};
    use super::pretty;
    use num_bigint::BigInt;

    fn roundtrip(src: &str) -> String {
        let e = parse(src).unwrap();
        let printed = pretty(&e);
        assert_eq!(parse(&printed).unwrap(), e, "round-trip changed the tree");
        printed
    }

    #[test]
    fn literal_prints_bare() {
        assert_eq!(roundtrip("42"), "42");
    }

    #[test]
    fn write_prints_with_assign() {
        let e = Expr::synthetic(ExprKind::Write(
            Box::new(Expr::synthetic(ExprKind::Var("x".into()))),
            Box::new(Expr::synthetic(ExprKind::Int(BigInt::from(44)))),
        ));
        assert_eq!(pretty(&e), "*x := 44");
    }

    #[test]
    fn let_free_composition() {
        assert_eq!(
            roundtrip("let x := new(0) in free(x)"),
            "let x := new(0) in free(x)"
        );
    }

    #[test]
    fn nested_seq_left_needs_parens() {
        assert_eq!(roundtrip("(1; 2); 3"), "(1; 2); 3");
    }

    #[test]
    fn let_inside_binding_needs_parens() {
        assert_eq!(
            roundtrip("let x := (let y := 1 in y) in x"),
            "let x := (let y := 1 in y) in x"
        );
    }

    #[test]
    fn let_as_seq_head_needs_parens() {
        assert_eq!(roundtrip("(let x := 1 in x); 2"), "(let x := 1 in x); 2");
    }

    #[test]
    fn deref_of_write_needs_parens() {
        assert_eq!(roundtrip("*(*x := 5)"), "*(*x := 5)");
    }

    #[test]
    fn borrow_chains_print_bare() {
        assert_eq!(roundtrip("&*&*x"), "&*&*x");
        assert_eq!(roundtrip("&mut **x"), "&mut **x");
    }
}
