//! Forward symbolic execution of lambda-PA.
//!
//! Each statement must find its required chunks in the symbolic state:
//! writes, frees and mutable borrows need the full points-to fraction,
//! reads and shared borrows any positive fraction. When a required
//! fraction is missing, reference-end view shifts are applied lazily at
//! the failing step (never eagerly at scope exit), chaining through
//! pending borrows deepest-first until the requirement is met. Every
//! applied shift and every completed statement snapshots the state into
//! the trace.

use crate::logic::{Chunk, Fraction, RefId, Shift, ShiftError, SymState, Value};
use crate::syntax::{pretty, Expr, ExprKind, Span};
use thiserror::Error;

/// Why a program was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    WriteWithoutFullPermission,
    ReadWithoutPermission,
    FreeWithoutFullPermission,
    BorrowTargetNotReference,
    UseAfterEnd,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::WriteWithoutFullPermission => "write without full permission",
            RejectReason::ReadWithoutPermission => "read without permission",
            RejectReason::FreeWithoutFullPermission => "free without full permission",
            RejectReason::BorrowTargetNotReference => "target is not a reference",
            RejectReason::UseAfterEnd => "use of a reference whose borrow has ended",
        })
    }
}

/// A failed verification step.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("rejected at {at}: `{stmt}`: {reason} ({detail})")]
pub struct Rejection {
    pub at: Span,
    pub reason: RejectReason,
    /// Canonical rendering of the offending statement.
    pub stmt: String,
    /// What was missing, and which earlier shift consumed it, if any.
    pub detail: String,
}

/// State snapshot recorded after a statement or after one view shift.
///
/// Statement entries carry an empty `shifts` list and the post-step state;
/// shift entries carry exactly the one applied shift, the post-shift
/// state, and the statement that forced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub after_span: Span,
    pub state: SymState,
    pub shifts: Vec<Shift>,
    pub caused_by: Option<String>,
}

/// Outcome of verifying a whole program.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every statement found its chunks. Resources left in the final state
    /// are reported as leaks, never as failures.
    Accepted {
        trace: Vec<TraceEntry>,
        leaks: Vec<Chunk>,
    },
    /// A statement could not find its chunks even after saturation.
    Rejected {
        rejection: Rejection,
        trace: Vec<TraceEntry>,
    },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted { .. })
    }

    pub fn trace(&self) -> &[TraceEntry] {
        match self {
            Verdict::Accepted { trace, .. } | Verdict::Rejected { trace, .. } => trace,
        }
    }
}

/// Verifies a closed program starting from the empty state.
///
/// Precondition: `check_scopes(program)` passed.
pub fn verify(program: &Expr) -> Verdict {
    let mut interp = Interp::new(SymState::new());
    match interp.eval(program) {
        Ok(_) => {
            interp.push_entry(program.tail_span());
            let leaks = interp.state.chunks();
            Verdict::Accepted {
                trace: interp.trace,
                leaks,
            }
        }
        Err(rejection) => Verdict::Rejected {
            rejection,
            trace: interp.trace,
        },
    }
}

/// Symbolically executes `e` from `state`, returning the value and the
/// post-state. Precondition: free variables of `e` are bound in `state`.
pub fn sym_exec(e: &Expr, state: SymState) -> Result<(Value, SymState), Rejection> {
    let (result, _) = sym_exec_traced(e, state);
    result
}

/// [`sym_exec`] that also returns the trace collected along the way.
pub fn sym_exec_traced(
    e: &Expr,
    state: SymState,
) -> (Result<(Value, SymState), Rejection>, Vec<TraceEntry>) {
    let mut interp = Interp::new(state);
    let result = interp.eval(e).map(|v| (v, interp.state.clone()));
    (result, interp.trace)
}

/// Human-readable report for a verdict: the source span, the missing
/// resource, and the shifts attempted.
pub fn explain(verdict: &Verdict) -> String {
    match verdict {
        Verdict::Accepted { trace, leaks } => {
            if leaks.is_empty() {
                "verified; final state empty".to_string()
            } else {
                let state = &trace.last().expect("verify records a final entry").state;
                let noun = if leaks.len() == 1 {
                    "leaked resource"
                } else {
                    "leaked resources"
                };
                let mut out = format!("verified; {} {noun}", leaks.len());
                for leak in leaks {
                    out.push_str("\n  never freed: ");
                    out.push_str(&state.render_chunk(leak));
                }
                out
            }
        }
        Verdict::Rejected { rejection, .. } => rejection.to_string(),
    }
}

struct Interp {
    state: SymState,
    trace: Vec<TraceEntry>,
}

impl Interp {
    fn new(state: SymState) -> Interp {
        Interp {
            state,
            trace: Vec::new(),
        }
    }

    fn push_entry(&mut self, after_span: Span) {
        self.trace.push(TraceEntry {
            after_span,
            state: self.state.clone(),
            shifts: Vec::new(),
            caused_by: None,
        });
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, Rejection> {
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(n.clone())),
            ExprKind::Var(name) => Ok(self
                .state
                .env_lookup(name)
                .unwrap_or_else(|| panic!("unbound variable `{name}`: run check_scopes first"))
                .clone()),
            ExprKind::New(init) => {
                let v = self.eval(init)?;
                Ok(Value::Ref(self.state.alloc(v)))
            }
            ExprKind::Free(target) => {
                let p = self.eval_ref(e, target)?;
                self.saturate_full(e, p, RejectReason::FreeWithoutFullPermission)?;
                // Retiring the cell must not strand any refend: if p is
                // itself a borrower, its fraction is owed back to the
                // lender, so it can never free the cell.
                if let Some((lender, _)) = self.state.ref_end_of(p) {
                    let (p_name, lender_name) = (
                        self.state.display_name(p),
                        self.state.display_name(lender),
                    );
                    return Err(self.reject(
                        e,
                        RejectReason::FreeWithoutFullPermission,
                        format!(
                            "`{p_name}` is a borrow of `{lender_name}`; its fraction is owed \
                             back to the lender, so it cannot consume the cell"
                        ),
                    ));
                }
                self.state.free(p);
                Ok(Value::int(0))
            }
            ExprKind::Read(target) => {
                let p = self.eval_ref(e, target)?;
                if self.state.points_to(p).is_none() {
                    self.recover_any(e, p, RejectReason::ReadWithoutPermission)?;
                }
                let (_, value) = self.state.points_to(p).expect("recovered above");
                Ok(value.clone())
            }
            ExprKind::Write(target, value) => {
                let p = self.eval_ref(e, target)?;
                let v = self.eval(value)?;
                self.saturate_full(e, p, RejectReason::WriteWithoutFullPermission)?;
                self.state.write(p, v);
                Ok(Value::int(0))
            }
            ExprKind::MutBorrow(target) => {
                let p = self.eval_ref(e, target)?;
                self.saturate_full(e, p, RejectReason::UseAfterEnd)?;
                let r = self
                    .state
                    .mutable_borrow(p)
                    .expect("saturated to the full fraction");
                Ok(Value::Ref(r))
            }
            ExprKind::ShrBorrow(target) => {
                let p = self.eval_ref(e, target)?;
                if self.state.points_to(p).is_none() {
                    self.recover_any(e, p, RejectReason::UseAfterEnd)?;
                }
                let r = self.state.shared_borrow(p).expect("chunk present");
                Ok(Value::Ref(r))
            }
            ExprKind::Let(name, bound, body) => {
                let v = self.eval(bound)?;
                if let Value::Ref(r) = &v {
                    self.state.name_ref(*r, name);
                }
                let shadowed = self.state.bind(name, v);
                self.push_entry(e.span);
                let result = self.eval(body);
                self.state.unbind(name, shadowed);
                result
            }
            ExprKind::Seq(first, second) => {
                self.eval(first)?;
                self.push_entry(first.span);
                self.eval(second)
            }
        }
    }

    fn eval_ref(&mut self, op: &Expr, target: &Expr) -> Result<RefId, Rejection> {
        match self.eval(target)? {
            Value::Ref(r) => Ok(r),
            Value::Int(n) => Err(self.reject(
                op,
                RejectReason::BorrowTargetNotReference,
                format!("the target evaluates to the integer {n}, not a reference"),
            )),
        }
    }

    /// Saturates `p` up to the full fraction, recording one trace entry per
    /// applied shift; maps failure to a rejection of `op`.
    fn saturate_full(
        &mut self,
        op: &Expr,
        p: RefId,
        reason: RejectReason,
    ) -> Result<(), Rejection> {
        let result = {
            let trace = &mut self.trace;
            let span = op.span;
            let stmt = pretty(op);
            self.state
                .saturate_end_with(p, &Fraction::one(), &mut |state, shift| {
                    trace.push(TraceEntry {
                        after_span: span,
                        state: state.clone(),
                        shifts: vec![shift.clone()],
                        caused_by: Some(stmt.clone()),
                    })
                })
        };
        match result {
            Ok(_) => Ok(()),
            Err(err) => {
                let detail = self.describe_failure(p, &err);
                Err(self.reject(op, reason, detail))
            }
        }
    }

    /// Recovers any positive fraction for `p` (reads, shared borrows).
    fn recover_any(&mut self, op: &Expr, p: RefId, reason: RejectReason) -> Result<(), Rejection> {
        let result = {
            let trace = &mut self.trace;
            let span = op.span;
            let stmt = pretty(op);
            self.state.recover_points_to_with(p, &mut |state, shift| {
                trace.push(TraceEntry {
                    after_span: span,
                    state: state.clone(),
                    shifts: vec![shift.clone()],
                    caused_by: Some(stmt.clone()),
                })
            })
        };
        match result {
            Ok(_) => Ok(()),
            Err(err) => {
                let detail = self.describe_failure(p, &err);
                Err(self.reject(op, reason, detail))
            }
        }
    }

    fn reject(&self, at: &Expr, reason: RejectReason, detail: String) -> Rejection {
        Rejection {
            at: at.span,
            reason,
            stmt: pretty(at),
            detail,
        }
    }

    fn describe_failure(&self, p: RefId, err: &ShiftError) -> String {
        let name = self.state.display_name(p);
        let mut msg = match err {
            ShiftError::Unrecoverable { needed, reached } => format!(
                "reference `{name}` holds {reached} of the required {needed} \
                 and no pending borrow can return more"
            ),
            other => format!("reference `{name}`: {other}"),
        };
        // If this reference was itself a borrower whose refend was consumed
        // earlier, point at the shift that ended it.
        for entry in &self.trace {
            for shift in &entry.shifts {
                if shift.borrower == p {
                    let lender = self.state.display_name(shift.lender);
                    msg.push_str(&format!(
                        "; its borrow of `{lender}` was ended by the view shift at line {}",
                        entry.after_span.line
                    ));
                    if let Some(cause) = &entry.caused_by {
                        msg.push_str(&format!(" forced by `{cause}`"));
                    }
                }
            }
        }
        msg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    const MUT_LISTING: &str =
        "let x := new(42) in\nlet y := &mut *x in\n*y := 43;\n*x := 44;\nfree(x)";
    const UB_LISTING: &str =
        "let x = new(42) in\nlet y = &mut *x in\n*y := 43;\n*x := 44;\n*y := 5";
    const SHARED_LISTING: &str =
        "let x := new(42) in\nlet y := &*x in\nlet z := &*x in\n*y;\n*z;\n*x := 43;\nfree(x)";

    fn verify_src(src: &str) -> Verdict {
        verify(&parse(src).unwrap())
    }

    /// Fraction held by the reference displayed as `name`, as a string;
    /// "-" when it has no chunk.
    fn frac_by_name(state: &SymState, name: &str) -> String {
        let id = state
            .names()
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(r, _)| *r);
        id.and_then(|r| state.frac_of(r))
            .map_or("-".into(), |f| f.to_string())
    }

    #[test]
    fn trivial_alloc_free_accepts_with_empty_state() {
        match verify_src("let x := new(42) in free(x)") {
            Verdict::Accepted { trace, leaks } => {
                assert!(leaks.is_empty());
                assert!(trace.last().unwrap().state.is_empty());
            }
            v => panic!("expected acceptance, got {v:?}"),
        }
    }

    #[test]
    fn mutable_listing_accepts_with_paper_trace() {
        let verdict = verify_src(MUT_LISTING);
        let Verdict::Accepted { trace, leaks } = &verdict else {
            panic!("expected acceptance, got {verdict:?}");
        };
        assert!(leaks.is_empty());
        // let x; let y; *y := 43; vs; *x := 44; final
        assert_eq!(trace.len(), 6);
        let rendered: Vec<String> = trace.iter().map(|t| t.state.to_string()).collect();
        assert_eq!(rendered[0], "{ x |-> 42 }");
        assert_eq!(rendered[1], "{ y |-> 42 * refend(y, x, 1) }");
        assert_eq!(rendered[2], "{ y |-> 43 * refend(y, x, 1) }");
        assert_eq!(rendered[3], "{ x |-> 43 }");
        assert_eq!(rendered[4], "{ x |-> 44 }");
        assert_eq!(rendered[5], "{ }");
        // The single shift is recorded on the post-shift entry, forced by
        // the write through x on line 4.
        assert_eq!(trace[3].shifts.len(), 1);
        assert_eq!(trace[3].after_span.line, 4);
        assert_eq!(trace[3].caused_by.as_deref(), Some("*x := 44"));
        let total_shifts: usize = trace.iter().map(|t| t.shifts.len()).sum();
        assert_eq!(total_shifts, 1);
    }

    #[test]
    fn ub_listing_rejects_at_final_write() {
        let verdict = verify_src(UB_LISTING);
        let Verdict::Rejected { rejection, trace } = &verdict else {
            panic!("expected rejection, got {verdict:?}");
        };
        assert_eq!(rejection.reason, RejectReason::WriteWithoutFullPermission);
        assert_eq!(rejection.stmt, "*y := 5");
        assert_eq!(rejection.at.line, 5);
        assert!(rejection.detail.contains("its borrow of `x` was ended"));
        // Trace so far covers everything up to and including `*x := 44`.
        assert_eq!(trace.len(), 5);
        assert_eq!(trace.last().unwrap().state.to_string(), "{ x |-> 44 }");
    }

    #[test]
    fn shared_listing_walks_the_fraction_ladder() {
        let verdict = verify_src(SHARED_LISTING);
        let Verdict::Accepted { trace, leaks } = &verdict else {
            panic!("expected acceptance, got {verdict:?}");
        };
        assert!(leaks.is_empty());
        let x_fracs: Vec<String> = trace
            .iter()
            .map(|t| frac_by_name(&t.state, "x"))
            .collect();
        assert_eq!(
            x_fracs,
            vec!["1", "1/2", "1/4", "1/4", "1/4", "3/4", "1", "1", "-"]
        );
        // Reads never force shifts; both shifts happen lazily at the write.
        let shift_lines: Vec<u32> = trace
            .iter()
            .filter(|t| !t.shifts.is_empty())
            .map(|t| t.after_span.line)
            .collect();
        assert_eq!(shift_lines, vec![6, 6]);
        // While live, y holds 1/2 and z holds 1/4.
        assert_eq!(frac_by_name(&trace[2].state, "y"), "1/2");
        assert_eq!(frac_by_name(&trace[2].state, "z"), "1/4");
    }

    #[test]
    fn leak_is_a_warning_not_a_rejection() {
        match verify_src("let x := new(1) in *x") {
            Verdict::Accepted { leaks, .. } => {
                assert_eq!(leaks.len(), 1);
            }
            v => panic!("expected acceptance, got {v:?}"),
        }
    }

    #[test]
    fn read_after_free_rejects() {
        let verdict = verify_src("let x := new(1) in (free(x); *x)");
        let Verdict::Rejected { rejection, .. } = &verdict else {
            panic!("expected rejection, got {verdict:?}");
        };
        assert_eq!(rejection.reason, RejectReason::ReadWithoutPermission);
        assert_eq!(rejection.stmt, "*x");
    }

    #[test]
    fn double_free_rejects() {
        let verdict = verify_src("let x := new(1) in (free(x); free(x))");
        let Verdict::Rejected { rejection, .. } = &verdict else {
            panic!("expected rejection");
        };
        assert_eq!(rejection.reason, RejectReason::FreeWithoutFullPermission);
    }

    #[test]
    fn deref_of_integer_rejects() {
        let verdict = verify_src("*5");
        let Verdict::Rejected { rejection, .. } = &verdict else {
            panic!("expected rejection");
        };
        assert_eq!(rejection.reason, RejectReason::BorrowTargetNotReference);
    }

    #[test]
    fn write_through_shared_borrow_rejects() {
        // The borrower's fraction can never reach 1, so the write rule can
        // never apply through it.
        let verdict = verify_src("let x := new(1) in let y := &*x in *y := 2");
        let Verdict::Rejected { rejection, .. } = &verdict else {
            panic!("expected rejection");
        };
        assert_eq!(rejection.reason, RejectReason::WriteWithoutFullPermission);
        assert_eq!(rejection.stmt, "*y := 2");
    }

    #[test]
    fn reading_lender_ends_a_mutable_borrow() {
        // Reading through x while y's borrow is live forces y's end; using
        // y afterwards then fails.
        let verdict = verify_src("let x := new(1) in let y := &mut *x in (*x; *y)");
        let Verdict::Rejected { rejection, .. } = &verdict else {
            panic!("expected rejection");
        };
        assert_eq!(rejection.reason, RejectReason::ReadWithoutPermission);
        assert_eq!(rejection.stmt, "*y");
    }

    #[test]
    fn mut_borrow_of_shared_lender_force_ends_the_shared_borrows() {
        let verdict =
            verify_src("let x := new(1) in let y := &*x in let m := &mut *x in (*m; free(x))");
        assert!(verdict.is_accepted(), "got {verdict:?}");
    }

    #[test]
    fn verify_is_deterministic() {
        let e = parse(SHARED_LISTING).unwrap();
        assert_eq!(verify(&e), verify(&e));
    }

    #[test]
    fn sym_exec_preserves_disjoint_frames() {
        let program = parse("let p := new(1) in let q := &mut *p in (*p := 5; free(p))").unwrap();
        let empty = SymState::new();
        let mut framed = SymState::new();
        let f = framed.alloc(Value::int(99));
        framed.name_ref(f, "frame");

        let (r1, t1) = sym_exec_traced(&program, empty);
        let (r2, t2) = sym_exec_traced(&program, framed.clone());
        assert!(r1.is_ok() && r2.is_ok());

        // Identical shift sequences by display name.
        let shifts = |t: &[TraceEntry]| -> Vec<(String, String, String)> {
            t.iter()
                .flat_map(|e| {
                    e.shifts
                        .iter()
                        .map(|s| {
                            (
                                e.state.display_name(s.borrower),
                                e.state.display_name(s.lender),
                                s.frac.to_string(),
                            )
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        assert_eq!(shifts(&t1), shifts(&t2));

        // The frame chunk survives untouched and the program's own
        // footprint matches the unframed run.
        let (_, s2) = r2.unwrap();
        assert_eq!(s2.frac_of(f).map(|fr| fr.to_string()), Some("1".into()));
        let (_, s1) = r1.unwrap();
        assert!(s1.is_empty());
        assert_eq!(s2.chunks().len(), 1);
    }

    #[test]
    fn explain_accepted_and_leaky_programs() {
        assert_eq!(
            explain(&verify_src("let x := new(42) in free(x)")),
            "verified; final state empty"
        );
        let report = explain(&verify_src("let x := new(1) in *x"));
        assert!(report.starts_with("verified; 1 leaked resource"));
        assert!(report.contains("x |-> 1"));
    }

    #[test]
    fn explain_rejected_names_the_write_and_the_ended_borrow() {
        let report = explain(&verify_src(UB_LISTING));
        assert!(report.contains("*y := 5"));
        assert!(report.contains("write without full permission"));
        assert!(report.contains("its borrow of `x` was ended"));
        assert!(report.contains("line 4"));
    }

    #[test]
    fn conservation_holds_at_every_trace_entry() {
        for src in [MUT_LISTING, SHARED_LISTING, "let x := new(1) in *x"] {
            let verdict = verify_src(src);
            for entry in verdict.trace() {
                entry.state.check_conservation().unwrap();
            }
        }
    }
}
