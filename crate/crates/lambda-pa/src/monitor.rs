//! Concrete big-step interpreter with a fractional-capability ghost state.
//!
//! Values live in a real heap keyed by cell; permissions live in a ghost
//! capability table keyed by reference identity. Two references to the
//! same cell are distinct capabilities with distinct fractions, which is
//! what makes stale-borrow writes detectable at runtime. The monitor
//! enforces the same discipline as the static verifier, with the same
//! lazy strategy: a write or free through `p` first force-ends pending
//! borrows rooted at `p` (deepest first, oldest sibling first), then
//! requires the full fraction; a read requires any positive fraction.
//!
//! This module is deliberately implemented independently of the symbolic
//! state machinery: it is the oracle the verifier is differentially
//! tested against.

use crate::logic::{CellId, ConservationError, Fraction, RefId, Shift, Value};
use crate::syntax::{pretty, Expr, ExprKind, Span};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Runtime fault classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    /// A write, free or mutable borrow could not obtain exclusivity.
    AliasViolation,
    /// Use of a reference whose capability was revoked or whose cell is gone.
    UseAfterEnd,
    /// Free of an already-freed cell.
    DoubleFree,
    /// The operand is not a (known) reference.
    UnboundRef,
}

impl std::fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RuntimeErrorKind::AliasViolation => "aliasing violation",
            RuntimeErrorKind::UseAfterEnd => "use after end",
            RuntimeErrorKind::DoubleFree => "double free",
            RuntimeErrorKind::UnboundRef => "not a reference",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("runtime error at {span}: `{stmt}`: {kind}: {message}")]
pub struct RuntimeError {
    pub kind: RuntimeErrorKind,
    pub span: Span,
    pub stmt: String,
    pub message: String,
}

/// Runtime heap plus the ghost capability table mirroring the logic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConcreteState {
    heap: BTreeMap<CellId, Value>,
    caps: BTreeMap<RefId, (CellId, Fraction)>,
    pending: BTreeMap<RefId, (RefId, Fraction)>,
    env: BTreeMap<String, Value>,
    names: BTreeMap<RefId, String>,
    ref_cell: BTreeMap<RefId, CellId>,
    freed: BTreeSet<CellId>,
    next_gen: u64,
    next_cell: u64,
}

/// Snapshot recorded after a statement or after one forced borrow end.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorEntry {
    pub after_span: Span,
    pub state: ConcreteState,
    pub shifts: Vec<Shift>,
}

impl ConcreteState {
    /// Live capabilities: (reference, cell, fraction), ordered by reference.
    pub fn caps(&self) -> impl Iterator<Item = (RefId, CellId, &Fraction)> + '_ {
        self.caps.iter().map(|(r, (c, f))| (*r, *c, f))
    }

    /// Pending borrow ends: (borrower, lender, fraction), ordered by borrower.
    pub fn pending(&self) -> impl Iterator<Item = (RefId, RefId, &Fraction)> + '_ {
        self.pending.iter().map(|(b, (l, f))| (*b, *l, f))
    }

    pub fn heap_value(&self, cell: CellId) -> Option<&Value> {
        self.heap.get(&cell)
    }

    pub fn display_name(&self, r: RefId) -> String {
        self.names
            .get(&r)
            .cloned()
            .unwrap_or_else(|| format!("%{}", r.generation()))
    }

    pub fn names(&self) -> &BTreeMap<RefId, String> {
        &self.names
    }

    pub fn cell_of(&self, r: RefId) -> Option<CellId> {
        self.ref_cell.get(&r).copied()
    }

    /// Per live cell, capability fractions must sum to exactly 1; every
    /// pending end must link same-cell references and be backed by its
    /// borrower's recoverable fraction.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let fail = |msg: String| Err(ConservationError(msg));
        for (cell, _) in &self.heap {
            let mut sum: Option<Fraction> = None;
            for (_, f) in self.caps.values().filter(|(c, _)| c == cell) {
                sum = Some(match sum {
                    None => f.clone(),
                    Some(acc) => acc.checked_add(f).map_err(|e| {
                        ConservationError(format!(
                            "cell #{} capability fractions exceed 1: {e}",
                            cell.index()
                        ))
                    })?,
                });
            }
            match sum {
                None => return fail(format!("live cell #{} has no capability", cell.index())),
                Some(total) if !total.is_one() => {
                    return fail(format!(
                        "cell #{} capability fractions sum to {total}, not 1",
                        cell.index()
                    ))
                }
                Some(_) => {}
            }
        }
        for (cap_ref, (cell, _)) in &self.caps {
            if !self.heap.contains_key(cell) {
                return fail(format!(
                    "capability {} points at dead cell #{}",
                    self.display_name(*cap_ref),
                    cell.index()
                ));
            }
        }
        for (borrower, (lender, q)) in &self.pending {
            if borrower == lender {
                return fail("pending end with borrower = lender".into());
            }
            let (bc, lc) = (self.ref_cell.get(borrower), self.ref_cell.get(lender));
            if bc.is_none() || bc != lc {
                return fail("pending end links references of different cells".into());
            }
            if self.freed.contains(bc.unwrap()) {
                return fail("pending end on a freed cell".into());
            }
            // Fraction the borrower can eventually supply: its own
            // capability plus everything owed to it.
            let mut backed = self.caps.get(borrower).map(|(_, f)| f.clone());
            for (_, (_, f)) in self.pending.iter().filter(|(_, (l, _))| l == borrower) {
                backed = Some(match backed {
                    None => f.clone(),
                    Some(acc) => acc.checked_add(f).unwrap_or_else(|_| Fraction::one()),
                });
            }
            if backed.as_ref() < Some(q) {
                return fail(format!(
                    "pending end of {} is not backed",
                    self.display_name(*borrower)
                ));
            }
        }
        Ok(())
    }

    fn fresh_ref(&mut self, cell: CellId) -> RefId {
        self.next_gen += 1;
        let r = RefId::from_generation(self.next_gen);
        self.ref_cell.insert(r, cell);
        r
    }

    fn alloc(&mut self, value: Value) -> RefId {
        let cell = CellId::from_index(self.next_cell);
        self.next_cell += 1;
        self.heap.insert(cell, value);
        let r = self.fresh_ref(cell);
        self.caps.insert(r, (cell, Fraction::one()));
        r
    }

    /// Revokes `borrower`'s capability portion and credits its lender.
    /// Pre: the borrower currently holds at least the pending fraction.
    fn force_end(&mut self, borrower: RefId) -> Shift {
        let (lender, q) = self.pending.remove(&borrower).expect("pending end exists");
        let (cell, have) = self.caps.get(&borrower).cloned().expect("borrower has a capability");
        match have.checked_sub(&q) {
            Some(rest) => {
                self.caps.insert(borrower, (cell, rest));
            }
            None => {
                assert_eq!(have, q, "borrower holds at least the pending fraction");
                self.caps.remove(&borrower);
            }
        }
        match self.caps.get(&lender).cloned() {
            Some((lcell, lfrac)) => {
                let sum = lfrac
                    .checked_add(&q)
                    .expect("capability fractions of one cell sum to at most 1");
                self.caps.insert(lender, (lcell, sum));
            }
            None => {
                self.caps.insert(lender, (cell, q.clone()));
            }
        }
        Shift {
            borrower,
            lender,
            frac: q,
        }
    }

    /// Pending borrowers of `lender`, oldest first. Mirrors the verifier's
    /// ending order so both components fault at identical spans.
    fn borrowers_of(&self, lender: RefId) -> Vec<RefId> {
        self.pending
            .iter()
            .filter(|(_, (l, _))| *l == lender)
            .map(|(b, _)| *b)
            .collect()
    }

    fn next_endable(&self, lender: RefId) -> Option<RefId> {
        let mut current = *self.borrowers_of(lender).first()?;
        let mut seen = BTreeSet::new();
        loop {
            if !seen.insert(current) {
                return None;
            }
            let (_, q) = &self.pending[&current];
            if self.caps.get(&current).is_some_and(|(_, f)| f >= q) {
                return Some(current);
            }
            current = *self.borrowers_of(current).first()?;
        }
    }

    fn frac_of(&self, r: RefId) -> Option<&Fraction> {
        self.caps.get(&r).map(|(_, f)| f)
    }
}

/// Executes a closed program under the monitor.
///
/// Precondition: `check_scopes(program)` passed.
pub fn run(program: &Expr) -> Result<Value, RuntimeError> {
    run_traced(program).0
}

/// [`run`] that also returns per-statement (and per-forced-end) snapshots.
pub fn run_traced(program: &Expr) -> (Result<Value, RuntimeError>, Vec<MonitorEntry>) {
    let mut interp = MonitorInterp {
        state: ConcreteState::default(),
        trace: Vec::new(),
    };
    let result = interp.eval(program);
    if result.is_ok() {
        interp.push_entry(program.tail_span());
    }
    (result, interp.trace)
}

struct MonitorInterp {
    state: ConcreteState,
    trace: Vec<MonitorEntry>,
}

enum Need {
    Full,
    Any,
}

impl MonitorInterp {
    fn push_entry(&mut self, after_span: Span) {
        self.trace.push(MonitorEntry {
            after_span,
            state: self.state.clone(),
            shifts: Vec::new(),
        });
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, RuntimeError> {
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(n.clone())),
            ExprKind::Var(name) => match self.state.env.get(name) {
                Some(v) => Ok(v.clone()),
                None => Err(self.fault(
                    e,
                    RuntimeErrorKind::UnboundRef,
                    format!("variable `{name}` is not bound"),
                )),
            },
            ExprKind::New(init) => {
                let v = self.eval(init)?;
                Ok(Value::Ref(self.state.alloc(v)))
            }
            ExprKind::Free(target) => {
                let p = self.eval_ref(e, target)?;
                self.ensure(e, p, Need::Full, FaultCtx::Free)?;
                // A borrower's capability is owed back to its lender; it
                // cannot consume the cell.
                if let Some((lender, _)) = self.state.pending.get(&p) {
                    let message = format!(
                        "`{}` is a borrow of `{}` and cannot free the cell",
                        self.state.display_name(p),
                        self.state.display_name(*lender)
                    );
                    return Err(self.fault(e, RuntimeErrorKind::AliasViolation, message));
                }
                let (cell, _) = self.state.caps.remove(&p).expect("full capability");
                self.state.heap.remove(&cell);
                self.state.freed.insert(cell);
                Ok(Value::int(0))
            }
            ExprKind::Read(target) => {
                let p = self.eval_ref(e, target)?;
                self.ensure(e, p, Need::Any, FaultCtx::Read)?;
                let (cell, _) = self.state.caps[&p];
                Ok(self.state.heap[&cell].clone())
            }
            ExprKind::Write(target, value) => {
                let p = self.eval_ref(e, target)?;
                let v = self.eval(value)?;
                self.ensure(e, p, Need::Full, FaultCtx::Write)?;
                let (cell, _) = self.state.caps[&p];
                self.state.heap.insert(cell, v);
                Ok(Value::int(0))
            }
            ExprKind::MutBorrow(target) => {
                let p = self.eval_ref(e, target)?;
                self.ensure(e, p, Need::Full, FaultCtx::Borrow)?;
                let (cell, _) = self.state.caps.remove(&p).expect("full capability");
                let r = self.state.fresh_ref(cell);
                self.state.caps.insert(r, (cell, Fraction::one()));
                self.state.pending.insert(r, (p, Fraction::one()));
                Ok(Value::Ref(r))
            }
            ExprKind::ShrBorrow(target) => {
                let p = self.eval_ref(e, target)?;
                self.ensure(e, p, Need::Any, FaultCtx::Borrow)?;
                let (cell, frac) = self.state.caps[&p].clone();
                let half = frac.half();
                self.state.caps.insert(p, (cell, half.clone()));
                let r = self.state.fresh_ref(cell);
                self.state.caps.insert(r, (cell, half.clone()));
                self.state.pending.insert(r, (p, half));
                Ok(Value::Ref(r))
            }
            ExprKind::Let(name, bound, body) => {
                let v = self.eval(bound)?;
                if let Value::Ref(r) = &v {
                    self.state.names.entry(*r).or_insert_with(|| name.clone());
                }
                let shadowed = self.state.env.insert(name.clone(), v);
                self.push_entry(e.span);
                let result = self.eval(body);
                match shadowed {
                    Some(v) => {
                        self.state.env.insert(name.clone(), v);
                    }
                    None => {
                        self.state.env.remove(name);
                    }
                }
                result
            }
            ExprKind::Seq(first, second) => {
                self.eval(first)?;
                self.push_entry(first.span);
                self.eval(second)
            }
        }
    }

    fn eval_ref(&mut self, op: &Expr, target: &Expr) -> Result<RefId, RuntimeError> {
        match self.eval(target)? {
            Value::Ref(r) => Ok(r),
            Value::Int(n) => Err(self.fault(
                op,
                RuntimeErrorKind::UnboundRef,
                format!("the target evaluates to the integer {n}, not a reference"),
            )),
        }
    }

    /// Force-ends borrows rooted at `p` until the requirement holds,
    /// recording one trace entry per forced end.
    fn ensure(&mut self, op: &Expr, p: RefId, need: Need, ctx: FaultCtx) -> Result<(), RuntimeError> {
        loop {
            let satisfied = match need {
                Need::Full => self.state.frac_of(p).is_some_and(Fraction::is_one),
                Need::Any => self.state.caps.contains_key(&p),
            };
            if satisfied {
                return Ok(());
            }
            let Some(leaf) = self.state.next_endable(p) else {
                return Err(self.capability_fault(op, p, ctx));
            };
            let shift = self.state.force_end(leaf);
            self.trace.push(MonitorEntry {
                after_span: op.span,
                state: self.state.clone(),
                shifts: vec![shift],
            });
        }
    }

    fn capability_fault(&self, op: &Expr, p: RefId, ctx: FaultCtx) -> RuntimeError {
        let name = self.state.display_name(p);
        let cell_freed = self
            .state
            .ref_cell
            .get(&p)
            .is_some_and(|c| self.state.freed.contains(c));
        let (kind, message) = if cell_freed {
            match ctx {
                FaultCtx::Free => (
                    RuntimeErrorKind::DoubleFree,
                    format!("the cell behind `{name}` was already freed"),
                ),
                _ => (
                    RuntimeErrorKind::UseAfterEnd,
                    format!("the cell behind `{name}` was freed"),
                ),
            }
        } else {
            match ctx {
                FaultCtx::Read => (
                    RuntimeErrorKind::UseAfterEnd,
                    format!("capability of `{name}` was revoked when its borrow ended"),
                ),
                _ => (
                    RuntimeErrorKind::AliasViolation,
                    format!("`{name}` cannot recover an exclusive capability"),
                ),
            }
        };
        RuntimeError {
            kind,
            span: op.span,
            stmt: pretty(op),
            message,
        }
    }

    fn fault(&self, op: &Expr, kind: RuntimeErrorKind, message: String) -> RuntimeError {
        RuntimeError {
            kind,
            span: op.span,
            stmt: pretty(op),
            message,
        }
    }
}

#[derive(Clone, Copy)]
enum FaultCtx {
    Read,
    Write,
    Free,
    Borrow,
}

/// Executes a program with plain heap semantics and no capability ghost
/// state: aliasing-discipline violations go undetected, only hard memory
/// faults (dangling access, double free, non-reference targets) error.
pub fn run_unchecked(program: &Expr) -> Result<Value, RuntimeError> {
    struct Raw {
        heap: BTreeMap<CellId, Value>,
        env: BTreeMap<String, Value>,
        ref_cell: BTreeMap<RefId, CellId>,
        next_gen: u64,
        next_cell: u64,
    }

    impl Raw {
        fn eval(&mut self, e: &Expr) -> Result<Value, RuntimeError> {
            let fault = |kind, span, stmt: &Expr, message: String| RuntimeError {
                kind,
                span,
                stmt: pretty(stmt),
                message,
            };
            match &e.kind {
                ExprKind::Int(n) => Ok(Value::Int(n.clone())),
                ExprKind::Var(name) => self.env.get(name).cloned().ok_or_else(|| {
                    fault(
                        RuntimeErrorKind::UnboundRef,
                        e.span,
                        e,
                        format!("variable `{name}` is not bound"),
                    )
                }),
                ExprKind::New(init) => {
                    let v = self.eval(init)?;
                    let cell = CellId::from_index(self.next_cell);
                    self.next_cell += 1;
                    self.heap.insert(cell, v);
                    self.next_gen += 1;
                    let r = RefId::from_generation(self.next_gen);
                    self.ref_cell.insert(r, cell);
                    Ok(Value::Ref(r))
                }
                ExprKind::Free(target) => {
                    let cell = self.cell(e, target)?;
                    if self.heap.remove(&cell).is_none() {
                        return Err(fault(
                            RuntimeErrorKind::DoubleFree,
                            e.span,
                            e,
                            "cell already freed".into(),
                        ));
                    }
                    Ok(Value::int(0))
                }
                ExprKind::Read(target) => {
                    let cell = self.cell(e, target)?;
                    self.heap.get(&cell).cloned().ok_or_else(|| {
                        fault(
                            RuntimeErrorKind::UseAfterEnd,
                            e.span,
                            e,
                            "read from a freed cell".into(),
                        )
                    })
                }
                ExprKind::Write(target, value) => {
                    let cell = self.cell(e, target)?;
                    let v = self.eval(value)?;
                    if !self.heap.contains_key(&cell) {
                        return Err(fault(
                            RuntimeErrorKind::UseAfterEnd,
                            e.span,
                            e,
                            "write to a freed cell".into(),
                        ));
                    }
                    self.heap.insert(cell, v);
                    Ok(Value::int(0))
                }
                ExprKind::MutBorrow(target) | ExprKind::ShrBorrow(target) => {
                    // Without the ghost discipline a borrow is just a new
                    // alias of the same cell.
                    let cell = self.cell(e, target)?;
                    self.next_gen += 1;
                    let r = RefId::from_generation(self.next_gen);
                    self.ref_cell.insert(r, cell);
                    Ok(Value::Ref(r))
                }
                ExprKind::Let(name, bound, body) => {
                    let v = self.eval(bound)?;
                    let shadowed = self.env.insert(name.clone(), v);
                    let result = self.eval(body);
                    match shadowed {
                        Some(v) => {
                            self.env.insert(name.clone(), v);
                        }
                        None => {
                            self.env.remove(name);
                        }
                    }
                    result
                }
                ExprKind::Seq(first, second) => {
                    self.eval(first)?;
                    self.eval(second)
                }
            }
        }

        fn cell(&mut self, op: &Expr, target: &Expr) -> Result<CellId, RuntimeError> {
            match self.eval(target)? {
                Value::Ref(r) => Ok(self.ref_cell[&r]),
                Value::Int(n) => Err(RuntimeError {
                    kind: RuntimeErrorKind::UnboundRef,
                    span: op.span,
                    stmt: pretty(op),
                    message: format!("the target evaluates to the integer {n}, not a reference"),
                }),
            }
        }
    }

    Raw {
        heap: BTreeMap::new(),
        env: BTreeMap::new(),
        ref_cell: BTreeMap::new(),
        next_gen: 0,
        next_cell: 0,
    }
    .eval(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;
    use crate::verifier::{verify, Verdict};

    const MUT_LISTING: &str =
        "let x := new(42) in\nlet y := &mut *x in\n*y := 43;\n*x := 44;\nfree(x)";
    const UB_LISTING: &str =
        "let x = new(42) in\nlet y = &mut *x in\n*y := 43;\n*x := 44;\n*y := 5";
    const SHARED_LISTING: &str =
        "let x := new(42) in\nlet y := &*x in\nlet z := &*x in\n*y;\n*z;\n*x := 43;\nfree(x)";

    fn frac_by_name(state: &ConcreteState, name: &str) -> String {
        let id = state
            .names()
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(r, _)| *r);
        id.and_then(|r| state.frac_of(r))
            .map_or("-".into(), |f| f.to_string())
    }

    #[test]
    fn trivial_read_returns_the_heap_value() {
        let e = parse("let x := new(7) in *x").unwrap();
        assert_eq!(run(&e), Ok(Value::int(7)));
    }

    #[test]
    fn ub_listing_faults_at_the_final_write() {
        let e = parse(UB_LISTING).unwrap();
        let err = run(&e).unwrap_err();
        assert_eq!(err.kind, RuntimeErrorKind::AliasViolation);
        assert_eq!(err.stmt, "*y := 5");
        assert_eq!(err.span.line, 5);
    }

    #[test]
    fn ub_listing_runs_clean_without_the_monitor() {
        let e = parse(UB_LISTING).unwrap();
        assert_eq!(run_unchecked(&e), Ok(Value::int(0)));
    }

    #[test]
    fn shared_listing_terminates_normally() {
        let e = parse(SHARED_LISTING).unwrap();
        let (result, snapshots) = run_traced(&e);
        assert_eq!(result, Ok(Value::int(0)));
        // Heap holds 43 just before the final free.
        let before_free = &snapshots[snapshots.len() - 2].state;
        let (_, cell, _) = before_free.caps().next().unwrap();
        assert_eq!(before_free.heap_value(cell), Some(&Value::int(43)));
        let last = &snapshots.last().unwrap().state;
        assert!(last.caps().next().is_none());
    }

    #[test]
    fn mut_listing_snapshot_fractions_for_x() {
        let e = parse(MUT_LISTING).unwrap();
        let (result, snapshots) = run_traced(&e);
        assert!(result.is_ok());
        // Statement snapshots only (skip forced-end entries).
        let per_stmt: Vec<String> = snapshots
            .iter()
            .filter(|s| s.shifts.is_empty())
            .map(|s| frac_by_name(&s.state, "x"))
            .collect();
        assert_eq!(per_stmt, vec!["1", "-", "-", "1", "-"]);
    }

    #[test]
    fn empty_effect_program_has_a_single_snapshot() {
        let e = parse("42").unwrap();
        let (result, snapshots) = run_traced(&e);
        assert_eq!(result, Ok(Value::int(42)));
        assert_eq!(snapshots.len(), 1);
        assert!(snapshots[0].state.heap.is_empty());
    }

    #[test]
    fn read_after_free_is_use_after_end() {
        let e = parse("let x := new(1) in (free(x); *x)").unwrap();
        let err = run(&e).unwrap_err();
        assert_eq!(err.kind, RuntimeErrorKind::UseAfterEnd);
    }

    #[test]
    fn double_free_is_reported_as_such() {
        let e = parse("let x := new(1) in (free(x); free(x))").unwrap();
        let err = run(&e).unwrap_err();
        assert_eq!(err.kind, RuntimeErrorKind::DoubleFree);
    }

    #[test]
    fn write_through_shared_borrow_is_an_alias_violation() {
        let e = parse("let x := new(1) in let y := &*x in *y := 2").unwrap();
        let err = run(&e).unwrap_err();
        assert_eq!(err.kind, RuntimeErrorKind::AliasViolation);
    }

    #[test]
    fn deref_of_integer_is_unbound_ref() {
        let e = parse("*5").unwrap();
        assert_eq!(run(&e).unwrap_err().kind, RuntimeErrorKind::UnboundRef);
        assert_eq!(
            run_unchecked(&e).unwrap_err().kind,
            RuntimeErrorKind::UnboundRef
        );
    }

    #[test]
    fn monitor_agrees_with_verifier_on_the_listings() {
        for (src, accepted) in [(MUT_LISTING, true), (SHARED_LISTING, true), (UB_LISTING, false)] {
            let e = parse(src).unwrap();
            let verdict = verify(&e);
            let result = run(&e);
            assert_eq!(verdict.is_accepted(), result.is_ok(), "on {src:?}");
            if let (Verdict::Rejected { rejection, .. }, Err(err)) = (&verdict, &result) {
                assert_eq!(rejection.at, err.span, "fault spans must agree");
            }
            assert_eq!(accepted, result.is_ok());
        }
    }

    #[test]
    fn conservation_holds_after_every_step() {
        for src in [MUT_LISTING, SHARED_LISTING, "let x := new(1) in *x"] {
            let e = parse(src).unwrap();
            let (result, snapshots) = run_traced(&e);
            assert!(result.is_ok());
            for snap in &snapshots {
                snap.state.check_conservation().unwrap();
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let e = parse(SHARED_LISTING).unwrap();
        assert_eq!(run_traced(&e), run_traced(&e));
    }
}
