//! The resource algebra: points-to chunks, reference-ending resources,
//! and the view shifts that move fractions from borrowers back to lenders.
//!
//! Notation (mirrored by `render_chunk` and the JSON traces):
//!
//! ```text
//! p |->[q] v            points-to: reference p grants fraction q of a cell holding v
//! refend(r, p, q)       ending r returns fraction q to its lender p
//! p' |->[q] v * refend(p', p, q)   ==>   p |->[q] v     (the reference-end shift)
//! ```
//!
//! Invariants maintained on every reachable state:
//!
//! * at most one points-to chunk per reference (same-reference chunks merge
//!   by fraction addition, values must agree);
//! * for every live cell, the points-to fractions of its aliases sum to
//!   exactly 1;
//! * every reference-ending resource is recoverable: the borrower (plus its
//!   own pending sub-borrows) can supply the recorded fraction.

use super::fraction::{Fraction, FractionError};
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Identity of a reference value. Globally unique within one run; display
/// names live in the owning state (the binding variable when one exists).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefId(u64);

impl RefId {
    pub fn generation(self) -> u64 {
        self.0
    }

    pub fn from_generation(gen: u64) -> RefId {
        RefId(gen)
    }
}

/// Identity of an underlying memory cell: assigned once at `new`, never
/// reused. A lender and all its borrowers share one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(u64);

impl CellId {
    pub fn index(self) -> u64 {
        self.0
    }

    pub fn from_index(index: u64) -> CellId {
        CellId(index)
    }
}

/// A value: an integer or a reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(BigInt),
    Ref(RefId),
}

impl Value {
    pub fn int(n: impl Into<BigInt>) -> Value {
        Value::Int(n.into())
    }
}

/// A separation-logic resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Chunk {
    /// `target |->[frac] value`
    PointsTo {
        target: RefId,
        frac: Fraction,
        value: Value,
    },
    /// `refend(borrower, lender, frac)`
    RefEnd {
        borrower: RefId,
        lender: RefId,
        frac: Fraction,
    },
}

/// One applied reference-end view shift: `frac` moved from `borrower`
/// back to `lender`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shift {
    pub borrower: RefId,
    pub lender: RefId,
    pub frac: Fraction,
}

/// Internal invariant violations. These signal a bug in the caller, not a
/// verification failure: the logic guarantees all aliases see one value.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("points-to chunks for the same reference disagree on the value")]
    ValueMismatch,
    #[error("points-to fractions for one reference exceed 1: {0}")]
    FractionOverflow(FractionError),
    #[error("two reference-ending resources share a borrower")]
    DuplicateRefEnd,
}

/// A reference-end shift could not be applied or chained.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShiftError {
    #[error("no reference-ending resource for the borrower")]
    MissingRefEnd,
    #[error("borrower holds {available} but its refend carries {required}; end its sub-borrows first")]
    InsufficientFraction {
        required: Fraction,
        available: String,
    },
    #[error("saturation cannot recover the required fraction: {reached} available, {needed} needed")]
    Unrecoverable { needed: String, reached: String },
}

/// A fraction-conservation or chunk-shape violation, with a description of
/// what failed. Produced only by [`SymState::check_conservation`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("conservation violated: {0}")]
pub struct ConservationError(pub String);

/// The verifier's symbolic heap: normalized chunks plus the variable
/// environment and the reference-to-cell lineage map.
///
/// A value type: cloning snapshots the state, and all operations are
/// state-to-state. Maps are ordered so iteration (and therefore
/// serialization) is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymState {
    points_to: BTreeMap<RefId, (Fraction, Value)>,
    ref_ends: BTreeMap<RefId, (RefId, Fraction)>,
    env: BTreeMap<String, Value>,
    lineage: BTreeMap<RefId, CellId>,
    names: BTreeMap<RefId, String>,
    freed: BTreeSet<CellId>,
    next_gen: u64,
    next_cell: u64,
}

impl SymState {
    pub fn new() -> SymState {
        SymState::default()
    }

    // ---- allocation and rule applications ----------------------------

    /// Allocates a fresh cell holding `value` and returns the full-fraction
    /// reference to it.
    pub fn alloc(&mut self, value: Value) -> RefId {
        let cell = CellId(self.next_cell);
        self.next_cell += 1;
        let r = self.fresh_ref(cell);
        self.points_to.insert(r, (Fraction::one(), value));
        r
    }

    /// Mutable borrow of `lender`: consumes its full points-to chunk and
    /// produces a fresh reference with the full fraction plus a
    /// reference-ending resource carrying 1.
    ///
    /// Precondition (callers saturate first): `lender |->[1] v`.
    pub fn mutable_borrow(&mut self, lender: RefId) -> Result<RefId, ShiftError> {
        match self.points_to.get(&lender) {
            Some((f, _)) if f.is_one() => {}
            other => {
                return Err(ShiftError::InsufficientFraction {
                    required: Fraction::one(),
                    available: other.map_or("none".into(), |(f, _)| f.to_string()),
                })
            }
        }
        let (_, value) = self.points_to.remove(&lender).expect("checked above");
        let r = self.fresh_ref(self.lineage[&lender]);
        self.points_to.insert(r, (Fraction::one(), value));
        self.ref_ends.insert(r, (lender, Fraction::one()));
        Ok(r)
    }

    /// Shared borrow of `lender`: halves its fraction and produces a fresh
    /// read-only alias holding the other half, plus a reference-ending
    /// resource carrying that half.
    ///
    /// Precondition: `lender |->[q] v` for any positive q.
    pub fn shared_borrow(&mut self, lender: RefId) -> Result<RefId, ShiftError> {
        let Some((frac, value)) = self.points_to.get(&lender).cloned() else {
            return Err(ShiftError::InsufficientFraction {
                required: Fraction::one(),
                available: "none".into(),
            });
        };
        let half = frac.half();
        self.points_to.insert(lender, (half.clone(), value.clone()));
        let r = self.fresh_ref(self.lineage[&lender]);
        self.points_to.insert(r, (half.clone(), value));
        self.ref_ends.insert(r, (lender, half));
        Ok(r)
    }

    /// Overwrites the value behind `target`. Precondition: full fraction.
    pub fn write(&mut self, target: RefId, value: Value) {
        let entry = self.points_to.get_mut(&target).expect("write requires a chunk");
        assert!(entry.0.is_one(), "write requires the full fraction");
        entry.1 = value;
    }

    /// Consumes the full points-to chunk of `target` and retires its cell.
    pub fn free(&mut self, target: RefId) {
        let (frac, _) = self.points_to.remove(&target).expect("free requires a chunk");
        assert!(frac.is_one(), "free requires the full fraction");
        self.freed.insert(self.lineage[&target]);
    }

    fn fresh_ref(&mut self, cell: CellId) -> RefId {
        self.next_gen += 1;
        let r = RefId(self.next_gen);
        self.lineage.insert(r, cell);
        r
    }

    // ---- view shifts --------------------------------------------------

    /// The reference-end shift:
    /// `borrower |->[q] v * refend(borrower, lender, q)  ==>  lender |->[q] v`.
    ///
    /// Removes the reference-ending resource and `q` of the borrower's
    /// fraction (the borrower's chunk vanishes when it held exactly `q`),
    /// and credits `q` to the lender, merging chunks. Everything else is
    /// preserved verbatim.
    pub fn apply_reference_end(&mut self, borrower: RefId) -> Result<Shift, ShiftError> {
        let Some((lender, q)) = self.ref_ends.get(&borrower).cloned() else {
            return Err(ShiftError::MissingRefEnd);
        };
        let Some((have, value)) = self.points_to.get(&borrower).cloned() else {
            return Err(ShiftError::InsufficientFraction {
                required: q,
                available: "none".into(),
            });
        };
        if have < q {
            return Err(ShiftError::InsufficientFraction {
                required: q,
                available: have.to_string(),
            });
        }
        self.ref_ends.remove(&borrower);
        match have.checked_sub(&q) {
            Some(rest) => {
                self.points_to.insert(borrower, (rest, value.clone()));
            }
            None => {
                self.points_to.remove(&borrower);
            }
        }
        self.insert_points_to(lender, q.clone(), value)
            .expect("aliases of one cell agree on the value and sum to at most 1");
        Ok(Shift {
            borrower,
            lender,
            frac: q,
        })
    }

    /// Chains reference-end shifts rooted at `lender` until its points-to
    /// fraction reaches `needed`: deepest borrows first (forced), oldest
    /// sibling first. Stops as soon as the requirement holds; untouched
    /// chunks are preserved verbatim.
    pub fn saturate_end(
        &mut self,
        lender: RefId,
        needed: &Fraction,
    ) -> Result<Vec<Shift>, ShiftError> {
        self.saturate_end_with(lender, needed, &mut |_, _| {})
    }

    /// [`SymState::saturate_end`] with an observer invoked after each
    /// individual shift (the state argument is the post-shift state).
    pub fn saturate_end_with(
        &mut self,
        lender: RefId,
        needed: &Fraction,
        observe: &mut dyn FnMut(&SymState, &Shift),
    ) -> Result<Vec<Shift>, ShiftError> {
        self.saturate(lender, &Goal::AtLeast(needed.clone()), observe)
    }

    /// Recovers *some* points-to chunk for `lender` (any positive fraction
    /// suffices, e.g. for reads); a no-op when one already exists.
    pub fn recover_points_to_with(
        &mut self,
        lender: RefId,
        observe: &mut dyn FnMut(&SymState, &Shift),
    ) -> Result<Vec<Shift>, ShiftError> {
        self.saturate(lender, &Goal::AnyChunk, observe)
    }

    fn saturate(
        &mut self,
        lender: RefId,
        goal: &Goal,
        observe: &mut dyn FnMut(&SymState, &Shift),
    ) -> Result<Vec<Shift>, ShiftError> {
        let satisfied = |s: &SymState| match goal {
            Goal::AnyChunk => s.points_to.contains_key(&lender),
            Goal::AtLeast(needed) => s.points_to.get(&lender).is_some_and(|(f, _)| f >= needed),
        };
        let mut shifts = Vec::new();
        loop {
            if satisfied(self) {
                return Ok(shifts);
            }
            let Some(leaf) = self.next_endable(lender) else {
                return Err(ShiftError::Unrecoverable {
                    needed: match goal {
                        Goal::AnyChunk => "any positive fraction".into(),
                        Goal::AtLeast(needed) => needed.to_string(),
                    },
                    reached: self
                        .points_to
                        .get(&lender)
                        .map_or("none".into(), |(f, _)| f.to_string()),
                });
            };
            let shift = self
                .apply_reference_end(leaf)
                .expect("next_endable returns an endable borrower");
            observe(self, &shift);
            shifts.push(shift);
        }
    }

    /// Walks the borrow tree under `lender` to the next borrow that can be
    /// ended right now: first (oldest) borrower, descending into its own
    /// borrowers while it cannot yet supply its refend fraction.
    fn next_endable(&self, lender: RefId) -> Option<RefId> {
        let mut current = *self.borrowers_of(lender).first()?;
        let mut seen = BTreeSet::new();
        loop {
            if !seen.insert(current) {
                return None; // cyclic refends only arise in hand-built states
            }
            let (_, q) = &self.ref_ends[&current];
            if self.points_to.get(&current).is_some_and(|(f, _)| f >= q) {
                return Some(current);
            }
            current = *self.borrowers_of(current).first()?;
        }
    }

    /// Borrowers with a pending reference-ending resource naming `lender`,
    /// oldest first.
    pub fn borrowers_of(&self, lender: RefId) -> Vec<RefId> {
        self.ref_ends
            .iter()
            .filter(|(_, (l, _))| *l == lender)
            .map(|(b, _)| *b)
            .collect()
    }

    // ---- entailment ---------------------------------------------------

    /// Chunk-level entailment: `goal` is satisfiable from this state by
    /// matching chunks modulo fraction splitting/merging on identical
    /// references; dropping chunks (weakening) is allowed.
    pub fn entails(&self, goal: &[Chunk]) -> bool {
        let mut need: BTreeMap<RefId, (Fraction, Value)> = BTreeMap::new();
        let mut need_ends: BTreeMap<(RefId, RefId), (Fraction, usize)> = BTreeMap::new();
        for chunk in goal {
            match chunk {
                Chunk::PointsTo { target, frac, value } => match need.get_mut(target) {
                    None => {
                        need.insert(*target, (frac.clone(), value.clone()));
                    }
                    Some((have, v)) => {
                        if v != value {
                            return false;
                        }
                        match have.checked_add(frac) {
                            Ok(sum) => *have = sum,
                            Err(_) => return false,
                        }
                    }
                },
                Chunk::RefEnd { borrower, lender, frac } => {
                    let entry = need_ends
                        .entry((*borrower, *lender))
                        .or_insert((frac.clone(), 0));
                    if &entry.0 != frac {
                        return false; // refends are matched whole, never split
                    }
                    entry.1 += 1;
                }
            }
        }
        for (target, (frac, value)) in &need {
            match self.points_to.get(target) {
                Some((have, v)) if v == value && have >= frac => {}
                _ => return false,
            }
        }
        for ((borrower, lender), (frac, count)) in &need_ends {
            // States hold at most one refend per borrower.
            if *count > 1 {
                return false;
            }
            match self.ref_ends.get(borrower) {
                Some((l, q)) if l == lender && q == frac => {}
                _ => return false,
            }
        }
        true
    }

    // ---- chunk access and normalization --------------------------------

    /// Inserts a points-to chunk, merging with an existing chunk for the
    /// same reference by fraction addition (values must agree).
    pub fn insert_points_to(
        &mut self,
        target: RefId,
        frac: Fraction,
        value: Value,
    ) -> Result<(), LogicError> {
        match self.points_to.get(&target) {
            None => {
                self.points_to.insert(target, (frac, value));
                Ok(())
            }
            Some((have, v)) => {
                if *v != value {
                    return Err(LogicError::ValueMismatch);
                }
                let sum = have.checked_add(&frac).map_err(LogicError::FractionOverflow)?;
                self.points_to.insert(target, (sum, value));
                Ok(())
            }
        }
    }

    /// Builds a normalized state from a raw chunk multiset: same-reference
    /// points-to chunks are merged, lineage is reconstructed by grouping
    /// references connected through refends into one cell each.
    pub fn from_chunks(chunks: impl IntoIterator<Item = Chunk>) -> Result<SymState, LogicError> {
        let mut s = SymState::new();
        let chunks: Vec<Chunk> = chunks.into_iter().collect();
        for chunk in &chunks {
            match chunk {
                Chunk::PointsTo { target, frac, value } => {
                    s.insert_points_to(*target, frac.clone(), value.clone())?;
                }
                Chunk::RefEnd { borrower, lender, frac } => {
                    if s.ref_ends.insert(*borrower, (*lender, frac.clone())).is_some() {
                        return Err(LogicError::DuplicateRefEnd);
                    }
                }
            }
        }

        // Union references linked by refends; each component is one cell.
        let ids: BTreeSet<RefId> = chunks
            .iter()
            .flat_map(|c| match c {
                Chunk::PointsTo { target, .. } => vec![*target],
                Chunk::RefEnd { borrower, lender, .. } => vec![*borrower, *lender],
            })
            .collect();
        let mut root: BTreeMap<RefId, RefId> = ids.iter().map(|r| (*r, *r)).collect();
        fn find(root: &mut BTreeMap<RefId, RefId>, mut r: RefId) -> RefId {
            while root[&r] != r {
                let parent = root[&r];
                r = parent;
            }
            r
        }
        for (borrower, (lender, _)) in s.ref_ends.clone() {
            let (a, b) = (find(&mut root, borrower), find(&mut root, lender));
            if a != b {
                root.insert(a, b);
            }
        }
        let mut cells: BTreeMap<RefId, CellId> = BTreeMap::new();
        for id in &ids {
            let rep = find(&mut root, *id);
            let cell = *cells.entry(rep).or_insert_with(|| {
                let c = CellId(s.next_cell);
                s.next_cell += 1;
                c
            });
            s.lineage.insert(*id, cell);
            s.next_gen = s.next_gen.max(id.0);
        }
        Ok(s)
    }

    /// All chunks in canonical order: points-to by reference, then refends
    /// by borrower.
    pub fn chunks(&self) -> Vec<Chunk> {
        let mut out: Vec<Chunk> = self
            .points_to
            .iter()
            .map(|(target, (frac, value))| Chunk::PointsTo {
                target: *target,
                frac: frac.clone(),
                value: value.clone(),
            })
            .collect();
        out.extend(self.ref_ends.iter().map(|(borrower, (lender, frac))| {
            Chunk::RefEnd {
                borrower: *borrower,
                lender: *lender,
                frac: frac.clone(),
            }
        }));
        out
    }

    pub fn points_to(&self, r: RefId) -> Option<(&Fraction, &Value)> {
        self.points_to.get(&r).map(|(f, v)| (f, v))
    }

    pub fn frac_of(&self, r: RefId) -> Option<&Fraction> {
        self.points_to.get(&r).map(|(f, _)| f)
    }

    pub fn ref_end_of(&self, borrower: RefId) -> Option<(RefId, &Fraction)> {
        self.ref_ends.get(&borrower).map(|(l, f)| (*l, f))
    }

    pub fn lineage_of(&self, r: RefId) -> Option<CellId> {
        self.lineage.get(&r).copied()
    }

    pub fn is_freed(&self, cell: CellId) -> bool {
        self.freed.contains(&cell)
    }

    pub fn is_empty(&self) -> bool {
        self.points_to.is_empty() && self.ref_ends.is_empty()
    }

    // ---- environment and names -----------------------------------------

    pub fn env_lookup(&self, name: &str) -> Option<&Value> {
        self.env.get(name)
    }

    /// Binds `name`, returning the shadowed value for later restore.
    pub fn bind(&mut self, name: &str, value: Value) -> Option<Value> {
        self.env.insert(name.to_string(), value)
    }

    pub fn unbind(&mut self, name: &str, shadowed: Option<Value>) {
        match shadowed {
            Some(v) => {
                self.env.insert(name.to_string(), v);
            }
            None => {
                self.env.remove(name);
            }
        }
    }

    /// Records the binding variable as the display name, first binding wins.
    pub fn name_ref(&mut self, r: RefId, name: &str) {
        self.names.entry(r).or_insert_with(|| name.to_string());
    }

    pub fn display_name(&self, r: RefId) -> String {
        self.names
            .get(&r)
            .cloned()
            .unwrap_or_else(|| format!("%{}", r.0))
    }

    pub fn names(&self) -> &BTreeMap<RefId, String> {
        &self.names
    }

    /// `"x |-> 42"`, `"y |->[1/2] 7"`, `"refend(y, x, 1/2)"`.
    pub fn render_chunk(&self, chunk: &Chunk) -> String {
        let value_str = |v: &Value| match v {
            Value::Int(n) => n.to_string(),
            Value::Ref(r) => self.display_name(*r),
        };
        match chunk {
            Chunk::PointsTo { target, frac, value } if frac.is_one() => {
                format!("{} |-> {}", self.display_name(*target), value_str(value))
            }
            Chunk::PointsTo { target, frac, value } => format!(
                "{} |->[{}] {}",
                self.display_name(*target),
                frac,
                value_str(value)
            ),
            Chunk::RefEnd { borrower, lender, frac } => format!(
                "refend({}, {}, {})",
                self.display_name(*borrower),
                self.display_name(*lender),
                frac
            ),
        }
    }

    // ---- conservation ---------------------------------------------------

    /// Checks fraction conservation and chunk shape:
    ///
    /// * per live cell, alias fractions sum to exactly 1;
    /// * aliases of one cell agree on the value;
    /// * every refend links two distinct same-cell references on a live
    ///   cell and is backed by its borrower's recoverable fraction.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let fail = |msg: String| Err(ConservationError(msg));

        let mut per_cell: BTreeMap<CellId, Vec<RefId>> = BTreeMap::new();
        for (r, _) in self.points_to.iter() {
            let cell = match self.lineage.get(r) {
                Some(c) => *c,
                None => return fail(format!("{} has no lineage", self.display_name(*r))),
            };
            per_cell.entry(cell).or_default().push(*r);
        }

        for (cell, refs) in &per_cell {
            if self.freed.contains(cell) {
                return fail(format!("freed cell #{} still has points-to chunks", cell.0));
            }
            let mut sum: Option<Fraction> = None;
            let mut value: Option<&Value> = None;
            for r in refs {
                let (f, v) = &self.points_to[r];
                sum = Some(match sum {
                    None => f.clone(),
                    Some(acc) => acc.checked_add(f).map_err(|e| {
                        ConservationError(format!("cell #{} fractions exceed 1: {e}", cell.0))
                    })?,
                });
                match value {
                    None => value = Some(v),
                    Some(prev) if prev == v => {}
                    Some(_) => {
                        return fail(format!("cell #{} aliases disagree on the value", cell.0))
                    }
                }
            }
            let total = sum.expect("non-empty group");
            if !total.is_one() {
                return fail(format!("cell #{} fractions sum to {total}, not 1", cell.0));
            }
        }

        for (borrower, (lender, q)) in &self.ref_ends {
            if borrower == lender {
                return fail(format!(
                    "refend with borrower = lender for {}",
                    self.display_name(*borrower)
                ));
            }
            match (self.lineage.get(borrower), self.lineage.get(lender)) {
                (Some(a), Some(b)) if a == b => {
                    if self.freed.contains(a) {
                        return fail(format!("refend pending on freed cell #{}", a.0));
                    }
                }
                _ => {
                    return fail(format!(
                        "refend({}, {}, {q}) links references of different cells",
                        self.display_name(*borrower),
                        self.display_name(*lender)
                    ))
                }
            }
            if self.backed_fraction(*borrower) < *q {
                return fail(format!(
                    "refend({}, {}, {q}) is not backed by the borrower's recoverable fraction",
                    self.display_name(*borrower),
                    self.display_name(*lender)
                ));
            }
        }
        Ok(())
    }

    /// Fraction `r` can supply once its own sub-borrows are ended: its own
    /// chunk plus all refend fractions owed to it.
    fn backed_fraction(&self, r: RefId) -> Fraction {
        let mut total: Option<Fraction> = self.frac_of(r).cloned();
        for b in self.borrowers_of(r) {
            let (_, q) = &self.ref_ends[&b];
            total = Some(match total {
                None => q.clone(),
                Some(acc) => acc.checked_add(q).unwrap_or_else(|_| Fraction::one()),
            });
        }
        total.unwrap_or_else(|| Fraction::new(1, u64::MAX).expect("tiny fraction"))
    }
}

impl fmt::Display for SymState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rendered: Vec<String> = self.chunks().iter().map(|c| self.render_chunk(c)).collect();
        if rendered.is_empty() {
            write!(f, "{{ }}")
        } else {
            write!(f, "{{ {} }}", rendered.join(" * "))
        }
    }
}

enum Goal {
    AnyChunk,
    AtLeast(Fraction),
}
