//! Byte-stable JSON trace documents, shared by the verifier and the
//! monitor so symbolic and concrete runs can be diffed side by side.
//!
//! Schema (version "1"):
//!
//! ```text
//! {
//!   "version": "1",
//!   "program": "<source text>",
//!   "entries": [
//!     { "after_line": 4,
//!       "chunks": [ { "kind": "pointsto", "ref": "x", "frac": "1", "value": 42 },
//!                   { "kind": "refend", "borrower": "y", "lender": "x", "frac": "1/2" } ],
//!       "shifts": [ { "borrower": "y", "lender": "x", "frac": "1" } ] }
//!   ]
//! }
//! ```
//!
//! Fractions serialize in lowest terms (`"1"`, `"3/4"`); chunk lists sort
//! by (kind, reference name) so output for one input is byte-identical
//! across runs. `after_line` keys entries to source lines. Cell values
//! are JSON integers; a reference-valued cell serializes as the string
//! `"&name"`. References are named by their binding variable, suffixed
//! `#generation` when distinct references share a variable name, `%n`
//! when never bound.

use crate::logic::{Chunk, RefId, Value};
use crate::monitor::MonitorEntry;
use crate::verifier::Verdict;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub version: String,
    pub program: String,
    pub entries: Vec<EntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub after_line: u32,
    pub chunks: Vec<ChunkDoc>,
    pub shifts: Vec<ShiftDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ChunkDoc {
    #[serde(rename = "pointsto")]
    PointsTo {
        #[serde(rename = "ref")]
        reference: String,
        frac: String,
        value: serde_json::Value,
    },
    #[serde(rename = "refend")]
    RefEnd {
        borrower: String,
        lender: String,
        frac: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDoc {
    pub borrower: String,
    pub lender: String,
    pub frac: String,
}

impl TraceDocument {
    /// Document over the verifier's trace (Accepted or trace-so-far).
    pub fn from_verdict(program: &str, verdict: &Verdict) -> TraceDocument {
        let entries = verdict.trace();
        let names = entries
            .last()
            .map(|e| e.state.names().clone())
            .unwrap_or_default();
        let ids = collect_ids(entries.iter().map(|e| {
            (
                e.state.chunks(),
                e.shifts
                    .iter()
                    .map(|s| (s.borrower, s.lender))
                    .collect::<Vec<_>>(),
            )
        }));
        let table = NameTable::build(&names, &ids);
        TraceDocument {
            version: "1".into(),
            program: program.to_string(),
            entries: entries
                .iter()
                .map(|e| EntryDoc {
                    after_line: e.after_span.line,
                    chunks: chunk_docs(&e.state.chunks(), &table),
                    shifts: e
                        .shifts
                        .iter()
                        .map(|s| ShiftDoc {
                            borrower: table.name(s.borrower),
                            lender: table.name(s.lender),
                            frac: s.frac.to_string(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Document over the monitor's snapshots, in the same schema: each
    /// capability becomes a points-to chunk (value read from the heap),
    /// each pending end a refend chunk.
    pub fn from_monitor(program: &str, snapshots: &[MonitorEntry]) -> TraceDocument {
        let names = snapshots
            .last()
            .map(|e| e.state.names().clone())
            .unwrap_or_default();
        let to_chunks = |entry: &MonitorEntry| -> Vec<Chunk> {
            let mut chunks: Vec<Chunk> = entry
                .state
                .caps()
                .map(|(r, cell, frac)| Chunk::PointsTo {
                    target: r,
                    frac: frac.clone(),
                    value: entry
                        .state
                        .heap_value(cell)
                        .expect("capabilities only point at live cells")
                        .clone(),
                })
                .collect();
            chunks.extend(entry.state.pending().map(|(b, l, f)| Chunk::RefEnd {
                borrower: b,
                lender: l,
                frac: f.clone(),
            }));
            chunks
        };
        let ids = collect_ids(snapshots.iter().map(|e| {
            (
                to_chunks(e),
                e.shifts
                    .iter()
                    .map(|s| (s.borrower, s.lender))
                    .collect::<Vec<_>>(),
            )
        }));
        let table = NameTable::build(&names, &ids);
        TraceDocument {
            version: "1".into(),
            program: program.to_string(),
            entries: snapshots
                .iter()
                .map(|e| EntryDoc {
                    after_line: e.after_span.line,
                    chunks: chunk_docs(&to_chunks(e), &table),
                    shifts: e
                        .shifts
                        .iter()
                        .map(|s| ShiftDoc {
                            borrower: table.name(s.borrower),
                            lender: table.name(s.lender),
                            frac: s.frac.to_string(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Canonical rendering: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<TraceDocument, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn collect_ids(
    entries: impl Iterator<Item = (Vec<Chunk>, Vec<(RefId, RefId)>)>,
) -> BTreeSet<RefId> {
    let mut ids = BTreeSet::new();
    for (chunks, shift_ids) in entries {
        for chunk in chunks {
            match chunk {
                Chunk::PointsTo { target, value, .. } => {
                    ids.insert(target);
                    if let Value::Ref(r) = value {
                        ids.insert(r);
                    }
                }
                Chunk::RefEnd { borrower, lender, .. } => {
                    ids.insert(borrower);
                    ids.insert(lender);
                }
            }
        }
        for (b, l) in shift_ids {
            ids.insert(b);
            ids.insert(l);
        }
    }
    ids
}

/// Maps reference identities to unique display strings.
struct NameTable {
    resolved: BTreeMap<RefId, String>,
}

impl NameTable {
    fn build(names: &BTreeMap<RefId, String>, ids: &BTreeSet<RefId>) -> NameTable {
        let mut by_base: BTreeMap<&str, usize> = BTreeMap::new();
        for id in ids {
            if let Some(base) = names.get(id) {
                *by_base.entry(base.as_str()).or_default() += 1;
            }
        }
        let resolved = ids
            .iter()
            .map(|id| {
                let name = match names.get(id) {
                    None => format!("%{}", id.generation()),
                    Some(base) if by_base[base.as_str()] > 1 => {
                        format!("{base}#{}", id.generation())
                    }
                    Some(base) => base.clone(),
                };
                (*id, name)
            })
            .collect();
        NameTable { resolved }
    }

    fn name(&self, id: RefId) -> String {
        self.resolved
            .get(&id)
            .cloned()
            .unwrap_or_else(|| format!("%{}", id.generation()))
    }
}

fn chunk_docs(chunks: &[Chunk], table: &NameTable) -> Vec<ChunkDoc> {
    let mut docs: Vec<ChunkDoc> = chunks
        .iter()
        .map(|chunk| match chunk {
            Chunk::PointsTo { target, frac, value } => ChunkDoc::PointsTo {
                reference: table.name(*target),
                frac: frac.to_string(),
                value: match value {
                    Value::Int(n) => serde_json::Value::Number(
                        serde_json::Number::from_str(&n.to_string())
                            .expect("integers are valid JSON numbers"),
                    ),
                    Value::Ref(r) => serde_json::Value::String(format!("&{}", table.name(*r))),
                },
            },
            Chunk::RefEnd { borrower, lender, frac } => ChunkDoc::RefEnd {
                borrower: table.name(*borrower),
                lender: table.name(*lender),
                frac: frac.to_string(),
            },
        })
        .collect();
    docs.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    docs
}

fn sort_key(doc: &ChunkDoc) -> (u8, String, String) {
    match doc {
        ChunkDoc::PointsTo { reference, .. } => (0, reference.clone(), String::new()),
        ChunkDoc::RefEnd { borrower, lender, .. } => (1, borrower.clone(), lender.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::run_traced;
    use crate::syntax::parse;
    use crate::verifier::verify;

    const SHARED_LISTING: &str =
        "let x := new(42) in\nlet y := &*x in\nlet z := &*x in\n*y;\n*z;\n*x := 43;\nfree(x)";

    #[test]
    fn verifier_and_monitor_documents_agree_on_accepted_programs() {
        for src in [
            SHARED_LISTING,
            "let x := new(42) in\nlet y := &mut *x in\n*y := 43;\n*x := 44;\nfree(x)",
            "let x := new(7) in *x",
            "42",
        ] {
            let e = parse(src).unwrap();
            let verdict = verify(&e);
            assert!(verdict.is_accepted());
            let (result, snapshots) = run_traced(&e);
            assert!(result.is_ok());
            let v_doc = TraceDocument::from_verdict(src, &verdict);
            let m_doc = TraceDocument::from_monitor(src, &snapshots);
            assert_eq!(v_doc, m_doc, "trace disagreement on {src:?}");
        }
    }

    #[test]
    fn output_is_byte_stable() {
        let e = parse(SHARED_LISTING).unwrap();
        let a = TraceDocument::from_verdict(SHARED_LISTING, &verify(&e)).to_json();
        let b = TraceDocument::from_verdict(SHARED_LISTING, &verify(&e)).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_listing_fraction_ladder_in_json() {
        let e = parse(SHARED_LISTING).unwrap();
        let doc = TraceDocument::from_verdict(SHARED_LISTING, &verify(&e));
        let x_fracs: Vec<String> = doc
            .entries
            .iter()
            .flat_map(|entry| {
                entry.chunks.iter().filter_map(|c| match c {
                    ChunkDoc::PointsTo { reference, frac, .. } if reference == "x" => {
                        Some(frac.clone())
                    }
                    _ => None,
                })
            })
            .collect();
        assert_eq!(
            x_fracs,
            vec!["1", "1/2", "1/4", "1/4", "1/4", "3/4", "1", "1"]
        );
    }

    #[test]
    fn roundtrips_through_json() {
        let e = parse(SHARED_LISTING).unwrap();
        let doc = TraceDocument::from_verdict(SHARED_LISTING, &verify(&e));
        let parsed = TraceDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(doc, parsed);
    }

    #[test]
    fn reference_valued_cells_serialize_as_strings() {
        let src = "let x := new(1) in let b := new(x) in *b";
        let e = parse(src).unwrap();
        let doc = TraceDocument::from_verdict(src, &verify(&e));
        let has_ref_value = doc.entries.iter().any(|entry| {
            entry.chunks.iter().any(|c| {
                matches!(c, ChunkDoc::PointsTo { value, .. } if value == &serde_json::Value::String("&x".into()))
            })
        });
        assert!(has_ref_value);
    }

    #[test]
    fn shadowed_names_are_disambiguated_by_generation() {
        let src = "let x := new(1) in (free(x); let x := new(2) in free(x))";
        let e = parse(src).unwrap();
        let doc = TraceDocument::from_verdict(src, &verify(&e));
        let mut seen = BTreeSet::new();
        for entry in &doc.entries {
            for c in &entry.chunks {
                if let ChunkDoc::PointsTo { reference, .. } = c {
                    seen.insert(reference.clone());
                }
            }
        }
        assert_eq!(
            seen.into_iter().collect::<Vec<_>>(),
            vec!["x#1".to_string(), "x#2".to_string()]
        );
    }
}
