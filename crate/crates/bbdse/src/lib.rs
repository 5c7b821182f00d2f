//! Infeasibility-question laboratory for obfuscated binaries over a small,
//! fully specified ISA.
//!
//! The crate is organised around a single workflow: assemble a program
//! ([`isa`]), execute it concretely to obtain a trace ([`tracer`]), build
//! bounded backward slices of that trace as bitvector formulas ([`formula`]),
//! decide their satisfiability ([`solver`]), and interpret UNSAT answers as
//! proofs of infeasibility ([`detect`]): opaque predicates, call-stack
//! tampering, opaque constants, jump-target closure and conditional
//! self-modification. A ground-truth obfuscator ([`obfuscate`]) generates
//! scored corpora, [`disasm`] compares linear/recursive/dynamic/sparse
//! disassembly on them, and [`simplify`] extracts de-obfuscated listings.

pub mod detect;
pub mod disasm;
pub mod formula;
pub mod isa;
pub mod obfuscate;
pub mod report;
pub mod simplify;
pub mod smt;
pub mod solver;
pub mod tracer;

/// Machine word. Values are always kept masked to the configured [`isa::Width`].
pub type Word = u64;
