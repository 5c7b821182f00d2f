//! Call-stack tampering classification along the three axes: integrity
//! (does the ret go where its call pushed?), alignment (same stack offset
//! at call and after ret?) and multiplicity (single possible target?).
//!
//! A forward scan maintains the formal stack. A ret that reads exactly
//! the top frame's return slot consumes that frame; a ret reading any
//! other slot is a violation of the call/ret discipline and is matched to
//! the top frame for windowing without popping it, so enclosing frames
//! stay intact and later genuine returns classify correctly.

use super::Detector;
use crate::formula::{slice_window, SliceRequest, Term};
use crate::isa::Opcode;
use crate::isa::Register;
use crate::solver::VerdictKind;
use crate::Word;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrity {
    Genuine,
    Violated,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    Aligned,
    Disaligned,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplicity {
    Single,
    Multiple,
    Unknown,
}

/// Aggregate label for one static ret address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TamperingLabel {
    pub integrity: Integrity,
    pub alignment: Alignment,
    pub multiplicity: Multiplicity,
}

/// One frame: (call step index, sp before the call, slot the return site
/// was pushed to, the pushed return-site address).
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub call_step: usize,
    pub call_addr: Word,
    pub sp_before_call: Word,
    pub slot_addr: Word,
    pub pushed_site: Word,
}

/// The formal stack of calls seen so far in the forward scan.
#[derive(Debug, Default)]
pub struct FormalStack {
    frames: Vec<Frame>,
}

impl FormalStack {
    pub fn push(&mut self, f: Frame) {
        self.frames.push(f);
    }

    pub fn top(&self) -> Option<&Frame> {
        self.frames.last()
    }

    pub fn pop(&mut self) -> Option<Frame> {
        self.frames.pop()
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }
}

/// Per-dynamic-ret record.
#[derive(Debug, Clone)]
pub struct RetOccurrence {
    pub ret_step: usize,
    pub ret_addr: Word,
    pub target: Word,
    /// Matched (possibly not popped) call frame; None on an empty stack.
    pub matched_call: Option<Frame>,
    /// The ret read exactly the matched frame's return slot.
    pub slot_matched: bool,
    pub runtime_violated: Option<bool>,
    pub runtime_disaligned: Option<bool>,
    pub proved_genuine: bool,
    pub proved_aligned: bool,
    pub proved_single: bool,
    pub distance: Option<usize>,
    pub skipped_k_max: bool,
}

#[derive(Debug, Clone)]
pub struct RetReport {
    pub labels: BTreeMap<Word, TamperingLabel>,
    pub occurrences: Vec<RetOccurrence>,
    /// Return sites statically implied by calls whose slot-matched ret was
    /// violated; sparse disassembly must not explore them.
    pub suppressed_return_sites: BTreeSet<Word>,
    pub solver_time: Duration,
}

/// Classify every ret in the trace.
pub fn classify_ret(d: &Detector) -> RetReport {
    let w = d.trace.width();
    let wb = w.bytes();
    let mut stack = FormalStack::default();
    let mut occurrences: Vec<RetOccurrence> = Vec::new();
    let mut solver_time = Duration::ZERO;

    for step in &d.trace.steps {
        match step.instr.opcode {
            Opcode::Call | Opcode::Callr => {
                let slot = step.effective_addrs[0];
                stack.push(Frame {
                    call_step: step.index,
                    call_addr: step.addr,
                    sp_before_call: w.truncate(slot + wb),
                    slot_addr: slot,
                    pushed_site: w.truncate(step.addr + step.instr.byte_length),
                });
            }
            Opcode::Ret => {
                let slot_read = step.effective_addrs[0];
                let target = step.jump_target.expect("ret records target");
                let mut occ = RetOccurrence {
                    ret_step: step.index,
                    ret_addr: step.addr,
                    target,
                    matched_call: None,
                    slot_matched: false,
                    runtime_violated: None,
                    runtime_disaligned: None,
                    proved_genuine: false,
                    proved_aligned: false,
                    proved_single: false,
                    distance: None,
                    skipped_k_max: false,
                };
                let top = stack.top().copied();
                match top {
                    None => {
                        // Unmatched ret: tolerated, reported as unknown.
                        occurrences.push(occ);
                        continue;
                    }
                    Some(frame) => {
                        occ.slot_matched = frame.slot_addr == slot_read;
                        if occ.slot_matched {
                            stack.pop();
                        }
                        occ.matched_call = Some(frame);
                        occ.runtime_violated = Some(target != frame.pushed_site);
                        let sp_after_ret = w.truncate(slot_read + wb);
                        occ.runtime_disaligned = Some(sp_after_ret != frame.sp_before_call);
                        let distance = step.index - frame.call_step;
                        occ.distance = Some(distance);
                        if distance > d.k_max_ret {
                            occ.skipped_k_max = true;
                            occurrences.push(occ);
                            continue;
                        }
                        solver_time += prove_occurrence(d, &mut occ, &frame, step.index, slot_read);
                    }
                }
                occurrences.push(occ);
            }
            _ => {}
        }
    }

    // Aggregate per static ret address; runtime facts dominate.
    let mut labels: BTreeMap<Word, TamperingLabel> = BTreeMap::new();
    let mut by_addr: BTreeMap<Word, Vec<&RetOccurrence>> = BTreeMap::new();
    for o in &occurrences {
        by_addr.entry(o.ret_addr).or_default().push(o);
    }
    for (addr, occs) in by_addr {
        let targets: BTreeSet<Word> = occs.iter().map(|o| o.target).collect();
        let any_matched = occs.iter().any(|o| o.matched_call.is_some());
        let integrity = if occs.iter().any(|o| o.runtime_violated == Some(true)) {
            Integrity::Violated
        } else if any_matched && occs.iter().all(|o| o.proved_genuine) {
            Integrity::Genuine
        } else {
            Integrity::Unknown
        };
        let alignment = if occs.iter().any(|o| o.runtime_disaligned == Some(true)) {
            Alignment::Disaligned
        } else if any_matched && occs.iter().all(|o| o.proved_aligned) {
            Alignment::Aligned
        } else {
            Alignment::Unknown
        };
        let multiplicity = if targets.len() > 1 {
            Multiplicity::Multiple
        } else if any_matched && occs.iter().all(|o| o.proved_single) {
            Multiplicity::Single
        } else {
            Multiplicity::Unknown
        };
        labels.insert(
            addr,
            TamperingLabel {
                integrity,
                alignment,
                multiplicity,
            },
        );
    }

    let suppressed_return_sites = occurrences
        .iter()
        .filter(|o| o.slot_matched && o.runtime_violated == Some(true))
        .filter_map(|o| o.matched_call.map(|f| f.pushed_site))
        .collect();

    RetReport {
        labels,
        occurrences,
        suppressed_return_sites,
        solver_time,
    }
}

/// Run the three VALID/UNSAT queries for one call/ret pair. The window
/// spans the pair; the ret's own target binding is suppressed since the
/// target is exactly what is being asked about.
fn prove_occurrence(
    d: &Detector,
    occ: &mut RetOccurrence,
    frame: &Frame,
    ret_step: usize,
    slot_read: Word,
) -> Duration {
    let mut time = Duration::ZERO;
    let lo = frame.call_step;
    let len = ret_step - frame.call_step + 1;
    let req = SliceRequest {
        lo,
        len,
        k: len,
        select: true,
        defuse_depth: None,
        suppress_ret_binding_at: Some(ret_step),
    };
    let w = d.trace.width().bits();

    // Integrity: VALID(pushed-at-call = read-at-ret), checked by UNSAT of
    // the negation. Skipped when runtime already shows a violation.
    if occ.runtime_violated == Some(false) {
        let f = slice_window(d.trace, Some(&d.index), req, |p| {
            let at_call = p.mem_word_at(frame.call_step + 1, frame.slot_addr)?;
            let at_ret = p.mem_word_at(ret_step, slot_read)?;
            Ok(at_call.ne(at_ret))
        });
        if let Ok(f) = f {
            let v = d.check(&f);
            time += v.elapsed;
            occ.proved_genuine = v.kind == VerdictKind::Unsat;
        }
    }

    // Alignment: VALID(sp before call = sp after ret).
    if occ.runtime_disaligned == Some(false) {
        let f = slice_window(d.trace, Some(&d.index), req, |p| {
            let sp_call = p.reg_at(frame.call_step, Register::SP)?;
            let sp_ret = p.reg_at(ret_step + 1, Register::SP)?;
            Ok(sp_call.ne(sp_ret))
        });
        if let Ok(f) = f {
            let v = d.check(&f);
            time += v.elapsed;
            occ.proved_aligned = v.kind == VerdictKind::Unsat;
        }
    }

    // Multiplicity: UNSAT(target != observed) proves a single target.
    let target = occ.target;
    let f = slice_window(d.trace, Some(&d.index), req, |p| {
        let read = p.mem_word_at(ret_step, slot_read)?;
        Ok(read.ne(Term::constant(target, w)))
    });
    if let Ok(f) = f {
        let v = d.check(&f);
        time += v.elapsed;
        occ.proved_single = v.kind == VerdictKind::Unsat;
    }
    time
}
