//! Infeasibility analyses over a trace: opaque predicates, call-stack
//! tampering, opaque constants, jump-target closure and conditional
//! self-modification. UNSAT answers are proofs along the traced path;
//! runtime observations always win over symbolic claims.

mod callret;

pub use callret::{
    classify_ret, Alignment, FormalStack, Integrity, Multiplicity, RetOccurrence, RetReport,
    TamperingLabel,
};

use crate::formula::{
    backward_slice_indexed, negate_goal, slice_window, BoundMetric, ReachabilityCondition,
    SliceError, SliceFormula, SliceRequest, Term,
};
use crate::isa::{Opcode, Register};
use crate::solver::{Solver, Verdict, VerdictKind};
use crate::tracer::{branch_coverage, StateIndex, Trace};
use crate::Word;
use std::collections::BTreeSet;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("address {0:#x} is not a conditional jump executed in the trace")]
    NotAConditional(Word),
    #[error("address {0:#x} is not an indirect jump executed in the trace")]
    NotAnIndirectJump(Word),
    #[error("address {0:#x} was never executed")]
    NeverExecuted(Word),
    #[error("step {0} does not write the code region")]
    NotACodeWrite(usize),
    #[error(transparent)]
    Slice(#[from] SliceError),
}

/// Shared context: one trace, its state index, a solver, and the bound.
pub struct Detector<'t> {
    pub trace: &'t Trace,
    pub index: StateIndex,
    pub solver: &'t Solver,
    pub k: usize,
    pub metric: BoundMetric,
    /// Call/ret pairs further apart than this are not sliced.
    pub k_max_ret: usize,
}

/// Default cap for call/ret slice distance.
pub const DEFAULT_K_MAX_RET: usize = 10_000;

impl<'t> Detector<'t> {
    pub fn new(trace: &'t Trace, solver: &'t Solver, k: usize) -> Detector<'t> {
        Detector {
            trace,
            index: trace.state_index(512),
            solver,
            k,
            metric: BoundMetric::Steps,
            k_max_ret: DEFAULT_K_MAX_RET,
        }
    }

    fn check(&self, f: &SliceFormula) -> Verdict {
        self.solver.check(f)
    }
}

/// Aggregate opacity classification for one conditional-jump address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpacityKind {
    /// Both outcomes observed at runtime: feasibility is exact.
    Covered,
    /// The unobserved direction is satisfiable: nothing proven.
    Genuine,
    /// Every occurrence proves the given direction infeasible.
    Opaque(BranchDirection),
    /// Both directions UNSAT: the whole predicate sits on a dead path.
    LikelyDead,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchDirection {
    Taken,
    Fallthrough,
}

#[derive(Debug, Clone)]
pub struct OpacityStatus {
    pub addr: Word,
    pub status: OpacityKind,
    /// Verdict of the unobserved-direction query per occurrence.
    pub per_occurrence: Vec<(usize, VerdictKind)>,
    pub solver_time: Duration,
}

/// Opaque-predicate detection at one conditional-jump address.
///
/// Dynamically covered predicates are exact; otherwise every occurrence is
/// sliced with the goal "the condition takes the unobserved direction" and
/// UNSAT across all occurrences makes the address opaque. The observed
/// direction is also queried (the trace valuation answers it without a
/// solver call) to separate opaque from dead predicates.
pub fn detect_opaque(d: &Detector, addr: Word) -> Result<OpacityStatus, DetectError> {
    let occurrences: Vec<usize> = d
        .trace
        .steps
        .iter()
        .filter(|s| s.addr == addr && s.instr.opcode.is_conditional_jump())
        .map(|s| s.index)
        .collect();
    if occurrences.is_empty() {
        return Err(DetectError::NotAConditional(addr));
    }
    let cov = branch_coverage(d.trace);
    if cov.get(&addr).map(|c| c.fully_covered()).unwrap_or(false) {
        return Ok(OpacityStatus {
            addr,
            status: OpacityKind::Covered,
            per_occurrence: Vec::new(),
            solver_time: Duration::ZERO,
        });
    }

    let mut per_occurrence = Vec::with_capacity(occurrences.len());
    let mut solver_time = Duration::ZERO;
    let mut any_sat = false;
    let mut all_unobserved_unsat = true;
    let mut all_observed_unsat = true;
    let mut unobserved_dir = BranchDirection::Taken;

    for &occ in &occurrences {
        let step = &d.trace.steps[occ];
        let taken = step.branch_taken.expect("conditional records direction");
        unobserved_dir = if taken {
            BranchDirection::Fallthrough
        } else {
            BranchDirection::Taken
        };
        let cond_reg = step.instr.reg(0);
        let w = d.trace.width().bits();
        // JZ jumps on zero. The goal states the *unobserved* direction.
        let jump_on_zero = step.instr.opcode == Opcode::Jz;
        let unobserved_is_zero = jump_on_zero != taken;
        let cond_var = Term::input(cond_reg.name(), w);
        let goal = if unobserved_is_zero {
            cond_var.eq(Term::constant(0, w))
        } else {
            cond_var.ne(Term::constant(0, w))
        };
        let cond = ReachabilityCondition {
            addr,
            occurrence: occ,
            goal,
        };
        let f = backward_slice_indexed(d.trace, Some(&d.index), &cond, d.k, d.metric)?;
        let v = d.check(&f);
        solver_time += v.elapsed;
        per_occurrence.push((occ, v.kind));
        match v.kind {
            VerdictKind::Sat => {
                any_sat = true;
                all_unobserved_unsat = false;
            }
            VerdictKind::Unsat => {}
            _ => all_unobserved_unsat = false,
        }
        // Observed direction: the trace valuation is a model unless the
        // path constraints themselves are vacuous, so this costs nothing.
        let obs = negate_goal(&f);
        if obs.witness_satisfies_goal() {
            all_observed_unsat = false;
        } else {
            let v = d.check(&obs);
            solver_time += v.elapsed;
            if v.kind != VerdictKind::Unsat {
                all_observed_unsat = false;
            }
        }
    }

    let status = if any_sat {
        OpacityKind::Genuine
    } else if all_unobserved_unsat {
        if all_observed_unsat {
            OpacityKind::LikelyDead
        } else {
            OpacityKind::Opaque(unobserved_dir)
        }
    } else {
        OpacityKind::Unknown
    };
    Ok(OpacityStatus {
        addr,
        status,
        per_occurrence,
        solver_time,
    })
}

/// Run [`detect_opaque`] on every conditional jump of the trace.
pub fn detect_all_opaque(d: &Detector) -> Vec<OpacityStatus> {
    let mut addrs: BTreeSet<Word> = BTreeSet::new();
    for s in &d.trace.steps {
        if s.instr.opcode.is_conditional_jump() {
            addrs.insert(s.addr);
        }
    }
    addrs
        .into_iter()
        .map(|a| detect_opaque(d, a).expect("address came from the trace"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstKind {
    OpaqueConst(Word),
    Variable,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct ConstStatus {
    pub addr: Word,
    pub reg: Register,
    pub status: ConstKind,
    pub per_occurrence: Vec<(usize, VerdictKind)>,
    pub solver_time: Duration,
}

/// Opaque-constant check: can `reg`, right after the instruction at
/// `addr`, hold anything other than its observed value?
pub fn opaque_constant(d: &Detector, addr: Word, reg: Register) -> Result<ConstStatus, DetectError> {
    let occurrences: Vec<usize> = d
        .trace
        .steps
        .iter()
        .filter(|s| s.addr == addr)
        .map(|s| s.index)
        .collect();
    if occurrences.is_empty() {
        return Err(DetectError::NeverExecuted(addr));
    }

    let mut per_occurrence = Vec::new();
    let mut solver_time = Duration::ZERO;
    let mut observed: BTreeSet<Word> = BTreeSet::new();
    let mut all_unsat = true;
    let mut any_sat = false;

    for &occ in &occurrences {
        let len = (occ + 1).min(d.k);
        let lo = occ + 1 - len;
        let mut seen_value = 0;
        let f = slice_window(
            d.trace,
            Some(&d.index),
            SliceRequest {
                lo,
                len,
                k: d.k,
                select: true,
                defuse_depth: match d.metric {
                    BoundMetric::Steps => None,
                    BoundMetric::DefUse => Some(d.k),
                },
                suppress_ret_binding_at: None,
            },
            |p| {
                let e = p.reg_at(occ + 1, reg)?;
                seen_value = p.observed(&e);
                Ok(e.ne(Term::constant(seen_value, p.width().bits())))
            },
        )?;
        observed.insert(seen_value);
        let v = d.check(&f);
        solver_time += v.elapsed;
        per_occurrence.push((occ, v.kind));
        match v.kind {
            VerdictKind::Unsat => {}
            VerdictKind::Sat => {
                any_sat = true;
                all_unsat = false;
            }
            _ => all_unsat = false,
        }
    }

    let status = if observed.len() > 1 || any_sat {
        ConstKind::Variable
    } else if all_unsat {
        ConstKind::OpaqueConst(observed.into_iter().next().unwrap())
    } else {
        ConstKind::Unknown
    };
    Ok(ConstStatus {
        addr,
        reg,
        status,
        per_occurrence,
        solver_time,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClosureKind {
    Closed,
    /// Another target is reachable; the model names a fresh one when the
    /// solver produced it.
    Open,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct ClosureStatus {
    pub addr: Word,
    pub targets: BTreeSet<Word>,
    pub status: ClosureKind,
    pub per_occurrence: Vec<(usize, VerdictKind)>,
    pub solver_time: Duration,
}

/// Jump-closure check for an indirect jump: is the observed target set
/// complete? UNSAT of "target differs from every observed value" closes
/// the jump.
pub fn jump_closure(d: &Detector, addr: Word) -> Result<ClosureStatus, DetectError> {
    let occurrences: Vec<usize> = d
        .trace
        .steps
        .iter()
        .filter(|s| {
            s.addr == addr && matches!(s.instr.opcode, Opcode::Jmpr | Opcode::Callr)
        })
        .map(|s| s.index)
        .collect();
    if occurrences.is_empty() {
        return Err(DetectError::NotAnIndirectJump(addr));
    }
    let targets: BTreeSet<Word> = occurrences
        .iter()
        .filter_map(|&i| d.trace.steps[i].jump_target)
        .collect();

    let mut per_occurrence = Vec::new();
    let mut solver_time = Duration::ZERO;
    let mut all_unsat = true;
    let mut any_sat = false;
    for &occ in &occurrences {
        let reg = d.trace.steps[occ].instr.reg(0);
        let len = occ.min(d.k);
        let f = slice_window(
            d.trace,
            Some(&d.index),
            SliceRequest {
                lo: occ - len,
                len,
                k: d.k,
                select: true,
                defuse_depth: match d.metric {
                    BoundMetric::Steps => None,
                    BoundMetric::DefUse => Some(d.k),
                },
                suppress_ret_binding_at: None,
            },
            |p| {
                let e = p.reg_at(occ, reg)?;
                let w = p.width().bits();
                let mut goal = Term::constant(1, 1);
                for &t in &targets {
                    goal = goal.and(e.clone().ne(Term::constant(t, w)));
                }
                Ok(goal)
            },
        )?;
        let v = d.check(&f);
        solver_time += v.elapsed;
        per_occurrence.push((occ, v.kind));
        match v.kind {
            VerdictKind::Unsat => {}
            VerdictKind::Sat => {
                any_sat = true;
                all_unsat = false;
            }
            _ => all_unsat = false,
        }
    }
    let status = if all_unsat {
        ClosureKind::Closed
    } else if any_sat {
        ClosureKind::Open
    } else {
        ClosureKind::Unknown
    };
    Ok(ClosureStatus {
        addr,
        targets,
        status,
        per_occurrence,
        solver_time,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelfmodKind {
    Unconditional,
    Conditional,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct SelfmodStatus {
    pub store_step: usize,
    pub addr: Word,
    pub written: Word,
    pub status: SelfmodKind,
    pub verdict: VerdictKind,
    pub solver_time: Duration,
}

/// Conditional-self-modification check for one code-region write: can the
/// instruction write any value other than the observed one?
pub fn selfmod_conditional(d: &Detector, occurrence: usize) -> Result<SelfmodStatus, DetectError> {
    let step = d
        .trace
        .steps
        .get(occurrence)
        .ok_or(DetectError::NotACodeWrite(occurrence))?;
    let written = step.written_value.ok_or(DetectError::NotACodeWrite(occurrence))?;
    let source_reg = match step.instr.opcode {
        Opcode::Store => Some(step.instr.reg(2)),
        Opcode::Push => Some(step.instr.reg(0)),
        // PUSHI/CALL/CALLR write constants.
        _ => None,
    };

    let len = occurrence.min(d.k);
    let f = slice_window(
        d.trace,
        Some(&d.index),
        SliceRequest {
            lo: occurrence - len,
            len,
            k: d.k,
            select: true,
            defuse_depth: match d.metric {
                BoundMetric::Steps => None,
                BoundMetric::DefUse => Some(d.k),
            },
            suppress_ret_binding_at: None,
        },
        |p| {
            let w = p.width().bits();
            let expr = match source_reg {
                Some(r) => p.reg_at(occurrence, r)?,
                None => Term::constant(written, w),
            };
            Ok(expr.ne(Term::constant(written, w)))
        },
    )?;
    let v = d.check(&f);
    let status = match v.kind {
        VerdictKind::Unsat => SelfmodKind::Unconditional,
        VerdictKind::Sat => SelfmodKind::Conditional,
        _ => SelfmodKind::Unknown,
    };
    Ok(SelfmodStatus {
        store_step: occurrence,
        addr: step.addr,
        written,
        status,
        verdict: v.kind,
        solver_time: v.elapsed,
    })
}
