//! Bounded backward slicing over a trace window, and the full forward
//! path predicate.
//!
//! The window is replayed forward once, producing one SSA-style symbol per
//! definition (named by the defining trace step, so the constraint set of a
//! small window is literally a subset of any enclosing window's set). Three
//! constraint kinds are emitted: definitions, branch-direction facts, and
//! concretization bindings that pin addresses and indirect-control values
//! to their traced values. Backward slices then keep only the
//! cone of influence of the goal: a definition is kept when its symbol is
//! needed, a branch/binding when its dependency cone reaches a needed
//! symbol. Anything still undefined at the window boundary becomes a fresh
//! cut input.

use super::{BinOp, Constraint, ConstraintKind, ReachabilityCondition, SliceFormula, Term, TermNode};
use crate::isa::{Opcode, Register, Width};
use crate::tracer::{step_defs, DefKey, MachineState, StateIndex, Trace};
use crate::Word;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("occurrence {occurrence} out of range (trace has {len} steps)")]
    OccurrenceOutOfRange { occurrence: usize, len: usize },
    #[error("condition addr {expected:#x} does not match step addr {actual:#x}")]
    AddrMismatch { expected: Word, actual: Word },
    #[error("probe at step {t} outside window [{lo}, {hi}]")]
    ProbeOutOfWindow { t: usize, lo: usize, hi: usize },
}

/// How the bound `k` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMetric {
    /// Dynamic trace steps (the default).
    #[default]
    Steps,
    /// Def-use chain length: the window spans the whole prefix but
    /// definitions more than `k` links from the goal are dropped.
    DefUse,
}

type VarKey = DefKey;

fn key_base_name(key: VarKey) -> String {
    match key {
        VarKey::Reg(i) => Register::new(i).unwrap().name().to_string(),
        VarKey::Mem(a) => format!("m{a:08x}"),
    }
}

fn key_width(key: VarKey, w: Width) -> u32 {
    match key {
        VarKey::Reg(_) => w.bits(),
        VarKey::Mem(_) => 8,
    }
}

type SymId = usize;

struct SymTab {
    names: Vec<String>,
    widths: Vec<u32>,
    witness: Vec<Word>,
    is_input: Vec<bool>,
}

impl SymTab {
    fn add(&mut self, name: String, width: u32, witness: Word, is_input: bool) -> SymId {
        self.names.push(name);
        self.widths.push(width);
        self.witness.push(witness);
        self.is_input.push(is_input);
        self.names.len() - 1
    }
}

enum CandClass {
    Def { lhs: SymId, rhs_vars: Vec<SymId> },
    Path { vars: Vec<SymId> },
}

struct Cand {
    term: Term,
    kind: ConstraintKind,
    origin: usize,
    class: CandClass,
}

/// Parameters for [`slice_window`].
#[derive(Debug, Clone, Copy)]
pub struct SliceRequest {
    /// First step of the window.
    pub lo: usize,
    /// Number of steps in the window (may be zero; probes then refer to
    /// the state before `lo`).
    pub len: usize,
    /// Reported bound.
    pub k: usize,
    /// Keep only the goal's cone of influence (false for path predicates).
    pub select: bool,
    /// `Some(depth)` switches to the def-use-chain bound.
    pub defuse_depth: Option<usize>,
    /// Suppress the indirect-control binding of the RET at this step (used
    /// when the ret's own target is the thing being asked about).
    pub suppress_ret_binding_at: Option<usize>,
}

struct Emitter<'t> {
    trace: &'t Trace,
    index: Option<&'t StateIndex>,
    width: Width,
    lo: usize,
    len: usize,
    entry_state: MachineState,
    syms: SymTab,
    by_name: HashMap<String, SymId>,
    /// Current symbol per variable.
    cur: HashMap<VarKey, SymId>,
    /// Version history: (visible_from_step, sym), ordered.
    versions: HashMap<VarKey, Vec<(usize, SymId)>>,
    /// Entry-boundary symbol per variable, if materialised.
    entry_syms: HashMap<VarKey, SymId>,
    cands: Vec<Cand>,
    /// Disambiguates two defs of one key in a single step (POP sp).
    step_def_seq: HashMap<(VarKey, usize), usize>,
}

impl<'t> Emitter<'t> {
    fn new(trace: &'t Trace, index: Option<&'t StateIndex>, lo: usize, len: usize) -> Emitter<'t> {
        let entry_state = match index {
            Some(ix) => ix.state_before(lo),
            None => trace.state_before(lo),
        };
        Emitter {
            trace,
            index,
            width: trace.width(),
            lo,
            len,
            entry_state,
            syms: SymTab {
                names: Vec::new(),
                widths: Vec::new(),
                witness: Vec::new(),
                is_input: Vec::new(),
            },
            by_name: HashMap::new(),
            cur: HashMap::new(),
            versions: HashMap::new(),
            entry_syms: HashMap::new(),
            cands: Vec::new(),
            step_def_seq: HashMap::new(),
        }
    }

    fn var(&self, s: SymId) -> Term {
        Term::input(self.syms.names[s].clone(), self.syms.widths[s])
    }

    fn entry_value(&self, key: VarKey) -> Word {
        match key {
            VarKey::Reg(i) => self.entry_state.regs[i as usize],
            VarKey::Mem(a) => self.entry_state.mem.get(&a).copied().unwrap_or(0) as Word,
        }
    }

    /// Step index of the last definition of `key` strictly before `lo`,
    /// used to give boundary inputs their position-stable names.
    fn last_def_before_window(&self, key: VarKey) -> Option<usize> {
        if let Some(ix) = self.index {
            return ix.last_def_before(key, self.lo);
        }
        let w = self.width;
        for s in (0..self.lo).rev() {
            if step_defs(w, &self.trace.steps[s]).contains(&key) {
                return Some(s);
            }
        }
        None
    }

    /// Is this byte covered by an input-global word (a program input)?
    fn is_input_global_byte(&self, addr: Word) -> bool {
        let wb = self.width.bytes();
        self.trace
            .inputs
            .global_words
            .keys()
            .any(|&g| addr >= g && addr < g + wb)
    }

    /// Every byte of the word at `addr` holds untouched data-region image
    /// bytes as of step `at`: below the code region, not a program input,
    /// never written earlier in the trace.
    fn is_const_word(&self, addr: Word, at: usize) -> bool {
        let wb = self.width.bytes();
        (0..wb).all(|j| {
            let a = self.width.truncate(addr + j);
            self.trace.program.contains(a)
                && a < self.trace.program.entry
                && !self.is_input_global_byte(a)
                && self.last_def_anywhere_before(VarKey::Mem(a), at).is_none()
        })
    }

    fn last_def_anywhere_before(&self, key: VarKey, before: usize) -> Option<usize> {
        if let Some(ix) = self.index {
            return ix.last_def_before(key, before);
        }
        let w = self.width;
        (0..before.min(self.trace.steps.len()))
            .rev()
            .find(|&s| step_defs(w, &self.trace.steps[s]).contains(&key))
    }

    /// Word-stride run of constant image data around `ea`, capped.
    fn const_region(&self, ea: Word, at: usize) -> Vec<Word> {
        const MAX_WORDS: usize = 64;
        if !self.is_const_word(ea, at) {
            return Vec::new();
        }
        let wb = self.width.bytes();
        let mut lo = ea;
        let mut hi = ea;
        let mut count = 1;
        while count < MAX_WORDS && lo >= wb && self.is_const_word(lo - wb, at) {
            lo -= wb;
            count += 1;
        }
        while count < MAX_WORDS && self.is_const_word(hi + wb, at) {
            hi += wb;
            count += 1;
        }
        (0..count as Word).map(|i| lo + i * wb).collect()
    }

    fn image_word(&self, addr: Word) -> Word {
        let mut v = 0;
        for j in 0..self.width.bytes() {
            let a = self.width.truncate(addr + j);
            v |= (self.trace.program.byte(a).unwrap_or(0) as Word) << (8 * j);
        }
        v
    }

    fn entry_input(&mut self, key: VarKey) -> SymId {
        if let Some(&s) = self.entry_syms.get(&key) {
            return s;
        }
        let last_def = self.last_def_before_window(key);
        let name = match last_def {
            Some(step) => format!("{}.s{step:06}", key_base_name(key)),
            None => format!("{}.init", key_base_name(key)),
        };
        // Memory that was never written and is not a program input holds a
        // known constant: an image byte, or the machine's zero for
        // untouched cells. Registers and input globals stay free.
        let fixed: Option<Word> = match (key, last_def) {
            (VarKey::Mem(a), None) if !self.is_input_global_byte(a) => {
                Some(self.trace.program.byte(a).unwrap_or(0) as Word)
            }
            _ => None,
        };
        let sym = self.syms.add(
            name.clone(),
            key_width(key, self.width),
            self.entry_value(key),
            fixed.is_none(),
        );
        self.by_name.insert(name.clone(), sym);
        self.entry_syms.insert(key, sym);
        self.versions.entry(key).or_default().insert(0, (self.lo, sym));
        if let Some(v) = fixed {
            let term = self
                .var(sym)
                .eq(Term::constant(v, key_width(key, self.width)));
            self.cands.push(Cand {
                term,
                kind: ConstraintKind::Def,
                origin: self.lo,
                class: CandClass::Def {
                    lhs: sym,
                    rhs_vars: vec![],
                },
            });
        }
        sym
    }

    fn resolve(&mut self, key: VarKey) -> SymId {
        if let Some(&s) = self.cur.get(&key) {
            return s;
        }
        let s = self.entry_input(key);
        self.cur.insert(key, s);
        s
    }

    fn witness_eval(&self, t: &Term) -> Word {
        let syms = &self.syms;
        let by_name = &self.by_name;
        t.eval(&mut |name, _| syms.witness[by_name[name]])
    }

    fn define(&mut self, key: VarKey, rhs: Term, rhs_vars: Vec<SymId>, origin: usize) -> SymId {
        let seq = self.step_def_seq.entry((key, origin)).or_insert(0);
        let suffix = if *seq == 0 { String::new() } else { format!("{}", (b'a' + *seq as u8) as char) };
        *seq += 1;
        let name = format!("{}.s{origin:06}{suffix}", key_base_name(key));
        let value = self.witness_eval(&rhs);
        let sym = self.syms.add(name.clone(), key_width(key, self.width), value, false);
        self.by_name.insert(name, sym);
        let term = self.var(sym).eq(rhs);
        self.cands.push(Cand {
            term,
            kind: ConstraintKind::Def,
            origin,
            class: CandClass::Def { lhs: sym, rhs_vars },
        });
        self.cur.insert(key, sym);
        self.versions.entry(key).or_default().push((origin + 1, sym));
        sym
    }

    fn path_constraint(&mut self, term: Term, kind: ConstraintKind, vars: Vec<SymId>, origin: usize) {
        debug_assert_eq!(self.witness_eval(&term), 1, "path constraint must hold on the trace");
        self.cands.push(Cand {
            term,
            kind,
            origin,
            class: CandClass::Path { vars },
        });
    }

    /// Term for the memory word whose low byte sits at `addr`, resolving
    /// byte cells. Returns the operand symbols too.
    fn mem_word_term(&mut self, addr: Word, at_time: Option<usize>) -> (Term, Vec<SymId>) {
        let wb = self.width.bytes();
        let mut ids = Vec::with_capacity(wb as usize);
        for j in 0..wb {
            let a = self.width.truncate(addr + j);
            let id = match at_time {
                None => self.resolve(VarKey::Mem(a)),
                Some(t) => self.version_at(VarKey::Mem(a), t),
            };
            ids.push(id);
        }
        let mut term = self.var(ids[wb as usize - 1]);
        for j in (0..wb as usize - 1).rev() {
            term = Term::binary(BinOp::Concat, term, self.var(ids[j]));
        }
        (term, ids)
    }

    /// Symbol holding `key` in the state before step `t`.
    fn version_at(&mut self, key: VarKey, t: usize) -> SymId {
        let has_older = self
            .versions
            .get(&key)
            .and_then(|v| v.iter().rev().find(|(from, _)| *from <= t))
            .map(|&(_, s)| s);
        match has_older {
            Some(s) => s,
            None => self.entry_input(key),
        }
    }

    fn store_bytes(&mut self, ea: Word, value_term: Term, value_vars: Vec<SymId>, origin: usize) {
        let wb = self.width.bytes();
        for j in 0..wb {
            let a = self.width.truncate(ea + j);
            let byte = if wb == 1 {
                value_term.clone()
            } else {
                value_term.clone().extract((8 * j + 7) as u32, (8 * j) as u32)
            };
            self.define(VarKey::Mem(a), byte, value_vars.clone(), origin);
        }
    }

    fn emit_step(&mut self, idx: usize, suppress_ret_binding: bool) {
        let step = &self.trace.steps[idx];
        let instr = step.instr.clone();
        let w = self.width;
        let wb = w.bytes();
        let cword = |v: Word| Term::constant(v, w.bits());

        use Opcode::*;
        match instr.opcode {
            Movi => {
                self.define(VarKey::Reg(instr.reg(0).index() as u8), cword(instr.word(1)), vec![], idx);
            }
            Mov => {
                let rs = self.resolve(VarKey::Reg(instr.reg(1).index() as u8));
                let t = self.var(rs);
                self.define(VarKey::Reg(instr.reg(0).index() as u8), t, vec![rs], idx);
            }
            Add | Sub | Mul | Udiv | And | Or | Xor | Shl | Shr => {
                let rd = VarKey::Reg(instr.reg(0).index() as u8);
                let a = self.resolve(rd);
                let b = self.resolve(VarKey::Reg(instr.reg(1).index() as u8));
                let t = Term::binary(alu_op(instr.opcode), self.var(a), self.var(b));
                self.define(rd, t, vec![a, b], idx);
            }
            Addi | Subi | Muli | Andi | Ori | Xori | Shli | Shri => {
                let rd = VarKey::Reg(instr.reg(0).index() as u8);
                let a = self.resolve(rd);
                let t = Term::binary(alu_op(instr.opcode), self.var(a), cword(instr.word(1)));
                self.define(rd, t, vec![a], idx);
            }
            Eq | Ne | Ult | Uge | Slt | Sge => {
                let a = self.resolve(VarKey::Reg(instr.reg(1).index() as u8));
                let b = self.resolve(VarKey::Reg(instr.reg(2).index() as u8));
                let cmp = Term::binary(cmp_op(instr.opcode), self.var(a), self.var(b));
                self.define(
                    VarKey::Reg(instr.reg(0).index() as u8),
                    cmp.zext(w.bits()),
                    vec![a, b],
                    idx,
                );
            }
            Load => {
                let ea = step.effective_addrs[0];
                let base = self.resolve(VarKey::Reg(instr.reg(1).index() as u8));
                let addr_term = Term::binary(BinOp::Add, self.var(base), cword(instr.word(2)));
                let region = self.const_region(ea, idx);
                if region.len() >= 2 {
                    // Set-valued concretization: a read of never-written
                    // image data keeps its address symbolic within the
                    // surrounding constant region, so closure questions
                    // can see sibling table entries.
                    let mut in_region = addr_term.clone().eq(cword(region[0]));
                    for &a in &region[1..] {
                        in_region = Term::binary(
                            BinOp::Or,
                            in_region,
                            addr_term.clone().eq(cword(a)),
                        );
                    }
                    self.path_constraint(in_region, ConstraintKind::Binding, vec![base], idx);
                    let mut value = cword(self.image_word(*region.last().unwrap()));
                    for &a in region.iter().rev().skip(1) {
                        value = Term::ite(
                            addr_term.clone().eq(cword(a)),
                            cword(self.image_word(a)),
                            value,
                        );
                    }
                    self.define(VarKey::Reg(instr.reg(0).index() as u8), value, vec![base], idx);
                } else {
                    self.path_constraint(
                        addr_term.eq(cword(ea)),
                        ConstraintKind::Binding,
                        vec![base],
                        idx,
                    );
                    let (word, mut vars) = self.mem_word_term(ea, None);
                    vars.dedup();
                    self.define(VarKey::Reg(instr.reg(0).index() as u8), word, vars, idx);
                }
            }
            Store => {
                let ea = step.effective_addrs[0];
                let base = self.resolve(VarKey::Reg(instr.reg(0).index() as u8));
                let addr_term = Term::binary(BinOp::Add, self.var(base), cword(instr.word(1)));
                self.path_constraint(addr_term.eq(cword(ea)), ConstraintKind::Binding, vec![base], idx);
                let src = self.resolve(VarKey::Reg(instr.reg(2).index() as u8));
                let src_t = self.var(src);
                self.store_bytes(ea, src_t, vec![src], idx);
            }
            Push | Pushi => {
                let ea = step.effective_addrs[0];
                let sp_old = self.resolve(VarKey::Reg(8));
                let sp_new_t = Term::binary(BinOp::Sub, self.var(sp_old), cword(wb));
                let sp_new = self.define(VarKey::Reg(8), sp_new_t, vec![sp_old], idx);
                let eq = self.var(sp_new).eq(cword(ea));
                self.path_constraint(eq, ConstraintKind::Binding, vec![sp_new], idx);
                let (vt, vv) = if instr.opcode == Push {
                    let s = self.resolve(VarKey::Reg(instr.reg(0).index() as u8));
                    (self.var(s), vec![s])
                } else {
                    (cword(instr.word(0)), vec![])
                };
                self.store_bytes(ea, vt, vv, idx);
            }
            Pop => {
                let ea = step.effective_addrs[0];
                let sp_old = self.resolve(VarKey::Reg(8));
                let eq = self.var(sp_old).eq(cword(ea));
                self.path_constraint(eq, ConstraintKind::Binding, vec![sp_old], idx);
                let (word, mut vars) = self.mem_word_term(ea, None);
                vars.dedup();
                self.define(VarKey::Reg(instr.reg(0).index() as u8), word, vars, idx);
                let t = Term::binary(BinOp::Add, self.var(sp_old), cword(wb));
                self.define(VarKey::Reg(8), t, vec![sp_old], idx);
            }
            Jmp | Halt => {}
            Jmpr | Callr => {
                let rs = self.resolve(VarKey::Reg(instr.reg(0).index() as u8));
                let target = step.jump_target.expect("traced indirect jump has a target");
                let eq = self.var(rs).eq(cword(target));
                self.path_constraint(eq, ConstraintKind::Binding, vec![rs], idx);
                if instr.opcode == Callr {
                    self.emit_call_push(step.effective_addrs[0], step_fallthrough(w, step), idx);
                }
            }
            Jz | Jnz => {
                let c = self.resolve(VarKey::Reg(instr.reg(0).index() as u8));
                let taken = step.branch_taken.expect("conditional jump records direction");
                let zero_means_jump = instr.opcode == Jz;
                let is_zero = taken == zero_means_jump;
                let cond = if is_zero {
                    self.var(c).eq(cword(0))
                } else {
                    self.var(c).ne(cword(0))
                };
                self.path_constraint(cond, ConstraintKind::Branch, vec![c], idx);
            }
            Call => {
                self.emit_call_push(step.effective_addrs[0], step_fallthrough(w, step), idx);
            }
            Ret => {
                let ea = step.effective_addrs[0];
                let sp_old = self.resolve(VarKey::Reg(8));
                let eq = self.var(sp_old).eq(cword(ea));
                self.path_constraint(eq, ConstraintKind::Binding, vec![sp_old], idx);
                if !suppress_ret_binding {
                    let target = step.jump_target.expect("ret records its target");
                    let (word, vars) = self.mem_word_term(ea, None);
                    self.path_constraint(word.eq(cword(target)), ConstraintKind::Binding, vars, idx);
                }
                let t = Term::binary(BinOp::Add, self.var(sp_old), cword(wb));
                self.define(VarKey::Reg(8), t, vec![sp_old], idx);
            }
        }
    }

    fn emit_call_push(&mut self, ea: Word, return_site: Word, idx: usize) {
        let w = self.width;
        let sp_old = self.resolve(VarKey::Reg(8));
        let sp_new_t = Term::binary(BinOp::Sub, self.var(sp_old), Term::constant(w.bytes(), w.bits()));
        let sp_new = self.define(VarKey::Reg(8), sp_new_t, vec![sp_old], idx);
        let eq = self.var(sp_new).eq(Term::constant(ea, w.bits()));
        self.path_constraint(eq, ConstraintKind::Binding, vec![sp_new], idx);
        self.store_bytes(ea, Term::constant(return_site, w.bits()), vec![], idx);
    }
}

fn step_fallthrough(w: Width, step: &crate::tracer::TraceStep) -> Word {
    w.truncate(step.addr + step.instr.byte_length)
}

fn alu_op(op: Opcode) -> BinOp {
    match op {
        Opcode::Add | Opcode::Addi => BinOp::Add,
        Opcode::Sub | Opcode::Subi => BinOp::Sub,
        Opcode::Mul | Opcode::Muli => BinOp::Mul,
        Opcode::Udiv => BinOp::Udiv,
        Opcode::And | Opcode::Andi => BinOp::And,
        Opcode::Or | Opcode::Ori => BinOp::Or,
        Opcode::Xor | Opcode::Xori => BinOp::Xor,
        Opcode::Shl | Opcode::Shli => BinOp::Shl,
        Opcode::Shr | Opcode::Shri => BinOp::Lshr,
        _ => unreachable!(),
    }
}

fn cmp_op(op: Opcode) -> BinOp {
    match op {
        Opcode::Eq => BinOp::Eq,
        Opcode::Ne => BinOp::Ne,
        Opcode::Ult => BinOp::Ult,
        Opcode::Uge => BinOp::Uge,
        Opcode::Slt => BinOp::Slt,
        Opcode::Sge => BinOp::Sge,
        _ => unreachable!(),
    }
}

/// Access to machine state symbols at window boundaries, handed to goal
/// builders.
pub struct Probes<'e, 't> {
    emitter: &'e mut Emitter<'t>,
}

impl Probes<'_, '_> {
    pub fn width(&self) -> Width {
        self.emitter.width
    }

    fn check_time(&self, t: usize) -> Result<(), SliceError> {
        let lo = self.emitter.lo;
        let hi = lo + self.emitter.len;
        if t < lo || t > hi {
            return Err(SliceError::ProbeOutOfWindow { t, lo, hi });
        }
        Ok(())
    }

    /// Register value in the state before step `t`.
    pub fn reg_at(&mut self, t: usize, r: Register) -> Result<Term, SliceError> {
        self.check_time(t)?;
        let id = self.emitter.version_at(VarKey::Reg(r.index() as u8), t);
        Ok(self.emitter.var(id))
    }

    /// Memory word (low byte at `addr`) in the state before step `t`.
    pub fn mem_word_at(&mut self, t: usize, addr: Word) -> Result<Term, SliceError> {
        self.check_time(t)?;
        let (term, _) = self.emitter.mem_word_term(addr, Some(t));
        Ok(term)
    }

    /// Concrete (traced) value of a probe-built term.
    pub fn observed(&self, term: &Term) -> Word {
        self.emitter.witness_eval(term)
    }
}

/// Run the windowed slicer with an arbitrary goal builder.
pub fn slice_window(
    trace: &Trace,
    index: Option<&StateIndex>,
    req: SliceRequest,
    goal: impl FnOnce(&mut Probes) -> Result<Term, SliceError>,
) -> Result<SliceFormula, SliceError> {
    if req.lo + req.len > trace.steps.len() {
        return Err(SliceError::OccurrenceOutOfRange {
            occurrence: req.lo + req.len,
            len: trace.steps.len(),
        });
    }
    let mut emitter = Emitter::new(trace, index, req.lo, req.len);
    for idx in req.lo..req.lo + req.len {
        let suppress = req.suppress_ret_binding_at == Some(idx);
        emitter.emit_step(idx, suppress);
    }
    let goal = goal(&mut Probes { emitter: &mut emitter })?;

    let mut goal_syms = BTreeSet::new();
    goal.collect_inputs(&mut goal_syms);
    let goal_ids: Vec<SymId> = goal_syms.iter().map(|n| emitter.by_name[n]).collect();

    let selected: Vec<bool> = if req.select {
        select_cone(&emitter, &goal_ids, req.defuse_depth)
    } else {
        vec![true; emitter.cands.len()]
    };

    // Assemble the formula from selected candidates, in emission order.
    let mut used: BTreeSet<SymId> = goal_ids.iter().copied().collect();
    let mut constraints = Vec::new();
    for (cand, keep) in emitter.cands.iter().zip(&selected) {
        if !keep {
            continue;
        }
        match &cand.class {
            CandClass::Def { lhs, rhs_vars } => {
                used.insert(*lhs);
                used.extend(rhs_vars.iter().copied());
            }
            CandClass::Path { vars } => used.extend(vars.iter().copied()),
        }
        constraints.push(Constraint {
            term: cand.term.clone(),
            kind: cand.kind,
            origin: Some(cand.origin),
        });
    }

    let mut vars = BTreeMap::new();
    let mut cut_inputs = BTreeSet::new();
    let mut witness = BTreeMap::new();
    for id in used {
        let name = emitter.syms.names[id].clone();
        vars.insert(name.clone(), emitter.syms.widths[id]);
        witness.insert(name.clone(), emitter.syms.witness[id]);
        if emitter.syms.is_input[id] {
            cut_inputs.insert(name);
        }
    }

    Ok(SliceFormula {
        vars,
        constraints,
        goal,
        cut_inputs,
        witness,
        span: (req.len > 0).then_some((req.lo, req.lo + req.len - 1)),
        k_used: req.k,
    })
}

/// Cone-of-influence selection. Definitions are pulled backward from
/// needed symbols; branch/binding constraints join when their dependency
/// cone intersects the needed set, bringing the cone with them.
fn select_cone(emitter: &Emitter, goal_ids: &[SymId], defuse_depth: Option<usize>) -> Vec<bool> {
    let n = emitter.cands.len();
    let mut selected = vec![false; n];
    let mut def_of: HashMap<SymId, usize> = HashMap::new();
    for (i, c) in emitter.cands.iter().enumerate() {
        if let CandClass::Def { lhs, .. } = c.class {
            def_of.insert(lhs, i);
        }
    }

    let mut needed: HashSet<SymId> = HashSet::new();
    let mut depth: HashMap<SymId, usize> = HashMap::new();
    let mut wl: Vec<SymId> = Vec::new();
    for &g in goal_ids {
        if needed.insert(g) {
            depth.insert(g, 0);
            wl.push(g);
        }
    }

    let close = |wl: &mut Vec<SymId>,
                 needed: &mut HashSet<SymId>,
                 depth: &mut HashMap<SymId, usize>,
                 selected: &mut Vec<bool>| {
        while let Some(s) = wl.pop() {
            let d = depth[&s];
            if let Some(max) = defuse_depth {
                if d >= max {
                    continue;
                }
            }
            if let Some(&ci) = def_of.get(&s) {
                if !selected[ci] {
                    selected[ci] = true;
                    if let CandClass::Def { rhs_vars, .. } = &emitter.cands[ci].class {
                        for &v in rhs_vars {
                            let nd = d + 1;
                            let e = depth.entry(v).or_insert(nd);
                            if *e > nd {
                                *e = nd;
                            }
                            if needed.insert(v) {
                                wl.push(v);
                            }
                        }
                    }
                }
            }
        }
    };
    close(&mut wl, &mut needed, &mut depth, &mut selected);

    // Path constraints: compute each one's backward cone lazily.
    let mut cones: Vec<Option<HashSet<SymId>>> = vec![None; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let vars = match &emitter.cands[i].class {
                CandClass::Path { vars } => vars,
                CandClass::Def { .. } => continue,
            };
            let cone = cones[i].get_or_insert_with(|| {
                let mut seen: HashSet<SymId> = HashSet::new();
                let mut stack: Vec<SymId> = vars.clone();
                while let Some(s) = stack.pop() {
                    if !seen.insert(s) {
                        continue;
                    }
                    if let Some(&ci) = def_of.get(&s) {
                        if let CandClass::Def { rhs_vars, .. } = &emitter.cands[ci].class {
                            stack.extend(rhs_vars.iter().copied());
                        }
                    }
                }
                seen
            });
            if cone.iter().any(|s| needed.contains(s)) {
                selected[i] = true;
                for &v in vars.clone().iter() {
                    depth.entry(v).or_insert(0);
                    if needed.insert(v) {
                        wl.push(v);
                    }
                }
                close(&mut wl, &mut needed, &mut depth, &mut selected);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    selected
}

/// Rewrite conventional goal leaves (`Input("r0".."sp")`, `Select`) into
/// probe symbols at time `t`.
fn resolve_goal(goal: &Term, probes: &mut Probes, t: usize) -> Result<Term, SliceError> {
    Ok(match goal.node() {
        TermNode::Input { name, .. } => {
            match Register::all().find(|r| r.name() == name.as_str()) {
                Some(r) => probes.reg_at(t, r)?,
                None => goal.clone(),
            }
        }
        TermNode::Select { addr, .. } => probes.mem_word_at(t, *addr)?,
        TermNode::Const { .. } => goal.clone(),
        TermNode::Un { op, arg } => Term::unary(*op, resolve_goal(arg, probes, t)?),
        TermNode::Bin { op, lhs, rhs } => Term::binary(
            *op,
            resolve_goal(lhs, probes, t)?,
            resolve_goal(rhs, probes, t)?,
        ),
        TermNode::Ite { cond, then_, else_ } => Term::ite(
            resolve_goal(cond, probes, t)?,
            resolve_goal(then_, probes, t)?,
            resolve_goal(else_, probes, t)?,
        ),
    })
}

/// The spec'd slicing entry point: walk backward `k` steps from the
/// occurrence and keep the goal's cone.
pub fn backward_slice(
    trace: &Trace,
    cond: &ReachabilityCondition,
    k: usize,
) -> Result<SliceFormula, SliceError> {
    backward_slice_indexed(trace, None, cond, k, BoundMetric::Steps)
}

pub fn backward_slice_indexed(
    trace: &Trace,
    index: Option<&StateIndex>,
    cond: &ReachabilityCondition,
    k: usize,
    metric: BoundMetric,
) -> Result<SliceFormula, SliceError> {
    let occ = cond.occurrence;
    if occ >= trace.steps.len() {
        return Err(SliceError::OccurrenceOutOfRange {
            occurrence: occ,
            len: trace.steps.len(),
        });
    }
    let actual = trace.steps[occ].addr;
    if actual != cond.addr {
        return Err(SliceError::AddrMismatch {
            expected: cond.addr,
            actual,
        });
    }
    let (lo, len, defuse) = match metric {
        BoundMetric::Steps => (occ.saturating_sub(k), occ.min(k), None),
        BoundMetric::DefUse => (0, occ, Some(k)),
    };
    slice_window(
        trace,
        index,
        SliceRequest {
            lo,
            len,
            k,
            select: true,
            defuse_depth: defuse,
            suppress_ret_binding_at: None,
        },
        |p| resolve_goal(&cond.goal, p, occ),
    )
}

/// Full forward path predicate: every definition, branch constraint and
/// binding from step 0 through `upto` inclusive, no pruning. Free inputs
/// are the initial registers and memory. The goal defaults to `true`.
pub fn forward_path_predicate(trace: &Trace, upto: usize) -> Result<SliceFormula, SliceError> {
    forward_path_predicate_with_goal(trace, upto, |_| Ok(Term::constant(1, 1)))
}

pub fn forward_path_predicate_with_goal(
    trace: &Trace,
    upto: usize,
    goal: impl FnOnce(&mut Probes) -> Result<Term, SliceError>,
) -> Result<SliceFormula, SliceError> {
    if upto >= trace.steps.len() {
        return Err(SliceError::OccurrenceOutOfRange {
            occurrence: upto,
            len: trace.steps.len(),
        });
    }
    slice_window(
        trace,
        None,
        SliceRequest {
            lo: 0,
            len: upto + 1,
            k: usize::MAX,
            select: false,
            defuse_depth: None,
            suppress_ret_binding_at: None,
        },
        goal,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;
    use crate::tracer::{run, Inputs, RunConfig};

    fn trace_of(src: &str) -> Trace {
        let l = assemble(src, Width::W32, None).unwrap();
        run(&l.image, &Inputs::new(), RunConfig::for_width(Width::W32))
    }

    fn trace_with(src: &str, inputs: Inputs) -> Trace {
        let l = assemble(src, Width::W32, None).unwrap();
        run(&l.image, &inputs, RunConfig::for_width(Width::W32))
    }

    #[test]
    fn movi_then_goal_k1() {
        // goal r0 != 0 immediately after MOVI r0,0, k=1:
        // formula is {r0 = 0} /\ r0 != 0, no cut inputs.
        let t = trace_of("MOVI r0, 0\nHALT\n");
        let cond = ReachabilityCondition {
            addr: t.steps[1].addr,
            occurrence: 1,
            goal: Term::input("r0", 32).ne(Term::constant(0, 32)),
        };
        let f = backward_slice(&t, &cond, 1).unwrap();
        assert_eq!(f.constraints.len(), 1);
        assert!(f.cut_inputs.is_empty());
        assert!(f.check_witness());
        assert!(!f.witness_satisfies_goal());
    }

    #[test]
    fn cut_inputs_appear_beyond_window() {
        // With k=1 the MOVI that defines r1 is outside the window, so the
        // ADD's operand becomes a cut input.
        let t = trace_of("MOVI r1, 7\nMOVI r0, 1\nADD r0, r1\nHALT\n");
        let cond = ReachabilityCondition {
            addr: t.steps[3].addr,
            occurrence: 3,
            goal: Term::input("r0", 32).ne(Term::constant(8, 32)),
        };
        let f = backward_slice(&t, &cond, 1).unwrap();
        // r0's ADD def selected; its operands r0.s1 (cut) and r1.s0 (cut).
        assert_eq!(f.constraints.len(), 1);
        assert_eq!(f.cut_inputs.len(), 2);
        assert!(f.check_witness());

        // Widening the window to k=3 adds the MOVI defs and removes cuts.
        let f3 = backward_slice(&t, &cond, 3).unwrap();
        assert_eq!(f3.constraints.len(), 3);
        assert!(f3.cut_inputs.is_empty());
        // Constraint growth: every k=1 constraint appears in the k=3 set.
        let set3: Vec<String> = f3.constraints.iter().map(|c| format!("{:?}", c.term)).collect();
        for c in &f.constraints {
            assert!(set3.contains(&format!("{:?}", c.term)));
        }
    }

    #[test]
    fn branch_constraint_propagates_between_siblings() {
        // ULT then UGE over the same operands: the slice of the second
        // branch picks up the first branch's constraint through the shared
        // operand cone, making the second direction provably dead.
        let src = "\
gx: .word 0
gy: .word 0
start:
    MOVI r4, gx
    LOAD r0, [r4]
    MOVI r4, gy
    LOAD r1, [r4]
    ULT r2, r0, r1
    JNZ r2, less
    HALT
less:
    UGE r3, r0, r1
    JNZ r3, trap
    HALT
trap:
    HALT
";
        let l = assemble(src, Width::W32, None).unwrap();
        let inputs = Inputs::new().global(&l.image, "gx", 3).global(&l.image, "gy", 9);
        let t = run(&l.image, &inputs, RunConfig::for_width(Width::W32));
        // Find the second conditional jump occurrence (JNZ r3).
        let occ = t
            .steps
            .iter()
            .position(|s| s.instr.opcode == Opcode::Jnz && s.instr.reg(0).index() == 3)
            .unwrap();
        // Unobserved direction: taken, i.e. r3 != 0.
        let cond = ReachabilityCondition {
            addr: t.steps[occ].addr,
            occurrence: occ,
            goal: Term::input("r3", 32).ne(Term::constant(0, 32)),
        };
        let f = backward_slice(&t, &cond, 16).unwrap();
        // The first branch's constraint must be included.
        assert!(
            f.constraints.iter().any(|c| c.kind == ConstraintKind::Branch),
            "sibling branch constraint missing: {:?}",
            f.constraints
        );
        // And the formula must be unsatisfiable (checked exhaustively at
        // low width elsewhere; here just confirm the witness rejects it).
        assert!(!f.witness_satisfies_goal());
    }

    #[test]
    fn forward_contains_branch_fact() {
        let t = trace_with(
            "MOVI r1, 2\nloop:\nSUBI r1, 1\nJNZ r1, loop\nHALT\n",
            Inputs::new(),
        );
        let jnz = t
            .steps
            .iter()
            .position(|s| s.instr.opcode == Opcode::Jnz)
            .unwrap();
        let f = forward_path_predicate(&t, jnz).unwrap();
        assert!(f
            .constraints
            .iter()
            .any(|c| c.kind == ConstraintKind::Branch && c.origin == Some(jnz)));
        assert!(f.check_witness());
        // Goal-free satisfiability: witness satisfies everything.
        assert!(f.witness_satisfies_goal());
    }

    #[test]
    fn forward_grows_linearly_backward_stays_bounded() {
        let t = trace_of(
            "MOVI r1, 40\nloop:\nADDI r0, 3\nSUBI r1, 1\nJNZ r1, loop\nHALT\n",
        );
        let occs: Vec<usize> = t
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.instr.opcode == Opcode::Jnz)
            .map(|(i, _)| i)
            .collect();
        let early = occs[1];
        let late = *occs.last().unwrap();
        let fwd_early = forward_path_predicate(&t, early).unwrap();
        let fwd_late = forward_path_predicate(&t, late).unwrap();
        assert!(fwd_late.constraints.len() > 2 * fwd_early.constraints.len());

        let goal = Term::input("r1", 32).eq(Term::constant(0, 32));
        let mk = |occ: usize| ReachabilityCondition {
            addr: t.steps[occ].addr,
            occurrence: occ,
            goal: goal.clone(),
        };
        let bk_early = backward_slice(&t, &mk(early), 4).unwrap();
        let bk_late = backward_slice(&t, &mk(late), 4).unwrap();
        // Bounded: window-limited regardless of position.
        assert!(bk_late.constraints.len() <= bk_early.constraints.len() + 4);
    }

    #[test]
    fn memory_flows_through_slice() {
        // Store then load through memory; the slice reconstructs the flow.
        let t = trace_of(
            "MOVI r1, 0xab\nPUSH r1\nPOP r2\nHALT\n",
        );
        let cond = ReachabilityCondition {
            addr: t.steps[3].addr,
            occurrence: 3,
            goal: Term::input("r2", 32).ne(Term::constant(0xab, 32)),
        };
        let f = backward_slice(&t, &cond, 3).unwrap();
        assert!(f.check_witness());
        assert!(!f.witness_satisfies_goal());
        assert!(f.cut_inputs.is_empty(), "cuts: {:?}", f.cut_inputs);
    }

    #[test]
    fn defuse_metric_reaches_past_step_bound() {
        // A long chain of unrelated padding between the def and the use:
        // steps metric misses the def at small k, def-use metric finds it.
        let mut src = String::from("MOVI r0, 5\n");
        for _ in 0..30 {
            src.push_str("ADDI r7, 1\n");
        }
        src.push_str("ADDI r0, 1\nHALT\n");
        let t = trace_of(&src);
        let occ = t.steps.len() - 1; // HALT
        let goal = Term::input("r0", 32).ne(Term::constant(6, 32));
        let cond = ReachabilityCondition {
            addr: t.steps[occ].addr,
            occurrence: occ,
            goal,
        };
        let steps = backward_slice_indexed(&t, None, &cond, 4, BoundMetric::Steps).unwrap();
        assert!(!steps.cut_inputs.is_empty());
        let defuse = backward_slice_indexed(&t, None, &cond, 4, BoundMetric::DefUse).unwrap();
        assert!(defuse.cut_inputs.is_empty(), "cuts: {:?}", defuse.cut_inputs);
        assert_eq!(defuse.constraints.len(), 2);
    }
}
