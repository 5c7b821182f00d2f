//! Bitvector terms and the sliced formulas built over them.
//!
//! Terms form a small QF_BV expression language. All machine-state symbols
//! (register versions, memory byte cells, cut inputs) appear as [`TermNode::Input`]
//! leaves; the slicer keeps equations flat (one definition per symbol), so
//! formulas are conjunctions of width-1 terms.

mod slice;

pub use slice::{
    backward_slice, backward_slice_indexed, forward_path_predicate,
    forward_path_predicate_with_goal, slice_window, BoundMetric, Probes, SliceError, SliceRequest,
};

use crate::Word;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Zero-extend to the given width.
    ZExt { to: u32 },
    /// Bit slice, inclusive bounds, `hi >= lo`.
    Extract { hi: u32, lo: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Udiv,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Eq,
    Ne,
    Ult,
    Uge,
    Slt,
    Sge,
    /// `lhs` becomes the high bits.
    Concat,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Ult | BinOp::Uge | BinOp::Slt | BinOp::Sge
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Eq | BinOp::Ne
        )
    }
}

#[derive(Debug, PartialEq, Eq, Hash)]
pub enum TermNode {
    Const { value: Word, width: u32 },
    Input { name: String, width: u32 },
    Un { op: UnOp, arg: Term },
    Bin { op: BinOp, lhs: Term, rhs: Term },
    /// `cond` has width 1.
    Ite { cond: Term, then_: Term, else_: Term },
    /// Memory word at a concrete address, meaningful only inside a goal
    /// handed to the slicer, which resolves it to byte-cell symbols.
    Select { addr: Word, width: u32 },
}

/// Reference-counted term. Cheap to clone; compared structurally.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Term(Rc<TermNode>);

impl Term {
    pub fn node(&self) -> &TermNode {
        &self.0
    }

    pub fn constant(value: Word, width: u32) -> Term {
        let masked = if width >= 64 { value } else { value & ((1 << width) - 1) };
        Term(Rc::new(TermNode::Const { value: masked, width }))
    }

    pub fn input(name: impl Into<String>, width: u32) -> Term {
        Term(Rc::new(TermNode::Input { name: name.into(), width }))
    }

    pub fn select(addr: Word, width: u32) -> Term {
        Term(Rc::new(TermNode::Select { addr, width }))
    }

    pub fn unary(op: UnOp, arg: Term) -> Term {
        match op {
            UnOp::ZExt { to } => debug_assert!(to >= arg.width()),
            UnOp::Extract { hi, lo } => debug_assert!(hi >= lo && hi < arg.width()),
        }
        Term(Rc::new(TermNode::Un { op, arg }))
    }

    pub fn binary(op: BinOp, lhs: Term, rhs: Term) -> Term {
        if op != BinOp::Concat {
            debug_assert_eq!(lhs.width(), rhs.width(), "width mismatch under {op:?}");
        }
        Term(Rc::new(TermNode::Bin { op, lhs, rhs }))
    }

    pub fn ite(cond: Term, then_: Term, else_: Term) -> Term {
        debug_assert_eq!(cond.width(), 1);
        debug_assert_eq!(then_.width(), else_.width());
        Term(Rc::new(TermNode::Ite { cond, then_, else_ }))
    }

    pub fn zext(self, to: u32) -> Term {
        if to == self.width() {
            self
        } else {
            Term::unary(UnOp::ZExt { to }, self)
        }
    }

    pub fn extract(self, hi: u32, lo: u32) -> Term {
        Term::unary(UnOp::Extract { hi, lo }, self)
    }

    pub fn eq(self, rhs: Term) -> Term {
        Term::binary(BinOp::Eq, self, rhs)
    }

    pub fn ne(self, rhs: Term) -> Term {
        Term::binary(BinOp::Ne, self, rhs)
    }

    pub fn and(self, rhs: Term) -> Term {
        Term::binary(BinOp::And, self, rhs)
    }

    pub fn width(&self) -> u32 {
        match self.node() {
            TermNode::Const { width, .. }
            | TermNode::Input { width, .. }
            | TermNode::Select { width, .. } => *width,
            TermNode::Un { op, arg } => match op {
                UnOp::ZExt { to } => *to,
                UnOp::Extract { hi, lo } => {
                    let _ = arg;
                    hi - lo + 1
                }
            },
            TermNode::Bin { op, lhs, rhs } => {
                if op.is_comparison() {
                    1
                } else if *op == BinOp::Concat {
                    lhs.width() + rhs.width()
                } else {
                    lhs.width()
                }
            }
            TermNode::Ite { then_, .. } => then_.width(),
        }
    }

    /// All input names appearing in the term.
    pub fn collect_inputs(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            TermNode::Const { .. } | TermNode::Select { .. } => {}
            TermNode::Input { name, .. } => {
                out.insert(name.clone());
            }
            TermNode::Un { arg, .. } => arg.collect_inputs(out),
            TermNode::Bin { lhs, rhs, .. } => {
                lhs.collect_inputs(out);
                rhs.collect_inputs(out);
            }
            TermNode::Ite { cond, then_, else_ } => {
                cond.collect_inputs(out);
                then_.collect_inputs(out);
                else_.collect_inputs(out);
            }
        }
    }

    /// Concrete evaluation with SMT-LIB semantics (udiv by zero is all
    /// ones, over-wide shifts give zero). Panics on unresolved `Select`.
    pub fn eval(&self, env: &mut impl FnMut(&str, u32) -> Word) -> Word {
        let mask = |w: u32| if w >= 64 { !0u64 } else { (1u64 << w) - 1 };
        match self.node() {
            TermNode::Const { value, .. } => *value,
            TermNode::Input { name, width } => env(name, *width) & mask(*width),
            TermNode::Select { .. } => panic!("eval on unresolved Select"),
            TermNode::Ite { cond, then_, else_ } => {
                if cond.eval(env) == 1 {
                    then_.eval(env)
                } else {
                    else_.eval(env)
                }
            }
            TermNode::Un { op, arg } => {
                let v = arg.eval(env);
                match op {
                    UnOp::ZExt { .. } => v,
                    UnOp::Extract { hi, lo } => (v >> lo) & mask(hi - lo + 1),
                }
            }
            TermNode::Bin { op, lhs, rhs } => {
                let w = lhs.width();
                let a = lhs.eval(env);
                let b = rhs.eval(env);
                let m = mask(w);
                let signed = |v: Word| {
                    let shift = 64 - w;
                    ((v << shift) as i64) >> shift
                };
                match op {
                    BinOp::Add => a.wrapping_add(b) & m,
                    BinOp::Sub => a.wrapping_sub(b) & m,
                    BinOp::Mul => a.wrapping_mul(b) & m,
                    BinOp::Udiv => {
                        if b == 0 {
                            m
                        } else {
                            (a / b) & m
                        }
                    }
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Shl => {
                        if b >= w as Word {
                            0
                        } else {
                            (a << b) & m
                        }
                    }
                    BinOp::Lshr => {
                        if b >= w as Word {
                            0
                        } else {
                            a >> b
                        }
                    }
                    BinOp::Eq => (a == b) as Word,
                    BinOp::Ne => (a != b) as Word,
                    BinOp::Ult => (a < b) as Word,
                    BinOp::Uge => (a >= b) as Word,
                    BinOp::Slt => (signed(a) < signed(b)) as Word,
                    BinOp::Sge => (signed(a) >= signed(b)) as Word,
                    BinOp::Concat => (a << rhs.width()) | b,
                }
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            TermNode::Const { value, width } => write!(f, "{value:#x}:{width}"),
            TermNode::Input { name, .. } => write!(f, "{name}"),
            TermNode::Select { addr, width } => write!(f, "mem[{addr:#x}]:{width}"),
            TermNode::Un { op, arg } => write!(f, "({op:?} {arg:?})"),
            TermNode::Bin { op, lhs, rhs } => write!(f, "({op:?} {lhs:?} {rhs:?})"),
            TermNode::Ite { cond, then_, else_ } => {
                write!(f, "(ite {cond:?} {then_:?} {else_:?})")
            }
        }
    }
}

/// Why a slice is being asked for: a predicate attached to one dynamic
/// occurrence of a code address.
#[derive(Debug, Clone)]
pub struct ReachabilityCondition {
    pub addr: Word,
    pub occurrence: usize,
    /// Width-1 term. `Input("r0".."sp")` and `Select { .. }` leaves denote
    /// machine state at the occurrence; other inputs stay free.
    pub goal: Term,
}

/// How a constraint arose; the simplifier and tests care.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// SSA definition `sym = rhs`.
    Def,
    /// Branch-direction fact from a conditional jump in the window.
    Branch,
    /// Concretization of an address or indirect-control value.
    Binding,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub term: Term,
    pub kind: ConstraintKind,
    /// Trace step that produced this constraint.
    pub origin: Option<usize>,
}

/// A conjunction of constraints plus a goal, with everything needed to
/// solve it, enumerate it, or check it against the trace valuation.
#[derive(Debug, Clone)]
pub struct SliceFormula {
    /// Every symbol with its width.
    pub vars: BTreeMap<String, u32>,
    pub constraints: Vec<Constraint>,
    pub goal: Term,
    /// Symbols never defined inside the window: the fresh inputs.
    pub cut_inputs: BTreeSet<String>,
    /// Trace valuation; satisfies every constraint by construction.
    pub witness: BTreeMap<String, Word>,
    /// Inclusive trace-step interval the constraints came from.
    pub span: Option<(usize, usize)>,
    pub k_used: usize,
}

impl SliceFormula {
    /// Build a formula directly (used by tests and the solver oracle) from
    /// free inputs, constraints and a goal.
    pub fn adhoc(constraints: Vec<Term>, goal: Term) -> SliceFormula {
        let mut names = BTreeSet::new();
        goal.collect_inputs(&mut names);
        for c in &constraints {
            c.collect_inputs(&mut names);
        }
        let mut vars = BTreeMap::new();
        let mut widths = BTreeMap::new();
        for c in constraints.iter().chain(std::iter::once(&goal)) {
            collect_widths(c, &mut widths);
        }
        for n in &names {
            vars.insert(n.clone(), widths.get(n).copied().unwrap_or(1));
        }
        SliceFormula {
            cut_inputs: names,
            vars,
            constraints: constraints
                .into_iter()
                .map(|term| Constraint {
                    term,
                    kind: ConstraintKind::Branch,
                    origin: None,
                })
                .collect(),
            goal,
            witness: BTreeMap::new(),
            span: None,
            k_used: 0,
        }
    }

    /// Does the recorded trace valuation also satisfy the goal? When it
    /// does, the formula is SAT with the witness as model.
    pub fn witness_satisfies_goal(&self) -> bool {
        if self.witness.is_empty() && !self.vars.is_empty() {
            return false;
        }
        let w = &self.witness;
        self.goal.eval(&mut |name, _| *w.get(name).unwrap_or(&0)) == 1
    }

    /// Evaluate all constraints and the goal under an assignment.
    pub fn satisfied_by(&self, env: &BTreeMap<String, Word>) -> bool {
        let mut get = |name: &str, _w: u32| *env.get(name).unwrap_or(&0);
        self.constraints.iter().all(|c| c.term.eval(&mut get) == 1)
            && self.goal.eval(&mut get) == 1
    }

    pub fn check_witness(&self) -> bool {
        let w = &self.witness;
        let mut get = |name: &str, _w: u32| *w.get(name).unwrap_or(&0);
        self.constraints.iter().all(|c| c.term.eval(&mut get) == 1)
    }
}

/// Record every input symbol's width.
pub fn collect_widths(t: &Term, out: &mut BTreeMap<String, u32>) {
    match t.node() {
        TermNode::Input { name, width } => {
            out.insert(name.clone(), *width);
        }
        TermNode::Un { arg, .. } => collect_widths(arg, out),
        TermNode::Bin { lhs, rhs, .. } => {
            collect_widths(lhs, out);
            collect_widths(rhs, out);
        }
        TermNode::Ite { cond, then_, else_ } => {
            collect_widths(cond, out);
            collect_widths(then_, out);
            collect_widths(else_, out);
        }
        _ => {}
    }
}

/// Logical negation of the goal, with comparisons flipped in place so that
/// double negation is the identity.
pub fn negate_goal(f: &SliceFormula) -> SliceFormula {
    let mut out = f.clone();
    out.goal = negate_term(&f.goal);
    out
}

pub fn negate_term(t: &Term) -> Term {
    if let TermNode::Bin { op, lhs, rhs } = t.node() {
        let flipped = match op {
            BinOp::Eq => Some(BinOp::Ne),
            BinOp::Ne => Some(BinOp::Eq),
            BinOp::Ult => Some(BinOp::Uge),
            BinOp::Uge => Some(BinOp::Ult),
            BinOp::Slt => Some(BinOp::Sge),
            BinOp::Sge => Some(BinOp::Slt),
            _ => None,
        };
        if let Some(op) = flipped {
            return Term::binary(op, lhs.clone(), rhs.clone());
        }
    }
    // Generic width-1 negation.
    debug_assert_eq!(t.width(), 1);
    if let TermNode::Bin { op: BinOp::Xor, lhs, rhs } = t.node() {
        if let TermNode::Const { value: 1, width: 1 } = rhs.node() {
            return lhs.clone();
        }
    }
    Term::binary(BinOp::Xor, t.clone(), Term::constant(1, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negate_is_involutive() {
        let x = Term::input("x", 8);
        let y = Term::input("y", 8);
        let goal = x.clone().eq(y.clone());
        let once = negate_term(&goal);
        assert!(matches!(once.node(), TermNode::Bin { op: BinOp::Ne, .. }));
        assert_eq!(negate_term(&once), goal);

        let odd = Term::input("b", 1);
        let n = negate_term(&odd);
        assert_eq!(negate_term(&n), odd);
    }

    #[test]
    fn eval_matches_smt_corner_cases() {
        let mut env = |_: &str, _: u32| 0u64;
        let w8 = |v| Term::constant(v, 8);
        // udiv by zero -> all ones
        let t = Term::binary(BinOp::Udiv, w8(7), w8(0));
        assert_eq!(t.eval(&mut env), 0xff);
        // shift past width -> 0
        let t = Term::binary(BinOp::Shl, w8(1), w8(9));
        assert_eq!(t.eval(&mut env), 0);
        // signed compare
        let t = Term::binary(BinOp::Slt, w8(0xff), w8(0));
        assert_eq!(t.eval(&mut env), 1); // -1 < 0
        // concat/extract
        let c = Term::binary(BinOp::Concat, w8(0xab), w8(0xcd));
        assert_eq!(c.width(), 16);
        assert_eq!(c.eval(&mut env), 0xabcd);
        assert_eq!(c.clone().extract(15, 8).eval(&mut env), 0xab);
    }
}
