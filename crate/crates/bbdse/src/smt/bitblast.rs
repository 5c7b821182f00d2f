//! Tseitin bitblasting of bitvector terms to CNF.
//!
//! Every term becomes an LSB-first literal vector. Gate constructors fold
//! constants eagerly, so the SSA-shaped formulas the slicer produces stay
//! small after word-level preprocessing has done its part.

use super::cdcl::{Lit, SatSolver};
use crate::formula::{BinOp, Term, TermNode, UnOp};
use crate::Word;
use std::collections::HashMap;

pub struct Blaster {
    pub sat: SatSolver,
    /// Variable 0 is constrained true; constants are literals of it.
    top: Lit,
    cache: HashMap<*const TermNode, Vec<Lit>>,
    inputs: HashMap<String, Vec<Lit>>,
}

impl Blaster {
    pub fn new() -> Blaster {
        let mut sat = SatSolver::new(1);
        let top = Lit::new(0, false);
        sat.add_clause(vec![top]);
        Blaster {
            sat,
            top,
            cache: HashMap::new(),
            inputs: HashMap::new(),
        }
    }

    fn tru(&self) -> Lit {
        self.top
    }

    fn fals(&self) -> Lit {
        self.top.negate()
    }

    fn is_const(&self, l: Lit) -> Option<bool> {
        if l == self.top {
            Some(true)
        } else if l == self.top.negate() {
            Some(false)
        } else {
            None
        }
    }

    fn lit_of(&self, b: bool) -> Lit {
        if b {
            self.tru()
        } else {
            self.fals()
        }
    }

    fn fresh(&mut self) -> Lit {
        Lit::new(self.sat.new_var(), false)
    }

    pub fn input_bits(&mut self, name: &str, width: u32) -> Vec<Lit> {
        if let Some(bits) = self.inputs.get(name) {
            return bits.clone();
        }
        let bits: Vec<Lit> = (0..width).map(|_| self.fresh()).collect();
        self.inputs.insert(name.to_string(), bits.clone());
        bits
    }

    pub fn input_names(&self) -> impl Iterator<Item = (&String, &Vec<Lit>)> {
        self.inputs.iter()
    }

    fn and2(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(false), _) | (_, Some(false)) => return self.fals(),
            (Some(true), _) => return b,
            (_, Some(true)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if a == b.negate() {
            return self.fals();
        }
        let o = self.fresh();
        self.sat.add_clause(vec![o.negate(), a]);
        self.sat.add_clause(vec![o.negate(), b]);
        self.sat.add_clause(vec![o, a.negate(), b.negate()]);
        o
    }

    fn or2(&mut self, a: Lit, b: Lit) -> Lit {
        self.and2(a.negate(), b.negate()).negate()
    }

    fn xor2(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(false), _) => return b,
            (_, Some(false)) => return a,
            (Some(true), _) => return b.negate(),
            (_, Some(true)) => return a.negate(),
            _ => {}
        }
        if a == b {
            return self.fals();
        }
        if a == b.negate() {
            return self.tru();
        }
        let o = self.fresh();
        self.sat.add_clause(vec![o.negate(), a, b]);
        self.sat.add_clause(vec![o.negate(), a.negate(), b.negate()]);
        self.sat.add_clause(vec![o, a.negate(), b]);
        self.sat.add_clause(vec![o, a, b.negate()]);
        o
    }

    fn mux(&mut self, s: Lit, t: Lit, e: Lit) -> Lit {
        match self.is_const(s) {
            Some(true) => return t,
            Some(false) => return e,
            None => {}
        }
        if t == e {
            return t;
        }
        let a = self.and2(s, t);
        let b = self.and2(s.negate(), e);
        self.or2(a, b)
    }

    fn full_add(&mut self, a: Lit, b: Lit, c: Lit) -> (Lit, Lit) {
        let ab = self.xor2(a, b);
        let sum = self.xor2(ab, c);
        // carry = ab ? c : a  (majority)
        let carry = self.mux(ab, c, a);
        (sum, carry)
    }

    fn add_vec(&mut self, a: &[Lit], b: &[Lit], carry_in: Lit) -> Vec<Lit> {
        let mut out = Vec::with_capacity(a.len());
        let mut c = carry_in;
        for i in 0..a.len() {
            let (s, nc) = self.full_add(a[i], b[i], c);
            out.push(s);
            c = nc;
        }
        out
    }

    fn const_bits(&self, v: Word, width: u32) -> Vec<Lit> {
        (0..width).map(|i| self.lit_of((v >> i) & 1 == 1)).collect()
    }

    fn eq_vec(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let mut acc = self.tru();
        for i in 0..a.len() {
            let x = self.xor2(a[i], b[i]);
            acc = self.and2(acc, x.negate());
        }
        acc
    }

    fn ult_vec(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        // LSB-to-MSB borrow chain.
        let mut lt = self.fals();
        for i in 0..a.len() {
            let eqi = self.xor2(a[i], b[i]).negate();
            let lti = self.and2(a[i].negate(), b[i]);
            let keep = self.and2(eqi, lt);
            lt = self.or2(lti, keep);
        }
        lt
    }

    fn shift_vec(&mut self, a: &[Lit], amount: &[Lit], left: bool) -> Vec<Lit> {
        let w = a.len();
        let stages = w.trailing_zeros(); // widths are powers of two
        let mut cur: Vec<Lit> = a.to_vec();
        for k in 0..stages {
            let sh = 1usize << k;
            let s = amount[k as usize];
            let mut next = Vec::with_capacity(w);
            for i in 0..w {
                let shifted = if left {
                    if i >= sh {
                        cur[i - sh]
                    } else {
                        self.fals()
                    }
                } else if i + sh < w {
                    cur[i + sh]
                } else {
                    self.fals()
                };
                next.push(self.mux(s, shifted, cur[i]));
            }
            cur = next;
        }
        // Any amount bit at or above log2(w) zeroes the result.
        let mut big = self.fals();
        for &s in &amount[stages as usize..] {
            big = self.or2(big, s);
        }
        let z = self.fals();
        cur.iter().map(|&l| self.mux(big, z, l)).collect()
    }

    fn mul_vec(&mut self, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let w = a.len();
        let mut acc = vec![self.fals(); w];
        for i in 0..w {
            // Row: (a << i) AND b[i], truncated to w bits.
            let mut row = vec![self.fals(); w];
            for j in 0..w - i {
                row[i + j] = self.and2(a[j], b[i]);
            }
            acc = self.add_vec(&acc, &row, self.fals());
        }
        acc
    }

    fn udiv_vec(&mut self, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let w = a.len();
        // Restoring division, MSB first, with a w+1-bit remainder.
        let wide = w + 1;
        let bext: Vec<Lit> = b.iter().copied().chain([self.fals()]).collect();
        let mut rem = vec![self.fals(); wide];
        let mut q = vec![self.fals(); w];
        for i in (0..w).rev() {
            // rem = (rem << 1) | a[i]
            let mut shifted = Vec::with_capacity(wide);
            shifted.push(a[i]);
            shifted.extend_from_slice(&rem[..wide - 1]);
            rem = shifted;
            // ge = rem >= b
            let lt = self.ult_vec(&rem, &bext);
            let ge = lt.negate();
            q[i] = ge;
            // rem = ge ? rem - b : rem
            let nb: Vec<Lit> = bext.iter().map(|l| l.negate()).collect();
            let diff = self.add_vec(&rem, &nb, self.tru());
            rem = (0..wide).map(|j| self.mux(ge, diff[j], rem[j])).collect();
        }
        // Division by zero yields all ones.
        let zero = self.const_bits(0, w as u32);
        let is_zero = self.eq_vec(b, &zero);
        let ones = self.tru();
        q.iter().map(|&l| self.mux(is_zero, ones, l)).collect()
    }

    pub fn blast(&mut self, t: &Term) -> Vec<Lit> {
        let key = t.node() as *const TermNode;
        if let Some(bits) = self.cache.get(&key) {
            return bits.clone();
        }
        let bits = match t.node() {
            TermNode::Const { value, width } => self.const_bits(*value, *width),
            TermNode::Input { name, width } => self.input_bits(name, *width),
            TermNode::Select { .. } => panic!("bitblast on unresolved Select"),
            TermNode::Un { op, arg } => {
                let a = self.blast(arg);
                match op {
                    UnOp::ZExt { to } => {
                        let mut v = a;
                        while (v.len() as u32) < *to {
                            v.push(self.fals());
                        }
                        v
                    }
                    UnOp::Extract { hi, lo } => a[*lo as usize..=*hi as usize].to_vec(),
                }
            }
            TermNode::Ite { cond, then_, else_ } => {
                let c = self.blast(cond)[0];
                let tb = self.blast(then_);
                let eb = self.blast(else_);
                (0..tb.len()).map(|i| self.mux(c, tb[i], eb[i])).collect()
            }
            TermNode::Bin { op, lhs, rhs } => {
                let a = self.blast(lhs);
                let b = self.blast(rhs);
                match op {
                    BinOp::Add => self.add_vec(&a, &b, self.fals()),
                    BinOp::Sub => {
                        let nb: Vec<Lit> = b.iter().map(|l| l.negate()).collect();
                        self.add_vec(&a, &nb, self.tru())
                    }
                    BinOp::Mul => self.mul_vec(&a, &b),
                    BinOp::Udiv => self.udiv_vec(&a, &b),
                    BinOp::And => (0..a.len()).map(|i| self.and2(a[i], b[i])).collect(),
                    BinOp::Or => (0..a.len()).map(|i| self.or2(a[i], b[i])).collect(),
                    BinOp::Xor => (0..a.len()).map(|i| self.xor2(a[i], b[i])).collect(),
                    BinOp::Shl => self.shift_vec(&a, &b, true),
                    BinOp::Lshr => self.shift_vec(&a, &b, false),
                    BinOp::Eq => vec![self.eq_vec(&a, &b)],
                    BinOp::Ne => vec![self.eq_vec(&a, &b).negate()],
                    BinOp::Ult => vec![self.ult_vec(&a, &b)],
                    BinOp::Uge => vec![self.ult_vec(&a, &b).negate()],
                    BinOp::Slt => {
                        let (fa, fb) = (flip_msb(&a), flip_msb(&b));
                        vec![self.ult_vec(&fa, &fb)]
                    }
                    BinOp::Sge => {
                        let (fa, fb) = (flip_msb(&a), flip_msb(&b));
                        vec![self.ult_vec(&fa, &fb).negate()]
                    }
                    BinOp::Concat => {
                        // rhs is the low part.
                        let mut v = b;
                        v.extend(a);
                        v
                    }
                }
            }
        };
        self.cache.insert(key, bits.clone());
        bits
    }

    pub fn assert_term(&mut self, t: &Term) {
        debug_assert_eq!(t.width(), 1);
        let bits = self.blast(t);
        self.sat.add_clause(vec![bits[0]]);
    }
}

fn flip_msb(bits: &[Lit]) -> Vec<Lit> {
    let mut v = bits.to_vec();
    let last = v.len() - 1;
    v[last] = v[last].negate();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::cdcl::SatResult;

    fn word_of(bits: &[Lit], model: &[bool]) -> Word {
        bits.iter()
            .enumerate()
            .map(|(i, l)| {
                let v = model[l.var() as usize] ^ l.is_neg();
                (v as Word) << i
            })
            .sum()
    }

    fn solve_with_goal(goal: Term) -> Option<std::collections::HashMap<String, Word>> {
        let mut bl = Blaster::new();
        bl.assert_term(&goal);
        let inputs: Vec<(String, Vec<Lit>)> = bl
            .input_names()
            .map(|(n, b)| (n.clone(), b.clone()))
            .collect();
        match bl.sat.solve() {
            SatResult::Unsat => None,
            SatResult::Sat(m) => Some(
                inputs
                    .into_iter()
                    .map(|(n, b)| (n, word_of(&b, &m)))
                    .collect(),
            ),
        }
    }

    #[test]
    fn arithmetic_models_check_out() {
        // x + y == 0x2a && x < 10
        let x = Term::input("x", 8);
        let y = Term::input("y", 8);
        let goal = Term::binary(BinOp::Add, x.clone(), y.clone())
            .eq(Term::constant(0x2a, 8))
            .and(Term::binary(BinOp::Ult, x, Term::constant(10, 8)));
        let m = solve_with_goal(goal).expect("sat");
        assert_eq!((m["x"] + m["y"]) & 0xff, 0x2a);
        assert!(m["x"] < 10);
    }

    #[test]
    fn even_product_is_unsat_to_contradict() {
        // x*(x+1) is always even: asserting odd is unsat.
        let x = Term::input("x", 8);
        let succ = Term::binary(BinOp::Add, x.clone(), Term::constant(1, 8));
        let prod = Term::binary(BinOp::Mul, x, succ);
        let odd = Term::binary(BinOp::And, prod, Term::constant(1, 8)).eq(Term::constant(1, 8));
        assert!(solve_with_goal(odd).is_none());
    }

    #[test]
    fn udiv_matches_semantics_including_zero() {
        // exists x: x / 0 != 0xff  -- unsat
        let x = Term::input("x", 8);
        let div = Term::binary(BinOp::Udiv, x.clone(), Term::constant(0, 8));
        assert!(solve_with_goal(div.ne(Term::constant(0xff, 8))).is_none());
        // x / 3 == 5 has a model; check it.
        let q = Term::binary(BinOp::Udiv, x, Term::constant(3, 8));
        let m = solve_with_goal(q.eq(Term::constant(5, 8))).expect("sat");
        assert_eq!(m["x"] / 3, 5);
    }

    #[test]
    fn shifts_match_semantics() {
        // exists x, s: s >= 8 && (x << s) != 0  -- unsat
        let x = Term::input("x", 8);
        let s = Term::input("s", 8);
        let shifted = Term::binary(BinOp::Shl, x, s.clone());
        let goal = Term::binary(BinOp::Uge, s, Term::constant(8, 8))
            .and(shifted.ne(Term::constant(0, 8)));
        assert!(solve_with_goal(goal).is_none());
    }

    #[test]
    fn signed_compare() {
        // exists x: x <s 0 && x >u 0x7f  -- always true together (negatives)
        let x = Term::input("x", 8);
        let goal = Term::binary(BinOp::Slt, x.clone(), Term::constant(0, 8))
            .and(Term::binary(BinOp::Ult, Term::constant(0x7f, 8), x));
        let m = solve_with_goal(goal).expect("sat");
        assert!(m["x"] > 0x7f);
    }
}
