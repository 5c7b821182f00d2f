//! Conflict-driven clause learning SAT solver: two-watched literals,
//! 1UIP learning with local minimization, VSIDS decisions, phase saving,
//! Luby restarts and activity-based learnt-clause reduction. Fully
//! deterministic.

pub type Var = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, negated: bool) -> Lit {
        Lit(var << 1 | negated as u32)
    }

    pub fn var(self) -> Var {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn negate(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn code(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    True,
    False,
    Unassigned,
}

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

#[derive(Clone, Copy)]
struct Watcher {
    clause: u32,
    blocker: Lit,
}

pub enum SatResult {
    /// Assignment indexed by variable.
    Sat(Vec<bool>),
    Unsat,
}

pub struct SatSolver {
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watcher>>,
    assign: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: Heap,
    saved_phase: Vec<bool>,
    seen: Vec<bool>,
    ok: bool,
    conflicts: u64,
    learnt_count: usize,
}

impl SatSolver {
    pub fn new(num_vars: usize) -> SatSolver {
        SatSolver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); num_vars * 2],
            assign: vec![Value::Unassigned; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; num_vars],
            var_inc: 1.0,
            cla_inc: 1.0,
            heap: Heap::new(num_vars),
            saved_phase: vec![false; num_vars],
            seen: vec![false; num_vars],
            ok: true,
            conflicts: 0,
            learnt_count: 0,
        }
    }

    pub fn new_var(&mut self) -> Var {
        let v = self.num_vars as Var;
        self.num_vars += 1;
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.assign.push(Value::Unassigned);
        self.level.push(0);
        self.reason.push(None);
        self.activity.push(0.0);
        self.saved_phase.push(false);
        self.seen.push(false);
        self.heap.grow();
        v
    }

    fn value(&self, l: Lit) -> Value {
        match self.assign[l.var() as usize] {
            Value::Unassigned => Value::Unassigned,
            Value::True => {
                if l.is_neg() {
                    Value::False
                } else {
                    Value::True
                }
            }
            Value::False => {
                if l.is_neg() {
                    Value::True
                } else {
                    Value::False
                }
            }
        }
    }

    pub fn add_clause(&mut self, mut lits: Vec<Lit>) {
        if !self.ok {
            return;
        }
        debug_assert!(self.trail_lim.is_empty());
        lits.sort_by_key(|l| l.0);
        lits.dedup();
        // Tautology or satisfied-at-0 clauses can be dropped.
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return;
        }
        lits.retain(|&l| self.value(l) != Value::False);
        if lits.iter().any(|&l| self.value(l) == Value::True) {
            return;
        }
        match lits.len() {
            0 => self.ok = false,
            1 => {
                self.enqueue(lits[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
            }
            _ => {
                let idx = self.clauses.len() as u32;
                self.watches[lits[0].negate().code()].push(Watcher {
                    clause: idx,
                    blocker: lits[1],
                });
                self.watches[lits[1].negate().code()].push(Watcher {
                    clause: idx,
                    blocker: lits[0],
                });
                self.clauses.push(Clause {
                    lits,
                    learnt: false,
                    deleted: false,
                    activity: 0.0,
                });
            }
        }
    }

    fn enqueue(&mut self, l: Lit, reason: Option<u32>) {
        debug_assert_eq!(self.value(l), Value::Unassigned);
        let v = l.var() as usize;
        self.assign[v] = if l.is_neg() { Value::False } else { Value::True };
        self.level[v] = self.trail_lim.len() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p.negate();
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut i = 0;
            let mut conflict = None;
            'watchers: while i < ws.len() {
                let w = ws[i];
                if self.value(w.blocker) == Value::True {
                    i += 1;
                    continue;
                }
                let ci = w.clause as usize;
                if self.clauses[ci].deleted {
                    ws.swap_remove(i);
                    continue;
                }
                // Normalise: lits[1] is the false watch.
                {
                    let lits = &mut self.clauses[ci].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[ci].lits[0];
                if first != w.blocker && self.value(first) == Value::True {
                    ws[i].blocker = first;
                    i += 1;
                    continue;
                }
                // Look for a replacement watch.
                let len = self.clauses[ci].lits.len();
                for k in 2..len {
                    let lk = self.clauses[ci].lits[k];
                    if self.value(lk) != Value::False {
                        self.clauses[ci].lits.swap(1, k);
                        self.watches[lk.negate().code()].push(Watcher {
                            clause: w.clause,
                            blocker: first,
                        });
                        ws.swap_remove(i);
                        continue 'watchers;
                    }
                }
                // Unit or conflict on lits[0].
                ws[i].blocker = first;
                i += 1;
                if self.value(first) == Value::False {
                    conflict = Some(w.clause);
                    self.qhead = self.trail.len();
                    break;
                }
                self.enqueue(first, Some(w.clause));
            }
            // Watches pushed during the loop (replacements for other lits)
            // never target p's list, so a plain put-back is safe.
            debug_assert!(self.watches[p.code()].is_empty());
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn bump_var(&mut self, v: Var) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.update(v, &self.activity);
    }

    fn bump_clause(&mut self, ci: usize) {
        self.clauses[ci].activity += self.cla_inc;
        if self.clauses[ci].activity > 1e20 {
            for c in &mut self.clauses {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![Lit::new(0, false)]; // slot for the UIP
        let mut counter = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let cur_level = self.trail_lim.len() as u32;

        loop {
            self.bump_clause(confl as usize);
            // For reason clauses, lits[0] is the implied literal (= p): skip it.
            let lits = self.clauses[confl as usize].lits.clone();
            let start = if p.is_none() { 0 } else { 1 };
            for &q in lits.iter().skip(start) {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= cur_level {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            // Next literal to resolve on.
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let pl = self.trail[idx];
            self.seen[pl.var() as usize] = false;
            counter -= 1;
            if counter == 0 {
                learnt[0] = pl.negate();
                break;
            }
            p = Some(pl);
            confl = self.reason[pl.var() as usize].expect("resolved literal has a reason");
        }

        // Local minimization: drop literals implied by the rest.
        let keep: Vec<Lit> = learnt[1..]
            .iter()
            .copied()
            .filter(|&l| !self.redundant(l, &learnt))
            .collect();
        let mut out = vec![learnt[0]];
        out.extend(keep);

        for &l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }

        let bt = out[1..]
            .iter()
            .map(|l| self.level[l.var() as usize])
            .max()
            .unwrap_or(0);
        (out, bt)
    }

    /// A literal is redundant when its reason clause's other literals are
    /// all already in the learnt clause (marked seen) or at level 0.
    fn redundant(&self, l: Lit, _learnt: &[Lit]) -> bool {
        match self.reason[l.var() as usize] {
            None => false,
            Some(ci) => self.clauses[ci as usize].lits.iter().all(|&q| {
                q.var() == l.var() || self.seen[q.var() as usize] || self.level[q.var() as usize] == 0
            }),
        }
    }

    fn backtrack(&mut self, to_level: u32) {
        while self.trail_lim.len() as u32 > to_level {
            let lim = self.trail_lim.pop().unwrap();
            while self.trail.len() > lim {
                let l = self.trail.pop().unwrap();
                let v = l.var() as usize;
                self.saved_phase[v] = !l.is_neg();
                self.assign[v] = Value::Unassigned;
                self.reason[v] = None;
                self.heap.insert(l.var(), &self.activity);
            }
        }
        self.qhead = self.trail.len();
    }

    fn learn(&mut self, mut lits: Vec<Lit>) -> Option<u32> {
        if lits.len() == 1 {
            self.enqueue(lits[0], None);
            return None;
        }
        // Watch the asserting literal and the highest-level other literal,
        // so the watch invariant survives future backtracking.
        let max_i = (1..lits.len())
            .max_by_key(|&i| self.level[lits[i].var() as usize])
            .unwrap();
        lits.swap(1, max_i);
        let idx = self.clauses.len() as u32;
        self.watches[lits[0].negate().code()].push(Watcher {
            clause: idx,
            blocker: lits[1],
        });
        self.watches[lits[1].negate().code()].push(Watcher {
            clause: idx,
            blocker: lits[0],
        });
        self.clauses.push(Clause {
            lits,
            learnt: true,
            deleted: false,
            activity: self.cla_inc,
        });
        self.learnt_count += 1;
        Some(idx)
    }

    fn reduce_db(&mut self) {
        let mut learnts: Vec<usize> = self
            .clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.learnt && !c.deleted && c.lits.len() > 2)
            .map(|(i, _)| i)
            .collect();
        learnts.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .partial_cmp(&self.clauses[b].activity)
                .unwrap()
        });
        let locked: Vec<Option<u32>> = self.reason.clone();
        let mut removed = 0;
        for &i in learnts.iter().take(learnts.len() / 2) {
            if locked.iter().any(|r| *r == Some(i as u32)) {
                continue;
            }
            self.clauses[i].deleted = true;
            removed += 1;
        }
        self.learnt_count -= removed;
    }

    fn decide(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop_max(&self.activity) {
            if self.assign[v as usize] == Value::Unassigned {
                return Some(Lit::new(v, !self.saved_phase[v as usize]));
            }
        }
        None
    }

    pub fn solve(&mut self) -> SatResult {
        if !self.ok {
            return SatResult::Unsat;
        }
        if self.propagate().is_some() {
            return SatResult::Unsat;
        }
        for v in 0..self.num_vars as Var {
            self.heap.insert(v, &self.activity);
        }
        let mut restart_idx = 0u32;
        let mut conflicts_until_restart = luby(restart_idx) * 100;
        let max_learnts_base = 4000.max(self.clauses.len());

        loop {
            match self.propagate() {
                Some(confl) => {
                    self.conflicts += 1;
                    if self.trail_lim.is_empty() {
                        return SatResult::Unsat;
                    }
                    let (learnt, bt) = self.analyze(confl);
                    self.backtrack(bt);
                    let asserting = learnt[0];
                    let reason = self.learn(learnt);
                    if reason.is_some() {
                        self.enqueue(asserting, reason);
                    }
                    self.var_inc /= 0.95;
                    self.cla_inc /= 0.999;
                    conflicts_until_restart = conflicts_until_restart.saturating_sub(1);
                }
                None => {
                    if conflicts_until_restart == 0 {
                        restart_idx += 1;
                        conflicts_until_restart = luby(restart_idx) * 100;
                        self.backtrack(0);
                    }
                    if self.learnt_count > max_learnts_base + (self.conflicts / 3) as usize {
                        self.reduce_db();
                    }
                    match self.decide() {
                        None => {
                            let model = self
                                .assign
                                .iter()
                                .map(|v| matches!(v, Value::True))
                                .collect();
                            return SatResult::Sat(model);
                        }
                        Some(l) => {
                            self.trail_lim.push(self.trail.len());
                            self.enqueue(l, None);
                        }
                    }
                }
            }
        }
    }
}

// Luby sequence: 1 1 2 1 1 2 4 1 1 2 ...
fn luby(mut x: u32) -> u64 {
    let (mut size, mut seq) = (1u64, 0u32);
    while size < x as u64 + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x as u64 {
        size = (size - 1) >> 1;
        seq -= 1;
        x = (x as u64 % size) as u32;
    }
    1u64 << seq
}

/// Max-heap over variable activities with a position index.
struct Heap {
    content: Vec<Var>,
    position: Vec<Option<u32>>,
}

impl Heap {
    fn new(num_vars: usize) -> Heap {
        Heap {
            content: Vec::with_capacity(num_vars),
            position: vec![None; num_vars],
        }
    }

    fn grow(&mut self) {
        self.position.push(None);
    }

    fn insert(&mut self, v: Var, act: &[f64]) {
        if self.position[v as usize].is_some() {
            return;
        }
        self.position[v as usize] = Some(self.content.len() as u32);
        self.content.push(v);
        self.sift_up(self.content.len() - 1, act);
    }

    fn update(&mut self, v: Var, act: &[f64]) {
        if let Some(p) = self.position[v as usize] {
            self.sift_up(p as usize, act);
        }
    }

    fn pop_max(&mut self, act: &[f64]) -> Option<Var> {
        if self.content.is_empty() {
            return None;
        }
        let top = self.content[0];
        self.position[top as usize] = None;
        let last = self.content.pop().unwrap();
        if !self.content.is_empty() {
            self.content[0] = last;
            self.position[last as usize] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn better(&self, a: Var, b: Var, act: &[f64]) -> bool {
        let (aa, ab) = (act[a as usize], act[b as usize]);
        aa > ab || (aa == ab && a < b)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.better(self.content[i], self.content[parent], act) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        loop {
            let l = 2 * i + 1;
            let r = 2 * i + 2;
            let mut best = i;
            if l < self.content.len() && self.better(self.content[l], self.content[best], act) {
                best = l;
            }
            if r < self.content.len() && self.better(self.content[r], self.content[best], act) {
                best = r;
            }
            if best == i {
                break;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.content.swap(a, b);
        self.position[self.content[a] as usize] = Some(a as u32);
        self.position[self.content[b] as usize] = Some(b as u32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(v: i32) -> Lit {
        Lit::new(v.unsigned_abs() - 1, v < 0)
    }

    #[test]
    fn trivial_sat_unsat() {
        let mut s = SatSolver::new(2);
        s.add_clause(vec![lit(1), lit(2)]);
        s.add_clause(vec![lit(-1)]);
        match s.solve() {
            SatResult::Sat(m) => {
                assert!(!m[0]);
                assert!(m[1]);
            }
            SatResult::Unsat => panic!("should be sat"),
        }

        let mut s = SatSolver::new(1);
        s.add_clause(vec![lit(1)]);
        s.add_clause(vec![lit(-1)]);
        assert!(matches!(s.solve(), SatResult::Unsat));
    }

    #[test]
    fn pigeonhole_3_into_2_unsat() {
        // Variables p(i,j): pigeon i in hole j; i in 0..3, j in 0..2.
        let v = |i: u32, j: u32| Lit::new(i * 2 + j, false);
        let mut s = SatSolver::new(6);
        for i in 0..3 {
            s.add_clause(vec![v(i, 0), v(i, 1)]);
        }
        for j in 0..2 {
            for a in 0..3 {
                for b in a + 1..3 {
                    s.add_clause(vec![v(a, j).negate(), v(b, j).negate()]);
                }
            }
        }
        assert!(matches!(s.solve(), SatResult::Unsat));
    }

    #[test]
    fn chains_propagate() {
        // x1 -> x2 -> ... -> x50, x1 forced true, ~x50 forced: unsat.
        let n = 50;
        let mut s = SatSolver::new(n);
        for i in 0..n - 1 {
            s.add_clause(vec![
                Lit::new(i as u32, true),
                Lit::new(i as u32 + 1, false),
            ]);
        }
        s.add_clause(vec![Lit::new(0, false)]);
        s.add_clause(vec![Lit::new(n as u32 - 1, true)]);
        assert!(matches!(s.solve(), SatResult::Unsat));
    }
}
