//! Concrete execution: the machine semantics, trace recording and
//! self-modification layer bookkeeping.
//!
//! Every analysis in this crate consumes the [`Trace`] produced here. A
//! write into the code region patches the working copy of the image and
//! increments the layer counter starting at the next step, so later steps
//! decode (and record) the patched bytes.

mod format;

pub use format::{read_trace_file, write_trace_file, TraceFormatError};

use crate::isa::{decode, Instruction, Opcode, ProgramImage, Register, Width};
use crate::Word;
use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

/// Register file, memory and layer counter at one point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: Word,
    pub regs: [Word; Register::COUNT],
    pub mem: BTreeMap<Word, u8>,
    pub layer: u32,
}

impl MachineState {
    pub fn reg(&self, r: Register) -> Word {
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Register, v: Word) {
        self.regs[r.index()] = v;
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEnd {
    Halted,
    MaxSteps,
    /// Instruction at `pc` did not decode.
    DecodeFault { pc: Word },
    /// Access outside the image and stack regions.
    MemFault { addr: Word },
}

impl TraceEnd {
    pub fn is_fault(&self) -> bool {
        matches!(self, TraceEnd::DecodeFault { .. } | TraceEnd::MemFault { .. })
    }
}

/// One executed instruction with everything the analyses need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub index: usize,
    pub addr: Word,
    pub layer: u32,
    pub bytes: Vec<u8>,
    pub instr: Instruction,
    /// Concrete word addresses touched by memory operands, in access order.
    pub effective_addrs: Vec<Word>,
    /// For JZ/JNZ: whether the jump was taken.
    pub branch_taken: Option<bool>,
    /// Word written into the code region, when this step self-modifies.
    pub written_value: Option<Word>,
    /// Concrete target of JMPR/CALLR/RET.
    pub jump_target: Option<Word>,
}

/// Initial register and global assignments for a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inputs {
    pub regs: BTreeMap<Register, Word>,
    /// Keyed by concrete address; use [`Inputs::global`] to go through the
    /// symbol table.
    pub global_words: BTreeMap<Word, Word>,
}

impl Inputs {
    pub fn new() -> Inputs {
        Inputs::default()
    }

    pub fn reg(mut self, r: Register, v: Word) -> Inputs {
        self.regs.insert(r, v);
        self
    }

    pub fn global(mut self, image: &ProgramImage, name: &str, v: Word) -> Inputs {
        let addr = image
            .symbol(name)
            .unwrap_or_else(|| panic!("no such global {name:?}"));
        self.global_words.insert(addr, v);
        self
    }

    pub fn global_at(mut self, addr: Word, v: Word) -> Inputs {
        self.global_words.insert(addr, v);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_steps: usize,
    pub stack_top: Word,
    pub stack_size: Word,
}

impl RunConfig {
    pub fn for_width(width: Width) -> RunConfig {
        RunConfig {
            max_steps: 1_000_000,
            stack_top: width.default_stack_top(),
            stack_size: width.default_stack_size(),
        }
    }

    pub fn max_steps(mut self, n: usize) -> RunConfig {
        self.max_steps = n;
        self
    }

    pub fn stack_region(&self) -> Range<Word> {
        self.stack_top - self.stack_size..self.stack_top
    }
}

/// A full execution record. Immutable; shareable across threads.
#[derive(Debug, Clone)]
pub struct Trace {
    pub program: Arc<ProgramImage>,
    pub inputs: Inputs,
    pub config: RunConfig,
    pub initial: MachineState,
    pub steps: Vec<TraceStep>,
    pub end: TraceEnd,
}

impl Trace {
    pub fn width(&self) -> Width {
        self.program.width
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Machine state immediately before `steps[idx]` executes; `idx == len`
    /// gives the final state.
    pub fn state_before(&self, idx: usize) -> MachineState {
        assert!(idx <= self.steps.len());
        let mut m = Machine::from_state(
            Arc::clone(&self.program),
            self.initial.clone(),
            self.config.clone(),
        );
        for _ in 0..idx {
            m.step().expect("replay diverged from recorded trace");
        }
        m.state
    }

    /// Snapshot index for O(stride) state reconstruction anywhere in the
    /// trace, plus per-variable definition positions. Build once per trace
    /// when many slices are needed.
    pub fn state_index(&self, stride: usize) -> StateIndex {
        assert!(stride > 0);
        let mut snapshots = Vec::with_capacity(self.steps.len() / stride + 1);
        let mut m = Machine::from_state(
            Arc::clone(&self.program),
            self.initial.clone(),
            self.config.clone(),
        );
        snapshots.push(m.state.clone());
        for i in 0..self.steps.len() {
            m.step().expect("replay diverged from recorded trace");
            if (i + 1) % stride == 0 {
                snapshots.push(m.state.clone());
            }
        }
        let mut defs_reg: [Vec<usize>; Register::COUNT] = Default::default();
        let mut defs_mem: BTreeMap<Word, Vec<usize>> = BTreeMap::new();
        for (i, step) in self.steps.iter().enumerate() {
            for key in step_defs(self.width(), step) {
                match key {
                    DefKey::Reg(r) => defs_reg[r as usize].push(i),
                    DefKey::Mem(a) => defs_mem.entry(a).or_default().push(i),
                }
            }
        }
        StateIndex {
            stride,
            snapshots,
            program: Arc::clone(&self.program),
            config: self.config.clone(),
            defs_reg,
            defs_mem,
        }
    }

    /// Final machine state.
    pub fn final_state(&self) -> MachineState {
        self.state_before(self.steps.len())
    }
}

/// A variable a step can define: a register or one memory byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefKey {
    Reg(u8),
    Mem(Word),
}

/// Which variables `step` writes. Mirrors [`Machine::step`].
pub fn step_defs(w: Width, step: &TraceStep) -> Vec<DefKey> {
    use Opcode::*;
    let instr = &step.instr;
    let mut out = Vec::new();
    match instr.opcode {
        Movi | Mov | Add | Sub | Mul | Udiv | And | Or | Xor | Shl | Shr | Addi | Subi | Muli
        | Andi | Ori | Xori | Shli | Shri | Eq | Ne | Ult | Uge | Slt | Sge | Load => {
            out.push(DefKey::Reg(instr.reg(0).index() as u8));
        }
        Pop => {
            out.push(DefKey::Reg(instr.reg(0).index() as u8));
            out.push(DefKey::Reg(Register::SP.index() as u8));
        }
        Push | Pushi | Call | Callr | Ret => {
            out.push(DefKey::Reg(Register::SP.index() as u8));
        }
        Store | Jmp | Jmpr | Jz | Jnz | Halt => {}
    }
    match instr.opcode {
        Store | Push | Pushi | Call | Callr => {
            let ea = step.effective_addrs[0];
            for j in 0..w.bytes() {
                out.push(DefKey::Mem(w.truncate(ea + j)));
            }
        }
        _ => {}
    }
    out
}

/// Periodic machine-state snapshots over a trace.
#[derive(Debug, Clone)]
pub struct StateIndex {
    stride: usize,
    snapshots: Vec<MachineState>,
    program: Arc<ProgramImage>,
    config: RunConfig,
    defs_reg: [Vec<usize>; Register::COUNT],
    defs_mem: BTreeMap<Word, Vec<usize>>,
}

impl StateIndex {
    /// State immediately before step `idx`.
    pub fn state_before(&self, idx: usize) -> MachineState {
        let snap = (idx / self.stride).min(self.snapshots.len() - 1);
        let mut m = Machine::from_state(
            Arc::clone(&self.program),
            self.snapshots[snap].clone(),
            self.config.clone(),
        );
        for _ in snap * self.stride..idx {
            m.step().expect("replay diverged from recorded trace");
        }
        m.state
    }

    /// Last step strictly before `before` that defines `key`.
    pub fn last_def_before(&self, key: DefKey, before: usize) -> Option<usize> {
        let list = match key {
            DefKey::Reg(r) => &self.defs_reg[r as usize],
            DefKey::Mem(a) => self.defs_mem.get(&a)?,
        };
        match list.partition_point(|&s| s < before) {
            0 => None,
            p => Some(list[p - 1]),
        }
    }
}

/// Per-address record of which conditional-jump outcomes were observed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchCoverage {
    pub taken_seen: bool,
    pub fallthrough_seen: bool,
}

impl BranchCoverage {
    pub fn fully_covered(&self) -> bool {
        self.taken_seen && self.fallthrough_seen
    }
}

/// Which outcomes each conditional jump exhibited across the trace.
/// Unexecuted conditionals are absent.
pub fn branch_coverage(trace: &Trace) -> BTreeMap<Word, BranchCoverage> {
    let mut map: BTreeMap<Word, BranchCoverage> = BTreeMap::new();
    for step in &trace.steps {
        if let Some(taken) = step.branch_taken {
            let e = map.entry(step.addr).or_default();
            if taken {
                e.taken_seen = true;
            } else {
                e.fallthrough_seen = true;
            }
        }
    }
    map
}

/// Execute `image` from its entry point.
pub fn run(image: &ProgramImage, inputs: &Inputs, config: RunConfig) -> Trace {
    let program = Arc::new(image.clone());
    let width = image.width;
    let mut state = MachineState {
        pc: image.entry,
        regs: [0; Register::COUNT],
        mem: BTreeMap::new(),
        layer: 0,
    };
    for (i, b) in image.bytes.iter().enumerate() {
        state.mem.insert(image.base + i as Word, *b);
    }
    state.regs[Register::SP.index()] = config.stack_top;
    for (&r, &v) in &inputs.regs {
        state.regs[r.index()] = width.truncate(v);
    }
    for (&addr, &v) in &inputs.global_words {
        let v = width.truncate(v);
        for i in 0..width.bytes() {
            state.mem.insert(addr + i, ((v >> (8 * i)) & 0xff) as u8);
        }
    }

    let initial = state.clone();
    let mut machine = Machine::from_state(Arc::clone(&program), state, config.clone());
    let mut steps = Vec::new();
    let end = loop {
        if steps.len() >= config.max_steps {
            break TraceEnd::MaxSteps;
        }
        match machine.step() {
            Ok(StepOutcome::Step(step)) => steps.push(step),
            Ok(StepOutcome::Halted(step)) => {
                steps.push(step);
                break TraceEnd::Halted;
            }
            Err(end) => break end,
        }
    };
    Trace {
        program,
        inputs: inputs.clone(),
        config,
        initial,
        steps,
        end,
    }
}

pub enum StepOutcome {
    Step(TraceStep),
    Halted(TraceStep),
}

/// The interpreter proper. Also used for replay; it is deterministic in
/// the starting state.
pub struct Machine {
    pub state: MachineState,
    program: Arc<ProgramImage>,
    config: RunConfig,
    next_index: usize,
}

impl Machine {
    pub fn from_state(program: Arc<ProgramImage>, state: MachineState, config: RunConfig) -> Machine {
        Machine {
            state,
            program,
            config,
            next_index: 0,
        }
    }

    fn width(&self) -> Width {
        self.program.width
    }

    fn addr_ok(&self, addr: Word) -> bool {
        self.program.image_region().contains(&addr) || self.config.stack_region().contains(&addr)
    }

    fn read_byte(&self, addr: Word) -> Result<u8, TraceEnd> {
        if !self.addr_ok(addr) {
            return Err(TraceEnd::MemFault { addr });
        }
        Ok(self.state.mem.get(&addr).copied().unwrap_or(0))
    }

    fn read_word(&self, addr: Word) -> Result<Word, TraceEnd> {
        let mut v = 0;
        for i in 0..self.width().bytes() {
            v |= (self.read_byte(self.width().truncate(addr + i))? as Word) << (8 * i);
        }
        Ok(v)
    }

    /// Writes a word; reports whether any touched byte is in the code region.
    fn write_word(&mut self, addr: Word, v: Word) -> Result<bool, TraceEnd> {
        let mut in_code = false;
        for i in 0..self.width().bytes() {
            let a = self.width().truncate(addr + i);
            if !self.addr_ok(a) {
                return Err(TraceEnd::MemFault { addr: a });
            }
            in_code |= self.program.code_region().contains(&a);
            self.state.mem.insert(a, ((v >> (8 * i)) & 0xff) as u8);
        }
        Ok(in_code)
    }

    /// Decode at the current pc from the (possibly patched) working memory.
    fn decode_current(&self) -> Result<(Instruction, Vec<u8>), TraceEnd> {
        let pc = self.state.pc;
        if !self.program.contains(pc) {
            return Err(TraceEnd::MemFault { addr: pc });
        }
        // Longest instruction is 1 + 1 + 2 words.
        let max_len = (2 + 2 * self.width().bytes()) as usize;
        let mut buf = Vec::with_capacity(max_len);
        for i in 0..max_len as Word {
            let a = pc + i;
            if !self.program.contains(a) {
                break;
            }
            buf.push(self.state.mem.get(&a).copied().unwrap_or(0));
        }
        match decode(self.width(), &buf, 0) {
            Ok(instr) => {
                let bytes = buf[..instr.byte_length as usize].to_vec();
                Ok((instr, bytes))
            }
            Err(_) => Err(TraceEnd::DecodeFault { pc }),
        }
    }

    pub fn step(&mut self) -> Result<StepOutcome, TraceEnd> {
        let width = self.width();
        let mask = |v: Word| width.truncate(v);
        let wb = width.bytes();
        let (instr, bytes) = self.decode_current()?;
        let pc = self.state.pc;
        let fallthrough = mask(pc + instr.byte_length);
        let layer_before = self.state.layer;

        let mut step = TraceStep {
            index: self.next_index,
            addr: pc,
            layer: layer_before,
            bytes,
            instr: instr.clone(),
            effective_addrs: Vec::new(),
            branch_taken: None,
            written_value: None,
            jump_target: None,
        };

        let mut next_pc = fallthrough;
        let mut halted = false;
        let mut code_write: Option<Word> = None;

        use Opcode::*;
        match instr.opcode {
            Movi => {
                let v = mask(instr.word(1));
                self.state.set_reg(instr.reg(0), v);
            }
            Mov => {
                let v = self.state.reg(instr.reg(1));
                self.state.set_reg(instr.reg(0), v);
            }
            Add | Sub | Mul | Udiv | And | Or | Xor | Shl | Shr => {
                let a = self.state.reg(instr.reg(0));
                let b = self.state.reg(instr.reg(1));
                self.state.set_reg(instr.reg(0), alu(width, instr.opcode, a, b));
            }
            Addi | Subi | Muli | Andi | Ori | Xori | Shli | Shri => {
                let a = self.state.reg(instr.reg(0));
                let b = mask(instr.word(1));
                let op = match instr.opcode {
                    Addi => Add,
                    Subi => Sub,
                    Muli => Mul,
                    Andi => And,
                    Ori => Or,
                    Xori => Xor,
                    Shli => Shl,
                    _ => Shr,
                };
                self.state.set_reg(instr.reg(0), alu(width, op, a, b));
            }
            Eq | Ne | Ult | Uge | Slt | Sge => {
                let a = self.state.reg(instr.reg(1));
                let b = self.state.reg(instr.reg(2));
                self.state.set_reg(instr.reg(0), compare(width, instr.opcode, a, b) as Word);
            }
            Load => {
                let ea = mask(self.state.reg(instr.reg(1)).wrapping_add(instr.word(2)));
                step.effective_addrs.push(ea);
                let v = self.read_word(ea)?;
                self.state.set_reg(instr.reg(0), v);
            }
            Store => {
                let ea = mask(self.state.reg(instr.reg(0)).wrapping_add(instr.word(1)));
                step.effective_addrs.push(ea);
                let v = self.state.reg(instr.reg(2));
                if self.write_word(ea, v)? {
                    code_write = Some(v);
                }
            }
            Push | Pushi => {
                let v = match instr.opcode {
                    Push => self.state.reg(instr.reg(0)),
                    _ => mask(instr.word(0)),
                };
                let sp = mask(self.state.reg(Register::SP).wrapping_sub(wb));
                self.state.set_reg(Register::SP, sp);
                step.effective_addrs.push(sp);
                if self.write_word(sp, v)? {
                    code_write = Some(v);
                }
            }
            Pop => {
                let sp = self.state.reg(Register::SP);
                step.effective_addrs.push(sp);
                let v = self.read_word(sp)?;
                self.state.set_reg(instr.reg(0), v);
                self.state.set_reg(Register::SP, mask(sp.wrapping_add(wb)));
            }
            Jmp => next_pc = mask(instr.word(0)),
            Jmpr => {
                let t = self.state.reg(instr.reg(0));
                step.jump_target = Some(t);
                next_pc = t;
            }
            Jz | Jnz => {
                let c = self.state.reg(instr.reg(0));
                let taken = (c == 0) == (instr.opcode == Jz);
                step.branch_taken = Some(taken);
                if taken {
                    next_pc = mask(instr.word(1));
                }
            }
            Call | Callr => {
                let target = match instr.opcode {
                    Call => mask(instr.word(0)),
                    _ => self.state.reg(instr.reg(0)),
                };
                let sp = mask(self.state.reg(Register::SP).wrapping_sub(wb));
                self.state.set_reg(Register::SP, sp);
                step.effective_addrs.push(sp);
                if self.write_word(sp, fallthrough)? {
                    code_write = Some(fallthrough);
                }
                if instr.opcode == Callr {
                    step.jump_target = Some(target);
                }
                next_pc = target;
            }
            Ret => {
                let sp = self.state.reg(Register::SP);
                step.effective_addrs.push(sp);
                let t = self.read_word(sp)?;
                self.state.set_reg(Register::SP, mask(sp.wrapping_add(wb)));
                step.jump_target = Some(t);
                next_pc = t;
            }
            Halt => halted = true,
        }

        if let Some(v) = code_write {
            step.written_value = Some(v);
            self.state.layer += 1;
        }
        self.state.pc = next_pc;
        self.next_index += 1;
        if halted {
            Ok(StepOutcome::Halted(step))
        } else {
            Ok(StepOutcome::Step(step))
        }
    }
}

/// ALU semantics shared with the formula layer: wrapping arithmetic,
/// SMT-LIB division by zero (all ones), shifts by >= W give 0.
pub fn alu(width: Width, op: Opcode, a: Word, b: Word) -> Word {
    let mask = width.mask();
    let r = match op {
        Opcode::Add => a.wrapping_add(b),
        Opcode::Sub => a.wrapping_sub(b),
        Opcode::Mul => a.wrapping_mul(b),
        Opcode::Udiv => {
            if b == 0 {
                mask
            } else {
                a / b
            }
        }
        Opcode::And => a & b,
        Opcode::Or => a | b,
        Opcode::Xor => a ^ b,
        Opcode::Shl => {
            if b >= width.bits() as Word {
                0
            } else {
                a << b
            }
        }
        Opcode::Shr => {
            if b >= width.bits() as Word {
                0
            } else {
                a >> b
            }
        }
        _ => unreachable!("not an ALU opcode"),
    };
    r & mask
}

/// Comparison semantics shared with the formula layer.
pub fn compare(width: Width, op: Opcode, a: Word, b: Word) -> bool {
    let sign = |v: Word| {
        let shift = 64 - width.bits();
        ((v << shift) as i64) >> shift
    };
    match op {
        Opcode::Eq => a == b,
        Opcode::Ne => a != b,
        Opcode::Ult => a < b,
        Opcode::Uge => a >= b,
        Opcode::Slt => sign(a) < sign(b),
        Opcode::Sge => sign(a) >= sign(b),
        _ => unreachable!("not a comparison opcode"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    fn quick_run(src: &str) -> Trace {
        let l = assemble(src, Width::W32, None).unwrap();
        run(&l.image, &Inputs::new(), RunConfig::for_width(Width::W32))
    }

    #[test]
    fn movi_halt() {
        let t = quick_run("MOVI r0, 5\nHALT\n");
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.end, TraceEnd::Halted);
        assert_eq!(t.final_state().reg(Register::new(0).unwrap()), 5);
    }

    #[test]
    fn fig3_gadget_ret_target_is_x() {
        let src = "\
    CALL fun
ret_site:
    HALT
fun:
    PUSHI X
    RET
X:
    MOVI r0, 1
    HALT
";
        let t = quick_run(src);
        let x = t.program.symbol("X").unwrap();
        let ret_site = t.program.symbol("ret_site").unwrap();
        let ret = t
            .steps
            .iter()
            .find(|s| s.instr.opcode == Opcode::Ret)
            .unwrap();
        assert_eq!(ret.jump_target, Some(x));
        assert_ne!(ret.jump_target, Some(ret_site));
        assert_eq!(t.final_state().reg(Register::new(0).unwrap()), 1);
    }

    #[test]
    fn selfmod_store_bumps_layer_and_patches() {
        // Patch the immediate of a later MOVI: the write lands inside the
        // code region, so the next step runs in layer 1 with new semantics.
        let src = "\
    MOVI r1, 7
    MOVI r2, patch_me
    STORE [r2+2], r1
patch_me:
    MOVI r0, 0
    HALT
";
        let t = quick_run(src);
        let store_step = t
            .steps
            .iter()
            .find(|s| s.instr.opcode == Opcode::Store)
            .unwrap();
        assert_eq!(store_step.layer, 0);
        assert_eq!(store_step.written_value, Some(7));
        let patched = &t.steps[store_step.index + 1];
        assert_eq!(patched.layer, 1);
        assert_eq!(t.final_state().reg(Register::new(0).unwrap()), 7);
    }

    #[test]
    fn determinism_and_replay() {
        let src = "\
    MOVI r1, 3
loop:
    ADDI r0, 2
    SUBI r1, 1
    JNZ r1, loop
    PUSH r0
    POP r2
    HALT
";
        let t1 = quick_run(src);
        let t2 = quick_run(src);
        assert_eq!(t1.steps, t2.steps);
        assert_eq!(t1.end, t2.end);
        // Replay from a snapshot index reproduces intermediate state.
        let idx = t1.state_index(2);
        for i in [0usize, 1, 3, t1.steps.len()] {
            assert_eq!(idx.state_before(i), t1.state_before(i));
        }
        // Layer numbers never decrease.
        assert!(t1.steps.windows(2).all(|w| w[0].layer <= w[1].layer));
    }

    #[test]
    fn branch_coverage_outcomes() {
        let src = "\
    MOVI r1, 2
loop:
    SUBI r1, 1
    JNZ r1, loop
    JZ r0, done
    HALT
done:
    HALT
";
        let t = quick_run(src);
        let cov = branch_coverage(&t);
        let jnz_addr = t
            .steps
            .iter()
            .find(|s| s.instr.opcode == Opcode::Jnz)
            .unwrap()
            .addr;
        let jz_addr = t
            .steps
            .iter()
            .find(|s| s.instr.opcode == Opcode::Jz)
            .unwrap()
            .addr;
        assert!(cov[&jnz_addr].fully_covered());
        assert!(cov[&jz_addr].taken_seen && !cov[&jz_addr].fallthrough_seen);
        // r0 stays 0 so the JZ is taken; nothing else is conditional.
        assert_eq!(cov.len(), 2);
    }

    #[test]
    fn decode_fault_ends_trace_with_marker() {
        let t = quick_run("MOVI r1, 1\n.byte 0xF0\n");
        assert_eq!(t.end, TraceEnd::DecodeFault { pc: t.program.entry + 6 });
        assert_eq!(t.steps.len(), 1);
    }

    #[test]
    fn mem_fault_ends_trace() {
        let t = quick_run("MOVI r1, 0x99000000\nLOAD r0, [r1]\nHALT\n");
        assert!(matches!(t.end, TraceEnd::MemFault { .. }));
    }

    #[test]
    fn udiv_by_zero_is_all_ones() {
        let t = quick_run("MOVI r0, 17\nUDIV r0, r1\nHALT\n");
        assert_eq!(t.final_state().reg(Register::new(0).unwrap()), 0xffff_ffff);
    }
}
