//! End-to-end detection scenarios: hand-written programs exercising each
//! analysis against the bundled solver.

use bbdse::detect::{
    classify_ret, detect_opaque, jump_closure, opaque_constant, selfmod_conditional, Alignment,
    BranchDirection, ClosureKind, ConstKind, Detector, Integrity, Multiplicity, OpacityKind,
    SelfmodKind,
};
use bbdse::isa::{assemble, Opcode, Register, Width};
use bbdse::solver::{Solver, SolverCmd};
use bbdse::tracer::{run, Inputs, RunConfig, Trace};
use std::time::Duration;

fn solver() -> Solver {
    Solver::new(
        SolverCmd::new(env!("CARGO_BIN_EXE_bbsolve")),
        Duration::from_secs(5),
    )
}

fn run_with(src: &str, setup: impl FnOnce(&bbdse::isa::ProgramImage) -> Inputs) -> Trace {
    let l = assemble(src, Width::W32, None).unwrap();
    let inputs = setup(&l.image);
    run(&l.image, &inputs, RunConfig::for_width(Width::W32))
}

fn find_op(trace: &Trace, op: Opcode, nth: usize) -> u64 {
    trace
        .steps
        .iter()
        .filter(|s| s.instr.opcode == op)
        .map(|s| s.addr)
        .nth(nth)
        .unwrap()
}

const FIG2_STYLE: &str = "\
gx: .word 0
gy: .word 0
entry:
    MOVI r7, gy
    LOAD r6, [r7]
    MUL r6, r6
    MULI r6, 7
    SUBI r6, 1
    MOVI r7, gx
    LOAD r5, [r7]
    MUL r5, r5
    EQ r5, r6, r5
    JNZ r5, trap
    MOVI r0, 1
    HALT
trap:
    .byte 0xF0, 0xF1
    MOVI r0, 99
    HALT
";

#[test]
fn square_residue_predicate_opaque_at_k16() {
    let t = run_with(FIG2_STYLE, |img| {
        Inputs::new().global(img, "gx", 3).global(img, "gy", 11)
    });
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jnz = find_op(&t, Opcode::Jnz, 0);
    let status = detect_opaque(&d, jnz).unwrap();
    assert_eq!(status.status, OpacityKind::Opaque(BranchDirection::Taken));
    assert_eq!(status.per_occurrence.len(), 1);
}

#[test]
fn square_residue_predicate_missed_at_k2() {
    // The window is too short to reconstruct the squarings: cut inputs
    // stand for the products and the slice stays satisfiable.
    let t = run_with(FIG2_STYLE, |img| {
        Inputs::new().global(img, "gx", 3).global(img, "gy", 11)
    });
    let s = solver();
    let d = Detector::new(&t, &s, 2);
    let jnz = find_op(&t, Opcode::Jnz, 0);
    let status = detect_opaque(&d, jnz).unwrap();
    assert_eq!(status.status, OpacityKind::Genuine);
}

#[test]
fn mutually_exclusive_compare_pair_is_contextually_opaque() {
    // ULT then UGE over the same operands: the second jump's dead
    // direction is provable only through the first branch's constraint.
    let src = "\
gx: .word 0
gy: .word 0
entry:
    MOVI r7, gx
    LOAD r0, [r7]
    MOVI r7, gy
    LOAD r1, [r7]
    ULT r2, r0, r1
    JNZ r2, less
    HALT
less:
    UGE r3, r0, r1
    JNZ r3, trap
    MOVI r0, 7
    HALT
trap:
    HALT
";
    let t = run_with(src, |img| {
        Inputs::new().global(img, "gx", 3).global(img, "gy", 9)
    });
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let second = find_op(&t, Opcode::Jnz, 1);
    let status = detect_opaque(&d, second).unwrap();
    assert_eq!(status.status, OpacityKind::Opaque(BranchDirection::Taken));
    // The first jump is genuine: its other direction only needs gx >= gy.
    let first = find_op(&t, Opcode::Jnz, 0);
    let status = detect_opaque(&d, first).unwrap();
    assert_eq!(status.status, OpacityKind::Genuine);
}

#[test]
fn covered_loop_conditional_is_exact() {
    let src = "\
entry:
    MOVI r1, 3
loop:
    SUBI r1, 1
    JNZ r1, loop
    HALT
";
    let t = run_with(src, |_| Inputs::new());
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jnz = find_op(&t, Opcode::Jnz, 0);
    let status = detect_opaque(&d, jnz).unwrap();
    assert_eq!(status.status, OpacityKind::Covered);
}

#[test]
fn fig3_gadget_is_violated_single() {
    let src = "\
entry:
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
    let t = run_with(src, |_| Inputs::new());
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let report = classify_ret(&d);
    let ret_addr = find_op(&t, Opcode::Ret, 0);
    let label = report.labels[&ret_addr];
    assert_eq!(label.integrity, Integrity::Violated);
    assert_eq!(label.multiplicity, Multiplicity::Single);
    let x = t.program.symbol("X").unwrap();
    assert_eq!(report.occurrences[0].target, x);
}

#[test]
fn ordinary_call_ret_is_genuine_aligned() {
    let src = "\
entry:
    MOVI r0, 5
    CALL f
    HALT
f:
    ADDI r0, 1
    RET
";
    let t = run_with(src, |_| Inputs::new());
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let report = classify_ret(&d);
    let ret_addr = find_op(&t, Opcode::Ret, 0);
    let label = report.labels[&ret_addr];
    assert_eq!(label.integrity, Integrity::Genuine);
    assert_eq!(label.alignment, Alignment::Aligned);
    assert!(report.suppressed_return_sites.is_empty());
}

#[test]
fn in_place_return_tamper_is_violated_single_aligned() {
    // The callee rewrites its own return slot in place: a violation with
    // a provably unique target and an intact stack offset.
    let src = "\
entry:
    CALL f
dead:
    HALT
    .byte 0, 0, 0, 0, 0, 0, 0, 0
X:
    MOVI r0, 1
    HALT
f:
    LOAD r7, [sp]
    ADDI r7, 9
    STORE [sp], r7
    RET
";
    let t = run_with(src, |_| Inputs::new());
    // The patched return target must land on X: call is 5 bytes, HALT 1,
    // junk 8, so site + 9 = X.
    let x = t.program.symbol("X").unwrap();
    let dead = t.program.symbol("dead").unwrap();
    assert_eq!(dead + 9, x);
    let ret = t
        .steps
        .iter()
        .find(|s| s.instr.opcode == Opcode::Ret)
        .unwrap();
    assert_eq!(ret.jump_target, Some(x));

    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let report = classify_ret(&d);
    let label = report.labels[&ret.addr];
    assert_eq!(label.integrity, Integrity::Violated);
    assert_eq!(label.multiplicity, Multiplicity::Single);
    assert_eq!(label.alignment, Alignment::Aligned);
    // The textual return site of the matched call is provably skipped.
    assert!(report.suppressed_return_sites.contains(&dead));
}

#[test]
fn opaque_constants() {
    let src = "\
gx: .word 0
entry:
    MOVI r0, 7
    MOVI r7, gx
    LOAD r1, [r7]
    XOR r2, r2
    HALT
";
    let t = run_with(src, |img| Inputs::new().global(img, "gx", 123));
    let s = solver();
    let d = Detector::new(&t, &s, 8);
    let movi = find_op(&t, Opcode::Movi, 0);
    let r0 = Register::new(0).unwrap();
    let c = opaque_constant(&d, movi, r0).unwrap();
    assert_eq!(c.status, ConstKind::OpaqueConst(7));

    // Input-derived value: anything is possible.
    let load = find_op(&t, Opcode::Load, 0);
    let c = opaque_constant(&d, load, Register::new(1).unwrap()).unwrap();
    assert_eq!(c.status, ConstKind::Variable);

    // xor r2, r2 always yields zero.
    let xor = find_op(&t, Opcode::Xor, 0);
    let c = opaque_constant(&d, xor, Register::new(2).unwrap()).unwrap();
    assert_eq!(c.status, ConstKind::OpaqueConst(0));
}

const DISPATCH_TABLE: &str = "\
gx: .word 0
tab: .word L1, L2
entry:
    MOVI r4, 2
    MOVI r7, gx
    LOAD r6, [r7]
loop:
    MOV r5, r6
    ANDI r5, 1
    SHLI r5, 2
    MOVI r7, tab
    ADD r7, r5
    LOAD r5, [r7]
    JMPR r5
L1:
    ADDI r0, 1
    JMP next
L2:
    ADDI r1, 1
next:
    XORI r6, 1
    SUBI r4, 1
    JNZ r4, loop
    HALT
";

#[test]
fn constant_table_jump_is_closed_when_both_targets_seen() {
    let t = run_with(DISPATCH_TABLE, |img| Inputs::new().global(img, "gx", 0));
    assert_eq!(t.final_state().reg(Register::new(0).unwrap()), 1);
    assert_eq!(t.final_state().reg(Register::new(1).unwrap()), 1);
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jmpr = find_op(&t, Opcode::Jmpr, 0);
    let c = jump_closure(&d, jmpr).unwrap();
    assert_eq!(c.status, ClosureKind::Closed);
    assert_eq!(c.targets.len(), 2);
}

#[test]
fn table_jump_open_when_one_target_unseen() {
    // Only one pass through the dispatcher: the other table entry is a
    // reachable counterexample.
    let src = DISPATCH_TABLE.replace("MOVI r4, 2", "MOVI r4, 1");
    let t = run_with(&src, |img| Inputs::new().global(img, "gx", 0));
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jmpr = find_op(&t, Opcode::Jmpr, 0);
    let c = jump_closure(&d, jmpr).unwrap();
    assert_eq!(c.status, ClosureKind::Open);
    assert_eq!(c.targets.len(), 1);
}

#[test]
fn raw_input_jump_is_open() {
    let src = "\
gx: .word 0
entry:
    MOVI r7, gx
    LOAD r5, [r7]
    JMPR r5
L:
    HALT
";
    let t = run_with(src, |img| {
        let l = img.symbol("L").unwrap();
        Inputs::new().global_at(img.symbol("gx").unwrap(), l)
    });
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jmpr = find_op(&t, Opcode::Jmpr, 0);
    let c = jump_closure(&d, jmpr).unwrap();
    assert_eq!(c.status, ClosureKind::Open);
}

#[test]
fn selfmod_constant_store_is_unconditional() {
    let src = "\
entry:
    MOVI r1, 1
    MOVI r2, patch
    STORE [r2+2], r1
patch:
    MOVI r0, 0
    HALT
";
    let t = run_with(src, |_| Inputs::new());
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let store = t
        .steps
        .iter()
        .find(|s| s.written_value.is_some())
        .unwrap();
    let v = selfmod_conditional(&d, store.index).unwrap();
    assert_eq!(v.status, SelfmodKind::Unconditional);
    assert_eq!(v.written, 1);
}

#[test]
fn selfmod_input_store_is_conditional() {
    let src = "\
gx: .word 0
entry:
    MOVI r7, gx
    LOAD r1, [r7]
    MOVI r2, patch
    STORE [r2+2], r1
patch:
    MOVI r0, 0
    HALT
";
    let t = run_with(src, |img| Inputs::new().global(img, "gx", 0x2a));
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let store = t
        .steps
        .iter()
        .find(|s| s.written_value.is_some())
        .unwrap();
    let v = selfmod_conditional(&d, store.index).unwrap();
    assert_eq!(v.status, SelfmodKind::Conditional);
}

/// The self-modification decoy: a conditional whose register is freshly
/// zeroed looks opaque statically, but the fallthrough path patches the
/// zeroing immediate to 1, so the loop's second pass takes the jump.
pub const SELFMOD_DECOY: &str = "\
again:
patch:
    MOVI r3, 0
    JNZ r3, done
    MOVI r1, 1
    MOVI r2, patch
    STORE [r2+2], r1
    JMP again
done:
    HALT
";

#[test]
fn selfmod_decoy_is_covered_not_opaque() {
    let t = run_with(SELFMOD_DECOY, |_| Inputs::new());
    let s = solver();
    let d = Detector::new(&t, &s, 16);
    let jnz = find_op(&t, Opcode::Jnz, 0);
    let status = detect_opaque(&d, jnz).unwrap();
    assert_eq!(status.status, OpacityKind::Covered);
    // The patching store writes a constant: unconditional self-modification.
    let store = t
        .steps
        .iter()
        .find(|s| s.written_value.is_some())
        .unwrap();
    let v = selfmod_conditional(&d, store.index).unwrap();
    assert_eq!(v.status, SelfmodKind::Unconditional);
    // The patched conditional executed in both layers with both outcomes.
    let patch = t.program.symbol("patch").unwrap();
    let layers: std::collections::BTreeSet<u32> = t
        .steps
        .iter()
        .filter(|s| s.addr == patch)
        .map(|s| s.layer)
        .collect();
    assert_eq!(layers.len(), 2);
}
