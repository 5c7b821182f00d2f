//! Line-delimited trace files.
//!
//! One step per line: `idx layer addr hex(bytes) MNEMONIC [ea=..] [tgt=..]
//! [br=0|1] [wv=..]`. Words are lower-case hex, exactly `W/4` digits.
//! Header lines start with `#` and carry the width, the initial register
//! file, global-word overrides (by address) and the end-of-trace reason.

use super::{Inputs, MachineState, RunConfig, Trace, TraceEnd, TraceStep};
use crate::isa::{decode, ProgramImage, Register, Width};
use crate::Word;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceFormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace was recorded for width {trace} but image is width {image}")]
    WidthMismatch { trace: u32, image: u32 },
    #[error("step {index}: recorded bytes do not decode to a valid instruction")]
    BadBytes { index: usize },
}

fn hex_word(width: Width, v: Word) -> String {
    format!("{:0>1$x}", v, (width.bits() / 4) as usize)
}

pub fn format_trace(trace: &Trace) -> String {
    let w = trace.width();
    let mut out = String::new();
    let end = match &trace.end {
        TraceEnd::Halted => "halt".to_string(),
        TraceEnd::MaxSteps => "max_steps".to_string(),
        TraceEnd::DecodeFault { pc } => format!("fault:decode:{}", hex_word(w, *pc)),
        TraceEnd::MemFault { addr } => format!("fault:mem:{}", hex_word(w, *addr)),
    };
    let _ = writeln!(
        out,
        "# bbdse-trace v1 width={} base={} entry={} steps={} end={}",
        w.bits(),
        hex_word(w, trace.program.base),
        hex_word(w, trace.program.entry),
        trace.steps.len(),
        end
    );
    let mut regs = String::new();
    for r in Register::all() {
        let _ = write!(regs, " {}={}", r.name(), hex_word(w, trace.initial.reg(r)));
    }
    let _ = writeln!(out, "# init{regs}");
    for (&addr, &v) in &trace.inputs.global_words {
        let _ = writeln!(out, "# glob {}={}", hex_word(w, addr), hex_word(w, v));
    }
    for step in &trace.steps {
        let mut bytes = String::with_capacity(step.bytes.len() * 2);
        for b in &step.bytes {
            let _ = write!(bytes, "{b:02x}");
        }
        let _ = write!(
            out,
            "{} {} {} {} {}",
            step.index,
            step.layer,
            hex_word(w, step.addr),
            bytes,
            step.instr.opcode.mnemonic()
        );
        if !step.effective_addrs.is_empty() {
            let eas: Vec<String> = step.effective_addrs.iter().map(|&a| hex_word(w, a)).collect();
            let _ = write!(out, " ea={}", eas.join(","));
        }
        if let Some(t) = step.jump_target {
            let _ = write!(out, " tgt={}", hex_word(w, t));
        }
        if let Some(b) = step.branch_taken {
            let _ = write!(out, " br={}", b as u8);
        }
        if let Some(v) = step.written_value {
            let _ = write!(out, " wv={}", hex_word(w, v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trace_file(trace: &Trace, path: &Path) -> Result<(), TraceFormatError> {
    std::fs::write(path, format_trace(trace))?;
    Ok(())
}

/// Rebuild a [`Trace`] from its file against the image it was recorded on.
/// Recorded bytes are re-decoded (and validated) rather than trusted.
pub fn read_trace_file(path: &Path, image: &ProgramImage) -> Result<Trace, TraceFormatError> {
    parse_trace(&std::fs::read_to_string(path)?, image)
}

pub fn parse_trace(text: &str, image: &ProgramImage) -> Result<Trace, TraceFormatError> {
    let mut end = TraceEnd::Halted;
    let mut init_regs: BTreeMap<Register, Word> = BTreeMap::new();
    let mut globals: BTreeMap<Word, Word> = BTreeMap::new();
    let mut steps: Vec<TraceStep> = Vec::new();
    let err = |line: usize, msg: &str| TraceFormatError::Parse {
        line,
        msg: msg.to_string(),
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(hdr) = line.strip_prefix('#') {
            let mut parts = hdr.split_whitespace().peekable();
            match parts.next() {
                Some("bbdse-trace") => {
                    for kv in parts {
                        if let Some(v) = kv.strip_prefix("width=") {
                            let bits: u32 = v
                                .parse()
                                .map_err(|_| err(line_no, "bad width"))?;
                            if bits != image.width.bits() {
                                return Err(TraceFormatError::WidthMismatch {
                                    trace: bits,
                                    image: image.width.bits(),
                                });
                            }
                        } else if let Some(v) = kv.strip_prefix("end=") {
                            end = parse_end(v).ok_or_else(|| err(line_no, "bad end"))?;
                        }
                    }
                }
                Some("init") => {
                    for kv in parts {
                        let (name, val) = kv
                            .split_once('=')
                            .ok_or_else(|| err(line_no, "bad init pair"))?;
                        let reg = Register::all()
                            .find(|r| r.name() == name)
                            .ok_or_else(|| err(line_no, "bad init register"))?;
                        let val = Word::from_str_radix(val, 16)
                            .map_err(|_| err(line_no, "bad init value"))?;
                        init_regs.insert(reg, val);
                    }
                }
                Some("glob") => {
                    for kv in parts {
                        let (addr, val) = kv
                            .split_once('=')
                            .ok_or_else(|| err(line_no, "bad glob pair"))?;
                        let addr = Word::from_str_radix(addr, 16)
                            .map_err(|_| err(line_no, "bad glob addr"))?;
                        let val = Word::from_str_radix(val, 16)
                            .map_err(|_| err(line_no, "bad glob value"))?;
                        globals.insert(addr, val);
                    }
                }
                _ => {}
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let index: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(line_no, "bad index"))?;
        let layer: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(line_no, "bad layer"))?;
        let addr = parts
            .next()
            .and_then(|s| Word::from_str_radix(s, 16).ok())
            .ok_or_else(|| err(line_no, "bad addr"))?;
        let bytes_hex = parts.next().ok_or_else(|| err(line_no, "missing bytes"))?;
        if bytes_hex.len() % 2 != 0 {
            return Err(err(line_no, "odd byte string"));
        }
        let bytes: Vec<u8> = (0..bytes_hex.len() / 2)
            .map(|j| u8::from_str_radix(&bytes_hex[2 * j..2 * j + 2], 16))
            .collect::<Result<_, _>>()
            .map_err(|_| err(line_no, "bad byte hex"))?;
        let mnemonic = parts.next().ok_or_else(|| err(line_no, "missing mnemonic"))?;
        let instr = decode(image.width, &bytes, 0)
            .map_err(|_| TraceFormatError::BadBytes { index })?;
        if !instr.opcode.mnemonic().eq_ignore_ascii_case(mnemonic) {
            return Err(err(line_no, "mnemonic does not match bytes"));
        }
        let mut step = TraceStep {
            index,
            addr,
            layer,
            bytes,
            instr,
            effective_addrs: Vec::new(),
            branch_taken: None,
            written_value: None,
            jump_target: None,
        };
        for field in parts {
            if let Some(v) = field.strip_prefix("ea=") {
                for a in v.split(',') {
                    step.effective_addrs.push(
                        Word::from_str_radix(a, 16).map_err(|_| err(line_no, "bad ea"))?,
                    );
                }
            } else if let Some(v) = field.strip_prefix("tgt=") {
                step.jump_target =
                    Some(Word::from_str_radix(v, 16).map_err(|_| err(line_no, "bad tgt"))?);
            } else if let Some(v) = field.strip_prefix("br=") {
                step.branch_taken = Some(v == "1");
            } else if let Some(v) = field.strip_prefix("wv=") {
                step.written_value =
                    Some(Word::from_str_radix(v, 16).map_err(|_| err(line_no, "bad wv"))?);
            } else {
                return Err(err(line_no, "unknown field"));
            }
        }
        steps.push(step);
    }

    // Reconstruct the initial machine state the same way `run` builds it.
    let config = RunConfig::for_width(image.width);
    let mut state = MachineState {
        pc: image.entry,
        regs: [0; Register::COUNT],
        mem: BTreeMap::new(),
        layer: 0,
    };
    for (j, b) in image.bytes.iter().enumerate() {
        state.mem.insert(image.base + j as Word, *b);
    }
    for (&r, &v) in &init_regs {
        state.regs[r.index()] = v;
    }
    for (&addr, &v) in &globals {
        for j in 0..image.width.bytes() {
            state.mem.insert(addr + j, ((v >> (8 * j)) & 0xff) as u8);
        }
    }
    let mut inputs = Inputs::new();
    for (&addr, &v) in &globals {
        inputs.global_words.insert(addr, v);
    }
    for (&r, &v) in &init_regs {
        if state.regs[r.index()] != 0 || v != 0 {
            inputs.regs.insert(r, v);
        }
    }
    Ok(Trace {
        program: Arc::new(image.clone()),
        inputs,
        config,
        initial: state,
        steps,
        end,
    })
}

fn parse_end(s: &str) -> Option<TraceEnd> {
    if s == "halt" {
        Some(TraceEnd::Halted)
    } else if s == "max_steps" {
        Some(TraceEnd::MaxSteps)
    } else if let Some(v) = s.strip_prefix("fault:decode:") {
        Some(TraceEnd::DecodeFault {
            pc: Word::from_str_radix(v, 16).ok()?,
        })
    } else if let Some(v) = s.strip_prefix("fault:mem:") {
        Some(TraceEnd::MemFault {
            addr: Word::from_str_radix(v, 16).ok()?,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;
    use crate::tracer::run;

    #[test]
    fn trace_file_roundtrip() {
        let src = "\
gx: .word 0
start:
    MOVI r4, gx
    LOAD r1, [r4]
loop:
    SUBI r1, 1
    JNZ r1, loop
    PUSH r1
    POP r2
    HALT
";
        let l = assemble(src, Width::W32, None).unwrap();
        let inputs = Inputs::new().global(&l.image, "gx", 3).reg(Register::new(0).unwrap(), 9);
        let t = run(&l.image, &inputs, RunConfig::for_width(Width::W32));
        let text = format_trace(&t);
        let back = parse_trace(&text, &l.image).unwrap();
        assert_eq!(back.steps, t.steps);
        assert_eq!(back.end, t.end);
        assert_eq!(back.initial, t.initial);
        // Hex fields are lower-case and exactly W/4 digits wide.
        let step_line = text.lines().find(|l| !l.starts_with('#')).unwrap();
        let addr_field = step_line.split_whitespace().nth(2).unwrap();
        assert_eq!(addr_field.len(), 8);
        assert_eq!(addr_field.to_lowercase(), addr_field);
    }
}
