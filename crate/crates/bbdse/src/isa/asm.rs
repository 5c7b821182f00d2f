//! Two-pass textual assembler.
//!
//! One instruction per line, `label:` prefixes, `;` comments, `.byte` and
//! `.word` data directives, `.base`/`.width` overrides. Data directives
//! before the first instruction form the data region (their labels become
//! globals); the first instruction is the entry point and starts the code
//! region. `.byte` after code has started emits raw junk/data-in-code.

use super::encoding::encode;
use super::image::parse_word;
use super::{Instruction, Opcode, Operand, OperandKind, ProgramImage, Register, Width};
use crate::Word;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic {mnemonic:?}")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unresolved label {label:?}")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label {label:?}")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: immediate {value} out of {width}-bit range")]
    ImmOutOfRange { line: usize, value: String, width: u32 },
    #[error("program has no instructions (no entry point)")]
    NoCode,
    #[error("data directive after code start must not precede the entry")]
    BadLayout,
}

/// Where each assembled instruction landed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingEntry {
    pub addr: Word,
    pub instr: Instruction,
    pub line: usize,
}

/// Assembly output: the image plus the instruction listing (the exact set
/// of intended instructions, used as ground truth by scoring).
#[derive(Debug, Clone)]
pub struct Listing {
    pub image: ProgramImage,
    pub instructions: Vec<ListingEntry>,
}

#[derive(Debug, Clone)]
enum Item {
    Instr { line: usize, opcode: Opcode, args: Vec<RawArg> },
    Bytes { line: usize, values: Vec<RawArg> },
    Words { line: usize, values: Vec<RawArg> },
}

#[derive(Debug, Clone)]
enum RawArg {
    Reg(Register),
    Num(Word),
    Label(String),
    Mem { base: Register, offset: Box<RawArg> },
}

/// Assemble `source` at the given width. `base` falls back to the width
/// default unless overridden here or by a `.base` directive.
pub fn assemble(source: &str, width: Width, base: Option<Word>) -> Result<Listing, AsmError> {
    let mut items: Vec<(Option<Vec<String>>, Item)> = Vec::new();
    let mut pending_labels: Vec<String> = Vec::new();
    let mut base = base;
    let mut width = width;

    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let mut text = raw_line;
        if let Some(p) = text.find(';') {
            text = &text[..p];
        }
        let mut text = text.trim();
        // Leading labels, possibly several, possibly alone on the line.
        while let Some(colon) = find_label_colon(text) {
            let label = text[..colon].trim();
            if !is_ident(label) {
                return Err(AsmError::Syntax {
                    line: line_no,
                    msg: format!("bad label {label:?}"),
                });
            }
            pending_labels.push(label.to_string());
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = match text.find(char::is_whitespace) {
            Some(p) => (&text[..p], text[p..].trim()),
            None => (text, ""),
        };
        let item = if let Some(directive) = head.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "byte" => Item::Bytes {
                    line: line_no,
                    values: parse_args(rest, line_no)?,
                },
                "word" => Item::Words {
                    line: line_no,
                    values: parse_args(rest, line_no)?,
                },
                "base" => {
                    base = Some(parse_word(rest).ok_or_else(|| AsmError::Syntax {
                        line: line_no,
                        msg: format!("bad .base operand {rest:?}"),
                    })?);
                    continue;
                }
                "width" => {
                    let bits: u32 = rest.parse().map_err(|_| AsmError::Syntax {
                        line: line_no,
                        msg: format!("bad .width operand {rest:?}"),
                    })?;
                    width = Width::from_bits(bits).ok_or(AsmError::Syntax {
                        line: line_no,
                        msg: format!("unsupported width {bits}"),
                    })?;
                    continue;
                }
                other => {
                    return Err(AsmError::Syntax {
                        line: line_no,
                        msg: format!("unknown directive .{other}"),
                    })
                }
            }
        } else {
            let opcode = Opcode::from_mnemonic(head).ok_or_else(|| AsmError::UnknownMnemonic {
                line: line_no,
                mnemonic: head.to_string(),
            })?;
            Item::Instr {
                line: line_no,
                opcode,
                args: parse_args(rest, line_no)?,
            }
        };
        let labels = if pending_labels.is_empty() {
            None
        } else {
            Some(std::mem::take(&mut pending_labels))
        };
        items.push((labels, item));
    }

    let base = base.unwrap_or_else(|| width.default_base());

    // Pass 1: layout.
    let mut addr = base;
    let mut symbols: BTreeMap<String, Word> = BTreeMap::new();
    let mut entry: Option<Word> = None;
    let mut item_addrs = Vec::with_capacity(items.len());
    for (labels, item) in &items {
        if let Some(labels) = labels {
            for label in labels {
                if symbols.insert(label.clone(), addr).is_some() {
                    return Err(AsmError::DuplicateLabel {
                        line: item_line(item),
                        label: label.clone(),
                    });
                }
            }
        }
        // Trailing labels at end of file would need an extra item; keep the
        // grammar strict instead.
        item_addrs.push(addr);
        addr += match item {
            Item::Instr { opcode, .. } => {
                if entry.is_none() {
                    entry = Some(addr);
                }
                opcode.encoded_len(width)
            }
            Item::Bytes { values, .. } => values.len() as Word,
            Item::Words { values, .. } => values.len() as Word * width.bytes(),
        };
    }
    if !pending_labels.is_empty() {
        // Labels at the very end of the source point one past the image.
        for label in pending_labels {
            symbols.insert(label, addr);
        }
    }
    let entry = entry.ok_or(AsmError::NoCode)?;

    // Pass 2: emission.
    let mut bytes = Vec::with_capacity((addr - base) as usize);
    let mut listing = Vec::new();
    for ((_, item), &item_addr) in items.iter().zip(&item_addrs) {
        debug_assert_eq!(base + bytes.len() as Word, item_addr);
        match item {
            Item::Instr { line, opcode, args } => {
                let instr = build_instruction(width, *opcode, args, *line, &symbols)?;
                bytes.extend_from_slice(&encode(width, &instr));
                listing.push(ListingEntry {
                    addr: item_addr,
                    instr,
                    line: *line,
                });
            }
            Item::Bytes { line, values } => {
                for v in values {
                    let w = resolve_num(v, *line, &symbols)?;
                    if w > 0xff {
                        return Err(AsmError::ImmOutOfRange {
                            line: *line,
                            value: format!("{w:#x}"),
                            width: 8,
                        });
                    }
                    bytes.push(w as u8);
                }
            }
            Item::Words { line, values } => {
                for v in values {
                    let w = resolve_imm(v, *line, &symbols, width)?;
                    for i in 0..width.bytes() {
                        bytes.push(((w >> (8 * i)) & 0xff) as u8);
                    }
                }
            }
        }
    }

    let image = ProgramImage::new(width, base, bytes, entry, symbols).map_err(|e| {
        AsmError::Syntax {
            line: 0,
            msg: e.to_string(),
        }
    })?;
    Ok(Listing {
        image,
        instructions: listing,
    })
}

fn item_line(item: &Item) -> usize {
    match item {
        Item::Instr { line, .. } | Item::Bytes { line, .. } | Item::Words { line, .. } => *line,
    }
}

/// Find the colon ending a leading label, ignoring colons elsewhere.
fn find_label_colon(text: &str) -> Option<usize> {
    let colon = text.find(':')?;
    is_ident(text[..colon].trim()).then_some(colon)
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && Register::all().all(|r| !s.eq_ignore_ascii_case(r.name()))
}

fn parse_args(rest: &str, line: usize) -> Result<Vec<RawArg>, AsmError> {
    let mut args = Vec::new();
    let rest = rest.trim();
    if rest.is_empty() {
        return Ok(args);
    }
    for part in split_commas(rest) {
        let part = part.trim();
        args.push(parse_arg(part, line)?);
    }
    Ok(args)
}

/// Split on commas that are not inside brackets.
fn split_commas(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_arg(part: &str, line: usize) -> Result<RawArg, AsmError> {
    if let Some(inner) = part.strip_prefix('[').and_then(|p| p.strip_suffix(']')) {
        let inner = inner.trim();
        let (reg_txt, off_txt) = match inner.find('+') {
            Some(p) => (inner[..p].trim(), inner[p + 1..].trim()),
            None => (inner, "0"),
        };
        let base = parse_register(reg_txt).ok_or_else(|| AsmError::Syntax {
            line,
            msg: format!("bad memory base register {reg_txt:?}"),
        })?;
        let offset = parse_arg(off_txt, line)?;
        return Ok(RawArg::Mem {
            base,
            offset: Box::new(offset),
        });
    }
    if let Some(r) = parse_register(part) {
        return Ok(RawArg::Reg(r));
    }
    if let Some(n) = parse_word(part) {
        return Ok(RawArg::Num(n));
    }
    if is_ident(part) {
        return Ok(RawArg::Label(part.to_string()));
    }
    Err(AsmError::Syntax {
        line,
        msg: format!("cannot parse operand {part:?}"),
    })
}

fn parse_register(s: &str) -> Option<Register> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("sp") {
        return Some(Register::SP);
    }
    let rest = s.strip_prefix('r').or_else(|| s.strip_prefix('R'))?;
    let idx: u8 = rest.parse().ok()?;
    if idx <= 7 {
        Register::new(idx)
    } else {
        None
    }
}

fn resolve_num(arg: &RawArg, line: usize, symbols: &BTreeMap<String, Word>) -> Result<Word, AsmError> {
    match arg {
        RawArg::Num(n) => Ok(*n),
        RawArg::Label(l) => symbols.get(l).copied().ok_or_else(|| AsmError::UnresolvedLabel {
            line,
            label: l.clone(),
        }),
        _ => Err(AsmError::Syntax {
            line,
            msg: "expected a number or label".into(),
        }),
    }
}

fn resolve_imm(
    arg: &RawArg,
    line: usize,
    symbols: &BTreeMap<String, Word>,
    width: Width,
) -> Result<Word, AsmError> {
    let raw = resolve_num(arg, line, symbols)?;
    let masked = width.truncate(raw);
    // Accept wrapped negatives (parse_word already two's-complemented them),
    // reject anything whose significant bits do not fit.
    let fits_unsigned = raw == masked;
    let fits_negative = {
        // raw came from `-n`: all high bits set.
        let high = raw & !width.mask();
        high == !width.mask() && (masked >> (width.bits() - 1)) == 1
    };
    if fits_unsigned || fits_negative {
        Ok(masked)
    } else {
        Err(AsmError::ImmOutOfRange {
            line,
            value: format!("{raw:#x}"),
            width: width.bits(),
        })
    }
}

fn build_instruction(
    width: Width,
    opcode: Opcode,
    args: &[RawArg],
    line: usize,
    symbols: &BTreeMap<String, Word>,
) -> Result<Instruction, AsmError> {
    // Surface syntax for LOAD/STORE uses a bracketed operand; flatten it to
    // the encoding order first.
    let flat: Vec<RawArg> = match (opcode, args) {
        (Opcode::Load, [rd, RawArg::Mem { base, offset }]) => {
            vec![rd.clone(), RawArg::Reg(*base), (**offset).clone()]
        }
        (Opcode::Store, [RawArg::Mem { base, offset }, rs2]) => {
            vec![RawArg::Reg(*base), (**offset).clone(), rs2.clone()]
        }
        _ => args.to_vec(),
    };
    let kinds = opcode.operand_kinds();
    if flat.len() != kinds.len() {
        return Err(AsmError::Syntax {
            line,
            msg: format!(
                "{} takes {} operand(s), got {}",
                opcode.mnemonic(),
                kinds.len(),
                flat.len()
            ),
        });
    }
    let mut operands = Vec::with_capacity(kinds.len());
    for (kind, arg) in kinds.iter().zip(&flat) {
        match kind {
            OperandKind::Reg => match arg {
                RawArg::Reg(r) => operands.push(Operand::Reg(*r)),
                _ => {
                    return Err(AsmError::Syntax {
                        line,
                        msg: format!("{} expects a register here", opcode.mnemonic()),
                    })
                }
            },
            OperandKind::Imm => operands.push(Operand::Imm(resolve_imm(arg, line, symbols, width)?)),
            OperandKind::Addr => {
                operands.push(Operand::Addr(resolve_imm(arg, line, symbols, width)?))
            }
        }
    }
    Ok(Instruction::new(width, opcode, operands))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    #[test]
    fn movi_halt_is_seven_bytes() {
        let l = assemble("MOVI r0, 5\nHALT\n", Width::W32, None).unwrap();
        assert_eq!(l.image.bytes.len(), 7);
        assert_eq!(l.instructions.len(), 2);
        let at_entry = decode(Width::W32, &l.image.bytes, 0).unwrap();
        assert_eq!(at_entry.opcode, Opcode::Movi);
        assert_eq!(at_entry.word(1), 5);
    }

    #[test]
    fn decode_matches_listing_everywhere() {
        let src = "\
start:
    MOVI r1, 0x10
    ADDI r1, 2
    EQ r2, r1, r0
    LOAD r3, [sp+4]
    STORE [sp+0], r3
    JZ r2, start
    HALT
";
        let l = assemble(src, Width::W32, None).unwrap();
        for entry in &l.instructions {
            let off = (entry.addr - l.image.base) as usize;
            let got = decode(Width::W32, &l.image.bytes, off).unwrap();
            assert_eq!(got, entry.instr, "at {:#x}", entry.addr);
        }
    }

    #[test]
    fn fig3_gadget_assembles() {
        // CALL fun; fun pushes X and returns there instead of the return site.
        let src = "\
    CALL fun
    HALT
fun:
    PUSHI X
    RET
X:
    HALT
";
        let l = assemble(src, Width::W32, None).unwrap();
        let x = l.image.symbol("X").unwrap();
        let pushi = &l.instructions[2];
        assert_eq!(pushi.instr.opcode, Opcode::Pushi);
        assert_eq!(pushi.instr.word(0), x);
    }

    #[test]
    fn byte_directive_is_verbatim() {
        let l = assemble("HALT\n.byte 0xFF\n", Width::W32, None).unwrap();
        assert_eq!(l.image.bytes, vec![Opcode::Halt as u8, 0xff]);
        assert!(decode(Width::W32, &l.image.bytes, 1).is_err());
    }

    #[test]
    fn data_before_code_becomes_globals() {
        let src = "\
gx: .word 0
gy: .word 0
entry:
    MOVI r4, gx
    LOAD r0, [r4]
    HALT
";
        let l = assemble(src, Width::W32, None).unwrap();
        let gx = l.image.symbol("gx").unwrap();
        assert_eq!(gx, l.image.base);
        assert_eq!(l.image.entry, l.image.base + 8);
        let globals: Vec<_> = l.image.globals().map(|(n, _)| n.to_string()).collect();
        assert_eq!(globals, vec!["gx", "gy"]);
        // The MOVI immediate resolved to the data address.
        assert_eq!(l.instructions[0].instr.word(1), gx);
    }

    #[test]
    fn unresolved_label_errors() {
        let err = assemble("JMP nowhere\n", Width::W32, None).unwrap_err();
        assert!(matches!(err, AsmError::UnresolvedLabel { .. }));
    }

    #[test]
    fn imm_out_of_range_errors() {
        let err = assemble("MOVI r0, 0x1ff\n", Width::W8, None).unwrap_err();
        assert!(matches!(err, AsmError::ImmOutOfRange { .. }));
    }

    #[test]
    fn negative_immediates_wrap() {
        let l = assemble("MOVI r0, -1\nHALT\n", Width::W16, None).unwrap();
        assert_eq!(l.instructions[0].instr.word(1), 0xffff);
    }
}
