//! Byte-level encode/decode for instructions.

use super::{Instruction, Opcode, Operand, OperandKind, Register, Width};
use crate::Word;

/// Why a byte position does not decode. This is a value, not a fault:
/// every disassembler treats it as data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeFailure {
    /// Opcode byte is reserved or unassigned.
    BadOpcode(u8),
    /// Operand byte is not a valid register index.
    BadRegister(u8),
    /// Instruction would run past the end of the buffer.
    Truncated,
}

/// Decode the instruction starting at `bytes[offset]`. Total: never panics,
/// never loops; returns `Err` for reserved opcodes and truncated operands.
pub fn decode(width: Width, bytes: &[u8], offset: usize) -> Result<Instruction, DecodeFailure> {
    let op_byte = *bytes.get(offset).ok_or(DecodeFailure::Truncated)?;
    let opcode = Opcode::from_byte(op_byte).ok_or(DecodeFailure::BadOpcode(op_byte))?;
    let mut pos = offset + 1;
    let mut operands = Vec::with_capacity(opcode.operand_kinds().len());
    for kind in opcode.operand_kinds() {
        match kind {
            OperandKind::Reg => {
                let b = *bytes.get(pos).ok_or(DecodeFailure::Truncated)?;
                let r = Register::new(b).ok_or(DecodeFailure::BadRegister(b))?;
                operands.push(Operand::Reg(r));
                pos += 1;
            }
            OperandKind::Imm | OperandKind::Addr => {
                let n = width.bytes() as usize;
                let end = pos + n;
                if end > bytes.len() {
                    return Err(DecodeFailure::Truncated);
                }
                let mut v: Word = 0;
                for (i, b) in bytes[pos..end].iter().enumerate() {
                    v |= (*b as Word) << (8 * i);
                }
                operands.push(match kind {
                    OperandKind::Imm => Operand::Imm(v),
                    _ => Operand::Addr(v),
                });
                pos = end;
            }
        }
    }
    Ok(Instruction::new(width, opcode, operands))
}

/// Encode an instruction to bytes. Inverse of [`decode`].
pub fn encode(width: Width, instr: &Instruction) -> Vec<u8> {
    let mut out = Vec::with_capacity(instr.byte_length as usize);
    out.push(instr.opcode as u8);
    for op in &instr.operands {
        match op {
            Operand::Reg(r) => out.push(r.index() as u8),
            Operand::Imm(w) | Operand::Addr(w) => {
                let w = width.truncate(*w);
                for i in 0..width.bytes() {
                    out.push(((w >> (8 * i)) & 0xff) as u8);
                }
            }
        }
    }
    debug_assert_eq!(out.len() as u64, instr.byte_length);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reserved_band_never_decodes() {
        for b in 0xf0..=0xffu8 {
            assert!(Opcode::from_byte(b).is_none(), "{b:#x} must be reserved");
            assert_eq!(
                decode(Width::W32, &[b, 0, 0, 0, 0, 0], 0),
                Err(DecodeFailure::BadOpcode(b))
            );
        }
    }

    #[test]
    fn halt_decodes_at_entry() {
        let instr = decode(Width::W32, &[Opcode::Halt as u8], 0).unwrap();
        assert_eq!(instr.opcode, Opcode::Halt);
        assert_eq!(instr.byte_length, 1);
    }

    #[test]
    fn truncated_operand_fails() {
        // MOVI needs 1 + 1 + 4 bytes at W=32.
        assert_eq!(
            decode(Width::W32, &[Opcode::Movi as u8, 0, 1, 2], 0),
            Err(DecodeFailure::Truncated)
        );
    }

    fn arb_instruction(width: Width) -> impl Strategy<Value = Instruction> {
        (0..Opcode::ALL.len(), proptest::collection::vec(any::<u64>(), 3)).prop_map(
            move |(op_i, raw)| {
                let opcode = Opcode::ALL[op_i];
                let operands = opcode
                    .operand_kinds()
                    .iter()
                    .enumerate()
                    .map(|(i, k)| match k {
                        OperandKind::Reg => Operand::Reg(Register::new((raw[i] % 9) as u8).unwrap()),
                        OperandKind::Imm => Operand::Imm(width.truncate(raw[i])),
                        OperandKind::Addr => Operand::Addr(width.truncate(raw[i])),
                    })
                    .collect();
                Instruction::new(width, opcode, operands)
            },
        )
    }

    proptest! {
        #[test]
        fn encode_decode_identity_w32(instr in arb_instruction(Width::W32)) {
            let bytes = encode(Width::W32, &instr);
            let back = decode(Width::W32, &bytes, 0).unwrap();
            prop_assert_eq!(back, instr);
        }

        #[test]
        fn encode_decode_identity_w8(instr in arb_instruction(Width::W8)) {
            let bytes = encode(Width::W8, &instr);
            let back = decode(Width::W8, &bytes, 0).unwrap();
            prop_assert_eq!(back, instr);
        }

        // Whenever decode succeeds on arbitrary bytes, re-encoding reproduces
        // exactly the consumed bytes.
        #[test]
        fn decode_reencode_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 0..24)) {
            if let Ok(instr) = decode(Width::W32, &bytes, 0) {
                let re = encode(Width::W32, &instr);
                prop_assert_eq!(&bytes[..re.len()], &re[..]);
            }
        }
    }

    #[test]
    fn overlapping_decodes_exist() {
        // A MOVI immediate can itself contain a valid instruction stream:
        // decode(a) and decode(a+2) both succeed with different instructions.
        let w = Width::W32;
        let imm = u64::from_le_bytes([
            Opcode::Halt as u8,
            Opcode::Ret as u8,
            Opcode::Ret as u8,
            Opcode::Halt as u8,
            0,
            0,
            0,
            0,
        ]);
        let instr = Instruction::new(w, Opcode::Movi, vec![
            Operand::Reg(Register::new(0).unwrap()),
            Operand::Imm(w.truncate(imm)),
        ]);
        let bytes = encode(w, &instr);
        let a = decode(w, &bytes, 0).unwrap();
        let b = decode(w, &bytes, 2).unwrap();
        assert_eq!(a.opcode, Opcode::Movi);
        assert_eq!(b.opcode, Opcode::Halt);
        assert_ne!(a, b);
    }
}
