//! The toy instruction set: registers, opcodes, byte encoding, program
//! images and the textual assembler.
//!
//! Encoding is deliberately variable-length (1 opcode byte, 1 byte per
//! register operand, `W/8` little-endian bytes per immediate) so that
//! disassembly ambiguity — junk bytes, data-in-code, overlapping decodes —
//! actually exists. Opcode bytes `0xF0..=0xFF` are reserved and never
//! decode, which gives the obfuscator honest junk.

mod asm;
mod encoding;
mod image;

pub use asm::{assemble, AsmError, Listing, ListingEntry};
pub use encoding::{decode, DecodeFailure};
pub use image::{ImageError, ProgramImage};

use crate::Word;
use std::fmt;

/// Word width of the machine. Everything — registers, immediates,
/// addresses — is this wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Width {
    W8,
    W16,
    W32,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::W8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
        }
    }

    /// Bytes per word (`W/8`).
    pub fn bytes(self) -> u64 {
        (self.bits() / 8) as u64
    }

    pub fn mask(self) -> Word {
        if self.bits() == 64 {
            !0
        } else {
            (1u64 << self.bits()) - 1
        }
    }

    pub fn truncate(self, v: Word) -> Word {
        v & self.mask()
    }

    pub fn from_bits(bits: u32) -> Option<Width> {
        match bits {
            8 => Some(Width::W8),
            16 => Some(Width::W16),
            32 => Some(Width::W32),
            _ => None,
        }
    }

    /// Default image base address for this width.
    pub fn default_base(self) -> Word {
        match self {
            Width::W8 => 0x00,
            Width::W16 => 0x0100,
            Width::W32 => 0x1000,
        }
    }

    /// Default top-of-stack. The stack grows down from here.
    pub fn default_stack_top(self) -> Word {
        match self {
            Width::W8 => 0xf8,
            Width::W16 => 0xff00,
            Width::W32 => 0x0100_0000,
        }
    }

    /// Default stack region size in bytes.
    pub fn default_stack_size(self) -> Word {
        match self {
            Width::W8 => 0x38,
            Width::W16 => 0x1000,
            Width::W32 => 0x1_0000,
        }
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Register file index. `r0..r7` are general purpose, index 8 is `sp`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Register(u8);

impl Register {
    pub const SP: Register = Register(8);
    pub const COUNT: usize = 9;

    pub fn new(index: u8) -> Option<Register> {
        (index <= 8).then_some(Register(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_sp(self) -> bool {
        self.0 == 8
    }

    /// Stable symbol used in formulas and the assembler ("r0".."r7", "sp").
    pub fn name(self) -> &'static str {
        const NAMES: [&str; 9] = ["r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7", "sp"];
        NAMES[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Register> {
        (0..=8).map(Register)
    }
}

impl fmt::Debug for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! opcodes {
    ($( $name:ident = $byte:expr, $mnemonic:expr ;)*) => {
        /// Instruction mnemonics. The numeric value is the opcode byte.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum Opcode {
            $( $name = $byte, )*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[ $( Opcode::$name, )* ];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $( Opcode::$name => $mnemonic, )*
                }
            }

            pub fn from_byte(b: u8) -> Option<Opcode> {
                match b {
                    $( $byte => Some(Opcode::$name), )*
                    _ => None,
                }
            }

            pub fn from_mnemonic(s: &str) -> Option<Opcode> {
                $( if s.eq_ignore_ascii_case($mnemonic) { return Some(Opcode::$name); } )*
                None
            }
        }
    };
}

opcodes! {
    Movi = 0x01, "MOVI";
    Mov  = 0x02, "MOV";
    Add  = 0x03, "ADD";
    Sub  = 0x04, "SUB";
    Mul  = 0x05, "MUL";
    Udiv = 0x06, "UDIV";
    And  = 0x07, "AND";
    Or   = 0x08, "OR";
    Xor  = 0x09, "XOR";
    Shl  = 0x0a, "SHL";
    Shr  = 0x0b, "SHR";
    Addi = 0x0c, "ADDI";
    Subi = 0x0d, "SUBI";
    Muli = 0x0e, "MULI";
    Andi = 0x0f, "ANDI";
    Ori  = 0x10, "ORI";
    Xori = 0x11, "XORI";
    Shli = 0x12, "SHLI";
    Shri = 0x13, "SHRI";
    Eq   = 0x14, "EQ";
    Ne   = 0x15, "NE";
    Ult  = 0x16, "ULT";
    Uge  = 0x17, "UGE";
    Slt  = 0x18, "SLT";
    Sge  = 0x19, "SGE";
    Load = 0x1a, "LOAD";
    Store= 0x1b, "STORE";
    Push = 0x1c, "PUSH";
    Pushi= 0x1d, "PUSHI";
    Pop  = 0x1e, "POP";
    Jmp  = 0x1f, "JMP";
    Jmpr = 0x20, "JMPR";
    Jz   = 0x21, "JZ";
    Jnz  = 0x22, "JNZ";
    Call = 0x23, "CALL";
    Callr= 0x24, "CALLR";
    Ret  = 0x25, "RET";
    Halt = 0x26, "HALT";
}

/// Reserved opcode band: these bytes never decode.
pub const RESERVED_OPCODE_LO: u8 = 0xf0;

/// Shape of an operand slot in the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandKind {
    /// One byte, must be a valid register index.
    Reg,
    /// `W/8` little-endian bytes, a data immediate.
    Imm,
    /// `W/8` little-endian bytes, a code address.
    Addr,
}

impl Opcode {
    /// Operand layout, in encoding order.
    pub fn operand_kinds(self) -> &'static [OperandKind] {
        use OperandKind::*;
        match self {
            Opcode::Movi => &[Reg, Imm],
            Opcode::Mov => &[Reg, Reg],
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Udiv
            | Opcode::And
            | Opcode::Or
            | Opcode::Xor
            | Opcode::Shl
            | Opcode::Shr => &[Reg, Reg],
            Opcode::Addi
            | Opcode::Subi
            | Opcode::Muli
            | Opcode::Andi
            | Opcode::Ori
            | Opcode::Xori
            | Opcode::Shli
            | Opcode::Shri => &[Reg, Imm],
            Opcode::Eq | Opcode::Ne | Opcode::Ult | Opcode::Uge | Opcode::Slt | Opcode::Sge => {
                &[Reg, Reg, Reg]
            }
            // LOAD rd, [rs+off]
            Opcode::Load => &[Reg, Reg, Imm],
            // STORE [rs+off], rs2
            Opcode::Store => &[Reg, Imm, Reg],
            Opcode::Push => &[Reg],
            Opcode::Pushi => &[Imm],
            Opcode::Pop => &[Reg],
            Opcode::Jmp => &[Addr],
            Opcode::Jmpr => &[Reg],
            Opcode::Jz | Opcode::Jnz => &[Reg, Addr],
            Opcode::Call => &[Addr],
            Opcode::Callr => &[Reg],
            Opcode::Ret | Opcode::Halt => &[],
        }
    }

    pub fn is_conditional_jump(self) -> bool {
        matches!(self, Opcode::Jz | Opcode::Jnz)
    }

    /// Instructions after which straight-line execution does not continue.
    pub fn ends_block(self) -> bool {
        matches!(
            self,
            Opcode::Jmp | Opcode::Jmpr | Opcode::Ret | Opcode::Halt
        )
    }

    pub fn encoded_len(self, width: Width) -> u64 {
        1 + self
            .operand_kinds()
            .iter()
            .map(|k| match k {
                OperandKind::Reg => 1,
                OperandKind::Imm | OperandKind::Addr => width.bytes(),
            })
            .sum::<u64>()
    }
}

/// A decoded operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Register),
    Imm(Word),
    Addr(Word),
}

impl Operand {
    pub fn as_reg(&self) -> Register {
        match self {
            Operand::Reg(r) => *r,
            _ => panic!("operand is not a register"),
        }
    }

    pub fn as_word(&self) -> Word {
        match self {
            Operand::Imm(w) | Operand::Addr(w) => *w,
            Operand::Reg(_) => panic!("operand is not a word"),
        }
    }
}

/// One decoded instruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub operands: Vec<Operand>,
    pub byte_length: u64,
}

impl Instruction {
    pub fn new(width: Width, opcode: Opcode, operands: Vec<Operand>) -> Instruction {
        debug_assert_eq!(operands.len(), opcode.operand_kinds().len());
        Instruction {
            opcode,
            operands,
            byte_length: opcode.encoded_len(width),
        }
    }

    pub fn reg(&self, i: usize) -> Register {
        self.operands[i].as_reg()
    }

    pub fn word(&self, i: usize) -> Word {
        self.operands[i].as_word()
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.opcode.mnemonic())?;
        match self.opcode {
            Opcode::Load => {
                write!(
                    f,
                    " {}, [{}+{:#x}]",
                    self.reg(0),
                    self.reg(1),
                    self.word(2)
                )?;
            }
            Opcode::Store => {
                write!(
                    f,
                    " [{}+{:#x}], {}",
                    self.reg(0),
                    self.word(1),
                    self.reg(2)
                )?;
            }
            _ => {
                for (i, op) in self.operands.iter().enumerate() {
                    let sep = if i == 0 { " " } else { ", " };
                    match op {
                        Operand::Reg(r) => write!(f, "{sep}{r}")?,
                        Operand::Imm(w) | Operand::Addr(w) => write!(f, "{sep}{w:#x}")?,
                    }
                }
            }
        }
        Ok(())
    }
}
