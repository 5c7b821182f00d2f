//! Program images and their on-disk format.
//!
//! File layout: a 16-byte header — magic `"BBDL"`, width in bits (u8), one
//! reserved byte, byte length (u16 LE), base address (u32 LE), entry
//! address (u32 LE) — followed by the raw bytes. Data is laid out before
//! code and the entry point is the start of the code region, so
//! `code_region = [entry, base+len)` is derivable from the header alone.
//! Symbols are not part of the image; [`ProgramImage::write_sym_file`]
//! emits an optional text sidecar.

use super::Width;
use crate::Word;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use thiserror::Error;

pub const IMAGE_MAGIC: &[u8; 4] = b"BBDL";

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic (not a BBDL image)")]
    BadMagic,
    #[error("unsupported width {0}")]
    BadWidth(u8),
    #[error("image truncated: header says {expected} bytes, file has {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("image too large for the format ({0} bytes, max 65535)")]
    TooLarge(usize),
    #[error("entry {entry:#x} outside image [{base:#x}, {end:#x})")]
    EntryOutOfRange { entry: Word, base: Word, end: Word },
    #[error("malformed symbol line: {0:?}")]
    BadSymLine(String),
}

/// A loaded program: byte-addressable code/data plus a symbol table.
/// Immutable after construction; the tracer works on its own copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    pub width: Width,
    pub base: Word,
    pub bytes: Vec<u8>,
    pub entry: Word,
    /// All labels, data and code alike.
    pub symbols: BTreeMap<String, Word>,
}

impl ProgramImage {
    pub fn new(
        width: Width,
        base: Word,
        bytes: Vec<u8>,
        entry: Word,
        symbols: BTreeMap<String, Word>,
    ) -> Result<ProgramImage, ImageError> {
        let end = base + bytes.len() as Word;
        if entry < base || entry >= end {
            return Err(ImageError::EntryOutOfRange { entry, base, end });
        }
        Ok(ProgramImage {
            width,
            base,
            bytes,
            entry,
            symbols,
        })
    }

    pub fn end(&self) -> Word {
        self.base + self.bytes.len() as Word
    }

    /// Address interval occupied by the image.
    pub fn image_region(&self) -> Range<Word> {
        self.base..self.end()
    }

    /// Code region: everything from the entry point to the end of the image.
    /// Data (globals) lives below the entry point by construction.
    pub fn code_region(&self) -> Range<Word> {
        self.entry..self.end()
    }

    pub fn contains(&self, addr: Word) -> bool {
        addr >= self.base && addr < self.end()
    }

    pub fn byte(&self, addr: Word) -> Option<u8> {
        self.contains(addr)
            .then(|| self.bytes[(addr - self.base) as usize])
    }

    /// Named addresses in the data region (the obfuscation globals `gx`,
    /// `gy` live here).
    pub fn globals(&self) -> impl Iterator<Item = (&str, Word)> {
        self.symbols
            .iter()
            .filter(|(_, &a)| a < self.entry)
            .map(|(n, &a)| (n.as_str(), a))
    }

    pub fn symbol(&self, name: &str) -> Option<Word> {
        self.symbols.get(name).copied()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ImageError> {
        if self.bytes.len() > u16::MAX as usize {
            return Err(ImageError::TooLarge(self.bytes.len()));
        }
        let mut out = Vec::with_capacity(16 + self.bytes.len());
        out.extend_from_slice(IMAGE_MAGIC);
        out.push(self.width.bits() as u8);
        out.push(0); // reserved
        out.extend_from_slice(&(self.bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.base as u32).to_le_bytes());
        out.extend_from_slice(&(self.entry as u32).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        Ok(out)
    }

    pub fn from_bytes(data: &[u8]) -> Result<ProgramImage, ImageError> {
        if data.len() < 16 || &data[0..4] != IMAGE_MAGIC {
            return Err(ImageError::BadMagic);
        }
        let width = Width::from_bits(data[4] as u32).ok_or(ImageError::BadWidth(data[4]))?;
        let len = u16::from_le_bytes([data[6], data[7]]) as usize;
        let base = u32::from_le_bytes(data[8..12].try_into().unwrap()) as Word;
        let entry = u32::from_le_bytes(data[12..16].try_into().unwrap()) as Word;
        if data.len() < 16 + len {
            return Err(ImageError::Truncated {
                expected: len,
                actual: data.len() - 16,
            });
        }
        ProgramImage::new(width, base, data[16..16 + len].to_vec(), entry, BTreeMap::new())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), ImageError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    /// Load an image, picking up `<path>.sym` when it exists.
    pub fn read_file(path: &Path) -> Result<ProgramImage, ImageError> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        let mut image = ProgramImage::from_bytes(&data)?;
        let sym = path.with_extension(format!(
            "{}.sym",
            path.extension().and_then(|e| e.to_str()).unwrap_or("img")
        ));
        let sym = if sym.exists() {
            sym
        } else {
            path.with_extension("sym")
        };
        if sym.exists() {
            image.symbols = read_sym_file(&sym)?;
        }
        Ok(image)
    }

    /// Text sidecar with one `name hexaddr` pair per line.
    pub fn write_sym_file(&self, path: &Path) -> Result<(), ImageError> {
        let mut out = String::new();
        for (name, addr) in &self.symbols {
            out.push_str(&format!("{name} {addr:#x}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn read_sym_file(path: &Path) -> Result<BTreeMap<String, Word>, ImageError> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, addr) = match (parts.next(), parts.next()) {
            (Some(n), Some(a)) => (n, a),
            _ => return Err(ImageError::BadSymLine(line.into())),
        };
        let addr = parse_word(addr).ok_or_else(|| ImageError::BadSymLine(line.into()))?;
        map.insert(name.to_string(), addr);
    }
    Ok(map)
}

pub(crate) fn parse_word(s: &str) -> Option<Word> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Word::from_str_radix(hex, 16).ok()
    } else if let Some(neg) = s.strip_prefix('-') {
        neg.parse::<Word>().ok().map(|v| v.wrapping_neg())
    } else {
        s.parse::<Word>().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip() {
        let img = ProgramImage::new(
            Width::W32,
            0x1000,
            vec![0x26, 0x25, 0xf0],
            0x1000,
            BTreeMap::new(),
        )
        .unwrap();
        let bytes = img.to_bytes().unwrap();
        assert_eq!(bytes.len(), 16 + 3);
        assert_eq!(&bytes[0..4], IMAGE_MAGIC);
        let back = ProgramImage::from_bytes(&bytes).unwrap();
        assert_eq!(back.width, img.width);
        assert_eq!(back.base, img.base);
        assert_eq!(back.entry, img.entry);
        assert_eq!(back.bytes, img.bytes);
    }

    #[test]
    fn entry_must_be_inside() {
        assert!(ProgramImage::new(Width::W32, 0x1000, vec![0x26], 0x2000, BTreeMap::new()).is_err());
    }
}
