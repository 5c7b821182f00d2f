//! Ground-truth obfuscator: opaque-predicate injection over the globals
//! `gx`/`gy`, call-stack tampering of direct jumps, junk-block emission
//! and corpus generation with truth sidecars.
//!
//! All transformations are source-to-source; records come back with
//! resolved addresses by assembling the rewritten program. The scratch
//! registers r5..r7 belong to the obfuscator: base programs must keep
//! their state in r0..r4 and memory at block boundaries.

mod corpus;
mod families;

pub use corpus::{
    build_corpus, check_sample, corpus_from_dir, write_corpus, BaseProgram, CorpusConfig,
    CorpusError, CorpusSample, InputSpec, SampleKind,
};
pub use families::{family_comment, OP_FAMILIES};

use crate::isa::{assemble, AsmError, Listing, Width};
use crate::Word;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObfuscateError {
    #[error("unknown opaque-predicate family {0} (valid: 1..=8)")]
    UnknownFamily(u8),
    #[error("not enough insertion points: wanted {wanted}, have {have}")]
    NotEnoughSites { wanted: usize, have: usize },
    #[error("no rewritable direct jumps")]
    NoRewritableSite,
    #[error("rewritten program no longer assembles: {0}")]
    Assemble(#[from] AsmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TamperScheme {
    PushRet,
    PushCallRetRet,
}

impl TamperScheme {
    pub fn name(self) -> &'static str {
        match self {
            TamperScheme::PushRet => "PUSH_RET",
            TamperScheme::PushCallRetRet => "PUSH_CALL_RET_RET",
        }
    }

    pub fn from_name(s: &str) -> Option<TamperScheme> {
        match s {
            "PUSH_RET" => Some(TamperScheme::PushRet),
            "PUSH_CALL_RET_RET" => Some(TamperScheme::PushCallRetRet),
            _ => None,
        }
    }
}

impl fmt::Display for TamperScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One ground-truth entry of the sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObfuscationRecord {
    Op {
        family: u8,
        /// Address of the injected conditional jump.
        site: Word,
        /// Dead junk interval `[lo, hi)`; never executed by any input.
        dead: (Word, Word),
    },
    Tamper {
        scheme: TamperScheme,
        ret_addr: Word,
        /// The single intended target.
        target: Word,
        /// Dead return-site interval `[lo, hi)`, when the scheme makes one.
        dead: Option<(Word, Word)>,
    },
}

impl ObfuscationRecord {
    pub fn dead_interval(&self) -> Option<(Word, Word)> {
        match self {
            ObfuscationRecord::Op { dead, .. } => Some(*dead),
            ObfuscationRecord::Tamper { dead, .. } => *dead,
        }
    }
}

/// Line-delimited truth sidecar:
/// `OP <family> <site> <dead_lo> <dead_hi>` and
/// `TAMPER <scheme> <ret_addr> <target> <dead_lo> <dead_hi>` (0 0 = none).
pub fn format_truth(records: &[ObfuscationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        match r {
            ObfuscationRecord::Op { family, site, dead } => {
                out.push_str(&format!(
                    "OP {family} {site:#x} {:#x} {:#x}\n",
                    dead.0, dead.1
                ));
            }
            ObfuscationRecord::Tamper {
                scheme,
                ret_addr,
                target,
                dead,
            } => {
                let (lo, hi) = dead.unwrap_or((0, 0));
                out.push_str(&format!(
                    "TAMPER {scheme} {ret_addr:#x} {target:#x} {lo:#x} {hi:#x}\n"
                ));
            }
        }
    }
    out
}

pub fn parse_truth(text: &str) -> Option<Vec<ObfuscationRecord>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut p = line.split_whitespace();
        let num = |s: &str| -> Option<Word> {
            s.strip_prefix("0x")
                .map(|h| Word::from_str_radix(h, 16).ok())
                .unwrap_or_else(|| s.parse().ok())
        };
        match p.next()? {
            "OP" => {
                let family = p.next()?.parse().ok()?;
                let site = num(p.next()?)?;
                let lo = num(p.next()?)?;
                let hi = num(p.next()?)?;
                out.push(ObfuscationRecord::Op {
                    family,
                    site,
                    dead: (lo, hi),
                });
            }
            "TAMPER" => {
                let scheme = TamperScheme::from_name(p.next()?)?;
                let ret_addr = num(p.next()?)?;
                let target = num(p.next()?)?;
                let lo = num(p.next()?)?;
                let hi = num(p.next()?)?;
                out.push(ObfuscationRecord::Tamper {
                    scheme,
                    ret_addr,
                    target,
                    dead: (lo != 0 || hi != 0).then_some((lo, hi)),
                });
            }
            _ => return None,
        }
    }
    Some(out)
}

/// A parsed source line, kept verbatim for re-emission.
#[derive(Debug, Clone)]
struct SrcLine {
    text: String,
    /// Mnemonic in upper case when this line carries an instruction.
    mnemonic: Option<String>,
    /// Jump-target label of a `JMP label` line.
    jmp_target: Option<String>,
    has_label: bool,
    is_directive: bool,
}

fn parse_lines(source: &str) -> Vec<SrcLine> {
    source
        .lines()
        .map(|raw| {
            let mut body = raw;
            if let Some(p) = body.find(';') {
                body = &body[..p];
            }
            let mut body = body.trim();
            let mut has_label = false;
            while let Some(colon) = body.find(':') {
                let head = &body[..colon];
                if !head.is_empty()
                    && head
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    has_label = true;
                    body = body[colon + 1..].trim();
                } else {
                    break;
                }
            }
            let is_directive = body.starts_with('.');
            let mnemonic = (!body.is_empty() && !is_directive)
                .then(|| {
                    body.split_whitespace()
                        .next()
                        .unwrap_or("")
                        .to_ascii_uppercase()
                })
                .filter(|m| !m.is_empty());
            let jmp_target = if mnemonic.as_deref() == Some("JMP") {
                let rest = body.split_whitespace().nth(1).unwrap_or("");
                let t = rest.trim();
                (!t.is_empty()
                    && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && !t.chars().next().unwrap().is_ascii_digit())
                .then(|| t.to_string())
            } else {
                None
            };
            SrcLine {
                text: raw.to_string(),
                mnemonic,
                jmp_target,
                has_label,
                is_directive,
            }
        })
        .collect()
}

/// Indices of lines that start a basic block in the code section.
fn block_starts(lines: &[SrcLine]) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut in_code = false;
    let mut prev_ends_block = false;
    for (i, l) in lines.iter().enumerate() {
        let is_instr = l.mnemonic.is_some();
        if is_instr && !in_code {
            in_code = true;
            starts.push(i);
            prev_ends_block = ends_block(l);
            continue;
        }
        if !in_code || !is_instr {
            // Labels on their own line start blocks at the next instruction.
            if in_code && l.has_label && l.mnemonic.is_none() && !l.is_directive {
                prev_ends_block = true;
            }
            continue;
        }
        if l.has_label || prev_ends_block {
            starts.push(i);
        }
        prev_ends_block = ends_block(l);
    }
    starts
}

fn ends_block(l: &SrcLine) -> bool {
    matches!(
        l.mnemonic.as_deref(),
        Some("JMP") | Some("JMPR") | Some("RET") | Some("HALT") | Some("JZ") | Some("JNZ")
    )
}

fn junk_block(rng: &mut ChaCha8Rng, label: &str, back_to: &str) -> Vec<String> {
    let mut out = vec![format!("{label}:")];
    let n = rng.gen_range(4..=7);
    for _ in 0..n {
        let rd = rng.gen_range(0..8);
        let rs = rng.gen_range(0..8);
        let imm: u32 = rng.gen_range(0..256);
        let line = match rng.gen_range(0..6) {
            0 => format!("    MOVI r{rd}, {imm}"),
            1 => format!("    ADDI r{rd}, {imm}"),
            2 => format!("    XORI r{rd}, {imm}"),
            3 => format!("    MUL r{rd}, r{rs}"),
            4 => format!("    SUB r{rd}, r{rs}"),
            _ => format!("    EQ r{rd}, r{rs}, r{}", rng.gen_range(0..8)),
        };
        out.push(line);
    }
    out.push(format!("    JMP {back_to}"));
    if rng.gen_bool(0.6) {
        let b: u8 = rng.gen_range(0xf0..=0xff);
        out.push(format!("    .byte {:#x}", b));
    }
    out.push(format!("{label}_end:"));
    out
}

/// Inject `count` opaque predicates of one family at random executed
/// basic-block boundaries. `allowed_lines`, when given, restricts the
/// candidate blocks (the corpus builder passes the dynamically executed
/// set so the ground truth stays checkable).
pub fn inject_opaque(
    source: &str,
    family: u8,
    count: usize,
    seed: u64,
    width: Width,
    allowed_lines: Option<&[usize]>,
) -> Result<(String, Vec<ObfuscationRecord>), ObfuscateError> {
    if !(1..=8).contains(&family) {
        return Err(ObfuscateError::UnknownFamily(family));
    }
    let lines = parse_lines(source);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0bf0_5ca7e ^ (family as u64) << 56);
    let mut candidates = block_starts(&lines);
    if let Some(allowed) = allowed_lines {
        candidates.retain(|i| allowed.contains(i));
    }
    if candidates.len() < count {
        return Err(ObfuscateError::NotEnoughSites {
            wanted: count,
            have: candidates.len(),
        });
    }
    let mut chosen: Vec<usize> = candidates
        .choose_multiple(&mut rng, count)
        .copied()
        .collect();
    chosen.sort_unstable();

    let needs_scratch = family == 7;
    let mut out: Vec<String> = Vec::new();
    let mut tails: Vec<String> = Vec::new();
    let mut site_labels: Vec<(String, String)> = Vec::new(); // (site, junk)

    if needs_scratch && !source.contains("__op_scratch") {
        out.push("__op_scratch: .word 0".into());
    }
    for (i, line) in lines.iter().enumerate() {
        if let Ok(pos) = chosen.binary_search(&i) {
            let id = pos;
            let site = format!("__op{id}_site");
            let junk = format!("__op{id}_junk");
            // The line may carry a label that must stay on the original
            // instruction... it must point at the injected predicate
            // instead, so the predicate runs whenever the block does.
            let (label_part, rest) = split_labels(&line.text);
            if !label_part.is_empty() {
                out.push(label_part);
            }
            for ins in families::emit_family(family, &site, &junk, width) {
                out.push(ins);
            }
            out.push(rest);
            tails.extend(junk_block(&mut rng, &junk, &junk));
            site_labels.push((site, junk));
        } else {
            out.push(line.text.clone());
        }
    }
    out.extend(tails);
    let rewritten = out.join("\n") + "\n";

    // Resolve addresses for the truth records.
    let listing = assemble(&rewritten, width, None)?;
    let mut records = Vec::new();
    for (site, junk) in site_labels {
        let site_addr = listing.image.symbol(&site).expect("site label emitted");
        let lo = listing.image.symbol(&junk).expect("junk label emitted");
        let hi = listing
            .image
            .symbol(&format!("{junk}_end"))
            .expect("junk end label emitted");
        records.push(ObfuscationRecord::Op {
            family,
            site: site_addr,
            dead: (lo, hi),
        });
    }
    Ok((rewritten, records))
}

/// `label: label2: body` -> ("label: label2:", "body"-with-indent).
fn split_labels(text: &str) -> (String, String) {
    let mut body = text;
    let mut labels = String::new();
    if let Some(p) = body.find(';') {
        body = &body[..p];
    }
    loop {
        let trimmed = body.trim_start();
        match trimmed.find(':') {
            Some(colon)
                if !trimmed[..colon].is_empty()
                    && trimmed[..colon]
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_') =>
            {
                labels.push_str(&trimmed[..=colon]);
                labels.push(' ');
                body = &trimmed[colon + 1..];
            }
            _ => break,
        }
    }
    (labels.trim().to_string(), format!("    {}", body.trim()))
}

/// Replace executed `JMP label` transfers with the tampering scheme.
pub fn inject_tampering(
    source: &str,
    scheme: TamperScheme,
    seed: u64,
    width: Width,
    allowed_lines: Option<&[usize]>,
) -> Result<(String, Vec<ObfuscationRecord>), ObfuscateError> {
    let lines = parse_lines(source);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a3b_e500);
    let sites: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(i, l)| {
            l.jmp_target.is_some()
                && allowed_lines.map(|a| a.contains(i)).unwrap_or(true)
        })
        .map(|(i, _)| i)
        .collect();
    if sites.is_empty() {
        return Err(ObfuscateError::NoRewritableSite);
    }

    let mut out: Vec<String> = Vec::new();
    let mut tails: Vec<String> = Vec::new();
    let mut ret_labels: Vec<(TamperScheme, String, String, Option<String>)> = Vec::new();
    // (scheme, ret label, target label-or-symbol, dead block label)

    for (i, line) in lines.iter().enumerate() {
        if !sites.contains(&i) {
            out.push(line.text.clone());
            continue;
        }
        let target = line.jmp_target.clone().unwrap();
        let id = ret_labels.len();
        let (label_part, _) = split_labels(&line.text);
        if !label_part.is_empty() {
            out.push(label_part);
        }
        match scheme {
            TamperScheme::PushRet => {
                out.push(format!("    PUSHI {target}"));
                out.push(format!("__t{id}_ret:"));
                out.push("    RET".into());
                out.push(format!("__t{id}_dead:"));
                for j in junk_filler(&mut rng) {
                    out.push(j);
                }
                out.push(format!("__t{id}_dead_end:"));
                ret_labels.push((
                    scheme,
                    format!("__t{id}_ret"),
                    target.clone(),
                    Some(format!("__t{id}_dead")),
                ));
            }
            TamperScheme::PushCallRetRet => {
                out.push(format!("    PUSHI {target}"));
                out.push(format!("    CALL __t{id}_f"));
                out.push(format!("__t{id}_dead:"));
                for j in junk_filler(&mut rng) {
                    out.push(j);
                }
                out.push(format!("__t{id}_dead_end:"));
                tails.push(format!("__t{id}_f:"));
                tails.push(format!("    MOVI r7, __t{id}_stub"));
                tails.push("    STORE [sp], r7".into());
                tails.push(format!("__t{id}_fret:"));
                tails.push("    RET".into());
                tails.push(format!("__t{id}_stub:"));
                tails.push("    RET".into());
                ret_labels.push((
                    scheme,
                    format!("__t{id}_fret"),
                    format!("__t{id}_stub"),
                    Some(format!("__t{id}_dead")),
                ));
                ret_labels.push((scheme, format!("__t{id}_stub"), target.clone(), None));
            }
        }
    }
    out.extend(tails);
    let rewritten = out.join("\n") + "\n";

    let listing = assemble(&rewritten, width, None)?;
    let sym = |name: &str| listing.image.symbol(name).expect("tamper label emitted");
    let mut records = Vec::new();
    for (scheme, ret_label, target_label, dead_label) in ret_labels {
        records.push(ObfuscationRecord::Tamper {
            scheme,
            ret_addr: sym(&ret_label),
            target: sym(&target_label),
            dead: dead_label.map(|d| (sym(&d), sym(&format!("{d}_end")))),
        });
    }
    Ok((rewritten, records))
}

fn junk_filler(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::new();
    let n = rng.gen_range(2..=4);
    for _ in 0..n {
        let rd = rng.gen_range(0..8);
        let imm: u32 = rng.gen_range(0..128);
        out.push(match rng.gen_range(0..3) {
            0 => format!("    ADDI r{rd}, {imm}"),
            1 => format!("    XORI r{rd}, {imm}"),
            _ => format!("    MOVI r{rd}, {imm}"),
        });
    }
    if rng.gen_bool(0.5) {
        let b: u8 = rng.gen_range(0xf0..=0xff);
        out.push(format!("    .byte {:#x}", b));
    }
    out
}

/// Reassemble a rewritten source the way the injection helpers do.
pub fn assemble_rewritten(source: &str, width: Width) -> Result<Listing, ObfuscateError> {
    Ok(assemble(source, width, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
gx: .word 0
gy: .word 0
entry:
    CALL main
    HALT
main:
    MOVI r4, gx
    LOAD r0, [r4]
    MOVI r1, 0
loop:
    ADDI r1, 1
    SUBI r0, 1
    JNZ r0, loop
    JMP done
done:
    MOV r0, r1
    RET
";

    #[test]
    fn zero_count_is_identity() {
        let (src, recs) = inject_opaque(BASE, 2, 0, 7, Width::W32, None).unwrap();
        assert_eq!(src.trim_end(), BASE.trim_end());
        assert!(recs.is_empty());
    }

    #[test]
    fn injection_is_deterministic() {
        let a = inject_opaque(BASE, 2, 2, 42, Width::W32, None).unwrap();
        let b = inject_opaque(BASE, 2, 2, 42, Width::W32, None).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = inject_opaque(BASE, 2, 2, 43, Width::W32, None).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn family2_emits_fig2_shape() {
        let (src, recs) = inject_opaque(BASE, 2, 1, 1, Width::W32, None).unwrap();
        // Two squarings, a multiply by 7, a subtract, a compare, a
        // conditional jump into junk.
        assert!(src.contains("MULI r5, 7"));
        assert!(src.contains("SUBI r5, 1"));
        assert!(src.contains("EQ r5, r5, r6"));
        assert_eq!(recs.len(), 1);
        match &recs[0] {
            ObfuscationRecord::Op { family: 2, dead, .. } => assert!(dead.0 < dead.1),
            other => panic!("unexpected record {other:?}"),
        }
    }

    #[test]
    fn truth_roundtrip() {
        let recs = vec![
            ObfuscationRecord::Op {
                family: 5,
                site: 0x1040,
                dead: (0x10a0, 0x10c0),
            },
            ObfuscationRecord::Tamper {
                scheme: TamperScheme::PushCallRetRet,
                ret_addr: 0x1100,
                target: 0x1050,
                dead: None,
            },
        ];
        let text = format_truth(&recs);
        assert_eq!(parse_truth(&text).unwrap(), recs);
    }

    #[test]
    fn tampering_rewrites_jmp() {
        let (src, recs) = inject_tampering(BASE, TamperScheme::PushRet, 3, Width::W32, None).unwrap();
        assert!(!parse_lines(&src).iter().any(|l| l.jmp_target.as_deref() == Some("done")));
        assert!(src.contains("PUSHI done"));
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn push_call_ret_ret_records_two_rets() {
        let (src, recs) =
            inject_tampering(BASE, TamperScheme::PushCallRetRet, 3, Width::W32, None).unwrap();
        assert!(src.contains("CALL __t0_f"));
        assert_eq!(recs.len(), 2);
        let dead_count = recs.iter().filter(|r| r.dead_interval().is_some()).count();
        assert_eq!(dead_count, 1);
    }
}
