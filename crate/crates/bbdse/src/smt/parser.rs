//! SMT-LIB2 front end for the QF_BV fragment this crate emits (and the
//! pieces of it z3 prints back in models).

use crate::formula::{BinOp, Term};
use crate::Word;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmtParseError {
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unexpected end of input")]
    Eof,
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("sort mismatch at {0}")]
    Sort(String),
    #[error("malformed literal {0:?}")]
    BadLiteral(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s) => Some(s),
            Sexp::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(l) => Some(l),
            Sexp::Atom(_) => None,
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                while let Some(&n) = chars.peek() {
                    chars.next();
                    if n == '\n' {
                        break;
                    }
                }
            }
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            '"' => {
                // String literal; kept opaque.
                cur.push('"');
                for n in chars.by_ref() {
                    cur.push(n);
                    if n == '"' {
                        break;
                    }
                }
                tokens.push(std::mem::take(&mut cur));
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SmtParseError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < tokens.len() {
        out.push(parse_one(&tokens, &mut pos)?);
    }
    Ok(out)
}

fn parse_one(tokens: &[String], pos: &mut usize) -> Result<Sexp, SmtParseError> {
    match tokens.get(*pos).map(String::as_str) {
        None => Err(SmtParseError::Eof),
        Some("(") => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    None => return Err(SmtParseError::Unbalanced),
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    _ => items.push(parse_one(tokens, pos)?),
                }
            }
        }
        Some(")") => Err(SmtParseError::Unbalanced),
        Some(a) => {
            *pos += 1;
            Ok(Sexp::Atom(a.to_string()))
        }
    }
}

/// A parsed script: declared bitvector constants and the asserted
/// width-1 terms. `check_sat`/`get_model` presence is recorded.
#[derive(Debug, Default)]
pub struct Script {
    pub decls: Vec<(String, u32)>,
    pub asserts: Vec<Term>,
    pub want_model: bool,
}

pub fn parse_script(text: &str) -> Result<Script, SmtParseError> {
    let sexps = parse_sexps(text)?;
    let mut script = Script::default();
    let mut widths: HashMap<String, u32> = HashMap::new();
    for sexp in &sexps {
        let items = match sexp.list() {
            Some(l) if !l.is_empty() => l,
            _ => continue,
        };
        match items[0].atom() {
            Some("set-logic") | Some("set-option") | Some("set-info") | Some("check-sat")
            | Some("exit") => {
                if items[0].atom() == Some("check-sat") {
                    // nothing to record; presence is implied
                }
            }
            Some("get-model") => script.want_model = true,
            Some("declare-const") | Some("declare-fun") => {
                let name = items
                    .get(1)
                    .and_then(Sexp::atom)
                    .ok_or_else(|| SmtParseError::Unsupported("declare".into()))?;
                let sort = items.last().ok_or(SmtParseError::Eof)?;
                let width = parse_sort(sort)?;
                if items[0].atom() == Some("declare-fun") {
                    let args = items.get(2).and_then(Sexp::list).ok_or_else(|| {
                        SmtParseError::Unsupported("declare-fun with arguments".into())
                    })?;
                    if !args.is_empty() {
                        return Err(SmtParseError::Unsupported(
                            "uninterpreted functions".into(),
                        ));
                    }
                }
                widths.insert(name.to_string(), width);
                script.decls.push((name.to_string(), width));
            }
            Some("assert") => {
                let body = items.get(1).ok_or(SmtParseError::Eof)?;
                let t = parse_term(body, &widths)?;
                if t.width() != 1 {
                    return Err(SmtParseError::Sort("assert of non-Bool".into()));
                }
                script.asserts.push(t);
            }
            Some(other) => {
                return Err(SmtParseError::Unsupported(other.to_string()));
            }
            None => return Err(SmtParseError::Unsupported("nested command".into())),
        }
    }
    Ok(script)
}

fn parse_sort(s: &Sexp) -> Result<u32, SmtParseError> {
    if s.atom() == Some("Bool") {
        return Ok(1);
    }
    if let Some(l) = s.list() {
        if l.len() == 3 && l[0].atom() == Some("_") && l[1].atom() == Some("BitVec") {
            if let Some(n) = l[2].atom().and_then(|a| a.parse::<u32>().ok()) {
                if n >= 1 && n <= 64 {
                    return Ok(n);
                }
            }
        }
    }
    Err(SmtParseError::Sort(format!("{s:?}")))
}

pub fn parse_bv_literal(a: &str) -> Option<(Word, u32)> {
    if let Some(hex) = a.strip_prefix("#x") {
        let width = hex.len() as u32 * 4;
        let v = Word::from_str_radix(hex, 16).ok()?;
        return Some((v, width));
    }
    if let Some(bin) = a.strip_prefix("#b") {
        let width = bin.len() as u32;
        let v = Word::from_str_radix(bin, 2).ok()?;
        return Some((v, width));
    }
    None
}

fn parse_term(s: &Sexp, widths: &HashMap<String, u32>) -> Result<Term, SmtParseError> {
    match s {
        Sexp::Atom(a) => {
            if a == "true" {
                return Ok(Term::constant(1, 1));
            }
            if a == "false" {
                return Ok(Term::constant(0, 1));
            }
            if let Some((v, w)) = parse_bv_literal(a) {
                return Ok(Term::constant(v, w));
            }
            match widths.get(a) {
                Some(&w) => Ok(Term::input(a.clone(), w)),
                None => Err(SmtParseError::UnknownSymbol(a.clone())),
            }
        }
        Sexp::List(items) => parse_app(items, widths),
    }
}

fn parse_app(items: &[Sexp], widths: &HashMap<String, u32>) -> Result<Term, SmtParseError> {
    if items.is_empty() {
        return Err(SmtParseError::Unsupported("()".into()));
    }
    // Indexed heads: (_ bvN W), ((_ extract h l) x), ((_ zero_extend n) x).
    if items[0].atom() == Some("_") {
        let name = items.get(1).and_then(Sexp::atom).unwrap_or_default();
        if let Some(num) = name.strip_prefix("bv") {
            let v: Word = num.parse().map_err(|_| SmtParseError::BadLiteral(name.into()))?;
            let w: u32 = items
                .get(2)
                .and_then(Sexp::atom)
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| SmtParseError::BadLiteral(name.into()))?;
            return Ok(Term::constant(v, w));
        }
        return Err(SmtParseError::Unsupported(format!("(_ {name} ..)")));
    }
    if let Some(head_list) = items[0].list() {
        // ((_ extract hi lo) arg) and friends.
        if head_list.first().and_then(Sexp::atom) == Some("_") {
            let name = head_list.get(1).and_then(Sexp::atom).unwrap_or_default();
            let n1 = head_list.get(2).and_then(Sexp::atom).and_then(|a| a.parse::<u32>().ok());
            let n2 = head_list.get(3).and_then(Sexp::atom).and_then(|a| a.parse::<u32>().ok());
            let arg = parse_term(items.get(1).ok_or(SmtParseError::Eof)?, widths)?;
            return match (name, n1, n2) {
                ("extract", Some(hi), Some(lo)) => Ok(arg.extract(hi, lo)),
                ("zero_extend", Some(n), _) => {
                    let to = arg.width() + n;
                    Ok(arg.zext(to))
                }
                ("sign_extend", Some(n), _) => {
                    // sext(x, +n) = concat(replicate sign, x); build via ite.
                    let w = arg.width();
                    let sign = arg.clone().extract(w - 1, w - 1);
                    let ones = Term::constant(!0, n);
                    let zeros = Term::constant(0, n);
                    let hi = Term::ite(sign, ones, zeros);
                    Ok(Term::binary(BinOp::Concat, hi, arg))
                }
                _ => Err(SmtParseError::Unsupported(format!("(_ {name} ..)"))),
            };
        }
        return Err(SmtParseError::Unsupported("applied list head".into()));
    }

    let head = items[0].atom().unwrap();
    let args: Vec<Term> = items[1..]
        .iter()
        .map(|s| parse_term(s, widths))
        .collect::<Result<_, _>>()?;
    let bin = |op: BinOp, args: &[Term]| -> Result<Term, SmtParseError> {
        if args.len() < 2 {
            return Err(SmtParseError::Sort(head.to_string()));
        }
        // Left-associate chains like (bvadd a b c).
        let mut t = args[0].clone();
        for a in &args[1..] {
            t = Term::binary(op, t, a.clone());
        }
        Ok(t)
    };
    match head {
        "=" => {
            if args.len() != 2 {
                return Err(SmtParseError::Sort("=".into()));
            }
            Ok(args[0].clone().eq(args[1].clone()))
        }
        "distinct" => {
            if args.len() != 2 {
                return Err(SmtParseError::Sort("distinct".into()));
            }
            Ok(args[0].clone().ne(args[1].clone()))
        }
        "not" => {
            if args.len() != 1 || args[0].width() != 1 {
                return Err(SmtParseError::Sort("not".into()));
            }
            Ok(crate::formula::negate_term(&args[0]))
        }
        "and" => bin(BinOp::And, &args),
        "or" => bin(BinOp::Or, &args),
        "xor" => bin(BinOp::Xor, &args),
        "=>" => {
            if args.len() != 2 {
                return Err(SmtParseError::Sort("=>".into()));
            }
            let na = crate::formula::negate_term(&args[0]);
            Ok(Term::binary(BinOp::Or, na, args[1].clone()))
        }
        "ite" => {
            if args.len() != 3 {
                return Err(SmtParseError::Sort("ite".into()));
            }
            Ok(Term::ite(args[0].clone(), args[1].clone(), args[2].clone()))
        }
        "bvadd" => bin(BinOp::Add, &args),
        "bvsub" => bin(BinOp::Sub, &args),
        "bvmul" => bin(BinOp::Mul, &args),
        "bvudiv" => bin(BinOp::Udiv, &args),
        "bvand" => bin(BinOp::And, &args),
        "bvor" => bin(BinOp::Or, &args),
        "bvxor" => bin(BinOp::Xor, &args),
        "bvshl" => bin(BinOp::Shl, &args),
        "bvlshr" => bin(BinOp::Lshr, &args),
        "concat" => bin(BinOp::Concat, &args),
        "bvnot" => {
            if args.len() != 1 {
                return Err(SmtParseError::Sort("bvnot".into()));
            }
            let w = args[0].width();
            Ok(Term::binary(BinOp::Xor, args[0].clone(), Term::constant(!0, w)))
        }
        "bvneg" => {
            if args.len() != 1 {
                return Err(SmtParseError::Sort("bvneg".into()));
            }
            let w = args[0].width();
            Ok(Term::binary(BinOp::Sub, Term::constant(0, w), args[0].clone()))
        }
        "bvult" => bin2(BinOp::Ult, &args),
        "bvuge" => bin2(BinOp::Uge, &args),
        "bvslt" => bin2(BinOp::Slt, &args),
        "bvsge" => bin2(BinOp::Sge, &args),
        "bvule" => {
            check2(&args)?;
            Ok(Term::binary(BinOp::Uge, args[1].clone(), args[0].clone()))
        }
        "bvugt" => {
            check2(&args)?;
            Ok(Term::binary(BinOp::Ult, args[1].clone(), args[0].clone()))
        }
        "bvsle" => {
            check2(&args)?;
            Ok(Term::binary(BinOp::Sge, args[1].clone(), args[0].clone()))
        }
        "bvsgt" => {
            check2(&args)?;
            Ok(Term::binary(BinOp::Slt, args[1].clone(), args[0].clone()))
        }
        "bvcomp" => {
            check2(&args)?;
            Ok(args[0].clone().eq(args[1].clone()))
        }
        other => Err(SmtParseError::Unsupported(other.to_string())),
    }
}

fn check2(args: &[Term]) -> Result<(), SmtParseError> {
    if args.len() != 2 {
        return Err(SmtParseError::Sort("binary op".into()));
    }
    Ok(())
}

fn bin2(op: BinOp, args: &[Term]) -> Result<Term, SmtParseError> {
    check2(args)?;
    Ok(Term::binary(op, args[0].clone(), args[1].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_script() {
        let text = "\
(set-logic QF_BV)
(declare-const x (_ BitVec 8))
(declare-const y (_ BitVec 8))
(assert (= (bvadd x y) #x2a))
(assert (bvult x (_ bv10 8)))
(check-sat)
(get-model)
";
        let s = parse_script(text).unwrap();
        assert_eq!(s.decls.len(), 2);
        assert_eq!(s.asserts.len(), 2);
        assert!(s.want_model);
    }

    #[test]
    fn rejects_unsupported() {
        assert!(parse_script("(declare-fun f ((_ BitVec 8)) (_ BitVec 8))").is_err());
        assert!(parse_script("(push 1)").is_err());
    }

    #[test]
    fn literal_forms() {
        assert_eq!(parse_bv_literal("#x0f"), Some((15, 8)));
        assert_eq!(parse_bv_literal("#b101"), Some((5, 3)));
    }
}
