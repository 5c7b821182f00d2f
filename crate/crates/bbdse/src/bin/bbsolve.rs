//! Stand-alone QF_BV solver speaking SMT-LIB2 over a file argument or
//! stdin. Prints `sat`/`unsat`/`unknown`; on `sat` with `(get-model)` in
//! the script, prints a z3-style model block.

use bbdse::smt::{solve_script, SolveOutcome};
use std::io::Read;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut text = String::new();
    match args.iter().find(|a| !a.starts_with('-')) {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => text = t,
            Err(e) => {
                eprintln!("bbsolve: cannot read {path}: {e}");
                println!("unknown");
                std::process::exit(1);
            }
        },
        None => {
            if std::io::stdin().read_to_string(&mut text).is_err() {
                println!("unknown");
                std::process::exit(1);
            }
        }
    }

    let want_model = text.contains("(get-model)");
    match solve_script(&text) {
        SolveOutcome::Unsat => println!("unsat"),
        SolveOutcome::Unknown(reason) => {
            eprintln!("bbsolve: {reason}");
            println!("unknown");
        }
        SolveOutcome::Sat(model) => {
            println!("sat");
            if want_model {
                let widths = declared_widths(&text);
                println!("(");
                for (name, value) in &model {
                    let w = widths.get(name.as_str()).copied().unwrap_or(64);
                    let digits = (w as usize).div_ceil(4).max(1);
                    println!("  (define-fun {name} () (_ BitVec {w}) #x{value:0>digits$x})");
                }
                println!(")");
            }
        }
    }
}

fn declared_widths(text: &str) -> std::collections::HashMap<&str, u32> {
    let mut out = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        for head in ["(declare-const ", "(declare-fun "] {
            if let Some(rest) = line.strip_prefix(head) {
                if let Some(name) = rest.split_whitespace().next() {
                    if let Some(pos) = rest.find("BitVec") {
                        let digits: String = rest[pos + 6..]
                            .chars()
                            .skip_while(|c| c.is_whitespace())
                            .take_while(|c| c.is_ascii_digit())
                            .collect();
                        if let Ok(w) = digits.parse() {
                            out.insert(name, w);
                        }
                    } else if rest.contains("Bool") {
                        out.insert(name, 1);
                    }
                }
            }
        }
    }
    out
}
