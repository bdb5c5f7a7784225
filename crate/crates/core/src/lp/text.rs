//! Plain-text dump of a [`LinearProgram`] in an LP-file style for cross-checking
//! with external solvers.
//!
//! Grammar:
//!
//! ```text
//! Maximize | Minimize
//!  obj: <term> { + <term> }
//! Subject To
//!  <name>: <term> { + <term> } <= | = | >= <rhs>
//! Bounds
//!  <lower> <= <var> <= <upper>      (-inf / +inf for infinite bounds)
//!  <var> free
//! End
//! ```
//!
//! A term is `<coef> <var>`. Names are sanitized to `[A-Za-z0-9_.]`.

use std::io::{self, Write};

use super::{LinearProgram, Sense};

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}

fn bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:?}")
    }
}

fn write_terms<W: Write>(w: &mut W, terms: impl Iterator<Item = (String, f64)>) -> io::Result<()> {
    let mut first = true;
    for (name, a) in terms {
        if a == 0.0 {
            continue;
        }
        if first {
            write!(w, " {a:?} {name}")?;
        } else if a < 0.0 {
            write!(w, " - {:?} {name}", -a)?;
        } else {
            write!(w, " + {a:?} {name}")?;
        }
        first = false;
    }
    if first {
        write!(w, " 0")?;
    }
    Ok(())
}

pub fn write_lp_text<W: Write>(lp: &LinearProgram, w: &mut W) -> io::Result<()> {
    let names: Vec<String> = lp.variables.iter().enumerate().map(|(j, v)| format!("x{j}_{}", sanitize(&v.name))).collect();
    writeln!(w, "{}", if lp.sense == Sense::Maximize { "Maximize" } else { "Minimize" })?;
    write!(w, " obj:")?;
    write_terms(w, lp.variables.iter().zip(&names).map(|(v, n)| (n.clone(), v.objective)))?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for (i, c) in lp.constraints.iter().enumerate() {
        write!(w, " c{i}_{}:", sanitize(&c.name))?;
        write_terms(w, c.terms.iter().map(|&(v, a)| (names[v.0].clone(), a)))?;
        writeln!(w, " {} {:?}", c.relation, c.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for (v, n) in lp.variables.iter().zip(&names) {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            writeln!(w, " {n} free")?;
        } else {
            writeln!(w, " {} <= {n} <= {}", bound(v.lower), bound(v.upper))?;
        }
    }
    writeln!(w, "End")
}
