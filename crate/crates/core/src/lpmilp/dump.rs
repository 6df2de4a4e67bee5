//! Plain-text dumps of programs for debugging.
//!
//! Format, one item per line:
//!
//! ```text
//! minimize|maximize
//! obj: <coef> <var> + <coef> <var> ...
//! subject to
//! <row name>: <coef> <var> + ... <=|=|>= <rhs>
//! bounds
//! <lower> <= <var> <= <upper>
//! binary
//! <var>
//! end
//! ```
//!
//! Set `GRIDCLEAR_LP_DUMP_DIR` to a directory to write every solved program
//! there as `<seq>-<tag>.lp`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::warn;

use super::{LinearProgram, Objective, Sense, VarKind};

pub const DUMP_DIR_ENV: &str = "GRIDCLEAR_LP_DUMP_DIR";

static SEQ: AtomicUsize = AtomicUsize::new(0);

fn terms_text(lp: &LinearProgram, terms: impl Iterator<Item = (usize, f64)>) -> String {
    let mut s = String::new();
    for (k, (j, a)) in terms.enumerate() {
        if k > 0 {
            s.push_str(" + ");
        }
        let _ = write!(s, "{} {}", a, lp.vars[j].name);
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

pub fn to_lp_text(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str(match lp.objective {
        Objective::Minimize => "minimize\n",
        Objective::Maximize => "maximize\n",
    });
    let obj = lp
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.cost != 0.0)
        .map(|(j, v)| (j, v.cost));
    let _ = writeln!(out, "obj: {}", terms_text(lp, obj));
    out.push_str("subject to\n");
    for row in &lp.rows {
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let body = terms_text(lp, row.terms.iter().map(|&(v, a)| (v.0, a)));
        let _ = writeln!(out, "{}: {} {} {}", row.name, body, op, row.rhs);
    }
    out.push_str("bounds\n");
    for v in &lp.vars {
        let _ = writeln!(out, "{} <= {} <= {}", v.lower, v.name, v.upper);
    }
    out.push_str("binary\n");
    for v in lp.vars.iter().filter(|v| v.kind == VarKind::Binary) {
        let _ = writeln!(out, "{}", v.name);
    }
    out.push_str("end\n");
    out
}

/// Writes `lp` to the dump directory when the environment variable is set.
pub fn maybe_dump(lp: &LinearProgram, tag: &str) {
    let Some(dir) = std::env::var_os(DUMP_DIR_ENV) else {
        return;
    };
    let seq = SEQ.fetch_add(1, Ordering::Relaxed);
    let path = PathBuf::from(dir).join(format!("{seq:06}-{tag}.lp"));
    if let Err(e) = std::fs::write(&path, to_lp_text(lp)) {
        warn!("could not write LP dump {}: {e}", path.display());
    }
}
