//! Plain-text interchange format for conic programs.
//!
//! ```text
//! # smkl-conic v1
//! vars <n>
//! objective_constant <c>
//! objective <c_0> <c_1> ... <c_{n-1}>
//! block <name> <start> <len>          (one line per variable block)
//! constraint <cone> <size>            (cone: zero nonneg soc rsoc psd)
//! row <constant> <i>:<coef> ...       (one line per row, in order)
//! end
//! ```
//!
//! Rows follow their constraint in row-major order; PSD rows list the lower
//! triangle column by column. Reals carry 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use smkl_core::conic::{AffineExpr, Cone, ConicProgram, Constraint, VarBlock};

use crate::error::{Error, Result};
use crate::report::fmt_real;

pub const HEADER: &str = "# smkl-conic v1";

pub fn write_program(prog: &ConicProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "vars {}", prog.num_vars());
    let _ = writeln!(s, "objective_constant {}", fmt_real(prog.objective_constant()));
    s.push_str("objective");
    for c in prog.objective() {
        let _ = write!(s, " {}", fmt_real(*c));
    }
    s.push('\n');
    for b in prog.blocks() {
        let _ = writeln!(s, "block {} {} {}", b.name, b.start, b.len);
    }
    for c in prog.constraints() {
        let _ = writeln!(s, "constraint {} {}", c.cone.name(), c.cone.size());
        for r in &c.rows {
            let _ = write!(s, "row {}", fmt_real(r.constant));
            for (i, v) in &r.terms {
                let _ = write!(s, " {i}:{}", fmt_real(*v));
            }
            s.push('\n');
        }
    }
    s.push_str("end\n");
    s
}

pub fn save_program(prog: &ConicProgram, path: &Path) -> Result<()> {
    std::fs::write(path, write_program(prog)).map_err(|e| Error::io(path, e))
}

fn cone_from(name: &str, size: usize) -> Option<Cone> {
    Some(match name {
        "zero" => Cone::Zero(size),
        "nonneg" => Cone::Nonneg(size),
        "soc" => Cone::Soc(size),
        "rsoc" => Cone::RotatedSoc(size),
        "psd" => Cone::Psd(size),
        _ => return None,
    })
}

pub fn read_program(text: &str, origin: &Path) -> Result<ConicProgram> {
    let err = |line: usize, m: &str| Error::format(origin, format!("line {line}: {m}"));
    let num = |line: usize, t: &str| t.parse::<f64>().map_err(|_| err(line, &format!("bad number `{t}`")));
    let int = |line: usize, t: &str| t.parse::<usize>().map_err(|_| err(line, &format!("bad integer `{t}`")));

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(Error::format(origin, format!("first line must be `{HEADER}`"))),
    }
    let mut vars = None;
    let mut constant = 0.0;
    let mut objective = Vec::new();
    let mut blocks = Vec::new();
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut ended = false;
    for (ln, line) in lines {
        if ended {
            return Err(err(ln, "content after `end`"));
        }
        let mut tok = line.split_whitespace();
        let head = tok.next().unwrap_or_default();
        let rest: Vec<&str> = tok.collect();
        match head {
            "vars" if rest.len() == 1 => vars = Some(int(ln, rest[0])?),
            "objective_constant" if rest.len() == 1 => constant = num(ln, rest[0])?,
            "objective" => objective = rest.iter().map(|t| num(ln, t)).collect::<Result<_>>()?,
            "block" if rest.len() == 3 => blocks.push(VarBlock {
                name: rest[0].to_string(),
                start: int(ln, rest[1])?,
                len: int(ln, rest[2])?,
            }),
            "constraint" if rest.len() == 2 => {
                let cone = cone_from(rest[0], int(ln, rest[1])?).ok_or_else(|| err(ln, "unknown cone"))?;
                constraints.push(Constraint { cone, rows: Vec::new() });
            }
            "row" if !rest.is_empty() => {
                let c = constraints.last_mut().ok_or_else(|| err(ln, "row before any constraint"))?;
                let mut expr = AffineExpr::constant(num(ln, rest[0])?);
                for t in &rest[1..] {
                    let (i, v) = t.split_once(':').ok_or_else(|| err(ln, "expected index:coef"))?;
                    expr.terms.push((int(ln, i)?, num(ln, v)?));
                }
                c.rows.push(expr);
            }
            "end" if rest.is_empty() => ended = true,
            _ => return Err(err(ln, &format!("unexpected `{line}`"))),
        }
    }
    if !ended {
        return Err(Error::format(origin, "missing `end`"));
    }
    let n = vars.ok_or_else(|| Error::format(origin, "missing `vars`"))?;
    if objective.len() != n {
        return Err(Error::format(origin, format!("objective has {} entries, vars is {n}", objective.len())));
    }
    ConicProgram::from_parts(objective, constant, blocks, constraints).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn load_program(path: &Path) -> Result<ConicProgram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_program(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smkl_core::conic::{solve, SolverSettings};

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::new();
        let t = p.add_variables("t", 1).start;
        let x = p.add_variables("x", 2).start;
        p.set_cost(t, 1.0);
        p.add_objective_constant(0.1);
        p.add_constraint(Cone::Soc(3), vec![AffineExpr::var(t), AffineExpr::var(x), AffineExpr::var(x + 1)]).unwrap();
        p.add_constraint(
            Cone::Zero(2),
            vec![AffineExpr::var(x).plus_const(-3.0), AffineExpr::term(x + 1, 1.0 / 3.0).plus_const(-4.0 / 3.0)],
        )
        .unwrap();
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample();
        let text = write_program(&p);
        let q = read_program(&text, Path::new("p")).unwrap();
        assert_eq!(p, q);
        assert_eq!(write_program(&q), text);
        let s = solve(&q, &SolverSettings::default()).unwrap();
        assert!((s.primal_obj - 5.1).abs() < 1e-6);
    }

    #[test]
    fn rejects_malformed() {
        let p = Path::new("p");
        let good = write_program(&sample());
        assert!(read_program(&good.replace("soc 3", "soc 4"), p).is_err());
        assert!(read_program(&good.replace("end\n", ""), p).is_err());
        assert!(read_program(&good.replace("vars 3", "vars 4"), p).is_err());
        assert!(read_program(&good.replace("# smkl-conic v1", "# smkl-conic v2"), p).is_err());
    }
}
