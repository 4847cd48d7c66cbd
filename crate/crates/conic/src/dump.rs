//! Plain-text sparse dump of an [`SdpProblem`] for cross-checks with external
//! solvers.
//!
//! ```text
//! # lmi-sparse v1
//! vars <K>
//! blocks <size_1> <size_2> ...
//! layout <name> <start> <len>          (zero or more, 0-based start)
//! objective <var> <value>              (one per nonzero cₖ, 1-based var)
//! <block> <row> <col> <var> <value>    (one per stored nonzero)
//! ```
//!
//! Nonzero lines use 1-based block, row and column indices with `row >= col`
//! (lower triangle); `var = 0` marks the constant matrix M₀ and `var = k`
//! marks the coefficient of variable `k - 1`. Values are printed with the
//! shortest round-trip representation, so write → read is bit-exact.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::problem::{LmiBlock, ProblemError, SdpProblem, VarLayout};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub fn write_dump<W: Write>(problem: &SdpProblem, mut out: W) -> io::Result<()> {
    writeln!(out, "# lmi-sparse v1")?;
    writeln!(out, "vars {}", problem.num_vars)?;
    write!(out, "blocks")?;
    for b in &problem.blocks {
        write!(out, " {}", b.size)?;
    }
    writeln!(out)?;
    for (name, range) in problem.layout.iter() {
        writeln!(out, "layout {} {} {}", name, range.start, range.len())?;
    }
    for (k, &c) in problem.objective.iter().enumerate() {
        if c != 0.0 {
            writeln!(out, "objective {} {}", k + 1, c)?;
        }
    }
    for (j, block) in problem.blocks.iter().enumerate() {
        for &(r, c, v) in block.constant.entries() {
            writeln!(out, "{} {} {} 0 {}", j + 1, r + 1, c + 1, v)?;
        }
        for (&k, coeff) in &block.terms {
            for &(r, c, v) in coeff.entries() {
                writeln!(out, "{} {} {} {} {}", j + 1, r + 1, c + 1, k + 1, v)?;
            }
        }
    }
    Ok(())
}

pub fn read_dump<R: BufRead>(input: R) -> Result<SdpProblem, DumpError> {
    let mut num_vars: Option<usize> = None;
    let mut blocks: Vec<LmiBlock> = Vec::new();
    let mut objective: Vec<(usize, f64)> = Vec::new();
    let mut layout = VarLayout::new();

    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let err = |message: String| DumpError::Parse { line: lineno, message };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("bad integer {s:?}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
        match fields[0] {
            "vars" => {
                let [_, k] = fields[..] else {
                    return Err(err("expected `vars <K>`".into()));
                };
                num_vars = Some(int(k)?);
            }
            "blocks" => {
                for s in &fields[1..] {
                    blocks.push(LmiBlock::new(int(s)?));
                }
            }
            "layout" => {
                let [_, name, start, len] = fields[..] else {
                    return Err(err("expected `layout <name> <start> <len>`".into()));
                };
                let (start, len) = (int(start)?, int(len)?);
                if start != layout.len() {
                    return Err(err(format!("layout ranges must be contiguous at {name}")));
                }
                layout.push(name, len);
            }
            "objective" => {
                let [_, k, v] = fields[..] else {
                    return Err(err("expected `objective <var> <value>`".into()));
                };
                let k = int(k)?;
                if k == 0 {
                    return Err(err("objective variables are 1-based".into()));
                }
                objective.push((k - 1, float(v)?));
            }
            _ => {
                let [b, r, c, k, v] = fields[..] else {
                    return Err(err(format!("expected 5 fields, found {}", fields.len())));
                };
                let (b, r, c, k, v) = (int(b)?, int(r)?, int(c)?, int(k)?, float(v)?);
                if b == 0 || r == 0 || c == 0 {
                    return Err(err("block, row and col are 1-based".into()));
                }
                let block = blocks
                    .get_mut(b - 1)
                    .ok_or_else(|| err(format!("block {b} not declared")))?;
                if k == 0 {
                    block.constant.push(r - 1, c - 1, v);
                } else {
                    block.terms.entry(k - 1).or_default().push(r - 1, c - 1, v);
                }
            }
        }
    }

    let num_vars = num_vars.ok_or(DumpError::Parse {
        line: 0,
        message: "missing `vars` line".into(),
    })?;
    let mut problem = SdpProblem::new(num_vars);
    problem.blocks = blocks;
    problem.layout = layout;
    for (k, v) in objective {
        if k >= num_vars {
            return Err(ProblemError::VarOutOfRange {
                block: 0,
                var: k,
                num_vars,
            }
            .into());
        }
        problem.objective[k] = v;
    }
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SdpProblem {
        let mut p = SdpProblem::new(2);
        p.layout.push("x", 1);
        p.layout.push("y", 1);
        p.objective = vec![1.0, -0.1];
        let mut b = LmiBlock::new(2);
        b.add_constant(1, 0, 1.0);
        b.add_coeff(0, 0, 0, 1.0);
        b.add_coeff(0, 1, 1, 1.0);
        b.add_coeff(1, 1, 0, 1.0 / 3.0);
        p.blocks.push(b);
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_dump(&p, &mut buf).unwrap();
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_undeclared_block() {
        let text = "vars 1\nblocks 2\n3 1 1 1 1.0\n";
        let err = read_dump(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DumpError::Parse { line: 3, .. }));
    }

    #[test]
    fn rejects_out_of_range_entry() {
        let text = "vars 1\nblocks 2\n1 3 1 1 1.0\n";
        assert!(matches!(
            read_dump(text.as_bytes()),
            Err(DumpError::Problem(ProblemError::EntryOutOfRange { .. }))
        ));
    }
}
