//! Sparse text form of an [`SdpProblem`].
//!
//! ```text
//! blocks <n_1> <n_2> ...
//! free <p>
//! constraints <m>
//! <k> <b> <i> <j> <value>
//! ```
//!
//! Data lines use 1-based indices. `k = 0` is the objective and `k >= 1` is
//! constraint `k`. `b >= 1` is PSD block `b` with `1 <= i <= j <= n_b`, meaning
//! `value * X_b[i, j]`; `b = 0` is free variable `i` (with `j = 0`); `b = -1`
//! is the right-hand side of constraint `k` (with `i = j = 0`). Lines starting
//! with `#` are comments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::{LinearFunctional, SdpError, SdpProblem};

impl SdpProblem {
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        out.push_str("# constraint block row col value\n");
        out.push_str("blocks");
        for n in &self.blocks {
            let _ = write!(out, " {n}");
        }
        let _ = writeln!(out, "\nfree {}\nconstraints {}", self.free_vars, self.constraints.len());
        let mut emit = |k: usize, f: &LinearFunctional| {
            for e in &f.entries {
                let _ = writeln!(out, "{k} {} {} {} {}", e.block + 1, e.row + 1, e.col + 1, e.value);
            }
            for &(v, c) in &f.free {
                let _ = writeln!(out, "{k} 0 {} 0 {c}", v + 1);
            }
        };
        emit(0, &self.objective);
        for (i, c) in self.constraints.iter().enumerate() {
            emit(i + 1, &c.functional);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.rhs != 0.0 {
                let _ = writeln!(out, "{} -1 0 0 {}", i + 1, c.rhs);
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<SdpProblem, SdpError> {
        let mut blocks: Option<Vec<usize>> = None;
        let mut free: Option<usize> = None;
        let mut problem: Option<SdpProblem> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| SdpError::Dump { line, msg };
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let mut words = s.split_whitespace();
            let head = words.next().unwrap();
            match head {
                "blocks" => {
                    let dims: Result<Vec<usize>, _> = words.map(str::parse).collect();
                    blocks = Some(dims.map_err(|e| err(e.to_string()))?);
                }
                "free" => {
                    let p = words.next().ok_or_else(|| err("missing count".into()))?;
                    free = Some(p.parse().map_err(|e: core::num::ParseIntError| err(e.to_string()))?);
                }
                "constraints" => {
                    let m: usize = words
                        .next()
                        .ok_or_else(|| err("missing count".into()))?
                        .parse()
                        .map_err(|e: core::num::ParseIntError| err(e.to_string()))?;
                    let (Some(b), Some(p)) = (blocks.take(), free) else {
                        return Err(err("'constraints' must follow 'blocks' and 'free'".into()));
                    };
                    let mut pr = SdpProblem::new(b, p);
                    for _ in 0..m {
                        pr.add_constraint(LinearFunctional::new(), 0.0);
                    }
                    problem = Some(pr);
                }
                _ => {
                    let pr = problem.as_mut().ok_or_else(|| err("data before header".into()))?;
                    let fields: Vec<&str> = core::iter::once(head).chain(words).collect();
                    if fields.len() != 5 {
                        return Err(err(format!("expected 5 fields, found {}", fields.len())));
                    }
                    let int = |s: &str| s.parse::<i64>().map_err(|e| err(format!("'{s}': {e}")));
                    let (k, b, i, j) = (int(fields[0])?, int(fields[1])?, int(fields[2])?, int(fields[3])?);
                    let v: f64 = fields[4].parse().map_err(|_| err(format!("bad value '{}'", fields[4])))?;
                    if k < 0 || k as usize > pr.constraints.len() {
                        return Err(err(format!("constraint index {k} out of range")));
                    }
                    if b == -1 {
                        if k == 0 {
                            return Err(err("objective has no right-hand side".into()));
                        }
                        pr.constraints[k as usize - 1].rhs = v;
                        continue;
                    }
                    let f = if k == 0 { &mut pr.objective } else { &mut pr.constraints[k as usize - 1].functional };
                    if b == 0 {
                        if i < 1 {
                            return Err(err("free variable index must be >= 1".into()));
                        }
                        f.add_free(i as usize - 1, v);
                    } else if b >= 1 && i >= 1 && j >= 1 {
                        f.add_entry(b as usize - 1, i as usize - 1, j as usize - 1, v);
                    } else {
                        return Err(err("indices must be >= 1".into()));
                    }
                }
            }
        }
        let pr = problem.ok_or(SdpError::Dump { line: 0, msg: "missing header".into() })?;
        pr.validate()?;
        Ok(pr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = SdpProblem::new(alloc::vec![2, 1], 2);
        let mut f = LinearFunctional::new();
        f.add_entry(0, 0, 1, 0.1);
        f.add_entry(1, 0, 0, -3.25e-9);
        f.add_free(1, 2.0);
        p.add_constraint(f, 1.5);
        p.add_constraint(LinearFunctional::new(), 0.0);
        p.objective.add_free(0, -1.0);
        let text = p.to_dump();
        assert!(text.contains("1 1 1 2 0.1\n"));
        assert!(text.contains("1 -1 0 0 1.5\n"));
        assert_eq!(SdpProblem::from_dump(&text).unwrap(), p);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "blocks 2\nfree 0\nconstraints 1\n1 1 1 3 1.0\n";
        assert!(matches!(SdpProblem::from_dump(text), Err(SdpError::InvalidProblem(_))));
        let text = "blocks 2\nfree 0\nconstraints 1\n1 1 x 1 1.0\n";
        assert!(matches!(SdpProblem::from_dump(text), Err(SdpError::Dump { line: 4, .. })));
    }
}
