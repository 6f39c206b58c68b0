//! Certificate data and its text form.
//!
//! ```text
//! program manifold
//! lambda 0.1
//! objective 0.42
//! identity_residual 3e-9
//! gram_min_eig 1e-10
//! V 2 = -x1^2 + 1
//! p1[1,2] 2 = ...
//! ```
//!
//! Polynomial lines are `name dim = poly` in the polynomial grammar. Gram
//! blocks are not serialized.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use faer::Mat;

use super::ProgramKind;
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub program: ProgramKind,
    pub lambda: f64,
    pub v: Poly,
    pub multipliers: Vec<(String, Poly)>,
    pub gram_blocks: Vec<Mat<f64>>,
    pub identity_residual: f64,
    pub gram_min_eig: f64,
    /// Solver objective (average of `V` over the objective region).
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("certificate line {line}: {msg}")]
pub struct CertificateParseError {
    pub line: usize,
    pub msg: String,
}

impl Certificate {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "program {}", self.program.as_str());
        let _ = writeln!(out, "lambda {}", self.lambda);
        let _ = writeln!(out, "objective {}", self.objective);
        let _ = writeln!(out, "identity_residual {}", self.identity_residual);
        let _ = writeln!(out, "gram_min_eig {}", self.gram_min_eig);
        let _ = writeln!(out, "V {} = {}", self.v.dim(), self.v);
        for (name, p) in &self.multipliers {
            let _ = writeln!(out, "{name} {} = {p}", p.dim());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Certificate, CertificateParseError> {
        let mut program = None;
        let mut lambda = None;
        let mut objective = f64::NAN;
        let mut identity_residual = f64::NAN;
        let mut gram_min_eig = f64::NAN;
        let mut v = None;
        let mut multipliers = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let err = |msg: String| CertificateParseError { line, msg };
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            if let Some((head, body)) = s.split_once(" = ") {
                let mut words = head.split_whitespace();
                let (Some(name), Some(dim), None) = (words.next(), words.next(), words.next()) else {
                    return Err(err("expected 'name dim = polynomial'".into()));
                };
                let dim: usize = dim.parse().map_err(|_| err(format!("bad dimension '{dim}'")))?;
                let p = Poly::parse(body, dim).map_err(|e| err(e.to_string()))?;
                if name == "V" {
                    v = Some(p);
                } else {
                    multipliers.push((name.to_string(), p));
                }
                continue;
            }
            let (key, value) = s.split_once(' ').ok_or_else(|| err(format!("unrecognized line '{s}'")))?;
            let value = value.trim();
            let num = || value.parse::<f64>().map_err(|_| err(format!("bad number '{value}'")));
            match key {
                "program" => {
                    program = Some(ProgramKind::parse(value).ok_or_else(|| err(format!("unknown program '{value}'")))?)
                }
                "lambda" => lambda = Some(num()?),
                "objective" => objective = num()?,
                "identity_residual" => identity_residual = num()?,
                "gram_min_eig" => gram_min_eig = num()?,
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        let missing = |what: &str| CertificateParseError { line: last_line, msg: format!("missing {what}") };
        Ok(Certificate {
            program: program.ok_or_else(|| missing("program"))?,
            lambda: lambda.ok_or_else(|| missing("lambda"))?,
            v: v.ok_or_else(|| missing("V"))?,
            multipliers,
            gram_blocks: Vec::new(),
            identity_residual,
            gram_min_eig,
            objective,
        })
    }

    /// Largest coefficient difference of `V` and of every multiplier; infinite
    /// if the names or dimensions differ.
    pub fn max_coefficient_diff(&self, other: &Certificate) -> f64 {
        if self.multipliers.len() != other.multipliers.len() || self.v.dim() != other.v.dim() {
            return f64::INFINITY;
        }
        let mut worst = self.v.max_abs_diff(&other.v);
        for ((na, a), (nb, b)) in self.multipliers.iter().zip(&other.multipliers) {
            if na != nb || a.dim() != b.dim() {
                return f64::INFINITY;
            }
            worst = worst.max(a.max_abs_diff(b));
        }
        worst
    }
}
