//! Sparse multivariate polynomials with `f64` coefficients.
//!
//! Monomials are kept in a single global graded-lexicographic order
//! (lower total degree first, ties broken so that `x1` precedes `x2`), which
//! makes Gram bases and coefficient-matching rows reproducible.

mod linpoly;
mod moments;
mod parse;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

pub use linpoly::{AffineForm, LinPoly, VarId};
pub use moments::{ball_moment, ball_volume};
pub use parse::format_coefficient;

use crate::math::powi;

/// Coefficients with absolute value below this are dropped.
pub const ZERO_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: alloc::string::String },
}

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(dim: usize) -> Self {
        Monomial(vec![0; dim])
    }

    pub fn var(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        Monomial(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// True when every exponent is even.
    pub fn is_even(&self) -> bool {
        self.0.iter().all(|&e| e % 2 == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.dim(), other.dim());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &x)| powi(x, e))
            .product()
    }

    /// Every monomial in `dim` variables of total degree at most `max_degree`,
    /// in graded-lex order.
    pub fn all_up_to(dim: usize, max_degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        for d in 0..=max_degree {
            let mut exps = vec![0u32; dim];
            push_degree(&mut out, &mut exps, 0, d);
        }
        out
    }
}

// Emits monomials of exact degree `left` over variables `k..`, with x1-heavy
// monomials first to agree with `Ord`.
fn push_degree(out: &mut Vec<Monomial>, exps: &mut [u32], k: usize, left: u32) {
    if k + 1 == exps.len() {
        exps[k] = left;
        out.push(Monomial(exps.to_vec()));
        exps[k] = 0;
        return;
    }
    if exps.is_empty() {
        if left == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    for e in (0..=left).rev() {
        exps[k] = e;
        push_degree(out, exps, k + 1, left - e);
    }
    exps[k] = 0;
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Affine change of variables: old variable `k` equals
/// `sum_j matrix[k][j] * new_j + offset[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub new_dim: usize,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let matrix = (0..dim)
            .map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            .collect();
        AffineMap { matrix, offset: vec![0.0; dim], new_dim: dim }
    }

    /// Linear map without offset. Every row must have `new_dim` entries.
    pub fn linear(matrix: Vec<Vec<f64>>, new_dim: usize) -> Self {
        let old = matrix.len();
        AffineMap { matrix, offset: vec![0.0; old], new_dim }
    }

    pub fn old_dim(&self) -> usize {
        self.matrix.len()
    }

    fn check(&self) -> Result<(), PolyError> {
        if self.offset.len() != self.matrix.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.matrix.len(),
                found: self.offset.len(),
            });
        }
        for row in &self.matrix {
            if row.len() != self.new_dim {
                return Err(PolyError::DimensionMismatch { expected: self.new_dim, found: row.len() });
            }
        }
        Ok(())
    }

    /// Images of the old variables as polynomials in the new ones.
    pub(crate) fn images(&self) -> Result<Vec<Poly>, PolyError> {
        self.check()?;
        Ok(self
            .matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, &off)| {
                let mut p = Poly::constant(self.new_dim, off);
                for (j, &a) in row.iter().enumerate() {
                    p.add_term(Monomial::var(self.new_dim, j), a);
                }
                p
            })
            .collect())
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, off)| row.iter().zip(u).map(|(a, x)| a * x).sum::<f64>() + off)
            .collect()
    }
}

/// Sparse polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Poly::zero(dim);
        p.add_term(Monomial::one(dim), c);
        p
    }

    /// The coordinate polynomial `x_{k+1}` (0-based `k`).
    pub fn var(dim: usize, k: usize) -> Self {
        let mut p = Poly::zero(dim);
        p.add_term(Monomial::var(dim, k), 1.0);
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Poly::zero(dim);
        for (m, c) in terms {
            if m.dim() != dim {
                return Err(PolyError::DimensionMismatch { expected: dim, found: m.dim() });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    /// `r^2 - sum x_k^2` over all variables.
    pub fn ball(dim: usize, radius: f64) -> Self {
        let mut p = Poly::constant(dim, radius * radius);
        for k in 0..dim {
            let mut e = vec![0; dim];
            e[k] = 2;
            p.add_term(Monomial(e), -1.0);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Accumulates `c * m`, dropping the term if it falls under the threshold.
    pub(crate) fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.dim(), self.dim);
        let entry = self.terms.entry(m);
        match entry {
            alloc::collections::btree_map::Entry::Vacant(v) => {
                if c.abs() >= ZERO_THRESHOLD {
                    v.insert(c);
                }
            }
            alloc::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.abs() >= ZERO_THRESHOLD {
                    *o.get_mut() = s;
                } else {
                    o.remove();
                }
            }
        }
    }

    fn same_dim(&self, other: &Poly) -> Result<(), PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.same_dim(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.same_dim(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.same_dim(other)?;
        let mut out = Poly::zero(self.dim);
        for (m1, c1) in self.terms() {
            for (m2, c2) in other.terms() {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        self.scale(-1.0)
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::constant(self.dim, 1.0);
        for _ in 0..e {
            acc = acc.mul(self).expect("same dimension");
        }
        acc
    }

    /// Partial derivative with respect to variable `k` (0-based).
    pub fn partial(&self, k: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, c) in self.terms() {
            let e = m.0[k];
            if e > 0 {
                let mut d = m.clone();
                d.0[k] -= 1;
                out.add_term(d, c * e as f64);
            }
        }
        out
    }

    pub fn grad(&self) -> Vec<Poly> {
        (0..self.dim).map(|k| self.partial(k)).collect()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Replaces variable `k` by `subs[k]`; all substitutes share one dimension.
    pub fn compose(&self, subs: &[Poly]) -> Result<Poly, PolyError> {
        if subs.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: subs.len() });
        }
        let new_dim = match subs.first() {
            Some(p) => p.dim,
            None => return Ok(Poly::constant(0, self.coeff(&Monomial::one(0)))),
        };
        for s in subs {
            if s.dim != new_dim {
                return Err(PolyError::DimensionMismatch { expected: new_dim, found: s.dim });
            }
        }
        let mut powers = PowerCache::new(subs);
        let mut out = Poly::zero(new_dim);
        for (m, c) in self.terms() {
            let mut prod = Poly::constant(new_dim, c);
            for (k, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    prod = prod.mul(powers.get(k, e))?;
                }
            }
            for (mm, cc) in prod.terms {
                out.add_term(mm, cc);
            }
        }
        Ok(out)
    }

    /// Exact composition with an affine change of variables.
    pub fn substitute_linear(&self, map: &AffineMap) -> Result<Poly, PolyError> {
        if map.old_dim() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: map.old_dim() });
        }
        self.compose(&map.images()?)
    }

    /// Re-embeds into `new_dim` variables, sending variable `k` to `targets[k]`.
    pub fn embed(&self, new_dim: usize, targets: &[usize]) -> Result<Poly, PolyError> {
        if targets.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: targets.len() });
        }
        let mut out = Poly::zero(new_dim);
        for (m, c) in self.terms() {
            let mut e = vec![0u32; new_dim];
            for (k, &t) in targets.iter().enumerate() {
                e[t] += m.0[k];
            }
            out.add_term(Monomial(e), c);
        }
        Ok(out)
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Poly) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in self.terms() {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, c) in other.terms() {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// If the polynomial has the shape `c - sum_{k in S} x_k^2` with `c > 0`,
    /// returns the variable set `S` and the radius `sqrt(c)`.
    pub fn as_centered_ball(&self) -> Option<(Vec<usize>, f64)> {
        let c = self.coeff(&Monomial::one(self.dim));
        if c <= 0.0 {
            return None;
        }
        let mut vars = Vec::new();
        for (m, coef) in self.terms() {
            if m.is_constant() {
                continue;
            }
            let mut nz = m.0.iter().enumerate().filter(|(_, &e)| e > 0);
            match (nz.next(), nz.next()) {
                (Some((k, &2)), None) if (coef + 1.0).abs() <= 1e-12 => vars.push(k),
                _ => return None,
            }
        }
        if vars.is_empty() {
            return None;
        }
        Some((vars, crate::math::sqrt(c)))
    }
}

/// Memoised powers of substitute polynomials.
pub(crate) struct PowerCache<'a> {
    subs: &'a [Poly],
    cache: Vec<Vec<Poly>>,
}

impl<'a> PowerCache<'a> {
    pub(crate) fn new(subs: &'a [Poly]) -> Self {
        let cache = subs.iter().map(|p| vec![Poly::constant(p.dim, 1.0), p.clone()]).collect();
        PowerCache { subs, cache }
    }

    pub(crate) fn get(&mut self, k: usize, e: u32) -> &Poly {
        let e = e as usize;
        while self.cache[k].len() <= e {
            let next = self.cache[k].last().unwrap().mul(&self.subs[k]).expect("same dimension");
            self.cache[k].push(next);
        }
        &self.cache[k][e]
    }
}

/// Flattened polynomial for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    dim: usize,
    max_exp: usize,
    // (coefficient, exponents) stored as parallel arrays.
    coeffs: Vec<f64>,
    exps: Vec<u32>,
}

impl CompiledPoly {
    pub fn new(p: &Poly) -> Self {
        let mut coeffs = Vec::with_capacity(p.num_terms());
        let mut exps = Vec::with_capacity(p.num_terms() * p.dim);
        let mut max_exp = 0;
        for (m, c) in p.terms() {
            coeffs.push(c);
            exps.extend_from_slice(&m.0);
            max_exp = max_exp.max(m.0.iter().copied().max().unwrap_or(0) as usize);
        }
        CompiledPoly { dim: p.dim, max_exp, coeffs, exps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates using a caller-provided scratch buffer of powers.
    pub fn eval_with(&self, point: &[f64], powers: &mut Vec<f64>) -> f64 {
        let stride = self.max_exp + 1;
        powers.clear();
        powers.resize(self.dim * stride, 1.0);
        for (k, &x) in point.iter().enumerate().take(self.dim) {
            for e in 1..stride {
                powers[k * stride + e] = powers[k * stride + e - 1] * x;
            }
        }
        let mut acc = 0.0;
        for (t, &c) in self.coeffs.iter().enumerate() {
            let row = &self.exps[t * self.dim..(t + 1) * self.dim];
            let mut v = c;
            for (k, &e) in row.iter().enumerate() {
                if e > 0 {
                    v *= powers[k * stride + e as usize];
                }
            }
            acc += v;
        }
        acc
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut scratch = Vec::new();
        self.eval_with(point, &mut scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, dim: usize) -> Poly {
        Poly::parse(s, dim).unwrap()
    }

    #[test]
    fn graded_lex_order() {
        let basis = Monomial::all_up_to(2, 2);
        let rendered: Vec<_> = basis.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(rendered, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        let mut sorted = basis.clone();
        sorted.sort();
        assert_eq!(sorted, basis);
    }

    #[test]
    fn add_examples() {
        assert_eq!(p("x1 + x2", 2).add(&p("x1 - x2", 2)).unwrap(), p("2*x1", 2));
        let q = p("3*x1^2*x2 - 1", 2);
        assert_eq!(q.add(&Poly::zero(2)).unwrap(), q);
        assert_eq!(p("x1^2", 2).add(&p("3*x1^2", 2)).unwrap(), p("4*x1^2", 2));
        assert!(matches!(
            p("x1", 1).add(&p("x1", 2)),
            Err(PolyError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(p("x1 + x2", 2).mul(&p("x1 - x2", 2)).unwrap(), p("x1^2 - x2^2", 2));
        let q = p("x1*x2 + 7", 2);
        assert_eq!(q.mul(&Poly::constant(2, 1.0)).unwrap(), q);
        assert_eq!(p("x1^2", 2).mul(&p("x2^3", 2)).unwrap(), p("x1^2*x2^3", 2));
        let a = p("x1^3 + x2", 2);
        let b = p("x1*x2^2 - 2", 2);
        assert_eq!(a.mul(&b).unwrap().degree(), a.degree() + b.degree());
        assert!(p("x1", 1).mul(&p("x1", 3)).is_err());
    }

    #[test]
    fn cancellation_drops_terms() {
        let a = p("x1 + 1e-15*x2", 2);
        assert_eq!(a.num_terms(), 1);
        let b = p("x1", 2).sub(&p("x1", 2)).unwrap();
        assert!(b.is_zero());
    }

    #[test]
    fn grad_examples() {
        assert_eq!(p("x1^2 + x2^2", 2).grad(), vec![p("2*x1", 2), p("2*x2", 2)]);
        assert_eq!(Poly::constant(2, 5.0).grad(), vec![Poly::zero(2), Poly::zero(2)]);
        assert_eq!(p("x1^3*x2", 2).grad(), vec![p("3*x1^2*x2", 2), p("x1^3", 2)]);
    }

    #[test]
    fn substitute_examples() {
        // p(d) = d^2 with d = u - v.
        let sq = p("x1^2", 1);
        let map = AffineMap::linear(vec![vec![1.0, -1.0]], 2);
        assert_eq!(sq.substitute_linear(&map).unwrap(), p("x1^2 - 2*x1*x2 + x2^2", 2));
        let q = p("x1^2*x2 - 3*x2 + 0.5", 2);
        assert_eq!(q.substitute_linear(&AffineMap::identity(2)).unwrap(), q);
        let lin = p("x1 + 1", 1);
        let map = AffineMap::linear(vec![vec![2.0]], 1);
        assert_eq!(lin.substitute_linear(&map).unwrap(), p("2*x1 + 1", 1));
        assert!(q.substitute_linear(&AffineMap::identity(3)).is_err());
    }

    #[test]
    fn evaluate_examples() {
        // Second Van der Pol component with r=1, mu=0.5, omega=0.9.
        let vdp = p("0.45*(1 - x1^2)*x2 - 0.81*x1^2", 2);
        assert!((vdp.evaluate(&[1.0, 2.0]).unwrap() + 0.81).abs() < 1e-15);
        let circle = p("x1^2 + x2^2", 2);
        assert_eq!(circle.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((circle.evaluate(&[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        assert!(circle.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn compiled_matches_direct() {
        let q = p("x1^3*x2 - 2*x2^4 + 0.5*x1 - 7", 2);
        let c = CompiledPoly::new(&q);
        for pt in [[0.3, -1.2], [2.0, 0.5], [0.0, 0.0]] {
            assert!((c.eval(&pt) - q.evaluate(&pt).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_shape_detection() {
        let (vars, r) = p("1 - x1^2 - x2^2", 4).as_centered_ball().unwrap();
        assert_eq!(vars, vec![0, 1]);
        assert_eq!(r, 1.0);
        assert!(p("1 - x1^2 - 2*x2^2", 2).as_centered_ball().is_none());
        assert!(p("x1^2 - 1", 1).as_centered_ball().is_none());
    }

    #[test]
    fn embed_moves_variables() {
        let q = p("x1^2*x2", 2);
        assert_eq!(q.embed(4, &[2, 3]).unwrap(), p("x3^2*x4", 4));
    }

    use proptest::prelude::*;

    const POINTS: usize = 32;

    fn arb_poly(dim: usize) -> impl Strategy<Value = Poly> {
        let term = (proptest::collection::vec(0u32..4, dim), -9i32..=9);
        proptest::collection::vec(term, 0..7).prop_map(move |ts| {
            Poly::from_terms(dim, ts.into_iter().map(|(e, c)| (Monomial::new(e), f64::from(c) / 4.0))).unwrap()
        })
    }

    fn triple() -> impl Strategy<Value = (Poly, Poly, Poly, Vec<Vec<f64>>)> {
        (1usize..4).prop_flat_map(|d| {
            (arb_poly(d), arb_poly(d), arb_poly(d), proptest::collection::vec(proptest::collection::vec(-1.5f64..1.5, d), POINTS))
        })
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn ring_axioms_hold_pointwise((a, b, c, pts) in triple()) {
            let ab = a.add(&b).unwrap();
            let ba = b.add(&a).unwrap();
            let ab_c = ab.add(&c).unwrap();
            let a_bc = a.add(&b.add(&c).unwrap()).unwrap();
            let m_ab = a.mul(&b).unwrap();
            let m_ba = b.mul(&a).unwrap();
            let m_ab_c = m_ab.mul(&c).unwrap();
            let m_a_bc = a.mul(&b.mul(&c).unwrap()).unwrap();
            let dist_l = a.mul(&b.add(&c).unwrap()).unwrap();
            let dist_r = m_ab.add(&a.mul(&c).unwrap()).unwrap();
            for x in &pts {
                let e = |p: &Poly| p.evaluate(x).unwrap();
                prop_assert!(close(e(&ab), e(&ba)));
                prop_assert!(close(e(&ab_c), e(&a_bc)));
                prop_assert!(close(e(&m_ab), e(&m_ba)));
                prop_assert!(close(e(&m_ab_c), e(&m_a_bc)));
                prop_assert!(close(e(&dist_l), e(&dist_r)));
                prop_assert!(close(e(&m_ab), e(&a) * e(&b)));
            }
        }

        #[test]
        fn grad_is_linear((a, b, _, _) in triple(), s in -4i32..=4, t in -4i32..=4) {
            // Quarter-integer coefficients keep every product exact.
            let (s, t) = (f64::from(s), f64::from(t));
            let lhs = a.scale(s).add(&b.scale(t)).unwrap().grad();
            let rhs: Vec<Poly> = a.grad().iter().zip(b.grad()).map(|(ga, gb)| ga.scale(s).add(&gb.scale(t)).unwrap()).collect();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn substitution_commutes_with_evaluation(
            (a, _, _, _) in triple(),
            new_dim in 1usize..4,
            seed in proptest::collection::vec(-1.0f64..1.0, 16),
            u in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let old = a.dim();
            let mut vals = seed.iter().cycle();
            let matrix = (0..old).map(|_| (0..new_dim).map(|_| *vals.next().unwrap()).collect()).collect();
            let offset = (0..old).map(|_| *vals.next().unwrap()).collect();
            let map = AffineMap { matrix, offset, new_dim };
            let u = &u[..new_dim];
            let lhs = a.substitute_linear(&map).unwrap().evaluate(u).unwrap();
            let rhs = a.evaluate(&map.apply(u)).unwrap();
            prop_assert!(close(lhs, rhs), "{} vs {}", lhs, rhs);
        }
    }
}
