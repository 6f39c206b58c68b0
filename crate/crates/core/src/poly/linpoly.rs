use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{AffineMap, Monomial, Poly, PolyError, PowerCache, ZERO_THRESHOLD};

/// Index of a scalar decision variable in a program's registry.
pub type VarId = usize;

/// `constant + sum_v coeffs[v] * var_v`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineForm {
    constant: f64,
    coeffs: BTreeMap<VarId, f64>,
}

impl AffineForm {
    pub fn constant(c: f64) -> Self {
        AffineForm { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn var(id: VarId, coeff: f64) -> Self {
        let mut f = AffineForm::default();
        f.add_var(id, coeff);
        f
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.coeffs.iter().map(|(&v, &c)| (v, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty() && self.constant.abs() < ZERO_THRESHOLD
    }

    pub fn add_var(&mut self, id: VarId, c: f64) {
        let s = self.coeffs.get(&id).copied().unwrap_or(0.0) + c;
        if s.abs() >= ZERO_THRESHOLD {
            self.coeffs.insert(id, s);
        } else {
            self.coeffs.remove(&id);
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
        if self.constant.abs() < ZERO_THRESHOLD {
            self.constant = 0.0;
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &AffineForm, s: f64) {
        self.add_constant(other.constant * s);
        for (&v, &c) in &other.coeffs {
            self.add_var(v, c * s);
        }
    }

    pub fn scaled(&self, s: f64) -> AffineForm {
        let mut out = AffineForm::default();
        out.add_scaled(self, s);
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(&v, &c)| c * values[v]).sum::<f64>()
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.coeffs.keys().next_back().copied()
    }
}

/// Polynomial whose coefficients are affine in decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinPoly {
    dim: usize,
    terms: BTreeMap<Monomial, AffineForm>,
}

impl LinPoly {
    pub fn zero(dim: usize) -> Self {
        LinPoly { dim, terms: BTreeMap::new() }
    }

    /// Lifts a numeric polynomial (no decision variables).
    pub fn from_poly(p: &Poly) -> Self {
        let mut out = LinPoly::zero(p.dim());
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &AffineForm::constant(c), 1.0);
        }
        out
    }

    /// `sum_k vars[k] * monomials[k]`
    pub fn from_vars(dim: usize, monomials: &[Monomial], vars: &[VarId]) -> Self {
        let mut out = LinPoly::zero(dim);
        for (m, &v) in monomials.iter().zip(vars) {
            out.add_term(m.clone(), &AffineForm::var(v, 1.0), 1.0);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineForm)> + '_ {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&AffineForm> {
        self.terms.get(m)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.terms.values().filter_map(AffineForm::max_var).max()
    }

    /// `self += s * form * m`
    pub fn add_term(&mut self, m: Monomial, form: &AffineForm, s: f64) {
        debug_assert_eq!(m.dim(), self.dim);
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                let f = form.scaled(s);
                if !f.is_zero() {
                    v.insert(f);
                }
            }
            Entry::Occupied(mut o) => {
                o.get_mut().add_scaled(form, s);
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn same_dim(&self, dim: usize) -> Result<(), PolyError> {
        if self.dim != dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: dim });
        }
        Ok(())
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &LinPoly, s: f64) -> Result<LinPoly, PolyError> {
        self.same_dim(other.dim)?;
        let mut out = self.clone();
        for (m, f) in other.terms() {
            out.add_term(m.clone(), f, s);
        }
        Ok(out)
    }

    pub fn add(&self, other: &LinPoly) -> Result<LinPoly, PolyError> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &LinPoly) -> Result<LinPoly, PolyError> {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, s: f64) -> LinPoly {
        let mut out = LinPoly::zero(self.dim);
        for (m, f) in self.terms() {
            out.add_term(m.clone(), f, s);
        }
        out
    }

    pub fn mul_poly(&self, p: &Poly) -> Result<LinPoly, PolyError> {
        self.same_dim(p.dim())?;
        let mut out = LinPoly::zero(self.dim);
        for (m1, f) in self.terms() {
            for (m2, c) in p.terms() {
                out.add_term(m1.mul(m2), f, c);
            }
        }
        Ok(out)
    }

    pub fn partial(&self, k: usize) -> LinPoly {
        let mut out = LinPoly::zero(self.dim);
        for (m, f) in self.terms() {
            let e = m.exponents()[k];
            if e > 0 {
                let mut ex = m.exponents().to_vec();
                ex[k] -= 1;
                out.add_term(Monomial::new(ex), f, e as f64);
            }
        }
        out
    }

    pub fn grad(&self) -> Vec<LinPoly> {
        (0..self.dim).map(|k| self.partial(k)).collect()
    }

    pub fn substitute_linear(&self, map: &AffineMap) -> Result<LinPoly, PolyError> {
        if map.old_dim() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: map.old_dim() });
        }
        let images = map.images()?;
        let mut powers = PowerCache::new(&images);
        let mut out = LinPoly::zero(map.new_dim);
        for (m, f) in self.terms() {
            let mut prod = Poly::constant(map.new_dim, 1.0);
            for (k, &e) in m.exponents().iter().enumerate() {
                if e > 0 {
                    prod = prod.mul(powers.get(k, e))?;
                }
            }
            for (mm, c) in prod.terms() {
                out.add_term(mm.clone(), f, c);
            }
        }
        Ok(out)
    }

    /// Re-embeds into `new_dim` variables, sending variable `k` to `targets[k]`.
    pub fn embed(&self, new_dim: usize, targets: &[usize]) -> Result<LinPoly, PolyError> {
        if targets.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: targets.len() });
        }
        let mut out = LinPoly::zero(new_dim);
        for (m, f) in self.terms() {
            let mut e = alloc::vec![0u32; new_dim];
            for (k, &t) in targets.iter().enumerate() {
                e[t] += m.exponents()[k];
            }
            out.add_term(Monomial::new(e), f, 1.0);
        }
        Ok(out)
    }

    /// Evaluates every affine coefficient at `values`.
    pub fn collapse(&self, values: &[f64]) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, f) in self.terms() {
            out.add_term(m.clone(), f.eval(values));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_then_collapse_is_identity() {
        let p = Poly::parse("3*x1^2*x2 - x2 + 0.25", 2).unwrap();
        assert_eq!(LinPoly::from_poly(&p).collapse(&[]), p);
    }

    #[test]
    fn affine_coefficients_follow_arithmetic() {
        let basis = Monomial::all_up_to(1, 2);
        let v = LinPoly::from_vars(1, &basis, &[0, 1, 2]);
        let h = Poly::parse("1 - x1^2", 1).unwrap();
        let vh = v.mul_poly(&h).unwrap();
        let vals = [2.0, -1.0, 0.5];
        let direct = v.collapse(&vals).mul(&h).unwrap();
        assert!(vh.collapse(&vals).max_abs_diff(&direct) < 1e-15);
        assert_eq!(vh.max_var(), Some(2));
        let d = v.partial(0).collapse(&vals);
        assert_eq!(d, Poly::parse("-1 + x1", 1).unwrap());
    }

    #[test]
    fn cancellation_removes_monomial() {
        let basis = [Monomial::var(2, 0)];
        let v = LinPoly::from_vars(2, &basis, &[3]);
        let z = v.sub(&v).unwrap();
        assert_eq!(z.num_terms(), 0);
    }

    #[test]
    fn substitution_matches_numeric_path() {
        let basis = Monomial::all_up_to(1, 3);
        let v = LinPoly::from_vars(1, &basis, &[0, 1, 2, 3]);
        let map = AffineMap::linear(alloc::vec![alloc::vec![1.0, -1.0]], 2);
        let vals = [0.3, -2.0, 1.5, 0.7];
        let a = v.substitute_linear(&map).unwrap().collapse(&vals);
        let b = v.collapse(&vals).substitute_linear(&map).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }
}
