//! Sum-of-squares constraints over polynomials with affine decision-variable
//! coefficients, compiled to an [`SdpProblem`] by Gram-matrix coefficient
//! matching.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use faer::Mat;

use crate::poly::{AffineForm, LinPoly, Monomial, Poly, PolyError, VarId};
use crate::sdp::{LinearFunctional, SdpProblem, SdpSolution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SosError {
    #[error("constraint {constraint}: monomial {monomial} of degree {degree} is not covered by the Gram basis (max degree {max_degree})")]
    DegreeOverflow { constraint: usize, monomial: String, degree: u32, max_degree: u32 },
    #[error("constraint {constraint}: expression has {found} variables, basis has {expected}")]
    DimensionMismatch { constraint: usize, expected: usize, found: usize },
    #[error("decision variable {0} was not created by this registry")]
    UnknownVariable(VarId),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Monomial vector `z` of a Gram parameterization `p = z' Q z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBasis {
    ambient_dim: usize,
    monomials: Vec<Monomial>,
}

/// All monomials in `ambient_dim` variables of degree at most `half_degree`.
pub fn make_basis(ambient_dim: usize, half_degree: u32) -> GramBasis {
    GramBasis { ambient_dim, monomials: Monomial::all_up_to(ambient_dim, half_degree) }
}

impl GramBasis {
    /// Custom basis; sorted into the global order with duplicates removed.
    pub fn from_monomials(ambient_dim: usize, mut monomials: Vec<Monomial>) -> Result<GramBasis, PolyError> {
        if let Some(m) = monomials.iter().find(|m| m.dim() != ambient_dim) {
            return Err(PolyError::DimensionMismatch { expected: ambient_dim, found: m.dim() });
        }
        monomials.sort();
        monomials.dedup();
        Ok(GramBasis { ambient_dim, monomials })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.monomials.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// `z' Q z` for a numeric symmetric `Q`.
    pub fn quadratic_form(&self, q: &Mat<f64>) -> Poly {
        let mut out = Poly::zero(self.ambient_dim);
        for (i, mi) in self.monomials.iter().enumerate() {
            for (j, mj) in self.monomials.iter().enumerate().skip(i) {
                let c = if i == j { q[(i, i)] } else { q[(i, j)] + q[(j, i)] };
                out.add_term(mi.mul(mj), c);
            }
        }
        out
    }
}

/// Where a decision variable lives in the compiled SDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarLocation {
    Free(usize),
    /// Entry `(row, col)`, `row <= col`, of a PSD block.
    Gram { block: usize, row: usize, col: usize },
}

/// Allocates decision variables and PSD blocks.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    vars: Vec<VarLocation>,
    blocks: Vec<usize>,
    free: usize,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_free(&self) -> usize {
        self.free
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn location(&self, v: VarId) -> Option<VarLocation> {
        self.vars.get(v).copied()
    }

    pub fn free_var(&mut self) -> VarId {
        self.vars.push(VarLocation::Free(self.free));
        self.free += 1;
        self.vars.len() - 1
    }

    /// Polynomial with one fresh free coefficient per monomial.
    pub fn free_poly(&mut self, dim: usize, monomials: &[Monomial]) -> LinPoly {
        let ids: Vec<VarId> = monomials.iter().map(|_| self.free_var()).collect();
        LinPoly::from_vars(dim, monomials, &ids)
    }

    /// Fresh PSD block `Q` over `basis`; returns `z' Q z` and the block index.
    pub fn sos_poly(&mut self, basis: &GramBasis) -> (LinPoly, usize) {
        let block = self.blocks.len();
        let n = basis.len();
        self.blocks.push(n);
        let mut p = LinPoly::zero(basis.ambient_dim);
        for i in 0..n {
            for j in i..n {
                self.vars.push(VarLocation::Gram { block, row: i, col: j });
                let id = self.vars.len() - 1;
                let scale = if i == j { 1.0 } else { 2.0 };
                p.add_term(basis.monomials[i].mul(&basis.monomials[j]), &AffineForm::var(id, 1.0), scale);
            }
        }
        (p, block)
    }

    /// Variables on the diagonal of some PSD block.
    pub fn gram_diagonal(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars.iter().enumerate().filter_map(|(id, loc)| match *loc {
            VarLocation::Gram { row, col, .. } if row == col => Some(id),
            _ => None,
        })
    }

    /// Decision-variable values read from a solved SDP.
    pub fn values(&self, sol: &SdpSolution) -> Vec<f64> {
        self.vars
            .iter()
            .map(|loc| match *loc {
                VarLocation::Free(k) => sol.free[k],
                VarLocation::Gram { block, row, col } => sol.blocks[block][(row, col)],
            })
            .collect()
    }
}

/// `expr` in Sigma, certified by a Gram matrix over `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosConstraint {
    pub expr: LinPoly,
    pub basis: GramBasis,
}

#[derive(Debug, Clone)]
struct Membership {
    constraint: SosConstraint,
    gram: LinPoly,
    block: usize,
}

/// SOS memberships, polynomial identities, and a linear objective (maximized)
/// sharing one [`Registry`].
#[derive(Debug, Clone, Default)]
pub struct SosProgram {
    pub registry: Registry,
    memberships: Vec<Membership>,
    equalities: Vec<LinPoly>,
    objective: AffineForm,
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub sdp: SdpProblem,
    /// Source of every SDP equality row: `(identity index, monomial)`, where
    /// identities are numbered memberships first, then explicit equalities.
    pub rows: Vec<(usize, Monomial)>,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `expr` in Sigma; returns the membership index.
    pub fn add_sos(&mut self, expr: LinPoly, basis: GramBasis) -> usize {
        let (gram, block) = self.registry.sos_poly(&basis);
        self.memberships.push(Membership { constraint: SosConstraint { expr, basis }, gram, block });
        self.memberships.len() - 1
    }

    /// Adds the identity `expr == 0` (every coefficient).
    pub fn add_equality(&mut self, expr: LinPoly) {
        self.equalities.push(expr);
    }

    pub fn set_objective(&mut self, objective: AffineForm) {
        self.objective = objective;
    }

    pub fn num_memberships(&self) -> usize {
        self.memberships.len()
    }

    pub fn membership(&self, k: usize) -> &SosConstraint {
        &self.memberships[k].constraint
    }

    pub fn membership_block(&self, k: usize) -> usize {
        self.memberships[k].block
    }

    fn check_degrees(&self) -> Result<(), SosError> {
        for (k, m) in self.memberships.iter().enumerate() {
            let basis = &m.constraint.basis;
            if m.constraint.expr.dim() != basis.ambient_dim {
                return Err(SosError::DimensionMismatch {
                    constraint: k,
                    expected: basis.ambient_dim,
                    found: m.constraint.expr.dim(),
                });
            }
            for (mono, _) in m.constraint.expr.terms() {
                if m.gram.coeff(mono).is_none() {
                    return Err(SosError::DegreeOverflow {
                        constraint: k,
                        monomial: Poly::from_terms(mono.dim(), [(mono.clone(), 1.0)])?.to_string(),
                        degree: mono.degree(),
                        max_degree: 2 * basis.max_degree(),
                    });
                }
            }
        }
        Ok(())
    }

    fn functional(&self, form: &AffineForm) -> Result<LinearFunctional, SosError> {
        let mut f = LinearFunctional::new();
        for (v, c) in form.coeffs() {
            match self.registry.location(v).ok_or(SosError::UnknownVariable(v))? {
                VarLocation::Free(k) => f.add_free(k, c),
                VarLocation::Gram { block, row, col } => f.add_entry(block, row, col, c),
            }
        }
        Ok(f)
    }

    /// Emits one SDP equality per monomial of each identity
    /// `expr - z' Q z == 0` and each explicit equality, in the global
    /// monomial order.
    pub fn compile(&self) -> Result<CompiledProgram, SosError> {
        self.check_degrees()?;
        let mut sdp = SdpProblem::new(self.registry.blocks.to_vec(), self.registry.free);
        let mut rows = Vec::new();
        let identities = self
            .memberships
            .iter()
            .map(|m| m.constraint.expr.sub(&m.gram))
            .chain(self.equalities.iter().map(|e| Ok(e.clone())));
        for (k, identity) in identities.enumerate() {
            for (mono, form) in identity?.terms() {
                sdp.add_constraint(self.functional(form)?, -form.constant_term());
                rows.push((k, mono.clone()));
            }
        }
        sdp.objective = self.functional(&self.objective)?;
        Ok(CompiledProgram { sdp, rows })
    }

    /// Collapses a decision-dependent polynomial at the solution.
    pub fn collapse(&self, p: &LinPoly, sol: &SdpSolution) -> Poly {
        p.collapse(&self.registry.values(sol))
    }

    /// Re-expands membership `k` as `z' Q z` from the solved Gram block and
    /// returns it with the largest coefficient mismatch against the collapsed
    /// expression.
    pub fn reconstruct(&self, sol: &SdpSolution, k: usize) -> (Poly, f64) {
        let m = &self.memberships[k];
        let gram = m.constraint.basis.quadratic_form(&sol.blocks[m.block]);
        let expr = self.collapse(&m.constraint.expr, sol);
        let residual = gram.max_abs_diff(&expr);
        (gram, residual)
    }
}

impl core::fmt::Display for VarLocation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VarLocation::Free(k) => write!(f, "free[{k}]"),
            VarLocation::Gram { block, row, col } => write!(f, "gram[{block}][{row},{col}]"),
        }
    }
}
