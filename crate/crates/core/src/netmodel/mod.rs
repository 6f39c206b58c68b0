//! Coupled networks `x_i' = f(x_i) - c * sum_j L_ij g(x_j)`, their error
//! dynamics, Lie derivatives, and the state/target sets.
//!
//! The full state is ordered node by node: variable `i * n + k` is coordinate
//! `k` of node `i` (all indices 0-based).

use alloc::vec;
use alloc::vec::Vec;

use crate::poly::{AffineMap, CompiledPoly, LinPoly, Poly, PolyError};

/// Row sums of a Laplacian must vanish to within this.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("Laplacian row {row} sums to {sum:e}, not 0")]
    RowSum { row: usize, sum: f64 },
    #[error("coupling strength must be positive and finite, got {0}")]
    Coupling(f64),
    #[error("nodes must differ (got {0} twice)")]
    SameNode(usize),
    #[error("node {node} out of range (network has {nodes})")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("target radius must be positive, got {0}")]
    Epsilon(f64),
    #[error("state set is not bounded: no inequality of the form R^2 - |x|^2 over all variables")]
    Unbounded,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Node state dimension.
    pub n: usize,
    /// Node count.
    pub nodes: usize,
    pub f: Vec<Poly>,
    pub g: Vec<Poly>,
    pub laplacian: Vec<Vec<f64>>,
    pub coupling: f64,
    /// Accept a Laplacian whose rows do not sum to zero.
    pub row_sum_exempt: bool,
}

impl NetworkSpec {
    pub fn new(
        f: Vec<Poly>,
        g: Vec<Poly>,
        laplacian: Vec<Vec<f64>>,
        coupling: f64,
        row_sum_exempt: bool,
    ) -> Result<Self, NetError> {
        let spec = NetworkSpec { n: f.len(), nodes: laplacian.len(), f, g, laplacian, coupling, row_sum_exempt };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let n = self.n;
        for (what, list) in [("f components", &self.f), ("g components", &self.g)] {
            if list.len() != n {
                return Err(NetError::Dimension { what, expected: n, found: list.len() });
            }
            if let Some(p) = list.iter().find(|p| p.dim() != n) {
                return Err(NetError::Dimension { what, expected: n, found: p.dim() });
            }
        }
        for row in &self.laplacian {
            if row.len() != self.nodes {
                return Err(NetError::Dimension { what: "Laplacian row", expected: self.nodes, found: row.len() });
            }
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(NetError::Coupling(self.coupling));
        }
        if !self.row_sum_exempt {
            if let Some((row, sum)) = self.row_sums().into_iter().enumerate().find(|(_, s)| s.abs() > ROW_SUM_TOLERANCE)
            {
                return Err(NetError::RowSum { row, sum });
            }
        }
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.laplacian.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn has_zero_row_sums(&self) -> bool {
        self.row_sums().iter().all(|s| s.abs() <= ROW_SUM_TOLERANCE)
    }

    /// Dimension of the full state.
    pub fn full_dim(&self) -> usize {
        self.n * self.nodes
    }

    fn node_vars(&self, i: usize) -> Vec<usize> {
        (i * self.n..(i + 1) * self.n).collect()
    }

    fn check_node(&self, i: usize) -> Result<(), NetError> {
        if i >= self.nodes {
            return Err(NetError::NodeOutOfRange { node: i, nodes: self.nodes });
        }
        Ok(())
    }

    /// Map `delta_k = x_{i,k} - x_{j,k}` from the full state to the error
    /// variables of pair `(i, j)`.
    pub fn pair_map(&self, i: usize, j: usize) -> AffineMap {
        let full = self.full_dim();
        let matrix = (0..self.n)
            .map(|k| {
                let mut row = vec![0.0; full];
                row[i * self.n + k] += 1.0;
                row[j * self.n + k] -= 1.0;
                row
            })
            .collect();
        AffineMap::linear(matrix, full)
    }

    /// Numeric error vector of pair `(i, j)`.
    pub fn pair_error(&self, x: &[f64], i: usize, j: usize) -> Vec<f64> {
        (0..self.n).map(|k| x[i * self.n + k] - x[j * self.n + k]).collect()
    }

    pub fn compile(&self) -> CompiledNetwork {
        CompiledNetwork {
            n: self.n,
            nodes: self.nodes,
            f: self.f.iter().map(CompiledPoly::new).collect(),
            g: self.g.iter().map(CompiledPoly::new).collect(),
            laplacian: self.laplacian.clone(),
            coupling: self.coupling,
        }
    }
}

/// Full vector field `F(X) - c (L kron I_n) G(X)` as `nN` polynomials.
pub fn full_dynamics(spec: &NetworkSpec) -> Result<Vec<Poly>, NetError> {
    let full = spec.full_dim();
    let mut embedded_g = Vec::with_capacity(spec.nodes);
    for m in 0..spec.nodes {
        let vars = spec.node_vars(m);
        embedded_g.push(spec.g.iter().map(|gk| gk.embed(full, &vars)).collect::<Result<Vec<_>, _>>()?);
    }
    let mut out = Vec::with_capacity(full);
    for i in 0..spec.nodes {
        let vars = spec.node_vars(i);
        for k in 0..spec.n {
            let mut comp = spec.f[k].embed(full, &vars)?;
            for (gm, &l) in embedded_g.iter().zip(&spec.laplacian[i]) {
                if l != 0.0 {
                    comp = comp.add(&gm[k].scale(-spec.coupling * l))?;
                }
            }
            out.push(comp);
        }
    }
    Ok(out)
}

/// `x_i' - x_j'` as `n` polynomials in the full state.
pub fn error_dynamics(spec: &NetworkSpec, i: usize, j: usize) -> Result<Vec<Poly>, NetError> {
    spec.check_node(i)?;
    spec.check_node(j)?;
    if i == j {
        return Err(NetError::SameNode(i));
    }
    let full = spec.full_dim();
    let (vi, vj) = (spec.node_vars(i), spec.node_vars(j));
    let mut out = Vec::with_capacity(spec.n);
    for k in 0..spec.n {
        let mut comp = spec.f[k].embed(full, &vi)?.sub(&spec.f[k].embed(full, &vj)?)?;
        for m in 0..spec.nodes {
            let w = spec.laplacian[i][m] - spec.laplacian[j][m];
            if w != 0.0 {
                comp = comp.add(&spec.g[k].embed(full, &spec.node_vars(m))?.scale(-spec.coupling * w))?;
            }
        }
        out.push(comp);
    }
    Ok(out)
}

fn dot_gradient(v: &LinPoly, field: &[Poly], map: Option<&AffineMap>) -> Result<LinPoly, NetError> {
    let dim = field.first().map(Poly::dim).unwrap_or(v.dim());
    let mut out = LinPoly::zero(dim);
    for (k, dv) in v.grad().into_iter().enumerate() {
        if dv.num_terms() == 0 {
            continue;
        }
        let dv = match map {
            Some(m) => dv.substitute_linear(m)?,
            None => dv,
        };
        out = out.add(&dv.mul_poly(&field[k])?)?;
    }
    Ok(out)
}

/// `grad V(x_i - x_j) . (x_i' - x_j')` in the full state; `V` lives in the
/// `n` error variables.
pub fn lie_derivative_pair(v: &LinPoly, spec: &NetworkSpec, i: usize, j: usize) -> Result<LinPoly, NetError> {
    if v.dim() != spec.n {
        return Err(NetError::Dimension { what: "V variables", expected: spec.n, found: v.dim() });
    }
    let field = error_dynamics(spec, i, j)?;
    dot_gradient(v, &field, Some(&spec.pair_map(i, j)))
}

/// `grad V(X) . X'` with `V` in the full state.
pub fn lie_derivative_full(v: &LinPoly, spec: &NetworkSpec) -> Result<LinPoly, NetError> {
    if v.dim() != spec.full_dim() {
        return Err(NetError::Dimension { what: "V variables", expected: spec.full_dim(), found: v.dim() });
    }
    dot_gradient(v, &full_dynamics(spec)?, None)
}

/// Reusable buffers for [`CompiledNetwork::rhs`].
#[derive(Debug, Clone, Default)]
pub struct RhsScratch {
    powers: Vec<f64>,
    gx: Vec<f64>,
}

/// Fast numeric right-hand side of the network.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    n: usize,
    nodes: usize,
    f: Vec<CompiledPoly>,
    g: Vec<CompiledPoly>,
    laplacian: Vec<Vec<f64>>,
    coupling: f64,
}

impl CompiledNetwork {
    pub fn full_dim(&self) -> usize {
        self.n * self.nodes
    }

    /// Writes `X'` at `x` into `out`.
    pub fn rhs(&self, x: &[f64], out: &mut [f64], scratch: &mut RhsScratch) {
        let n = self.n;
        let RhsScratch { powers, gx } = scratch;
        gx.resize(self.full_dim(), 0.0);
        for i in 0..self.nodes {
            let xi = &x[i * n..(i + 1) * n];
            for k in 0..n {
                out[i * n + k] = self.f[k].eval_with(xi, powers);
                gx[i * n + k] = self.g[k].eval_with(xi, powers);
            }
        }
        for i in 0..self.nodes {
            for (m, &l) in self.laplacian[i].iter().enumerate() {
                if l != 0.0 {
                    for k in 0..n {
                        out[i * n + k] -= self.coupling * l * gx[m * n + k];
                    }
                }
            }
        }
    }
}

/// Which variables a region's polynomials are written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variables {
    /// The `n` error variables of one pair.
    ErrorPair,
    /// The `nN` full-state variables.
    FullState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `|vars|^2 < epsilon^2` over all region variables.
    Ball(f64),
    /// Intersection of `{l_k > 0}`.
    Polys(Vec<Poly>),
}

/// `X = {h_k > 0 for all k}` and the target `X_T = {l_m > 0 for all m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub state_ineqs: Vec<Poly>,
    pub target: Target,
    pub variables: Variables,
}

impl RegionSpec {
    pub fn dim(&self, spec: &NetworkSpec) -> usize {
        match self.variables {
            Variables::ErrorPair => spec.n,
            Variables::FullState => spec.full_dim(),
        }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<(), NetError> {
        let dim = self.dim(spec);
        let polys = self.state_ineqs.iter().chain(match &self.target {
            Target::Polys(ls) => ls.as_slice(),
            Target::Ball(_) => &[],
        });
        for p in polys {
            if p.dim() != dim {
                return Err(NetError::Dimension { what: "region polynomial variables", expected: dim, found: p.dim() });
            }
        }
        match &self.target {
            Target::Ball(eps) if !(*eps > 0.0 && eps.is_finite()) => return Err(NetError::Epsilon(*eps)),
            Target::Polys(ls) if ls.is_empty() => return Err(NetError::Epsilon(0.0)),
            _ => {}
        }
        if self.bounding_radius().is_none() {
            return Err(NetError::Unbounded);
        }
        Ok(())
    }

    /// Radius of a ball containing `X`: the smallest among the `h_k` of the
    /// form `R^2 - |x|^2` over every variable, or the root of the sum of the
    /// squared radii of per-variable-group balls covering every variable.
    pub fn bounding_radius(&self) -> Option<f64> {
        let dim = self.state_ineqs.first()?.dim();
        let mut covered = vec![false; dim];
        let mut sum_sq = 0.0;
        let mut best = f64::INFINITY;
        for h in &self.state_ineqs {
            if let Some((vars, r)) = h.as_centered_ball() {
                if vars.len() == dim {
                    best = best.min(r);
                }
                if vars.iter().all(|&v| !covered[v]) {
                    vars.iter().for_each(|&v| covered[v] = true);
                    sum_sq += r * r;
                }
            }
        }
        if best.is_finite() {
            return Some(best);
        }
        covered.iter().all(|&c| c).then(|| crate::math::sqrt(sum_sq))
    }

    /// The target polynomials `l_m`.
    pub fn target_polys(&self, spec: &NetworkSpec) -> Vec<Poly> {
        match &self.target {
            Target::Ball(eps) => vec![Poly::ball(self.dim(spec), *eps)],
            Target::Polys(ls) => ls.clone(),
        }
    }

    pub fn in_state_set(&self, point: &[f64]) -> bool {
        self.state_ineqs.iter().all(|h| h.evaluate(point).map(|v| v > 0.0).unwrap_or(false))
    }

    pub fn in_state_closure(&self, point: &[f64]) -> bool {
        self.state_ineqs.iter().all(|h| h.evaluate(point).map(|v| v >= 0.0).unwrap_or(false))
    }

    pub fn in_target(&self, spec: &NetworkSpec, point: &[f64]) -> bool {
        self.target_polys(spec).iter().all(|l| l.evaluate(point).map(|v| v > 0.0).unwrap_or(false))
    }
}

#[cfg(test)]
mod tests;
