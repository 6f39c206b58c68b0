//! EGBF synthesis: the SOS programs for the region of synchronization along
//! the synchronization manifold and around an equilibrium, certificate
//! extraction, and sampling-based verification.
//!
//! With `h_k` the state-set polynomials, `l_m` the target polynomials and
//! `L_V` the Lie derivative, the program is
//!
//! ```text
//! maximize    sum_a c_a * rho_a                (average of V over a region)
//! subject to  L_V - lambda V - sum_k p1_k h_k + p2 l_m   in Sigma   for every m (and pair)
//!             -V + q_k h_k - sum_{m != k} s_km h_m      in Sigma   for every k
//!             1 - V - sum_k t_k h_k                      in Sigma
//! ```
//!
//! with `p1, p2, s, t` SOS and `q` free. The last constraint bounds `V` by 1 on
//! the state set; without it the first two are invariant under scaling `V`
//! and the objective is unbounded.

mod certificate;
mod verify;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::netmodel::{
    error_dynamics, full_dynamics, lie_derivative_full, lie_derivative_pair, NetError, NetworkSpec, RegionSpec,
    Variables,
};
use crate::poly::{ball_moment, ball_volume, AffineForm, LinPoly, Monomial, Poly};
use crate::sdp::{min_eigenvalue, solve, SdpError, SdpSolution, SdpStatus, SolverOptions};
use crate::sos::{make_basis, CompiledProgram, SosError, SosProgram};

pub use certificate::{Certificate, CertificateParseError};
pub use verify::{verify_certificate, VerificationReport, VerifyOptions, Violation, BOUNDARY_TOLERANCE, LIE_TOLERANCE};

/// Largest coefficient mismatch between an SOS expression and its Gram
/// expansion for an accepted certificate.
pub const MAX_IDENTITY_RESIDUAL: f64 = 1e-6;
/// Smallest Gram eigenvalue for an accepted certificate.
pub const MIN_GRAM_EIGENVALUE: f64 = -1e-8;
/// Weight of the trace of every Gram matrix subtracted from the objective.
/// The boundary constraints admit the unbounded direction `q_k += t h_k`
/// whenever `deg q >= deg h`; the penalty keeps the optimal set bounded.
pub const GRAM_TRACE_WEIGHT: f64 = 1e-7;
/// Monte-Carlo sample count for objective moments over non-ball state sets.
pub const MOMENT_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("solver finished with status {0}")]
    NotOptimal(SdpStatus),
    #[error("certificate rejected: identity residual {identity_residual:e}, min Gram eigenvalue {gram_min_eig:e}")]
    Rejected { identity_residual: f64, gram_min_eig: f64 },
}

impl From<crate::poly::PolyError> for SynthError {
    fn from(e: crate::poly::PolyError) -> Self {
        SynthError::Net(NetError::Poly(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    /// Pairwise errors `x_i - x_j`, towards the synchronization manifold.
    Manifold,
    /// Full state, towards an equilibrium.
    Equilibrium,
}

impl ProgramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProgramKind::Manifold => "manifold",
            ProgramKind::Equilibrium => "equilibrium",
        }
    }

    pub fn parse(s: &str) -> Option<ProgramKind> {
        match s {
            "manifold" => Some(ProgramKind::Manifold),
            "equilibrium" => Some(ProgramKind::Equilibrium),
            _ => None,
        }
    }

    pub fn variables(self) -> Variables {
        match self {
            ProgramKind::Manifold => Variables::ErrorPair,
            ProgramKind::Equilibrium => Variables::FullState,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Every `(i, j)` with `i != j`.
    Ordered,
    /// Every `(i, j)` with `i < j`.
    Unordered,
}

/// Region over which the average of `V` is maximized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveRegion {
    /// The closed state set.
    StateSet,
    /// Centered ball of the given radius in the program variables.
    Ball(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub lambda: f64,
    pub deg_v: u32,
    /// Degree of `p1` and `p2`; `None` picks the smallest even degree that
    /// matches the Lie-derivative term.
    pub deg_multipliers: Option<u32>,
    pub pair_mode: PairMode,
    pub objective: ObjectiveRegion,
    /// Seed for Monte-Carlo moments when the state set is not a product of
    /// balls.
    pub moment_seed: u64,
}

impl SynthesisConfig {
    pub fn new(lambda: f64, deg_v: u32) -> Self {
        SynthesisConfig {
            lambda,
            deg_v,
            deg_multipliers: None,
            pair_mode: PairMode::Ordered,
            objective: ObjectiveRegion::StateSet,
            moment_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SynthError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.deg_v < 2 || !self.deg_v.is_multiple_of(2) {
            return Err(SynthError::Config(format!("deg_V must be even and >= 2, got {}", self.deg_v)));
        }
        if let Some(d) = self.deg_multipliers {
            if d % 2 != 0 {
                return Err(SynthError::Config(format!("multiplier degree must be even, got {d}")));
            }
        }
        if let ObjectiveRegion::Ball(r) = self.objective {
            if !(r > 0.0 && r.is_finite()) {
                return Err(SynthError::Config(format!("objective radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Degrees chosen for one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degrees {
    pub v: u32,
    /// Degree of `L_V - lambda V`.
    pub lie: u32,
    pub p: u32,
    pub q: u32,
    pub main_half: u32,
    pub boundary_half: u32,
    pub normalization_half: u32,
}

fn even_at_least(x: i64) -> u32 {
    let x = x.max(0) as u32;
    x + x % 2
}

fn max_degree(ps: &[Poly]) -> u32 {
    ps.iter().map(Poly::degree).max().unwrap_or(0)
}

fn choose_degrees(cfg: &SynthesisConfig, field_degree: u32, deg_h: u32, deg_l: u32) -> Degrees {
    let v = cfg.deg_v;
    let lie = if field_degree == 0 { v } else { (v - 1 + field_degree).max(v) };
    let p = cfg
        .deg_multipliers
        .unwrap_or_else(|| even_at_least(lie as i64 - deg_h as i64).max(even_at_least(lie as i64 - deg_l as i64)));
    let q = even_at_least(v as i64 - deg_h as i64);
    let main = lie.max(p + deg_h).max(p + deg_l);
    let boundary = v.max(q + deg_h);
    Degrees {
        v,
        lie,
        p,
        q,
        main_half: main.div_ceil(2),
        boundary_half: boundary.div_ceil(2),
        normalization_half: boundary.div_ceil(2),
    }
}

/// An SOS program ready to compile, with handles to `V` and the multipliers.
#[derive(Debug, Clone)]
pub struct SynthesisProgram {
    pub kind: ProgramKind,
    pub lambda: f64,
    pub sos: SosProgram,
    pub v: LinPoly,
    pub degrees: Degrees,
    /// Node pairs of the main constraints (manifold programs only).
    pub pairs: Vec<(usize, usize)>,
    /// `(V monomial, moment)` defining the objective.
    pub moments: Vec<(Monomial, f64)>,
    multipliers: Vec<(String, LinPoly)>,
}

impl SynthesisProgram {
    pub fn compile(&self) -> Result<CompiledProgram, SynthError> {
        Ok(self.sos.compile()?)
    }

    /// `sum_a c_a * rho_a` for a numeric `V`.
    pub fn objective_of(&self, v: &Poly) -> f64 {
        self.moments.iter().map(|(m, rho)| v.coeff(m) * rho).sum()
    }

    pub fn multiplier_names(&self) -> impl Iterator<Item = &str> {
        self.multipliers.iter().map(|(n, _)| n.as_str())
    }
}

pub fn build_manifold_program(
    spec: &NetworkSpec,
    region: &RegionSpec,
    cfg: &SynthesisConfig,
) -> Result<SynthesisProgram, SynthError> {
    build_program(spec, region, cfg, ProgramKind::Manifold)
}

pub fn build_equilibrium_program(
    spec: &NetworkSpec,
    region: &RegionSpec,
    cfg: &SynthesisConfig,
) -> Result<SynthesisProgram, SynthError> {
    build_program(spec, region, cfg, ProgramKind::Equilibrium)
}

/// Node pairs for the manifold program.
pub fn node_pairs(nodes: usize, mode: PairMode) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..nodes {
        for j in 0..nodes {
            let keep = match mode {
                PairMode::Ordered => i != j,
                PairMode::Unordered => i < j,
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn build_program(
    spec: &NetworkSpec,
    region: &RegionSpec,
    cfg: &SynthesisConfig,
    kind: ProgramKind,
) -> Result<SynthesisProgram, SynthError> {
    cfg.validate()?;
    spec.validate()?;
    if region.variables != kind.variables() {
        return Err(SynthError::Config(format!(
            "{} program needs {} region variables",
            kind.as_str(),
            match kind {
                ProgramKind::Manifold => "error-pair",
                ProgramKind::Equilibrium => "full-state",
            }
        )));
    }
    region.validate(spec)?;
    let d = region.dim(spec);
    let full = spec.full_dim();
    let hs = &region.state_ineqs;
    let ls = region.target_polys(spec);
    let pairs = match kind {
        ProgramKind::Manifold => node_pairs(spec.nodes, cfg.pair_mode),
        ProgramKind::Equilibrium => Vec::new(),
    };
    if kind == ProgramKind::Manifold && pairs.is_empty() {
        return Err(SynthError::Config("manifold program needs at least two nodes".into()));
    }
    let field_degree = match kind {
        ProgramKind::Manifold => {
            let mut deg = 0;
            for &(i, j) in &pairs {
                deg = deg.max(max_degree(&error_dynamics(spec, i, j)?));
            }
            deg
        }
        ProgramKind::Equilibrium => max_degree(&full_dynamics(spec)?),
    };
    let degrees = choose_degrees(cfg, field_degree, max_degree(hs), max_degree(&ls));

    let mut sos = SosProgram::new();
    let mut multipliers = Vec::new();
    let v_monomials = Monomial::all_up_to(d, cfg.deg_v);
    let v = sos.registry.free_poly(d, &v_monomials);
    let mult_basis = make_basis(d, degrees.p / 2);
    let main_basis = make_basis(full, degrees.main_half);

    // Main constraints.
    let main_targets: Vec<Option<(usize, usize)>> = match kind {
        ProgramKind::Manifold => pairs.iter().copied().map(Some).collect(),
        ProgramKind::Equilibrium => vec![None],
    };
    for pair in main_targets {
        let lie = match pair {
            Some((i, j)) => lie_derivative_pair(&v, spec, i, j)?,
            None => lie_derivative_full(&v, spec)?,
        };
        let tag = pair.map(|(i, j)| format!("{},{}", i + 1, j + 1));
        let index = |k: usize, count: usize| (count > 1).then(|| format!("{}", k + 1));
        for (m, l) in ls.iter().enumerate() {
            // Terms in the program variables, substituted into the full
            // state once.
            let mut local = v.scale(-cfg.lambda);
            for (k, h) in hs.iter().enumerate() {
                let (p1, _) = sos.registry.sos_poly(&mult_basis);
                local = local.sub(&p1.mul_poly(h)?)?;
                multipliers.push((label("p1", &[tag.clone(), index(k, hs.len()), index(m, ls.len())]), p1));
            }
            let (p2, _) = sos.registry.sos_poly(&mult_basis);
            local = local.add(&p2.mul_poly(l)?)?;
            multipliers.push((label("p2", &[tag.clone(), index(m, ls.len())]), p2));
            let local = match pair {
                Some((i, j)) => local.substitute_linear(&spec.pair_map(i, j))?,
                None => local,
            };
            sos.add_sos(lie.add(&local)?, main_basis.clone());
        }
    }

    // Boundary: V <= 0 where h_k = 0 and the other h are nonnegative.
    let q_monomials = Monomial::all_up_to(d, degrees.q);
    let side_basis = make_basis(d, degrees.q / 2);
    let boundary_basis = make_basis(d, degrees.boundary_half);
    for (k, hk) in hs.iter().enumerate() {
        let q = sos.registry.free_poly(d, &q_monomials);
        let mut expr = v.scale(-1.0).add(&q.mul_poly(hk)?)?;
        multipliers.push((label("q", &[(hs.len() > 1).then(|| format!("{}", k + 1))]), q));
        for (m, hm) in hs.iter().enumerate() {
            if m != k {
                let (s, _) = sos.registry.sos_poly(&side_basis);
                expr = expr.sub(&s.mul_poly(hm)?)?;
                multipliers.push((format!("s[{};{}]", k + 1, m + 1), s));
            }
        }
        sos.add_sos(expr, boundary_basis.clone());
    }

    // Normalization: V <= 1 on the state set.
    let mut expr = LinPoly::from_poly(&Poly::constant(d, 1.0)).sub(&v)?;
    for (k, h) in hs.iter().enumerate() {
        let (t, _) = sos.registry.sos_poly(&side_basis);
        expr = expr.sub(&t.mul_poly(h)?)?;
        multipliers.push((label("t", &[(hs.len() > 1).then(|| format!("{}", k + 1))]), t));
    }
    sos.add_sos(expr, make_basis(d, degrees.normalization_half));

    let rho = objective_moments(region, cfg, d, &v_monomials);
    let mut objective = AffineForm::constant(0.0);
    for (m, &r) in v_monomials.iter().zip(&rho) {
        if let Some(form) = v.coeff(m) {
            objective.add_scaled(form, r);
        }
    }
    let diagonal: Vec<_> = sos.registry.gram_diagonal().collect();
    for id in diagonal {
        objective.add_scaled(&AffineForm::var(id, 1.0), -GRAM_TRACE_WEIGHT);
    }
    sos.set_objective(objective);
    Ok(SynthesisProgram {
        kind,
        lambda: cfg.lambda,
        sos,
        v,
        degrees,
        pairs,
        moments: v_monomials.into_iter().zip(rho).collect(),
        multipliers,
    })
}

/// `name[a;b;...]`, or bare `name` without indices.
fn label(name: &str, parts: &[Option<String>]) -> String {
    let parts: Vec<&str> = parts.iter().flatten().map(String::as_str).collect();
    if parts.is_empty() {
        String::from(name)
    } else {
        format!("{name}[{}]", parts.join(";"))
    }
}

/// Volume-normalized moments of `monomials` over the objective region.
pub fn objective_moments(region: &RegionSpec, cfg: &SynthesisConfig, d: usize, monomials: &[Monomial]) -> Vec<f64> {
    let groups = match cfg.objective {
        ObjectiveRegion::Ball(r) => Some(vec![((0..d).collect::<Vec<_>>(), r)]),
        ObjectiveRegion::StateSet => ball_groups(region, d),
    };
    match groups {
        Some(groups) => monomials
            .iter()
            .map(|m| {
                groups
                    .iter()
                    .map(|(vars, r)| {
                        let sub = Monomial::new(vars.iter().map(|&v| m.exponents()[v]).collect());
                        ball_moment(&sub, vars.len(), *r) / ball_volume(vars.len(), *r)
                    })
                    .product()
            })
            .collect(),
        None => monte_carlo_moments(region, d, monomials, cfg.moment_seed),
    }
}

/// The state set as a product of centered balls over disjoint variable
/// groups covering every variable, if it has that shape.
fn ball_groups(region: &RegionSpec, d: usize) -> Option<Vec<(Vec<usize>, f64)>> {
    let mut covered = vec![false; d];
    let mut groups = Vec::new();
    for h in &region.state_ineqs {
        let (vars, r) = h.as_centered_ball()?;
        if vars.iter().any(|&v| covered[v]) {
            return None;
        }
        vars.iter().for_each(|&v| covered[v] = true);
        groups.push((vars, r));
    }
    covered.iter().all(|&c| c).then_some(groups)
}

fn monte_carlo_moments(region: &RegionSpec, d: usize, monomials: &[Monomial], seed: u64) -> Vec<f64> {
    let radius = region.bounding_radius().unwrap_or(1.0);
    let mut rng = crate::sample::rng(seed);
    let mut sums = vec![0.0; monomials.len()];
    let mut accepted = 0usize;
    for _ in 0..MOMENT_SAMPLES {
        let x = crate::sample::in_box(&mut rng, d, radius);
        if region.in_state_closure(&x) {
            accepted += 1;
            for (s, m) in sums.iter_mut().zip(monomials) {
                *s += m.eval(&x);
            }
        }
    }
    let n = accepted.max(1) as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// Collapses the solved decision variables into a certificate and checks
/// the Gram identities and PSD-ness.
pub fn extract_certificate(solution: &SdpSolution, program: &SynthesisProgram) -> Result<Certificate, SynthError> {
    if solution.status != SdpStatus::Optimal {
        return Err(SynthError::NotOptimal(solution.status));
    }
    let values = program.sos.registry.values(solution);
    let v = program.v.collapse(&values);
    let objective = program.objective_of(&v);
    let multipliers = program.multipliers.iter().map(|(n, p)| (n.clone(), p.collapse(&values))).collect();
    let mut identity_residual: f64 = 0.0;
    for k in 0..program.sos.num_memberships() {
        identity_residual = identity_residual.max(program.sos.reconstruct(solution, k).1);
    }
    let mut gram_min_eig = f64::INFINITY;
    for b in &solution.blocks {
        gram_min_eig = gram_min_eig.min(min_eigenvalue(b)?);
    }
    if !(identity_residual <= MAX_IDENTITY_RESIDUAL && gram_min_eig >= MIN_GRAM_EIGENVALUE) {
        return Err(SynthError::Rejected { identity_residual, gram_min_eig });
    }
    Ok(Certificate {
        program: program.kind,
        lambda: program.lambda,
        v,
        multipliers,
        gram_blocks: solution.blocks.clone(),
        identity_residual,
        gram_min_eig,
        objective,
    })
}

/// Outcome of building, solving, and extracting.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub program: SynthesisProgram,
    pub solution: SdpSolution,
    pub certificate: Result<Certificate, SynthError>,
}

pub fn synthesize(
    spec: &NetworkSpec,
    region: &RegionSpec,
    cfg: &SynthesisConfig,
    kind: ProgramKind,
    opts: &SolverOptions,
) -> Result<Synthesis, SynthError> {
    let program = build_program(spec, region, cfg, kind)?;
    let compiled = program.compile()?;
    let solution = solve(&compiled.sdp, opts)?;
    let certificate = extract_certificate(&solution, &program);
    Ok(Synthesis { program, solution, certificate })
}

#[cfg(test)]
mod tests;
