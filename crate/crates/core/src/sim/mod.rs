//! Fixed-step simulation of the network, reach-avoid classification and
//! Monte-Carlo checks of certificates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;

use crate::math::{ceil, exp};
use crate::netmodel::{CompiledNetwork, NetError, NetworkSpec, RegionSpec, RhsScratch, Variables};
use crate::poly::CompiledPoly;
use crate::sample;
use crate::synth::{node_pairs, Certificate, PairMode, ProgramKind};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 100.0;
const MAX_PROPOSALS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("need step > 0 and t_max > step (step {step}, t_max {t_max})")]
    Horizon { step: f64, t_max: f64 },
    #[error("state has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("certificate does not fit the problem: {0}")]
    Certificate(String),
    #[error("initial state is not inside {{V > 0}} and the state set")]
    OutsideRegion,
    #[error("no initial state with V > 0 in the state set after {proposals} proposals")]
    Sampling { proposals: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalEvent {
    ReachedTarget,
    /// `diverged` marks a non-finite state.
    LeftStateSet { diverged: bool },
    Timeout,
}

impl TerminalEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalEvent::ReachedTarget => "reached_target",
            TerminalEvent::LeftStateSet { diverged: false } => "left_state_set",
            TerminalEvent::LeftStateSet { diverged: true } => "diverged",
            TerminalEvent::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `times[k] = k * step`.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step: f64,
    pub terminal_event: TerminalEvent,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], |s| s.as_slice())
    }

    /// CSV with header `t,x1_1,...,xN_n`; column `xi_k` is coordinate `k` of
    /// node `i`.
    pub fn write_csv(&self, out: &mut impl fmt::Write, n: usize) -> fmt::Result {
        let dim = self.states.first().map_or(0, |s| s.len());
        write!(out, "t")?;
        for c in 0..dim {
            write!(out, ",x{}_{}", c / n + 1, c % n + 1)?;
        }
        writeln!(out)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(out, "{t}")?;
            for v in x {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// The points a region is evaluated at: every ordered pair error, or the
/// full state.
struct Views {
    n: usize,
    pairs: Vec<(usize, usize)>,
    dim: usize,
    buf: Vec<f64>,
}

impl Views {
    fn new(spec: &NetworkSpec, variables: Variables) -> Views {
        match variables {
            Variables::ErrorPair => Views {
                n: spec.n,
                pairs: node_pairs(spec.nodes, PairMode::Ordered),
                dim: spec.n,
                buf: Vec::new(),
            },
            Variables::FullState => Views { n: spec.n, pairs: Vec::new(), dim: spec.full_dim(), buf: Vec::new() },
        }
    }

    fn count(&self) -> usize {
        self.pairs.len().max(1)
    }

    fn fill(&mut self, x: &[f64]) {
        self.buf.clear();
        if self.pairs.is_empty() {
            self.buf.extend_from_slice(x);
            return;
        }
        let n = self.n;
        for &(i, j) in &self.pairs {
            self.buf.extend((0..n).map(|k| x[i * n + k] - x[j * n + k]));
        }
    }

    fn get(&self, v: usize) -> &[f64] {
        &self.buf[v * self.dim..(v + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    Inside,
    Target,
    Outside,
}

struct Classifier {
    views: Views,
    h: Vec<CompiledPoly>,
    l: Vec<CompiledPoly>,
    powers: Vec<f64>,
    /// Per-view target membership from the last call.
    in_target: Vec<bool>,
}

impl Classifier {
    fn new(spec: &NetworkSpec, region: &RegionSpec) -> Classifier {
        let views = Views::new(spec, region.variables);
        let count = views.count();
        Classifier {
            views,
            h: region.state_ineqs.iter().map(CompiledPoly::new).collect(),
            l: region.target_polys(spec).iter().map(CompiledPoly::new).collect(),
            powers: Vec::new(),
            in_target: vec![false; count],
        }
    }

    /// Outside as soon as one view leaves `X`; target once every view is in
    /// `X_T`.
    fn place(&mut self, x: &[f64]) -> Place {
        self.views.fill(x);
        let mut all = true;
        for v in 0..self.views.count() {
            let p = self.views.get(v);
            if self.h.iter().any(|h| h.eval_with(p, &mut self.powers) <= 0.0) {
                return Place::Outside;
            }
            let inside = self.l.iter().all(|l| l.eval_with(p, &mut self.powers) > 0.0);
            self.in_target[v] = inside;
            all &= inside;
        }
        if all {
            Place::Target
        } else {
            Place::Inside
        }
    }
}

fn check_horizon(step: f64, t_max: f64) -> Result<usize, SimError> {
    if !(step > 0.0 && step.is_finite() && t_max > step && t_max.is_finite()) {
        return Err(SimError::Horizon { step, t_max });
    }
    Ok(ceil(t_max / step - 1e-9) as usize)
}

struct Rk4 {
    net: CompiledNetwork,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    scratch: RhsScratch,
}

impl Rk4 {
    fn new(spec: &NetworkSpec) -> Rk4 {
        let d = spec.full_dim();
        Rk4 { net: spec.compile(), k: core::array::from_fn(|_| vec![0.0; d]), tmp: vec![0.0; d], scratch: RhsScratch::default() }
    }

    fn step(&mut self, x: &mut [f64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        self.net.rhs(x, k1, &mut self.scratch);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
            *t = xi + 0.5 * h * k;
        }
        self.net.rhs(&self.tmp, k2, &mut self.scratch);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
            *t = xi + 0.5 * h * k;
        }
        self.net.rhs(&self.tmp, k3, &mut self.scratch);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
            *t = xi + h * k;
        }
        self.net.rhs(&self.tmp, k4, &mut self.scratch);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Integrates from `x0`, calling `visit(t, x, classifier, place)` at every sample
/// including the last. Returns the terminal event.
fn simulate(
    rk: &mut Rk4,
    classifier: &mut Classifier,
    x0: &[f64],
    step: f64,
    steps: usize,
    mut visit: impl FnMut(f64, &[f64], &Classifier, Place),
) -> TerminalEvent {
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let t = k as f64 * step;
        if x.iter().any(|v| !v.is_finite()) {
            visit(t, &x, classifier, Place::Outside);
            return TerminalEvent::LeftStateSet { diverged: true };
        }
        let place = classifier.place(&x);
        visit(t, &x, classifier, place);
        match place {
            Place::Outside => return TerminalEvent::LeftStateSet { diverged: false },
            Place::Target => return TerminalEvent::ReachedTarget,
            Place::Inside => {}
        }
        if k < steps {
            rk.step(&mut x, step);
        }
    }
    TerminalEvent::Timeout
}

/// Classical RK4 with a fixed step, stopped at the first sample in the target
/// or outside the state set. For error-pair regions every ordered pair must be
/// in `X`, and all of them in `X_T` at once.
pub fn integrate(
    spec: &NetworkSpec,
    x0: &[f64],
    step: f64,
    t_max: f64,
    region: &RegionSpec,
) -> Result<Trajectory, SimError> {
    region.validate(spec)?;
    let steps = check_horizon(step, t_max)?;
    if x0.len() != spec.full_dim() {
        return Err(SimError::Dimension { expected: spec.full_dim(), found: x0.len() });
    }
    let mut rk = Rk4::new(spec);
    let mut classifier = Classifier::new(spec, region);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let event = simulate(&mut rk, &mut classifier, x0, step, steps, |t, x, _, _| {
        times.push(t);
        states.push(x.to_vec());
    });
    Ok(Trajectory { times, states, step, terminal_event: event })
}

/// Running minimum of `V(view(t)) - e^{lambda t} V(view(0))` over every
/// view, each tracked until it first enters the target.
struct MarginTracker {
    v: CompiledPoly,
    lambda: f64,
    v0: Vec<f64>,
    active: Vec<bool>,
    powers: Vec<f64>,
    worst: f64,
}

impl MarginTracker {
    fn new(cert: &Certificate) -> MarginTracker {
        MarginTracker {
            v: CompiledPoly::new(&cert.v),
            lambda: cert.lambda,
            v0: Vec::new(),
            active: Vec::new(),
            powers: Vec::new(),
            worst: f64::INFINITY,
        }
    }

    fn observe(&mut self, t: f64, c: &Classifier, place: Place) {
        if place == Place::Outside {
            return;
        }
        let views = &c.views;
        if self.v0.is_empty() {
            self.v0 = (0..views.count()).map(|i| self.v.eval_with(views.get(i), &mut self.powers)).collect();
            self.active = vec![true; views.count()];
        }
        let growth = exp(self.lambda * t);
        for i in 0..views.count() {
            if !self.active[i] {
                continue;
            }
            if c.in_target[i] {
                self.active[i] = false;
                continue;
            }
            let m = self.v.eval_with(views.get(i), &mut self.powers) - growth * self.v0[i];
            self.worst = self.worst.min(m);
        }
    }
}

fn certificate_fits(cert: &Certificate, spec: &NetworkSpec, region: &RegionSpec) -> Result<(), SimError> {
    let want = match cert.program {
        ProgramKind::Manifold => Variables::ErrorPair,
        ProgramKind::Equilibrium => Variables::FullState,
    };
    if want != region.variables {
        return Err(SimError::Certificate(alloc::format!(
            "{} certificate on a region in {:?} variables",
            cert.program.as_str(),
            region.variables
        )));
    }
    let dim = region.dim(spec);
    if cert.v.dim() != dim {
        return Err(SimError::Certificate(alloc::format!("V has {} variables, region has {dim}", cert.v.dim())));
    }
    Ok(())
}

/// `V > 0` and inside `X` for every view of `x`.
fn in_certified_region(v: &CompiledPoly, region: &RegionSpec, views: &mut Views, x: &[f64], powers: &mut Vec<f64>) -> bool {
    views.fill(x);
    (0..views.count()).all(|i| {
        let p = views.get(i);
        region.in_state_set(p) && v.eval_with(p, powers) > 0.0
    })
}

/// Smallest `V(phi(t)) - e^{lambda t} V(phi(0))` over the samples of `traj`
/// (per pair error for manifold certificates), each view counted until it
/// enters the target. Zero at `t = 0`.
pub fn check_exponential_bound(
    cert: &Certificate,
    traj: &Trajectory,
    spec: &NetworkSpec,
    region: &RegionSpec,
) -> Result<f64, SimError> {
    region.validate(spec)?;
    certificate_fits(cert, spec, region)?;
    let Some(x0) = traj.states.first() else { return Ok(0.0) };
    if x0.len() != spec.full_dim() {
        return Err(SimError::Dimension { expected: spec.full_dim(), found: x0.len() });
    }
    let v = CompiledPoly::new(&cert.v);
    let mut views = Views::new(spec, region.variables);
    if !in_certified_region(&v, region, &mut views, x0, &mut Vec::new()) {
        return Err(SimError::OutsideRegion);
    }
    let mut classifier = Classifier::new(spec, region);
    let mut tracker = MarginTracker::new(cert);
    for (&t, x) in traj.times.iter().zip(&traj.states) {
        let place = classifier.place(x);
        tracker.observe(t, &classifier, place);
    }
    Ok(tracker.worst.min(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub t_max: f64,
    /// Half-width of the box node 1 is drawn from for manifold certificates.
    pub node_box: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { trials: 1000, seed: 0, step: DEFAULT_STEP, t_max: DEFAULT_T_MAX, node_box: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub total: usize,
    pub reached: usize,
    /// Includes the diverged trials.
    pub left_set: usize,
    pub diverged: usize,
    pub timed_out: usize,
    pub worst_exponential_margin: f64,
    pub seed: u64,
}

impl ValidationReport {
    pub fn all_reached(&self) -> bool {
        self.reached == self.total
    }
}

fn sample_initial(
    rng: &mut ChaCha8Rng,
    cert: &CompiledPoly,
    spec: &NetworkSpec,
    region: &RegionSpec,
    views: &mut Views,
    node_box: f64,
    powers: &mut Vec<f64>,
) -> Option<Vec<f64>> {
    let radius = region.bounding_radius().unwrap_or(1.0);
    let n = spec.n;
    for _ in 0..MAX_PROPOSALS {
        let x = match region.variables {
            Variables::FullState => sample::in_box(rng, spec.full_dim(), radius),
            Variables::ErrorPair => {
                let mut x = sample::in_box(rng, n, node_box);
                for _ in 1..spec.nodes {
                    let d = sample::in_box(rng, n, radius);
                    for k in 0..n {
                        x.push(x[k] - d[k]);
                    }
                }
                x
            }
        };
        if in_certified_region(cert, region, views, &x, powers) {
            return Some(x);
        }
    }
    None
}

/// Draws initial states with every pair error (or the full state) in
/// `{V > 0}` and `X`, integrates each and counts how it ends. Trials run in
/// index order from one seeded stream.
pub fn mc_validate(
    cert: &Certificate,
    spec: &NetworkSpec,
    region: &RegionSpec,
    opts: &ValidationOptions,
) -> Result<ValidationReport, SimError> {
    region.validate(spec)?;
    certificate_fits(cert, spec, region)?;
    let steps = check_horizon(opts.step, opts.t_max)?;
    let v = CompiledPoly::new(&cert.v);
    let mut rng = sample::rng(opts.seed);
    let mut views = Views::new(spec, region.variables);
    let mut powers = Vec::new();
    let mut rk = Rk4::new(spec);
    let mut classifier = Classifier::new(spec, region);
    let mut report = ValidationReport {
        total: 0,
        reached: 0,
        left_set: 0,
        diverged: 0,
        timed_out: 0,
        worst_exponential_margin: f64::INFINITY,
        seed: opts.seed,
    };
    for _ in 0..opts.trials {
        let Some(x0) = sample_initial(&mut rng, &v, spec, region, &mut views, opts.node_box, &mut powers) else {
            return Err(SimError::Sampling { proposals: MAX_PROPOSALS });
        };
        let mut tracker = MarginTracker::new(cert);
        let event = simulate(&mut rk, &mut classifier, &x0, opts.step, steps, |t, _, c, place| {
            tracker.observe(t, c, place)
        });
        report.total += 1;
        match event {
            TerminalEvent::ReachedTarget => report.reached += 1,
            TerminalEvent::LeftStateSet { diverged } => {
                report.left_set += 1;
                report.diverged += usize::from(diverged);
            }
            TerminalEvent::Timeout => report.timed_out += 1,
        }
        report.worst_exponential_margin = report.worst_exponential_margin.min(tracker.worst.min(0.0));
    }
    Ok(report)
}
