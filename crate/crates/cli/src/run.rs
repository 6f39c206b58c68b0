//! The `run` and `check` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use roscert::poly::CompiledPoly;
use roscert::sdp::{solve, SdpStatus, SolverOptions};
use roscert::sim::{self, mc_validate, SimError, TerminalEvent, ValidationOptions, ValidationReport};
use roscert::synth::{
    build_program, extract_certificate, verify_certificate, Certificate, SynthError, SynthesisConfig,
    VerificationReport, VerifyOptions,
};
use roscert::netmodel::Variables;

use crate::problem::{InputError, Problem};

/// Worst tolerated `V(phi(t)) - e^{lambda t} V(phi(0))` before a trajectory
/// counts as falsifying.
pub const EXPONENTIAL_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Io = 1,
    Input = 2,
    Infeasible = 3,
    Falsified = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Input { path: String, source: InputError },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Input { .. } => ExitStatus::Input,
            CliError::Io(_) => ExitStatus::Io,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub deg: Option<u32>,
    pub lambda: Option<f64>,
    pub dump_sdp: Option<PathBuf>,
}

pub fn load_problem(path: &Path, ov: &Overrides) -> Result<Problem, CliError> {
    let mut p = Problem::load(path).map_err(|source| CliError::Input { path: path.display().to_string(), source })?;
    let bad = |msg: String| CliError::Input { path: "command line".into(), source: InputError { line: None, msg } };
    if let Some(seed) = ov.seed {
        p.validation.seed = seed;
        p.synthesis.moment_seed = seed;
    }
    if let Some(d) = ov.deg {
        if d < 2 || d % 2 != 0 {
            return Err(bad(format!("--deg must be an even integer >= 2, got {d}")));
        }
        p.degrees = vec![d];
    }
    if let Some(l) = ov.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(bad(format!("--lambda must be positive, got {l}")));
        }
        p.lambdas = vec![l];
    }
    Ok(p)
}

/// Sampling and simulation checks of one certificate.
#[derive(Debug, Clone)]
pub struct Checks {
    pub verification: VerificationReport,
    /// `Err` when no initial state could be drawn.
    pub validation: Result<ValidationReport, SimError>,
    /// Smallest `V` over the containment ball.
    pub containment: Option<(f64, f64)>,
}

impl Checks {
    pub fn empty_estimate(&self) -> bool {
        self.verification.empty_estimate() && matches!(self.validation, Err(SimError::Sampling { .. }))
    }

    pub fn falsified(&self) -> bool {
        if !self.verification.passed() && !self.empty_estimate() {
            return true;
        }
        match &self.validation {
            Ok(r) => r.reached != r.total || r.worst_exponential_margin < -EXPONENTIAL_TOLERANCE,
            Err(SimError::Sampling { .. }) => false,
            Err(_) => true,
        }
    }
}

/// Smallest `V` over `samples` uniform points of the centered ball of
/// `radius` in the region variables.
pub fn containment_min(cert: &Certificate, radius: f64, samples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let d = cert.v.dim();
    let v = CompiledPoly::new(&cert.v);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut drawn = 0;
    while drawn < samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
        if x.iter().map(|t| t * t).sum::<f64>() < radius * radius {
            worst = worst.min(v.eval(&x));
            drawn += 1;
        }
    }
    worst
}

pub fn check_certificate(problem: &Problem, cert: &Certificate) -> Result<Checks, SynthError> {
    let val = &problem.validation;
    let vopts = VerifyOptions {
        samples: val.verify_samples,
        seed: val.seed,
        node_box: val.node_box,
        pair_mode: problem.synthesis.pair_mode,
    };
    let verification = verify_certificate(cert, &problem.network, &problem.region, &vopts)?;
    let mopts = ValidationOptions { trials: val.trials, seed: val.seed, step: val.step, t_max: val.t_max, node_box: val.node_box };
    let validation = mc_validate(cert, &problem.network, &problem.region, &mopts);
    let containment = val.containment_radius.map(|r| (r, containment_min(cert, r, val.containment_samples, val.seed)));
    Ok(Checks { verification, validation, containment })
}

/// One `(deg_V, lambda)` solve.
#[derive(Debug)]
pub struct Attempt {
    pub config: SynthesisConfig,
    pub status: SdpStatus,
    pub iterations: usize,
    pub constraints: usize,
    pub blocks: usize,
    pub certificate: Result<Certificate, SynthError>,
    pub checks: Option<Checks>,
}

impl Attempt {
    pub fn accepted(&self) -> Option<&Certificate> {
        self.certificate.as_ref().ok()
    }

    fn label(&self) -> String {
        format!("deg{}_lambda{}", self.config.deg_v, self.config.lambda)
    }
}

pub fn solve_attempts(problem: &Problem, dump: Option<&Path>) -> Result<Vec<Attempt>, CliError> {
    let configs = problem.attempts();
    let mut out = Vec::new();
    for (k, cfg) in configs.iter().enumerate() {
        let fail = |e: SynthError| CliError::Input {
            path: "problem".into(),
            source: InputError { line: None, msg: format!("cannot build the program for deg_v {} lambda {}: {e}", cfg.deg_v, cfg.lambda) },
        };
        let program = build_program(&problem.network, &problem.region, cfg, problem.kind).map_err(fail)?;
        let compiled = program.compile().map_err(fail)?;
        if let Some(path) = dump {
            let path = if configs.len() == 1 { path.to_path_buf() } else { path.with_extension(format!("{}.sdp", k + 1)) };
            fs::write(&path, compiled.sdp.to_dump()).map_err(|e| io_err(&path, e))?;
        }
        let (status, iterations, certificate) = match solve(&compiled.sdp, &SolverOptions::default()) {
            Ok(sol) => (sol.status, sol.iterations, extract_certificate(&sol, &program)),
            Err(e) => (SdpStatus::NumericalFailure, 0, Err(SynthError::Sdp(e))),
        };
        let checks = match &certificate {
            Ok(c) => Some(check_certificate(problem, c).map_err(fail)?),
            Err(_) => None,
        };
        out.push(Attempt {
            config: *cfg,
            status,
            iterations,
            constraints: compiled.sdp.num_constraints(),
            blocks: compiled.sdp.blocks.len(),
            certificate,
            checks,
        });
    }
    Ok(out)
}

/// The accepted, non-empty attempt with the largest objective, else the
/// first accepted one.
pub fn select(attempts: &[Attempt]) -> Option<usize> {
    let nonempty = attempts
        .iter()
        .enumerate()
        .filter(|(_, a)| a.accepted().is_some() && a.checks.as_ref().is_some_and(|c| !c.empty_estimate()))
        .max_by(|(ia, a), (ib, b)| {
            let (oa, ob) = (a.accepted().unwrap().objective, b.accepted().unwrap().objective);
            oa.total_cmp(&ob).then(ib.cmp(ia))
        })
        .map(|(i, _)| i);
    nonempty.or_else(|| attempts.iter().position(|a| a.accepted().is_some()))
}

fn fmt_e(x: f64) -> String {
    format!("{x:.6e}")
}

fn write_checks(out: &mut String, checks: &Checks) {
    let v = &checks.verification;
    let _ = writeln!(
        out,
        "  verification: {} (lie samples {}, violations {}, worst margin {}; boundary samples {}, violations {}, worst V {}; sampling failures {})",
        if v.passed() { "passed" } else { "FAILED" },
        v.lie_samples,
        v.lie_violations,
        fmt_e(v.worst_lie_margin),
        v.boundary_samples,
        v.boundary_violations,
        fmt_e(v.worst_boundary_margin),
        v.sampling_failures,
    );
    for viol in &v.violations {
        let _ = writeln!(out, "    {} violation {} at {:?}", viol.condition, fmt_e(viol.value), viol.point);
    }
    let _ = writeln!(out, "  estimate: {}", if checks.empty_estimate() { "empty (V <= 0 on every sample)" } else { "non-empty" });
    match &checks.validation {
        Ok(r) => {
            let _ = writeln!(
                out,
                "  validation: {} trials (seed {}), reached {}, left state set {} (diverged {}), timed out {}, worst exponential margin {}",
                r.total,
                r.seed,
                r.reached,
                r.left_set,
                r.diverged,
                r.timed_out,
                fmt_e(r.worst_exponential_margin),
            );
        }
        Err(e) => {
            let _ = writeln!(out, "  validation: not run ({e})");
        }
    }
    if let Some((r, min_v)) = checks.containment {
        let _ = writeln!(
            out,
            "  containment of the ball of radius {r}: {} (min V {})",
            if min_v > 0.0 { "passed" } else { "FAILED" },
            fmt_e(min_v)
        );
    }
}

/// Header lines shared by `run` and `check`.
fn write_problem(out: &mut String, name: &str, problem: &Problem) {
    let net = &problem.network;
    let _ = writeln!(out, "problem: {name}");
    let _ = writeln!(out, "mode: {}", problem.kind.as_str());
    let _ = writeln!(out, "nodes: {}, node dimension: {}, coupling: {}", net.nodes, net.n, net.coupling);
    let _ = writeln!(out, "state set polynomials: {}", problem.region.state_ineqs.len());
}

pub fn contour_csv(problem: &Problem, certs: &[(String, &Certificate)]) -> String {
    let out = &problem.output;
    let d = problem.region.dim(&problem.network);
    let [a, b] = out.contour_axes;
    let [lo, hi] = out.contour_box;
    let res = out.contour_resolution;
    let vs: Vec<CompiledPoly> = certs.iter().map(|(_, c)| CompiledPoly::new(&c.v)).collect();
    let mut s = String::new();
    let _ = write!(s, "x{},x{}", a + 1, b + 1);
    for (label, _) in certs {
        let _ = write!(s, ",V_{label}");
    }
    s.push('\n');
    let mut point = vec![0.0; d];
    let coord = |i: usize| lo + (hi - lo) * i as f64 / (res - 1) as f64;
    for i in 0..res {
        for j in 0..res {
            point[a] = coord(i);
            point[b] = coord(j);
            let _ = write!(s, "{},{}", point[a], point[b]);
            for v in &vs {
                let _ = write!(s, ",{}", v.eval(&point));
            }
            s.push('\n');
        }
    }
    s
}

/// Norm of the largest pair error, or of the full state.
fn final_size(problem: &Problem, x: &[f64]) -> f64 {
    let n = problem.network.n;
    match problem.region.variables {
        Variables::FullState => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Variables::ErrorPair => {
            let nodes = problem.network.nodes;
            let mut worst: f64 = 0.0;
            for i in 0..nodes {
                for j in 0..nodes {
                    let e: f64 = (0..n).map(|k| (x[i * n + k] - x[j * n + k]).powi(2)).sum();
                    worst = worst.max(e.sqrt());
                }
            }
            worst
        }
    }
}

pub struct RunOutcome {
    pub status: ExitStatus,
    pub report: String,
}

pub fn run(problem_path: &Path, ov: &Overrides) -> Result<RunOutcome, CliError> {
    let problem = load_problem(problem_path, ov)?;
    let dir = ov.out.clone().or_else(|| problem.output.directory.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let attempts = solve_attempts(&problem, ov.dump_sdp.as_deref())?;
    let selected = select(&attempts);

    let mut report = String::new();
    let name = problem_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_problem(&mut report, &name, &problem);
    let _ = writeln!(report, "attempts: {}", attempts.len());
    let mut falsified = false;
    for (k, a) in attempts.iter().enumerate() {
        let _ = writeln!(report);
        let _ = writeln!(report, "attempt {}: deg_V {}, lambda {}", k + 1, a.config.deg_v, a.config.lambda);
        let _ = writeln!(report, "  sdp: {} after {} iterations ({} constraints, {} blocks)", a.status.as_str(), a.iterations, a.constraints, a.blocks);
        match &a.certificate {
            Ok(c) => {
                let _ = writeln!(report, "  objective: {}", fmt_e(c.objective));
                let _ = writeln!(report, "  identity residual: {}", fmt_e(c.identity_residual));
                let _ = writeln!(report, "  gram min eigenvalue: {}", fmt_e(c.gram_min_eig));
                let _ = writeln!(report, "  certificate: accepted");
                let path = dir.join(format!("certificate_{}.txt", a.label()));
                fs::write(&path, c.render()).map_err(|e| io_err(&path, e))?;
            }
            Err(e) => {
                let _ = writeln!(report, "  certificate: not accepted ({e})");
            }
        }
        if let Some(checks) = &a.checks {
            write_checks(&mut report, checks);
            falsified |= checks.falsified();
        }
    }
    let _ = writeln!(report);

    let accepted: Vec<(String, &Certificate)> = attempts.iter().filter_map(|a| a.accepted().map(|c| (a.label(), c))).collect();
    let status = match selected {
        None => ExitStatus::Infeasible,
        Some(_) if falsified => ExitStatus::Falsified,
        Some(_) => ExitStatus::Ok,
    };
    if let Some(s) = selected {
        let a = &attempts[s];
        let cert = a.accepted().unwrap();
        let _ = writeln!(report, "selected: attempt {} (deg_V {}, lambda {})", s + 1, a.config.deg_v, a.config.lambda);
        let path = dir.join("certificate.txt");
        fs::write(&path, cert.render()).map_err(|e| io_err(&path, e))?;
    } else {
        let _ = writeln!(report, "selected: none");
    }
    let path = dir.join("contour.csv");
    fs::write(&path, contour_csv(&problem, &accepted)).map_err(|e| io_err(&path, e))?;

    let val = &problem.validation;
    for (k, x0) in val.initial_conditions.iter().enumerate() {
        let traj = sim::integrate(&problem.network, x0, val.step, val.t_max, &problem.region)
            .map_err(|e| CliError::Io(format!("initial condition {}: {e}", k + 1)))?;
        let mut csv = String::new();
        let _ = traj.write_csv(&mut csv, problem.network.n);
        let path = dir.join(format!("trajectory_{}.csv", k + 1));
        fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
        let _ = write!(
            report,
            "trajectory {}: {} at t = {}, final size {}",
            k + 1,
            traj.terminal_event.as_str(),
            traj.final_time(),
            fmt_e(final_size(&problem, traj.final_state()))
        );
        if let Some(cert) = selected.and_then(|s| attempts[s].accepted()) {
            match sim::check_exponential_bound(cert, &traj, &problem.network, &problem.region) {
                Ok(m) => {
                    let _ = write!(report, ", exponential margin {}", fmt_e(m));
                }
                Err(SimError::OutsideRegion) => {
                    let _ = write!(report, ", starts outside the certified region");
                }
                Err(e) => {
                    let _ = write!(report, ", exponential bound not checked ({e})");
                }
            }
        }
        let _ = writeln!(report);
        if traj.terminal_event == (TerminalEvent::LeftStateSet { diverged: true }) {
            let _ = writeln!(report, "  warning: trajectory {} diverged", k + 1);
        }
    }
    let _ = writeln!(report, "status: {}", status_text(status));
    let path = dir.join("report.txt");
    fs::write(&path, &report).map_err(|e| io_err(&path, e))?;
    Ok(RunOutcome { status, report })
}

fn status_text(s: ExitStatus) -> &'static str {
    match s {
        ExitStatus::Ok => "ok",
        ExitStatus::Io => "io error",
        ExitStatus::Input => "input error",
        ExitStatus::Infeasible => "no accepted certificate",
        ExitStatus::Falsified => "certificate falsified",
    }
}

pub fn check(problem_path: &Path, cert_path: &Path, ov: &Overrides) -> Result<RunOutcome, CliError> {
    let problem = load_problem(problem_path, ov)?;
    let text = fs::read_to_string(cert_path).map_err(|e| io_err(cert_path, e))?;
    let cert = Certificate::parse(&text).map_err(|e| CliError::Input {
        path: cert_path.display().to_string(),
        source: InputError { line: Some(e.line), msg: e.msg },
    })?;
    let mut report = String::new();
    let name = problem_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_problem(&mut report, &name, &problem);
    let _ = writeln!(report, "certificate: {} program, lambda {}", cert.program.as_str(), cert.lambda);
    let status = if cert.program != problem.kind || cert.v.dim() != problem.region.dim(&problem.network) {
        let _ = writeln!(
            report,
            "  certificate does not fit the problem ({} program in {} variables, problem is {} in {})",
            cert.program.as_str(),
            cert.v.dim(),
            problem.kind.as_str(),
            problem.region.dim(&problem.network)
        );
        ExitStatus::Falsified
    } else {
        match check_certificate(&problem, &cert) {
            Ok(checks) => {
                write_checks(&mut report, &checks);
                if checks.falsified() {
                    ExitStatus::Falsified
                } else {
                    ExitStatus::Ok
                }
            }
            Err(e) => {
                let _ = writeln!(report, "  verification error: {e}");
                ExitStatus::Falsified
            }
        }
    };
    let _ = writeln!(report, "status: {}", status_text(status));
    if let Some(dir) = &ov.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("check_report.txt");
        fs::write(&path, &report).map_err(|e| io_err(&path, e))?;
    }
    Ok(RunOutcome { status, report })
}
