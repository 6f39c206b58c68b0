//! Sampling check of the EGBF conditions for a certificate.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::{node_pairs, Certificate, PairMode, ProgramKind, SynthError};
use crate::math::sqrt;
use crate::netmodel::{lie_derivative_full, lie_derivative_pair, NetworkSpec, RegionSpec};
use crate::poly::{CompiledPoly, LinPoly, Poly};
use crate::sample;

/// `L_V - lambda V` may dip this far below zero off the target.
pub const LIE_TOLERANCE: f64 = 1e-6;
/// `V` may exceed zero by this much on the state-set boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;
const MAX_PROPOSALS: usize = 1_000_000;
const KEPT_VIOLATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Samples per condition.
    pub samples: usize,
    pub seed: u64,
    /// Half-width of the box for node coordinates not fixed by a sampled
    /// pairwise error (manifold certificates).
    pub node_box: f64,
    pub pair_mode: PairMode,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 100_000, seed: 0, node_box: 1.0, pair_mode: PairMode::Ordered }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// `"lie"` or `"boundary"`.
    pub condition: &'static str,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub lie_samples: usize,
    pub boundary_samples: usize,
    pub lie_violations: usize,
    pub boundary_violations: usize,
    /// Smallest `L_V - lambda V` seen off the target.
    pub worst_lie_margin: f64,
    /// Largest `V` seen on the state-set boundary.
    pub worst_boundary_margin: f64,
    /// First few violating samples, by sample index.
    pub violations: Vec<Violation>,
    /// Samples of the state set (off the target) where `V > 0`.
    pub positive_samples: usize,
    pub sampling_failures: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.lie_violations == 0 && self.boundary_violations == 0 && self.sampling_failures == 0
    }

    /// No sampled point of the state set has `V > 0`.
    pub fn empty_estimate(&self) -> bool {
        self.positive_samples == 0
    }
}

fn lie_polys(cert: &Certificate, spec: &NetworkSpec, pairs: &[(usize, usize)]) -> Result<Vec<CompiledPoly>, SynthError> {
    let v = LinPoly::from_poly(&cert.v);
    let out = match cert.program {
        ProgramKind::Manifold => pairs
            .iter()
            .map(|&(i, j)| {
                let lie = lie_derivative_pair(&v, spec, i, j)?.collapse(&[]);
                let vd = cert.v.substitute_linear(&spec.pair_map(i, j))?;
                Ok(CompiledPoly::new(&lie.sub(&vd.scale(cert.lambda))?))
            })
            .collect::<Result<Vec<_>, SynthError>>()?,
        ProgramKind::Equilibrium => {
            let lie = lie_derivative_full(&v, spec)?.collapse(&[]);
            vec![CompiledPoly::new(&lie.sub(&cert.v.scale(cert.lambda))?)]
        }
    };
    Ok(out)
}

/// A point with `h_k = 0` and every other `h >= 0`.
fn boundary_point(rng: &mut ChaCha8Rng, region: &RegionSpec, k: usize, radius: f64) -> Option<Vec<f64>> {
    let hs = &region.state_ineqs;
    let dim = hs[k].dim();
    let others_ok = |p: &[f64]| {
        hs.iter().enumerate().all(|(m, h)| m == k || h.evaluate(p).map(|v| v >= 0.0).unwrap_or(false))
    };
    if let Some((vars, r)) = hs[k].as_centered_ball() {
        for _ in 0..MAX_PROPOSALS {
            let mut p = sample::in_box(rng, dim, radius);
            let norm = sqrt(vars.iter().map(|&v| p[v] * p[v]).sum());
            if norm == 0.0 || norm > radius {
                continue;
            }
            for &v in &vars {
                p[v] *= r / norm;
            }
            if others_ok(&p) {
                return Some(p);
            }
        }
        return None;
    }
    // Bisection along a random ray from the origin to the first sign change.
    let h = &hs[k];
    if h.evaluate(&vec![0.0; dim]).ok()? <= 0.0 {
        return None;
    }
    let at = |u: &[f64], t: f64| h.evaluate(&u.iter().map(|x| x * t).collect::<Vec<_>>()).unwrap_or(-1.0);
    for _ in 0..1000 {
        let u = sample::in_box(rng, dim, 1.0);
        let norm = sqrt(u.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            continue;
        }
        let u: Vec<f64> = u.iter().map(|x| x / norm).collect();
        let steps = 256;
        let mut lo = 0.0;
        let mut hi = None;
        for s in 1..=steps {
            let t = 2.0 * radius * s as f64 / steps as f64;
            if at(&u, t) <= 0.0 {
                hi = Some(t);
                break;
            }
            lo = t;
        }
        let Some(mut hi) = hi else { continue };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if at(&u, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p: Vec<f64> = u.iter().map(|x| x * lo).collect();
        if others_ok(&p) {
            return Some(p);
        }
    }
    None
}

/// Samples the state set off the target for `L_V - lambda V >= 0` and the
/// state-set boundary for `V <= 0`. Samples are drawn and accumulated in
/// index order, so the report depends only on the seed.
pub fn verify_certificate(
    cert: &Certificate,
    spec: &NetworkSpec,
    region: &RegionSpec,
    opts: &VerifyOptions,
) -> Result<VerificationReport, SynthError> {
    region.validate(spec)?;
    let d = region.dim(spec);
    if cert.v.dim() != d {
        return Err(SynthError::Config(alloc::format!(
            "certificate V has {} variables, region has {d}",
            cert.v.dim()
        )));
    }
    let pairs = match cert.program {
        ProgramKind::Manifold => node_pairs(spec.nodes, opts.pair_mode),
        ProgramKind::Equilibrium => Vec::new(),
    };
    let lie = lie_polys(cert, spec, &pairs)?;
    let v = CompiledPoly::new(&cert.v);
    let radius = region.bounding_radius().unwrap_or(1.0);
    let targets: Vec<Poly> = region.target_polys(spec);
    let outside_target = |p: &[f64]| targets.iter().any(|l| l.evaluate(p).map(|x| x <= 0.0).unwrap_or(true));
    let mut rng = sample::rng(opts.seed);
    let mut report = VerificationReport {
        lie_samples: 0,
        boundary_samples: 0,
        lie_violations: 0,
        boundary_violations: 0,
        worst_lie_margin: f64::INFINITY,
        worst_boundary_margin: f64::NEG_INFINITY,
        violations: Vec::new(),
        positive_samples: 0,
        sampling_failures: 0,
    };
    let mut scratch = Vec::new();
    for s in 0..opts.samples {
        let Some(p) = sample::rejection(&mut rng, d, radius, MAX_PROPOSALS, |p| {
            region.in_state_closure(p) && outside_target(p)
        }) else {
            report.sampling_failures += 1;
            break;
        };
        if v.eval_with(&p, &mut scratch) > 0.0 {
            report.positive_samples += 1;
        }
        let value = match cert.program {
            ProgramKind::Manifold => {
                let (i, j) = pairs[s % pairs.len()];
                let mut x = sample::in_box(&mut rng, spec.full_dim(), opts.node_box);
                for k in 0..spec.n {
                    x[j * spec.n + k] = x[i * spec.n + k] - p[k];
                }
                let value = lie[s % pairs.len()].eval_with(&x, &mut scratch);
                if value < -LIE_TOLERANCE && report.violations.len() < KEPT_VIOLATIONS {
                    report.violations.push(Violation { condition: "lie", point: x, value });
                }
                value
            }
            ProgramKind::Equilibrium => {
                let value = lie[0].eval_with(&p, &mut scratch);
                if value < -LIE_TOLERANCE && report.violations.len() < KEPT_VIOLATIONS {
                    report.violations.push(Violation { condition: "lie", point: p, value });
                }
                value
            }
        };
        report.lie_samples += 1;
        report.worst_lie_margin = report.worst_lie_margin.min(value);
        if value < -LIE_TOLERANCE {
            report.lie_violations += 1;
        }
    }
    let hs = region.state_ineqs.len();
    for s in 0..opts.samples {
        let Some(p) = boundary_point(&mut rng, region, s % hs, radius) else {
            report.sampling_failures += 1;
            break;
        };
        let value = v.eval_with(&p, &mut scratch);
        report.boundary_samples += 1;
        report.worst_boundary_margin = report.worst_boundary_margin.max(value);
        if value > BOUNDARY_TOLERANCE {
            report.boundary_violations += 1;
            if report.violations.len() < KEPT_VIOLATIONS {
                report.violations.push(Violation { condition: "boundary", point: p, value });
            }
        }
    }
    Ok(report)
}
