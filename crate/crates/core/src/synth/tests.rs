use super::*;
use crate::netmodel::Target;
use crate::sdp::SolverOptions;
use alloc::string::ToString;

fn p(s: &str, dim: usize) -> Poly {
    Poly::parse(s, dim).unwrap()
}

/// Two nodes in the plane, `f = 0`, `g = id`, `c = 1`: `delta' = -2 delta`.
fn toy() -> (NetworkSpec, RegionSpec) {
    let spec = NetworkSpec::new(
        vec![Poly::zero(2), Poly::zero(2)],
        vec![p("x1", 2), p("x2", 2)],
        vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        1.0,
        false,
    )
    .unwrap();
    let region = RegionSpec { state_ineqs: vec![Poly::ball(2, 1.0)], target: Target::Ball(0.1), variables: Variables::ErrorPair };
    (spec, region)
}

/// One node in the plane with `x' = -x`.
fn contracting_node() -> (NetworkSpec, RegionSpec) {
    let spec =
        NetworkSpec::new(vec![p("-x1", 2), p("-x2", 2)], vec![p("x1", 2), p("x2", 2)], vec![vec![0.0]], 1.0, false)
            .unwrap();
    let region =
        RegionSpec { state_ineqs: vec![Poly::ball(2, 1.0)], target: Target::Ball(0.1), variables: Variables::FullState };
    (spec, region)
}

fn run(spec: &NetworkSpec, region: &RegionSpec, cfg: &SynthesisConfig, kind: ProgramKind) -> Synthesis {
    synthesize(spec, region, cfg, kind, &SolverOptions::default()).unwrap()
}

#[test]
fn degrees_follow_the_lie_derivative() {
    let cfg = SynthesisConfig::new(0.1, 4);
    // Cubic vector field, quadratic h and l.
    let d = choose_degrees(&cfg, 3, 2, 2);
    assert_eq!((d.lie, d.p, d.q, d.main_half, d.boundary_half), (6, 4, 2, 3, 2));
    // Linear field: L_V has the degree of V.
    let d = choose_degrees(&SynthesisConfig::new(0.1, 2), 1, 2, 2);
    assert_eq!((d.lie, d.p, d.q, d.main_half), (2, 0, 0, 1));
    let d = choose_degrees(&SynthesisConfig { deg_multipliers: Some(6), ..cfg }, 3, 2, 2);
    assert_eq!((d.p, d.main_half), (6, 4));
}

#[test]
fn config_validation() {
    assert!(SynthesisConfig::new(0.0, 2).validate().is_err());
    assert!(SynthesisConfig::new(0.1, 3).validate().is_err());
    assert!(SynthesisConfig { deg_multipliers: Some(1), ..SynthesisConfig::new(0.1, 2) }.validate().is_err());
    assert!(SynthesisConfig { objective: ObjectiveRegion::Ball(-1.0), ..SynthesisConfig::new(0.1, 2) }
        .validate()
        .is_err());
    let (spec, region) = toy();
    let err = build_equilibrium_program(&spec, &region, &SynthesisConfig::new(0.1, 2)).unwrap_err();
    assert!(matches!(err, SynthError::Config(_)));
}

#[test]
fn pair_modes() {
    assert_eq!(node_pairs(3, PairMode::Unordered), vec![(0, 1), (0, 2), (1, 2)]);
    assert_eq!(node_pairs(3, PairMode::Ordered).len(), 6);
}

#[test]
fn product_of_disks_moments_match_monte_carlo() {
    let groups: Vec<Poly> = (0..2).map(|i| p("1 - x1^2 - x2^2", 2).embed(4, &[2 * i, 2 * i + 1]).unwrap()).collect();
    let region = RegionSpec { state_ineqs: groups, target: Target::Ball(0.1), variables: Variables::FullState };
    let mons = Monomial::all_up_to(4, 4);
    let exact = objective_moments(&region, &SynthesisConfig::new(0.1, 4), 4, &mons);
    let mc = monte_carlo_moments(&region, 4, &mons, 7);
    for ((m, a), b) in mons.iter().zip(&exact).zip(&mc) {
        assert!((a - b).abs() < 5e-3, "{m:?}: {a} vs {b}");
    }
    // Average of x1^2 over the unit disk.
    let k = mons.iter().position(|m| m.exponents() == [2, 0, 0, 0]).unwrap();
    assert!((exact[k] - 0.25).abs() < 1e-14);
}

// With V = a(R^2 - |d|^2) on the toy network, L_V - lambda V >= 0 off the
// eps-disk needs R^2 <= (4 + lambda) eps^2 / lambda, V <= 0 on the unit circle
// needs R <= 1 and V <= 1 needs a R^2 <= 1. Maximizing the mean of V over the
// 0.3-disk, a R^2 - a * 0.045, gives a = 1/R^2 and R^2 = 0.41 at lambda = 0.1.
#[test]
fn toy_certificate_matches_hand_optimum() {
    let (spec, region) = toy();
    let cfg = SynthesisConfig { objective: ObjectiveRegion::Ball(0.3), ..SynthesisConfig::new(0.1, 2) };
    let syn = run(&spec, &region, &cfg, ProgramKind::Manifold);
    assert_eq!(syn.solution.status, SdpStatus::Optimal);
    let cert = syn.certificate.unwrap();
    assert_eq!(cert.v.dim(), 2);
    let expected = p(&format!("1 - {c}*x1^2 - {c}*x2^2", c = 1.0 / 0.41), 2);
    assert!(cert.v.max_abs_diff(&expected) < 1e-4, "{}", cert.v);
    assert!((cert.objective - (1.0 - 0.045 / 0.41)).abs() < 1e-5);
    let consistent = syn.program.objective_of(&cert.v);
    assert!((consistent - syn.solution.primal_objective).abs() <= 1e-5 * syn.solution.primal_objective.abs());
    assert!(cert.identity_residual <= MAX_IDENTITY_RESIDUAL);

    let report = verify_certificate(&cert, &spec, &region, &VerifyOptions::default()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.worst_lie_margin >= -LIE_TOLERANCE);
    assert!(!report.empty_estimate());
}

// Same computation for x' = -x: R^2 <= (2 + lambda) eps^2 / lambda = 0.21.
#[test]
fn contracting_node_has_quadratic_certificate() {
    let (spec, region) = contracting_node();
    let cfg = SynthesisConfig { objective: ObjectiveRegion::Ball(0.3), ..SynthesisConfig::new(0.1, 2) };
    let syn = run(&spec, &region, &cfg, ProgramKind::Equilibrium);
    let cert = syn.certificate.unwrap();
    let expected = p(&format!("1 - {c}*x1^2 - {c}*x2^2", c = 1.0 / 0.21), 2);
    assert!(cert.v.max_abs_diff(&expected) < 1e-4, "{}", cert.v);
    let report = verify_certificate(&cert, &spec, &region, &VerifyOptions { samples: 20_000, ..Default::default() })
        .unwrap();
    assert!(report.passed(), "{report:?}");
}

// Over the whole unit disk the mean of a(R^2 - |d|^2) is a(R^2 - 1/2), so a
// nonzero V pays off only while (4 + lambda) eps^2 / lambda > 1/2, that is
// lambda < 8 eps^2 / (1 - 2 eps^2). Beyond that the optimum is V = 0.
#[test]
fn toy_feasibility_is_an_interval_in_lambda() {
    let (spec, region) = toy();
    let eps: f64 = 0.1;
    let transition = 8.0 * eps * eps / (1.0 - 2.0 * eps * eps);
    let grid = [0.01, 0.03, 0.05, 0.07, 0.08, 0.083, 0.09, 0.12, 0.5, 4.0, 1e3];
    let mut nonempty = Vec::new();
    for &lambda in &grid {
        let syn = run(&spec, &region, &SynthesisConfig::new(lambda, 2), ProgramKind::Manifold);
        let cert = syn.certificate.unwrap();
        let at_origin = cert.v.evaluate(&[0.0, 0.0]).unwrap();
        nonempty.push(at_origin > 1e-3);
        assert_eq!(at_origin > 1e-3, lambda < transition, "lambda {lambda}: V(0) = {at_origin}");
    }
    // Once infeasible, never feasible again.
    let first_empty = nonempty.iter().position(|&f| !f).unwrap();
    assert!(nonempty[first_empty..].iter().all(|&f| !f));
}

#[test]
fn target_equal_to_state_set_is_well_posed() {
    let (spec, mut region) = contracting_node();
    region.target = Target::Polys(vec![Poly::ball(2, 1.0)]);
    let syn = run(&spec, &region, &SynthesisConfig::new(0.1, 2), ProgramKind::Equilibrium);
    if let Ok(cert) = syn.certificate {
        let report = verify_certificate(&cert, &spec, &region, &VerifyOptions { samples: 1000, ..Default::default() })
            .unwrap();
        assert_eq!(report.boundary_violations, 0);
    }
}

#[test]
fn perturbed_gram_is_rejected() {
    let (spec, region) = toy();
    let cfg = SynthesisConfig { objective: ObjectiveRegion::Ball(0.3), ..SynthesisConfig::new(0.1, 2) };
    let mut syn = run(&spec, &region, &cfg, ProgramKind::Manifold);
    let block = &mut syn.solution.blocks[0];
    let (evals, evecs) = {
        let e = block.self_adjoint_eigen(faer::Side::Lower).unwrap();
        (e.S().column_vector().to_owned(), e.U().to_owned())
    };
    // Move the smallest eigenvalue to -1e-3.
    let shift = evals[0] + 1e-3;
    let n = block.nrows();
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] -= shift * evecs[(i, 0)] * evecs[(j, 0)];
        }
    }
    match extract_certificate(&syn.solution, &syn.program) {
        Err(SynthError::Rejected { gram_min_eig, .. }) => assert!(gram_min_eig < -9e-4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn positive_constant_fails_the_boundary_everywhere() {
    let (spec, region) = toy();
    let cert = Certificate {
        program: ProgramKind::Manifold,
        lambda: 0.1,
        v: Poly::constant(2, 1.0),
        multipliers: Vec::new(),
        gram_blocks: Vec::new(),
        identity_residual: 0.0,
        gram_min_eig: 0.0,
        objective: 1.0,
    };
    let opts = VerifyOptions { samples: 500, ..Default::default() };
    let report = verify_certificate(&cert, &spec, &region, &opts).unwrap();
    assert_eq!(report.boundary_violations, 500);
    assert_eq!(report.boundary_samples, 500);
    assert!(!report.passed());
}

#[test]
fn verification_is_reproducible() {
    let (spec, region) = toy();
    let cert = Certificate {
        program: ProgramKind::Manifold,
        lambda: 0.1,
        v: p("1 - 3*x1^2 - 2*x2^2 + x1*x2", 2),
        multipliers: Vec::new(),
        gram_blocks: Vec::new(),
        identity_residual: 0.0,
        gram_min_eig: 0.0,
        objective: 0.0,
    };
    let opts = VerifyOptions { samples: 2000, seed: 11, ..Default::default() };
    let a = verify_certificate(&cert, &spec, &region, &opts).unwrap();
    let b = verify_certificate(&cert, &spec, &region, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn certificate_text_round_trips() {
    let (spec, region) = toy();
    let cfg = SynthesisConfig { objective: ObjectiveRegion::Ball(0.3), ..SynthesisConfig::new(0.1, 2) };
    let cert = run(&spec, &region, &cfg, ProgramKind::Manifold).certificate.unwrap();
    let text = cert.render();
    assert!(text.starts_with("program manifold\nlambda 0.1\n"));
    let back = Certificate::parse(&text).unwrap();
    assert!(back.max_coefficient_diff(&cert) <= 1e-12);
    assert_eq!(back.lambda, cert.lambda);
    assert_eq!(back.identity_residual, cert.identity_residual);
    let names: Vec<String> = back.multipliers.iter().map(|(n, _)| n.clone()).collect();
    assert!(names.contains(&"p1[1,2]".to_string()) && names.contains(&"q".to_string()));
}

#[test]
fn certificate_parse_errors_name_the_line() {
    let err = Certificate::parse("program manifold\nlambda x\n").unwrap_err();
    assert_eq!(err.line, 2);
    let err = Certificate::parse("program manifold\nlambda 0.1\nV 2 = x3\n").unwrap_err();
    assert_eq!(err.line, 3);
    assert!(Certificate::parse("program manifold\nlambda 0.1\n").is_err());
}
